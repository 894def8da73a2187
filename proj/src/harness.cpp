#include "emx/harness.hpp"

#include "emx/errors.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <thread>

namespace emx {

namespace fs = std::filesystem;

namespace {

std::string num(double v, int precision = 6) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (std::isnan(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", precision, v);
  std::string s = buf;
  if (s[0] == '-' && s.find_first_not_of("-0.") == std::string::npos) s.erase(0, 1);
  return s;
}

std::string sanitize(std::string s) {
  for (char& c : s) {
    if (c == ',' || c == '\n' || c == '\r') c = ';';
  }
  return s;
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

double to_double(const std::string& s) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end == s.c_str()) throw Error("malformed number '" + s + "' in CSV");
  return v;
}

int to_int(const std::string& s) { return static_cast<int>(to_double(s)); }

/// Rows of a CSV file after its header; checks the header's leading columns.
std::vector<std::vector<std::string>> read_rows(const fs::path& path, std::vector<std::string>* header = nullptr) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw Error("empty CSV " + path.string());
  if (header) *header = split(line);
  std::vector<std::vector<std::string>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    rows.push_back(split(line));
  }
  return rows;
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
}

TrialStatus parse_status(const std::string& s) {
  for (auto st : {TrialStatus::Running, TrialStatus::Explored, TrialStatus::AllDone, TrialStatus::StepBudget,
                  TrialStatus::Failed}) {
    if (to_string(st) == s) return st;
  }
  throw Error("unknown trial status '" + s + "'");
}

FrontierKind parse_kind(const std::string& s) {
  for (auto k : {FrontierKind::Exploring, FrontierKind::Revisiting, FrontierKind::Rendezvous}) {
    if (to_string(k) == s) return k;
  }
  throw Error("unknown frontier kind '" + s + "'");
}

}  // namespace

void write_steps_csv(const TrialRecord& record, std::ostream& out) {
  const std::size_t robots = record.steps.empty() ? 0 : record.steps.front().truth.size();
  out << "step,distance_m,explored_ratio,localization_rmse_m,landmark_rmse_m";
  for (std::size_t r = 0; r < robots; ++r) {
    out << ",r" << r << "_true_x_m,r" << r << "_true_y_m,r" << r << "_true_theta_rad";
    out << ",r" << r << "_est_x_m,r" << r << "_est_y_m,r" << r << "_est_theta_rad";
  }
  out << '\n';
  for (const auto& s : record.steps) {
    out << s.step << ',' << num(s.distance) << ',' << num(s.explored) << ',' << num(s.localization_rmse) << ','
        << num(s.landmark_rmse);
    for (std::size_t r = 0; r < s.truth.size(); ++r) {
      const auto& t = s.truth[r];
      const auto& e = s.estimate[r];
      out << ',' << num(t.x) << ',' << num(t.y) << ',' << num(t.theta) << ',' << num(e.x) << ',' << num(e.y) << ','
          << num(e.theta);
    }
    out << '\n';
  }
}

void write_poses_csv(const TrialRecord& record, std::ostream& out) {
  out << "robot,time_step,true_x_m,true_y_m,true_theta_rad,est_x_m,est_y_m,est_theta_rad\n";
  for (const auto& p : record.poses) {
    out << p.robot << ',' << p.time << ',' << num(p.truth.x) << ',' << num(p.truth.y) << ',' << num(p.truth.theta)
        << ',' << num(p.estimate.x) << ',' << num(p.estimate.y) << ',' << num(p.estimate.theta) << '\n';
  }
}

void write_landmarks_csv(const TrialRecord& record, std::ostream& out) {
  out << "id,true_x_m,true_y_m,observed,est_x_m,est_y_m\n";
  for (const auto& l : record.landmarks) {
    out << l.id << ',' << num(l.truth.x) << ',' << num(l.truth.y) << ',' << (l.estimate ? 1 : 0) << ',';
    if (l.estimate) out << num(l.estimate->x) << ',' << num(l.estimate->y);
    else out << ',';
    out << '\n';
  }
}

void write_decisions_csv(const TrialRecord& record, std::ostream& out) {
  out << "decision,step,robot,candidate,kind,anchor,cell,target_x_m,target_y_m,target_theta_rad,"
         "u_m_m2,u_t,u_d_m,utility,feasible,selected\n";
  for (std::size_t d = 0; d < record.decisions.size(); ++d) {
    const auto& dec = record.decisions[d];
    for (std::size_t c = 0; c < dec.candidates.size(); ++c) {
      const auto& e = dec.candidates[c];
      out << d << ',' << dec.step << ',' << dec.robot << ',' << c << ',' << to_string(e.frontier.kind) << ','
          << (e.frontier.anchor ? std::to_string(*e.frontier.anchor) : "") << ',' << e.frontier.cell << ','
          << num(e.frontier.target.x) << ',' << num(e.frontier.target.y) << ',' << num(e.frontier.target.theta)
          << ',' << num(e.u_m, 9) << ',' << num(e.u_t) << ',' << num(e.u_d) << ',' << num(e.utility, 9) << ','
          << (e.feasible ? 1 : 0) << ',' << (dec.selected && *dec.selected == c ? 1 : 0) << '\n';
    }
  }
}

void write_trial(const TrialRecord& record, const fs::path& dir) {
  fs::create_directories(dir);
  std::ostringstream meta;
  meta << "planner,seed,status,error\n"
       << record.planner << ',' << record.seed << ',' << to_string(record.status) << ',' << sanitize(record.error)
       << '\n';
  write_file(dir / "meta.csv", meta.str());
  std::ostringstream steps, poses, landmarks, decisions;
  write_steps_csv(record, steps);
  write_poses_csv(record, poses);
  write_landmarks_csv(record, landmarks);
  write_decisions_csv(record, decisions);
  write_file(dir / "steps.csv", steps.str());
  write_file(dir / "poses.csv", poses.str());
  write_file(dir / "landmarks.csv", landmarks.str());
  write_file(dir / "decisions.csv", decisions.str());
}

TrialRecord read_trial(const fs::path& dir) {
  TrialRecord r;
  const auto meta = read_rows(dir / "meta.csv");
  if (meta.empty() || meta[0].size() < 4) throw Error("malformed meta.csv in " + dir.string());
  r.planner = meta[0][0];
  r.seed = std::stoull(meta[0][1]);
  r.status = parse_status(meta[0][2]);
  r.error = meta[0][3];

  std::vector<std::string> header;
  for (const auto& row : read_rows(dir / "steps.csv", &header)) {
    if (row.size() != header.size() || (row.size() - 5) % 6 != 0) throw Error("malformed steps.csv row");
    StepRecord s;
    s.step = to_int(row[0]);
    s.distance = to_double(row[1]);
    s.explored = to_double(row[2]);
    s.localization_rmse = to_double(row[3]);
    s.landmark_rmse = to_double(row[4]);
    for (std::size_t k = 5; k + 5 < row.size(); k += 6) {
      s.truth.emplace_back(to_double(row[k]), to_double(row[k + 1]), to_double(row[k + 2]));
      s.estimate.emplace_back(to_double(row[k + 3]), to_double(row[k + 4]), to_double(row[k + 5]));
    }
    r.steps.push_back(std::move(s));
  }
  for (const auto& row : read_rows(dir / "poses.csv")) {
    if (row.size() != 8) throw Error("malformed poses.csv row");
    r.poses.push_back({to_int(row[0]), to_int(row[1]), Pose2(to_double(row[2]), to_double(row[3]), to_double(row[4])),
                       Pose2(to_double(row[5]), to_double(row[6]), to_double(row[7]))});
  }
  for (const auto& row : read_rows(dir / "landmarks.csv")) {
    if (row.size() != 6) throw Error("malformed landmarks.csv row");
    LandmarkRecord l{to_int(row[0]), {to_double(row[1]), to_double(row[2])}, std::nullopt};
    if (row[3] == "1") l.estimate = Point2{to_double(row[4]), to_double(row[5])};
    r.landmarks.push_back(l);
  }
  int current = -1;
  for (const auto& row : read_rows(dir / "decisions.csv")) {
    if (row.size() != 16) throw Error("malformed decisions.csv row");
    const int d = to_int(row[0]);
    if (d != current) {
      r.decisions.push_back({to_int(row[1]), to_int(row[2]), {}, std::nullopt});
      current = d;
    }
    CandidateEvaluation e;
    e.frontier.kind = parse_kind(row[4]);
    if (!row[5].empty()) e.frontier.anchor = to_int(row[5]);
    e.frontier.cell = to_int(row[6]);
    e.frontier.target = Pose2(to_double(row[7]), to_double(row[8]), to_double(row[9]));
    e.u_m = to_double(row[10]);
    e.u_t = to_double(row[11]);
    e.u_d = to_double(row[12]);
    e.utility = to_double(row[13]);
    e.feasible = row[14] == "1";
    if (row[15] == "1") r.decisions.back().selected = r.decisions.back().candidates.size();
    r.decisions.back().candidates.push_back(e);
  }
  return r;
}

const PlannerSummary& BatchSummary::planner(const std::string& name) const {
  for (const auto& p : planners) {
    if (p.planner == name) return p;
  }
  throw Error("no summary for planner " + name);
}

namespace {

void mean_std(const std::vector<double>& v, double& mean, double& stdev) {
  mean = 0.0;
  stdev = 0.0;
  if (v.empty()) return;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  if (v.size() < 2) return;
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  stdev = std::sqrt(ss / static_cast<double>(v.size() - 1));
}

const StepRecord& step_at(const TrialRecord& r, double distance) {
  const StepRecord* best = &r.steps.front();
  for (const auto& s : r.steps) {
    if (s.distance > distance + 1e-9) break;
    best = &s;
  }
  return *best;
}

}  // namespace

BatchSummary aggregate(const std::vector<TrialRecord>& records, double bin_width, double explored_target) {
  if (!(bin_width > 0.0)) throw ConfigError("bin width must be positive");
  BatchSummary summary;
  summary.bin_width = bin_width;
  summary.explored_target = explored_target;

  std::vector<std::string> names;
  double max_distance = 0.0;
  for (const auto& r : records) {
    if (std::find(names.begin(), names.end(), r.planner) == names.end()) names.push_back(r.planner);
    if (r.status != TrialStatus::Failed && !r.steps.empty()) max_distance = std::max(max_distance, r.total_distance());
  }
  std::sort(names.begin(), names.end());
  const int nbins = std::max(1, static_cast<int>(std::ceil(max_distance / bin_width - 1e-9)));

  for (const auto& name : names) {
    PlannerSummary ps;
    ps.planner = name;
    std::vector<const TrialRecord*> ok;
    for (const auto& r : records) {
      if (r.planner != name) continue;
      ++ps.trials;
      if (r.status == TrialStatus::Failed || r.steps.empty()) ++ps.failed;
      else ok.push_back(&r);
    }
    for (int k = 0; k < nbins; ++k) {
      BinStats b;
      b.bin_start = k * bin_width;
      b.bin_end = (k + 1) * bin_width;
      std::vector<double> loc, lm, ex;
      for (const auto* r : ok) {
        const StepRecord& s = step_at(*r, b.bin_end);
        loc.push_back(s.localization_rmse);
        lm.push_back(s.landmark_rmse);
        ex.push_back(s.explored);
      }
      b.trials = static_cast<int>(ok.size());
      mean_std(loc, b.loc_mean, b.loc_std);
      mean_std(lm, b.lm_mean, b.lm_std);
      mean_std(ex, b.explored_mean, b.explored_std);
      ps.bins.push_back(b);
    }
    std::vector<double> loc, lm, ex, dist;
    for (const auto* r : ok) {
      loc.push_back(localization_rmse(*r));
      lm.push_back(landmark_rmse(*r));
      ex.push_back(r->final_explored());
      if (auto d = r->distance_to_explore(explored_target)) dist.push_back(*d);
    }
    double unused = 0.0;
    mean_std(loc, ps.final_loc_rmse, unused);
    mean_std(lm, ps.final_lm_rmse, unused);
    mean_std(ex, ps.final_explored, unused);
    mean_std(dist, ps.distance_to_target, unused);
    ps.reached_target = static_cast<int>(dist.size());
    summary.planners.push_back(std::move(ps));
  }
  return summary;
}

void write_summary_csv(const BatchSummary& summary, std::ostream& out) {
  out << "planner,bin_start_m,bin_end_m,trials,loc_rmse_mean_m,loc_rmse_std_m,lm_rmse_mean_m,lm_rmse_std_m,"
         "explored_mean,explored_std\n";
  for (const auto& p : summary.planners) {
    for (const auto& b : p.bins) {
      out << p.planner << ',' << num(b.bin_start, 3) << ',' << num(b.bin_end, 3) << ',' << b.trials << ','
          << num(b.loc_mean) << ',' << num(b.loc_std) << ',' << num(b.lm_mean) << ',' << num(b.lm_std) << ','
          << num(b.explored_mean) << ',' << num(b.explored_std) << '\n';
    }
  }
}

BatchSummary read_summary_csv(std::istream& in) {
  BatchSummary s;
  std::string line;
  if (!std::getline(in, line)) throw Error("empty summary CSV");
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto row = split(line);
    if (row.size() != 10) throw Error("malformed summary row");
    if (s.planners.empty() || s.planners.back().planner != row[0]) {
      s.planners.push_back({});
      s.planners.back().planner = row[0];
    }
    BinStats b;
    b.bin_start = to_double(row[1]);
    b.bin_end = to_double(row[2]);
    b.trials = to_int(row[3]);
    b.loc_mean = to_double(row[4]);
    b.loc_std = to_double(row[5]);
    b.lm_mean = to_double(row[6]);
    b.lm_std = to_double(row[7]);
    b.explored_mean = to_double(row[8]);
    b.explored_std = to_double(row[9]);
    s.planners.back().bins.push_back(b);
    s.bin_width = b.bin_end - b.bin_start;
  }
  return s;
}

void write_trials_csv(const std::vector<TrialRecord>& records, double explored_target, std::ostream& out) {
  out << "planner,seed,status,steps,total_distance_m,final_explored_ratio,distance_to_target_m,"
         "localization_rmse_m,landmark_rmse_m,decisions,error\n";
  for (const auto& r : records) {
    const auto reach = r.distance_to_explore(explored_target);
    out << r.planner << ',' << r.seed << ',' << to_string(r.status) << ','
        << (r.steps.empty() ? 0 : r.steps.back().step) << ',' << num(r.total_distance()) << ','
        << num(r.final_explored()) << ',' << (reach ? num(*reach) : "") << ',' << num(localization_rmse(r)) << ','
        << num(landmark_rmse(r)) << ',' << r.decisions.size() << ',' << sanitize(r.error) << '\n';
  }
}

namespace {

fs::path trial_dir(const fs::path& root, const std::string& planner, std::uint64_t seed) {
  return root / planner / ("seed_" + std::to_string(seed));
}

std::vector<fs::path> trial_dirs(const fs::path& batch_dir) {
  std::vector<fs::path> out;
  if (!fs::exists(batch_dir)) throw Error("no such directory " + batch_dir.string());
  for (const auto& entry : fs::recursive_directory_iterator(batch_dir)) {
    if (entry.is_regular_file() && entry.path().filename() == "meta.csv") out.push_back(entry.path().parent_path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

BatchSummary aggregate_directory(const fs::path& batch_dir, double bin_width, double explored_target) {
  std::vector<TrialRecord> records;
  for (const auto& dir : trial_dirs(batch_dir)) records.push_back(read_trial(dir));
  std::stable_sort(records.begin(), records.end(), [](const TrialRecord& a, const TrialRecord& b) {
    return a.planner != b.planner ? a.planner < b.planner : a.seed < b.seed;
  });
  return aggregate(records, bin_width, explored_target);
}

BatchResult run_batch(const BatchOptions& options) {
  if (options.planners.empty() || options.seeds.empty()) throw ConfigError("batch needs planners and seeds");
  struct Task {
    PlannerKind planner;
    std::uint64_t seed;
  };
  std::vector<Task> tasks;
  for (auto p : options.planners) {
    for (auto s : options.seeds) tasks.push_back({p, s});
  }
  std::vector<TrialRecord> records(tasks.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < tasks.size(); i = next++) {
      TrialConfig cfg = options.config;
      cfg.planner = tasks[i].planner;
      cfg.seed = tasks[i].seed;
      records[i] = run_trial(cfg);
      write_trial(records[i], trial_dir(options.out_dir, records[i].planner, cfg.seed));
    }
  };
  fs::create_directories(options.out_dir);
  const int jobs = std::max(1, std::min<int>(options.jobs, static_cast<int>(tasks.size())));
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int j = 0; j < jobs; ++j) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  BatchResult result;
  result.records = std::move(records);
  for (const auto& r : result.records) result.failed += r.status == TrialStatus::Failed ? 1 : 0;

  std::ostringstream trials;
  write_trials_csv(result.records, options.config.explored_target, trials);
  write_file(options.out_dir / "trials.csv", trials.str());

  // The summary is computed from the files just written.
  std::vector<TrialRecord> reread;
  for (const auto& t : tasks) {
    reread.push_back(read_trial(trial_dir(options.out_dir, std::string(to_string(t.planner)), t.seed)));
  }
  result.summary = aggregate(reread, options.bin_width, options.config.explored_target);
  std::ostringstream summary;
  write_summary_csv(result.summary, summary);
  write_file(options.out_dir / "summary.csv", summary.str());
  if (options.write_svg) render_charts(result.summary, options.out_dir);
  return result;
}

std::string render_svg(const BatchSummary& summary, const std::string& metric) {
  std::string title;
  std::string ylabel;
  auto value = [&](const BinStats& b) {
    if (metric == "localization") return b.loc_mean;
    if (metric == "landmark") return b.lm_mean;
    return b.explored_mean;
  };
  if (metric == "localization") {
    title = "Robot localization error";
    ylabel = "RMSE (m)";
  } else if (metric == "landmark") {
    title = "Landmark position error";
    ylabel = "RMSE (m)";
  } else if (metric == "explored") {
    title = "Explored ratio";
    ylabel = "ratio";
  } else {
    throw Error("unknown metric " + metric);
  }

  const double w = 640, h = 400, ml = 70, mr = 120, mt = 40, mb = 50;
  double xmax = summary.bin_width;
  double ymax = metric == "explored" ? 1.0 : 0.0;
  for (const auto& p : summary.planners) {
    for (const auto& b : p.bins) {
      xmax = std::max(xmax, b.bin_end);
      ymax = std::max(ymax, value(b));
    }
  }
  if (ymax <= 0.0) ymax = 1.0;
  ymax *= 1.05;
  auto sx = [&](double x) { return ml + (w - ml - mr) * x / xmax; };
  auto sy = [&](double y) { return h - mb - (h - mt - mb) * y / ymax; };

  static const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};
  std::ostringstream out;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h << "\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<text x=\"" << w / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"16\">" << title << "</text>\n";
  out << "<line x1=\"" << ml << "\" y1=\"" << h - mb << "\" x2=\"" << w - mr << "\" y2=\"" << h - mb
      << "\" stroke=\"black\"/>\n";
  out << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml << "\" y2=\"" << h - mb
      << "\" stroke=\"black\"/>\n";
  for (int k = 0; k <= 5; ++k) {
    const double xv = xmax * k / 5.0;
    const double yv = ymax * k / 5.0;
    out << "<text x=\"" << num(sx(xv), 1) << "\" y=\"" << h - mb + 18 << "\" text-anchor=\"middle\" font-size=\"11\">"
        << num(xv, 0) << "</text>\n";
    out << "<text x=\"" << ml - 6 << "\" y=\"" << num(sy(yv) + 4, 1) << "\" text-anchor=\"end\" font-size=\"11\">"
        << num(yv, 3) << "</text>\n";
  }
  out << "<text x=\"" << (ml + w - mr) / 2 << "\" y=\"" << h - 10
      << "\" text-anchor=\"middle\" font-size=\"12\">team distance (m)</text>\n";
  out << "<text x=\"16\" y=\"" << h / 2 << "\" transform=\"rotate(-90 16 " << h / 2
      << ")\" text-anchor=\"middle\" font-size=\"12\">" << ylabel << "</text>\n";
  for (std::size_t i = 0; i < summary.planners.size(); ++i) {
    const auto& p = summary.planners[i];
    const char* color = kColors[i % 6];
    out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
    for (const auto& b : p.bins) out << num(sx(b.bin_end), 1) << ',' << num(sy(value(b)), 1) << ' ';
    out << "\"/>\n";
    const double ly = mt + 20 + 18 * static_cast<double>(i);
    out << "<line x1=\"" << w - mr + 10 << "\" y1=\"" << ly << "\" x2=\"" << w - mr + 30 << "\" y2=\"" << ly
        << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    out << "<text x=\"" << w - mr + 36 << "\" y=\"" << ly + 4 << "\" font-size=\"12\">" << p.planner << "</text>\n";
  }
  out << "</svg>\n";
  return out.str();
}

void render_charts(const BatchSummary& summary, const fs::path& out_dir) {
  fs::create_directories(out_dir);
  for (const std::string metric : {"localization", "landmark", "explored"}) {
    write_file(out_dir / (metric + ".svg"), render_svg(summary, metric));
  }
}

}  // namespace emx
