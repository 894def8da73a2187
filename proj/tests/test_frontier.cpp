#include <catch_amalgamated.hpp>

#include "emx/frontier.hpp"

#include <algorithm>
#include <random>

using namespace emx;

namespace {

VirtualMap map_with(const std::vector<char>& seen, const VirtualMapSpec& spec) {
  VirtualMap m(spec);
  for (int i = 0; i < m.size(); ++i) m.cell(i).q = seen[i] ? 0.9 : 0.5;
  return m;
}

std::vector<int> brute_boundary(const VirtualMap& m) {
  std::vector<int> out;
  for (int y = 1; y + 1 < m.height(); ++y) {
    for (int x = 1; x + 1 < m.width(); ++x) {
      const int i = m.index(x, y);
      if (!m.observed(i)) continue;
      if (!m.observed(m.index(x + 1, y)) || !m.observed(m.index(x - 1, y)) || !m.observed(m.index(x, y + 1)) ||
          !m.observed(m.index(x, y - 1))) {
        out.push_back(i);
      }
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

TEST_CASE("boundary cells against a brute-force scan") {
  const VirtualMapSpec spec = VirtualMapSpec::covering(40.0, 30.0, 2.0, 7.5);
  std::mt19937_64 rng(6);
  std::bernoulli_distribution coin(0.6);
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<char> seen(spec.num_cells());
    for (auto& s : seen) s = coin(rng) ? 1 : 0;
    const VirtualMap m = map_with(seen, spec);
    std::vector<int> got = boundary_cells(m);
    std::sort(got.begin(), got.end());
    CHECK(got == brute_boundary(m));
  }
  const VirtualMap none(spec);
  CHECK(boundary_cells(none).empty());
}

TEST_CASE("exploring frontiers are thinned, sorted and clear of landmarks") {
  const VirtualMapSpec spec = VirtualMapSpec::covering(60.0, 60.0, 2.0, 7.5);
  std::vector<char> seen(spec.num_cells(), 0);
  VirtualMap probe(spec);
  for (int i = 0; i < probe.size(); ++i) seen[i] = distance(probe.center(i), {30.0, 30.0}) < 20.0 ? 1 : 0;
  const VirtualMap m = map_with(seen, spec);
  const Pose2 self{30.0, 30.0, 0.0};
  const std::vector<LandmarkBelief> lms{{0, {30.0, 49.0}, std::nullopt}};
  FrontierOptions opt;
  opt.max_exploring = 6;
  const auto fs = generate_frontiers(m, self, lms, {}, opt);
  const auto boundary = boundary_cells(m);
  int exploring = 0;
  double last = -1.0;
  for (const auto& f : fs) {
    if (f.kind != FrontierKind::Exploring) continue;
    ++exploring;
    CHECK(std::find(boundary.begin(), boundary.end(), f.cell) != boundary.end());
    CHECK(distance(f.target.position(), lms[0].position) >= opt.obstacle_radius);
    const double d = distance(self.position(), f.target.position());
    CHECK(d >= last);
    last = d;
    for (const auto& g : fs) {
      if (&g == &f || g.kind != FrontierKind::Exploring) continue;
      CHECK(distance(f.target.position(), g.target.position()) >= opt.dedup_radius_cells * spec.cell_size);
    }
  }
  CHECK(exploring == 6);
  // The landmark is more than the sensing range away, so one revisiting candidate.
  CHECK(std::count_if(fs.begin(), fs.end(), [](const Frontier& f) { return f.kind == FrontierKind::Revisiting; }) ==
        1);
}

TEST_CASE("fully observed map with two landmarks and one neighbor") {
  const VirtualMapSpec spec = VirtualMapSpec::covering(40.0, 40.0, 2.0, 7.5);
  const VirtualMap m = map_with(std::vector<char>(spec.num_cells(), 1), spec);
  const Pose2 self{5.0, 5.0, 0.0};
  const std::vector<LandmarkBelief> lms{{3, {30.0, 30.0}, std::nullopt}, {4, {8.0, 8.0}, std::nullopt}};
  const std::vector<NeighborTarget> nbr{{2, Pose2{20.0, 12.0, 0.0}}};
  const auto fs = generate_frontiers(m, self, lms, nbr);
  REQUIRE(fs.size() == 2);
  CHECK(fs[0].kind == FrontierKind::Revisiting);
  CHECK(fs[0].anchor == 3);
  CHECK(distance(fs[0].target.position(), lms[0].position) < 7.5);
  CHECK(fs[1].kind == FrontierKind::Rendezvous);
  CHECK(fs[1].anchor == 2);
  CHECK(fs[1].target.position() == Point2{20.0, 12.0});

  const auto quiet = generate_frontiers(m, self, std::vector<LandmarkBelief>{}, {});
  CHECK(quiet.empty());
}

TEST_CASE("revisiting candidates are capped, nearest first") {
  const VirtualMapSpec spec = VirtualMapSpec::covering(80.0, 80.0, 2.0, 7.5);
  const VirtualMap m = map_with(std::vector<char>(spec.num_cells(), 1), spec);
  std::vector<LandmarkBelief> lms;
  for (int k = 0; k < 8; ++k) lms.push_back({k, {10.0 + 8.0 * k, 70.0}, std::nullopt});
  const auto fs = generate_frontiers(m, Pose2{10.0, 10.0, 0.0}, lms, {});
  REQUIRE(fs.size() == 5);
  for (int k = 0; k < 5; ++k) CHECK(fs[k].anchor == k);
}
