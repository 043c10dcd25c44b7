#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "helpers.hpp"
#include "octfusion/octree.hpp"

using namespace octfusion;

namespace {

// Brute-force mean of `g` over the subvolume of `c` at `level`.
double brute_mean(const Grid3<float>& g, const Cell& c, int level, int depth) {
  const int s = 1 << (depth - level);
  double sum = 0.0;
  for (int z = 0; z < s; ++z)
    for (int y = 0; y < s; ++y)
      for (int x = 0; x < s; ++x) sum += g(c.x * s + x, c.y * s + y, c.z * s + z);
  return sum / (s * s * s);
}

std::vector<std::tuple<int, int, int, int>> leaf_structure(const Octree& t) {
  std::vector<std::tuple<int, int, int, int>> out;
  t.visit_leaves([&](NodeId, int level, const Cell& c) { out.emplace_back(level, c.x, c.y, c.z); });
  return out;
}

void check_structure(const Octree& t) {
  std::size_t volume = 0;
  const int d = t.max_depth();
  Grid3<int> covered(t.resolution(), 0);
  t.visit([&](NodeId id, int level, const Cell& c) {
    CHECK(level <= d);
    if (t[id].is_leaf()) {
      const int s = 1 << (d - level);
      volume += static_cast<std::size_t>(s) * s * s;
      for (int z = 0; z < s; ++z)
        for (int y = 0; y < s; ++y)
          for (int x = 0; x < s; ++x) covered(c.x * s + x, c.y * s + y, c.z * s + z) += 1;
    } else {
      double mean = 0.0;
      for (int o = 0; o < 8; ++o) mean += t[t.child(id, o)].value;
      CHECK(std::abs(t[id].value - mean / 8.0) < 1e-6);
    }
  });
  CHECK(volume == covered.size());
  CHECK(std::all_of(covered.data().begin(), covered.data().end(), [](int k) { return k == 1; }));
}

}  // namespace

TEST_CASE("spread") {
  Grid3<float> g(4, 0.5f);
  CHECK(spread(g, {0, 0, 0}, 0) == 0.0);
  g(1, 1, 1) = 0.2f;
  CHECK(spread(g, {0, 0, 0}, 1) == doctest::Approx(0.3));
  CHECK(spread(g, {1, 1, 1}, 1) == 0.0);
  g(0, 0, 0) = -1.0f;
  g(1, 0, 0) = 1.0f;
  CHECK(spread(g, {0, 0, 0}, 0) == 2.0);
}

TEST_CASE("constant field gives a single root leaf") {
  const Grid3<float> f(16, 0.25f);
  const Grid3<float> w(16, 1.0f);
  const Octree t = build_octree(f, &w, 0.1, 4);
  CHECK(t.node_count() == 1);
  CHECK(t[Octree::root()].value == 0.25f);
  CHECK(t[Octree::root()].weight == 1.0f);
  CHECK(densify(t) == f);
}

TEST_CASE("tau = 0 fully refines a field with spread everywhere") {
  const auto g = testing::random_grid(16, 11);
  const Octree t = build_octree(g, nullptr, 0.0, 4);
  std::size_t leaves = 0;
  t.visit_leaves([&](NodeId, int level, const Cell&) {
    CHECK(level == 4);
    ++leaves;
  });
  CHECK(leaves == g.size());
  CHECK(densify(t) == g);
  check_structure(t);
}

TEST_CASE("non-constant weight forces a split") {
  const Grid3<float> f(8, 0.0f);
  Grid3<float> w(8, 1.0f);
  w(7, 7, 7) = 0.0f;
  const Octree t = build_octree(f, &w, 0.5, 3);
  CHECK(t.node_count() > 1);
  CHECK(densify_weight(t) == w);
  CHECK(densify(t) == f);
}

TEST_CASE("sphere tsdf: every leaf holding a sign change is at full depth") {
  const VolumeDomain dom(Vec3::Zero(), 1.0, 32);
  auto g = testing::sphere_sdf(dom, Vec3::Constant(16.3), 9.7);
  for (auto& v : g.data()) v = std::clamp(v / 3.0f, -1.0f, 1.0f);
  const Octree t = build_octree(g, nullptr, 0.1, 5);
  check_structure(t);
  int checked = 0;
  t.visit_leaves([&](NodeId, int level, const Cell& c) {
    const int s = 1 << (5 - level);
    bool pos = false;
    bool neg = false;
    for (int z = 0; z < s; ++z)
      for (int y = 0; y < s; ++y)
        for (int x = 0; x < s; ++x) {
          const float v = g(c.x * s + x, c.y * s + y, c.z * s + z);
          pos = pos || v > 0.0f;
          neg = neg || v < 0.0f;
        }
    if (pos && neg) CHECK(level == 5);
    ++checked;
  });
  CHECK(checked > 8);
  CHECK(t.node_count() < g.size());
}

TEST_CASE("leaf values are subvolume means and inner nodes are child means") {
  const auto g = testing::random_grid(16, 5);
  const Octree t = build_octree(g, nullptr, 1.0, 4);
  check_structure(t);
  t.visit_leaves([&](NodeId id, int level, const Cell& c) {
    CHECK(t[id].value == doctest::Approx(brute_mean(g, c, level, 4)).epsilon(1e-6));
  });
}

TEST_CASE("densify then rebuild reproduces the leaf structure") {
  const auto g = testing::blocky_grid(32, 4, 8);
  const Octree a = build_octree(g, nullptr, 0.3, 5);
  const Octree b = build_octree(densify(a), nullptr, 0.3, 5);
  CHECK(leaf_structure(a) == leaf_structure(b));
}

TEST_CASE("propagate means") {
  Octree t(1, 0.0f);
  t.split(Octree::root(), 0);
  for (int o = 0; o < 8; ++o) t[t.child(Octree::root(), o)].value = o < 4 ? -1.0f : 1.0f;
  t.propagate_means();
  CHECK(t[Octree::root()].value == 0.0f);

  Octree c(3, 0.4f);
  c.split(Octree::root(), 0);
  c.split(c.child(Octree::root(), 5), 1);
  c.propagate_means();
  c.visit([&](NodeId id, int, const Cell&) { CHECK(c[id].value == doctest::Approx(0.4f)); });

  const auto g = testing::random_grid(8, 2);
  Octree r = build_octree(g, nullptr, 0.5, 3);
  std::ostringstream once;
  write_tree(once, r);
  r.propagate_means();
  std::ostringstream twice;
  write_tree(twice, r);
  CHECK(once.str() == twice.str());
}

TEST_CASE("lookup at level") {
  const auto g = testing::blocky_grid(8, 4, 21);
  const Octree t = build_octree(g, nullptr, 0.0, 3);
  // Eight level-1 leaves, each constant.
  CHECK(t.node_count() == 9);
  CHECK(t.lookup_at_level({1, 0, 1}, 1) == g(4, 0, 4));
  CHECK(t.lookup_at_level({5, 2, 7}, 3) == g(5, 2, 7));
  int found = -1;
  t.locate({5, 2, 7}, 3, &found);
  CHECK(found == 1);
  CHECK(t.lookup_at_level({0, 0, 0}, 0) == doctest::Approx(brute_mean(g, {0, 0, 0}, 0, 3)));
}

TEST_CASE("split and join") {
  Octree t(2, 0.3f);
  t.split(Octree::root(), 0);
  CHECK(t.node_count() == 9);
  for (int o = 0; o < 8; ++o) CHECK(t[t.child(Octree::root(), o)].value == 0.3f);
  CHECK(t[Octree::root()].snapshot == 0.3f);
  CHECK_FALSE(t[t.child(Octree::root(), 0)].has_snapshot());
  for (int o = 0; o < 8; ++o) t[t.child(Octree::root(), o)].value = 0.7f;
  t.join(Octree::root());
  CHECK(t.node_count() == 1);
  CHECK(t[Octree::root()].value == doctest::Approx(0.7f));
  t.split(Octree::root(), 0);
  CHECK(t.node_count() == 9);

  CHECK_THROWS_AS(t.split(Octree::root(), 0), std::logic_error);
  const NodeId leaf = t.child(Octree::root(), 2);
  t.split(leaf, 1);
  CHECK_THROWS_AS(t.split(t.child(leaf, 0), 2), std::logic_error);
  CHECK_THROWS_AS(t.join(Octree::root()), std::logic_error);
  CHECK_THROWS_AS(t.join(t.child(Octree::root(), 0)), std::logic_error);
}

TEST_CASE("split/join cycles reuse pool memory") {
  Octree t(3, 0.0f);
  t.split(Octree::root(), 0);
  const std::size_t bytes = t.memory_bytes();
  for (int i = 0; i < 50; ++i) {
    const NodeId c = t.child(Octree::root(), i % 8);
    t.split(c, 1);
    t.join(c);
  }
  CHECK(t.memory_bytes() == bytes);
  CHECK(t.node_count() == 9);
  check_structure(t);
}

TEST_CASE("quantization error") {
  const auto g = testing::random_grid(8, 9);
  CHECK(quantization_error(build_octree(g, nullptr, 0.5, 3), g).sum == 0.0);
  CHECK(quantization_error(build_octree(g, nullptr, 0.0, 3), g).sum == 0.0);

  // Against a different field the error is a direct sum over leaves.
  const auto h = testing::random_grid(8, 10);
  const Octree t = build_octree(g, nullptr, 0.5, 3);
  double sum = 0.0;
  double weighted = 0.0;
  t.visit_leaves([&](NodeId id, int level, const Cell& c) {
    const double d = std::abs(t[id].value - brute_mean(h, c, level, 3));
    sum += d;
    weighted += d * std::pow(8.0, 3 - level) / 512.0;
  });
  const QuantizationError q = quantization_error(t, h);
  CHECK(q.sum == doctest::Approx(sum).epsilon(1e-6));
  CHECK(q.volume_weighted == doctest::Approx(weighted).epsilon(1e-6));
  CHECK_THROWS_AS(quantization_error(t, Grid3<float>(4)), std::invalid_argument);
}

TEST_CASE("tree dump lists every node in pre-order") {
  Octree t(2, 0.5f);
  t.split(Octree::root(), 0);
  std::ostringstream out;
  write_tree(out, t);
  std::istringstream in(out.str());
  int level, x, y, z, leaf;
  float v, w;
  int lines = 0;
  while (in >> level >> x >> y >> z >> leaf >> v >> w) {
    if (lines == 0) CHECK(leaf == 0);
    else CHECK(level == 1);
    ++lines;
  }
  CHECK(lines == 9);
}
