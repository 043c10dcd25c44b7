#include "octfusion/octree.hpp"

#include <algorithm>
#include <iomanip>
#include <ostream>
#include <stdexcept>

namespace octfusion {

namespace {

constexpr float kNoSnapshot = std::numeric_limits<float>::quiet_NaN();

struct Range {
  float fmin, fmax, wmin, wmax;
};

Range merge(const Range& a, const Range& b) {
  return {std::min(a.fmin, b.fmin), std::max(a.fmax, b.fmax), std::min(a.wmin, b.wmin),
          std::max(a.wmax, b.wmax)};
}

std::size_t level_index(const Cell& c, int level) {
  const std::size_t n = std::size_t{1} << level;
  return (static_cast<std::size_t>(c.z) * n + c.y) * n + c.x;
}

// Min/max pyramid for levels 0 .. max_depth-1; level max_depth is the grid.
std::vector<std::vector<Range>> range_pyramid(const Grid3<float>& f, const Grid3<float>* w,
                                              int max_depth) {
  std::vector<std::vector<Range>> pyr(static_cast<std::size_t>(max_depth));
  for (int level = max_depth - 1; level >= 0; --level) {
    const int n = 1 << level;
    auto& cur = pyr[static_cast<std::size_t>(level)];
    cur.resize(static_cast<std::size_t>(n) * n * n);
    for (int z = 0; z < n; ++z) {
      for (int y = 0; y < n; ++y) {
        for (int x = 0; x < n; ++x) {
          const Cell c{x, y, z};
          Range r{};
          for (int o = 0; o < 8; ++o) {
            const Cell cc = child_cell(c, o);
            Range rc{};
            if (level + 1 == max_depth) {
              const float fv = f(cc);
              const float wv = w ? (*w)(cc) : 0.0f;
              rc = {fv, fv, wv, wv};
            } else {
              rc = pyr[static_cast<std::size_t>(level) + 1][level_index(cc, level + 1)];
            }
            r = o == 0 ? rc : merge(r, rc);
          }
          cur[level_index(c, level)] = r;
        }
      }
    }
  }
  return pyr;
}

template <class Fn>
void for_block(const Cell& cell, int level, int max_depth, Fn&& fn) {
  const int size = 1 << (max_depth - level);
  const Cell lo{cell.x * size, cell.y * size, cell.z * size};
  for (int z = lo.z; z < lo.z + size; ++z)
    for (int y = lo.y; y < lo.y + size; ++y)
      for (int x = lo.x; x < lo.x + size; ++x) fn(x, y, z);
}

int depth_of(const Grid3<float>& g) {
  int d = 0;
  while ((1 << d) < g.resolution()) ++d;
  return d;
}

double block_mean(const Grid3<float>& g, const Cell& cell, int level, int max_depth) {
  double sum = 0.0;
  std::size_t count = 0;
  for_block(cell, level, max_depth, [&](int x, int y, int z) {
    sum += g(x, y, z);
    ++count;
  });
  return sum / static_cast<double>(count);
}

}  // namespace

Octree::Octree(int max_depth, float value, float weight) : max_depth_(max_depth) {
  if (max_depth < 0 || max_depth > 15) throw std::invalid_argument("octree depth out of range");
  pool_.push_back(OctreeNode{value, weight, value, kNoChildren});
}

std::size_t Octree::leaf_count() const {
  std::size_t n = 0;
  visit_leaves([&](NodeId, int, const Cell&) { ++n; });
  return n;
}

NodeId Octree::allocate_block() {
  if (!free_blocks_.empty()) {
    const NodeId first = free_blocks_.back();
    free_blocks_.pop_back();
    return first;
  }
  const auto first = static_cast<NodeId>(pool_.size());
  pool_.resize(pool_.size() + 8);
  return first;
}

void Octree::release_block(NodeId first) { free_blocks_.push_back(first); }

void Octree::split(NodeId node, int level) {
  if (!(*this)[node].is_leaf()) throw std::logic_error("split of an inner node");
  if (level >= max_depth_) throw std::logic_error("split at maximum depth");
  const NodeId first = allocate_block();
  OctreeNode& n = (*this)[node];
  if (n.has_snapshot()) n.snapshot = n.value;
  for (int o = 0; o < 8; ++o) {
    pool_[static_cast<std::size_t>(first + o)] =
        OctreeNode{n.value, n.weight, kNoSnapshot, kNoChildren};
  }
  n.children = first;
  live_ += 8;
}

void Octree::join(NodeId node) {
  OctreeNode& n = (*this)[node];
  if (n.is_leaf()) throw std::logic_error("join of a leaf");
  double value = 0.0;
  double weight = 0.0;
  for (int o = 0; o < 8; ++o) {
    const OctreeNode& c = (*this)[n.children + o];
    if (!c.is_leaf()) throw std::logic_error("join of a node with inner children");
    value += c.value;
    weight += c.weight;
  }
  release_block(n.children);
  n.children = kNoChildren;
  n.value = static_cast<float>(value / 8.0);
  n.weight = static_cast<float>(weight / 8.0);
  n.snapshot = n.value;
  live_ -= 8;
}

void Octree::propagate(NodeId id) {
  OctreeNode& n = (*this)[id];
  if (n.is_leaf()) return;
  const NodeId first = n.children;
  double value = 0.0;
  double weight = 0.0;
  for (int o = 0; o < 8; ++o) {
    propagate(first + o);
    value += (*this)[first + o].value;
    weight += (*this)[first + o].weight;
  }
  OctreeNode& m = (*this)[id];
  m.value = static_cast<float>(value / 8.0);
  m.weight = static_cast<float>(weight / 8.0);
}

void Octree::propagate_means() { propagate(root()); }

void Octree::commit_snapshot() {
  for (auto& n : pool_) n.snapshot = n.value;
}

NodeId Octree::locate(const Cell& cell, int level, int* found_level) const {
  NodeId id = root();
  int l = 0;
  while (l < level) {
    const OctreeNode& n = (*this)[id];
    if (n.is_leaf()) break;
    id = n.children + octant_toward(cell, level, l);
    ++l;
  }
  if (found_level) *found_level = l;
  return id;
}

float Octree::snapshot_at(const Cell& cell, int level) const {
  NodeId id = root();
  for (int l = 0; l < level; ++l) {
    const OctreeNode& n = (*this)[id];
    if (n.is_leaf() || !(*this)[n.children].has_snapshot()) break;
    id = n.children + octant_toward(cell, level, l);
  }
  return (*this)[id].snapshot;
}

double spread(const Grid3<float>& field, const Cell& cell, int level) {
  const int max_depth = depth_of(field);
  float lo = std::numeric_limits<float>::infinity();
  float hi = -lo;
  for_block(cell, level, max_depth, [&](int x, int y, int z) {
    lo = std::min(lo, field(x, y, z));
    hi = std::max(hi, field(x, y, z));
  });
  return std::abs(static_cast<double>(hi) - static_cast<double>(lo));
}

Octree build_octree(const Grid3<float>& f, const Grid3<float>* w, double tau, int max_depth) {
  if (f.resolution() != (1 << max_depth)) {
    throw std::invalid_argument("grid resolution does not match 2^max_depth");
  }
  if (w && w->resolution() != f.resolution()) {
    throw std::invalid_argument("weight grid resolution differs from the field");
  }
  if (!(tau >= 0.0)) throw std::invalid_argument("spread threshold must be non-negative");

  const auto pyr = range_pyramid(f, w, max_depth);
  Octree tree(max_depth);

  auto build = [&](auto&& self, NodeId id, int level, const Cell& c) -> void {
    if (level < max_depth) {
      const Range& r = pyr[static_cast<std::size_t>(level)][level_index(c, level)];
      const double s = static_cast<double>(r.fmax) - static_cast<double>(r.fmin);
      if (s > tau || (w && r.wmax != r.wmin)) {
        tree.split(id, level);
        const NodeId first = tree[id].children;
        for (int o = 0; o < 8; ++o) self(self, first + o, level + 1, child_cell(c, o));
        return;
      }
    }
    OctreeNode& n = tree[id];
    n.value = static_cast<float>(block_mean(f, c, level, max_depth));
    n.weight = w ? static_cast<float>(block_mean(*w, c, level, max_depth)) : 0.0f;
  };
  build(build, Octree::root(), 0, Cell{});
  tree.propagate_means();
  tree.commit_snapshot();
  return tree;
}

namespace {

Grid3<float> densify_channel(const Octree& tree, bool weight) {
  Grid3<float> out(tree.resolution());
  tree.visit_leaves([&](NodeId id, int level, const Cell& c) {
    const float v = weight ? tree[id].weight : tree[id].value;
    for_block(c, level, tree.max_depth(), [&](int x, int y, int z) { out(x, y, z) = v; });
  });
  return out;
}

}  // namespace

Grid3<float> densify(const Octree& tree) { return densify_channel(tree, false); }

Grid3<float> densify_weight(const Octree& tree) { return densify_channel(tree, true); }

QuantizationError quantization_error(const Octree& tree, const Grid3<float>& dense) {
  if (dense.resolution() != tree.resolution()) {
    throw std::invalid_argument("dense field does not match the octree domain");
  }
  QuantizationError err;
  const double total = static_cast<double>(dense.size());
  tree.visit_leaves([&](NodeId id, int level, const Cell& c) {
    // Means are compared at storage precision.
    const float mean = static_cast<float>(block_mean(dense, c, level, tree.max_depth()));
    const double diff = std::abs(static_cast<double>(tree[id].value) - static_cast<double>(mean));
    const double cells = std::pow(8.0, tree.max_depth() - level);
    err.sum += diff;
    err.volume_weighted += diff * cells / total;
  });
  return err;
}

void write_tree(std::ostream& out, const Octree& tree) {
  const auto precision = out.precision();
  out << std::setprecision(9);
  tree.visit([&](NodeId id, int level, const Cell& c) {
    const OctreeNode& n = tree[id];
    out << level << ' ' << c.x << ' ' << c.y << ' ' << c.z << ' ' << (n.is_leaf() ? 1 : 0) << ' '
        << n.value << ' ' << n.weight << '\n';
  });
  out.precision(precision);
}

}  // namespace octfusion
