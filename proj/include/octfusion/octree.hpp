#pragma once

#include <cmath>
#include <cstdint>
#include <iosfwd>
#include <limits>
#include <vector>

#include "octfusion/volume.hpp"

namespace octfusion {

using NodeId = std::int32_t;
inline constexpr NodeId kNoChildren = -1;

/// One octree node. Children live in contiguous blocks of eight in the owning
/// pool, so a single index addresses all of them.
struct OctreeNode {
  float value = 0.0f;
  /// View trees: observation weight (mean over the subvolume).
  float weight = 0.0f;
  /// Value the node held before it was restructured in the current pass
  /// (the pre-split value for split nodes). NaN marks nodes created during
  /// the current pass, which have no pre-pass value.
  float snapshot = 0.0f;
  NodeId children = kNoChildren;

  bool is_leaf() const { return children == kNoChildren; }
  bool has_snapshot() const { return !std::isnan(snapshot); }
};
static_assert(sizeof(OctreeNode) == 16);

/// Octant o selects the child at offset (o&1, (o>>1)&1, (o>>2)&1).
inline Cell child_cell(const Cell& parent, int octant) {
  return {2 * parent.x + (octant & 1), 2 * parent.y + ((octant >> 1) & 1),
          2 * parent.z + ((octant >> 2) & 1)};
}

/// Octant of the level-`level` ancestor's child on the way to `cell`, where
/// `cell` is given at `cell_level` > `level`.
inline int octant_toward(const Cell& cell, int cell_level, int level) {
  const int shift = cell_level - level - 1;
  return ((cell.x >> shift) & 1) | (((cell.y >> shift) & 1) << 1) |
         (((cell.z >> shift) & 1) << 2);
}

/// Hierarchical scalar field over a cubic domain of 2^max_depth cells per
/// axis. Node storage is a pool of 8-node blocks with a free list, so
/// repeated split/join cycles reuse memory.
class Octree {
 public:
  explicit Octree(int max_depth, float value = 0.0f, float weight = 0.0f);

  int max_depth() const { return max_depth_; }
  int resolution() const { return 1 << max_depth_; }
  static constexpr NodeId root() { return 0; }

  const OctreeNode& operator[](NodeId id) const { return pool_[static_cast<std::size_t>(id)]; }
  OctreeNode& operator[](NodeId id) { return pool_[static_cast<std::size_t>(id)]; }
  NodeId child(NodeId parent, int octant) const { return (*this)[parent].children + octant; }

  std::size_t node_count() const { return live_; }
  std::size_t leaf_count() const;
  std::size_t memory_bytes() const { return live_ * sizeof(OctreeNode); }

  /// Subdivides a leaf at `level` into eight children holding its value and
  /// weight. The node keeps its value as the pre-split snapshot; the new
  /// children have none. Throws std::logic_error on inner nodes or at
  /// max_depth.
  void split(NodeId node, int level);

  /// Replaces the eight children by their mean. Throws std::logic_error if
  /// the node is a leaf or any child is not a leaf.
  void join(NodeId node);

  /// Bottom-up pass setting every inner value (and weight) to the mean of its
  /// children.
  void propagate_means();

  /// Copies value into snapshot for every node.
  void commit_snapshot();

  /// Deepest node at level <= `level` whose subvolume contains `cell`
  /// (given at `level`). `found_level` receives that node's level.
  NodeId locate(const Cell& cell, int level, int* found_level = nullptr) const;

  /// Value at `cell` on `level`: the node at that level if it exists, else
  /// the leaf that spatially subsumes it.
  float lookup_at_level(const Cell& cell, int level) const {
    return (*this)[locate(cell, level)].value;
  }

  /// Like lookup_at_level, but reads snapshots and never descends into nodes
  /// created during the current pass.
  float snapshot_at(const Cell& cell, int level) const;

  /// Pre-order traversal; fn(NodeId, int level, const Cell& cell).
  template <class Fn>
  void visit(Fn&& fn) const {
    visit_impl(root(), 0, Cell{}, fn);
  }

  /// fn(NodeId, int level, const Cell& cell) for every leaf, pre-order.
  template <class Fn>
  void visit_leaves(Fn&& fn) const {
    visit([&](NodeId id, int level, const Cell& c) {
      if ((*this)[id].is_leaf()) fn(id, level, c);
    });
  }

 private:
  template <class Fn>
  void visit_impl(NodeId id, int level, const Cell& c, Fn& fn) const {
    fn(id, level, c);
    const NodeId first = (*this)[id].children;
    if (first == kNoChildren) return;
    for (int o = 0; o < 8; ++o) visit_impl(first + o, level + 1, child_cell(c, o), fn);
  }

  NodeId allocate_block();
  void release_block(NodeId first);
  void propagate(NodeId id);

  std::vector<OctreeNode> pool_;
  std::vector<NodeId> free_blocks_;
  int max_depth_ = 0;
  std::size_t live_ = 1;
};

/// Octree representation of one view: node value is f, node weight is w.
using ViewTree = Octree;

/// |max - min| of `field` over the subvolume of `cell` at `level`.
double spread(const Grid3<float>& field, const Cell& cell, int level);

/// Top-down construction: a node is subdivided while the spread of `f` over
/// it exceeds `tau` or (when given) `w` is not constant over it, down to
/// max_depth. Leaves hold subvolume means of f and w; inner nodes are then
/// filled by propagate_means.
Octree build_octree(const Grid3<float>& f, const Grid3<float>* w, double tau, int max_depth);

/// Samples every finest cell with lookup_at_level(cell, max_depth).
Grid3<float> densify(const Octree& tree);

/// Same as densify for the weight channel.
Grid3<float> densify_weight(const Octree& tree);

struct QuantizationError {
  /// Sum over leaves of |leaf value - mean of the dense field over the leaf|,
  /// with the mean rounded to float.
  double sum = 0.0;
  /// Same terms, each scaled by the leaf's share of the volume.
  double volume_weighted = 0.0;
};

QuantizationError quantization_error(const Octree& tree, const Grid3<float>& dense);

/// Pre-order text dump, one node per line: `level cx cy cz is_leaf value weight`.
void write_tree(std::ostream& out, const Octree& tree);

}  // namespace octfusion
