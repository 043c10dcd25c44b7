#pragma once

#include <array>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <vector>

#include "octfusion/volume.hpp"

namespace octfusion {

/// Indexed triangle mesh with an optional per-vertex scalar channel.
struct TriMesh {
  std::vector<Vec3> vertices;
  std::vector<std::array<int, 3>> triangles;
  /// Empty, or one value per vertex.
  std::vector<double> quality;

  bool empty() const { return vertices.empty(); }
  /// True when all indices are in range and no triangle repeats an index.
  bool valid() const;
};

/// Marching Cubes at iso-value 0 over voxel centers of `dom`. A value below 0
/// counts as inside. Cells with a zero `mask` value at any corner emit no
/// geometry. Vertices are shared between cells, so closed surfaces come out
/// watertight.
TriMesh marching_cubes(const Grid3<float>& field, const VolumeDomain& dom,
                       const Grid3<float>* mask = nullptr);

/// Static 3-d tree over a point set for nearest-neighbour queries.
class KdTree {
 public:
  explicit KdTree(std::vector<Vec3> points);

  std::size_t size() const { return points_.size(); }
  /// Index (into the constructor's point order) of the nearest point.
  /// Requires a non-empty tree.
  std::size_t nearest(const Vec3& q, double* dist = nullptr) const;

 private:
  struct Node {
    int point;
    int axis;
    int left;
    int right;
  };
  int build(std::vector<int>& idx, int lo, int hi, int depth);
  void search(int node, const Vec3& q, int& best, double& best_sq) const;

  std::vector<Vec3> points_;
  std::vector<Node> nodes_;
  int root_ = -1;
};

struct DiffStats {
  double mean = 0.0;
  double stddev = 0.0;
  double max = 0.0;
};

DiffStats summarize(const std::vector<double>& distances);

struct MeshDiff {
  std::vector<double> distances;
  DiffStats stats;
  /// Copy of the query mesh with `quality` set to the distances.
  TriMesh colored;
};

/// For each vertex of `a`, distance to the nearest vertex of `b`.
/// Throws std::invalid_argument when `b` is empty.
MeshDiff vertex_diff(const TriMesh& a, const TriMesh& b);

/// Mean of the two directed means a->b and b->a.
double symmetric_mean(const TriMesh& a, const TriMesh& b);

/// Distance of each vertex to an analytic sphere, | |v - c| - r |.
MeshDiff sphere_diff(const TriMesh& a, const Vec3& center, double radius);

/// ASCII PLY: `x y z [quality]` per vertex, triangles as faces.
void write_ply(const std::filesystem::path& path, const TriMesh& mesh);
TriMesh read_ply(const std::filesystem::path& path);

/// One `index,distance` row per vertex under a header line.
void write_distances_csv(const std::filesystem::path& path, const std::vector<double>& distances);

}  // namespace octfusion
