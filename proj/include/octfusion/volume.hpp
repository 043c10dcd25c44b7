#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <cstddef>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <vector>

namespace octfusion {

using Vec3 = Eigen::Vector3d;
using Vec2 = Eigen::Vector2d;
using Mat3 = Eigen::Matrix3d;
using Pose = Eigen::Isometry3d;

/// Integer cell coordinate. Whether it addresses a finest voxel or a coarser
/// octree cell depends on the level it is paired with.
struct Cell {
  int x = 0;
  int y = 0;
  int z = 0;

  int operator[](int axis) const { return axis == 0 ? x : (axis == 1 ? y : z); }
  int& operator[](int axis) { return axis == 0 ? x : (axis == 1 ? y : z); }
  friend bool operator==(const Cell&, const Cell&) = default;
};

inline bool is_power_of_two(int n) { return n > 0 && (n & (n - 1)) == 0; }

/// Axis-aligned cubic reconstruction volume with N = 2^depth voxels per axis.
class VolumeDomain {
 public:
  VolumeDomain() = default;
  VolumeDomain(const Vec3& origin, double voxel_size, int resolution);

  const Vec3& origin() const { return origin_; }
  double voxel_size() const { return voxel_size_; }
  int resolution() const { return resolution_; }
  /// log2 of the resolution; the maximum octree depth for this volume.
  int depth() const { return depth_; }
  double extent() const { return voxel_size_ * resolution_; }
  std::size_t voxel_count() const {
    return static_cast<std::size_t>(resolution_) * resolution_ * resolution_;
  }

  bool contains(const Cell& idx) const {
    return idx.x >= 0 && idx.y >= 0 && idx.z >= 0 && idx.x < resolution_ &&
           idx.y < resolution_ && idx.z < resolution_;
  }

  /// World position of a voxel center. Throws std::out_of_range for indices
  /// outside [0, N).
  Vec3 voxel_center(const Cell& idx) const;

  /// Voxel containing a world point, or nullopt outside the volume.
  std::optional<Cell> voxel_index(const Vec3& p) const;

 private:
  Vec3 origin_ = Vec3::Zero();
  double voxel_size_ = 1.0;
  int resolution_ = 1;
  int depth_ = 0;
};

struct Intrinsics {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;
  int width = 1;
  int height = 1;
};

/// Pinhole camera; `pose` maps camera coordinates (x right, y down, z
/// forward) to world coordinates.
class Camera {
 public:
  Camera() = default;
  Camera(const Intrinsics& intrinsics, const Pose& camera_to_world);

  const Intrinsics& intrinsics() const { return intr_; }
  const Pose& pose() const { return pose_; }
  Vec3 center() const { return pose_.translation(); }

  /// Continuous image coordinate of a world point, or nullopt when the point
  /// is behind the camera or outside [0,W)x[0,H). Pixel (i,j) spans
  /// [i,i+1)x[j,j+1).
  std::optional<Vec2> project(const Vec3& x) const;

  /// World point at camera-frame depth z along the ray through `pixel`.
  Vec3 backproject(const Vec2& pixel, double z) const;

  /// Unnormalized world ray direction through `pixel` whose camera-frame z
  /// component is 1.
  Vec3 ray_direction(const Vec2& pixel) const;

 private:
  Intrinsics intr_;
  Pose pose_ = Pose::Identity();
  Pose world_to_camera_ = Pose::Identity();
};

/// Checks that `r` is a rotation to within `tol`.
bool is_rotation(const Mat3& r, double tol = 1e-9);

/// Depth image storing camera-frame z in meters; 0 marks an invalid sample.
class RangeImage {
 public:
  RangeImage() = default;
  RangeImage(int width, int height);
  RangeImage(int width, int height, std::vector<float> depth);

  int width() const { return width_; }
  int height() const { return height_; }
  float at(int u, int v) const { return depth_[static_cast<std::size_t>(v) * width_ + u]; }
  void set(int u, int v, float z);
  bool valid(int u, int v) const { return at(u, v) > 0.0f; }
  const std::vector<float>& data() const { return depth_; }

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<float> depth_;
};

/// Dense cubic grid of N^3 values, x fastest.
template <class T>
class Grid3 {
 public:
  Grid3() = default;
  explicit Grid3(int n, T fill = T{})
      : n_(n), data_(static_cast<std::size_t>(n) * n * n, fill) {}

  int resolution() const { return n_; }
  std::size_t size() const { return data_.size(); }
  std::size_t index(int x, int y, int z) const {
    return (static_cast<std::size_t>(z) * n_ + y) * n_ + x;
  }
  T& operator()(int x, int y, int z) { return data_[index(x, y, z)]; }
  const T& operator()(int x, int y, int z) const { return data_[index(x, y, z)]; }
  T& operator()(const Cell& c) { return data_[index(c.x, c.y, c.z)]; }
  const T& operator()(const Cell& c) const { return data_[index(c.x, c.y, c.z)]; }
  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }
  std::vector<T>& data() { return data_; }
  const std::vector<T>& data() const { return data_; }

  friend bool operator==(const Grid3&, const Grid3&) = default;

 private:
  int n_ = 0;
  std::vector<T> data_;
};

}  // namespace octfusion
