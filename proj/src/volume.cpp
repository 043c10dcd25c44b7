#include "octfusion/volume.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace octfusion {

VolumeDomain::VolumeDomain(const Vec3& origin, double voxel_size, int resolution)
    : origin_(origin), voxel_size_(voxel_size), resolution_(resolution) {
  if (!(voxel_size > 0.0) || !std::isfinite(voxel_size)) {
    throw std::invalid_argument("voxel size must be positive");
  }
  if (!is_power_of_two(resolution)) {
    throw std::invalid_argument("resolution must be a power of two, got " +
                                std::to_string(resolution));
  }
  depth_ = 0;
  while ((1 << depth_) < resolution) ++depth_;
}

Vec3 VolumeDomain::voxel_center(const Cell& idx) const {
  if (!contains(idx)) throw std::out_of_range("voxel index outside the volume");
  return origin_ + voxel_size_ * Vec3(idx.x + 0.5, idx.y + 0.5, idx.z + 0.5);
}

std::optional<Cell> VolumeDomain::voxel_index(const Vec3& p) const {
  const Vec3 rel = (p - origin_) / voxel_size_;
  Cell c{static_cast<int>(std::floor(rel.x())), static_cast<int>(std::floor(rel.y())),
         static_cast<int>(std::floor(rel.z()))};
  if (!contains(c)) return std::nullopt;
  return c;
}

bool is_rotation(const Mat3& r, double tol) {
  if (!r.allFinite()) return false;
  if (((r.transpose() * r) - Mat3::Identity()).cwiseAbs().maxCoeff() > tol) return false;
  return std::abs(r.determinant() - 1.0) <= tol;
}

Camera::Camera(const Intrinsics& intrinsics, const Pose& camera_to_world)
    : intr_(intrinsics), pose_(camera_to_world) {
  if (!(intr_.fx > 0.0) || !(intr_.fy > 0.0) || intr_.width <= 0 || intr_.height <= 0) {
    throw std::invalid_argument("camera intrinsics must be positive");
  }
  if (!is_rotation(pose_.linear())) {
    throw std::invalid_argument("camera pose rotation is not orthonormal with det +1");
  }
  world_to_camera_ = pose_.inverse(Eigen::Isometry);
}

std::optional<Vec2> Camera::project(const Vec3& x) const {
  const Vec3 pc = world_to_camera_ * x;
  if (!(pc.z() > 0.0)) return std::nullopt;
  const double u = intr_.fx * pc.x() / pc.z() + intr_.cx;
  const double v = intr_.fy * pc.y() / pc.z() + intr_.cy;
  if (!(u >= 0.0 && u < intr_.width && v >= 0.0 && v < intr_.height)) return std::nullopt;
  return Vec2(u, v);
}

Vec3 Camera::ray_direction(const Vec2& pixel) const {
  const Vec3 dc((pixel.x() - intr_.cx) / intr_.fx, (pixel.y() - intr_.cy) / intr_.fy, 1.0);
  return pose_.linear() * dc;
}

Vec3 Camera::backproject(const Vec2& pixel, double z) const {
  return center() + z * ray_direction(pixel);
}

RangeImage::RangeImage(int width, int height)
    : RangeImage(width, height,
                 std::vector<float>(static_cast<std::size_t>(std::max(width, 0)) *
                                        std::max(height, 0),
                                    0.0f)) {}

RangeImage::RangeImage(int width, int height, std::vector<float> depth)
    : width_(width), height_(height), depth_(std::move(depth)) {
  if (width <= 0 || height <= 0) throw std::invalid_argument("range image must be non-empty");
  if (depth_.size() != static_cast<std::size_t>(width) * height) {
    throw std::invalid_argument("range image buffer does not match its size");
  }
  for (float z : depth_) {
    if (!(z >= 0.0f) || !std::isfinite(z)) {
      throw std::invalid_argument("range image holds a negative or non-finite depth");
    }
  }
}

void RangeImage::set(int u, int v, float z) {
  if (!(z >= 0.0f) || !std::isfinite(z)) {
    throw std::invalid_argument("depth must be finite and non-negative");
  }
  depth_[static_cast<std::size_t>(v) * width_ + u] = z;
}

}  // namespace octfusion
