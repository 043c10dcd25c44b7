#pragma once

#include <filesystem>
#include <vector>

#include "octfusion/volume.hpp"

namespace octfusion {

struct SphereScene {
  Vec3 center = Vec3::Zero();
  double radius = 0.06;
};

/// Exact ray casting through each pixel center; depth is the camera-frame z
/// of the nearest hit, 0 where the ray misses. Throws std::invalid_argument
/// when the camera center is inside the sphere.
RangeImage render_sphere_depth(const Camera& cam, const SphereScene& scene);

/// `n` near-uniform unit directions on a Fibonacci spiral.
std::vector<Vec3> fibonacci_directions(int n);

/// Camera-to-world pose at `eye` looking at `target` (x right, y down,
/// z forward).
Pose look_at(const Vec3& eye, const Vec3& target);

struct SphereDatasetSpec {
  int views = 31;
  double orbit_radius = 0.3;
  SphereScene scene;
  Intrinsics intrinsics{1000.0, 1000.0, 256.0, 256.0, 512, 512};
  VolumeDomain domain{Vec3(-0.128, -0.128, -0.128), 0.002, 128};

  /// Full-scale variant: 1 mm voxels at N = 256.
  static SphereDatasetSpec full_scale();
  /// Throws std::invalid_argument on inconsistent settings.
  void validate(double margin = 0.0) const;
};

std::vector<Camera> orbit_cameras(const SphereDatasetSpec& spec);

}  // namespace octfusion
