#include "octfusion/synth.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace octfusion {

RangeImage render_sphere_depth(const Camera& cam, const SphereScene& scene) {
  if (!(scene.radius > 0.0)) throw std::invalid_argument("sphere radius must be positive");
  const Vec3 c = cam.center();
  const Vec3 oc = c - scene.center;
  const double k = oc.squaredNorm() - scene.radius * scene.radius;
  if (k <= 0.0) throw std::invalid_argument("camera lies inside the sphere");

  const Intrinsics& in = cam.intrinsics();
  RangeImage img(in.width, in.height);
  for (int v = 0; v < in.height; ++v) {
    for (int u = 0; u < in.width; ++u) {
      // Direction with camera-frame z = 1, so the ray parameter is the depth.
      const Vec3 d = cam.ray_direction(Vec2(u + 0.5, v + 0.5));
      const double a = d.squaredNorm();
      const double b = oc.dot(d);
      const double disc = b * b - a * k;
      if (disc < 0.0) continue;
      // Numerically stable smaller root of a t^2 + 2 b t + k.
      const double q = -b + (b < 0.0 ? std::sqrt(disc) : -std::sqrt(disc));
      const double t = b < 0.0 ? k / q : q / a;
      if (t > 0.0) img.set(u, v, static_cast<float>(t));
    }
  }
  return img;
}

std::vector<Vec3> fibonacci_directions(int n) {
  if (n <= 0) throw std::invalid_argument("direction count must be positive");
  std::vector<Vec3> dirs;
  dirs.reserve(static_cast<std::size_t>(n));
  const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
  for (int i = 0; i < n; ++i) {
    const double z = 1.0 - (2.0 * i + 1.0) / n;
    const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
    const double phi = golden * i;
    dirs.emplace_back(r * std::cos(phi), r * std::sin(phi), z);
  }
  return dirs;
}

Pose look_at(const Vec3& eye, const Vec3& target) {
  const Vec3 forward = (target - eye).normalized();
  Vec3 up = Vec3::UnitZ();
  if (std::abs(forward.dot(up)) > 0.9) up = Vec3::UnitY();
  const Vec3 right = forward.cross(up).normalized();
  const Vec3 down = forward.cross(right);
  Pose pose = Pose::Identity();
  pose.linear().col(0) = right;
  pose.linear().col(1) = down;
  pose.linear().col(2) = forward;
  pose.translation() = eye;
  return pose;
}

SphereDatasetSpec SphereDatasetSpec::full_scale() {
  SphereDatasetSpec s;
  s.domain = VolumeDomain(Vec3(-0.128, -0.128, -0.128), 0.001, 256);
  s.intrinsics = Intrinsics{2000.0, 2000.0, 512.0, 512.0, 1024, 1024};
  return s;
}

void SphereDatasetSpec::validate(double margin) const {
  if (views <= 0) throw std::invalid_argument("views must be positive");
  if (!(scene.radius > 0.0)) throw std::invalid_argument("radius must be positive");
  if (!(orbit_radius > scene.radius)) {
    throw std::invalid_argument("orbit radius must exceed the sphere radius");
  }
  const Vec3 lo = domain.origin();
  const Vec3 hi = lo + Vec3::Constant(domain.extent());
  const double m = scene.radius + margin;
  for (int k = 0; k < 3; ++k) {
    if (scene.center[k] - m < lo[k] || scene.center[k] + m > hi[k]) {
      throw std::invalid_argument("sphere plus margin does not fit in the volume");
    }
  }
}

std::vector<Camera> orbit_cameras(const SphereDatasetSpec& spec) {
  std::vector<Camera> cams;
  for (const Vec3& d : fibonacci_directions(spec.views)) {
    const Vec3 eye = spec.scene.center + spec.orbit_radius * d;
    cams.emplace_back(spec.intrinsics, look_at(eye, spec.scene.center));
  }
  return cams;
}

}  // namespace octfusion
