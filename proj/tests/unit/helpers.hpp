#pragma once

#include <filesystem>
#include <random>
#include <string>

#include "octfusion/volume.hpp"

namespace testing {

/// Fresh empty directory under the system temp path.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("octfusion_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline octfusion::Grid3<float> random_grid(int n, std::uint32_t seed, float lo = -1.0f,
                                           float hi = 1.0f) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<float> dist(lo, hi);
  octfusion::Grid3<float> g(n);
  for (auto& v : g.data()) v = dist(rng);
  return g;
}

/// Random field that is constant on aligned blocks of `block` cells.
inline octfusion::Grid3<float> blocky_grid(int n, int block, std::uint32_t seed) {
  const auto coarse = random_grid(n / block, seed);
  octfusion::Grid3<float> g(n);
  for (int z = 0; z < n; ++z)
    for (int y = 0; y < n; ++y)
      for (int x = 0; x < n; ++x) g(x, y, z) = coarse(x / block, y / block, z / block);
  return g;
}

/// Signed distance to a sphere, sampled at the voxel centers of `dom`.
inline octfusion::Grid3<float> sphere_sdf(const octfusion::VolumeDomain& dom,
                                          const octfusion::Vec3& c, double r) {
  const int n = dom.resolution();
  octfusion::Grid3<float> g(n);
  for (int z = 0; z < n; ++z)
    for (int y = 0; y < n; ++y)
      for (int x = 0; x < n; ++x)
        g(x, y, z) = static_cast<float>((dom.voxel_center({x, y, z}) - c).norm() - r);
  return g;
}

}  // namespace testing
