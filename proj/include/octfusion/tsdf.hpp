#pragma once

#include <filesystem>
#include <optional>

#include "octfusion/volume.hpp"

namespace octfusion {

/// Dense truncated signed distance field of one view plus its binary
/// observation weight.
///
/// Stored values where w = 0:
///   - behind the surface by more than eta: f = -1 (assumed solid);
///   - not observed at all (outside the image, invalid depth): f = +1.
/// Neither is read by the data term; they only seed unobserved space when
/// the iterate is initialized.
struct ViewTsdf {
  Grid3<float> f;
  Grid3<float> w;
  double delta = 0.0;
  double eta = 0.0;

  /// Bytes held by the two float grids.
  std::size_t footprint_bytes() const { return (f.size() + w.size()) * sizeof(float); }
};

/// Line-of-sight signed distance D(pi(x)) - |x - C|, positive in front of
/// the observed surface. The measured depth is looked up at the nearest pixel
/// and converted to the Euclidean distance of the backprojected pixel-center
/// point. nullopt when x does not project onto a valid depth sample.
std::optional<double> signed_distance(const Vec3& x, const RangeImage& img, const Camera& cam);

/// sgn(phi) when |phi| > delta, phi / delta otherwise.
double truncate(double phi, double delta);

/// 0 for unobserved points and for points more than eta behind the surface.
int visibility_weight(std::optional<double> phi, double eta);

ViewTsdf build_view_tsdf(const RangeImage& img, const Camera& cam, const VolumeDomain& dom,
                         double delta, double eta);

/// Raw little-endian float32 dump of a dense grid, preceded by five int32
/// values: N, N, N, kind, reserved.
enum class GridKind : std::int32_t { kTsdf = 0, kWeight = 1, kIterate = 2 };
void write_grid(const std::filesystem::path& path, const Grid3<float>& grid, GridKind kind);
Grid3<float> read_grid(const std::filesystem::path& path, GridKind* kind = nullptr);

}  // namespace octfusion
