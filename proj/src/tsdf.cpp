#include "octfusion/tsdf.hpp"

#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

namespace octfusion {

std::optional<double> signed_distance(const Vec3& x, const RangeImage& img, const Camera& cam) {
  const auto pix = cam.project(x);
  if (!pix) return std::nullopt;
  const int u = static_cast<int>(pix->x());
  const int v = static_cast<int>(pix->y());
  if (u >= img.width() || v >= img.height()) return std::nullopt;
  const double z = img.at(u, v);
  if (!(z > 0.0)) return std::nullopt;
  const Vec3 surface = cam.backproject(Vec2(u + 0.5, v + 0.5), z);
  const Vec3 c = cam.center();
  return (surface - c).norm() - (x - c).norm();
}

double truncate(double phi, double delta) {
  if (std::abs(phi) > delta) return phi > 0.0 ? 1.0 : -1.0;
  return phi / delta;
}

int visibility_weight(std::optional<double> phi, double eta) {
  if (!phi || *phi < -eta) return 0;
  return 1;
}

ViewTsdf build_view_tsdf(const RangeImage& img, const Camera& cam, const VolumeDomain& dom,
                         double delta, double eta) {
  if (!(delta > 0.0) || !(eta > 0.0)) {
    throw std::invalid_argument("delta and eta must be positive");
  }
  const int n = dom.resolution();
  ViewTsdf out{Grid3<float>(n, 1.0f), Grid3<float>(n, 0.0f), delta, eta};
  for (int z = 0; z < n; ++z) {
    for (int y = 0; y < n; ++y) {
      for (int x = 0; x < n; ++x) {
        const Cell c{x, y, z};
        const auto phi = signed_distance(dom.voxel_center(c), img, cam);
        if (!phi) continue;
        const int w = visibility_weight(phi, eta);
        out.w(c) = static_cast<float>(w);
        out.f(c) = w == 0 ? -1.0f : static_cast<float>(truncate(*phi, delta));
      }
    }
  }
  return out;
}

static_assert(std::endian::native == std::endian::little,
              "grid I/O assumes a little-endian host");

void write_grid(const std::filesystem::path& path, const Grid3<float>& grid, GridKind kind) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  const std::int32_t n = grid.resolution();
  const std::array<std::int32_t, 5> header{n, n, n, static_cast<std::int32_t>(kind), 0};
  out.write(reinterpret_cast<const char*>(header.data()), sizeof(header));
  out.write(reinterpret_cast<const char*>(grid.data().data()),
            static_cast<std::streamsize>(grid.size() * sizeof(float)));
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

Grid3<float> read_grid(const std::filesystem::path& path, GridKind* kind) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::array<std::int32_t, 5> header{};
  in.read(reinterpret_cast<char*>(header.data()), sizeof(header));
  if (!in || header[0] != header[1] || header[1] != header[2] || !is_power_of_two(header[0])) {
    throw std::runtime_error("malformed grid header in " + path.string());
  }
  Grid3<float> grid(header[0]);
  in.read(reinterpret_cast<char*>(grid.data().data()),
          static_cast<std::streamsize>(grid.size() * sizeof(float)));
  if (!in) throw std::runtime_error("truncated grid file " + path.string());
  if (kind) *kind = static_cast<GridKind>(header[3]);
  return grid;
}

}  // namespace octfusion
