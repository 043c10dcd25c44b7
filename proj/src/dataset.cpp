#include "octfusion/dataset.hpp"

#include <cstdio>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>
#include <string>

namespace octfusion {

namespace fs = std::filesystem;

namespace {

std::string frame_name(int i, const char* suffix) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "frame_%04d%s", i, suffix);
  return buf;
}

std::ifstream open_in(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return in;
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << std::setprecision(17);
  return out;
}

template <class... T>
void read_fields(std::istream& in, const fs::path& path, T&... v) {
  if (!(in >> ... >> v)) throw std::runtime_error("malformed " + path.string());
}

}  // namespace

void write_pfm(const fs::path& path, const RangeImage& img) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << "Pf\n" << img.width() << ' ' << img.height() << "\n-1\n";
  // Rows are stored bottom to top.
  for (int v = img.height() - 1; v >= 0; --v) {
    out.write(reinterpret_cast<const char*>(img.data().data() + static_cast<std::size_t>(v) * img.width()),
              static_cast<std::streamsize>(img.width() * sizeof(float)));
  }
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

RangeImage read_pfm(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::string magic;
  int w = 0, h = 0;
  double scale = 0.0;
  in >> magic >> w >> h >> scale;
  if (!in || magic != "Pf" || w <= 0 || h <= 0) {
    throw std::runtime_error("unsupported PFM header in " + path.string());
  }
  if (scale >= 0.0) throw std::runtime_error("big-endian PFM is not supported: " + path.string());
  in.get();
  std::vector<float> data(static_cast<std::size_t>(w) * h);
  for (int v = h - 1; v >= 0; --v) {
    in.read(reinterpret_cast<char*>(data.data() + static_cast<std::size_t>(v) * w),
            static_cast<std::streamsize>(w * sizeof(float)));
  }
  if (!in) throw std::runtime_error("truncated PFM " + path.string());
  return RangeImage(w, h, std::move(data));
}

void write_pose(const fs::path& path, const Pose& pose) {
  auto out = open_out(path);
  const Eigen::Matrix4d m = pose.matrix();
  for (int r = 0; r < 4; ++r) {
    out << m(r, 0) << ' ' << m(r, 1) << ' ' << m(r, 2) << ' ' << m(r, 3) << '\n';
  }
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

Pose read_pose(const fs::path& path) {
  auto in = open_in(path);
  Eigen::Matrix4d m;
  for (int r = 0; r < 4; ++r) {
    for (int c = 0; c < 4; ++c) read_fields(in, path, m(r, c));
  }
  if (m.row(3) != Eigen::RowVector4d(0, 0, 0, 1)) {
    throw std::runtime_error("pose is not rigid: " + path.string());
  }
  Pose p;
  p.matrix() = m;
  return p;
}

SphereScene read_ground_truth(const fs::path& path) {
  auto in = open_in(path);
  SphereScene s;
  read_fields(in, path, s.center.x(), s.center.y(), s.center.z(), s.radius);
  return s;
}

Dataset load_dataset(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw std::runtime_error("no dataset directory at " + dir.string());
  Dataset ds;
  {
    const fs::path p = dir / "intrinsics.txt";
    auto in = open_in(p);
    Intrinsics& k = ds.intrinsics;
    read_fields(in, p, k.fx, k.fy, k.cx, k.cy, k.width, k.height);
  }
  {
    const fs::path p = dir / "domain.txt";
    auto in = open_in(p);
    double ox, oy, oz, sv;
    int n;
    read_fields(in, p, ox, oy, oz, sv, n);
    try {
      ds.domain = VolumeDomain(Vec3(ox, oy, oz), sv, n);
    } catch (const std::invalid_argument& e) {
      throw std::runtime_error(p.string() + ": " + e.what());
    }
  }
  for (int i = 0; fs::exists(dir / frame_name(i, ".pfm")); ++i) {
    RangeImage img = read_pfm(dir / frame_name(i, ".pfm"));
    if (img.width() != ds.intrinsics.width || img.height() != ds.intrinsics.height) {
      throw std::runtime_error(frame_name(i, ".pfm") + " does not match the intrinsics");
    }
    const fs::path pose_path = dir / frame_name(i, ".pose.txt");
    try {
      ds.cameras.emplace_back(ds.intrinsics, read_pose(pose_path));
    } catch (const std::invalid_argument& e) {
      throw std::runtime_error(pose_path.string() + ": " + e.what());
    }
    ds.frames.push_back(std::move(img));
  }
  if (ds.frames.empty()) throw std::runtime_error("no frames in " + dir.string());
  if (fs::exists(dir / "ground_truth.txt")) ds.ground_truth = read_ground_truth(dir / "ground_truth.txt");
  return ds;
}

void write_dataset(const fs::path& dir, const Dataset& ds) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create " + dir.string() + ": " + ec.message());
  {
    auto out = open_out(dir / "intrinsics.txt");
    const Intrinsics& k = ds.intrinsics;
    out << k.fx << ' ' << k.fy << ' ' << k.cx << ' ' << k.cy << ' ' << k.width << ' ' << k.height
        << '\n';
  }
  {
    auto out = open_out(dir / "domain.txt");
    const Vec3& o = ds.domain.origin();
    out << o.x() << ' ' << o.y() << ' ' << o.z() << ' ' << ds.domain.voxel_size() << ' '
        << ds.domain.resolution() << '\n';
  }
  for (std::size_t i = 0; i < ds.frames.size(); ++i) {
    write_pfm(dir / frame_name(static_cast<int>(i), ".pfm"), ds.frames[i]);
    write_pose(dir / frame_name(static_cast<int>(i), ".pose.txt"), ds.cameras[i].pose());
  }
  if (ds.ground_truth) {
    auto out = open_out(dir / "ground_truth.txt");
    const SphereScene& s = *ds.ground_truth;
    out << s.center.x() << ' ' << s.center.y() << ' ' << s.center.z() << ' ' << s.radius << '\n';
  }
}

Dataset make_sphere_dataset(const fs::path& out_dir, const SphereDatasetSpec& spec) {
  spec.validate();
  Dataset ds;
  ds.intrinsics = spec.intrinsics;
  ds.domain = spec.domain;
  ds.cameras = orbit_cameras(spec);
  for (const Camera& cam : ds.cameras) ds.frames.push_back(render_sphere_depth(cam, spec.scene));
  ds.ground_truth = spec.scene;
  write_dataset(out_dir, ds);
  return ds;
}

}  // namespace octfusion
