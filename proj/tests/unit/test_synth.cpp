#include <doctest.h>

#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include "helpers.hpp"
#include "octfusion/dataset.hpp"
#include "octfusion/synth.hpp"

using namespace octfusion;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

}  // namespace

TEST_CASE("central ray hits the near side of the sphere") {
  const SphereScene scene{Vec3(0.01, 0.0, 0.0), 0.06};
  const Intrinsics k{50, 50, 32, 32, 64, 64};
  const Pose pose = look_at(Vec3(0.01, 0.0, -0.3), scene.center);
  const Camera cam(k, pose);
  const RangeImage img = render_sphere_depth(cam, scene);
  // Pixel (32, 32) has its center half a pixel off the axis.
  const Vec3 dir = cam.ray_direction(Vec2(32.5, 32.5));
  const double t = img.at(32, 32);
  const Vec3 hit = cam.center() + t * dir;
  CHECK(std::abs((hit - scene.center).norm() - scene.radius) < 1e-6);
  CHECK(t == doctest::Approx(0.3 - 0.06).epsilon(1e-3));
  CHECK_FALSE(img.valid(0, 0));
}

TEST_CASE("grazing rays hit the tangent point") {
  // With the sphere at distance d and radius r, the ray at angle asin(r / d)
  // touches it at distance sqrt(d^2 - r^2).
  const double d = 0.3;
  const double r = 0.06;
  const double tan_angle = r / std::sqrt(d * d - r * r);
  const double f = 1000.0;
  // Put a pixel center exactly on the tangent ray, slightly inside it.
  const double offset = f * tan_angle * (1.0 - 1e-9);
  const Intrinsics k{f, f, 100.5 - offset, 100.5, 400, 201};
  const Camera cam(k, look_at(Vec3(0, 0, -d), Vec3::Zero()));
  const RangeImage img = render_sphere_depth(cam, SphereScene{Vec3::Zero(), r});
  REQUIRE(img.valid(100, 100));
  const double z = img.at(100, 100);
  const double euclid = z * cam.ray_direction(Vec2(100.5, 100.5)).norm();
  CHECK(euclid == doctest::Approx(std::sqrt(d * d - r * r)).epsilon(1e-3));
}

TEST_CASE("camera inside the sphere is rejected") {
  const Camera cam(Intrinsics{100, 100, 8, 8, 16, 16}, look_at(Vec3(0.01, 0, 0), Vec3(1, 0, 0)));
  CHECK_THROWS_AS(render_sphere_depth(cam, SphereScene{}), std::invalid_argument);
}

TEST_CASE("look-at poses") {
  for (const Vec3& eye : {Vec3(0.3, 0, 0), Vec3(0, 0, 0.3), Vec3(0, 0, -0.3), Vec3(0.1, -0.2, 0.15)}) {
    const Pose p = look_at(eye, Vec3::Zero());
    CHECK(is_rotation(p.linear()));
    CHECK((p.translation() - eye).norm() < 1e-15);
    CHECK((p.linear() * Vec3::UnitZ() + eye.normalized()).norm() < 1e-12);
  }
}

TEST_CASE("fibonacci directions are unit and spread out") {
  const auto dirs = fibonacci_directions(31);
  REQUIRE(dirs.size() == 31);
  Vec3 sum = Vec3::Zero();
  for (const Vec3& d : dirs) {
    CHECK(d.norm() == doctest::Approx(1.0));
    sum += d;
  }
  CHECK(sum.norm() < 1.0);
}

TEST_CASE("31 orbit views cover the whole sphere") {
  const SphereDatasetSpec spec;
  const auto cams = orbit_cameras(spec);
  REQUIRE(cams.size() == 31);
  std::vector<RangeImage> imgs;
  for (const Camera& c : cams) imgs.push_back(render_sphere_depth(c, spec.scene));

  std::mt19937 rng(17);
  std::normal_distribution<double> g;
  int uncovered = 0;
  for (int i = 0; i < 10000; ++i) {
    const Vec3 p = spec.scene.center + spec.scene.radius * Vec3(g(rng), g(rng), g(rng)).normalized();
    bool seen = false;
    for (std::size_t k = 0; k < cams.size() && !seen; ++k) {
      const auto px = cams[k].project(p);
      if (!px) continue;
      const int u = static_cast<int>(px->x());
      const int v = static_cast<int>(px->y());
      if (!imgs[k].valid(u, v)) continue;
      // Visible when the depth at the pixel matches the point's own depth.
      const double z = (cams[k].pose().inverse() * p).z();
      seen = std::abs(imgs[k].at(u, v) - z) < 0.002;
    }
    uncovered += !seen;
  }
  CHECK(uncovered == 0);
}

TEST_CASE("dataset spec validation") {
  SphereDatasetSpec spec;
  CHECK_NOTHROW(spec.validate(0.024));
  spec.views = 0;
  CHECK_THROWS_AS(spec.validate(), std::invalid_argument);
  spec = SphereDatasetSpec{};
  spec.orbit_radius = 0.05;
  CHECK_THROWS_AS(spec.validate(), std::invalid_argument);
  spec = SphereDatasetSpec{};
  spec.scene.radius = 0.2;
  CHECK_THROWS_AS(spec.validate(), std::invalid_argument);
  const auto full = SphereDatasetSpec::full_scale();
  CHECK(full.domain.resolution() == 256);
  CHECK(full.domain.voxel_size() == 0.001);
}

TEST_CASE("pfm and pose files round trip") {
  const auto dir = testing::scratch_dir("pfm");
  std::vector<float> depth(6 * 4);
  for (std::size_t i = 0; i < depth.size(); ++i) depth[i] = i % 3 == 0 ? 0.0f : 0.1f * i;
  const RangeImage img(6, 4, depth);
  write_pfm(dir / "a.pfm", img);
  const RangeImage back = read_pfm(dir / "a.pfm");
  CHECK(back.width() == 6);
  CHECK(back.height() == 4);
  CHECK(back.data() == img.data());
  CHECK(slurp(dir / "a.pfm").rfind("Pf\n6 4\n-1", 0) == 0);

  const Pose p = look_at(Vec3(0.1, 0.2, -0.3), Vec3::Zero());
  write_pose(dir / "p.txt", p);
  CHECK(read_pose(dir / "p.txt").matrix() == p.matrix());
  std::ofstream(dir / "bad.txt") << "1 0 0 0\n0 1 0 0\n0 0 1 0\n1 1 1 1\n";
  CHECK_THROWS_AS(read_pose(dir / "bad.txt"), std::runtime_error);
  CHECK_THROWS_AS(read_pfm(dir / "missing.pfm"), std::runtime_error);
}

TEST_CASE("sphere dataset on disk") {
  const auto dir = testing::scratch_dir("dataset");
  SphereDatasetSpec spec;
  spec.views = 3;
  spec.intrinsics = Intrinsics{250, 250, 64, 64, 128, 128};
  spec.domain = VolumeDomain(Vec3::Constant(-0.128), 0.008, 32);
  const Dataset ds = make_sphere_dataset(dir / "a", spec);
  CHECK(ds.frames.size() == 3);
  CHECK(std::filesystem::exists(dir / "a" / "frame_0002.pfm"));
  CHECK(std::filesystem::exists(dir / "a" / "ground_truth.txt"));

  const Dataset back = load_dataset(dir / "a");
  REQUIRE(back.frames.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(back.frames[i].data() == ds.frames[i].data());
    CHECK(back.cameras[i].pose().matrix().isApprox(ds.cameras[i].pose().matrix(), 1e-15));
  }
  CHECK(back.domain.resolution() == 32);
  CHECK(back.domain.voxel_size() == 0.008);
  CHECK(back.intrinsics.fx == 250);
  REQUIRE(back.ground_truth.has_value());
  CHECK(back.ground_truth->radius == spec.scene.radius);

  make_sphere_dataset(dir / "b", spec);
  for (const char* name : {"frame_0000.pfm", "frame_0001.pose.txt", "domain.txt", "intrinsics.txt"}) {
    CHECK(slurp(dir / "a" / name) == slurp(dir / "b" / name));
  }
  CHECK_THROWS_AS(load_dataset(dir / "nothing"), std::runtime_error);
}
