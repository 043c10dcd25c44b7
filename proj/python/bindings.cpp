#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "octfusion/cli.hpp"
#include "octfusion/dataset.hpp"
#include "octfusion/fusion.hpp"
#include "octfusion/mesh.hpp"
#include "octfusion/pipeline.hpp"
#include "octfusion/synth.hpp"

namespace py = pybind11;
using namespace octfusion;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;
using DoubleArray = py::array_t<double, py::array::c_style | py::array::forcecast>;

// Grids map to arrays indexed [z, y, x].
py::array_t<float> to_numpy(const Grid3<float>& g) {
  const py::ssize_t n = g.resolution();
  py::array_t<float> a({n, n, n});
  std::copy(g.data().begin(), g.data().end(), a.mutable_data());
  return a;
}

Grid3<float> to_grid(const FloatArray& a) {
  if (a.ndim() != 3 || a.shape(0) != a.shape(1) || a.shape(1) != a.shape(2)) {
    throw std::invalid_argument("expected a cubic (N, N, N) array");
  }
  Grid3<float> g(static_cast<int>(a.shape(0)));
  std::copy(a.data(), a.data() + a.size(), g.data().begin());
  return g;
}

py::array_t<float> image_to_numpy(const RangeImage& img) {
  py::array_t<float> a({img.height(), img.width()});
  std::copy(img.data().begin(), img.data().end(), a.mutable_data());
  return a;
}

RangeImage numpy_to_image(const FloatArray& a) {
  if (a.ndim() != 2) throw std::invalid_argument("expected an (H, W) depth array");
  return RangeImage(static_cast<int>(a.shape(1)), static_cast<int>(a.shape(0)),
                    std::vector<float>(a.data(), a.data() + a.size()));
}

Pose to_pose(const DoubleArray& m) {
  if (m.ndim() != 2 || m.shape(0) != 4 || m.shape(1) != 4) {
    throw std::invalid_argument("expected a 4x4 pose matrix");
  }
  Eigen::Matrix4d mat;
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) mat(r, c) = m.at(r, c);
  Pose p;
  p.matrix() = mat;
  return p;
}

py::array_t<double> pose_to_numpy(const Pose& p) {
  py::array_t<double> a({4, 4});
  auto v = a.mutable_unchecked<2>();
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) v(r, c) = p.matrix()(r, c);
  return a;
}

Vec3 to_vec3(const std::array<double, 3>& v) { return Vec3(v[0], v[1], v[2]); }
std::array<double, 3> from_vec3(const Vec3& v) { return {v.x(), v.y(), v.z()}; }

py::array_t<double> vertices_to_numpy(const TriMesh& m) {
  py::array_t<double> a({static_cast<py::ssize_t>(m.vertices.size()), py::ssize_t{3}});
  auto v = a.mutable_unchecked<2>();
  for (std::size_t i = 0; i < m.vertices.size(); ++i)
    for (int k = 0; k < 3; ++k) v(i, k) = m.vertices[i][k];
  return a;
}

py::array_t<int> triangles_to_numpy(const TriMesh& m) {
  py::array_t<int> a({static_cast<py::ssize_t>(m.triangles.size()), py::ssize_t{3}});
  auto v = a.mutable_unchecked<2>();
  for (std::size_t i = 0; i < m.triangles.size(); ++i)
    for (int k = 0; k < 3; ++k) v(i, k) = m.triangles[i][k];
  return a;
}

TriMesh make_mesh(const DoubleArray& vertices, const py::array_t<int, py::array::c_style | py::array::forcecast>& triangles) {
  if (vertices.ndim() != 2 || vertices.shape(1) != 3) throw std::invalid_argument("vertices must be (n, 3)");
  TriMesh m;
  auto v = vertices.unchecked<2>();
  for (py::ssize_t i = 0; i < v.shape(0); ++i) m.vertices.emplace_back(v(i, 0), v(i, 1), v(i, 2));
  if (triangles.size() > 0) {
    if (triangles.ndim() != 2 || triangles.shape(1) != 3) throw std::invalid_argument("triangles must be (m, 3)");
    auto t = triangles.unchecked<2>();
    for (py::ssize_t i = 0; i < t.shape(0); ++i) m.triangles.push_back({t(i, 0), t(i, 1), t(i, 2)});
  }
  if (!m.valid()) throw std::invalid_argument("triangle indices out of range");
  return m;
}

py::dict stats_dict(const IterationStats& s) {
  py::dict d;
  d["iteration"] = s.iteration;
  d["energy"] = s.energy;
  d["node_count"] = s.node_count;
  d["memory_bytes"] = s.memory_bytes;
  d["splits"] = s.splits;
  d["joins"] = s.joins;
  d["mixed_sign_joins"] = s.mixed_sign_joins;
  d["wall_ms"] = s.wall_ms;
  return d;
}

py::list stats_list(const std::vector<IterationStats>& stats) {
  py::list l;
  for (const auto& s : stats) l.append(stats_dict(s));
  return l;
}

}  // namespace

PYBIND11_MODULE(_octfusion, m) {
  m.doc() = "Octree-based variational range data fusion";

  py::class_<VolumeDomain>(m, "VolumeDomain")
      .def(py::init([](const std::array<double, 3>& origin, double voxel_size, int resolution) {
             return VolumeDomain(to_vec3(origin), voxel_size, resolution);
           }),
           py::arg("origin"), py::arg("voxel_size"), py::arg("resolution"))
      .def_property_readonly("origin", [](const VolumeDomain& d) { return from_vec3(d.origin()); })
      .def_property_readonly("voxel_size", &VolumeDomain::voxel_size)
      .def_property_readonly("resolution", &VolumeDomain::resolution)
      .def_property_readonly("depth", &VolumeDomain::depth)
      .def_property_readonly("extent", &VolumeDomain::extent)
      .def("voxel_center",
           [](const VolumeDomain& d, int x, int y, int z) { return from_vec3(d.voxel_center({x, y, z})); })
      .def("voxel_index", [](const VolumeDomain& d, const std::array<double, 3>& p) {
        std::optional<std::array<int, 3>> out;
        if (const auto c = d.voxel_index(to_vec3(p))) out = std::array<int, 3>{c->x, c->y, c->z};
        return out;
      });

  py::class_<Intrinsics>(m, "Intrinsics")
      .def(py::init([](double fx, double fy, double cx, double cy, int width, int height) {
             return Intrinsics{fx, fy, cx, cy, width, height};
           }),
           py::arg("fx"), py::arg("fy"), py::arg("cx"), py::arg("cy"), py::arg("width"), py::arg("height"))
      .def_readwrite("fx", &Intrinsics::fx)
      .def_readwrite("fy", &Intrinsics::fy)
      .def_readwrite("cx", &Intrinsics::cx)
      .def_readwrite("cy", &Intrinsics::cy)
      .def_readwrite("width", &Intrinsics::width)
      .def_readwrite("height", &Intrinsics::height);

  py::class_<Camera>(m, "Camera")
      .def(py::init([](const Intrinsics& k, const DoubleArray& pose) { return Camera(k, to_pose(pose)); }),
           py::arg("intrinsics"), py::arg("camera_to_world"))
      .def_property_readonly("intrinsics", &Camera::intrinsics)
      .def_property_readonly("pose", [](const Camera& c) { return pose_to_numpy(c.pose()); })
      .def_property_readonly("center", [](const Camera& c) { return from_vec3(c.center()); })
      .def("project", [](const Camera& c, const std::array<double, 3>& x) {
        std::optional<std::array<double, 2>> out;
        if (const auto p = c.project(to_vec3(x))) out = std::array<double, 2>{p->x(), p->y()};
        return out;
      });

  py::class_<FusionParams>(m, "FusionParams")
      .def(py::init<>())
      .def_readwrite("delta", &FusionParams::delta)
      .def_readwrite("eta", &FusionParams::eta)
      .def_readwrite("lambda_", &FusionParams::lambda)
      .def_readwrite("epsilon", &FusionParams::epsilon)
      .def_readwrite("epsilon_tv", &FusionParams::epsilon_tv)
      .def_readwrite("gamma", &FusionParams::gamma)
      .def_readwrite("step", &FusionParams::step)
      .def_readwrite("halve_every", &FusionParams::halve_every)
      .def_readwrite("iterations", &FusionParams::iterations)
      .def_readwrite("tau", &FusionParams::tau)
      .def_readwrite("tau_split", &FusionParams::tau_split)
      .def_readwrite("tau_join", &FusionParams::tau_join)
      .def_readwrite("max_depth", &FusionParams::max_depth)
      .def_readwrite("clamp", &FusionParams::clamp)
      .def("validate", &FusionParams::validate)
      .def("step_at", &FusionParams::step_at);

  py::class_<Octree>(m, "Octree")
      .def_property_readonly("max_depth", &Octree::max_depth)
      .def_property_readonly("node_count", &Octree::node_count)
      .def_property_readonly("leaf_count", &Octree::leaf_count)
      .def_property_readonly("memory_bytes", &Octree::memory_bytes)
      .def("lookup_at_level",
           [](const Octree& t, int x, int y, int z, int level) { return t.lookup_at_level({x, y, z}, level); })
      .def("densify", [](const Octree& t) { return to_numpy(densify(t)); })
      .def("densify_weight", [](const Octree& t) { return to_numpy(densify_weight(t)); })
      .def("quantization_error",
           [](const Octree& t, const FloatArray& dense) {
             const QuantizationError q = quantization_error(t, to_grid(dense));
             return py::make_tuple(q.sum, q.volume_weighted);
           })
      .def("dump", [](const Octree& t) {
        std::ostringstream s;
        write_tree(s, t);
        return s.str();
      });

  m.def("build_octree",
        [](const FloatArray& f, std::optional<FloatArray> w, double tau) {
          const Grid3<float> fg = to_grid(f);
          int depth = 0;
          while ((1 << depth) < fg.resolution()) ++depth;
          if (w) {
            const Grid3<float> wg = to_grid(*w);
            return build_octree(fg, &wg, tau, depth);
          }
          return build_octree(fg, nullptr, tau, depth);
        },
        py::arg("f"), py::arg("w") = py::none(), py::arg("tau") = 0.1,
        "Spread-based octree of a cubic (N, N, N) field.");

  m.def("build_view_tsdf",
        [](const FloatArray& depth, const Camera& cam, const VolumeDomain& dom, double delta, double eta) {
          const ViewTsdf v = build_view_tsdf(numpy_to_image(depth), cam, dom, delta, eta);
          return py::make_tuple(to_numpy(v.f), to_numpy(v.w));
        },
        py::arg("depth"), py::arg("camera"), py::arg("domain"), py::arg("delta"), py::arg("eta"),
        "Truncated signed distance f and weight w of one depth image.");

  m.def("render_sphere_depth",
        [](const Camera& cam, const std::array<double, 3>& center, double radius) {
          return image_to_numpy(render_sphere_depth(cam, SphereScene{to_vec3(center), radius}));
        },
        py::arg("camera"), py::arg("center"), py::arg("radius"));

  m.def("look_at",
        [](const std::array<double, 3>& eye, const std::array<double, 3>& target) {
          return pose_to_numpy(look_at(to_vec3(eye), to_vec3(target)));
        },
        py::arg("eye"), py::arg("target"));

  m.def("make_sphere_dataset",
        [](const std::filesystem::path& out, int views, double orbit_radius, double radius,
           std::optional<VolumeDomain> domain, std::optional<Intrinsics> intrinsics) {
          SphereDatasetSpec spec;
          spec.views = views;
          spec.orbit_radius = orbit_radius;
          spec.scene.radius = radius;
          if (domain) spec.domain = *domain;
          if (intrinsics) spec.intrinsics = *intrinsics;
          make_sphere_dataset(out, spec);
        },
        py::arg("out_dir"), py::arg("views") = 31, py::arg("orbit_radius") = 0.3,
        py::arg("radius") = 0.06, py::arg("domain") = py::none(), py::arg("intrinsics") = py::none(),
        "Renders the orbiting-camera sphere protocol to disk.");

  py::class_<Dataset>(m, "Dataset")
      .def_readonly("intrinsics", &Dataset::intrinsics)
      .def_readonly("domain", &Dataset::domain)
      .def_readonly("cameras", &Dataset::cameras)
      .def_property_readonly("frames",
                             [](const Dataset& d) {
                               py::list l;
                               for (const auto& f : d.frames) l.append(image_to_numpy(f));
                               return l;
                             })
      .def_property_readonly("ground_truth", [](const Dataset& d) {
        std::optional<py::tuple> out;
        if (d.ground_truth) out = py::make_tuple(from_vec3(d.ground_truth->center), d.ground_truth->radius);
        return out;
      });
  m.def("load_dataset", &load_dataset, py::arg("path"));

  m.def("fuse",
        [](const Dataset& ds, FusionParams params, const std::string& mode) {
          if (mode != "octree" && mode != "dense" && mode != "both") {
            throw std::invalid_argument("mode must be octree, dense or both");
          }
          params.max_depth = ds.domain.depth();
          params.validate();
          const bool run_octree = mode != "dense";
          const bool run_dense = mode != "octree";
          PreparedViews pv;
          {
            py::gil_scoped_release release;
            pv = prepare_views(ds, params, run_dense, run_octree);
          }
          py::dict out;
          out["dense_bytes"] = pv.dense_bytes;
          out["tree_bytes"] = pv.tree_bytes;
          out["weight_sum"] = to_numpy(pv.weight_sum);
          if (run_octree) {
            FusionResult r{};
            {
              py::gil_scoped_release release;
              r = fuse(build_octree(pv.estimate, nullptr, params.tau, params.max_depth), pv.trees, params, true);
            }
            std::size_t mixed = 0;
            for (const auto& j : r.joins) mixed += !(j.min_child > 0.0f || j.max_child < 0.0f);
            out["octree"] = r.u;
            out["octree_stats"] = stats_list(r.stats);
            out["octree_joins"] = r.joins.size();
            out["mixed_sign_joins"] = mixed;
          }
          if (run_dense) {
            DenseResult r;
            {
              py::gil_scoped_release release;
              r = dense_fuse(pv.dense, params, &pv.estimate);
            }
            out["dense"] = to_numpy(r.u);
            out["dense_stats"] = stats_list(r.stats);
          }
          return out;
        },
        py::arg("dataset"), py::arg("params") = FusionParams{}, py::arg("mode") = "octree",
        "Runs the octree solver, the dense solver or both on a dataset. Returns a dict.");

  py::class_<TriMesh>(m, "TriMesh")
      .def(py::init(&make_mesh), py::arg("vertices"),
           py::arg("triangles") = py::array_t<int>(std::vector<py::ssize_t>{0, 3}))
      .def_property_readonly("vertices", &vertices_to_numpy)
      .def_property_readonly("triangles", &triangles_to_numpy)
      .def_readonly("quality", &TriMesh::quality)
      .def("__len__", [](const TriMesh& t) { return t.vertices.size(); });

  m.def("marching_cubes",
        [](const FloatArray& field, const VolumeDomain& dom, std::optional<FloatArray> mask) {
          const Grid3<float> g = to_grid(field);
          if (mask) {
            const Grid3<float> mg = to_grid(*mask);
            return marching_cubes(g, dom, &mg);
          }
          return marching_cubes(g, dom);
        },
        py::arg("field"), py::arg("domain"), py::arg("mask") = py::none());

  m.def("vertex_diff",
        [](const TriMesh& a, const TriMesh& b) {
          const MeshDiff d = vertex_diff(a, b);
          return py::make_tuple(d.distances, d.stats.mean, d.stats.stddev, d.stats.max);
        },
        py::arg("mesh"), py::arg("reference"),
        "Per-vertex nearest-vertex distances plus (mean, std, max).");
  m.def("sphere_diff",
        [](const TriMesh& a, const std::array<double, 3>& c, double r) {
          const MeshDiff d = sphere_diff(a, to_vec3(c), r);
          return py::make_tuple(d.distances, d.stats.mean, d.stats.stddev, d.stats.max);
        },
        py::arg("mesh"), py::arg("center"), py::arg("radius"));
  m.def("read_ply", &read_ply, py::arg("path"));
  m.def("write_ply", &write_ply, py::arg("path"), py::arg("mesh"));

  m.def("run_cli",
        [](const std::vector<std::string>& args) {
          std::ostringstream out, err;
          int code;
          {
            py::gil_scoped_release release;
            code = run_cli(args, out, err);
          }
          return py::make_tuple(code, out.str(), err.str());
        },
        py::arg("args"), "Runs a command-line subcommand; returns (exit_code, stdout, stderr).");
}
