#include "octfusion/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cctype>
#include <chrono>
#include <fstream>
#include <map>
#include <set>
#include <iomanip>
#include <iostream>
#include <optional>

#include "octfusion/dataset.hpp"
#include "octfusion/pipeline.hpp"

namespace octfusion {

namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t).count();
}

struct SynthArgs {
  fs::path out;
  SphereDatasetSpec spec;
  bool full_scale = false;
  std::vector<double> center{0.0, 0.0, 0.0};
};

struct FuseArgs {
  fs::path data;
  fs::path out;
  std::string mode = "octree";
  FusionParams params;
  bool no_clamp = false;
  bool dump_tree = false;
  bool save_u = false;
  fs::path reference_u;
  int verbosity = 0;
};

struct CompareArgs {
  fs::path mesh;
  fs::path reference;
  fs::path sphere;
  fs::path out_ply;
  fs::path out_csv;
  bool symmetric = false;
};

class UsageError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

void write_text(const fs::path& path, const auto& writer) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path.string() + " for writing");
  writer(f);
  if (!f) throw std::runtime_error("failed writing " + path.string());
}

void print_stats(std::ostream& out, const std::string& label, const DiffStats& s) {
  out << label << ' ' << s.mean << ' ' << s.stddev << ' ' << s.max << '\n';
}

int cmd_synth(SynthArgs a, std::ostream& out) {
  if (a.full_scale) {
    const SphereDatasetSpec base = SphereDatasetSpec::full_scale();
    a.spec.domain = base.domain;
    a.spec.intrinsics = base.intrinsics;
  }
  a.spec.scene.center = Vec3(a.center[0], a.center[1], a.center[2]);
  const FusionParams defaults;
  try {
    a.spec.validate(defaults.delta + defaults.eta);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  const Dataset ds = make_sphere_dataset(a.out, a.spec);
  out << "synth views " << ds.frames.size() << " resolution " << ds.domain.resolution()
      << " voxel_size " << ds.domain.voxel_size() << " radius " << a.spec.scene.radius << '\n';
  return kExitOk;
}

struct SolveOutput {
  TriMesh mesh;
  Grid3<float> u;
};

int cmd_fuse(FuseArgs a, std::ostream& out, std::ostream& err) {
  const Dataset ds = load_dataset(a.data);
  FusionParams& p = a.params;
  p.max_depth = ds.domain.depth();
  p.clamp = !a.no_clamp;
  try {
    p.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  const bool run_octree = a.mode != "dense";
  const bool run_dense = a.mode != "octree";
  if (!a.out.empty()) {
    std::error_code ec;
    fs::create_directories(a.out, ec);
    if (ec) throw std::runtime_error("cannot create " + a.out.string());
  }
  std::optional<Grid3<float>> reference;
  if (!a.reference_u.empty()) reference = read_grid(a.reference_u);

  const auto prep_start = Clock::now();
  const PreparedViews views = prepare_views(ds, p, run_dense, run_octree);
  if (a.verbosity > 0) err << "prepared " << views.dense_bytes << " B dense views in " << ms_since(prep_start) << " ms\n";
  out << std::setprecision(9);
  out << "views " << ds.frames.size() << " dense_bytes " << views.dense_bytes << " tree_bytes "
      << views.tree_bytes << '\n';

  const auto report_accuracy = [&](const std::string& mode, const TriMesh& mesh) {
    if (ds.ground_truth && !mesh.empty()) {
      print_stats(out, "accuracy " + mode,
                  sphere_diff(mesh, ds.ground_truth->center, ds.ground_truth->radius).stats);
    }
  };

  std::optional<SolveOutput> oct, dense;
  std::optional<Octree> oct_tree;
  if (run_octree) {
    const auto start = Clock::now();
    FusionResult r = fuse(build_octree(views.estimate, nullptr, p.tau, p.max_depth), views.trees, p,
                          true);
    const double wall = ms_since(start);
    std::size_t mixed = 0;
    for (const auto& s : r.stats) mixed += s.mixed_sign_joins;
    oct = SolveOutput{{}, densify(r.u)};
    oct->mesh = extract_mesh(oct->u, ds.domain, views.weight_sum);
    out << "octree " << r.u.node_count() << ' ' << r.peak_nodes * sizeof(OctreeNode) << ' ' << wall
        << '\n';
    out << "joins octree " << r.joins.size() << " mixed_sign " << mixed << '\n';
    report_accuracy("octree", oct->mesh);
    if (!a.out.empty()) {
      write_ply(a.out / "octree_mesh.ply", oct->mesh);
      write_text(a.out / "octree_report.csv", [&](std::ostream& f) { write_report(f, p, r.stats); });
      write_text(a.out / "octree_joins.csv", [&](std::ostream& f) {
        f << std::setprecision(9) << "iter,level,x,y,z,min_child,max_child\n";
        for (const JoinRecord& j : r.joins) {
          f << j.iteration << ',' << j.level << ',' << j.cell.x << ',' << j.cell.y << ',' << j.cell.z
            << ',' << j.min_child << ',' << j.max_child << '\n';
        }
      });
      if (a.dump_tree) write_text(a.out / "octree_tree.txt", [&](std::ostream& f) { write_tree(f, r.u); });
      if (a.save_u) write_grid(a.out / "octree_u.raw", oct->u, GridKind::kIterate);
    }
    oct_tree = std::move(r.u);
  }
  if (run_dense) {
    const auto start = Clock::now();
    DenseResult r = dense_fuse(views.dense, p, &views.estimate);
    const double wall = ms_since(start);
    dense = SolveOutput{extract_mesh(r.u, ds.domain, views.weight_sum), std::move(r.u)};
    out << "dense " << dense->u.size() << ' ' << dense->u.size() * sizeof(float) << ' ' << wall
        << '\n';
    report_accuracy("dense", dense->mesh);
    if (!a.out.empty()) {
      write_ply(a.out / "dense_mesh.ply", dense->mesh);
      write_text(a.out / "dense_report.csv", [&](std::ostream& f) { write_report(f, p, r.stats); });
      if (a.save_u) write_grid(a.out / "dense_u.raw", dense->u, GridKind::kIterate);
    }
  }
  if (oct && dense) {
    if (!oct->mesh.empty() && !dense->mesh.empty()) {
      const MeshDiff d = vertex_diff(oct->mesh, dense->mesh);
      print_stats(out, "diff", d.stats);
      out << "diff_symmetric_mean " << symmetric_mean(oct->mesh, dense->mesh) << '\n';
    }
    if (!reference) reference = dense->u;
  }
  if (oct_tree && reference) {
    const QuantizationError q = quantization_error(*oct_tree, *reference);
    out << "quantization sum " << q.sum << " volume_weighted " << q.volume_weighted << '\n';
  }
  return kExitOk;
}

int cmd_compare(const CompareArgs& a, std::ostream& out) {
  const TriMesh mesh = read_ply(a.mesh);
  MeshDiff d;
  std::optional<double> sym;
  if (!a.sphere.empty()) {
    const SphereScene s = read_ground_truth(a.sphere);
    d = sphere_diff(mesh, s.center, s.radius);
  } else {
    const TriMesh ref = read_ply(a.reference);
    if (ref.empty()) throw std::runtime_error("reference mesh " + a.reference.string() + " is empty");
    d = vertex_diff(mesh, ref);
    if (a.symmetric) sym = symmetric_mean(mesh, ref);
  }
  if (!a.out_ply.empty()) write_ply(a.out_ply, d.colored);
  if (!a.out_csv.empty()) write_distances_csv(a.out_csv, d.distances);
  out << std::setprecision(9) << d.stats.mean << ' ' << d.stats.stddev << ' ' << d.stats.max << '\n';
  if (sym) out << "symmetric_mean " << *sym << '\n';
  return kExitOk;
}

void add_fusion_options(CLI::App& app, FuseArgs& a) {
  FusionParams& p = a.params;
  app.add_option("--delta", p.delta, "Truncation band in meters")->capture_default_str();
  app.add_option("--eta", p.eta, "Occlusion cut-off in meters")->capture_default_str();
  app.add_option("--lambda", p.lambda, "Smoothness weight")->capture_default_str();
  app.add_option("--epsilon", p.epsilon, "epsL1 constant of the data term")->capture_default_str();
  app.add_option("--epsilon-tv", p.epsilon_tv, "epsL1 constant of the smoothness term")
      ->capture_default_str();
  app.add_option("--gamma", p.gamma, "Normalizer floor")->capture_default_str();
  app.add_option("--step", p.step, "Initial step size")->capture_default_str();
  app.add_option("--halve-every", p.halve_every, "Halve the step every n iterations")
      ->capture_default_str();
  app.add_option("--iterations", p.iterations)->capture_default_str();
  app.add_option("--tau", p.tau, "Construction spread threshold")->capture_default_str();
  app.add_option("--tau-s", p.tau_split, "Split threshold")->capture_default_str();
  app.add_option("--tau-j", p.tau_join, "Join threshold")->capture_default_str();
  app.add_flag("--no-clamp", a.no_clamp, "Do not clamp the iterate to [-1, 1]");
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

bool parse_bool(const std::string& v, const std::string& key) {
  std::string l = v;
  std::transform(l.begin(), l.end(), l.begin(), [](unsigned char c) { return std::tolower(c); });
  if (l == "1" || l == "true" || l == "yes" || l == "on") return true;
  if (l == "0" || l == "false" || l == "no" || l == "off") return false;
  throw UsageError("config key " + key + " expects a boolean, got " + v);
}

// Splices `key = value` lines of the fuse config file into the argument list
// right after the subcommand. Keys also given on the command line are skipped
// so that flags take precedence.
std::vector<std::string> expand_config(const std::vector<std::string>& args, const CLI::App& fuse) {
  if (args.empty() || args[0] != "fuse") return args;
  std::string path;
  std::set<std::string> given;
  for (std::size_t i = 1; i < args.size(); ++i) {
    const std::string& t = args[i];
    if (t == "-v") given.insert("verbose");
    if (t.rfind("--", 0) != 0) continue;
    const auto eq = t.find('=');
    const std::string name = t.substr(2, eq == std::string::npos ? std::string::npos : eq - 2);
    given.insert(name);
    if (name == "config") {
      if (eq != std::string::npos) {
        path = t.substr(eq + 1);
      } else if (i + 1 < args.size()) {
        path = args[i + 1];
      }
    }
  }
  if (path.empty()) return args;

  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read config file " + path);
  static const std::map<std::string, std::string> aliases = {{"tau-split", "tau-s"},
                                                             {"tau-join", "tau-j"}};
  std::vector<std::string> extra;
  std::string line;
  for (int lineno = 1; std::getline(in, line); ++lineno) {
    line = trim(line.substr(0, line.find('#')));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw UsageError(path + ":" + std::to_string(lineno) + ": expected key = value");
    }
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"') {
      value = value.substr(1, value.size() - 2);
    }
    std::replace(key.begin(), key.end(), '_', '-');
    if (const auto it = aliases.find(key); it != aliases.end()) key = it->second;
    const CLI::Option* opt = key == "config" || key == "help" ? nullptr
                                                               : fuse.get_option_no_throw("--" + key);
    if (opt == nullptr) throw UsageError(path + ":" + std::to_string(lineno) + ": unknown key " + key);
    if (given.count(key)) continue;
    if (opt->get_items_expected_max() == 0) {
      if (parse_bool(value, key)) extra.push_back("--" + key);
    } else {
      extra.push_back("--" + key);
      extra.push_back(value);
    }
  }
  std::vector<std::string> out{args[0]};
  out.insert(out.end(), extra.begin(), extra.end());
  out.insert(out.end(), args.begin() + 1, args.end());
  return out;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Octree-based variational range data fusion"};
  app.require_subcommand(1);

  SynthArgs sa;
  auto* synth = app.add_subcommand("synth", "Render the synthetic sphere dataset");
  synth->add_option("--out", sa.out, "Output directory")->required();
  synth->add_option("--views", sa.spec.views)->capture_default_str()->check(CLI::PositiveNumber);
  synth->add_option("--orbit", sa.spec.orbit_radius, "Camera orbit radius in meters")
      ->capture_default_str();
  synth->add_option("--radius", sa.spec.scene.radius, "Sphere radius in meters")
      ->capture_default_str();
  synth->add_option("--center", sa.center, "Sphere center")->expected(3);
  int resolution = 0;
  double voxel_size = 0.0;
  std::vector<double> origin;
  synth->add_option("--resolution", resolution, "Voxels per axis (power of two)");
  synth->add_option("--voxel-size", voxel_size, "Voxel size in meters");
  synth->add_option("--origin", origin, "Volume origin")->expected(3);
  synth->add_option("--fx", sa.spec.intrinsics.fx)->capture_default_str();
  synth->add_option("--fy", sa.spec.intrinsics.fy)->capture_default_str();
  synth->add_option("--width", sa.spec.intrinsics.width)->capture_default_str();
  synth->add_option("--height", sa.spec.intrinsics.height)->capture_default_str();
  auto* cx = synth->add_option("--cx", sa.spec.intrinsics.cx, "Principal point (default: image center)");
  auto* cy = synth->add_option("--cy", sa.spec.intrinsics.cy);
  synth->add_flag("--full-scale", sa.full_scale, "1 mm voxels at N = 256");

  FuseArgs fa;
  auto* fuse_cmd = app.add_subcommand("fuse", "Fuse a dataset into a surface");
  std::string config_path;
  fuse_cmd->add_option("--config", config_path,
                       "File of key = value lines; command-line flags take precedence");
  fuse_cmd->add_option("--data", fa.data, "Dataset directory")->required();
  fuse_cmd->add_option("--out", fa.out, "Output directory");
  fuse_cmd->add_option("--mode", fa.mode)
      ->capture_default_str()
      ->check(CLI::IsMember({"octree", "dense", "both"}));
  add_fusion_options(*fuse_cmd, fa);
  fuse_cmd->add_flag("--dump-tree", fa.dump_tree, "Write the final octree as text");
  fuse_cmd->add_flag("--save-u", fa.save_u, "Write final iterates as raw grids");
  fuse_cmd->add_option("--reference-u", fa.reference_u, "Dense iterate for the quantization error");
  fuse_cmd->add_flag("-v,--verbose", fa.verbosity);

  CompareArgs ca;
  auto* compare = app.add_subcommand("compare", "Vertex-wise distance between meshes");
  compare->add_option("--mesh", ca.mesh, "Mesh to evaluate")->required();
  auto* ref = compare->add_option("--ref", ca.reference, "Reference mesh");
  auto* sph = compare->add_option("--sphere", ca.sphere, "ground_truth.txt of a sphere dataset");
  ref->excludes(sph);
  compare->add_option("--out-ply", ca.out_ply, "Mesh with distances as vertex quality");
  compare->add_option("--out-csv", ca.out_csv, "Per-vertex distances");
  compare->add_flag("--symmetric", ca.symmetric, "Also report the symmetrized mean");

  std::vector<std::string> expanded;
  try {
    expanded = expand_config(args, *fuse_cmd);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitIo;
  }

  try {
    std::vector<std::string> reversed(expanded.rbegin(), expanded.rend());
    app.parse(reversed);
    if (compare->parsed() && ca.reference.empty() && ca.sphere.empty()) {
      throw CLI::ValidationError("compare needs --ref or --sphere");
    }
    if (synth->parsed()) {
      const Vec3 o = origin.empty() ? sa.spec.domain.origin() : Vec3(origin[0], origin[1], origin[2]);
      const double sv = voxel_size > 0.0 ? voxel_size : sa.spec.domain.voxel_size();
      const int n = resolution > 0 ? resolution : sa.spec.domain.resolution();
      sa.spec.domain = VolumeDomain(o, sv, n);
      if (cx->count() == 0) sa.spec.intrinsics.cx = 0.5 * sa.spec.intrinsics.width;
      if (cy->count() == 0) sa.spec.intrinsics.cy = 0.5 * sa.spec.intrinsics.height;
    }
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      out << app.help();
      return kExitOk;
    }
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }

  try {
    if (synth->parsed()) return cmd_synth(sa, out);
    if (fuse_cmd->parsed()) return cmd_fuse(fa, out, err);
    return cmd_compare(ca, out);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitIo;
  }
}

}  // namespace octfusion
