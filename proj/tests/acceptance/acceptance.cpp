// Acceptance suite: one PASS/FAIL line per criterion.
//
//   octfusion_acceptance [--work DIR] [--xfail ID]...
//
// Criteria listed with --xfail are known not to hold; they still print FAIL
// but do not fail the run.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "octfusion/cli.hpp"
#include "octfusion/dataset.hpp"
#include "octfusion/fusion.hpp"
#include "octfusion/pipeline.hpp"

using namespace octfusion;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

struct Run {
  int code = 0;
  std::string out;
  double seconds = 0.0;
};

Run cli(const std::vector<std::string>& args) {
  std::ostringstream out;
  std::ostringstream err;
  std::cerr << "  $ octfusion";
  for (const auto& a : args) std::cerr << ' ' << a;
  std::cerr << '\n';
  const auto start = Clock::now();
  Run r;
  r.code = run_cli(args, out, err);
  r.seconds = std::chrono::duration<double>(Clock::now() - start).count();
  r.out = out.str();
  if (r.code != 0) throw std::runtime_error("command failed: " + err.str());
  return r;
}

// Whitespace-separated numbers of the first output line starting with `prefix`.
std::vector<double> numbers(const std::string& text, const std::string& prefix) {
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.rfind(prefix, 0) != 0) continue;
    std::istringstream fields(line.substr(prefix.size()));
    std::vector<double> v;
    std::string tok;
    while (fields >> tok) {
      try {
        v.push_back(std::stod(tok));
      } catch (const std::exception&) {
      }
    }
    return v;
  }
  throw std::runtime_error("no line starting with '" + prefix + "'");
}

struct ReportRow {
  int iter;
  double energy;
  double nodes;
};

std::vector<ReportRow> read_report(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw std::runtime_error("cannot read " + p.string());
  std::vector<ReportRow> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#' || line.rfind("iter", 0) == 0) continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream s(line);
    ReportRow r{};
    s >> r.iter >> r.energy >> r.nodes;
    rows.push_back(r);
  }
  return rows;
}

class Verdicts {
 public:
  explicit Verdicts(std::set<std::string> xfail) : xfail_(std::move(xfail)) {}

  void report(const std::string& id, const std::string& name, bool pass, const std::string& detail) {
    const bool expected = xfail_.count(id) > 0;
    std::string tag = pass ? "PASS" : "FAIL";
    if (expected) tag += pass ? " (unexpected pass)" : " (expected)";
    std::cout << "[" << tag << "] " << id << " " << name << ": " << detail << std::endl;
    lines_.push_back("[" + tag + "] " + id + " " + name + ": " + detail);
    if (!pass && !expected) ++unexpected_;
  }

  int unexpected_failures() const { return unexpected_; }
  void summary() const {
    std::cout << "\nsummary\n";
    for (const auto& l : lines_) std::cout << "  " << l << '\n';
  }

 private:
  std::set<std::string> xfail_;
  std::vector<std::string> lines_;
  int unexpected_ = 0;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), f, args...);
  return buf;
}

// ---------------------------------------------------------------------------
// Oracles for the gradient check, written independently of the library.

long double oracle_gamma(long double x, long double eps) { return std::sqrt(x * x + eps * eps); }

long double oracle_data_energy(long double u, const std::vector<float>& f, const std::vector<float>& w,
                               long double eps, long double gamma) {
  long double num = 0.0L;
  long double den = gamma;
  for (std::size_t i = 0; i < f.size(); ++i) {
    num += w[i] * oracle_gamma(u - f[i], eps);
    den += w[i];
  }
  return num / den;
}

// Sum of Gamma(|forward gradient|^2) over the cells whose gradient involves
// `c` (c itself and its three lower neighbours), on a grid of n^3 with zero
// differences across the far faces.
long double oracle_local_tv(const std::vector<long double>& u, int n, int cx, int cy, int cz,
                            long double eps) {
  auto at = [&](int x, int y, int z) { return u[(static_cast<std::size_t>(z) * n + y) * n + x]; };
  auto cell = [&](int x, int y, int z) {
    if (x < 0 || y < 0 || z < 0) return 0.0L;
    const long double c = at(x, y, z);
    const long double gx = x + 1 < n ? at(x + 1, y, z) - c : 0.0L;
    const long double gy = y + 1 < n ? at(x, y + 1, z) - c : 0.0L;
    const long double gz = z + 1 < n ? at(x, y, z + 1) - c : 0.0L;
    return std::sqrt(gx * gx + gy * gy + gz * gz + eps * eps);
  };
  return cell(cx, cy, cz) + cell(cx - 1, cy, cz) + cell(cx, cy - 1, cz) + cell(cx, cy, cz - 1);
}

bool close_relative(double a, double b, double rel) {
  return std::abs(a - b) <= rel * std::max(std::abs(a), std::abs(b));
}

}  // namespace

int main(int argc, char** argv) {
  fs::path work = fs::temp_directory_path() / "octfusion_acceptance";
  std::set<std::string> xfail;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--work" && i + 1 < argc) {
      work = argv[++i];
    } else if (a == "--xfail" && i + 1 < argc) {
      xfail.insert(argv[++i]);
    } else {
      std::cerr << "usage: octfusion_acceptance [--work DIR] [--xfail ID]...\n";
      return 2;
    }
  }
  fs::remove_all(work);
  fs::create_directories(work);
  Verdicts v(xfail);

  try {
    // --- Sphere runs, N = 128 -------------------------------------------------
    const fs::path data = work / "sphere";
    cli({"synth", "--out", data.string(), "--views", "31"});
    const Dataset ds = load_dataset(data);
    const double sv = ds.domain.voxel_size();
    const double n3 = static_cast<double>(ds.domain.voxel_count());
    const std::string gt = (data / "ground_truth.txt").string();

    const fs::path oct_dir = work / "octree";
    const Run oct = cli({"fuse", "--data", data.string(), "--out", oct_dir.string(), "--mode",
                         "octree", "--lambda", "0.3", "--iterations", "100", "--step", "0.1",
                         "--halve-every", "20"});
    const Run acc = cli({"compare", "--mesh", (oct_dir / "octree_mesh.ply").string(), "--sphere", gt});
    {
      const auto s = numbers(acc.out, "");
      const bool pass = s.at(0) <= 0.05 * sv && s.at(1) <= 0.25 * sv && oct.seconds < 120.0;
      v.report("1", "sphere accuracy", pass,
               fmt("mean %.3g m = %.4f s_v (<= 0.05), std %.3g m = %.4f s_v (<= 0.25), fuse took %.1f s "
                   "(< 120)",
                   s.at(0), s.at(0) / sv, s.at(1), s.at(1) / sv, oct.seconds));
    }

    const fs::path both_dir = work / "both";
    const Run both = cli({"fuse", "--data", data.string(), "--out", both_dir.string(), "--mode",
                          "both", "--save-u"});
    {
      const Run d = cli({"compare", "--mesh", (both_dir / "octree_mesh.ply").string(), "--ref",
                         (both_dir / "dense_mesh.ply").string()});
      const auto s = numbers(d.out, "");
      v.report("2", "dense-octree agreement", s.at(0) <= sv && s.at(2) <= 2.0 * sv,
               fmt("mean %.3g m = %.4f s_v (<= 1), max %.3g m = %.4f s_v (<= 2)", s.at(0), s.at(0) / sv,
                   s.at(2), s.at(2) / sv));
    }

    // --- Full-refinement equivalence on a 32^3 sphere ---------------------
    {
      const fs::path small = work / "sphere32";
      cli({"synth", "--out", small.string(), "--views", "31", "--resolution", "32", "--voxel-size",
           "0.008"});
      const Dataset sd = load_dataset(small);
      FusionParams p;
      p.max_depth = sd.domain.depth();
      p.delta = 2.0 * sd.domain.voxel_size();
      p.eta = 5.0 * sd.domain.voxel_size();
      p.tau = 0.0;
      p.tau_split = 1.5;
      p.tau_join = 2.0;
      const PreparedViews pv = prepare_views(sd, p, true);
      Octree u = build_octree(pv.estimate, nullptr, p.tau, p.max_depth);
      Grid3<float> dense = pv.estimate;
      double worst = 0.0;
      bool refined = true;
      for (int t = 0; t < 10; ++t) {
        iterate(u, pv.trees, p, p.step_at(t), t);
        dense_step(dense, pv.dense, p, p.step_at(t));
        const Grid3<float> ou = densify(u);
        for (std::size_t i = 0; i < ou.size(); ++i)
          worst = std::max(worst, std::abs(double(ou[i]) - double(dense[i])));
        refined = refined && u.leaf_count() == ou.size();
      }
      v.report("3", "full-refinement equivalence", worst <= 1e-6 && refined,
               fmt("max |octree - dense| over 10 iterations %.3g (<= 1e-6), fully refined: %s", worst,
                   refined ? "yes" : "no"));
    }

    {
      const auto views = numbers(both.out, "views ");
      const double dense_bytes = views.at(1);
      const double tree_bytes = views.at(2);
      const auto o = numbers(oct.out, "octree ");
      const double nodes = o.at(0);
      v.report("4", "memory reduction", tree_bytes <= dense_bytes / 4.0 && nodes < 0.15 * n3,
               fmt("view trees %.0f B / dense views %.0f B = %.4f (<= 0.25); final nodes %.0f = "
                   "%.4f N^3 (< 0.15)",
                   tree_bytes, dense_bytes, tree_bytes / dense_bytes, nodes, nodes / n3));
    }

    {
      const auto rows = read_report(oct_dir / "octree_report.csv");
      bool monotone = true;
      double running_min = rows.at(20).nodes;
      int worst_iter = -1;
      for (std::size_t t = 21; t < rows.size(); ++t) {
        if (rows[t].nodes > 1.05 * running_min) {
          monotone = false;
          worst_iter = rows[t].iter;
        }
        running_min = std::min(running_min, rows[t].nodes);
      }
      const double n1 = rows.at(1).nodes;
      const double n100 = rows.at(100).nodes;
      v.report("5", "iterate shrinkage", n100 < n1 && monotone,
               fmt("nodes at iteration 1: %.0f, at 100: %.0f; after 20 non-increasing within 5%%: %s",
                   n1, n100, monotone ? "yes" : ("no, iteration " + std::to_string(worst_iter)).c_str()));
    }

    {
      const std::string ref = (both_dir / "dense_u.raw").string();
      const double q_default = numbers(both.out, "quantization sum ").at(0);
      const Run no_split = cli({"fuse", "--data", data.string(), "--out", (work / "tau_s0").string(),
                                "--tau-s", "0", "--reference-u", ref});
      const Run no_join = cli({"fuse", "--data", data.string(), "--out", (work / "tau_j15").string(),
                               "--tau-j", "1.5", "--reference-u", ref});
      const double q_no_split = numbers(no_split.out, "quantization sum ").at(0);
      const double q_no_join = numbers(no_join.out, "quantization sum ").at(0);
      v.report("6", "quantization error vs thresholds", q_no_split >= 2.0 * q_default,
               fmt("error(tau_s=0) %.4g vs error(tau_s=0.1) %.4g: ratio %.3f (>= 2); error(tau_j=1.5) "
                   "%.4g",
                   q_no_split, q_default, q_no_split / q_default, q_no_join));
    }

    {
      const auto dense = read_report(both_dir / "dense_report.csv");
      const auto octr = read_report(both_dir / "octree_report.csv");
      int increases = 0;
      for (std::size_t t = 1; t < dense.size(); ++t) increases += dense[t].energy > dense[t - 1].energy;
      const double dense_drop = dense.front().energy - dense.back().energy;
      const double oct_drop = octr.front().energy - octr.back().energy;
      v.report("7", "energy descent",
               increases == 0 && dense.size() == 101 && oct_drop >= 0.9 * dense_drop,
               fmt("dense increases over 100 iterations: %d; octree decrease %.4g vs dense %.4g = "
                   "%.3f (>= 0.9)",
                   increases, oct_drop, dense_drop, oct_drop / dense_drop));
    }

    // --- Gradient correctness ------------------------------------------------
    {
      std::mt19937 rng(20240607);
      std::uniform_real_distribution<double> unit(-1.0, 1.0);
      std::uniform_real_distribution<double> eps_dist(0.05, 1.0);
      std::uniform_int_distribution<int> views_dist(1, 6);
      const FusionParams p;
      const double h = 1e-5;
      double worst_data = 0.0;
      double worst_flux = 0.0;
      int bad = 0;
      for (int s = 0; s < 1000; ++s) {
        const double eps = s % 3 == 0 ? p.epsilon : (s % 3 == 1 ? p.epsilon_tv : eps_dist(rng));
        // Data term.
        const int k = views_dist(rng);
        std::vector<float> f(k), w(k);
        for (int i = 0; i < k; ++i) {
          f[i] = static_cast<float>(unit(rng));
          w[i] = i == 0 || unit(rng) > -0.3 ? 1.0f : 0.0f;
        }
        const double u0 = unit(rng);
        const double analytic = data_derivative(u0, f, w, eps, p.gamma);
        const double fd = static_cast<double>(
            (oracle_data_energy(u0 + h, f, w, eps, p.gamma) - oracle_data_energy(u0 - h, f, w, eps, p.gamma)) /
            (2.0L * h));
        worst_data = std::max(worst_data, std::abs(analytic - fd) / std::max(std::abs(analytic), std::abs(fd)));
        bad += !close_relative(analytic, fd, 1e-6);

        // Smoothness term: d/du_c sum Gamma(|grad u|^2) = -div(flux) at c.
        const int n = 8;
        std::vector<long double> g(static_cast<std::size_t>(n) * n * n);
        for (auto& x : g) x = unit(rng);
        Cell c{static_cast<int>(rng() % n), static_cast<int>(rng() % n), static_cast<int>(rng() % n)};
        auto sampler = [&](const Cell& q, int) {
          return static_cast<double>(g[(static_cast<std::size_t>(q.z) * n + q.y) * n + q.x]);
        };
        const double div = divergence_of_flux(sampler, c, 3, 3, eps);
        const std::size_t idx = (static_cast<std::size_t>(c.z) * n + c.y) * n + c.x;
        const long double saved = g[idx];
        g[idx] = saved + h;
        const long double ep = oracle_local_tv(g, n, c.x, c.y, c.z, eps);
        g[idx] = saved - h;
        const long double em = oracle_local_tv(g, n, c.x, c.y, c.z, eps);
        g[idx] = saved;
        const double fd_tv = static_cast<double>((ep - em) / (2.0L * h));
        worst_flux = std::max(worst_flux, std::abs(-div - fd_tv) / std::max(std::abs(div), std::abs(fd_tv)));
        bad += !close_relative(-div, fd_tv, 1e-6);
      }
      v.report("8", "gradient correctness", bad == 0,
               fmt("1000 samples each; worst relative error data %.3g, flux %.3g (<= 1e-6); %d outside",
                   worst_data, worst_flux, bad));
    }

    // --- Construction soundness ----------------------------------------------
    {
      std::mt19937 rng(99);
      std::uniform_real_distribution<float> unit(-1.0f, 1.0f);
      int exact = 0;
      int zero_error = 0;
      int total_exact = 0;
      int total_zero = 0;
      const std::vector<double> taus{0.0, 0.01, 0.05, 0.1, 0.25, 0.5, 1.0, 1.5, 2.0, 5.0};
      for (int trial = 0; trial < 8; ++trial) {
        Grid3<float> g(32);
        // Half of the fields are piecewise constant so that coarse leaves occur.
        const int block = trial % 2 == 0 ? 1 : 4;
        for (int z = 0; z < 32; z += block)
          for (int y = 0; y < 32; y += block)
            for (int x = 0; x < 32; x += block) {
              const float val = unit(rng);
              for (int dz = 0; dz < block; ++dz)
                for (int dy = 0; dy < block; ++dy)
                  for (int dx = 0; dx < block; ++dx) g(x + dx, y + dy, z + dz) = val;
            }
        ++total_exact;
        exact += densify(build_octree(g, nullptr, 0.0, 5)) == g;
        for (double tau : taus) {
          ++total_zero;
          zero_error += quantization_error(build_octree(g, nullptr, tau, 5), g).sum == 0.0;
        }
      }
      v.report("9", "construction soundness", exact == total_exact && zero_error == total_zero,
               fmt("densify(build(g, 0)) == g for %d/%d fields; zero quantization error for %d/%d "
                   "(field, tau) pairs",
                   exact, total_exact, zero_error, total_zero));
    }

    {
      std::ifstream in(oct_dir / "octree_joins.csv");
      std::string line;
      std::getline(in, line);
      long joins = 0;
      long mixed = 0;
      while (std::getline(in, line)) {
        std::replace(line.begin(), line.end(), ',', ' ');
        std::istringstream s(line);
        double it, level, x, y, z, lo, hi;
        s >> it >> level >> x >> y >> z >> lo >> hi;
        ++joins;
        mixed += !(lo > 0.0 || hi < 0.0);
      }
      const double reported = numbers(oct.out, "joins octree ").at(1);
      v.report("10", "join safety", mixed == 0 && reported == 0.0,
               fmt("%ld joins logged, %ld with mixed-sign children (solver count %.0f)", joins, mixed,
                   reported));
    }

    {
      const double oct_ms = numbers(both.out, "octree ").at(2);
      const double dense_ms = numbers(both.out, "dense ").at(2);
      v.report("R", "octree vs dense runtime", oct_ms <= dense_ms,
               fmt("octree solve %.1f s, dense solve %.1f s", oct_ms / 1000.0, dense_ms / 1000.0));
    }
  } catch (const std::exception& e) {
    std::cout << "[FAIL] acceptance run aborted: " << e.what() << std::endl;
    return 1;
  }
  v.summary();
  return v.unexpected_failures() == 0 ? 0 : 1;
}
