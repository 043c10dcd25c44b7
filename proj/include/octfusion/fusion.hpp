#pragma once

#include <array>
#include <cmath>
#include <iosfwd>
#include <span>
#include <unordered_map>
#include <utility>
#include <vector>

#include "octfusion/octree.hpp"
#include "octfusion/tsdf.hpp"

namespace octfusion {

/// Every scalar of the method. Lengths inside the solver (finite-difference
/// spacing, cell volume) are measured in finest voxels; delta and eta are
/// meters.
struct FusionParams {
  double delta = 0.004;
  double eta = 0.020;
  double lambda = 0.3;
  /// epsL1 constant of the data term.
  double epsilon = 0.1;
  /// epsL1 constant of the smoothness term. Explicit descent with step
  /// `step` is stable only for roughly epsilon_tv > 6 * lambda * step.
  double epsilon_tv = 0.3;
  double gamma = 1e-4;
  double step = 0.1;
  int halve_every = 20;
  int iterations = 100;
  double tau = 0.1;
  double tau_split = 0.1;
  double tau_join = 0.9;
  int max_depth = 7;
  bool clamp = true;

  /// Throws std::invalid_argument when a value is out of range.
  void validate() const;

  /// Step size for the pass starting at iteration t (0-based).
  double step_at(int t) const { return step * std::ldexp(1.0, -(t / halve_every)); }
};

/// `# key = value` lines, one per parameter.
void write_params_header(std::ostream& out, const FusionParams& params);

struct IterationStats {
  int iteration = 0;
  double energy = 0.0;
  std::size_t node_count = 0;
  std::size_t memory_bytes = 0;
  std::size_t splits = 0;
  std::size_t joins = 0;
  std::size_t mixed_sign_joins = 0;
  std::size_t peak_nodes = 0;
  double wall_ms = 0.0;
};

/// Report CSV: `iter,energy,node_count,memory_bytes,splits,joins,wall_ms`.
void write_report(std::ostream& out, const FusionParams& params,
                  std::span<const IterationStats> stats);

// ---------------------------------------------------------------------------
// Scalar kernels shared by both solvers.

/// epsL1 approximation sqrt(x^2 + eps^2) of |x|, taking x^2.
inline double gamma_eps(double x_sq, double eps) { return std::sqrt(x_sq + eps * eps); }

/// TV flux grad / Gamma(|grad|^2).
inline std::array<double, 3> flux(const std::array<double, 3>& g, double eps) {
  const double norm = gamma_eps(g[0] * g[0] + g[1] * g[1] + g[2] * g[2], eps);
  return {g[0] / norm, g[1] / norm, g[2] / norm};
}

/// Normalized derivative of the data term with respect to u:
/// [sum_i w_i (u - f_i) / Gamma((u - f_i)^2)] / (sum_i w_i + gamma).
double data_derivative(double u, std::span<const float> f, std::span<const float> w, double eps,
                       double gamma);

/// Normalized data energy [sum_i w_i Gamma((u - f_i)^2)] / (sum_i w_i + gamma).
double data_energy(double u, std::span<const float> f, std::span<const float> w, double eps,
                   double gamma);

// ---------------------------------------------------------------------------
// Level-aware finite differences. `Sampler` is callable as
// double(const Cell&, int level). Spacing at level L is 2^(max_depth - L)
// finest voxels; derivatives across the domain boundary are zero.

inline double level_spacing(int level, int max_depth) {
  return static_cast<double>(1 << (max_depth - level));
}

template <class Sampler>
std::array<double, 3> forward_gradient(const Sampler& u, const Cell& c, int level, int max_depth) {
  const int n = 1 << level;
  const double h = level_spacing(level, max_depth);
  const double u0 = u(c, level);
  std::array<double, 3> g{};
  for (int k = 0; k < 3; ++k) {
    Cell nb = c;
    nb[k] += 1;
    g[k] = nb[k] < n ? (u(nb, level) - u0) / h : 0.0;
  }
  return g;
}

struct TvTerms {
  /// div(grad u / Gamma(|grad u|^2)) with backward differences of the flux.
  double divergence = 0.0;
  /// |forward gradient|^2 at the cell itself.
  double grad_sq = 0.0;
};

template <class Sampler>
TvTerms tv_terms(const Sampler& u, const Cell& c, int level, int max_depth, double eps) {
  const double h = level_spacing(level, max_depth);
  const auto g = forward_gradient(u, c, level, max_depth);
  const auto pc = flux(g, eps);
  TvTerms t;
  t.grad_sq = g[0] * g[0] + g[1] * g[1] + g[2] * g[2];
  for (int k = 0; k < 3; ++k) {
    Cell b = c;
    b[k] -= 1;
    const double pb = b[k] >= 0 ? flux(forward_gradient(u, b, level, max_depth), eps)[k] : 0.0;
    t.divergence += (pc[k] - pb) / h;
  }
  return t;
}

template <class Sampler>
double divergence_of_flux(const Sampler& u, const Cell& c, int level, int max_depth, double eps) {
  return tv_terms(u, c, level, max_depth, eps).divergence;
}

/// Gradient-descent direction lambda * div - data_derivative.
inline double descent_update(double lambda, double divergence, double data_deriv) {
  return lambda * divergence - data_deriv;
}

// ---------------------------------------------------------------------------
// Octree solver.

struct JoinRecord {
  int iteration = 0;
  int level = 0;
  Cell cell;
  float min_child = 0.0f;
  float max_child = 0.0f;
};

enum class RestructureAction { kKeep, kSplit, kJoin };

/// Split/join decision for a node whose tentative value is `next`
/// (u + step * update). For inner nodes `children` holds the already-updated
/// child values and `children_are_leaves` whether all of them are leaves.
RestructureAction restructure(bool is_leaf, int level, int max_depth, double next,
                              double tau_split, double tau_join,
                              std::span<const float> children = {},
                              bool children_are_leaves = false);

/// Initial iterate in dense form: sum_i w_i f_i / (sum_i w_i + gamma) where
/// observed; voxels no view observes take the majority sign of the stored
/// per-view values (+1 on ties).
class EstimateAccumulator {
 public:
  explicit EstimateAccumulator(int resolution);
  void add(const ViewTsdf& view);
  Grid3<float> estimate(double gamma) const;
  /// sum_i w_i per voxel.
  const Grid3<float>& weight_sum() const { return sum_w_; }
  int views() const { return views_; }

 private:
  Grid3<float> sum_wf_;
  Grid3<float> sum_w_;
  Grid3<float> sum_f_;
  int views_ = 0;
};

Grid3<float> initial_estimate(std::span<const ViewTsdf> views, double gamma);

/// Octree of the initial estimate built with the construction threshold tau.
Octree initialize(std::span<const ViewTsdf> views, const FusionParams& params);

/// Converts dense views into view trees with the construction threshold.
std::vector<ViewTree> build_view_trees(std::span<const ViewTsdf> views, const FusionParams& params);

/// One optimizer pass over `u`: each node computes its update from the
/// pre-pass iterate, is split, joined or updated in place, and inner means
/// are re-propagated at the end. Reads never see values written earlier in
/// the same pass. The returned stats carry no energy.
IterationStats iterate(Octree& u, std::span<const ViewTree> views, const FusionParams& params,
                       double step, int iteration = 0, std::vector<JoinRecord>* join_log = nullptr);

/// Normalized energy of the piecewise-constant field the octree represents,
/// summed over finest cells exactly as dense_energy does, with view values
/// read from the view trees at the finest level.
double octree_energy(const Octree& u, std::span<const ViewTree> views, const FusionParams& params);

/// Repeated octree_energy evaluation against one set of view trees. The
/// data term of coarse leaves is cached per cell.
class OctreeEnergy {
 public:
  OctreeEnergy(std::span<const ViewTree> views, const FusionParams& params);
  double operator()(const Octree& u);

 private:
  const std::vector<std::pair<float, double>>& coefficients(int level, const Cell& c);

  std::span<const ViewTree> views_;
  FusionParams params_;
  std::unordered_map<std::uint64_t, std::vector<std::pair<float, double>>> cache_;
};

struct FusionResult {
  Octree u{0};
  /// stats[0] describes the initial iterate, stats[t] the iterate after pass t.
  std::vector<IterationStats> stats;
  std::vector<JoinRecord> joins;
  std::size_t peak_nodes = 0;
};

FusionResult fuse(Octree initial, std::span<const ViewTree> views, const FusionParams& params,
                  bool record_joins = false);

/// Convenience entry: builds view trees and the initial iterate from dense
/// views. Throws std::invalid_argument for an empty view set.
FusionResult fuse(std::span<const ViewTsdf> views, const FusionParams& params);

// ---------------------------------------------------------------------------
// Dense reference solver.

/// Normalized energy of a dense iterate (same functional, finest cells).
double dense_energy(const Grid3<float>& u, std::span<const ViewTsdf> views,
                    const FusionParams& params);

/// One Jacobi gradient-descent step on the full grid. Returns the energy of
/// the input iterate.
double dense_step(Grid3<float>& u, std::span<const ViewTsdf> views, const FusionParams& params,
                  double step);

struct DenseResult {
  Grid3<float> u;
  std::vector<IterationStats> stats;
};

DenseResult dense_fuse(std::span<const ViewTsdf> views, const FusionParams& params,
                       const Grid3<float>* initial = nullptr);

}  // namespace octfusion
