#include "octfusion/fusion.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <iomanip>
#include <map>
#include <ostream>
#include <stdexcept>
#include <string>

namespace octfusion {

namespace {

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point since) {
  return std::chrono::duration<double, std::milli>(Clock::now() - since).count();
}

double finish(double next, const FusionParams& p) {
  return p.clamp ? std::clamp(next, -1.0, 1.0) : next;
}

void require(bool ok, const std::string& what) {
  if (!ok) throw std::invalid_argument(what);
}

}  // namespace

void FusionParams::validate() const {
  require(delta > 0.0, "delta must be positive");
  require(eta > 0.0, "eta must be positive");
  require(lambda >= 0.0, "lambda must be non-negative");
  require(epsilon > 0.0, "epsilon must be positive");
  require(epsilon_tv > 0.0, "epsilon_tv must be positive");
  require(gamma > 0.0, "gamma must be positive");
  require(step > 0.0, "step must be positive");
  require(halve_every > 0, "halve_every must be positive");
  require(iterations >= 0, "iterations must be non-negative");
  require(tau >= 0.0, "tau must be non-negative");
  require(tau_split >= 0.0, "tau_split must be non-negative");
  require(tau_split < tau_join, "tau_split must be below tau_join");
  require(max_depth >= 0 && max_depth <= 12, "max_depth out of range");
}

void write_params_header(std::ostream& out, const FusionParams& p) {
  const auto precision = out.precision();
  out << std::setprecision(17);
  out << "# delta = " << p.delta << '\n'
      << "# eta = " << p.eta << '\n'
      << "# lambda = " << p.lambda << '\n'
      << "# epsilon = " << p.epsilon << '\n'
      << "# epsilon_tv = " << p.epsilon_tv << '\n'
      << "# gamma = " << p.gamma << '\n'
      << "# step = " << p.step << '\n'
      << "# halve_every = " << p.halve_every << '\n'
      << "# iterations = " << p.iterations << '\n'
      << "# tau = " << p.tau << '\n'
      << "# tau_split = " << p.tau_split << '\n'
      << "# tau_join = " << p.tau_join << '\n'
      << "# max_depth = " << p.max_depth << '\n'
      << "# clamp = " << (p.clamp ? "true" : "false") << '\n';
  out.precision(precision);
}

void write_report(std::ostream& out, const FusionParams& params,
                  std::span<const IterationStats> stats) {
  write_params_header(out, params);
  const auto precision = out.precision();
  out << "iter,energy,node_count,memory_bytes,splits,joins,wall_ms\n" << std::setprecision(17);
  for (const auto& s : stats) {
    out << s.iteration << ',' << s.energy << ',' << s.node_count << ',' << s.memory_bytes << ','
        << s.splits << ',' << s.joins << ',' << std::setprecision(6) << s.wall_ms
        << std::setprecision(17) << '\n';
  }
  out.precision(precision);
}

double data_derivative(double u, std::span<const float> f, std::span<const float> w, double eps,
                       double gamma) {
  double num = 0.0;
  double den = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i) {
    const double d = u - f[i];
    num += w[i] * d / gamma_eps(d * d, eps);
    den += w[i];
  }
  return num / (den + gamma);
}

double data_energy(double u, std::span<const float> f, std::span<const float> w, double eps,
                   double gamma) {
  double num = 0.0;
  double den = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i) {
    const double d = u - f[i];
    num += w[i] * gamma_eps(d * d, eps);
    den += w[i];
  }
  return num / (den + gamma);
}

RestructureAction restructure(bool is_leaf, int level, int max_depth, double next,
                              double tau_split, double tau_join, std::span<const float> children,
                              bool children_are_leaves) {
  if (is_leaf) {
    return std::abs(next) < tau_split && level < max_depth ? RestructureAction::kSplit
                                                           : RestructureAction::kKeep;
  }
  if (!(std::abs(next) > tau_join) || !children_are_leaves || children.empty()) {
    return RestructureAction::kKeep;
  }
  bool positive = true;
  bool negative = true;
  for (float v : children) {
    if (!(std::abs(v) > tau_join)) return RestructureAction::kKeep;
    positive = positive && v > 0.0f;
    negative = negative && v < 0.0f;
  }
  return positive || negative ? RestructureAction::kJoin : RestructureAction::kKeep;
}

// ---------------------------------------------------------------------------
// Initialization

EstimateAccumulator::EstimateAccumulator(int resolution)
    : sum_wf_(resolution), sum_w_(resolution), sum_f_(resolution) {}

void EstimateAccumulator::add(const ViewTsdf& view) {
  if (view.f.resolution() != sum_w_.resolution()) {
    throw std::invalid_argument("view resolution does not match the accumulator");
  }
  for (std::size_t i = 0; i < sum_w_.size(); ++i) {
    sum_wf_[i] += view.w[i] * view.f[i];
    sum_w_[i] += view.w[i];
    sum_f_[i] += view.f[i];
  }
  ++views_;
}

Grid3<float> EstimateAccumulator::estimate(double gamma) const {
  Grid3<float> u(sum_w_.resolution());
  for (std::size_t i = 0; i < u.size(); ++i) {
    if (sum_w_[i] > 0.0f) {
      u[i] = static_cast<float>(sum_wf_[i] / (static_cast<double>(sum_w_[i]) + gamma));
    } else {
      u[i] = sum_f_[i] >= 0.0f ? 1.0f : -1.0f;
    }
  }
  return u;
}

Grid3<float> initial_estimate(std::span<const ViewTsdf> views, double gamma) {
  if (views.empty()) throw std::invalid_argument("no views to fuse");
  EstimateAccumulator acc(views.front().f.resolution());
  for (const auto& v : views) acc.add(v);
  return acc.estimate(gamma);
}

Octree initialize(std::span<const ViewTsdf> views, const FusionParams& params) {
  return build_octree(initial_estimate(views, params.gamma), nullptr, params.tau,
                      params.max_depth);
}

std::vector<ViewTree> build_view_trees(std::span<const ViewTsdf> views,
                                       const FusionParams& params) {
  std::vector<ViewTree> trees;
  trees.reserve(views.size());
  for (const auto& v : views) trees.push_back(build_octree(v.f, &v.w, params.tau, params.max_depth));
  return trees;
}

// ---------------------------------------------------------------------------
// Octree pass

namespace {

// Walks the iterate depth-first while keeping, per view, the deepest view
// node at or above the current level.
class TreeWalker {
 public:
  TreeWalker(std::span<const ViewTree> views, int max_depth)
      : views_(views), stack_(static_cast<std::size_t>(max_depth + 1) * views.size(), 0) {
    f_.reserve(views.size());
    w_.reserve(views.size());
  }

  const NodeId* level_nodes(int level) const {
    return stack_.data() + static_cast<std::size_t>(level) * views_.size();
  }

  void descend(int level, int octant) {
    const NodeId* cur = level_nodes(level);
    NodeId* next = stack_.data() + static_cast<std::size_t>(level + 1) * views_.size();
    for (std::size_t i = 0; i < views_.size(); ++i) {
      const OctreeNode& n = views_[i][cur[i]];
      next[i] = n.is_leaf() ? cur[i] : n.children + octant;
    }
  }

  // Observed (w > 0) view samples at this level, in view order.
  void gather(int level) {
    f_.clear();
    w_.clear();
    const NodeId* cur = level_nodes(level);
    for (std::size_t i = 0; i < views_.size(); ++i) {
      const OctreeNode& n = views_[i][cur[i]];
      if (n.weight > 0.0f) {
        f_.push_back(n.value);
        w_.push_back(n.weight);
      }
    }
  }

  bool all_leaves(int level) const {
    const NodeId* cur = level_nodes(level);
    for (std::size_t i = 0; i < views_.size(); ++i) {
      if (!views_[i][cur[i]].is_leaf()) return false;
    }
    return true;
  }

  std::span<const float> f() const { return f_; }
  std::span<const float> w() const { return w_; }

 private:
  std::span<const ViewTree> views_;
  std::vector<NodeId> stack_;
  std::vector<float> f_;
  std::vector<float> w_;
};

template <class Sampler>
double node_update(const Sampler& sample, TreeWalker& walker, const Cell& c, int level,
                   const FusionParams& p, double* u) {
  const double div = divergence_of_flux(sample, c, level, p.max_depth, p.epsilon_tv);
  walker.gather(level);
  *u = sample(c, level);
  return descent_update(p.lambda, div, data_derivative(*u, walker.f(), walker.w(), p.epsilon, p.gamma));
}

class OctreePass {
 public:
  OctreePass(Octree& u, std::span<const ViewTree> views, const FusionParams& params, double step,
             int iteration, std::vector<JoinRecord>* log)
      : u_(u),
        params_(params),
        step_(step),
        iteration_(iteration),
        log_(log),
        walker_(views, params.max_depth),
        sample_([this](const Cell& c, int level) {
          return static_cast<double>(u_.snapshot_at(c, level));
        }) {}

  IterationStats run() {
    const auto start = Clock::now();
    stats_.iteration = iteration_;
    stats_.peak_nodes = u_.node_count();
    visit(Octree::root(), 0, Cell{});
    for (NodeId id : pending_joins_) u_.join(id);
    u_.propagate_means();
    u_.commit_snapshot();
    stats_.node_count = u_.node_count();
    stats_.memory_bytes = u_.memory_bytes();
    stats_.wall_ms = elapsed_ms(start);
    return stats_;
  }

 private:
  struct Visited {
    bool leaf = false;
    float value = 0.0f;
  };

  double next_value(const Cell& c, int level) {
    double u = 0.0;
    const double update = node_update(sample_, walker_, c, level, params_, &u);
    return finish(u + step_ * update, params_);
  }

  Visited visit(NodeId id, int level, const Cell& c) {
    if (u_[id].is_leaf()) return visit_leaf(id, level, c);

    const NodeId first = u_[id].children;
    std::array<float, 8> values{};
    bool leaves = true;
    for (int o = 0; o < 8; ++o) {
      walker_.descend(level, o);
      const Visited v = visit(first + o, level + 1, child_cell(c, o));
      values[o] = v.value;
      leaves = leaves && v.leaf;
    }
    // Children first; the node's own stencil is only needed when they qualify.
    if (restructure(false, level, params_.max_depth, params_.tau_join + 1.0, params_.tau_split,
                    params_.tau_join, values, leaves) != RestructureAction::kJoin) {
      return {false, 0.0f};
    }
    if (restructure(false, level, params_.max_depth, next_value(c, level), params_.tau_split,
                    params_.tau_join, values, leaves) != RestructureAction::kJoin) {
      return {false, 0.0f};
    }
    pending_joins_.push_back(id);
    ++stats_.joins;
    const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
    if (*lo < 0.0f && *hi > 0.0f) ++stats_.mixed_sign_joins;
    if (log_) log_->push_back(JoinRecord{iteration_, level, c, *lo, *hi});
    double mean = 0.0;
    for (float v : values) mean += v;
    return {true, static_cast<float>(mean / 8.0)};
  }

  Visited visit_leaf(NodeId id, int level, const Cell& c) {
    const double next = next_value(c, level);
    if (restructure(true, level, params_.max_depth, next, params_.tau_split, params_.tau_join) ==
        RestructureAction::kSplit) {
      u_.split(id, level);
      ++stats_.splits;
      stats_.peak_nodes = std::max(stats_.peak_nodes, u_.node_count());
      const NodeId first = u_[id].children;
      for (int o = 0; o < 8; ++o) {
        walker_.descend(level, o);
        visit(first + o, level + 1, child_cell(c, o));
      }
      return {false, 0.0f};
    }
    u_[id].value = static_cast<float>(next);
    return {true, u_[id].value};
  }

  Octree& u_;
  const FusionParams& params_;
  double step_;
  int iteration_;
  std::vector<JoinRecord>* log_;
  TreeWalker walker_;
  std::function<double(const Cell&, int)> sample_;
  std::vector<NodeId> pending_joins_;
  IterationStats stats_;
};

void check_views(const Octree& u, std::span<const ViewTree> views, const FusionParams& params) {
  if (views.empty()) throw std::invalid_argument("no views to fuse");
  if (u.max_depth() != params.max_depth) {
    throw std::invalid_argument("iterate depth does not match max_depth");
  }
  for (const auto& v : views) {
    if (v.max_depth() != params.max_depth) {
      throw std::invalid_argument("view tree depth does not match max_depth");
    }
  }
}

}  // namespace

IterationStats iterate(Octree& u, std::span<const ViewTree> views, const FusionParams& params,
                       double step, int iteration, std::vector<JoinRecord>* join_log) {
  check_views(u, views, params);
  return OctreePass(u, views, params, step, iteration, join_log).run();
}

OctreeEnergy::OctreeEnergy(std::span<const ViewTree> views, const FusionParams& params)
    : views_(views), params_(params) {}

const std::vector<std::pair<float, double>>& OctreeEnergy::coefficients(int level, const Cell& c) {
  const std::uint64_t key = (static_cast<std::uint64_t>(level) << 60) |
                            (static_cast<std::uint64_t>(c.x) << 40) |
                            (static_cast<std::uint64_t>(c.y) << 20) | static_cast<std::uint64_t>(c.z);
  const auto found = cache_.find(key);
  if (found != cache_.end()) return found->second;

  // Walk the view trees down to this cell, then collect every region below
  // it on which all views are constant.
  const int depth = params_.max_depth;
  TreeWalker walker(views_, depth);
  for (int l = 0; l < level; ++l) walker.descend(l, octant_toward(c, level, l));
  std::map<float, double> table;
  auto collect = [&](auto&& self, int l) -> void {
    if (l == depth || walker.all_leaves(l)) {
      walker.gather(l);
      double total = params_.gamma;
      for (float w : walker.w()) total += w;
      const double volume = std::ldexp(1.0, 3 * (depth - l));
      for (std::size_t i = 0; i < walker.f().size(); ++i) {
        table[walker.f()[i]] += volume * walker.w()[i] / total;
      }
      return;
    }
    for (int o = 0; o < 8; ++o) {
      walker.descend(l, o);
      self(self, l + 1);
    }
  };
  collect(collect, level);
  return cache_.emplace(key, std::vector<std::pair<float, double>>(table.begin(), table.end()))
      .first->second;
}

double OctreeEnergy::operator()(const Octree& u) {
  check_views(u, views_, params_);
  const int depth = params_.max_depth;
  const int n = u.resolution();
  TreeWalker walker(views_, depth);
  double data = 0.0;
  double tv = 0.0;

  // Inside a leaf the forward gradient vanishes except on the block's upper
  // faces.
  auto tv_block = [&](double value, int level, const Cell& c) {
    const int s = 1 << (depth - level);
    const Cell lo{c.x * s, c.y * s, c.z * s};
    const Cell hi{lo.x + s - 1, lo.y + s - 1, lo.z + s - 1};
    double sum = 0.0;
    std::size_t face = 0;
    for (int z = lo.z; z <= hi.z; ++z) {
      for (int y = lo.y; y <= hi.y; ++y) {
        const bool yz_face = y == hi.y || z == hi.z;
        for (int x = yz_face ? lo.x : hi.x; x <= hi.x; ++x) {
          const Cell cell{x, y, z};
          double g_sq = 0.0;
          for (int k = 0; k < 3; ++k) {
            if (cell[k] != hi[k] || cell[k] + 1 >= n) continue;
            Cell nb = cell;
            nb[k] += 1;
            const double g = u.lookup_at_level(nb, depth) - value;
            g_sq += g * g;
          }
          sum += gamma_eps(g_sq, params_.epsilon_tv);
          ++face;
        }
      }
    }
    const double cells = std::ldexp(1.0, 3 * (depth - level));
    tv += sum + (cells - static_cast<double>(face)) * params_.epsilon_tv;
  };

  auto walk = [&](auto&& self, NodeId id, int level, const Cell& c) -> void {
    const OctreeNode& node = u[id];
    if (!node.is_leaf()) {
      for (int o = 0; o < 8; ++o) {
        walker.descend(level, o);
        self(self, node.children + o, level + 1, child_cell(c, o));
      }
      return;
    }
    const double v = node.value;
    if (level == depth) {
      walker.gather(level);
      data += data_energy(v, walker.f(), walker.w(), params_.epsilon, params_.gamma);
    } else {
      for (const auto& [f, coeff] : coefficients(level, c)) {
        const double d = v - f;
        data += coeff * gamma_eps(d * d, params_.epsilon);
      }
    }
    tv_block(v, level, c);
  };
  walk(walk, Octree::root(), 0, Cell{});
  return data + params_.lambda * tv;
}

double octree_energy(const Octree& u, std::span<const ViewTree> views, const FusionParams& params) {
  return OctreeEnergy(views, params)(u);
}

FusionResult fuse(Octree initial, std::span<const ViewTree> views, const FusionParams& params,
                  bool record_joins) {
  params.validate();
  check_views(initial, views, params);
  FusionResult result;
  result.u = std::move(initial);
  IterationStats first;
  first.node_count = result.u.node_count();
  first.memory_bytes = result.u.memory_bytes();
  first.peak_nodes = first.node_count;
  result.stats.push_back(first);
  result.peak_nodes = first.node_count;
  OctreeEnergy energy(views, params);
  result.stats.back().energy = energy(result.u);
  for (int t = 0; t < params.iterations; ++t) {
    IterationStats s = iterate(result.u, views, params, params.step_at(t), t + 1,
                               record_joins ? &result.joins : nullptr);
    s.energy = energy(result.u);
    result.peak_nodes = std::max(result.peak_nodes, s.peak_nodes);
    result.stats.push_back(s);
  }
  return result;
}

FusionResult fuse(std::span<const ViewTsdf> views, const FusionParams& params) {
  if (views.empty()) throw std::invalid_argument("no views to fuse");
  params.validate();
  const auto trees = build_view_trees(views, params);
  return fuse(initialize(views, params), trees, params);
}

// ---------------------------------------------------------------------------
// Dense solver

namespace {

void check_dense(const Grid3<float>& u, std::span<const ViewTsdf> views,
                 const FusionParams& params) {
  if (views.empty()) throw std::invalid_argument("no views to fuse");
  if (u.resolution() != (1 << params.max_depth)) {
    throw std::invalid_argument("dense iterate does not match max_depth");
  }
  for (const auto& v : views) {
    if (v.f.resolution() != u.resolution()) {
      throw std::invalid_argument("view resolution does not match the iterate");
    }
  }
}

class DenseGather {
 public:
  explicit DenseGather(std::span<const ViewTsdf> views) : views_(views) {
    f_.reserve(views.size());
    w_.reserve(views.size());
  }
  void gather(std::size_t i) {
    f_.clear();
    w_.clear();
    for (const auto& v : views_) {
      if (v.w[i] > 0.0f) {
        f_.push_back(v.f[i]);
        w_.push_back(v.w[i]);
      }
    }
  }
  std::span<const float> f() const { return f_; }
  std::span<const float> w() const { return w_; }

 private:
  std::span<const ViewTsdf> views_;
  std::vector<float> f_;
  std::vector<float> w_;
};

// Forward-difference flux at every voxel; returns sum of lambda * Gamma(|grad|^2).
double dense_flux(const Grid3<float>& u, const FusionParams& p, std::vector<double>& px,
                  std::vector<double>& py, std::vector<double>& pz) {
  const int n = u.resolution();
  const double h = level_spacing(p.max_depth, p.max_depth);
  px.assign(u.size(), 0.0);
  py.assign(u.size(), 0.0);
  pz.assign(u.size(), 0.0);
  double tv = 0.0;
  for (int z = 0; z < n; ++z) {
    for (int y = 0; y < n; ++y) {
      for (int x = 0; x < n; ++x) {
        const std::size_t i = u.index(x, y, z);
        const double u0 = u[i];
        const std::array<double, 3> g{x + 1 < n ? (u(x + 1, y, z) - u0) / h : 0.0,
                                      y + 1 < n ? (u(x, y + 1, z) - u0) / h : 0.0,
                                      z + 1 < n ? (u(x, y, z + 1) - u0) / h : 0.0};
        const auto pf = flux(g, p.epsilon_tv);
        px[i] = pf[0];
        py[i] = pf[1];
        pz[i] = pf[2];
        tv += p.lambda * gamma_eps(g[0] * g[0] + g[1] * g[1] + g[2] * g[2], p.epsilon_tv);
      }
    }
  }
  return tv;
}

}  // namespace

double dense_energy(const Grid3<float>& u, std::span<const ViewTsdf> views,
                    const FusionParams& params) {
  check_dense(u, views, params);
  std::vector<double> px, py, pz;
  double energy = dense_flux(u, params, px, py, pz);
  DenseGather gather(views);
  for (std::size_t i = 0; i < u.size(); ++i) {
    gather.gather(i);
    energy += data_energy(u[i], gather.f(), gather.w(), params.epsilon, params.gamma);
  }
  return energy;
}

double dense_step(Grid3<float>& u, std::span<const ViewTsdf> views, const FusionParams& params,
                  double step) {
  check_dense(u, views, params);
  const int n = u.resolution();
  const double h = level_spacing(params.max_depth, params.max_depth);
  std::vector<double> px, py, pz;
  double energy = dense_flux(u, params, px, py, pz);
  Grid3<float> next(n);
  DenseGather gather(views);
  for (int z = 0; z < n; ++z) {
    for (int y = 0; y < n; ++y) {
      for (int x = 0; x < n; ++x) {
        const std::size_t i = u.index(x, y, z);
        double div = 0.0;
        div += (px[i] - (x > 0 ? px[i - 1] : 0.0)) / h;
        div += (py[i] - (y > 0 ? py[u.index(x, y - 1, z)] : 0.0)) / h;
        div += (pz[i] - (z > 0 ? pz[u.index(x, y, z - 1)] : 0.0)) / h;
        const double u0 = u[i];
        gather.gather(i);
        const double dd = data_derivative(u0, gather.f(), gather.w(), params.epsilon, params.gamma);
        energy += data_energy(u0, gather.f(), gather.w(), params.epsilon, params.gamma);
        next[i] = static_cast<float>(finish(u0 + step * descent_update(params.lambda, div, dd), params));
      }
    }
  }
  u = std::move(next);
  return energy;
}

DenseResult dense_fuse(std::span<const ViewTsdf> views, const FusionParams& params,
                       const Grid3<float>* initial) {
  params.validate();
  DenseResult result;
  result.u = initial ? *initial : initial_estimate(views, params.gamma);
  check_dense(result.u, views, params);
  const std::size_t cells = result.u.size();
  IterationStats first;
  first.node_count = cells;
  first.memory_bytes = cells * sizeof(float);
  first.peak_nodes = cells;
  result.stats.push_back(first);
  for (int t = 0; t < params.iterations; ++t) {
    const auto start = Clock::now();
    result.stats.back().energy = dense_step(result.u, views, params, params.step_at(t));
    IterationStats s = first;
    s.iteration = t + 1;
    s.wall_ms = elapsed_ms(start);
    result.stats.push_back(s);
  }
  result.stats.back().energy = dense_energy(result.u, views, params);
  return result;
}

}  // namespace octfusion
