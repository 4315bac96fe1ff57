#include "gridhedge/tes_lattice.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "gridhedge/error.hpp"
#include "gridhedge/parallel.hpp"
#include "gridhedge/random.hpp"

namespace gridhedge {

std::vector<GbmParams> GridEnsemble::params() const {
  std::vector<GbmParams> out;
  out.reserve(microgrids.size());
  for (const auto& m : microgrids) out.push_back(m.gbm);
  return out;
}

std::vector<double> GridEnsemble::demands() const {
  std::vector<double> out;
  out.reserve(microgrids.size());
  for (const auto& m : microgrids) out.push_back(m.demand_kw);
  return out;
}

void GridEnsemble::validate() const {
  if (microgrids.empty()) throw Error(ErrorKind::InvalidArgument, "grid has no microgrids");
  if (corr.size() != microgrids.size()) {
    throw Error(ErrorKind::LengthMismatch, "correlation matrix size differs from microgrid count");
  }
  for (const auto& m : microgrids) {
    if (!(m.demand_kw > 0.0)) throw Error(ErrorKind::InvalidArgument, "demand must be > 0 kW");
    m.gbm.validate();
  }
  if (!(battery_unit_kw > 0.0)) {
    throw Error(ErrorKind::InvalidArgument, "battery unit power must be > 0 kW");
  }
  (void)cholesky_factor(corr);
}

namespace {

// Checked integer power; returns false on overflow past `limit`.
bool checked_pow(std::uint64_t base, std::size_t exp, std::uint64_t limit, std::uint64_t& out) {
  out = 1;
  for (std::size_t e = 0; e < exp; ++e) {
    if (out > limit / base) return false;
    out *= base;
  }
  return true;
}

struct MomentSystem {
  Eigen::MatrixXd lhs;
  Eigen::VectorXd rhs;
};

// Rows: n mean equations (divided by h_i), n(n-1)/2 cross equations
// (divided by h_i h_j), then sum P = 1.
MomentSystem linear_moment_system(const GridEnsemble& grid, double dt,
                                  const std::vector<double>& h) {
  const std::size_t n = grid.size();
  const std::size_t branches = std::size_t{1} << n;
  const std::size_t rows = n + n * (n - 1) / 2 + 1;
  MomentSystem sys{Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(rows),
                                         static_cast<Eigen::Index>(branches)),
                   Eigen::VectorXd::Zero(static_cast<Eigen::Index>(rows))};
  auto sign = [n](std::size_t k, std::size_t i) {
    return LatticeStepModel::moves_up(k, i, n) ? 1.0 : -1.0;
  };
  Eigen::Index r = 0;
  for (std::size_t i = 0; i < n; ++i, ++r) {
    const double s = grid.microgrids[i].gbm.sigma;
    for (std::size_t k = 0; k < branches; ++k) sys.lhs(r, static_cast<Eigen::Index>(k)) = sign(k, i);
    sys.rhs(r) = -0.5 * s * s * dt / h[i];
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j, ++r) {
      for (std::size_t k = 0; k < branches; ++k) {
        sys.lhs(r, static_cast<Eigen::Index>(k)) = sign(k, i) * sign(k, j);
      }
      sys.rhs(r) = grid.corr(i, j) * grid.microgrids[i].gbm.sigma * grid.microgrids[j].gbm.sigma *
                   dt / (h[i] * h[j]);
    }
  }
  sys.lhs.row(r).setOnes();
  sys.rhs(r) = 1.0;
  return sys;
}

std::vector<double> log_steps(const GridEnsemble& grid, double dt) {
  std::vector<double> h(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const double v = grid.microgrids[i].gbm.sigma * grid.microgrids[i].gbm.sigma * dt;
    h[i] = std::sqrt(v + 0.25 * v * v);
  }
  return h;
}

Eigen::VectorXd solve_branch_probs(const GridEnsemble& grid, double dt,
                                   const std::vector<double>& h) {
  const std::size_t n = grid.size();
  const auto sys = linear_moment_system(grid, dt, h);
  if (n <= 2) return sys.lhs.fullPivLu().solve(sys.rhs);

  // Underdetermined: stay as close as possible to the independent product
  // measure with the right marginals.
  const std::size_t branches = std::size_t{1} << n;
  Eigen::VectorXd prior(static_cast<Eigen::Index>(branches));
  for (std::size_t k = 0; k < branches; ++k) {
    double p = 1.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double m = sys.rhs(static_cast<Eigen::Index>(i));
      p *= 0.5 * (1.0 + (LatticeStepModel::moves_up(k, i, n) ? m : -m));
    }
    prior(static_cast<Eigen::Index>(k)) = p;
  }
  const Eigen::VectorXd delta =
      sys.lhs.completeOrthogonalDecomposition().solve(sys.rhs - sys.lhs * prior);
  return prior + delta;
}

// Index of the first branch probability outside [0, 1], or -1.
Eigen::Index infeasible_branch(const Eigen::VectorXd& probs) {
  constexpr double tol = 1e-14;
  for (Eigen::Index k = 0; k < probs.size(); ++k) {
    if (!(probs(k) >= -tol && probs(k) <= 1.0 + tol)) return k;
  }
  return -1;
}

}  // namespace

LatticeStepModel calibrate_step_model(const GridEnsemble& grid, double dt) {
  if (!(dt > 0.0) || !std::isfinite(dt)) throw Error(ErrorKind::InvalidArgument, "dt must be > 0");
  if (grid.microgrids.empty()) throw Error(ErrorKind::InvalidArgument, "grid has no microgrids");
  for (const auto& m : grid.microgrids) m.gbm.validate();
  if (grid.corr.size() != grid.size()) {
    throw Error(ErrorKind::LengthMismatch, "correlation matrix size differs from microgrid count");
  }
  (void)cholesky_factor(grid.corr);
  const std::size_t n = grid.size();
  if (n > 20) throw Error(ErrorKind::InvalidArgument, "too many microgrids for a 2^n lattice");

  const auto h = log_steps(grid, dt);
  Eigen::VectorXd probs = solve_branch_probs(grid, dt, h);
  if (const auto bad = infeasible_branch(probs); bad >= 0) {
    double suggestion = dt;
    bool found = false;
    for (int halving = 0; halving < 40 && !found; ++halving) {
      suggestion *= 0.5;
      found = infeasible_branch(solve_branch_probs(grid, suggestion, log_steps(grid, suggestion))) < 0;
    }
    std::ostringstream msg;
    msg << "branch probability P_" << bad << " = " << probs(bad) << " is outside [0,1] at dt = "
        << dt << " h";
    if (found) {
      msg << "; try dt <= " << suggestion << " h";
    } else {
      msg << "; no feasible dt found (check the correlation matrix)";
    }
    throw Error(ErrorKind::InfeasibleCalibration, msg.str());
  }

  LatticeStepModel model;
  model.n_assets = n;
  model.dt = dt;
  model.log_step = h;
  for (std::size_t i = 0; i < n; ++i) {
    model.up.push_back(std::exp(h[i]));
    model.down.push_back(std::exp(-h[i]));
  }
  const std::size_t branches = std::size_t{1} << n;
  model.branch_probs.resize(branches);
  model.branch_factors.resize(static_cast<Eigen::Index>(branches), static_cast<Eigen::Index>(n));
  for (std::size_t k = 0; k < branches; ++k) {
    model.branch_probs[k] = std::clamp(probs(static_cast<Eigen::Index>(k)), 0.0, 1.0);
    for (std::size_t i = 0; i < n; ++i) {
      model.branch_factors(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(i)) =
          LatticeStepModel::moves_up(k, i, n) ? model.up[i] : model.down[i];
    }
  }
  return model;
}

std::vector<double> moment_residuals(const LatticeStepModel& model, const GridEnsemble& grid) {
  const std::size_t n = model.n_assets;
  const std::size_t branches = model.n_branches();
  const double dt = model.dt;
  std::vector<double> res;
  std::vector<double> signed_mass(n, 0.0);
  double total = 0.0;
  for (std::size_t k = 0; k < branches; ++k) total += model.branch_probs[k];
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < branches; ++k) {
      signed_mass[i] += model.sign(k, i) * model.branch_probs[k];
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    const double s = grid.microgrids[i].gbm.sigma;
    res.push_back(model.log_step[i] * signed_mass[i] + 0.5 * s * s * dt);
  }
  for (std::size_t i = 0; i < n; ++i) {
    const double s = grid.microgrids[i].gbm.sigma;
    const double h2 = model.log_step[i] * model.log_step[i];
    res.push_back(h2 * total - h2 * signed_mass[i] * signed_mass[i] - s * s * dt);
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      double agree = 0.0;
      for (std::size_t k = 0; k < branches; ++k) {
        agree += model.sign(k, i) * model.sign(k, j) * model.branch_probs[k];
      }
      res.push_back(model.log_step[i] * model.log_step[j] * agree -
                    grid.corr(i, j) * grid.microgrids[i].gbm.sigma *
                        grid.microgrids[j].gbm.sigma * dt);
    }
  }
  res.push_back(total - 1.0);
  return res;
}

std::uint64_t LatticeTree::level_begin(std::size_t level) const {
  // (B^level - 1) / (B - 1)
  std::uint64_t begin = 0, width = 1;
  for (std::size_t l = 0; l < level; ++l) {
    begin += width;
    width *= branches_;
  }
  return begin;
}

TreeNode LatticeTree::node(std::uint64_t id) const {
  if (id >= size()) throw Error(ErrorKind::InvalidArgument, "node id out of range");
  const auto g = pg(id);
  return TreeNode{{g.begin(), g.end()}, value_[id], path_prob_[id], one_hop_[id], id};
}

std::vector<TreeNode> LatticeTree::level(std::size_t lvl) const {
  std::vector<TreeNode> out;
  for (auto id = level_begin(lvl); id < level_end(lvl); ++id) out.push_back(node(id));
  return out;
}

std::vector<TreeNode> LatticeTree::leaves() const { return level(depth_); }

LatticeTree forward_propagate(std::span<const double> root_pg, const LatticeStepModel& model,
                              std::size_t n_steps, std::uint64_t max_nodes) {
  const std::size_t n = model.n_assets;
  if (root_pg.size() != n) {
    throw Error(ErrorKind::LengthMismatch, "root generation length differs from asset count");
  }
  for (double p : root_pg) {
    if (!(p > 0.0)) throw Error(ErrorKind::NonPositiveGeneration, "root generation must be > 0");
  }
  const std::uint64_t branches = model.n_branches();
  std::uint64_t leaves = 0;
  if (!checked_pow(branches, n_steps, max_nodes, leaves) || leaves > max_nodes) {
    throw Error(ErrorKind::TreeTooLarge, "tree with " + std::to_string(branches) + "^" +
                                             std::to_string(n_steps) +
                                             " leaves exceeds the node budget of " +
                                             std::to_string(max_nodes));
  }

  LatticeTree tree;
  tree.n_assets_ = n;
  tree.branches_ = branches;
  tree.depth_ = n_steps;
  const std::uint64_t total = tree.level_begin(n_steps + 1);
  tree.pg_.resize(total * n);
  tree.value_.assign(total, 0.0);
  tree.path_prob_.resize(total);
  tree.one_hop_.resize(total);

  std::copy(root_pg.begin(), root_pg.end(), tree.pg_.begin());
  tree.path_prob_[0] = 1.0;
  tree.one_hop_[0] = 1.0;
  const std::uint64_t internal = tree.level_begin(n_steps);
  for (std::uint64_t parent = 0; parent < internal; ++parent) {
    const double* parent_pg = tree.pg_.data() + parent * n;
    for (std::uint64_t k = 0; k < branches; ++k) {
      const std::uint64_t child = branches * parent + 1 + k;
      double* child_pg = tree.pg_.data() + child * n;
      for (std::size_t i = 0; i < n; ++i) {
        child_pg[i] = parent_pg[i] *
                      model.branch_factors(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(i));
      }
      tree.one_hop_[child] = model.branch_probs[k];
      tree.path_prob_[child] = tree.path_prob_[parent] * model.branch_probs[k];
    }
  }
  return tree;
}

double tes_terminal_payoff(std::span<const double> p_g_tf, std::span<const double> demands) {
  if (p_g_tf.size() != demands.size()) {
    throw Error(ErrorKind::LengthMismatch, "generation and demand vectors differ in length");
  }
  double net = 0.0;
  for (std::size_t i = 0; i < demands.size(); ++i) net += demands[i] - p_g_tf[i];
  return std::max(net, 0.0);
}

BackpropResult backpropagate(LatticeTree& tree, std::span<const double> demands) {
  if (demands.size() != tree.n_assets_ || tree.branches_ < 2 ||
      tree.value_.size() != tree.level_begin(tree.depth_ + 1) ||
      tree.pg_.size() != tree.value_.size() * tree.n_assets_) {
    throw Error(ErrorKind::MalformedTree, "tree is incomplete or does not match the demand vector");
  }
  const std::uint64_t internal = tree.level_begin(tree.depth_);
  for (std::uint64_t id = internal; id < tree.value_.size(); ++id) {
    tree.value_[id] = tes_terminal_payoff(tree.pg(id), demands);
  }
  for (std::uint64_t id = internal; id-- > 0;) {
    const std::uint64_t first = tree.first_child(id);
    double v = 0.0;
    for (std::uint64_t c = first; c < first + tree.branches_; ++c) {
      v += tree.one_hop_[c] * tree.value_[c];
    }
    tree.value_[id] = v;
  }
  BackpropResult out;
  out.root_value = tree.value_[0];
  out.first_level = tree.depth_ == 0 ? tree.level(0) : tree.level(1);
  return out;
}

Allocation compute_resources(double root_value, std::span<const TreeNode> first_level,
                             std::span<const double> prev_a, double p_b) {
  if (!(p_b > 0.0)) throw Error(ErrorKind::InvalidArgument, "battery unit power must be > 0");
  if (first_level.empty()) throw Error(ErrorKind::MalformedTree, "no first-level nodes");
  const std::size_t n = first_level.front().pg.size();
  Allocation out;

  if (first_level.size() == 1) {
    if (prev_a.size() != n) {
      throw Error(ErrorKind::LengthMismatch, "previous ReGU weights needed at the final step");
    }
    out.a.assign(prev_a.begin(), prev_a.end());
    double held = 0.0;
    for (std::size_t i = 0; i < n; ++i) held += out.a[i] * first_level.front().pg[i];
    out.b = (root_value - held) / p_b;
    return out;
  }

  const auto rows = static_cast<Eigen::Index>(first_level.size());
  const auto cols = static_cast<Eigen::Index>(n + 1);
  Eigen::MatrixXd design(rows, cols);
  Eigen::VectorXd target(rows);
  for (Eigen::Index j = 0; j < rows; ++j) {
    const auto& node = first_level[static_cast<std::size_t>(j)];
    if (node.pg.size() != n) throw Error(ErrorKind::MalformedTree, "ragged node generation vectors");
    for (std::size_t i = 0; i < n; ++i) design(j, static_cast<Eigen::Index>(i)) = node.pg[i];
    design(j, cols - 1) = p_b;
    target(j) = node.value;
  }
  const auto cod = design.completeOrthogonalDecomposition();
  const Eigen::VectorXd r = cod.solve(target);
  out.a.assign(r.data(), r.data() + n);
  out.b = r(cols - 1);
  out.residual = (design * r - target).norm();
  out.rank_deficient = cod.rank() < cols;
  return out;
}

TesValuation value_recombining(std::span<const double> root_pg, const LatticeStepModel& model,
                               std::span<const double> demands, std::size_t n_steps,
                               std::uint64_t max_nodes) {
  const std::size_t n = model.n_assets;
  if (root_pg.size() != n || demands.size() != n) {
    throw Error(ErrorKind::LengthMismatch, "root generation / demand length differs from asset count");
  }
  for (double p : root_pg) {
    if (!(p > 0.0)) throw Error(ErrorKind::NonPositiveGeneration, "root generation must be > 0");
  }
  std::uint64_t states = 0;
  if (!checked_pow(n_steps + 1, n, max_nodes, states) || states > max_nodes) {
    throw Error(ErrorKind::TreeTooLarge, "recombining lattice exceeds the node budget");
  }
  const std::size_t branches = model.n_branches();

  TesValuation out;
  if (n_steps == 0) {
    out.root_value = tes_terminal_payoff(root_pg, demands);
    out.first_level.push_back(TreeNode{{root_pg.begin(), root_pg.end()}, out.root_value, 1.0, 1.0, 0});
    return out;
  }

  // State = per-asset up-count vector c in [0, s]^n, mixed radix (s + 1).
  auto decode = [n](std::uint64_t idx, std::size_t radix, std::vector<std::size_t>& c) {
    for (std::size_t i = n; i-- > 0;) {
      c[i] = idx % radix;
      idx /= radix;
    }
  };
  std::vector<std::size_t> counts(n);
  std::vector<double> pg(n);
  std::vector<double> next;
  {
    const std::size_t radix = n_steps + 1;
    std::uint64_t size = 1;
    for (std::size_t i = 0; i < n; ++i) size *= radix;
    next.resize(size);
    for (std::uint64_t idx = 0; idx < size; ++idx) {
      decode(idx, radix, counts);
      for (std::size_t i = 0; i < n; ++i) {
        const double moves = 2.0 * static_cast<double>(counts[i]) - static_cast<double>(n_steps);
        pg[i] = root_pg[i] * std::exp(model.log_step[i] * moves);
      }
      next[idx] = tes_terminal_payoff(pg, demands);
    }
  }
  // Up-count offsets of each branch, expressed in the radix of level s + 1.
  std::vector<double> current;
  for (std::size_t s = n_steps; s-- > 0;) {
    const std::size_t radix = s + 1, next_radix = s + 2;
    std::uint64_t size = 1;
    for (std::size_t i = 0; i < n; ++i) size *= radix;
    current.assign(size, 0.0);
    for (std::uint64_t idx = 0; idx < size; ++idx) {
      decode(idx, radix, counts);
      double v = 0.0;
      for (std::size_t k = 0; k < branches; ++k) {
        std::uint64_t child = 0;
        for (std::size_t i = 0; i < n; ++i) {
          child = child * next_radix + counts[i] + (LatticeStepModel::moves_up(k, i, n) ? 1 : 0);
        }
        v += model.branch_probs[k] * next[child];
      }
      current[idx] = v;
    }
    if (s == 1) {
      for (std::size_t k = 0; k < branches; ++k) {
        std::uint64_t idx = 0;
        TreeNode node;
        node.pg.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
          const bool up = LatticeStepModel::moves_up(k, i, n);
          idx = idx * 2 + (up ? 1 : 0);
          node.pg[i] = root_pg[i] * (up ? model.up[i] : model.down[i]);
        }
        node.value = current[idx];
        node.path_prob = model.branch_probs[k];
        node.one_hop_prob = model.branch_probs[k];
        node.id = k + 1;
        out.first_level.push_back(std::move(node));
      }
    }
    next.swap(current);
  }
  out.root_value = next[0];
  if (n_steps == 1) {
    // The loop above never visited level 1 as "current"; level 1 is the leaves.
    for (std::size_t k = 0; k < branches; ++k) {
      TreeNode node;
      node.pg.resize(n);
      for (std::size_t i = 0; i < n; ++i) {
        node.pg[i] = root_pg[i] * (LatticeStepModel::moves_up(k, i, n) ? model.up[i] : model.down[i]);
      }
      node.value = tes_terminal_payoff(node.pg, demands);
      node.path_prob = model.branch_probs[k];
      node.one_hop_prob = model.branch_probs[k];
      node.id = k + 1;
      out.first_level.push_back(std::move(node));
    }
  }
  return out;
}

TesDecision tes_allocate(const GridEnsemble& grid, const LatticeStepModel& model,
                         std::span<const double> pg_now, std::size_t n_steps,
                         std::span<const double> prev_a, LatticeEngine engine,
                         std::uint64_t max_nodes) {
  const auto demands = grid.demands();
  TesDecision out;
  std::vector<double> carried(prev_a.begin(), prev_a.end());
  if (carried.empty()) carried.assign(grid.size(), 0.0);
  if (engine == LatticeEngine::ReferenceTree) {
    auto tree = forward_propagate(pg_now, model, n_steps, max_nodes);
    const auto bp = backpropagate(tree, demands);
    out.value = bp.root_value;
    out.allocation = compute_resources(bp.root_value, bp.first_level, carried, grid.battery_unit_kw);
  } else {
    const auto val = value_recombining(pg_now, model, demands, n_steps, max_nodes);
    out.value = val.root_value;
    out.allocation =
        compute_resources(val.root_value, val.first_level, carried, grid.battery_unit_kw);
  }
  return out;
}

Allocation tes_terminal_allocation(std::span<const double> pg, std::span<const double> demands,
                                   double p_b) {
  if (!(p_b > 0.0)) throw Error(ErrorKind::InvalidArgument, "battery unit power must be > 0");
  Allocation out;
  const bool shortfall = tes_terminal_payoff(pg, demands) > 0.0;
  double total_demand = 0.0;
  for (double d : demands) total_demand += d;
  out.a.assign(pg.size(), shortfall ? -1.0 : 0.0);
  out.b = shortfall ? total_demand / p_b : 0.0;
  return out;
}

McEstimate tes_value_mc(const GridEnsemble& grid, std::span<const double> pg_now, double t,
                        double t_f, std::size_t n_paths, std::uint64_t seed) {
  if (!(t >= 0.0 && t < t_f)) throw Error(ErrorKind::TimeOutOfRange, "need 0 <= t < t_f");
  if (n_paths < 2) throw Error(ErrorKind::InvalidArgument, "need at least 2 paths");
  if (pg_now.size() != grid.size()) {
    throw Error(ErrorKind::LengthMismatch, "generation length differs from microgrid count");
  }
  for (double p : pg_now) {
    if (!(p > 0.0)) throw Error(ErrorKind::NonPositiveGeneration, "generation must be > 0");
  }
  const GbmSimulator sim(grid.params(), grid.corr);
  const auto demands = grid.demands();
  const std::size_t n = grid.size();
  const double tau = t_f - t;
  std::vector<double> payoff(n_paths);
  parallel_for(n_paths, [&](std::size_t p) {
    std::vector<double> path(2 * n);
    sim.simulate_path(pg_now, tau, 1, Measure::Transformed, seed, p, path);
    payoff[p] = tes_terminal_payoff(std::span<const double>(path).subspan(n, n), demands);
  });
  double mean = 0.0;
  for (double v : payoff) mean += v;
  mean /= static_cast<double>(n_paths);
  double ss = 0.0;
  for (double v : payoff) ss += (v - mean) * (v - mean);
  const double var = ss / static_cast<double>(n_paths - 1);
  return {mean, std::sqrt(var / static_cast<double>(n_paths))};
}

}  // namespace gridhedge
