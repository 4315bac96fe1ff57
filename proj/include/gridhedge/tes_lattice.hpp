#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "gridhedge/grid.hpp"

namespace gridhedge {

/// One step of the moment-matched multi-asset binomial lattice under the
/// driftless (transformed) measure. Branch k moves asset i up when bit
/// (n_assets - 1 - i) of k is clear, so branch 0 is "all up" and the last
/// branch is "all down".
struct LatticeStepModel {
  std::size_t n_assets = 0;
  double dt = 0.0;
  std::vector<double> log_step;      // h_i = ln u_i
  std::vector<double> up;            // u_i
  std::vector<double> down;          // d_i = 1 / u_i
  std::vector<double> branch_probs;  // P_k, 2^n entries
  Eigen::MatrixXd branch_factors;    // U, 2^n x n, row k pairs with P_k

  std::size_t n_branches() const { return branch_probs.size(); }
  static bool moves_up(std::size_t branch, std::size_t asset, std::size_t n_assets) {
    return ((branch >> (n_assets - 1 - asset)) & 1U) == 0;
  }
  double sign(std::size_t branch, std::size_t asset) const {
    return moves_up(branch, asset, n_assets) ? 1.0 : -1.0;
  }
};

/// Solves the moment-matching system for u_i, d_i = 1/u_i and P_k:
///   mean      h_i (sum_{k in I_i} P_k - sum_{k not in I_i} P_k) = -sigma_i^2 dt / 2
///   variance  h_i^2 sum P_k - h_i^2 (...)^2                     = sigma_i^2 dt
///   cross     h_i h_j (sum_{k in I_ij} P_k - sum_{k not in I_ij} P_k) = rho_ij sigma_i sigma_j dt
///   total     sum P_k = 1
/// The first two fix h_i^2 = sigma_i^2 dt + sigma_i^4 dt^2 / 4; the rest are
/// linear in P. For n <= 2 the system is square and solved exactly; for
/// larger n the solution closest to the independent product measure is taken.
/// Throws InfeasibleCalibration (naming the branch and a smaller feasible dt)
/// when some P_k leaves [0, 1].
LatticeStepModel calibrate_step_model(const GridEnsemble& grid, double dt);

/// Residuals of the four moment equations above, evaluated on `model`:
/// n mean rows, n variance rows, n(n-1)/2 cross rows (i < j), then the sum.
std::vector<double> moment_residuals(const LatticeStepModel& model, const GridEnsemble& grid);

struct TreeNode {
  std::vector<double> pg;  // generation, kW
  double value = 0.0;      // portfolio value V, kW
  double path_prob = 1.0;  // p
  double one_hop_prob = 1.0;
  std::uint64_t id = 0;
};

struct BackpropResult {
  double root_value = 0.0;
  /// The root's children (or the root alone for a depth-0 tree).
  std::vector<TreeNode> first_level;
};

/// Complete, non-recombining 2^n-ary tree stored as an implicit heap: the
/// root has id 0 and the children of node `id` are B*id + 1 .. B*id + B.
class LatticeTree {
 public:
  std::size_t n_assets() const { return n_assets_; }
  std::size_t n_branches() const { return branches_; }
  std::size_t depth() const { return depth_; }
  std::size_t size() const { return value_.size(); }

  std::uint64_t level_begin(std::size_t level) const;
  std::uint64_t level_end(std::size_t level) const { return level_begin(level + 1); }
  std::uint64_t first_child(std::uint64_t id) const { return branches_ * id + 1; }
  std::uint64_t parent(std::uint64_t id) const { return (id - 1) / branches_; }
  bool is_leaf(std::uint64_t id) const { return id >= level_begin(depth_); }

  std::span<const double> pg(std::uint64_t id) const {
    return {pg_.data() + id * n_assets_, n_assets_};
  }
  double value(std::uint64_t id) const { return value_[id]; }
  double path_prob(std::uint64_t id) const { return path_prob_[id]; }
  double one_hop_prob(std::uint64_t id) const { return one_hop_[id]; }

  TreeNode node(std::uint64_t id) const;
  std::vector<TreeNode> leaves() const;
  std::vector<TreeNode> level(std::size_t level) const;

 private:
  friend LatticeTree forward_propagate(std::span<const double>, const LatticeStepModel&,
                                       std::size_t, std::uint64_t);
  friend BackpropResult backpropagate(LatticeTree&, std::span<const double>);

  std::size_t n_assets_ = 0;
  std::size_t branches_ = 0;
  std::size_t depth_ = 0;
  std::vector<double> pg_;
  std::vector<double> value_;
  std::vector<double> path_prob_;
  std::vector<double> one_hop_;
};

inline constexpr std::uint64_t kDefaultMaxNodes = 10'000'000;

/// Expands every possible generation trajectory n_steps ahead. Throws
/// TreeTooLarge when the leaf count (2^n)^n_steps exceeds max_nodes.
LatticeTree forward_propagate(std::span<const double> root_pg, const LatticeStepModel& model,
                              std::size_t n_steps, std::uint64_t max_nodes = kDefaultMaxNodes);

/// Pooled shortfall max(sum_i (D_i - P_i), 0).
double tes_terminal_payoff(std::span<const double> p_g_tf, std::span<const double> demands);

/// Sets leaf values to the pooled shortfall and rolls expectations back to
/// the root. Throws MalformedTree on a tree/demand size mismatch.
BackpropResult backpropagate(LatticeTree& tree, std::span<const double> demands);

/// ReGU weights a, battery units b, and the least-squares residual norm of
/// the replication system (kW).
struct Allocation {
  std::vector<double> a;
  double b = 0.0;
  double residual = 0.0;
  bool rank_deficient = false;
};

/// Replicates the children's values with [P_G, p_b] r = V in the minimum-norm
/// least-squares sense. With a single node (no remaining steps) keeps the
/// previous ReGU weights and sets b = (V - a.P_G) / p_b.
Allocation compute_resources(double root_value, std::span<const TreeNode> first_level,
                             std::span<const double> prev_a, double p_b);

enum class LatticeEngine { ReferenceTree, Recombining };

struct TesValuation {
  double root_value = 0.0;
  std::vector<TreeNode> first_level;
};

/// Same root value and first-level nodes as forward_propagate + backpropagate,
/// computed on the recombining up-count grid ((n_steps + 1)^n states per
/// level), which is exact here because P_k does not depend on the state and
/// u_i d_i = 1.
TesValuation value_recombining(std::span<const double> root_pg, const LatticeStepModel& model,
                               std::span<const double> demands, std::size_t n_steps,
                               std::uint64_t max_nodes = kDefaultMaxNodes);

struct TesDecision {
  double value = 0.0;
  Allocation allocation;
};

/// Full dynamic allocation at the current state with n_steps lattice steps
/// left to the horizon.
TesDecision tes_allocate(const GridEnsemble& grid, const LatticeStepModel& model,
                         std::span<const double> pg_now, std::size_t n_steps,
                         std::span<const double> prev_a,
                         LatticeEngine engine = LatticeEngine::Recombining,
                         std::uint64_t max_nodes = kDefaultMaxNodes);

/// Allocation at the horizon itself: a_i = -1 and b = sum D / p_b when the
/// pooled shortfall is positive, otherwise all zero.
Allocation tes_terminal_allocation(std::span<const double> pg, std::span<const double> demands,
                                   double p_b);

struct McEstimate {
  double mean = 0.0;
  double std_error = 0.0;
};

/// Monte Carlo estimate of E^[max(sum (D_i - P_i(t_f)), 0)] from the state
/// pg_now at time t, sampling the driftless correlated GBM exactly.
McEstimate tes_value_mc(const GridEnsemble& grid, std::span<const double> pg_now, double t,
                        double t_f, std::size_t n_paths, std::uint64_t seed);

}  // namespace gridhedge
