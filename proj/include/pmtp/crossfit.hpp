#pragma once

#include "pmtp/bridge.hpp"
#include "pmtp/dataset.hpp"
#include "pmtp/policy.hpp"

#include <Eigen/Dense>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace pmtp {

// Bridge evaluated at an arbitrary original-scale point: (a, l, w) for the
// outcome bridge, (a, l, z) for the treatment bridge.
using BridgeFn =
    std::function<double(double, const Eigen::RowVectorXd&, const Eigen::RowVectorXd&)>;

struct FittedBridges {
  BridgeFn h;
  BridgeFn g;
  std::string h_label;  // chosen hyperparameters, when selected by CV
  std::string g_label;
};

BridgeFn as_bridge_fn(BridgeEstimate estimate);

// Produces the bridges for one cross-fitting fold, given the fit split (all
// rows outside the evaluation fold) and the fold id (1-based).
using FitProcedure = std::function<FittedBridges(const Dataset&, int)>;

struct FoldPlan {
  std::vector<int> assignments;  // fold id per row, 1..K
  int K = 0;
  bool stratified = false;
};

// Deterministic fold assignment; sizes differ by at most one (per quantile
// stratum when strat_values are given).
FoldPlan make_folds(Eigen::Index n, int K, std::uint64_t seed,
                    const std::optional<Eigen::VectorXd>& strat_values = std::nullopt);

struct DRResult {
  double psi_hat = 0.0;
  double se = 0.0;
  double ci_lower = 0.0;
  double ci_upper = 0.0;
  double tau_sq = 0.0;
  double n_effective = 0.0;     // sum Delta_i S_i I_S
  double image_proportion = 0.0;
  std::optional<Eigen::VectorXd> influence;
  std::vector<std::string> fold_h_labels;
  std::vector<std::string> fold_g_labels;
};

// phi(O; h, g) = h(q(A), L, W) I{(A, L) in S} + g(A, L, Z) {Y - h(A, L, W)}.
double phi_value(const Dataset& ds, Eigen::Index i, const BridgeFn& h, const BridgeFn& g,
                 const TaperedShiftPolicy& policy, bool s_flag);

// Effective target-population membership: user indicator AND policy domain.
bool effective_in_s(const Dataset& ds, const TaperedShiftPolicy& policy, Eigen::Index i);

struct EstimateOptions {
  double alpha = 0.05;        // Wald level 1 - alpha
  bool want_influence = false;
  unsigned n_threads = 1;     // folds processed concurrently, fixed-order aggregation
};

// K-fold cross-fitted doubly robust estimator with two-phase weights.
DRResult dr_crossfit(const Dataset& ds, const TaperedShiftPolicy& policy, const FoldPlan& plan,
                     const FitProcedure& fit_procedure, const EstimateOptions& opts = {});

// Single-split plug-in estimators with given bridges (no cross-fitting).
double or_estimate(const Dataset& ds, const BridgeFn& h, const TaperedShiftPolicy& policy);
double dqw_estimate(const Dataset& ds, const BridgeFn& g, const TaperedShiftPolicy& policy);
DRResult dr_plugin(const Dataset& ds, const FittedBridges& bridges,
                   const TaperedShiftPolicy& policy, const EstimateOptions& opts = {});

}  // namespace pmtp
