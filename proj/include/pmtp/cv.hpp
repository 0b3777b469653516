#pragma once

#include "pmtp/bridge.hpp"
#include "pmtp/crossfit.hpp"
#include "pmtp/dataset.hpp"
#include "pmtp/policy.hpp"

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

namespace pmtp {

// Hyperparameter grid for the lambda schedules
//   lambda_H = c1 (log n'/n')^{1/2},  lambda_G' = c2 log n'/n',
//   lambda_G = c3 (log n'/n')^{1/2},  lambda_H' = c4 log n'/n',
// and outer bandwidth scales c5 (inner bandwidths use bw_inner_scale).
struct HyperGrid {
  std::vector<double> c1_list;
  std::vector<double> c2_list;
  std::vector<double> c3_list;
  std::vector<double> c4_list;
  std::vector<double> c5_list;
  double bw_inner_scale = 0.25;

  static HyperGrid defaults();
  void check() const;
};

// Empirical adversarial risks on a test fold. The test-fold kernel bandwidth
// is bw_fixed_scale times the median pairwise distance of the test rows; both
// regularizers are theta * log(n3)/n3.
double risk_h(const BridgeEstimate& h_candidate, const Dataset& test_rows,
              const TaperedShiftPolicy& policy, double theta = 1.0, double bw_fixed_scale = 0.25);
double risk_g(const BridgeEstimate& g_candidate, const Dataset& test_rows,
              const TaperedShiftPolicy& policy, double theta = 1.0, double bw_fixed_scale = 0.25);
double risk_h(const BridgeFn& h_candidate, const Dataset& test_rows,
              const TaperedShiftPolicy& policy, double theta = 1.0, double bw_fixed_scale = 0.25);
double risk_g(const BridgeFn& g_candidate, const Dataset& test_rows,
              const TaperedShiftPolicy& policy, double theta = 1.0, double bw_fixed_scale = 0.25);

struct SelectedBridges {
  BridgeEstimate h;
  BridgeEstimate g;
  std::string h_label;
  std::string g_label;
  double h_risk = 0.0;
  double g_risk = 0.0;
};

struct CvSettings {
  HyperGrid grid = HyperGrid::defaults();
  double theta = 1.0;
  double bw_fixed_scale = 0.25;  // CV-risk kernel scale
  std::optional<double> bw0_h;   // scale-1 base bandwidth overrides
  std::optional<double> bw0_g;
  std::optional<double> norm_bound;
  double ridge_jitter = 1e-10;
  unsigned n_threads = 1;
};

// Fits every grid configuration on train_rows, scores it on valid_rows, and
// returns the per-bridge argmin. Ties break toward the smallest
// (c_outer, c_inner, c5). bw_base_* are scale-1 median-heuristic bandwidths.
SelectedBridges select_bridges(const Dataset& train_rows, const Dataset& valid_rows,
                               const TaperedShiftPolicy& policy, double bw_base_h,
                               double bw_base_g, const CvSettings& settings);

struct CvCrossfitOptions {
  CvSettings cv;
  bool stratify_folds = false;
  double alpha = 0.05;
  bool want_influence = false;
  unsigned n_threads = 1;
};

// Full pipeline: standardize, fix base bandwidths, rotate
// (evaluate k / train k+1 / validate k+2, cyclically; for K > 3 the first
// ceil((K-1)/2) complement folds train and the rest validate), select bridges
// per fold, cross-fit.
DRResult crossfit_with_cv(const Dataset& ds, const TaperedShiftPolicy& policy, int K,
                          std::uint64_t seed, const CvCrossfitOptions& opts = {});

// Scale-1 base bandwidths on the full standardized complete-case sample
// (weighted median when weights differ from 1).
struct BaseBandwidths {
  double h;  // (A, L, W) rows
  double g;  // (A, L, Z) rows
};
BaseBandwidths base_bandwidths(const Dataset& ds);

}  // namespace pmtp
