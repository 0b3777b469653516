#pragma once

#include "pmtp/dataset.hpp"
#include "pmtp/kernels.hpp"
#include "pmtp/policy.hpp"

#include <Eigen/Dense>
#include <optional>

namespace pmtp {

struct BridgeFitConfig {
  double lambda_outer = 1e-3;  // lambda_H (h fit) or lambda_G (g fit)
  double lambda_inner = 1e-2;  // lambda_G' (h fit) or lambda_H' (g fit)
  GaussianKernel kernel_outer;
  GaussianKernel kernel_inner;
  std::optional<double> norm_bound;  // RKHS-ball radius B; absent = unconstrained
  double ridge_jitter = 1e-10;
};

// Representer-form bridge estimate: f(x) = sum_j coeff_j K(x_std, anchor_j),
// multiplied by I_q(a) when mask_policy is set (treatment bridge). Points are
// given on the original scale; feature_transform maps them into the
// standardized space the anchors live in.
struct BridgeEstimate {
  Eigen::VectorXd coefficients;
  Eigen::MatrixXd anchors;
  GaussianKernel kernel;
  ColumnAffine feature_transform;
  std::optional<TaperedShiftPolicy> mask_policy;

  Eigen::VectorXd evaluate(const Eigen::MatrixXd& points_original) const;
  double evaluate_one(double a, const Eigen::RowVectorXd& l,
                      const Eigen::RowVectorXd& other) const;
};

// Feature rows for one fit split: only usable rows (observed A with
// A in S(L) union q(S(L))) are kept; n_split retains the full split size that
// scales the n^2 lambda and n^{-1} terms.
struct FitFeatures {
  Eigen::MatrixXd alw;          // [a_std, L_std, W_std]
  Eigen::MatrixXd alz;          // [a_std, L_std, Z_std]
  Eigen::MatrixXd alw_shifted;  // [q(a)_std, L_std, W_std] (rows outside S carry a unchanged)
  Eigen::VectorXd y;
  Eigen::VectorXd s_weights;  // sampling weights S_i
  Eigen::VectorXd r_mask;     // I_q(A_i)
  Eigen::VectorXd d_s;        // I{(A_i, L_i) in S}
  ColumnAffine alw_transform;
  ColumnAffine alz_transform;
  double n_split = 0;
  std::vector<Eigen::Index> usable;  // indices into the source dataset
};

// filter_s_image keeps only rows with A in S(L) union q(S(L)) (the fit-row
// rule); risk evaluation passes false and keeps every complete case, letting
// the R and d_s masks zero the excluded rows.
FitFeatures build_fit_features(const Dataset& ds, const TaperedShiftPolicy& policy,
                               bool filter_s_image = true);

// --- staged closed-form solvers ---
// The inner adversarial maximization collapses to a linear operator applied
// to the outer residual; the stage split lets grid search reuse it across
// outer configurations.

// W2 = S Gamma_G' K_G' S with Gamma_G' = 4^{-1} (n^{-1} S K_G' + lambda Id)^{-1}.
Eigen::MatrixXd h_inner_operator(const Eigen::MatrixXd& k_inner, const Eigen::VectorXd& s_weights,
                                 double n_split, double lambda_inner);

// gamma = (W2 K_H + n^2 lambda_H Id)^{-1} W2 y, with the norm-ball fallback
// when bound is set and the unconstrained solution violates it.
Eigen::VectorXd h_outer_solve(const Eigen::MatrixXd& w2, const Eigen::MatrixXd& k_outer,
                              const Eigen::VectorXd& y, double n_split, double lambda_outer,
                              const std::optional<double>& bound, double jitter);

struct GInnerOperator {
  Eigen::MatrixXd vk;      // S R Gamma_H' K_H' R S
  Eigen::VectorXd target;  // S R Gamma_H' K_shift^T S d_s
};

// Gamma_H' = 4^{-1} (n^{-1} K_H' S R + lambda Id)^{-1}.
GInnerOperator g_inner_operator(const Eigen::MatrixXd& k_inner, const Eigen::MatrixXd& k_shift,
                                const Eigen::VectorXd& r_mask, const Eigen::VectorXd& d_s,
                                const Eigen::VectorXd& s_weights, double n_split,
                                double lambda_inner);

// theta = (VK K_G + n^2 lambda_G Id)^{-1} target, with norm-ball fallback.
Eigen::VectorXd g_outer_solve(const GInnerOperator& inner, const Eigen::MatrixXd& k_outer,
                              double n_split, double lambda_outer,
                              const std::optional<double>& bound, double jitter);

// --- dataset-level fits ---
// The dataset passed in is the fit split: its row count is the n that scales
// the regularization. Weights and the missingness mask are honored; *_weighted
// are the two-phase entry points, the plain versions require complete data.
BridgeEstimate fit_h_weighted(const Dataset& ds, const BridgeFitConfig& config,
                              const TaperedShiftPolicy& policy);
BridgeEstimate fit_g_weighted(const Dataset& ds, const BridgeFitConfig& config,
                              const TaperedShiftPolicy& policy);
BridgeEstimate fit_h(const Dataset& ds, const BridgeFitConfig& config,
                     const TaperedShiftPolicy& policy);
BridgeEstimate fit_g(const Dataset& ds, const BridgeFitConfig& config,
                     const TaperedShiftPolicy& policy);

}  // namespace pmtp
