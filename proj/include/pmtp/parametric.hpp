#pragma once

#include "pmtp/crossfit.hpp"
#include "pmtp/dataset.hpp"
#include "pmtp/policy.hpp"
#include "pmtp/simulation.hpp"

#include <Eigen/Dense>
#include <optional>

namespace pmtp {

// Logistic-type outcome bridge
//   h(a, l, w; phi) = (1 + kappa_const/2 phi_3^2) expit(phi_0 + phi_1 a + phi_2 l
//                                                       + phi_3 w + phi_4 a^2).
// A 4-entry phi drops the quadratic term (the misspecified variant).
struct OutcomeBridgeParams {
  Eigen::VectorXd phi;
  double kappa_const = 0.9733;  // E[Wtilde^2] for the +-3 sd truncation

  bool quadratic() const { return phi.size() == 5; }
};

double h_param(double a, double l, double w, const OutcomeBridgeParams& params);

// Exponential-tilt treatment bridge
//   g(a, l, z; eta) = rho(a; eta) exp[{eta_0 a + eta_1 l + eta_2 z + eta_3 V(a)} V(a)],
// zero outside the policy image. taper_term = false replaces eta_3 V(a) by
// eta_3 (the misspecified variant).
struct TreatmentBridgeParams {
  Eigen::VectorXd eta;  // 4 entries
  TaperedShiftPolicy policy;
  bool taper_term = true;
};

double g_param(double a, double l, double z, const TreatmentBridgeParams& params);
double rho_param(double a, const TreatmentBridgeParams& params);

// Estimating-equation fits (scalar L, Z, W). Moment conditions:
//   E_n[Delta S {Y - h} (1, A, L, Z[, A^2])^T] = 0
//   E_n[Delta S {I_S (1, q(A), L, W)^T - g (1, A, L, W)^T}] = 0
OutcomeBridgeParams fit_h_param(const Dataset& ds, bool misspecified = false,
                                double kappa_const = 0.9733);
TreatmentBridgeParams fit_g_param(const Dataset& ds, const TaperedShiftPolicy& policy,
                                  bool misspecified = false);

enum class ParametricKind { OR, DQW, DR };

// Plug-in estimator of the given kind with influence-function (stacked
// Z-estimator sandwich) standard errors.
DRResult psi_parametric(const Dataset& ds, ParametricKind kind,
                        const std::optional<OutcomeBridgeParams>& h_params,
                        const std::optional<TreatmentBridgeParams>& g_params,
                        const TaperedShiftPolicy& policy, double alpha = 0.05,
                        bool want_influence = false);

// Analytic bridge functions implied by the structural model; test oracles.
// The treatment bridge is exact when beta8 = 0 and a small-beta8
// approximation otherwise.
OutcomeBridgeParams analytic_h_oracle(const DGPConfig& config);
TreatmentBridgeParams analytic_g_oracle(const DGPConfig& config,
                                        const TaperedShiftPolicy& policy);

// E[Wtilde^2] for the +-3 sd truncated standard normal: 1 - 6 phi(3)/(2 Phi(3) - 1).
double truncnorm3_variance();

BridgeFn as_bridge_fn(const OutcomeBridgeParams& params);
BridgeFn as_bridge_fn(const TreatmentBridgeParams& params);

}  // namespace pmtp
