#pragma once

#include "pmtp/dataset.hpp"
#include "pmtp/policy.hpp"

#include <Eigen/Dense>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace pmtp {

// Truncated-normal structural model:
//   L ~ TN_c(0, 1)                      U ~ TN_c(b1 L, 1)
//   Z ~ TN_c(b2 L + b3 U, 1)            W ~ TN_c(b4 L + b5 U, 1)
//   A ~ TN_[c,d](b6 L + b7 U + b8 Z, 1)
//   Y ~ Bernoulli(expit(mu + b9 L + b10 U + b11 A + b12 W + gamma A^2))
// where TN_c truncates at mean +- 3 sd.
struct DGPConfig {
  double beta1 = 0.5, beta2 = 0.2, beta3 = 2.0, beta4 = 0.5, beta5 = -2.0, beta6 = 0.3;
  double beta7 = 1.0, beta8 = 0.0, beta9 = 0.5, beta10 = -1.0, beta11 = -1.5, beta12 = 0.0;
  double c = -2.0, d = 2.0;
  double mu = -1.0, gamma_coef = -0.75;

  static DGPConfig main_scenario(double beta_z, double beta_w);
  static DGPConfig case2_scenario(double beta_z);  // Z -> A and W -> Y arrows

  double outcome_probability(double l_val, double u_val, double a_val, double w_val) const;
};

// Inverse-CDF sampler for N(mu, sigma_sq) truncated to [lo, hi].
double sample_truncnorm(double mu, double sigma_sq, double lo, double hi, std::mt19937_64& rng);

// Case-cohort style two-phase sampling: P(Delta = 1 | Y) = min(1, p0 + (1 - p0) Y).
struct MissingModel {
  double p0 = 0.5;
};

struct Generated {
  Dataset dataset;
  Eigen::VectorXd u;  // unobservable; kept only for oracle tests
};

// Deterministic given seed; every column draws from its own substream, so
// adding a column never perturbs the others.
Generated generate(const DGPConfig& config, Eigen::Index n, std::uint64_t seed,
                   const std::optional<MissingModel>& missing_model = std::nullopt);

struct MonteCarloValue {
  double value = 0.0;
  double mc_se = 0.0;
};

// Ground-truth counterfactual mean E[Y{q(A)}] (restricted to A in S when
// s_only) by Monte Carlo over (L, U, Z, W, A), using the conditional success
// probability directly. Deterministic given (seed, n_shards).
MonteCarloValue true_psi(const DGPConfig& config, const TaperedShiftPolicy& policy, bool s_only,
                         std::int64_t n_mc, std::uint64_t seed, int n_shards = 128,
                         unsigned n_threads = 0);

struct Scenario {
  std::string name;
  DGPConfig config;
  TaperedShiftPolicy policy;
  bool s_only = false;
  double true_psi = 0.0;
  std::string source;  // provenance of the registered value
};

// The nine main scenarios, the no-confounding variant, the three restricted
// ones, and the four Z->A / W->Y scenarios.
const std::vector<Scenario>& scenario_registry();
const Scenario& find_scenario(const std::string& name);

}  // namespace pmtp
