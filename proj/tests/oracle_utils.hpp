// Test-only oracles, kept independent of the implementation paths they check.
#pragma once

#include <Eigen/Dense>

#include "pmtp/common.hpp"
#include "pmtp/dataset.hpp"

#include <random>

namespace pmtp::testing {

inline Eigen::MatrixXd jittered(const Eigen::MatrixXd& m, double rel = 1e-12) {
  Eigen::MatrixXd out = m;
  out.diagonal().array() += rel * m.trace() / static_cast<double>(m.rows());
  return out;
}

// Brute-force saddle solution for the outcome-bridge objective: maximize the
// inner concave quadratic by its first-order system, then minimize the
// resulting convex quadratic in the primal coefficients by its first-order
// system. Built directly from the min-max objective, not from the reduced
// closed form.
inline Eigen::VectorXd brute_force_h(const Eigen::MatrixXd& k_h, const Eigen::MatrixXd& k_gp,
                                     const Eigen::VectorXd& y, double n, double lambda_h,
                                     double lambda_gp) {
  const double n2 = n * n;
  // Inner max over alpha of (1/n) a^T K_gp r - a^T (K_gp^2/n + l K_gp) a
  // has value (1/(4 n^2)) r^T Q r with Q = K_gp (K_gp^2/n + l K_gp)^{-1} K_gp.
  Eigen::MatrixXd m = k_gp * k_gp / n + lambda_gp * k_gp;
  Eigen::MatrixXd q = k_gp * jittered(m).partialPivLu().solve(k_gp);
  // Outer: ((1/4n^2) K_h Q K_h + l_h K_h) gamma = (1/4n^2) K_h Q y.
  Eigen::MatrixXd lhs = k_h * q * k_h / (4.0 * n2) + lambda_h * k_h;
  Eigen::VectorXd rhs = k_h * (q * y) / (4.0 * n2);
  return jittered(lhs).partialPivLu().solve(rhs);
}

// Same for the treatment-bridge objective with image mask r and target-set
// indicator d_s.
inline Eigen::VectorXd brute_force_g(const Eigen::MatrixXd& k_g, const Eigen::MatrixXd& k_hp,
                                     const Eigen::MatrixXd& k_shift, const Eigen::VectorXd& r,
                                     const Eigen::VectorXd& d_s, double n, double lambda_g,
                                     double lambda_hp) {
  const double n2 = n * n;
  Eigen::MatrixXd m = k_hp * r.asDiagonal() * k_hp / n + lambda_hp * k_hp;
  Eigen::PartialPivLU<Eigen::MatrixXd> lu(jittered(m));
  Eigen::MatrixXd x = k_hp * r.asDiagonal() * k_g;          // K_hp R K_g
  Eigen::VectorXd target = k_shift.transpose() * d_s;       // K_shift^T d_s
  Eigen::MatrixXd lhs = x.transpose() * lu.solve(x) / (4.0 * n2) + lambda_g * k_g;
  Eigen::VectorXd rhs = x.transpose() * lu.solve(target) / (4.0 * n2);
  return jittered(lhs).partialPivLu().solve(rhs);
}

// Inner objective of the outcome-bridge min-max at adversary coefficients
// alpha, given primal values h_tilde on the fit rows.
inline double inner_objective_h(const Eigen::MatrixXd& k_gp, const Eigen::VectorXd& y,
                                const Eigen::VectorXd& h_tilde, const Eigen::VectorXd& alpha,
                                double n, double lambda_gp) {
  const Eigen::VectorXd g = k_gp * alpha;
  double val = 0.0;
  for (Eigen::Index i = 0; i < y.size(); ++i)
    val += g(i) * (y(i) - h_tilde(i)) - g(i) * g(i);
  val /= n;
  val -= lambda_gp * alpha.dot(k_gp * alpha);
  return val;
}

inline double inner_objective_g(const Eigen::MatrixXd& k_hp, const Eigen::MatrixXd& k_shift,
                                const Eigen::VectorXd& r, const Eigen::VectorXd& d_s,
                                const Eigen::VectorXd& g_tilde, const Eigen::VectorXd& alpha,
                                double n, double lambda_hp) {
  const Eigen::VectorXd h_at = k_hp * alpha;          // h on the fit rows
  const Eigen::VectorXd h_shift = k_shift * alpha;    // h at the shifted points
  double val = 0.0;
  for (Eigen::Index i = 0; i < r.size(); ++i)
    val += h_shift(i) * d_s(i) - r(i) * h_at(i) * g_tilde(i) - r(i) * h_at(i) * h_at(i);
  val /= n;
  val -= lambda_hp * alpha.dot(k_hp * alpha);
  return val;
}

// Random saddle-problem instance shared by the oracle-equivalence checks.
struct SaddleInstance {
  Eigen::MatrixXd alw, alz, alw_shifted;
  Eigen::VectorXd y, r, d_s;
  Eigen::MatrixXd k_h, k_gp, k_g, k_hp, k_shift;
  double n = 0, lambda_outer = 0, lambda_inner = 0;
};

inline SaddleInstance make_saddle_instance(Eigen::Index n, std::uint64_t seed) {
  auto rng = substream(seed, 0x696e7374u);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  SaddleInstance inst;
  inst.n = static_cast<double>(n);
  inst.alw.resize(n, 3);
  inst.alz.resize(n, 3);
  inst.alw_shifted.resize(n, 3);
  inst.y.resize(n);
  inst.r.resize(n);
  inst.d_s.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (int j = 0; j < 3; ++j) {
      inst.alw(i, j) = normal(rng);
      inst.alz(i, j) = normal(rng);
    }
    inst.alw_shifted.row(i) = inst.alw.row(i);
    inst.alw_shifted(i, 0) += 0.4;
    inst.y(i) = unif(rng) < 0.4 ? 1.0 : 0.0;
    inst.r(i) = unif(rng) < 0.8 ? 1.0 : 0.0;
    inst.d_s(i) = unif(rng) < 0.9 ? 1.0 : 0.0;
  }
  const double bw_h = median_heuristic(inst.alw, 1.0);
  const double bw_g = median_heuristic(inst.alz, 1.0);
  GaussianKernel kh(bw_h, 3), kg(bw_g, 3);
  inst.k_h = kernel_matrix(kh, inst.alw, inst.alw);
  inst.k_hp = inst.k_h;
  inst.k_g = kernel_matrix(kg, inst.alz, inst.alz);
  inst.k_gp = inst.k_g;
  inst.k_shift = kernel_matrix(kh, inst.alw_shifted, inst.alw);
  inst.lambda_outer = std::pow(10.0, -1.0 - 2.0 * unif(rng));  // 1e-3 .. 1e-1
  inst.lambda_inner = std::pow(10.0, -2.0 + 2.0 * unif(rng));  // 1e-2 .. 1
  return inst;
}

// Small generic dataset with scalar L, Z, W; treatment uniform on [lo, hi].
inline Dataset toy_dataset(Eigen::Index n, std::uint64_t seed, double a_lo = -2.0,
                           double a_hi = 2.0) {
  auto rng = substream(seed, 0x746f79u);
  std::uniform_real_distribution<double> ua(a_lo, a_hi);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> uy(0.0, 1.0);
  Dataset ds;
  ds.y.resize(n);
  ds.a.resize(n);
  ds.l.resize(n, 1);
  ds.z.resize(n, 1);
  ds.w.resize(n, 1);
  for (Eigen::Index i = 0; i < n; ++i) {
    ds.a(i) = ua(rng);
    ds.l(i, 0) = normal(rng);
    ds.z(i, 0) = normal(rng) + 0.5 * ds.l(i, 0);
    ds.w(i, 0) = normal(rng) - 0.5 * ds.l(i, 0);
    ds.y(i) = uy(rng) < 0.3 + 0.2 * (ds.a(i) > 0) ? 1.0 : 0.0;
  }
  ds.finalize();
  return ds;
}

}  // namespace pmtp::testing
