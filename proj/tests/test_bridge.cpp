#include <doctest.h>

#include "oracle_utils.hpp"
#include "pmtp/bridge.hpp"
#include "pmtp/kernels.hpp"

#include <random>

using Eigen::MatrixXd;
using Eigen::VectorXd;
using namespace pmtp;


TEST_CASE("closed-form gamma matches the brute-force saddle oracle") {
  int instance = 0;
  for (Eigen::Index n : {5, 10, 20, 25}) {
    for (int rep = 0; rep < 5; ++rep) {
      auto inst = testing::make_saddle_instance(n, 100 + 17 * instance++);
      VectorXd ones = VectorXd::Ones(n);
      MatrixXd w2 = h_inner_operator(inst.k_gp, ones, inst.n, inst.lambda_inner);
      VectorXd closed =
          h_outer_solve(w2, inst.k_h, inst.y, inst.n, inst.lambda_outer, std::nullopt, 0.0);
      VectorXd brute = testing::brute_force_h(inst.k_h, inst.k_gp, inst.y, inst.n,
                                              inst.lambda_outer, inst.lambda_inner);
      CHECK((closed - brute).cwiseAbs().maxCoeff() < 1e-6);
    }
  }
}

TEST_CASE("closed-form theta matches the brute-force saddle oracle") {
  int instance = 0;
  for (Eigen::Index n : {5, 10, 20, 25}) {
    for (int rep = 0; rep < 5; ++rep) {
      auto inst = testing::make_saddle_instance(n, 500 + 13 * instance++);
      VectorXd ones = VectorXd::Ones(n);
      auto inner = g_inner_operator(inst.k_hp, inst.k_shift, inst.r, inst.d_s, ones, inst.n,
                                    inst.lambda_inner);
      VectorXd closed =
          g_outer_solve(inner, inst.k_g, inst.n, inst.lambda_outer, std::nullopt, 0.0);
      VectorXd brute = testing::brute_force_g(inst.k_g, inst.k_hp, inst.k_shift, inst.r,
                                              inst.d_s, inst.n, inst.lambda_outer,
                                              inst.lambda_inner);
      CHECK((closed - brute).cwiseAbs().maxCoeff() < 1e-6);
    }
  }
}

TEST_CASE("inner maximizer: random perturbations never increase the objective") {
  auto inst = testing::make_saddle_instance(15, 321);
  VectorXd ones = VectorXd::Ones(15);

  // h-side inner problem at the fitted gamma.
  MatrixXd w2 = h_inner_operator(inst.k_gp, ones, inst.n, inst.lambda_inner);
  VectorXd gamma =
      h_outer_solve(w2, inst.k_h, inst.y, inst.n, inst.lambda_outer, std::nullopt, 0.0);
  VectorXd h_tilde = inst.k_h * gamma;
  // alpha* from the first-order system of the concave inner quadratic.
  MatrixXd m = inst.k_gp * inst.k_gp / inst.n + inst.lambda_inner * inst.k_gp;
  VectorXd alpha =
      testing::jittered(m).partialPivLu().solve(inst.k_gp * (inst.y - h_tilde) / (2.0 * inst.n));
  const double at_max =
      testing::inner_objective_h(inst.k_gp, inst.y, h_tilde, alpha, inst.n, inst.lambda_inner);
  auto rng = substream(99, 0);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int t = 0; t < 50; ++t) {
    VectorXd delta(15);
    for (int i = 0; i < 15; ++i) delta(i) = normal(rng);
    delta *= 1e-3 / delta.norm();
    const double perturbed = testing::inner_objective_h(inst.k_gp, inst.y, h_tilde,
                                                        alpha + delta, inst.n,
                                                        inst.lambda_inner);
    CHECK(perturbed <= at_max + 1e-12);
  }
}

TEST_CASE("fit_h: n = 1 reduces to the scalar formula") {
  Dataset ds;
  ds.y.resize(1);
  ds.y << 0.8;
  ds.a.resize(1);
  ds.a << 0.1;
  ds.l.resize(1, 1);
  ds.l << 0.0;
  ds.z.resize(1, 1);
  ds.z << 0.0;
  ds.w.resize(1, 1);
  ds.w << 0.0;
  ds.finalize();
  BridgeFitConfig cfg;
  cfg.lambda_outer = 0.05;
  cfg.lambda_inner = 0.3;
  cfg.kernel_outer = GaussianKernel(1.0, 3);
  cfg.kernel_inner = GaussianKernel(1.0, 3);
  auto est = fit_h(ds, cfg, TaperedShiftPolicy::identity(-2.0, 2.0));
  const double gamma_big = 1.0 / (4.0 * (1.0 + cfg.lambda_inner));
  const double expected = 0.8 * gamma_big / (gamma_big + cfg.lambda_outer);
  CHECK(est.coefficients(0) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("fit_h: zero outcomes give the zero function") {
  Dataset ds = testing::toy_dataset(10, 7);
  ds.y.setZero();
  BridgeFitConfig cfg;
  cfg.kernel_outer = GaussianKernel(1.0, 3);
  cfg.kernel_inner = GaussianKernel(1.0, 3);
  auto est = fit_h(ds, cfg, TaperedShiftPolicy(0.4, 1.0, 0, -2.0, 2.0));
  CHECK(est.coefficients.cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("fit_g: all rows outside the policy image give the zero function") {
  // S = [0, 2], image = [0.5, 2.5]; treatments in [0, 0.4] are in S only.
  Dataset ds = testing::toy_dataset(12, 9, 0.0, 0.4);
  TaperedShiftPolicy pol(0.5, 0.5, 1, 0.0, 3.0);
  BridgeFitConfig cfg;
  cfg.kernel_outer = GaussianKernel(1.0, 3);
  cfg.kernel_inner = GaussianKernel(1.0, 3);
  auto est = fit_g(ds, cfg, pol);
  CHECK(est.coefficients.cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("fit_g: identity policy recovers g = 1 in the small-lambda limit") {
  Dataset ds = testing::toy_dataset(200, 11);
  auto pol = TaperedShiftPolicy::identity(-2.0, 2.0);
  FitFeatures f = build_fit_features(ds, pol);
  BridgeFitConfig cfg;
  cfg.lambda_outer = 1e-7;
  cfg.lambda_inner = 1e-5;
  cfg.kernel_outer = GaussianKernel(median_heuristic(f.alz, 1.0), 3);
  cfg.kernel_inner = GaussianKernel(median_heuristic(f.alw, 1.0), 3);
  auto est = fit_g(ds, cfg, pol);
  Eigen::MatrixXd pts(ds.n(), 3);
  for (Eigen::Index i = 0; i < ds.n(); ++i) {
    pts(i, 0) = ds.a(i);
    pts(i, 1) = ds.l(i, 0);
    pts(i, 2) = ds.z(i, 0);
  }
  const double mean_g = est.evaluate(pts).mean();
  CHECK(mean_g == doctest::Approx(1.0).epsilon(0.1));
}

TEST_CASE("norm-ball: bound binds and the solution beats random feasible points") {
  auto inst = testing::make_saddle_instance(20, 777);
  VectorXd ones = VectorXd::Ones(20);
  MatrixXd w2 = h_inner_operator(inst.k_gp, ones, inst.n, inst.lambda_inner);
  const double tiny_lambda = 1e-8;
  VectorXd unconstrained =
      h_outer_solve(w2, inst.k_h, inst.y, inst.n, tiny_lambda, std::nullopt, 0.0);
  const double free_norm = std::sqrt(unconstrained.dot(inst.k_h * unconstrained));
  const double bound = 0.5 * free_norm;
  VectorXd constrained =
      h_outer_solve(w2, inst.k_h, inst.y, inst.n, tiny_lambda, bound, 1e-10);

  const double norm_sq = constrained.dot(inst.k_h * constrained);
  CHECK(norm_sq <= bound * bound * (1.0 + 1e-6));
  CHECK(std::abs(norm_sq - bound * bound) <= 1e-4 * bound * bound);

  // Objective from the min-max reduction, built independently.
  MatrixXd m = inst.k_gp * inst.k_gp / inst.n + inst.lambda_inner * inst.k_gp;
  MatrixXd q = inst.k_gp * testing::jittered(m).partialPivLu().solve(inst.k_gp);
  auto objective = [&](const VectorXd& gamma) {
    VectorXd resid = inst.y - inst.k_h * gamma;
    return resid.dot(q * resid) / (4.0 * inst.n * inst.n) +
           tiny_lambda * gamma.dot(inst.k_h * gamma);
  };
  const double at_solution = objective(constrained);
  auto rng = substream(555, 0);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int t = 0; t < 100; ++t) {
    VectorXd cand(20);
    for (int i = 0; i < 20; ++i) cand(i) = normal(rng);
    const double norm = std::sqrt(cand.dot(inst.k_h * cand));
    cand *= (bound / norm) * std::pow(0.99, t % 7);  // feasible points
    CHECK(at_solution <= objective(cand) + 1e-10);
  }
}

TEST_CASE("weighted fit with unit weights equals the unweighted fit bit for bit") {
  Dataset ds = testing::toy_dataset(40, 13);
  TaperedShiftPolicy pol(0.4, 1.0, 0, -2.0, 2.0);
  BridgeFitConfig cfg;
  cfg.kernel_outer = GaussianKernel(1.2, 3);
  cfg.kernel_inner = GaussianKernel(0.8, 3);
  auto plain_h = fit_h(ds, cfg, pol);
  auto weighted_h = fit_h_weighted(ds, cfg, pol);
  CHECK((plain_h.coefficients - weighted_h.coefficients).cwiseAbs().maxCoeff() == 0.0);
  auto plain_g = fit_g(ds, cfg, pol);
  auto weighted_g = fit_g_weighted(ds, cfg, pol);
  CHECK((plain_g.coefficients - weighted_g.coefficients).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("duplicate-row equivalence: weight 2 equals the row repeated twice") {
  // Both datasets have 11 rows so the lambda scaling matches: the weighted
  // one carries an extra missing-treatment row, the other the duplicate.
  Dataset base = testing::toy_dataset(10, 15);
  TaperedShiftPolicy pol(0.4, 1.0, 0, -2.0, 2.0);

  Dataset weighted = base;
  {
    std::vector<Eigen::Index> rows{0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 0};
    weighted = base.subset(rows);
    weighted.weights(0) = 2.0;
    weighted.a_observed[10] = 0;  // placeholder row, never used
  }
  Dataset duplicated;
  {
    std::vector<Eigen::Index> rows{0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 0};
    duplicated = base.subset(rows);
  }

  BridgeFitConfig cfg;
  cfg.kernel_outer = GaussianKernel(1.0, 3);
  cfg.kernel_inner = GaussianKernel(1.0, 3);
  cfg.lambda_outer = 1e-3;
  cfg.lambda_inner = 1e-2;

  auto h_w = fit_h_weighted(weighted, cfg, pol);
  auto h_d = fit_h_weighted(duplicated, cfg, pol);
  CHECK(h_w.anchors.rows() == 10);
  CHECK(h_d.anchors.rows() == 11);
  Dataset test_pts = testing::toy_dataset(7, 16);
  Eigen::MatrixXd pts(7, 3);
  for (Eigen::Index i = 0; i < 7; ++i) {
    pts(i, 0) = test_pts.a(i);
    pts(i, 1) = test_pts.l(i, 0);
    pts(i, 2) = test_pts.w(i, 0);
  }
  CHECK((h_w.evaluate(pts) - h_d.evaluate(pts)).cwiseAbs().maxCoeff() < 1e-8);

  auto g_w = fit_g_weighted(weighted, cfg, pol);
  auto g_d = fit_g_weighted(duplicated, cfg, pol);
  Eigen::MatrixXd pts_z(7, 3);
  for (Eigen::Index i = 0; i < 7; ++i) {
    pts_z(i, 0) = test_pts.a(i);
    pts_z(i, 1) = test_pts.l(i, 0);
    pts_z(i, 2) = test_pts.z(i, 0);
  }
  CHECK((g_w.evaluate(pts_z) - g_d.evaluate(pts_z)).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("weighted fit anchors only the complete cases") {
  Dataset ds = testing::toy_dataset(20, 17);
  for (Eigen::Index i = 0; i < 10; ++i) ds.a_observed[static_cast<std::size_t>(2 * i)] = 0;
  TaperedShiftPolicy pol(0.4, 1.0, 0, -2.0, 2.0);
  BridgeFitConfig cfg;
  cfg.kernel_outer = GaussianKernel(1.0, 3);
  cfg.kernel_inner = GaussianKernel(1.0, 3);
  auto est = fit_h_weighted(ds, cfg, pol);
  CHECK(est.anchors.rows() == 10);
  CHECK_THROWS_AS(fit_h(ds, cfg, pol), std::invalid_argument);
}

TEST_CASE("fit errors when no usable rows remain") {
  Dataset ds = testing::toy_dataset(5, 19);
  for (auto& flag : ds.a_observed) flag = 0;
  BridgeFitConfig cfg;
  cfg.kernel_outer = GaussianKernel(1.0, 3);
  cfg.kernel_inner = GaussianKernel(1.0, 3);
  CHECK_THROWS_AS(fit_h_weighted(ds, cfg, TaperedShiftPolicy(0.4, 1.0, 0, -2.0, 2.0)),
                  NumericError);
}

TEST_CASE("evaluate: zero coefficients, anchor reproduction, and the image mask") {
  Dataset ds = testing::toy_dataset(15, 21);
  TaperedShiftPolicy pol(0.4, 1.0, 0, -2.0, 2.0);
  BridgeFitConfig cfg;
  cfg.kernel_outer = GaussianKernel(0.9, 3);
  cfg.kernel_inner = GaussianKernel(0.9, 3);
  auto est = fit_g(ds, cfg, pol);

  Eigen::MatrixXd anchor_pts(ds.n(), 3);
  for (Eigen::Index i = 0; i < ds.n(); ++i) {
    anchor_pts(i, 0) = ds.a(i);
    anchor_pts(i, 1) = ds.l(i, 0);
    anchor_pts(i, 2) = ds.z(i, 0);
  }
  Eigen::VectorXd direct = kernel_matrix(est.kernel, anchor_pts, est.anchors) * est.coefficients;
  for (Eigen::Index i = 0; i < ds.n(); ++i)
    if (!pol.in_image(ds.a(i))) direct(i) = 0.0;
  CHECK((est.evaluate(anchor_pts) - direct).cwiseAbs().maxCoeff() < 1e-12);

  // Outside the image the mask zeroes any coefficients.
  Eigen::MatrixXd outside(1, 3);
  outside << -1.9, 0.0, 0.0;  // image starts at -1.6
  CHECK(est.evaluate(outside)(0) == 0.0);

  auto zero = est;
  zero.coefficients.setZero();
  CHECK(zero.evaluate(anchor_pts).cwiseAbs().maxCoeff() == 0.0);

  Eigen::MatrixXd bad(1, 2);
  bad.setZero();
  CHECK_THROWS_AS(est.evaluate(bad), std::invalid_argument);
}
