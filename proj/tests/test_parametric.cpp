#include <doctest.h>

#include "oracle_utils.hpp"
#include "pmtp/mathutil.hpp"
#include "pmtp/parametric.hpp"

#include <cmath>
#include <random>

using Eigen::RowVectorXd;
using Eigen::VectorXd;
using namespace pmtp;

namespace {
const TaperedShiftPolicy kTaper(0.4, 1.0, 0, -2.0, 2.0);
}

TEST_CASE("h_param: zero parameters give 1 * expit(0) = 0.5") {
  OutcomeBridgeParams p{VectorXd::Zero(5), 0.9733};
  CHECK(h_param(0.3, -1.0, 2.0, p) == 0.5);
}

TEST_CASE("g_param: zero parameters reduce to the base density-quotient rho0") {
  TreatmentBridgeParams p{VectorXd::Zero(4), kTaper, true};
  CHECK(g_param(0.0, 0.5, -0.5, p) == 1.0);                      // plateau
  CHECK(g_param(1.5, 0.0, 0.0, p) == doctest::Approx(1.4).epsilon(1e-12));  // 1 + delta/eps
  CHECK(g_param(-1.9, 0.0, 0.0, p) == 0.0);                      // outside the image
}

TEST_CASE("kappa constant: printed default matches the analytic value to 4 decimals") {
  CHECK(std::abs(0.9733 - truncnorm3_variance()) < 1e-4);
  CHECK(truncnorm3_variance() == doctest::Approx(0.97334).epsilon(1e-4));
}

TEST_CASE("fit_h_param: empirical moments vanish at the returned parameters") {
  const Scenario& sc = find_scenario("main_bz2_bw2");
  Generated gen = generate(sc.config, 2000, 101);
  for (bool misspecified : {false, true}) {
    auto params = fit_h_param(gen.dataset, misspecified);
    // Residual check straight from the definition.
    const Eigen::Index p = misspecified ? 4 : 5;
    VectorXd m = VectorXd::Zero(p);
    for (Eigen::Index i = 0; i < gen.dataset.n(); ++i) {
      const double a = gen.dataset.a(i);
      const double resid =
          gen.dataset.y(i) - h_param(a, gen.dataset.l(i, 0), gen.dataset.w(i, 0), params);
      m(0) += resid;
      m(1) += resid * a;
      m(2) += resid * gen.dataset.l(i, 0);
      m(3) += resid * gen.dataset.z(i, 0);
      if (p == 5) m(4) += resid * a * a;
    }
    m /= static_cast<double>(gen.dataset.n());
    CHECK(m.cwiseAbs().maxCoeff() <= 1e-8);
  }
}

TEST_CASE("fit_g_param: empirical moments vanish, correct and misspecified") {
  const Scenario& sc = find_scenario("main_bz2_bw2");
  Generated gen = generate(sc.config, 2000, 103);
  for (bool misspecified : {false, true}) {
    auto params = fit_g_param(gen.dataset, sc.policy, misspecified);
    VectorXd m = VectorXd::Zero(4);
    for (Eigen::Index i = 0; i < gen.dataset.n(); ++i) {
      const double a = gen.dataset.a(i);
      const double l = gen.dataset.l(i, 0), w = gen.dataset.w(i, 0);
      if (sc.policy.in_S(a)) {
        const double qa = sc.policy.apply(a);
        m(0) += 1.0;
        m(1) += qa;
        m(2) += l;
        m(3) += w;
      }
      const double g = g_param(a, l, gen.dataset.z(i, 0), params);
      m(0) -= g;
      m(1) -= g * a;
      m(2) -= g * l;
      m(3) -= g * w;
    }
    m /= static_cast<double>(gen.dataset.n());
    CHECK(m.cwiseAbs().maxCoeff() <= 1e-8);
  }
}

TEST_CASE("fit_h_param: large-sample fit recovers the structural coefficients") {
  const Scenario& sc = find_scenario("main_bz2_bw2");
  Generated gen = generate(sc.config, 48000, 107);
  auto params = fit_h_param(gen.dataset);
  CHECK(std::abs(params.phi(1) - (-1.5)) < 0.15);   // beta11
  CHECK(std::abs(params.phi(4) - (-0.75)) < 0.15);  // gamma
}

TEST_CASE("psi_parametric: DR with forced g = 1 under the identity policy is mean(Y)") {
  Dataset ds = testing::toy_dataset(400, 109);
  auto pol = TaperedShiftPolicy::identity(-2.0, 2.0);
  OutcomeBridgeParams h{VectorXd::Zero(5), 0.9733};
  h.phi << 0.1, 0.2, -0.1, 0.05, 0.0;
  TreatmentBridgeParams g{VectorXd::Zero(4), pol, true};  // rho0 = 1 on the support
  auto res = psi_parametric(ds, ParametricKind::DR, h, g, pol);
  CHECK(res.psi_hat == doctest::Approx(ds.y.mean()).epsilon(1e-12));
}

TEST_CASE("psi_parametric: OR with a constant bridge returns that constant") {
  Dataset ds = testing::toy_dataset(200, 111);
  OutcomeBridgeParams h{VectorXd::Zero(5), 0.9733};
  h.phi(0) = 0.3;  // h = expit(0.3), constant (phi3 = 0 so kappa = 1)
  auto res = psi_parametric(ds, ParametricKind::OR, h, std::nullopt, kTaper);
  CHECK(res.psi_hat == doctest::Approx(expit(0.3)).epsilon(1e-12));
}

TEST_CASE("psi_parametric: reordering the stacked moments leaves the SE unchanged") {
  const Scenario& sc = find_scenario("main_bz1_bw1");
  Generated gen = generate(sc.config, 1500, 113);
  auto h = fit_h_param(gen.dataset);
  auto g = fit_g_param(gen.dataset, sc.policy);
  auto res = psi_parametric(gen.dataset, ParametricKind::DR, h, g, sc.policy);

  // Independent sandwich with the g-moments stacked first.
  const Dataset& ds = gen.dataset;
  const Eigen::Index dim = 4 + 5 + 1;
  auto row_m = [&](const VectorXd& theta, Eigen::Index i) {
    VectorXd m = VectorXd::Zero(dim);
    TreatmentBridgeParams gp{theta.segment(0, 4), sc.policy, true};
    OutcomeBridgeParams hp{theta.segment(4, 5), h.kappa_const};
    const double psi = theta(dim - 1);
    const double a = ds.a(i), l = ds.l(i, 0), z = ds.z(i, 0), w = ds.w(i, 0);
    const bool in_s = sc.policy.in_S(a);
    const double is = in_s ? 1.0 : 0.0;
    const double gv = g_param(a, l, z, gp);
    const double qa = in_s ? sc.policy.apply(a) : 0.0;
    m(0) = is - gv;
    m(1) = is * qa - gv * a;
    m(2) = is * l - gv * l;
    m(3) = is * w - gv * w;
    const double resid = ds.y(i) - h_param(a, l, w, hp);
    m(4) = resid;
    m(5) = resid * a;
    m(6) = resid * l;
    m(7) = resid * z;
    m(8) = resid * a * a;
    const double hq = in_s ? h_param(qa, l, w, hp) : 0.0;
    m(9) = is * hq + gv * (ds.y(i) - h_param(a, l, w, hp)) - psi * is;
    return m;
  };
  VectorXd theta(dim);
  theta.segment(0, 4) = g.eta;
  theta.segment(4, 5) = h.phi;
  theta(dim - 1) = res.psi_hat;
  auto mean_m = [&](const VectorXd& th) {
    VectorXd m = VectorXd::Zero(dim);
    for (Eigen::Index i = 0; i < ds.n(); ++i) m += row_m(th, i);
    return VectorXd(m / static_cast<double>(ds.n()));
  };
  Eigen::MatrixXd jac(dim, dim);
  for (Eigen::Index j = 0; j < dim; ++j) {
    const double step = 1e-5 * (1.0 + std::abs(theta(j)));
    VectorXd up = theta, down = theta;
    up(j) += step;
    down(j) -= step;
    jac.col(j) = (mean_m(up) - mean_m(down)) / (2.0 * step);
  }
  VectorXd e_psi = VectorXd::Zero(dim);
  e_psi(dim - 1) = 1.0;
  VectorXd wrow = jac.transpose().fullPivLu().solve(e_psi);
  double tau = 0.0;
  for (Eigen::Index i = 0; i < ds.n(); ++i) {
    const double v = -wrow.dot(row_m(theta, i));
    tau += v * v;
  }
  const double se = std::sqrt(tau / static_cast<double>(ds.n()) / static_cast<double>(ds.n()));
  CHECK(se == doctest::Approx(res.se).epsilon(1e-10));
}

TEST_CASE("analytic_g_oracle: eta_0 equals delta when beta8 = 0") {
  const Scenario& sc = find_scenario("main_bz2_bw2");
  auto g = analytic_g_oracle(sc.config, sc.policy);
  CHECK(g.eta(0) == doctest::Approx(0.4).epsilon(1e-15));
}

TEST_CASE("rho: positive on the image and equal to rho0 when eta2 = 0") {
  auto rng = substream(127, 0);
  std::uniform_real_distribution<double> img(kTaper.image_lo(), kTaper.image_hi());
  TreatmentBridgeParams with_eta2{VectorXd::Zero(4), kTaper, true};
  with_eta2.eta(2) = -0.2;
  TreatmentBridgeParams no_eta2{VectorXd::Zero(4), kTaper, true};
  for (int t = 0; t < 200; ++t) {
    const double a = img(rng);
    CHECK(rho_param(a, with_eta2) > 0.0);
    const double rho0 =
        (kTaper.epsilon() > 0.0 && a > kTaper.d() - kTaper.epsilon())
            ? 1.0 + kTaper.delta() / kTaper.epsilon()
            : 1.0;
    CHECK(rho_param(a, no_eta2) == doctest::Approx(rho0).epsilon(1e-14));
  }
}

TEST_CASE("analytic g: DQW plug-in at large n is near the true value") {
  // Exact treatment bridge (beta8 = 0) pushed through the plug-in estimator.
  const Scenario& sc = find_scenario("main_bz2_bw2");
  Generated gen = generate(sc.config, 50000, 131);
  auto g = analytic_g_oracle(sc.config, sc.policy);
  const double est = dqw_estimate(gen.dataset, as_bridge_fn(g), sc.policy);
  CHECK(std::abs(est - 0.2512) <= 0.01);
}

TEST_CASE("psi_parametric: single-seed DR estimate near truth at n = 12000") {
  const Scenario& sc = find_scenario("main_bz1_bw1");
  Generated gen = generate(sc.config, 12000, 137);
  auto h = fit_h_param(gen.dataset);
  auto g = fit_g_param(gen.dataset, sc.policy);
  auto res = psi_parametric(gen.dataset, ParametricKind::DR, h, g, sc.policy);
  CHECK(std::abs(res.psi_hat - 0.2512) < 0.03);
  CHECK(res.se > 0.0);
  CHECK(res.ci_lower <= res.psi_hat);
  CHECK(res.psi_hat <= res.ci_upper);
}
