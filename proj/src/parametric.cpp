#include "pmtp/parametric.hpp"

#include "pmtp/common.hpp"
#include "pmtp/mathutil.hpp"

#include <cmath>

namespace pmtp {

double truncnorm3_variance() {
  return 1.0 - 6.0 * normal_pdf(3.0) / (2.0 * normal_cdf(3.0) - 1.0);
}

double h_param(double a, double l, double w, const OutcomeBridgeParams& params) {
  const auto& phi = params.phi;
  if (phi.size() != 4 && phi.size() != 5)
    throw std::invalid_argument("h_param: phi must have 4 or 5 entries");
  double lin = phi(0) + phi(1) * a + phi(2) * l + phi(3) * w;
  if (phi.size() == 5) lin += phi(4) * a * a;
  const double kappa = 1.0 + 0.5 * params.kappa_const * phi(3) * phi(3);
  return kappa * expit(lin);
}

double rho_param(double a, const TreatmentBridgeParams& params) {
  const auto& pol = params.policy;
  if (!pol.in_image(a)) return 0.0;
  double rho0 = 1.0;
  if (pol.epsilon() > 0.0 && a > pol.d() - pol.epsilon())
    rho0 += pol.delta() / pol.epsilon();
  const double v = pol.taper_weight(a);
  const double t = params.eta(2) * v;
  const double base = normal_cdf(3.0) - normal_cdf(-3.0);
  return base / (normal_cdf(3.0 - t) - normal_cdf(-3.0 - t)) * rho0;
}

double g_param(double a, double l, double z, const TreatmentBridgeParams& params) {
  const auto& pol = params.policy;
  if (!pol.in_image(a)) return 0.0;
  const double v = pol.taper_weight(a);
  const auto& eta = params.eta;
  const double tail = params.taper_term ? eta(3) * v : eta(3);
  const double expo = (eta(0) * a + eta(1) * l + eta(2) * z + tail) * v;
  return rho_param(a, params) * std::exp(expo);
}

namespace {

void require_scalar_blocks(const Dataset& ds, const char* what) {
  if (ds.dim_l() != 1 || ds.dim_z() != 1 || ds.dim_w() != 1)
    throw std::invalid_argument(std::string(what) +
                                ": parametric bridges require scalar L, Z, W");
}

using MomentFn = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

// Damped Newton with a forward-difference Jacobian; falls back to random
// restarts in [-2, 2]^p. Converged when max |moment| <= 1e-8.
Eigen::VectorXd solve_moments(const MomentFn& moments, Eigen::Index p, const char* what) {
  constexpr double kTol = 1e-8;
  constexpr int kMaxIter = 200;

  auto newton_from = [&](Eigen::VectorXd theta, double* final_norm) -> std::optional<Eigen::VectorXd> {
    Eigen::VectorXd m = moments(theta);
    for (int iter = 0; iter < kMaxIter; ++iter) {
      if (!m.allFinite()) return std::nullopt;
      if (m.cwiseAbs().maxCoeff() <= kTol) return theta;
      Eigen::MatrixXd jac(p, p);
      for (Eigen::Index j = 0; j < p; ++j) {
        const double step = 1e-6 * (1.0 + std::abs(theta(j)));
        Eigen::VectorXd shifted = theta;
        shifted(j) += step;
        jac.col(j) = (moments(shifted) - m) / step;
      }
      Eigen::FullPivLU<Eigen::MatrixXd> lu(jac);
      if (!lu.isInvertible()) return std::nullopt;
      Eigen::VectorXd direction = lu.solve(-m);
      double t = 1.0;
      bool stepped = false;
      const double m_norm = m.norm();
      while (t >= 1.0 / 1024.0) {
        Eigen::VectorXd cand = theta + t * direction;
        Eigen::VectorXd mc = moments(cand);
        if (mc.allFinite() && mc.norm() < (1.0 - 1e-4 * t) * m_norm) {
          theta = std::move(cand);
          m = std::move(mc);
          stepped = true;
          break;
        }
        t *= 0.5;
      }
      if (!stepped) {
        if (final_norm) *final_norm = m.norm();
        return std::nullopt;
      }
    }
    if (final_norm) *final_norm = m.norm();
    return std::nullopt;
  };

  double final_norm = std::numeric_limits<double>::quiet_NaN();
  if (auto sol = newton_from(Eigen::VectorXd::Zero(p), &final_norm)) return *sol;
  auto rng = substream(0x706d7470u, 0x726f6f74u);
  std::uniform_real_distribution<double> unif(-2.0, 2.0);
  for (int attempt = 0; attempt < 20; ++attempt) {
    Eigen::VectorXd start(p);
    for (Eigen::Index j = 0; j < p; ++j) start(j) = unif(rng);
    if (auto sol = newton_from(start, &final_norm)) return *sol;
  }
  throw NumericError(std::string(what) + ": estimating-equation solver did not converge " +
                     "(final residual norm " + std::to_string(final_norm) + ")");
}

}  // namespace

OutcomeBridgeParams fit_h_param(const Dataset& ds, bool misspecified, double kappa_const) {
  require_scalar_blocks(ds, "fit_h_param");
  const Eigen::Index p = misspecified ? 4 : 5;
  OutcomeBridgeParams params;
  params.kappa_const = kappa_const;

  MomentFn moments = [&](const Eigen::VectorXd& phi) {
    OutcomeBridgeParams cand{phi, kappa_const};
    Eigen::VectorXd m = Eigen::VectorXd::Zero(p);
    for (Eigen::Index i = 0; i < ds.n(); ++i) {
      if (!ds.complete(i)) continue;
      const double a = ds.a(i);
      const double resid =
          ds.weights(i) * (ds.y(i) - h_param(a, ds.l(i, 0), ds.w(i, 0), cand));
      m(0) += resid;
      m(1) += resid * a;
      m(2) += resid * ds.l(i, 0);
      m(3) += resid * ds.z(i, 0);
      if (p == 5) m(4) += resid * a * a;
    }
    return Eigen::VectorXd(m / static_cast<double>(ds.n()));
  };
  params.phi = solve_moments(moments, p, "fit_h_param");
  return params;
}

TreatmentBridgeParams fit_g_param(const Dataset& ds, const TaperedShiftPolicy& policy,
                                  bool misspecified) {
  require_scalar_blocks(ds, "fit_g_param");
  TreatmentBridgeParams params{Eigen::VectorXd::Zero(4), policy, !misspecified};

  MomentFn moments = [&](const Eigen::VectorXd& eta) {
    TreatmentBridgeParams cand{eta, policy, !misspecified};
    Eigen::VectorXd m = Eigen::VectorXd::Zero(4);
    for (Eigen::Index i = 0; i < ds.n(); ++i) {
      if (!ds.complete(i)) continue;
      const double a = ds.a(i);
      const double sw = ds.weights(i);
      const double l = ds.l(i, 0), w = ds.w(i, 0);
      if (effective_in_s(ds, policy, i)) {
        const double qa = policy.apply(a);
        m(0) += sw;
        m(1) += sw * qa;
        m(2) += sw * l;
        m(3) += sw * w;
      }
      const double g = g_param(a, l, ds.z(i, 0), cand);
      m(0) -= sw * g;
      m(1) -= sw * g * a;
      m(2) -= sw * g * l;
      m(3) -= sw * g * w;
    }
    return Eigen::VectorXd(m / static_cast<double>(ds.n()));
  };
  params.eta = solve_moments(moments, 4, "fit_g_param");
  return params;
}

DRResult psi_parametric(const Dataset& ds, ParametricKind kind,
                        const std::optional<OutcomeBridgeParams>& h_params,
                        const std::optional<TreatmentBridgeParams>& g_params,
                        const TaperedShiftPolicy& policy, double alpha, bool want_influence) {
  require_scalar_blocks(ds, "psi_parametric");
  const bool need_h = kind == ParametricKind::OR || kind == ParametricKind::DR;
  const bool need_g = kind == ParametricKind::DQW || kind == ParametricKind::DR;
  if (need_h && !h_params) throw std::invalid_argument("psi_parametric: h_params required");
  if (need_g && !g_params) throw std::invalid_argument("psi_parametric: g_params required");

  const Eigen::Index n = ds.n();
  const Eigen::Index ph = need_h ? h_params->phi.size() : 0;
  const Eigen::Index pg = need_g ? 4 : 0;
  const Eigen::Index dim = ph + pg + 1;

  // Per-row stacked moments m_i(theta); theta = [phi; eta; psi].
  auto row_moments = [&](const Eigen::VectorXd& theta, Eigen::Index i) {
    Eigen::VectorXd m = Eigen::VectorXd::Zero(dim);
    if (!ds.complete(i)) return m;
    const double a = ds.a(i);
    const double l = ds.l(i, 0), z = ds.z(i, 0), w = ds.w(i, 0);
    const double sw = ds.weights(i);
    const bool in_s = effective_in_s(ds, policy, i);
    const double is = in_s ? 1.0 : 0.0;
    const double psi = theta(dim - 1);

    double h_at_a = 0.0, h_at_qa = 0.0, g_at = 0.0;
    if (need_h) {
      OutcomeBridgeParams hp{theta.segment(0, ph), h_params->kappa_const};
      h_at_a = h_param(a, l, w, hp);
      if (in_s) h_at_qa = h_param(policy.apply(a), l, w, hp);
      const double resid = sw * (ds.y(i) - h_at_a);
      m(0) = resid;
      m(1) = resid * a;
      m(2) = resid * l;
      m(3) = resid * z;
      if (ph == 5) m(4) = resid * a * a;
    }
    if (need_g) {
      TreatmentBridgeParams gp{theta.segment(ph, 4), g_params->policy, g_params->taper_term};
      g_at = g_param(a, l, z, gp);
      const double qa_term = in_s ? policy.apply(a) : 0.0;
      m(ph + 0) = sw * (is - g_at);
      m(ph + 1) = sw * (is * qa_term - g_at * a);
      m(ph + 2) = sw * (is * l - g_at * l);
      m(ph + 3) = sw * (is * w - g_at * w);
    }
    double value = 0.0;
    switch (kind) {
      case ParametricKind::OR: value = is * h_at_qa; break;
      case ParametricKind::DQW: value = ds.y(i) * g_at; break;
      case ParametricKind::DR: value = is * h_at_qa + g_at * (ds.y(i) - h_at_a); break;
    }
    m(dim - 1) = sw * (value - psi * is);
    return m;
  };

  // Point estimate: the psi moment solved in closed form.
  Eigen::VectorXd theta(dim);
  if (need_h) theta.segment(0, ph) = h_params->phi;
  if (need_g) theta.segment(ph, 4) = g_params->eta;
  theta(dim - 1) = 0.0;
  double num = 0.0, den = 0.0, n_complete = 0.0, n_image = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!ds.complete(i)) continue;
    Eigen::VectorXd m = row_moments(theta, i);
    num += m(dim - 1);
    if (effective_in_s(ds, policy, i)) den += ds.weights(i);
    n_complete += 1.0;
    if (policy.in_image(ds.a(i))) n_image += 1.0;
  }
  if (!(den > 0.0)) throw NumericError("psi_parametric: no weighted observations in target set");
  theta(dim - 1) = num / den;

  // Sandwich: numeric Jacobian of the mean moment (central differences).
  auto mean_moments = [&](const Eigen::VectorXd& th) {
    Eigen::VectorXd m = Eigen::VectorXd::Zero(dim);
    for (Eigen::Index i = 0; i < n; ++i) m += row_moments(th, i);
    return Eigen::VectorXd(m / static_cast<double>(n));
  };
  Eigen::MatrixXd jac(dim, dim);
  for (Eigen::Index j = 0; j < dim; ++j) {
    const double step = 1e-5 * (1.0 + std::abs(theta(j)));
    Eigen::VectorXd up = theta, down = theta;
    up(j) += step;
    down(j) -= step;
    jac.col(j) = (mean_moments(up) - mean_moments(down)) / (2.0 * step);
  }
  Eigen::FullPivLU<Eigen::MatrixXd> lu(jac.transpose());
  if (!lu.isInvertible())
    throw NumericError("psi_parametric: singular Jacobian in the sandwich variance");
  Eigen::VectorXd e_psi = Eigen::VectorXd::Zero(dim);
  e_psi(dim - 1) = 1.0;
  Eigen::VectorXd weights_row = lu.solve(e_psi);  // J^{-T} e_psi

  Eigen::VectorXd infl = Eigen::VectorXd::Zero(n);
  double tau = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double v = -weights_row.dot(row_moments(theta, i));
    infl(i) = v;
    tau += v * v;
  }

  DRResult res;
  res.psi_hat = theta(dim - 1);
  res.tau_sq = tau / static_cast<double>(n);
  res.se = std::sqrt(res.tau_sq / static_cast<double>(n));
  res.n_effective = den;
  res.image_proportion = n_complete > 0 ? n_image / n_complete : 0.0;
  if (!std::isfinite(res.psi_hat) || !std::isfinite(res.se))
    throw NumericError("psi_parametric: non-finite estimate or standard error");
  const double zq = normal_quantile(1.0 - alpha / 2.0);
  res.ci_lower = res.psi_hat - zq * res.se;
  res.ci_upper = res.psi_hat + zq * res.se;
  if (want_influence) res.influence = std::move(infl);
  return res;
}

OutcomeBridgeParams analytic_h_oracle(const DGPConfig& cfg) {
  const double ew2 = truncnorm3_variance();
  OutcomeBridgeParams params;
  params.kappa_const = ew2;
  params.phi.resize(5);
  const double phi3 = cfg.beta12 + cfg.beta10 / cfg.beta5;
  params.phi(0) = cfg.mu + std::log(1.0 + 0.5 * cfg.beta12 * cfg.beta12 * ew2) -
                  std::log(1.0 + phi3 * phi3 * ew2);
  params.phi(1) = cfg.beta11;
  params.phi(2) = cfg.beta9 - cfg.beta4 * cfg.beta10 / cfg.beta5;
  params.phi(3) = phi3;
  params.phi(4) = cfg.gamma_coef;
  return params;
}

TreatmentBridgeParams analytic_g_oracle(const DGPConfig& cfg, const TaperedShiftPolicy& policy) {
  const double delta = policy.delta();
  const double den = cfg.beta3 - cfg.beta7 * cfg.beta8;
  if (den == 0.0)
    throw std::invalid_argument("analytic_g_oracle: beta3 - beta7 beta8 must be nonzero");
  TreatmentBridgeParams params{Eigen::VectorXd(4), policy, true};
  params.eta(0) = delta * cfg.beta3 / den;
  params.eta(1) = -delta * (cfg.beta3 * cfg.beta6 - cfg.beta2 * cfg.beta7) / den;
  params.eta(2) = -delta * (cfg.beta7 + cfg.beta3 * cfg.beta8) / den;
  params.eta(3) = -delta * delta * (cfg.beta3 * cfg.beta3 + cfg.beta7 * cfg.beta7) /
                  (2.0 * den * den);
  return params;
}

BridgeFn as_bridge_fn(const OutcomeBridgeParams& params) {
  return [params](double a, const Eigen::RowVectorXd& l, const Eigen::RowVectorXd& w) {
    return h_param(a, l(0), w(0), params);
  };
}

BridgeFn as_bridge_fn(const TreatmentBridgeParams& params) {
  return [params](double a, const Eigen::RowVectorXd& l, const Eigen::RowVectorXd& z) {
    return g_param(a, l(0), z(0), params);
  };
}

}  // namespace pmtp
