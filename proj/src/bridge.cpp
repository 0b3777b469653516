#include "pmtp/bridge.hpp"

#include "pmtp/common.hpp"

#include <cmath>

namespace pmtp {

namespace {

// Solves A x = b by LU, failing loudly when the solve is unreliable.
Eigen::MatrixXd checked_lu_solve(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b,
                                 const char* what) {
  Eigen::PartialPivLU<Eigen::MatrixXd> lu(a);
  Eigen::MatrixXd x = lu.solve(b);
  const double resid = (a * x - b).norm();
  const double scale = b.norm() + 1.0;
  if (!x.allFinite() || resid > 1e-6 * scale) {
    throw NumericError(std::string(what) + ": ill-conditioned linear system (rcond ~ " +
                       std::to_string(lu.rcond()) + ", relative residual " +
                       std::to_string(resid / scale) + ")");
  }
  return x;
}

// Largest root of f(u) = q^T K^{-1/2} (K^{-1/2} P K^{-1/2} + u/B^2 Id)^{-2} K^{-1/2} q = B^2,
// then the constrained coefficients (P + u/B^2 K)^{-1} q. P and q are the
// quadratic form and linear term of the outer objective.
Eigen::VectorXd constrained_solve(const Eigen::MatrixXd& mid, const Eigen::VectorXd& t,
                                  const Eigen::MatrixXd& k_outer, double n_split,
                                  double lambda_outer, double bound, double jitter) {
  const double n2 = n_split * n_split;
  const Eigen::Index m = k_outer.rows();
  Eigen::MatrixXd mid_sym = 0.5 * (mid + mid.transpose());
  Eigen::MatrixXd p = (k_outer * mid_sym * k_outer) / n2 + lambda_outer * k_outer;
  p = 0.5 * (p + p.transpose());
  Eigen::VectorXd q = (k_outer * t) / n2;

  Eigen::MatrixXd k_j = k_outer;
  if (jitter > 0.0) k_j.diagonal().array() += jitter * k_outer.trace() / static_cast<double>(m);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> ek(k_j);
  if (ek.info() != Eigen::Success)
    throw NumericError("norm-ball: eigendecomposition of the outer kernel failed");
  Eigen::VectorXd ev = ek.eigenvalues().cwiseMax(1e-12);
  Eigen::MatrixXd k_inv_sqrt =
      ek.eigenvectors() * ev.cwiseSqrt().cwiseInverse().asDiagonal() * ek.eigenvectors().transpose();

  Eigen::MatrixXd g = k_inv_sqrt * p * k_inv_sqrt;
  g = 0.5 * (g + g.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eg(g);
  if (eg.info() != Eigen::Success)
    throw NumericError("norm-ball: eigendecomposition of the whitened quadratic failed");
  Eigen::VectorXd gv = eg.eigenvalues().cwiseMax(0.0);
  Eigen::VectorXd b_vec = eg.eigenvectors().transpose() * (k_inv_sqrt * q);

  const double b2 = bound * bound;
  auto f = [&](double u) {
    double s = 0.0;
    for (Eigen::Index i = 0; i < m; ++i) {
      const double den = gv(i) + u / b2;
      s += b_vec(i) * b_vec(i) / (den * den);
    }
    return s;
  };

  // Bracket from the right: grow u until the constraint function drops below
  // B^2, then bisect.
  double u_hi = 1.0;
  int grow = 0;
  while (f(u_hi) > b2 && grow < 200) {
    u_hi *= 2.0;
    ++grow;
  }
  if (f(u_hi) > b2)
    throw NumericError("norm-ball: failed to bracket the multiplier (f(" + std::to_string(u_hi) +
                       ") = " + std::to_string(f(u_hi)) + " > B^2 = " + std::to_string(b2) + ")");
  double u_lo = grow == 0 ? 0.0 : u_hi / 2.0;
  for (int it = 0; it < 200; ++it) {
    const double u_mid = 0.5 * (u_lo + u_hi);
    if (f(u_mid) > b2)
      u_lo = u_mid;
    else
      u_hi = u_mid;
    if (u_hi - u_lo < 1e-10 * std::max(1.0, u_hi)) break;
  }
  const double u_star = 0.5 * (u_lo + u_hi);

  Eigen::MatrixXd lhs = p + (u_star / b2) * k_outer;
  return checked_lu_solve(lhs, q, "norm-ball constrained solve");
}

Eigen::VectorXd outer_solve(const Eigen::MatrixXd& mid, const Eigen::VectorXd& t,
                            const Eigen::MatrixXd& k_outer, double n_split, double lambda_outer,
                            const std::optional<double>& bound, double jitter, const char* what) {
  const double n2 = n_split * n_split;
  Eigen::MatrixXd lhs = mid * k_outer;
  lhs.diagonal().array() += n2 * lambda_outer;
  Eigen::VectorXd coef = checked_lu_solve(lhs, t, what);
  if (bound) {
    const double norm_sq = coef.dot(k_outer * coef);
    if (norm_sq > (*bound) * (*bound))
      coef = constrained_solve(mid, t, k_outer, n_split, lambda_outer, *bound, jitter);
  }
  return coef;
}

ColumnAffine concat_transforms(const ColumnAffine& a, const ColumnAffine& l,
                               const ColumnAffine& other) {
  ColumnAffine out;
  const Eigen::Index d = a.mean.size() + l.mean.size() + other.mean.size();
  out.mean.resize(d);
  out.sd.resize(d);
  out.mean << a.mean, l.mean, other.mean;
  out.sd << a.sd, l.sd, other.sd;
  return out;
}

}  // namespace

Eigen::VectorXd BridgeEstimate::evaluate(const Eigen::MatrixXd& points_original) const {
  if (points_original.cols() != anchors.cols())
    throw std::invalid_argument("BridgeEstimate::evaluate: point dimension mismatch");
  Eigen::MatrixXd pts = feature_transform.apply(points_original);
  Eigen::VectorXd out = kernel_matrix(kernel, pts, anchors) * coefficients;
  if (mask_policy) {
    for (Eigen::Index i = 0; i < out.size(); ++i)
      if (!mask_policy->in_image(points_original(i, 0))) out(i) = 0.0;
  }
  return out;
}

double BridgeEstimate::evaluate_one(double a, const Eigen::RowVectorXd& l,
                                    const Eigen::RowVectorXd& other) const {
  Eigen::MatrixXd pt(1, 1 + l.size() + other.size());
  pt(0, 0) = a;
  pt.block(0, 1, 1, l.size()) = l;
  pt.block(0, 1 + l.size(), 1, other.size()) = other;
  return evaluate(pt)(0);
}

FitFeatures build_fit_features(const Dataset& ds, const TaperedShiftPolicy& policy,
                               bool filter_s_image) {
  FitFeatures f;
  f.n_split = static_cast<double>(ds.n());
  for (Eigen::Index i = 0; i < ds.n(); ++i) {
    if (!ds.complete(i)) continue;
    const double a = ds.a(i);
    if (!filter_s_image || policy.in_S(a) || policy.in_image(a)) f.usable.push_back(i);
  }
  const Eigen::Index m = static_cast<Eigen::Index>(f.usable.size());
  if (m == 0) throw NumericError("bridge fit: no usable rows (complete cases inside S or image)");

  ColumnAffine ta = ds.transforms ? ds.transforms->a : ColumnAffine::identity(1);
  ColumnAffine tl = ds.transforms ? ds.transforms->l
                                  : ColumnAffine::identity(static_cast<int>(ds.dim_l()));
  ColumnAffine tz = ds.transforms ? ds.transforms->z
                                  : ColumnAffine::identity(static_cast<int>(ds.dim_z()));
  ColumnAffine tw = ds.transforms ? ds.transforms->w
                                  : ColumnAffine::identity(static_cast<int>(ds.dim_w()));
  f.alw_transform = concat_transforms(ta, tl, tw);
  f.alz_transform = concat_transforms(ta, tl, tz);

  const Eigen::Index dl = ds.dim_l(), dz = ds.dim_z(), dw = ds.dim_w();
  f.alw.resize(m, 1 + dl + dw);
  f.alz.resize(m, 1 + dl + dz);
  f.alw_shifted.resize(m, 1 + dl + dw);
  f.y.resize(m);
  f.s_weights.resize(m);
  f.r_mask.resize(m);
  f.d_s.resize(m);
  for (Eigen::Index k = 0; k < m; ++k) {
    const Eigen::Index i = f.usable[static_cast<std::size_t>(k)];
    const double a = ds.a(i);
    const bool in_s = ds.s_member[static_cast<std::size_t>(i)] != 0 && policy.in_S(a);
    const double a_std = ta.apply_scalar(a, 0);
    const double qa = in_s ? policy.apply(a) : a;
    const double qa_std = ta.apply_scalar(qa, 0);
    Eigen::RowVectorXd l_std = tl.apply(ds.l.row(i));
    Eigen::RowVectorXd z_std = tz.apply(ds.z.row(i));
    Eigen::RowVectorXd w_std = tw.apply(ds.w.row(i));
    f.alw(k, 0) = a_std;
    f.alw.block(k, 1, 1, dl) = l_std;
    f.alw.block(k, 1 + dl, 1, dw) = w_std;
    f.alz(k, 0) = a_std;
    f.alz.block(k, 1, 1, dl) = l_std;
    f.alz.block(k, 1 + dl, 1, dz) = z_std;
    f.alw_shifted(k, 0) = qa_std;
    f.alw_shifted.block(k, 1, 1, dl) = l_std;
    f.alw_shifted.block(k, 1 + dl, 1, dw) = w_std;
    f.y(k) = ds.y(i);
    f.s_weights(k) = ds.weights(i);
    f.r_mask(k) = policy.in_image(a) ? 1.0 : 0.0;
    f.d_s(k) = in_s ? 1.0 : 0.0;
  }
  return f;
}

Eigen::MatrixXd h_inner_operator(const Eigen::MatrixXd& k_inner, const Eigen::VectorXd& s_weights,
                                 double n_split, double lambda_inner) {
  // Gamma_G' = 4^{-1} (n^{-1} K_G' S + lambda Id)^{-1}; the first-order system
  // of the weighted inner maximization puts the kernel left of the weights.
  Eigen::MatrixXd lhs = k_inner * s_weights.asDiagonal() / n_split;
  lhs.diagonal().array() += lambda_inner;
  Eigen::MatrixXd x = checked_lu_solve(lhs, k_inner, "h inner operator");
  // W2 = S Gamma_G' K_G' S = S X S / 4
  return (s_weights.asDiagonal() * x * s_weights.asDiagonal()) * 0.25;
}

Eigen::VectorXd h_outer_solve(const Eigen::MatrixXd& w2, const Eigen::MatrixXd& k_outer,
                              const Eigen::VectorXd& y, double n_split, double lambda_outer,
                              const std::optional<double>& bound, double jitter) {
  return outer_solve(w2, w2 * y, k_outer, n_split, lambda_outer, bound, jitter, "h outer solve");
}

GInnerOperator g_inner_operator(const Eigen::MatrixXd& k_inner, const Eigen::MatrixXd& k_shift,
                                const Eigen::VectorXd& r_mask, const Eigen::VectorXd& d_s,
                                const Eigen::VectorXd& s_weights, double n_split,
                                double lambda_inner) {
  Eigen::VectorXd sr = s_weights.cwiseProduct(r_mask);
  Eigen::MatrixXd lhs = k_inner * sr.asDiagonal() / n_split;
  lhs.diagonal().array() += lambda_inner;
  Eigen::PartialPivLU<Eigen::MatrixXd> lu(lhs);

  Eigen::MatrixXd krs = k_inner * sr.asDiagonal();
  Eigen::VectorXd sd = s_weights.cwiseProduct(d_s);
  Eigen::MatrixXd rhs(k_inner.rows(), k_inner.cols() + 1);
  rhs.leftCols(k_inner.cols()) = krs;
  rhs.col(k_inner.cols()) = k_shift.transpose() * sd;
  Eigen::MatrixXd solved = lu.solve(rhs);
  if (!solved.allFinite())
    throw NumericError("g inner operator: ill-conditioned linear system (rcond ~ " +
                       std::to_string(lu.rcond()) + ")");
  GInnerOperator op;
  op.vk = sr.asDiagonal() * solved.leftCols(k_inner.cols()) * 0.25;
  op.target = sr.asDiagonal() * solved.col(k_inner.cols()) * 0.25;
  return op;
}

Eigen::VectorXd g_outer_solve(const GInnerOperator& inner, const Eigen::MatrixXd& k_outer,
                              double n_split, double lambda_outer,
                              const std::optional<double>& bound, double jitter) {
  return outer_solve(inner.vk, inner.target, k_outer, n_split, lambda_outer, bound, jitter,
                     "g outer solve");
}

BridgeEstimate fit_h_weighted(const Dataset& ds, const BridgeFitConfig& config,
                              const TaperedShiftPolicy& policy) {
  FitFeatures f = build_fit_features(ds, policy);
  Eigen::MatrixXd k_h = kernel_matrix(config.kernel_outer, f.alw, f.alw);
  Eigen::MatrixXd k_gp = kernel_matrix(config.kernel_inner, f.alz, f.alz);
  Eigen::MatrixXd w2 = h_inner_operator(k_gp, f.s_weights, f.n_split, config.lambda_inner);
  BridgeEstimate est;
  est.coefficients = h_outer_solve(w2, k_h, f.y, f.n_split, config.lambda_outer,
                                   config.norm_bound, config.ridge_jitter);
  est.anchors = std::move(f.alw);
  est.kernel = config.kernel_outer;
  est.feature_transform = f.alw_transform;
  return est;
}

BridgeEstimate fit_g_weighted(const Dataset& ds, const BridgeFitConfig& config,
                              const TaperedShiftPolicy& policy) {
  FitFeatures f = build_fit_features(ds, policy);
  Eigen::MatrixXd k_g = kernel_matrix(config.kernel_outer, f.alz, f.alz);
  Eigen::MatrixXd k_hp = kernel_matrix(config.kernel_inner, f.alw, f.alw);
  Eigen::MatrixXd k_shift = kernel_matrix(config.kernel_inner, f.alw_shifted, f.alw);
  GInnerOperator inner =
      g_inner_operator(k_hp, k_shift, f.r_mask, f.d_s, f.s_weights, f.n_split,
                       config.lambda_inner);
  BridgeEstimate est;
  est.coefficients = g_outer_solve(inner, k_g, f.n_split, config.lambda_outer, config.norm_bound,
                                   config.ridge_jitter);
  est.anchors = std::move(f.alz);
  est.kernel = config.kernel_outer;
  est.feature_transform = f.alz_transform;
  est.mask_policy = policy;
  return est;
}

namespace {
void require_complete(const Dataset& ds, const char* what) {
  for (Eigen::Index i = 0; i < ds.n(); ++i)
    if (!ds.complete(i))
      throw std::invalid_argument(std::string(what) +
                                  ": treatment missing; use the weighted fit for two-phase data");
}
}  // namespace

BridgeEstimate fit_h(const Dataset& ds, const BridgeFitConfig& config,
                     const TaperedShiftPolicy& policy) {
  require_complete(ds, "fit_h");
  return fit_h_weighted(ds, config, policy);
}

BridgeEstimate fit_g(const Dataset& ds, const BridgeFitConfig& config,
                     const TaperedShiftPolicy& policy) {
  require_complete(ds, "fit_g");
  return fit_g_weighted(ds, config, policy);
}

}  // namespace pmtp
