#include "pmtp/cv.hpp"

#include "pmtp/common.hpp"
#include "pmtp/mathutil.hpp"

#include <cmath>
#include <cstdio>
#include <limits>

namespace pmtp {

HyperGrid HyperGrid::defaults() {
  HyperGrid g;
  g.c1_list = {1e-5, 1e-4, 1e-3, 1e-2, 1e-1};
  g.c3_list = {1e-5, 1e-4, 1e-3, 1e-2, 1e-1};
  g.c2_list = {0.1, 1.0, 10.0, 100.0};
  g.c4_list = {0.1, 1.0, 10.0, 100.0};
  g.c5_list = {0.25, 0.5, 1.0, 2.0, 4.0};
  g.bw_inner_scale = 0.25;
  return g;
}

void HyperGrid::check() const {
  auto positive = [](const std::vector<double>& v, const char* name) {
    if (v.empty()) throw std::invalid_argument(std::string("HyperGrid: empty ") + name);
    for (double x : v)
      if (!(x > 0.0)) throw std::invalid_argument(std::string("HyperGrid: nonpositive ") + name);
  };
  positive(c1_list, "c1_list");
  positive(c2_list, "c2_list");
  positive(c3_list, "c3_list");
  positive(c4_list, "c4_list");
  positive(c5_list, "c5_list");
  if (!(bw_inner_scale > 0.0)) throw std::invalid_argument("HyperGrid: nonpositive bw_inner_scale");
}

namespace {

std::string format_scale(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", v);
  return buf;
}

struct HRiskContext {
  Eigen::LDLT<Eigen::MatrixXd> factor;  // K0/n3 + lambda I
  Eigen::MatrixXd k0;
  Eigen::VectorXd y;
  double n3 = 0;
};

HRiskContext make_h_risk_context(const FitFeatures& vf, double theta, double bw_fixed_scale) {
  HRiskContext ctx;
  ctx.n3 = static_cast<double>(vf.alz.rows());
  if (ctx.n3 < 2) throw NumericError("risk_h: test fold has fewer than 2 usable rows");
  const double bw = median_heuristic(vf.alz, bw_fixed_scale);
  ctx.k0 = kernel_matrix(GaussianKernel(bw, static_cast<int>(vf.alz.cols())), vf.alz, vf.alz);
  const double lambda = theta * std::log(ctx.n3) / ctx.n3;
  Eigen::MatrixXd lhs = ctx.k0 / ctx.n3;
  lhs.diagonal().array() += lambda;
  ctx.factor.compute(lhs);
  if (ctx.factor.info() != Eigen::Success)
    throw NumericError("risk_h: failed to factor the test-fold kernel system");
  ctx.y = vf.y;
  return ctx;
}

double h_risk_value(const HRiskContext& ctx, const Eigen::VectorXd& h_values) {
  Eigen::VectorXd xi = (ctx.y - h_values) / ctx.n3;
  return 0.25 * xi.dot(ctx.factor.solve(ctx.k0 * xi));
}

struct GRiskContext {
  Eigen::MatrixXd k0;           // K0_H'
  Eigen::MatrixXd k_inv_sqrt;   // clipped K0^{-1/2}
  Eigen::LDLT<Eigen::MatrixXd> mid;  // K0^{1/2} R K0^{1/2}/n3 + lambda I
  Eigen::VectorXd zeta_base;    // K0_shift^T d_s / n3
  Eigen::VectorXd r_mask;
  double n3 = 0;
};

GRiskContext make_g_risk_context(const FitFeatures& vf, double theta, double bw_fixed_scale) {
  GRiskContext ctx;
  ctx.n3 = static_cast<double>(vf.alw.rows());
  if (ctx.n3 < 2) throw NumericError("risk_g: test fold has fewer than 2 usable rows");
  const double bw = median_heuristic(vf.alw, bw_fixed_scale);
  GaussianKernel kern(bw, static_cast<int>(vf.alw.cols()));
  ctx.k0 = kernel_matrix(kern, vf.alw, vf.alw);
  Eigen::MatrixXd k_shift = kernel_matrix(kern, vf.alw_shifted, vf.alw);
  ctx.zeta_base = k_shift.transpose() * vf.d_s / ctx.n3;
  ctx.r_mask = vf.r_mask;

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(ctx.k0);
  if (es.info() != Eigen::Success)
    throw NumericError("risk_g: eigendecomposition of the test-fold kernel failed");
  Eigen::VectorXd ev = es.eigenvalues().cwiseMax(1e-12);
  Eigen::MatrixXd k_sqrt =
      es.eigenvectors() * ev.cwiseSqrt().asDiagonal() * es.eigenvectors().transpose();
  ctx.k_inv_sqrt =
      es.eigenvectors() * ev.cwiseSqrt().cwiseInverse().asDiagonal() * es.eigenvectors().transpose();
  const double lambda = theta * std::log(ctx.n3) / ctx.n3;
  Eigen::MatrixXd mid = k_sqrt * vf.r_mask.asDiagonal() * k_sqrt / ctx.n3;
  mid = 0.5 * (mid + mid.transpose());
  mid.diagonal().array() += lambda;
  ctx.mid.compute(mid);
  if (ctx.mid.info() != Eigen::Success)
    throw NumericError("risk_g: failed to factor the test-fold kernel system");
  return ctx;
}

double g_risk_value(const GRiskContext& ctx, const Eigen::VectorXd& g_values) {
  Eigen::VectorXd zeta = ctx.zeta_base - ctx.k0 * ctx.r_mask.cwiseProduct(g_values) / ctx.n3;
  Eigen::VectorXd u = ctx.k_inv_sqrt * zeta;
  return 0.25 * u.dot(ctx.mid.solve(u));
}

struct ConfigOutcome {
  bool ok = false;
  double risk = std::numeric_limits<double>::infinity();
  Eigen::VectorXd coef;
  std::string error;
};

// Lexicographic argmin over (risk, c_outer, c_inner, c5).
std::size_t pick_best(const std::vector<ConfigOutcome>& outcomes,
                      const std::vector<std::array<double, 3>>& scales, const char* what) {
  std::size_t best = outcomes.size();
  for (std::size_t i = 0; i < outcomes.size(); ++i) {
    if (!outcomes[i].ok) continue;
    if (best == outcomes.size()) {
      best = i;
      continue;
    }
    const auto& a = outcomes[i];
    const auto& b = outcomes[best];
    if (a.risk < b.risk ||
        (a.risk == b.risk && scales[i] < scales[best])) {
      best = i;
    }
  }
  if (best == outcomes.size()) {
    std::string msg = std::string(what) + ": every grid configuration failed:";
    for (std::size_t i = 0; i < outcomes.size(); ++i)
      msg += "\n  [" + std::to_string(i) + "] " + outcomes[i].error;
    throw NumericError(msg);
  }
  return best;
}

}  // namespace

double risk_h(const BridgeEstimate& h_candidate, const Dataset& test_rows,
              const TaperedShiftPolicy& policy, double theta, double bw_fixed_scale) {
  FitFeatures vf = build_fit_features(test_rows, policy, /*filter_s_image=*/false);
  HRiskContext ctx = make_h_risk_context(vf, theta, bw_fixed_scale);
  Eigen::MatrixXd pts(vf.alw.rows(), vf.alw.cols());
  for (Eigen::Index k = 0; k < pts.rows(); ++k) {
    const Eigen::Index i = vf.usable[static_cast<std::size_t>(k)];
    pts(k, 0) = test_rows.a(i);
    pts.block(k, 1, 1, test_rows.dim_l()) = test_rows.l.row(i);
    pts.block(k, 1 + test_rows.dim_l(), 1, test_rows.dim_w()) = test_rows.w.row(i);
  }
  return h_risk_value(ctx, h_candidate.evaluate(pts));
}

double risk_g(const BridgeEstimate& g_candidate, const Dataset& test_rows,
              const TaperedShiftPolicy& policy, double theta, double bw_fixed_scale) {
  FitFeatures vf = build_fit_features(test_rows, policy, /*filter_s_image=*/false);
  GRiskContext ctx = make_g_risk_context(vf, theta, bw_fixed_scale);
  Eigen::MatrixXd pts(vf.alz.rows(), vf.alz.cols());
  for (Eigen::Index k = 0; k < pts.rows(); ++k) {
    const Eigen::Index i = vf.usable[static_cast<std::size_t>(k)];
    pts(k, 0) = test_rows.a(i);
    pts.block(k, 1, 1, test_rows.dim_l()) = test_rows.l.row(i);
    pts.block(k, 1 + test_rows.dim_l(), 1, test_rows.dim_z()) = test_rows.z.row(i);
  }
  return g_risk_value(ctx, g_candidate.evaluate(pts));
}

double risk_h(const BridgeFn& h_candidate, const Dataset& test_rows,
              const TaperedShiftPolicy& policy, double theta, double bw_fixed_scale) {
  FitFeatures vf = build_fit_features(test_rows, policy, /*filter_s_image=*/false);
  HRiskContext ctx = make_h_risk_context(vf, theta, bw_fixed_scale);
  Eigen::VectorXd values(vf.alw.rows());
  for (Eigen::Index k = 0; k < values.size(); ++k) {
    const Eigen::Index i = vf.usable[static_cast<std::size_t>(k)];
    values(k) = h_candidate(test_rows.a(i), test_rows.l.row(i), test_rows.w.row(i));
  }
  return h_risk_value(ctx, values);
}

double risk_g(const BridgeFn& g_candidate, const Dataset& test_rows,
              const TaperedShiftPolicy& policy, double theta, double bw_fixed_scale) {
  FitFeatures vf = build_fit_features(test_rows, policy, /*filter_s_image=*/false);
  GRiskContext ctx = make_g_risk_context(vf, theta, bw_fixed_scale);
  Eigen::VectorXd values(vf.alz.rows());
  for (Eigen::Index k = 0; k < values.size(); ++k) {
    const Eigen::Index i = vf.usable[static_cast<std::size_t>(k)];
    values(k) = g_candidate(test_rows.a(i), test_rows.l.row(i), test_rows.z.row(i));
  }
  return g_risk_value(ctx, values);
}

SelectedBridges select_bridges(const Dataset& train_rows, const Dataset& valid_rows,
                               const TaperedShiftPolicy& policy, double bw_base_h,
                               double bw_base_g, const CvSettings& settings) {
  settings.grid.check();
  if (!(bw_base_h > 0.0) || !(bw_base_g > 0.0))
    throw std::invalid_argument("select_bridges: base bandwidths must be positive");

  FitFeatures tf = build_fit_features(train_rows, policy);
  FitFeatures vf = build_fit_features(valid_rows, policy, /*filter_s_image=*/false);
  const double n_train = tf.n_split;
  const double log_ratio = std::log(n_train) / n_train;
  const double sqrt_ratio = std::sqrt(log_ratio);

  // Distances are shared across configurations; only the exp() scale varies.
  Eigen::MatrixXd d2_alw = squared_distances(tf.alw, tf.alw);
  d2_alw = 0.5 * (d2_alw + d2_alw.transpose());
  d2_alw.diagonal().setZero();
  Eigen::MatrixXd d2_alz = squared_distances(tf.alz, tf.alz);
  d2_alz = 0.5 * (d2_alz + d2_alz.transpose());
  d2_alz.diagonal().setZero();
  Eigen::MatrixXd d2_shift = squared_distances(tf.alw_shifted, tf.alw);
  Eigen::MatrixXd d2_cross_alw = squared_distances(vf.alw, tf.alw);
  Eigen::MatrixXd d2_cross_alz = squared_distances(vf.alz, tf.alz);

  const auto& grid = settings.grid;
  SelectedBridges out;

  // --- outcome bridge: inner space G' on (A, L, Z) ---
  {
    HRiskContext risk_ctx = make_h_risk_context(vf, settings.theta, settings.bw_fixed_scale);
    Eigen::MatrixXd k_inner =
        kernel_from_squared_distances(d2_alz, grid.bw_inner_scale * bw_base_g);
    std::vector<Eigen::MatrixXd> w2_by_c2(grid.c2_list.size());
    for (std::size_t j = 0; j < grid.c2_list.size(); ++j)
      w2_by_c2[j] =
          h_inner_operator(k_inner, tf.s_weights, n_train, grid.c2_list[j] * log_ratio);
    std::vector<Eigen::MatrixXd> k_h_by_c5(grid.c5_list.size());
    std::vector<Eigen::MatrixXd> kx_by_c5(grid.c5_list.size());
    for (std::size_t j = 0; j < grid.c5_list.size(); ++j) {
      k_h_by_c5[j] = kernel_from_squared_distances(d2_alw, grid.c5_list[j] * bw_base_h);
      kx_by_c5[j] = kernel_from_squared_distances(d2_cross_alw, grid.c5_list[j] * bw_base_h);
    }

    std::vector<std::array<double, 3>> scales;  // (c1, c2, c5)
    std::vector<std::array<std::size_t, 2>> cache_idx;
    for (double c1 : grid.c1_list)
      for (std::size_t j2 = 0; j2 < grid.c2_list.size(); ++j2)
        for (std::size_t j5 = 0; j5 < grid.c5_list.size(); ++j5) {
          scales.push_back({c1, grid.c2_list[j2], grid.c5_list[j5]});
          cache_idx.push_back({j2, j5});
        }
    std::vector<ConfigOutcome> outcomes(scales.size());
    parallel_for(
        scales.size(),
        [&](std::size_t i) {
          auto& oc = outcomes[i];
          try {
            oc.coef = h_outer_solve(w2_by_c2[cache_idx[i][0]], k_h_by_c5[cache_idx[i][1]], tf.y,
                                    n_train, scales[i][0] * sqrt_ratio, std::nullopt,
                                    settings.ridge_jitter);
            oc.risk = h_risk_value(risk_ctx, kx_by_c5[cache_idx[i][1]] * oc.coef);
            oc.ok = true;
          } catch (const std::exception& e) {
            oc.error = std::string("h config c1=") + format_scale(scales[i][0]) +
                       ",c2=" + format_scale(scales[i][1]) + ",c5=" + format_scale(scales[i][2]) +
                       ": " + e.what();
          }
        },
        settings.n_threads);
    const std::size_t best = pick_best(outcomes, scales, "select_bridges (h)");
    out.h.coefficients = outcomes[best].coef;
    out.h.anchors = tf.alw;
    out.h.kernel = GaussianKernel(scales[best][2] * bw_base_h, static_cast<int>(tf.alw.cols()));
    out.h.feature_transform = tf.alw_transform;
    out.h_risk = outcomes[best].risk;
    out.h_label = "c1=" + format_scale(scales[best][0]) + ",c2=" + format_scale(scales[best][1]) +
                  ",c5=" + format_scale(scales[best][2]);
    if (settings.norm_bound) {
      // Refit the selected configuration with the ball constraint active.
      out.h.coefficients = h_outer_solve(w2_by_c2[cache_idx[best][0]], k_h_by_c5[cache_idx[best][1]],
                                         tf.y, n_train, scales[best][0] * sqrt_ratio,
                                         settings.norm_bound, settings.ridge_jitter);
    }
  }

  // --- treatment bridge: inner space H' on (A, L, W) ---
  {
    GRiskContext risk_ctx = make_g_risk_context(vf, settings.theta, settings.bw_fixed_scale);
    Eigen::MatrixXd k_inner =
        kernel_from_squared_distances(d2_alw, grid.bw_inner_scale * bw_base_h);
    Eigen::MatrixXd k_shift =
        kernel_from_squared_distances(d2_shift, grid.bw_inner_scale * bw_base_h);
    std::vector<GInnerOperator> inner_by_c4(grid.c4_list.size());
    for (std::size_t j = 0; j < grid.c4_list.size(); ++j)
      inner_by_c4[j] = g_inner_operator(k_inner, k_shift, tf.r_mask, tf.d_s, tf.s_weights,
                                        n_train, grid.c4_list[j] * log_ratio);
    std::vector<Eigen::MatrixXd> k_g_by_c5(grid.c5_list.size());
    std::vector<Eigen::MatrixXd> kx_by_c5(grid.c5_list.size());
    for (std::size_t j = 0; j < grid.c5_list.size(); ++j) {
      k_g_by_c5[j] = kernel_from_squared_distances(d2_alz, grid.c5_list[j] * bw_base_g);
      kx_by_c5[j] = kernel_from_squared_distances(d2_cross_alz, grid.c5_list[j] * bw_base_g);
    }

    std::vector<std::array<double, 3>> scales;  // (c3, c4, c5)
    std::vector<std::array<std::size_t, 2>> cache_idx;
    for (double c3 : grid.c3_list)
      for (std::size_t j4 = 0; j4 < grid.c4_list.size(); ++j4)
        for (std::size_t j5 = 0; j5 < grid.c5_list.size(); ++j5) {
          scales.push_back({c3, grid.c4_list[j4], grid.c5_list[j5]});
          cache_idx.push_back({j4, j5});
        }
    std::vector<ConfigOutcome> outcomes(scales.size());
    parallel_for(
        scales.size(),
        [&](std::size_t i) {
          auto& oc = outcomes[i];
          try {
            oc.coef = g_outer_solve(inner_by_c4[cache_idx[i][0]], k_g_by_c5[cache_idx[i][1]],
                                    n_train, scales[i][0] * sqrt_ratio, std::nullopt,
                                    settings.ridge_jitter);
            oc.risk = g_risk_value(risk_ctx, kx_by_c5[cache_idx[i][1]] * oc.coef);
            oc.ok = true;
          } catch (const std::exception& e) {
            oc.error = std::string("g config c3=") + format_scale(scales[i][0]) +
                       ",c4=" + format_scale(scales[i][1]) + ",c5=" + format_scale(scales[i][2]) +
                       ": " + e.what();
          }
        },
        settings.n_threads);
    const std::size_t best = pick_best(outcomes, scales, "select_bridges (g)");
    out.g.coefficients = outcomes[best].coef;
    out.g.anchors = tf.alz;
    out.g.kernel = GaussianKernel(scales[best][2] * bw_base_g, static_cast<int>(tf.alz.cols()));
    out.g.feature_transform = tf.alz_transform;
    out.g.mask_policy = policy;
    out.g_risk = outcomes[best].risk;
    out.g_label = "c3=" + format_scale(scales[best][0]) + ",c4=" + format_scale(scales[best][1]) +
                  ",c5=" + format_scale(scales[best][2]);
    if (settings.norm_bound) {
      out.g.coefficients = g_outer_solve(inner_by_c4[cache_idx[best][0]],
                                         k_g_by_c5[cache_idx[best][1]], n_train,
                                         scales[best][0] * sqrt_ratio, settings.norm_bound,
                                         settings.ridge_jitter);
    }
  }

  return out;
}

BaseBandwidths base_bandwidths(const Dataset& ds) {
  std::vector<Eigen::Index> complete;
  for (Eigen::Index i = 0; i < ds.n(); ++i)
    if (ds.complete(i)) complete.push_back(i);
  if (complete.size() < 2) throw NumericError("base_bandwidths: need at least 2 complete cases");

  ColumnAffine ta = ds.transforms ? ds.transforms->a : ColumnAffine::identity(1);
  ColumnAffine tl =
      ds.transforms ? ds.transforms->l : ColumnAffine::identity(static_cast<int>(ds.dim_l()));
  ColumnAffine tz =
      ds.transforms ? ds.transforms->z : ColumnAffine::identity(static_cast<int>(ds.dim_z()));
  ColumnAffine tw =
      ds.transforms ? ds.transforms->w : ColumnAffine::identity(static_cast<int>(ds.dim_w()));

  const Eigen::Index m = static_cast<Eigen::Index>(complete.size());
  const Eigen::Index dl = ds.dim_l(), dz = ds.dim_z(), dw = ds.dim_w();
  Eigen::MatrixXd alw(m, 1 + dl + dw), alz(m, 1 + dl + dz);
  Eigen::VectorXd wts(m);
  bool any_weighted = false;
  for (Eigen::Index k = 0; k < m; ++k) {
    const Eigen::Index i = complete[static_cast<std::size_t>(k)];
    const double a_std = ta.apply_scalar(ds.a(i), 0);
    Eigen::RowVectorXd l_std = tl.apply(ds.l.row(i));
    alw(k, 0) = a_std;
    alw.block(k, 1, 1, dl) = l_std;
    alw.block(k, 1 + dl, 1, dw) = tw.apply(ds.w.row(i));
    alz(k, 0) = a_std;
    alz.block(k, 1, 1, dl) = l_std;
    alz.block(k, 1 + dl, 1, dz) = tz.apply(ds.z.row(i));
    wts(k) = ds.weights(i);
    if (ds.weights(i) != 1.0) any_weighted = true;
  }
  std::optional<Eigen::VectorXd> w_opt;
  if (any_weighted) w_opt = wts;
  BaseBandwidths bw;
  bw.h = median_heuristic(alw, 1.0, w_opt);
  bw.g = median_heuristic(alz, 1.0, w_opt);
  return bw;
}

DRResult crossfit_with_cv(const Dataset& ds, const TaperedShiftPolicy& policy, int K,
                          std::uint64_t seed, const CvCrossfitOptions& opts) {
  if (K < 3) throw std::invalid_argument("crossfit_with_cv: K must be at least 3");
  Dataset data = ds.transforms ? ds : standardize_blocks(ds);

  BaseBandwidths bw = base_bandwidths(data);
  if (opts.cv.bw0_h) bw.h = *opts.cv.bw0_h;
  if (opts.cv.bw0_g) bw.g = *opts.cv.bw0_g;

  std::optional<Eigen::VectorXd> strat;
  if (opts.stratify_folds) {
    Eigen::VectorXd sv(data.n());
    for (Eigen::Index i = 0; i < data.n(); ++i)
      sv(i) = data.complete(i) ? data.a(i) : std::numeric_limits<double>::max();
    strat = sv;
  }
  FoldPlan plan = make_folds(data.n(), K, seed, strat);

  // Rotation: the complement of evaluation fold k, in cyclic order, donates
  // its first ceil((K-1)/2) folds to training and the rest to validation.
  const int n_train_folds = (K - 1 + 1) / 2;
  FitProcedure proc = [&, n_train_folds](const Dataset&, int k) -> FittedBridges {
    std::vector<int> train_ids, valid_ids;
    for (int step = 1; step < K; ++step) {
      const int fold = 1 + (k - 1 + step) % K;
      if (step <= n_train_folds)
        train_ids.push_back(fold);
      else
        valid_ids.push_back(fold);
    }
    std::vector<Eigen::Index> train_rows, valid_rows;
    for (Eigen::Index i = 0; i < data.n(); ++i) {
      const int fid = plan.assignments[static_cast<std::size_t>(i)];
      if (std::find(train_ids.begin(), train_ids.end(), fid) != train_ids.end())
        train_rows.push_back(i);
      else if (std::find(valid_ids.begin(), valid_ids.end(), fid) != valid_ids.end())
        valid_rows.push_back(i);
    }
    SelectedBridges sel =
        select_bridges(data.subset(train_rows), data.subset(valid_rows), policy, bw.h, bw.g,
                       opts.cv);
    FittedBridges fb;
    fb.h = as_bridge_fn(std::move(sel.h));
    fb.g = as_bridge_fn(std::move(sel.g));
    fb.h_label = sel.h_label;
    fb.g_label = sel.g_label;
    return fb;
  };

  EstimateOptions eopts;
  eopts.alpha = opts.alpha;
  eopts.want_influence = opts.want_influence;
  eopts.n_threads = opts.n_threads;
  return dr_crossfit(data, policy, plan, proc, eopts);
}

}  // namespace pmtp
