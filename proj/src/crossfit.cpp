#include "pmtp/crossfit.hpp"

#include "pmtp/common.hpp"
#include "pmtp/mathutil.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>

namespace pmtp {

BridgeFn as_bridge_fn(BridgeEstimate estimate) {
  auto shared = std::make_shared<BridgeEstimate>(std::move(estimate));
  return [shared](double a, const Eigen::RowVectorXd& l, const Eigen::RowVectorXd& other) {
    return shared->evaluate_one(a, l, other);
  };
}

FoldPlan make_folds(Eigen::Index n, int K, std::uint64_t seed,
                    const std::optional<Eigen::VectorXd>& strat_values) {
  if (K < 3) throw std::invalid_argument("make_folds: K must be at least 3");
  if (n < K) throw std::invalid_argument("make_folds: n < K");
  if (strat_values && strat_values->size() != n)
    throw std::invalid_argument("make_folds: strat_values length mismatch");
  FoldPlan plan;
  plan.K = K;
  plan.stratified = strat_values.has_value();
  plan.assignments.assign(static_cast<std::size_t>(n), 0);
  auto rng = substream(seed, 0x666f6c64u);  // "fold"

  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  if (plan.stratified) {
    std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
      return (*strat_values)(a) < (*strat_values)(b);
    });
    // Consecutive blocks of K rows in treatment order get one row per fold.
    std::vector<int> ids(static_cast<std::size_t>(K));
    std::iota(ids.begin(), ids.end(), 1);
    for (Eigen::Index start = 0; start < n; start += K) {
      std::shuffle(ids.begin(), ids.end(), rng);
      const Eigen::Index stop = std::min<Eigen::Index>(start + K, n);
      for (Eigen::Index j = start; j < stop; ++j)
        plan.assignments[static_cast<std::size_t>(order[static_cast<std::size_t>(j)])] =
            ids[static_cast<std::size_t>(j - start)];
    }
  } else {
    std::shuffle(order.begin(), order.end(), rng);
    for (Eigen::Index pos = 0; pos < n; ++pos)
      plan.assignments[static_cast<std::size_t>(order[static_cast<std::size_t>(pos)])] =
          1 + static_cast<int>(pos % K);
  }
  return plan;
}

bool effective_in_s(const Dataset& ds, const TaperedShiftPolicy& policy, Eigen::Index i) {
  return ds.s_member[static_cast<std::size_t>(i)] != 0 && ds.complete(i) && policy.in_S(ds.a(i));
}

double phi_value(const Dataset& ds, Eigen::Index i, const BridgeFn& h, const BridgeFn& g,
                 const TaperedShiftPolicy& policy, bool s_flag) {
  const double a = ds.a(i);
  const Eigen::RowVectorXd l = ds.l.row(i);
  const Eigen::RowVectorXd z = ds.z.row(i);
  const Eigen::RowVectorXd w = ds.w.row(i);
  double value = g(a, l, z) * (ds.y(i) - h(a, l, w));
  if (s_flag) value += h(policy.apply(a), l, w);
  return value;
}

namespace {

DRResult aggregate(const Dataset& ds, const TaperedShiftPolicy& policy,
                   const Eigen::VectorXd& phi, const EstimateOptions& opts) {
  const Eigen::Index n = ds.n();
  double num = 0.0, den = 0.0;
  double n_complete = 0.0, n_in_image = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!ds.complete(i)) continue;
    const double sw = ds.weights(i);
    num += sw * phi(i);
    if (effective_in_s(ds, policy, i)) den += sw;
    n_complete += 1.0;
    if (policy.in_image(ds.a(i))) n_in_image += 1.0;
  }
  if (!(den > 0.0)) throw NumericError("dr estimate: no weighted observations in the target set");

  DRResult res;
  res.psi_hat = num / den;
  res.n_effective = den;
  res.image_proportion = n_complete > 0 ? n_in_image / n_complete : 0.0;

  const double p_hat = den / static_cast<double>(n);
  double tau = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!ds.complete(i)) continue;
    const double is = effective_in_s(ds, policy, i) ? 1.0 : 0.0;
    const double centered = phi(i) / p_hat - res.psi_hat * is / p_hat;
    tau += ds.weights(i) * centered * centered;
  }
  res.tau_sq = tau / static_cast<double>(n);
  res.se = std::sqrt(res.tau_sq / static_cast<double>(n));
  if (!std::isfinite(res.psi_hat) || !std::isfinite(res.se))
    throw NumericError("dr estimate: non-finite estimate or standard error");
  const double zq = normal_quantile(1.0 - opts.alpha / 2.0);
  res.ci_lower = res.psi_hat - zq * res.se;
  res.ci_upper = res.psi_hat + zq * res.se;

  if (opts.want_influence) {
    Eigen::VectorXd infl = Eigen::VectorXd::Zero(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      if (!ds.complete(i)) continue;
      const double is = effective_in_s(ds, policy, i) ? 1.0 : 0.0;
      infl(i) = ds.weights(i) * (phi(i) - res.psi_hat * is) / p_hat;
    }
    res.influence = std::move(infl);
  }
  return res;
}

}  // namespace

DRResult dr_crossfit(const Dataset& ds, const TaperedShiftPolicy& policy, const FoldPlan& plan,
                     const FitProcedure& fit_procedure, const EstimateOptions& opts) {
  const Eigen::Index n = ds.n();
  if (static_cast<Eigen::Index>(plan.assignments.size()) != n)
    throw std::invalid_argument("dr_crossfit: fold plan length mismatch");

  Eigen::VectorXd phi = Eigen::VectorXd::Zero(n);
  std::vector<std::string> h_labels(static_cast<std::size_t>(plan.K));
  std::vector<std::string> g_labels(static_cast<std::size_t>(plan.K));

  parallel_for(
      static_cast<std::size_t>(plan.K),
      [&](std::size_t fold_idx) {
        const int k = static_cast<int>(fold_idx) + 1;
        std::vector<Eigen::Index> complement;
        std::vector<Eigen::Index> eval_rows;
        for (Eigen::Index i = 0; i < n; ++i) {
          if (plan.assignments[static_cast<std::size_t>(i)] == k)
            eval_rows.push_back(i);
          else
            complement.push_back(i);
        }
        if (complement.size() < 2)
          throw NumericError("dr_crossfit: fold " + std::to_string(k) +
                             " leaves fewer than 2 fit rows");
        Dataset fit_split = ds.subset(complement);
        FittedBridges bridges = fit_procedure(fit_split, k);
        h_labels[fold_idx] = bridges.h_label;
        g_labels[fold_idx] = bridges.g_label;
        for (Eigen::Index i : eval_rows) {
          if (!ds.complete(i)) continue;
          phi(i) = phi_value(ds, i, bridges.h, bridges.g, policy, effective_in_s(ds, policy, i));
        }
      },
      opts.n_threads);

  DRResult res = aggregate(ds, policy, phi, opts);
  res.fold_h_labels = std::move(h_labels);
  res.fold_g_labels = std::move(g_labels);
  return res;
}

double or_estimate(const Dataset& ds, const BridgeFn& h, const TaperedShiftPolicy& policy) {
  double num = 0.0, den = 0.0;
  for (Eigen::Index i = 0; i < ds.n(); ++i) {
    if (!ds.complete(i) || !effective_in_s(ds, policy, i)) continue;
    const double sw = ds.weights(i);
    num += sw * h(policy.apply(ds.a(i)), ds.l.row(i), ds.w.row(i));
    den += sw;
  }
  if (!(den > 0.0)) throw NumericError("or_estimate: no weighted observations in the target set");
  return num / den;
}

double dqw_estimate(const Dataset& ds, const BridgeFn& g, const TaperedShiftPolicy& policy) {
  double num = 0.0, den = 0.0;
  for (Eigen::Index i = 0; i < ds.n(); ++i) {
    if (!ds.complete(i)) continue;
    const double sw = ds.weights(i);
    num += sw * ds.y(i) * g(ds.a(i), ds.l.row(i), ds.z.row(i));
    if (effective_in_s(ds, policy, i)) den += sw;
  }
  if (!(den > 0.0)) throw NumericError("dqw_estimate: no weighted observations in the target set");
  return num / den;
}

DRResult dr_plugin(const Dataset& ds, const FittedBridges& bridges,
                   const TaperedShiftPolicy& policy, const EstimateOptions& opts) {
  Eigen::VectorXd phi = Eigen::VectorXd::Zero(ds.n());
  for (Eigen::Index i = 0; i < ds.n(); ++i) {
    if (!ds.complete(i)) continue;
    phi(i) = phi_value(ds, i, bridges.h, bridges.g, policy, effective_in_s(ds, policy, i));
  }
  return aggregate(ds, policy, phi, opts);
}

}  // namespace pmtp
