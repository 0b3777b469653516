#include "pmtp/kernels.hpp"

#include "pmtp/common.hpp"
#include "pmtp/mathutil.hpp"

#include <cmath>

namespace pmtp {

Eigen::MatrixXd squared_distances(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  if (a.cols() != b.cols())
    throw std::invalid_argument("squared_distances: dimension mismatch (" +
                                std::to_string(a.cols()) + " vs " + std::to_string(b.cols()) + ")");
  Eigen::VectorXd an = a.rowwise().squaredNorm();
  Eigen::VectorXd bn = b.rowwise().squaredNorm();
  Eigen::MatrixXd d2 = an.replicate(1, b.rows()) + bn.transpose().replicate(a.rows(), 1) -
                       2.0 * (a * b.transpose());
  return d2.cwiseMax(0.0);
}

Eigen::MatrixXd kernel_from_squared_distances(const Eigen::MatrixXd& d2, double sigma_sq) {
  if (!(sigma_sq > 0.0))
    throw std::invalid_argument("kernel_from_squared_distances: bandwidth must be > 0");
  return (-d2.array() / (2.0 * sigma_sq)).exp().matrix();
}

Eigen::MatrixXd kernel_matrix(const GaussianKernel& kernel, const Eigen::MatrixXd& rows_a,
                              const Eigen::MatrixXd& rows_b) {
  if (rows_a.cols() != kernel.dim || rows_b.cols() != kernel.dim)
    throw std::invalid_argument("kernel_matrix: input dimension does not match kernel.dim");
  Eigen::MatrixXd d2 = squared_distances(rows_a, rows_b);
  if (&rows_a == &rows_b) {
    // Self matrix: enforce exact symmetry and a zero diagonal before exp.
    d2 = ((d2 + d2.transpose()) * 0.5).eval();
    d2.diagonal().setZero();
  }
  return kernel_from_squared_distances(d2, kernel.bandwidth);
}

double median_heuristic(const Eigen::MatrixXd& rows, double scale,
                        const std::optional<Eigen::VectorXd>& weights) {
  const Eigen::Index n_all = rows.rows();
  if (n_all < 2) throw std::invalid_argument("median_heuristic: need at least 2 rows");
  if (weights && weights->size() != n_all)
    throw std::invalid_argument("median_heuristic: weights length mismatch");
  if (weights && (weights->array() <= 0.0).any())
    throw std::invalid_argument("median_heuristic: weights must be positive");

  // Exact pairwise distances up to 5000 rows; a fixed-seed uniform subsample
  // beyond that.
  constexpr Eigen::Index kMaxRows = 5000;
  Eigen::MatrixXd x;
  Eigen::VectorXd w;
  if (n_all > kMaxRows) {
    auto rng = substream(20240u, 0x6d656469u);  // fixed: heuristic must be deterministic
    std::vector<Eigen::Index> idx(n_all);
    for (Eigen::Index i = 0; i < n_all; ++i) idx[i] = i;
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(kMaxRows);
    std::sort(idx.begin(), idx.end());
    x.resize(kMaxRows, rows.cols());
    w.resize(kMaxRows);
    for (Eigen::Index i = 0; i < kMaxRows; ++i) {
      x.row(i) = rows.row(idx[i]);
      w(i) = weights ? (*weights)(idx[i]) : 1.0;
    }
  } else {
    x = rows;
    w = weights ? *weights : Eigen::VectorXd::Ones(n_all);
  }

  const Eigen::Index n = x.rows();
  std::vector<double> dist;
  std::vector<double> pair_w;
  dist.reserve(static_cast<std::size_t>(n) * (n - 1) / 2);
  pair_w.reserve(dist.capacity());
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      dist.push_back((x.row(i) - x.row(j)).norm());
      pair_w.push_back(w(i) * w(j));
    }
  }
  double med = weighted_median(std::move(dist), std::move(pair_w));
  if (!(med > 0.0))
    throw std::invalid_argument("median_heuristic: median pairwise distance is zero");
  return scale * med;
}

Eigen::MatrixXd ColumnAffine::apply(const Eigen::MatrixXd& x) const {
  if (x.cols() != mean.size()) throw std::invalid_argument("ColumnAffine: dimension mismatch");
  return (x.rowwise() - mean.transpose()).array().rowwise() / sd.transpose().array();
}

Eigen::MatrixXd ColumnAffine::invert(const Eigen::MatrixXd& x) const {
  if (x.cols() != mean.size()) throw std::invalid_argument("ColumnAffine: dimension mismatch");
  return (x.array().rowwise() * sd.transpose().array()).matrix().rowwise() + mean.transpose();
}

Standardized standardize(const Eigen::MatrixXd& columns, const std::vector<std::string>& names) {
  const Eigen::Index n = columns.rows();
  const Eigen::Index p = columns.cols();
  if (n < 1) throw std::invalid_argument("standardize: empty input");
  Standardized out;
  out.transform.mean.resize(p);
  out.transform.sd.resize(p);
  for (Eigen::Index j = 0; j < p; ++j) {
    const double m = columns.col(j).mean();
    const double var = (columns.col(j).array() - m).square().sum() / static_cast<double>(n);
    if (!(var > 0.0)) {
      std::string name = j < static_cast<Eigen::Index>(names.size())
                             ? names[j]
                             : ("column " + std::to_string(j));
      throw std::invalid_argument("standardize: constant column '" + name + "'");
    }
    out.transform.mean(j) = m;
    out.transform.sd(j) = std::sqrt(var);
  }
  out.values = out.transform.apply(columns);
  return out;
}

}  // namespace pmtp
