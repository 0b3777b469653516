#pragma once

#include <Eigen/Dense>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace pmtp {

// Gaussian kernel K(x, y) = exp(-||x - y||^2 / (2 sigma^2)), with sigma^2 the
// squared-bandwidth parameter (typically a median-heuristic output).
struct GaussianKernel {
  double bandwidth = 1.0;  // sigma^2
  int dim = 1;

  GaussianKernel() = default;
  GaussianKernel(double sigma_sq, int d) : bandwidth(sigma_sq), dim(d) {
    if (!(sigma_sq > 0.0)) throw std::invalid_argument("GaussianKernel: bandwidth must be > 0");
    if (d <= 0) throw std::invalid_argument("GaussianKernel: dim must be > 0");
  }
};

// Matrix of squared Euclidean distances between the rows of a and b.
Eigen::MatrixXd squared_distances(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b);

// Applies exp(-d2 / (2 sigma^2)) entrywise to a squared-distance matrix.
Eigen::MatrixXd kernel_from_squared_distances(const Eigen::MatrixXd& d2, double sigma_sq);

// K[i, j] = K(rows_a[i], rows_b[j]). Symmetric with unit diagonal when
// rows_a and rows_b are the same matrix.
Eigen::MatrixXd kernel_matrix(const GaussianKernel& kernel, const Eigen::MatrixXd& rows_a,
                              const Eigen::MatrixXd& rows_b);

// scale * median{ ||x_i - x_j|| : i < j }. Pair (i, j) carries weight
// w_i * w_j when weights are given. Rows are uniformly subsampled to 5000
// beforehand (deterministically) so the pair count stays bounded.
double median_heuristic(const Eigen::MatrixXd& rows, double scale,
                        const std::optional<Eigen::VectorXd>& weights = std::nullopt);

// Columnwise affine transform x -> (x - mean) / sd.
struct ColumnAffine {
  Eigen::VectorXd mean;
  Eigen::VectorXd sd;

  static ColumnAffine identity(int dim) {
    ColumnAffine t;
    t.mean = Eigen::VectorXd::Zero(dim);
    t.sd = Eigen::VectorXd::Ones(dim);
    return t;
  }

  Eigen::MatrixXd apply(const Eigen::MatrixXd& x) const;
  Eigen::MatrixXd invert(const Eigen::MatrixXd& x) const;
  double apply_scalar(double v, int col) const { return (v - mean(col)) / sd(col); }
};

struct Standardized {
  Eigen::MatrixXd values;
  ColumnAffine transform;
};

// Centers and scales each column to empirical mean 0 and population
// (divide-by-n) standard deviation 1. Throws naming the offending column if
// one is constant.
Standardized standardize(const Eigen::MatrixXd& columns,
                         const std::vector<std::string>& names = {});

}  // namespace pmtp
