#pragma once

#include "pmtp/kernels.hpp"

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

namespace pmtp {

// Per-block standardization transforms, attached by standardize_blocks().
struct BlockTransforms {
  ColumnAffine a;  // 1-d
  ColumnAffine l;
  ColumnAffine z;
  ColumnAffine w;
};

// Observed data O = (L, Z, W, A, Y) with optional two-phase structure: a
// missingness mask for A plus inverse sampling weights. All columns keep the
// original scale; kernel inputs are produced through `transforms`.
// Immutable after construction by convention.
struct Dataset {
  Eigen::VectorXd y;
  Eigen::VectorXd a;                  // only meaningful where a_observed
  std::vector<std::uint8_t> a_observed;  // Delta
  Eigen::MatrixXd l;
  Eigen::MatrixXd z;
  Eigen::MatrixXd w;
  Eigen::VectorXd weights;            // S = 1/P(Delta=1 | V, Y); defaults to 1
  std::vector<std::uint8_t> s_member;  // target-population indicator; defaults to 1

  std::vector<std::string> l_names;
  std::vector<std::string> z_names;
  std::vector<std::string> w_names;

  std::optional<BlockTransforms> transforms;

  Eigen::Index n() const { return y.size(); }
  Eigen::Index dim_l() const { return l.cols(); }
  Eigen::Index dim_z() const { return z.cols(); }
  Eigen::Index dim_w() const { return w.cols(); }

  // Fills defaults (weights, masks), checks lengths; hard error on mismatch.
  void finalize();

  Dataset subset(const std::vector<Eigen::Index>& rows) const;

  bool complete(Eigen::Index i) const { return a_observed[static_cast<std::size_t>(i)] != 0; }
};

struct Finding {
  std::string message;
};

// Soft data checks: constant columns, non-binary outcome, suspicious weights.
std::vector<Finding> validate(const Dataset& ds);

// Computes per-block standardization (A over observed entries, L/Z/W over all
// rows) and returns a copy of the dataset with the transforms attached.
// Original-scale columns are kept: policies and indicators act on them, while
// kernel features are read through the transforms.
Dataset standardize_blocks(const Dataset& ds);

// --- CSV adapter (RFC 4180, header required, NA/empty = missing) ---

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::optional<double>>> rows;

  Eigen::Index column(const std::string& name) const;  // throws SchemaError
};

CsvTable read_csv(const std::string& path);

struct ColumnRoles {
  std::string trt;
  std::string outcome;
  std::vector<std::string> covariates;
  std::vector<std::string> nct;  // negative control treatments (Z)
  std::vector<std::string> nco;  // negative control outcomes (W)
  std::optional<std::string> weights;
  std::optional<std::string> ind_s;  // target-population indicator column
};

// Builds a Dataset from a parsed table. Rows with missing values outside the
// treatment column are dropped (count reported via *dropped); missing
// treatment is allowed only when a weights column is present.
Dataset dataset_from_csv(const CsvTable& table, const ColumnRoles& roles,
                         Eigen::Index* dropped = nullptr);

// Writes a dataset in the CLI schema (Y, L*, A, Z*, W*, wt); missing A cells
// are written as NA.
void write_csv(const std::string& path, const Dataset& ds);

}  // namespace pmtp
