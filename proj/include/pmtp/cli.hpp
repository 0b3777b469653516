#pragma once

#include "pmtp/cv.hpp"
#include "pmtp/dataset.hpp"
#include "pmtp/policy.hpp"
#include "pmtp/simulation.hpp"

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace pmtp {

// Exit codes: 0 success, 2 schema error, 3 numerical failure.
inline constexpr int kExitOk = 0;
inline constexpr int kExitSchema = 2;
inline constexpr int kExitNumeric = 3;

// Parses "taper:delta=0.4,eps=1,r=0,c=-2,d=2" or "shift:delta=0.4,c=-2,d=2"
// (shift = taper with eps = 0, r = 1). Missing c/d fall back to the observed
// treatment range when provided.
TaperedShiftPolicy parse_policy(const std::string& spec, std::optional<double> data_min,
                                std::optional<double> data_max);

struct RunConfig {
  std::string data_path;
  ColumnRoles roles;
  std::vector<std::string> policy_specs;
  int k_folds = 3;
  double theta = 1.0;
  HyperGrid grid = HyperGrid::defaults();
  std::optional<double> bw0_h;
  std::optional<double> bw0_g;
  double bw_int_fixed_scale = 0.25;
  std::optional<double> norm_bound;
  std::uint64_t seed = 1;
  bool emit_influence = false;
  bool show_progress = false;
  bool control_folds = false;
  std::string format = "table";  // table | json | csv
  unsigned n_threads = 0;
};

int cmd_estimate(const RunConfig& config, std::ostream& out, std::ostream& err);

struct SimulateConfig {
  std::string scenario;
  std::optional<DGPConfig> dgp_override;  // with policy/truth taken from flags below
  std::optional<double> override_true_psi;
  Eigen::Index n = 750;
  int reps = 5;
  std::uint64_t seed = 1;
  std::string out_dir;
  bool write_data = false;
  std::optional<double> missing_p0;  // enables two-phase sampling
  int k_folds = 3;
  HyperGrid grid = HyperGrid::defaults();
  double theta = 1.0;
  bool control_folds = false;
  unsigned n_threads = 0;
};

int cmd_simulate(const SimulateConfig& config, std::ostream& out, std::ostream& err);

struct TruthConfig {
  std::string scenario;
  std::int64_t n_mc = 10000000;
  std::uint64_t seed = 1;
  unsigned n_threads = 0;
};

int cmd_truth(const TruthConfig& config, std::ostream& out, std::ostream& err);

}  // namespace pmtp
