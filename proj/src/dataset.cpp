#include "pmtp/dataset.hpp"

#include "pmtp/common.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace pmtp {

void Dataset::finalize() {
  const Eigen::Index nrows = y.size();
  if (a.size() != nrows) throw SchemaError("dataset: treatment length mismatch");
  if (l.rows() != nrows || z.rows() != nrows || w.rows() != nrows)
    throw SchemaError("dataset: block row-count mismatch");
  if (a_observed.empty()) a_observed.assign(static_cast<std::size_t>(nrows), 1);
  if (a_observed.size() != static_cast<std::size_t>(nrows))
    throw SchemaError("dataset: missingness mask length mismatch");
  if (weights.size() == 0) weights = Eigen::VectorXd::Ones(nrows);
  if (weights.size() != nrows) throw SchemaError("dataset: weights length mismatch");
  if (s_member.empty()) s_member.assign(static_cast<std::size_t>(nrows), 1);
  if (s_member.size() != static_cast<std::size_t>(nrows))
    throw SchemaError("dataset: ind_S length mismatch");
  for (Eigen::Index i = 0; i < nrows; ++i) {
    if (complete(i) && !(weights(i) > 0.0))
      throw SchemaError("dataset: nonpositive weight on complete case row " + std::to_string(i));
  }
}

Dataset Dataset::subset(const std::vector<Eigen::Index>& rows) const {
  Dataset out;
  const Eigen::Index m = static_cast<Eigen::Index>(rows.size());
  out.y.resize(m);
  out.a.resize(m);
  out.a_observed.resize(rows.size());
  out.l.resize(m, l.cols());
  out.z.resize(m, z.cols());
  out.w.resize(m, w.cols());
  out.weights.resize(m);
  out.s_member.resize(rows.size());
  for (Eigen::Index k = 0; k < m; ++k) {
    const Eigen::Index i = rows[static_cast<std::size_t>(k)];
    out.y(k) = y(i);
    out.a(k) = a(i);
    out.a_observed[static_cast<std::size_t>(k)] = a_observed[static_cast<std::size_t>(i)];
    out.l.row(k) = l.row(i);
    out.z.row(k) = z.row(i);
    out.w.row(k) = w.row(i);
    out.weights(k) = weights(i);
    out.s_member[static_cast<std::size_t>(k)] = s_member[static_cast<std::size_t>(i)];
  }
  out.l_names = l_names;
  out.z_names = z_names;
  out.w_names = w_names;
  out.transforms = transforms;
  return out;
}

namespace {

bool column_constant(const Eigen::VectorXd& col) {
  return col.size() > 0 && (col.array() == col(0)).all();
}

void check_block(const Eigen::MatrixXd& block, const std::vector<std::string>& names,
                 const std::string& role, std::vector<Finding>& findings) {
  for (Eigen::Index j = 0; j < block.cols(); ++j) {
    if (column_constant(block.col(j))) {
      std::string name = j < static_cast<Eigen::Index>(names.size())
                             ? names[static_cast<std::size_t>(j)]
                             : (role + "[" + std::to_string(j) + "]");
      findings.push_back({"constant " + role + " column '" + name + "'"});
    }
  }
}

}  // namespace

std::vector<Finding> validate(const Dataset& ds) {
  std::vector<Finding> findings;
  check_block(ds.l, ds.l_names, "covariate", findings);
  check_block(ds.z, ds.z_names, "negative control treatment", findings);
  check_block(ds.w, ds.w_names, "negative control outcome", findings);
  bool binary = true;
  for (Eigen::Index i = 0; i < ds.n(); ++i)
    if (ds.y(i) != 0.0 && ds.y(i) != 1.0) binary = false;
  if (!binary) findings.push_back({"outcome is not binary (continuous outcomes are supported)"});
  Eigen::Index n_missing = 0;
  Eigen::Index n_small_weight = 0;
  for (Eigen::Index i = 0; i < ds.n(); ++i) {
    if (!ds.complete(i)) ++n_missing;
    if (ds.complete(i) && ds.weights(i) < 1.0) ++n_small_weight;
  }
  if (n_small_weight > 0)
    findings.push_back({"weights < 1 on " + std::to_string(n_small_weight) +
                        " rows (inverse-probability weights are expected to be >= 1)"});
  if (n_missing > 0) {
    bool any_weight = (ds.weights.array() != 1.0).any();
    if (!any_weight)
      findings.push_back({"treatment missing on " + std::to_string(n_missing) +
                          " rows but all weights are 1; two-phase sampling weights expected"});
  }
  return findings;
}

Dataset standardize_blocks(const Dataset& ds) {
  Dataset out = ds;
  BlockTransforms t;

  // A: moments over observed entries only.
  std::vector<Eigen::Index> obs;
  for (Eigen::Index i = 0; i < ds.n(); ++i)
    if (ds.complete(i)) obs.push_back(i);
  if (obs.empty()) throw SchemaError("standardize_blocks: no observed treatment values");
  Eigen::VectorXd a_obs(static_cast<Eigen::Index>(obs.size()));
  for (std::size_t k = 0; k < obs.size(); ++k) a_obs(static_cast<Eigen::Index>(k)) = ds.a(obs[k]);
  t.a = standardize(a_obs, {"A"}).transform;

  t.l = standardize(ds.l, ds.l_names).transform;
  t.z = standardize(ds.z, ds.z_names).transform;
  t.w = standardize(ds.w, ds.w_names).transform;
  out.transforms = t;
  return out;
}

// --- CSV ---

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    char ch = line[i];
    if (quoted) {
      if (ch == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur.push_back(ch);
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      fields.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur.push_back(ch);
    }
  }
  fields.push_back(cur);
  return fields;
}

std::optional<double> parse_cell(const std::string& raw) {
  std::string s = raw;
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.erase(s.begin());
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.pop_back();
  if (s.empty() || s == "NA" || s == "na" || s == "NaN" || s == "nan") return std::nullopt;
  std::size_t pos = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &pos);
  } catch (const std::exception&) {
    throw SchemaError("csv: cannot parse numeric cell '" + raw + "'");
  }
  if (pos != s.size()) throw SchemaError("csv: cannot parse numeric cell '" + raw + "'");
  return v;
}

}  // namespace

Eigen::Index CsvTable::column(const std::string& name) const {
  for (std::size_t j = 0; j < header.size(); ++j)
    if (header[j] == name) return static_cast<Eigen::Index>(j);
  throw SchemaError("csv: column '" + name + "' not found");
}

CsvTable read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw SchemaError("csv: cannot open '" + path + "'");
  CsvTable table;
  std::string line;
  if (!std::getline(in, line)) throw SchemaError("csv: '" + path + "' is empty");
  table.header = split_csv_line(line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto fields = split_csv_line(line);
    if (fields.size() != table.header.size())
      throw SchemaError("csv: row with " + std::to_string(fields.size()) + " fields, expected " +
                        std::to_string(table.header.size()));
    std::vector<std::optional<double>> row;
    row.reserve(fields.size());
    for (const auto& f : fields) row.push_back(parse_cell(f));
    table.rows.push_back(std::move(row));
  }
  return table;
}

Dataset dataset_from_csv(const CsvTable& table, const ColumnRoles& roles, Eigen::Index* dropped) {
  const Eigen::Index ci_trt = table.column(roles.trt);
  const Eigen::Index ci_out = table.column(roles.outcome);
  std::vector<Eigen::Index> ci_l, ci_z, ci_w;
  for (const auto& c : roles.covariates) ci_l.push_back(table.column(c));
  for (const auto& c : roles.nct) ci_z.push_back(table.column(c));
  for (const auto& c : roles.nco) ci_w.push_back(table.column(c));
  std::optional<Eigen::Index> ci_wt, ci_s;
  if (roles.weights) ci_wt = table.column(*roles.weights);
  if (roles.ind_s) ci_s = table.column(*roles.ind_s);
  if (ci_z.empty()) throw SchemaError("csv: at least one negative control treatment required");
  if (ci_w.empty()) throw SchemaError("csv: at least one negative control outcome required");

  // Complete-case rule: only the treatment column may be missing, and then
  // only when sampling weights are provided.
  std::vector<std::vector<std::optional<double>>> kept;
  Eigen::Index n_dropped = 0;
  for (const auto& row : table.rows) {
    bool usable = row[static_cast<std::size_t>(ci_out)].has_value();
    for (auto j : ci_l) usable = usable && row[static_cast<std::size_t>(j)].has_value();
    for (auto j : ci_z) usable = usable && row[static_cast<std::size_t>(j)].has_value();
    for (auto j : ci_w) usable = usable && row[static_cast<std::size_t>(j)].has_value();
    if (ci_wt) usable = usable && row[static_cast<std::size_t>(*ci_wt)].has_value();
    if (ci_s) usable = usable && row[static_cast<std::size_t>(*ci_s)].has_value();
    if (!row[static_cast<std::size_t>(ci_trt)].has_value() && !ci_wt) usable = false;
    if (usable)
      kept.push_back(row);
    else
      ++n_dropped;
  }
  if (dropped) *dropped = n_dropped;
  if (kept.empty()) throw SchemaError("csv: no usable rows after complete-case filtering");

  const Eigen::Index n = static_cast<Eigen::Index>(kept.size());
  Dataset ds;
  ds.y.resize(n);
  ds.a.resize(n);
  ds.a_observed.resize(static_cast<std::size_t>(n));
  ds.l.resize(n, static_cast<Eigen::Index>(ci_l.size()));
  ds.z.resize(n, static_cast<Eigen::Index>(ci_z.size()));
  ds.w.resize(n, static_cast<Eigen::Index>(ci_w.size()));
  ds.weights.resize(n);
  ds.s_member.resize(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& row = kept[static_cast<std::size_t>(i)];
    ds.y(i) = *row[static_cast<std::size_t>(ci_out)];
    const auto& trt = row[static_cast<std::size_t>(ci_trt)];
    ds.a_observed[static_cast<std::size_t>(i)] = trt.has_value() ? 1 : 0;
    ds.a(i) = trt.value_or(0.0);
    for (std::size_t j = 0; j < ci_l.size(); ++j)
      ds.l(i, static_cast<Eigen::Index>(j)) = *row[static_cast<std::size_t>(ci_l[j])];
    for (std::size_t j = 0; j < ci_z.size(); ++j)
      ds.z(i, static_cast<Eigen::Index>(j)) = *row[static_cast<std::size_t>(ci_z[j])];
    for (std::size_t j = 0; j < ci_w.size(); ++j)
      ds.w(i, static_cast<Eigen::Index>(j)) = *row[static_cast<std::size_t>(ci_w[j])];
    ds.weights(i) = ci_wt ? *row[static_cast<std::size_t>(*ci_wt)] : 1.0;
    ds.s_member[static_cast<std::size_t>(i)] =
        ci_s ? (*row[static_cast<std::size_t>(*ci_s)] != 0.0 ? 1 : 0) : 1;
  }
  ds.l_names = roles.covariates;
  ds.z_names = roles.nct;
  ds.w_names = roles.nco;
  ds.finalize();
  return ds;
}

void write_csv(const std::string& path, const Dataset& ds) {
  std::ofstream out(path);
  if (!out) throw SchemaError("csv: cannot write '" + path + "'");
  out << "Y";
  for (Eigen::Index j = 0; j < ds.dim_l(); ++j)
    out << "," << (j < static_cast<Eigen::Index>(ds.l_names.size())
                       ? ds.l_names[static_cast<std::size_t>(j)]
                       : "L" + std::to_string(j + 1));
  out << ",A";
  for (Eigen::Index j = 0; j < ds.dim_z(); ++j)
    out << "," << (j < static_cast<Eigen::Index>(ds.z_names.size())
                       ? ds.z_names[static_cast<std::size_t>(j)]
                       : (ds.dim_z() == 1 ? "Z" : "Z" + std::to_string(j + 1)));
  for (Eigen::Index j = 0; j < ds.dim_w(); ++j)
    out << "," << (j < static_cast<Eigen::Index>(ds.w_names.size())
                       ? ds.w_names[static_cast<std::size_t>(j)]
                       : (ds.dim_w() == 1 ? "W" : "W" + std::to_string(j + 1)));
  out << ",wt\n";
  char buf[64];
  auto fmt = [&buf](double v) {
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return std::string(buf);
  };
  for (Eigen::Index i = 0; i < ds.n(); ++i) {
    out << fmt(ds.y(i));
    for (Eigen::Index j = 0; j < ds.dim_l(); ++j) out << "," << fmt(ds.l(i, j));
    out << ",";
    if (ds.complete(i))
      out << fmt(ds.a(i));
    else
      out << "NA";
    for (Eigen::Index j = 0; j < ds.dim_z(); ++j) out << "," << fmt(ds.z(i, j));
    for (Eigen::Index j = 0; j < ds.dim_w(); ++j) out << "," << fmt(ds.w(i, j));
    out << "," << fmt(ds.weights(i)) << "\n";
  }
}

}  // namespace pmtp
