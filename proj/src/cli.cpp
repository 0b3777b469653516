#include "pmtp/cli.hpp"

#include "pmtp/common.hpp"
#include "pmtp/crossfit.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

namespace pmtp {

namespace {

std::map<std::string, std::string> parse_kv(const std::string& body) {
  std::map<std::string, std::string> kv;
  std::stringstream ss(body);
  std::string item;
  while (std::getline(ss, item, ',')) {
    auto eq = item.find('=');
    if (eq == std::string::npos)
      throw SchemaError("policy spec: expected key=value, got '" + item + "'");
    kv[item.substr(0, eq)] = item.substr(eq + 1);
  }
  return kv;
}

double to_double(const std::string& s, const std::string& key) {
  try {
    std::size_t pos = 0;
    double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw SchemaError("policy spec: cannot parse number '" + s + "' for key '" + key + "'");
  }
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), f, v);
  return buf;
}

}  // namespace

TaperedShiftPolicy parse_policy(const std::string& spec, std::optional<double> data_min,
                                std::optional<double> data_max) {
  auto colon = spec.find(':');
  if (colon == std::string::npos)
    throw SchemaError("policy spec '" + spec + "': expected kind:key=value,...");
  const std::string kind = spec.substr(0, colon);
  auto kv = parse_kv(spec.substr(colon + 1));

  auto get = [&](const std::string& key, std::optional<double> fallback) {
    auto it = kv.find(key);
    if (it != kv.end()) return to_double(it->second, key);
    if (fallback) return *fallback;
    throw SchemaError("policy spec '" + spec + "': missing '" + key +
                      "' and no data range available");
  };

  const double c = get("c", data_min);
  const double d = get("d", data_max);
  const double delta = get("delta", std::nullopt);
  try {
    if (kind == "taper") {
      const double eps = get("eps", std::nullopt);
      const int r = kv.count("r") ? static_cast<int>(to_double(kv.at("r"), "r")) : 0;
      return TaperedShiftPolicy(delta, eps, r, c, d);
    }
    if (kind == "shift") return TaperedShiftPolicy(delta, 0.0, 1, c, d);
  } catch (const std::invalid_argument& e) {
    throw SchemaError("policy spec '" + spec + "': " + e.what());
  }
  throw SchemaError("policy spec '" + spec + "': unknown kind '" + kind +
                    "' (expected taper or shift)");
}

int cmd_estimate(const RunConfig& config, std::ostream& out, std::ostream& err) {
  try {
    CsvTable table = read_csv(config.data_path);
    Eigen::Index dropped = 0;
    Dataset ds = dataset_from_csv(table, config.roles, &dropped);
    if (dropped > 0)
      err << "note: dropped " << dropped << " rows with missing values outside the treatment\n";
    for (const auto& f : validate(ds)) err << "note: " << f.message << "\n";

    std::optional<double> a_min, a_max;
    for (Eigen::Index i = 0; i < ds.n(); ++i) {
      if (!ds.complete(i)) continue;
      a_min = a_min ? std::min(*a_min, ds.a(i)) : ds.a(i);
      a_max = a_max ? std::max(*a_max, ds.a(i)) : ds.a(i);
    }
    if (config.policy_specs.empty()) throw SchemaError("at least one --policy is required");
    std::vector<TaperedShiftPolicy> policies;
    for (const auto& spec : config.policy_specs)
      policies.push_back(parse_policy(spec, a_min, a_max));
    if (config.k_folds < 3) throw SchemaError("K_folds must be at least 3");

    Dataset ds_std = standardize_blocks(ds);

    CvCrossfitOptions opts;
    opts.cv.grid = config.grid;
    opts.cv.theta = config.theta;
    opts.cv.bw_fixed_scale = config.bw_int_fixed_scale;
    opts.cv.bw0_h = config.bw0_h;
    opts.cv.bw0_g = config.bw0_g;
    opts.cv.norm_bound = config.norm_bound;
    opts.stratify_folds = config.control_folds;
    opts.want_influence = config.emit_influence;
    opts.n_threads = config.n_threads == 0 ? default_thread_count() : config.n_threads;

    std::vector<DRResult> results;
    for (std::size_t p = 0; p < policies.size(); ++p) {
      if (config.show_progress)
        err << "estimating policy " << (p + 1) << "/" << policies.size() << "...\n";
      results.push_back(
          crossfit_with_cv(ds_std, policies[p], config.k_folds, config.seed, opts));
    }

    double n_target = 0.0;
    {
      // Target-population count from the user indicator alone (policy-free).
      for (Eigen::Index i = 0; i < ds.n(); ++i)
        if (ds.s_member[static_cast<std::size_t>(i)] != 0) n_target += 1.0;
    }

    if (config.format == "table") {
      out << "Summary of Proximal MTP Estimation\n";
      out << "--------------------------------------------------\n";
      out << "Number of observations: " << ds.n() << "\n";
      out << "Number in target population: " << static_cast<long long>(n_target) << " ("
          << fmt("%.0f", 100.0 * n_target / static_cast<double>(ds.n())) << "%)\n";
      for (std::size_t p = 0; p < results.size(); ++p)
        out << "-Proportion in the image of Policy_q^" << (p + 1) << ": "
            << fmt("%.0f", 100.0 * results[p].image_proportion) << "%\n";
      out << "\n";
      out << "--------------------------------------------------\n";
      out << "Proximal Estimators and 95% Confidence Intervals\n";
      out << "--------------------------------------------------\n";
      out << "Estimator: Proximal doubly-robust cross-fitted\n";
      out << "           Estimate Std.Error CI.Lower CI.Upper\n";
      for (std::size_t p = 0; p < results.size(); ++p) {
        const auto& r = results[p];
        out << "Policy_q^" << (p + 1) << "   " << fmt("%.4f", r.psi_hat) << "    "
            << fmt("%.4f", r.se) << "   " << fmt("%.4f", r.ci_lower) << "   "
            << fmt("%.4f", r.ci_upper) << "\n";
      }
    } else if (config.format == "json") {
      nlohmann::json root;
      root["schema_version"] = 1;
      root["n"] = ds.n();
      root["n_target"] = n_target;
      root["seed"] = config.seed;
      root["k_folds"] = config.k_folds;
      nlohmann::json pols = nlohmann::json::array();
      for (std::size_t p = 0; p < results.size(); ++p) {
        const auto& r = results[p];
        const auto& pol = policies[p];
        nlohmann::json jp;
        jp["name"] = "Policy_q^" + std::to_string(p + 1);
        jp["spec"] = config.policy_specs[p];
        jp["delta"] = pol.delta();
        jp["eps"] = pol.epsilon();
        jp["r"] = pol.r();
        jp["c"] = pol.c();
        jp["d"] = pol.d();
        jp["estimate"] = r.psi_hat;
        jp["se"] = r.se;
        jp["ci_lower"] = r.ci_lower;
        jp["ci_upper"] = r.ci_upper;
        jp["tau_sq"] = r.tau_sq;
        jp["n_effective"] = r.n_effective;
        jp["image_proportion"] = r.image_proportion;
        jp["fold_h_configs"] = r.fold_h_labels;
        jp["fold_g_configs"] = r.fold_g_labels;
        if (r.influence) {
          nlohmann::json infl = nlohmann::json::array();
          for (Eigen::Index i = 0; i < r.influence->size(); ++i) infl.push_back((*r.influence)(i));
          jp["influence"] = std::move(infl);
        }
        pols.push_back(std::move(jp));
      }
      root["policies"] = std::move(pols);
      out << root.dump(2) << "\n";
    } else if (config.format == "csv") {
      out << "policy,estimate,se,ci_lower,ci_upper,image_proportion,n_effective\n";
      for (std::size_t p = 0; p < results.size(); ++p) {
        const auto& r = results[p];
        out << "Policy_q^" << (p + 1) << "," << fmt("%.10g", r.psi_hat) << ","
            << fmt("%.10g", r.se) << "," << fmt("%.10g", r.ci_lower) << ","
            << fmt("%.10g", r.ci_upper) << "," << fmt("%.10g", r.image_proportion) << ","
            << fmt("%.10g", r.n_effective) << "\n";
      }
    } else {
      throw SchemaError("unknown output format '" + config.format + "'");
    }
    return kExitOk;
  } catch (const SchemaError& e) {
    err << "error: " << e.what() << "\n";
    return kExitSchema;
  } catch (const NumericError& e) {
    err << "numerical error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << "\n";
    return kExitSchema;
  }
}

int cmd_simulate(const SimulateConfig& config, std::ostream& out, std::ostream& err) {
  try {
    DGPConfig dgp;
    TaperedShiftPolicy policy = TaperedShiftPolicy(0.4, 1.0, 0, -2.0, 2.0);
    double truth = 0.0;
    std::string label;
    if (config.dgp_override) {
      dgp = *config.dgp_override;
      if (!config.override_true_psi)
        throw SchemaError("simulate: DGP override requires --true-psi");
      truth = *config.override_true_psi;
      label = "custom";
    } else {
      const Scenario& sc = find_scenario(config.scenario);
      dgp = sc.config;
      policy = sc.policy;
      truth = sc.true_psi;
      label = sc.name;
    }

    std::filesystem::create_directories(config.out_dir);
    const std::string results_path = config.out_dir + "/results.csv";
    std::ofstream results(results_path);
    if (!results) throw SchemaError("simulate: cannot write '" + results_path + "'");
    results << "scenario,n,rep,estimate,se,ci_lower,ci_upper,covered,true_psi\n";

    const unsigned n_threads = config.n_threads == 0 ? default_thread_count() : config.n_threads;
    std::vector<DRResult> rep_results(static_cast<std::size_t>(std::max(config.reps, 0)));
    std::optional<MissingModel> missing;
    if (config.missing_p0) missing = MissingModel{*config.missing_p0};

    parallel_for(
        rep_results.size(),
        [&](std::size_t rep) {
          const std::uint64_t rep_seed = config.seed + rep;
          Generated gen = generate(dgp, config.n, rep_seed, missing);
          if (config.write_data) {
            char name[64];
            std::snprintf(name, sizeof(name), "/data_rep%04zu.csv", rep);
            write_csv(config.out_dir + name, gen.dataset);
          }
          CvCrossfitOptions opts;
          opts.cv.grid = config.grid;
          opts.cv.theta = config.theta;
          opts.stratify_folds = config.control_folds;
          opts.n_threads = 1;
          rep_results[rep] =
              crossfit_with_cv(gen.dataset, policy, config.k_folds, rep_seed, opts);
        },
        n_threads);

    for (std::size_t rep = 0; rep < rep_results.size(); ++rep) {
      const auto& r = rep_results[rep];
      const int covered = (truth >= r.ci_lower && truth <= r.ci_upper) ? 1 : 0;
      results << label << "," << config.n << "," << rep << "," << fmt("%.10g", r.psi_hat) << ","
              << fmt("%.10g", r.se) << "," << fmt("%.10g", r.ci_lower) << ","
              << fmt("%.10g", r.ci_upper) << "," << covered << "," << fmt("%.10g", truth)
              << "\n";
    }
    err << "wrote " << rep_results.size() << " result rows to " << results_path << "\n";
    out << results_path << "\n";
    return kExitOk;
  } catch (const SchemaError& e) {
    err << "error: " << e.what() << "\n";
    return kExitSchema;
  } catch (const NumericError& e) {
    err << "numerical error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << "\n";
    return kExitSchema;
  }
}

int cmd_truth(const TruthConfig& config, std::ostream& out, std::ostream& err) {
  try {
    const Scenario& sc = find_scenario(config.scenario);
    const unsigned n_threads = config.n_threads == 0 ? default_thread_count() : config.n_threads;
    MonteCarloValue mc = true_psi(sc.config, sc.policy, sc.s_only, config.n_mc, config.seed, 128,
                                  n_threads);
    out << sc.name << ": psi0 = " << fmt("%.4f", mc.value) << " +/- " << fmt("%.2g", mc.mc_se)
        << " (MC SE), registered " << fmt("%.4f", sc.true_psi) << "\n";
    return kExitOk;
  } catch (const SchemaError& e) {
    err << "error: " << e.what() << "\n";
    return kExitSchema;
  } catch (const NumericError& e) {
    err << "numerical error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << "\n";
    return kExitSchema;
  }
}

}  // namespace pmtp
