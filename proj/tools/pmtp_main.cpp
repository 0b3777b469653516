#include "pmtp/cli.hpp"
#include "pmtp/common.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <string>
#include <vector>

namespace {

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : s) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

std::vector<double> split_doubles(const std::string& s) {
  std::vector<double> out;
  for (const auto& tok : split_list(s)) out.push_back(std::stod(tok));
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Proximal estimation of counterfactual means under modified treatment policies"};
  app.require_subcommand(1);
  app.fallthrough();  // global flags like --threads work after the subcommand

  unsigned threads = 0;
  app.add_option("--threads", threads,
                 "worker threads (default: PMTP_THREADS env or hardware concurrency)");

  // --- estimate ---
  auto* est = app.add_subcommand("estimate", "estimate counterfactual MTP means from a CSV file");
  pmtp::RunConfig run;
  std::string covariates, nct, nco, weights_col, ind_s = "all";
  std::string lm_h, lm_g, lm_gh, lm_hg, bw_ext;
  double bw0_h = 0.0, bw0_g = 0.0, norm_bound = 0.0, bw_int_scale = 0.25;
  est->add_option("--data", run.data_path, "input CSV path")->required();
  est->add_option("--trt", run.roles.trt, "treatment column")->required();
  est->add_option("--outcome", run.roles.outcome, "outcome column")->required();
  est->add_option("--covariates", covariates, "comma-separated covariate columns")->required();
  est->add_option("--nct", nct, "comma-separated negative control treatment columns")->required();
  est->add_option("--nco", nco, "comma-separated negative control outcome columns")->required();
  est->add_option("--weights", weights_col, "sampling weights column (two-phase designs)");
  est->add_option("--ind-s", ind_s, "target population indicator column, or 'all'");
  est->add_option("--policy", run.policy_specs,
                  "policy spec, e.g. taper:delta=0.4,eps=1,r=0,c=-2,d=2 or shift:delta=0.4 "
                  "(c,d default to the observed treatment range); repeatable")
      ->required();
  est->add_option("--k-folds", run.k_folds, "number of cross-fitting folds (>= 3)");
  est->add_option("--theta", run.theta, "scale on the cross-validation risk regularizer");
  est->add_option("--lm-h-list", lm_h, "comma-separated c1 scales (outer lambda, outcome bridge)");
  est->add_option("--lm-g-list", lm_g, "comma-separated c3 scales (outer lambda, treatment bridge)");
  est->add_option("--lm-gh-list", lm_gh, "comma-separated c2 scales (inner lambda, outcome bridge)");
  est->add_option("--lm-hg-list", lm_hg, "comma-separated c4 scales (inner lambda, treatment bridge)");
  est->add_option("--bw-ext-scale-list", bw_ext, "comma-separated c5 bandwidth scales");
  est->add_option("--bw-int-scale", bw_int_scale, "inner-kernel bandwidth scale");
  est->add_option("--bw-int-fixed-scale", run.bw_int_fixed_scale,
                  "cross-validation risk kernel bandwidth scale");
  est->add_option("--bw0-h", bw0_h, "base bandwidth override for the (A,L,W) kernels");
  est->add_option("--bw0-g", bw0_g, "base bandwidth override for the (A,L,Z) kernels");
  est->add_option("--norm-bound", norm_bound, "RKHS norm-ball radius B (default unconstrained)");
  est->add_option("--seed", run.seed, "random seed");
  est->add_flag("--emit-influence", run.emit_influence, "include influence values in JSON output");
  est->add_flag("--show-progress", run.show_progress, "print progress to stderr");
  est->add_flag("--control-folds", run.control_folds,
                "stratify fold assignment on the treatment distribution");
  est->add_option("--format", run.format, "output format: table, json, or csv");

  // --- simulate ---
  auto* sim = app.add_subcommand("simulate", "run seeded replications of the estimation pipeline");
  pmtp::SimulateConfig simc;
  std::string sim_lm_h, sim_lm_g, sim_lm_gh, sim_lm_hg, sim_bw_ext;
  double missing_p0 = 0.0;
  bool reduced_grid = false;
  sim->add_option("--scenario", simc.scenario, "registered scenario name")->required();
  sim->add_option("--n", simc.n, "sample size per replication");
  sim->add_option("--reps", simc.reps, "number of replications");
  sim->add_option("--seed", simc.seed, "base seed; replication r uses seed + r");
  sim->add_option("--out-dir", simc.out_dir, "output directory")->required();
  sim->add_flag("--write-data", simc.write_data, "also write each replication's dataset");
  sim->add_option("--missing-p0", missing_p0,
                  "enable two-phase sampling: P(observe A | Y) = min(1, p0 + (1-p0) Y)");
  sim->add_option("--k-folds", simc.k_folds, "number of cross-fitting folds (>= 3)");
  sim->add_option("--theta", simc.theta, "scale on the cross-validation risk regularizer");
  sim->add_flag("--reduced-grid", reduced_grid,
                "desk-scale grid: c1,c3 in {1e-4,1e-3,1e-2}, c2,c4 in {1,10}, c5 in {1/2,1,2}");
  sim->add_option("--lm-h-list", sim_lm_h, "comma-separated c1 scales");
  sim->add_option("--lm-g-list", sim_lm_g, "comma-separated c3 scales");
  sim->add_option("--lm-gh-list", sim_lm_gh, "comma-separated c2 scales");
  sim->add_option("--lm-hg-list", sim_lm_hg, "comma-separated c4 scales");
  sim->add_option("--bw-ext-scale-list", sim_bw_ext, "comma-separated c5 scales");
  sim->add_flag("--control-folds", simc.control_folds, "stratified fold assignment");

  // --- truth ---
  auto* tru = app.add_subcommand("truth", "Monte Carlo ground truth for a registered scenario");
  pmtp::TruthConfig truc;
  tru->add_option("--scenario", truc.scenario, "registered scenario name")->required();
  tru->add_option("--n-mc", truc.n_mc, "Monte Carlo draws");
  tru->add_option("--seed", truc.seed, "random seed");

  CLI11_PARSE(app, argc, argv);

  try {
    if (est->parsed()) {
      run.roles.covariates = split_list(covariates);
      run.roles.nct = split_list(nct);
      run.roles.nco = split_list(nco);
      if (!weights_col.empty()) run.roles.weights = weights_col;
      if (ind_s != "all") run.roles.ind_s = ind_s;
      if (!lm_h.empty()) run.grid.c1_list = split_doubles(lm_h);
      if (!lm_g.empty()) run.grid.c3_list = split_doubles(lm_g);
      if (!lm_gh.empty()) run.grid.c2_list = split_doubles(lm_gh);
      if (!lm_hg.empty()) run.grid.c4_list = split_doubles(lm_hg);
      if (!bw_ext.empty()) run.grid.c5_list = split_doubles(bw_ext);
      run.grid.bw_inner_scale = bw_int_scale;
      if (bw0_h > 0.0) run.bw0_h = bw0_h;
      if (bw0_g > 0.0) run.bw0_g = bw0_g;
      if (norm_bound > 0.0) run.norm_bound = norm_bound;
      run.n_threads = threads;
      return pmtp::cmd_estimate(run, std::cout, std::cerr);
    }
    if (sim->parsed()) {
      if (reduced_grid) {
        simc.grid.c1_list = {1e-4, 1e-3, 1e-2};
        simc.grid.c3_list = {1e-4, 1e-3, 1e-2};
        simc.grid.c2_list = {1.0, 10.0};
        simc.grid.c4_list = {1.0, 10.0};
        simc.grid.c5_list = {0.5, 1.0, 2.0};
      }
      if (!sim_lm_h.empty()) simc.grid.c1_list = split_doubles(sim_lm_h);
      if (!sim_lm_g.empty()) simc.grid.c3_list = split_doubles(sim_lm_g);
      if (!sim_lm_gh.empty()) simc.grid.c2_list = split_doubles(sim_lm_gh);
      if (!sim_lm_hg.empty()) simc.grid.c4_list = split_doubles(sim_lm_hg);
      if (!sim_bw_ext.empty()) simc.grid.c5_list = split_doubles(sim_bw_ext);
      if (missing_p0 > 0.0) simc.missing_p0 = missing_p0;
      simc.n_threads = threads;
      return pmtp::cmd_simulate(simc, std::cout, std::cerr);
    }
    if (tru->parsed()) {
      truc.n_threads = threads;
      return pmtp::cmd_truth(truc, std::cout, std::cerr);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
