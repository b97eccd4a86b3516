#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "sparseopt/adversarial.hpp"
#include "sparseopt/compare.hpp"
#include "sparseopt/config.hpp"
#include "sparseopt/diagnostics.hpp"
#include "sparseopt/train.hpp"

using namespace sparseopt;

namespace {

int cmd_train(const std::string& config_path, const std::string& out_dir, bool resume,
              std::optional<std::size_t> stop_after, std::optional<std::uint64_t> seed) {
  ExperimentConfig config = ExperimentConfig::from_file(config_path);
  if (seed) config.training.seed = *seed;
  RunOptions opts;
  opts.out_dir = out_dir;
  opts.resume = resume;
  opts.stop_after = stop_after;
  const TrainResult result = run_experiment(config, opts);
  if (result.fault) {
    std::cerr << "run aborted: " << result.fault->reason << " at epoch "
              << result.fault->epoch << " iteration " << result.fault->iteration << "\n";
    return 2;
  }
  if (!result.metrics.empty()) {
    const auto& last = result.metrics.back();
    std::cout << "epochs: " << result.epochs_completed
              << "  train_loss: " << format_double(last.train_loss)
              << "  clean_acc: " << format_double(last.clean_test_acc);
    if (last.robust_test_acc)
      std::cout << "  robust_acc: " << format_double(*last.robust_test_acc);
    std::cout << "\n";
  } else {
    std::cout << "epochs: 0 (checkpoint holds the initialization)\n";
  }
  std::cout << "outputs in " << out_dir << "\n";
  return 0;
}

int cmd_diagnose(const std::vector<std::string>& checkpoints, const std::string& kind,
                 std::size_t replicates, double stddev, std::size_t batch_size,
                 std::uint64_t seed, const std::string& out_dir,
                 const std::string& data_override) {
  std::filesystem::create_directories(out_dir);
  const bool want_corr = kind == "correlation" || kind == "both";
  const bool want_var = kind == "variance" || kind == "both";

  std::ofstream corr_csv, var_csv;
  if (want_corr) {
    corr_csv.open(out_dir + "/correlation.csv", std::ios::trunc);
    corr_csv << "sparsity,replicate,statistic,std,seed\n";
  }
  if (want_var) {
    var_csv.open(out_dir + "/variance.csv", std::ios::trunc);
    var_csv << "sparsity,replicate,statistic,std,seed\n";
  }

  for (const auto& ck_path : checkpoints) {
    const RestoredModel rm = restore_model(load_checkpoint(ck_path));
    Dataset train;
    if (!data_override.empty()) {
      train = load_csv(data_override);
    } else {
      train = load_data(rm.config).train;
    }
    const double sparsity = rm.mask.weight_sparsity();
    const std::size_t bs = std::min(batch_size, train.size());
    const auto emit = [&](DiagnosticKind k, std::ofstream& out) {
      const DiagnosticReport rep = run_diagnostic(k, rm.spec, rm.params, rm.mask, train,
                                                  bs, stddev, replicates, seed);
      for (std::size_t r = 0; r < rep.per_replicate.size(); ++r)
        out << format_double(sparsity) << ',' << r << ','
            << format_double(rep.per_replicate[r]) << ',' << format_double(stddev) << ','
            << seed << '\n';
      std::cout << ck_path << "  sparsity=" << format_double(sparsity) << "  "
                << (k == DiagnosticKind::Correlation ? "correlation" : "variance")
                << " mean=" << format_double(rep.mean) << "\n";
    };
    if (want_corr) emit(DiagnosticKind::Correlation, corr_csv);
    if (want_var) emit(DiagnosticKind::Variance, var_csv);
  }
  return 0;
}

int cmd_attack_eval(const std::string& ck_path, double eps, std::size_t iters,
                    std::size_t restarts, std::optional<double> step,
                    std::uint64_t seed) {
  const RestoredModel rm = restore_model(load_checkpoint(ck_path));
  const LoadedData data = load_data(rm.config);

  AttackConfig cfg;
  cfg.epsilon = eps;
  cfg.step_size = step ? *step : (iters > 0 ? std::max(eps / 4.0, 1e-9) : 1e-9);
  cfg.iterations = iters;
  cfg.random_start = true;
  cfg.restarts = restarts;
  cfg.validate();

  const double clean = accuracy(rm.spec, rm.params, data.test);
  const double robust =
      robust_accuracy(rm.spec, rm.params, rm.mask, data.test, cfg,
                      RngStream(seed).substream(stream_key::kEvalAttack));
  std::printf("clean/robust accuracy (%%): %.2f/%.2f\n", 100.0 * clean, 100.0 * robust);
  return 0;
}

int cmd_compare(const std::vector<std::string>& dirs, const std::string& out_prefix,
                const std::vector<double>& thresholds) {
  const CompareResult result = compare_runs(dirs, thresholds);
  std::cout << result.text;
  if (!out_prefix.empty()) {
    std::ofstream(out_prefix + "_budgets.csv", std::ios::trunc) << result.budgets_csv;
    std::ofstream(out_prefix + "_thresholds.csv", std::ios::trunc)
        << result.thresholds_csv;
    std::cout << "\nwrote " << out_prefix << "_budgets.csv and " << out_prefix
              << "_thresholds.csv\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"sparse-training optimization experiments"};
  app.require_subcommand(1);

  // train
  auto* train = app.add_subcommand("train", "run a training experiment");
  std::string config_path, out_dir;
  bool resume = false;
  std::optional<std::size_t> stop_after;
  std::optional<std::uint64_t> seed_override;
  train->add_option("--config", config_path, "experiment config (JSON)")->required();
  train->add_option("--out", out_dir, "output directory")->required();
  train->add_flag("--resume", resume, "continue from the checkpoint in --out");
  train->add_option("--stop-after", stop_after,
                    "pause after this many total epochs (resume later)");
  train->add_option("--seed", seed_override, "override training.seed");

  // diagnose
  auto* diagnose = app.add_subcommand(
      "diagnose", "gradient correlation/variance under weight perturbation");
  std::vector<std::string> ck_paths;
  std::string kind = "both", diag_out = ".", data_override;
  std::size_t replicates = 3, diag_batch = 128;
  double diag_std = 0.015;
  std::uint64_t diag_seed = 1;
  diagnose->add_option("--checkpoint", ck_paths, "checkpoint file(s)")->required();
  diagnose->add_option("--kind", kind, "correlation, variance, or both")
      ->check(CLI::IsMember({"correlation", "variance", "both"}));
  diagnose->add_option("--replicates", replicates, "perturbation replicates");
  diagnose->add_option("--std", diag_std, "perturbation std");
  diagnose->add_option("--batch-size", diag_batch, "batch size for variance");
  diagnose->add_option("--seed", diag_seed, "perturbation seed");
  diagnose->add_option("--out", diag_out, "output directory for CSVs");
  diagnose->add_option("--data", data_override, "CSV dataset override");

  // attack-eval
  auto* attack = app.add_subcommand("attack-eval", "clean/robust accuracy under PGD");
  std::string attack_ck;
  double eps = 8.0 / 255.0;
  std::size_t iters = 50, restarts = 10;
  std::optional<double> attack_step;
  std::uint64_t attack_seed = 1;
  attack->add_option("--checkpoint", attack_ck, "checkpoint file")->required();
  attack->add_option("--eps", eps, "L-inf radius");
  attack->add_option("--iters", iters, "attack iterations");
  attack->add_option("--restarts", restarts, "random restarts");
  attack->add_option("--step", attack_step, "step size (default eps/4)");
  attack->add_option("--seed", attack_seed, "attack seed");

  // compare
  auto* compare = app.add_subcommand("compare", "compare finished runs");
  std::vector<std::string> run_dirs;
  std::string out_prefix;
  std::vector<double> thresholds;
  compare->add_option("dirs", run_dirs, "run directories")->required()->expected(-1);
  compare->add_option("--out", out_prefix, "CSV output path prefix");
  compare->add_option("--thresholds", thresholds, "accuracy thresholds");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train)
      return cmd_train(config_path, out_dir, resume, stop_after, seed_override);
    if (*diagnose)
      return cmd_diagnose(ck_paths, kind, replicates, diag_std, diag_batch, diag_seed,
                          diag_out, data_override);
    if (*attack)
      return cmd_attack_eval(attack_ck, eps, iters, restarts, attack_step, attack_seed);
    if (*compare) return cmd_compare(run_dirs, out_prefix, thresholds);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
