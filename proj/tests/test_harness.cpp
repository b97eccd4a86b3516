#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "json.hpp"
#include "sparseopt/compare.hpp"
#include "sparseopt/train.hpp"

using namespace sparseopt;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

// small deterministic experiment for harness tests
ExperimentConfig tiny_config() {
  ExperimentConfig cfg;
  cfg.dataset.classes = 3;
  cfg.dataset.dim = 6;
  cfg.dataset.train_per_class = 20;
  cfg.dataset.test_per_class = 8;
  cfg.dataset.separation = 2.0;
  cfg.model.hidden = {8};
  cfg.optimizer.kind = OptimizerKind::Sgd;
  cfg.optimizer.lr = 0.1;
  cfg.sparsity.sparsity = 0.5;
  cfg.training.epochs = 3;
  cfg.training.batch_size = 10;
  cfg.training.lr_breakpoints = {};
  cfg.training.lr_factors = {};
  cfg.training.seed = 11;
  return cfg;
}

std::string tmp_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir.string();
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

bool trajectories_equal(const std::vector<MetricsRecord>& a,
                        const std::vector<MetricsRecord>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].epoch != b[i].epoch) return false;
    if (a[i].train_loss != b[i].train_loss) return false;
    if (a[i].clean_test_acc != b[i].clean_test_acc) return false;
    if (a[i].robust_test_acc != b[i].robust_test_acc) return false;
    if (a[i].mean_grad_norm != b[i].mean_grad_norm) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("config json round trip and validation") {
  const ExperimentConfig cfg = tiny_config();
  const ExperimentConfig back = ExperimentConfig::from_json(cfg.to_json());
  CHECK(back.canonical_dump() == cfg.canonical_dump());
  CHECK(back.content_hash() == cfg.content_hash());

  SUBCASE("unknown keys are rejected with the offending name") {
    json j = cfg.to_json();
    j["optimizer"]["learning_rate"] = 0.1;
    CHECK_THROWS_WITH_AS((void)ExperimentConfig::from_json(j),
                         doctest::Contains("optimizer.learning_rate"), ConfigError);
    json j2 = cfg.to_json();
    j2["typo_section"] = json::object();
    CHECK_THROWS_AS((void)ExperimentConfig::from_json(j2), ConfigError);
  }

  SUBCASE("bad values name the field") {
    json j = cfg.to_json();
    j["optimizer"]["gamma"] = 1.5;
    CHECK_THROWS_WITH_AS((void)ExperimentConfig::from_json(j),
                         doctest::Contains("optimizer.gamma"), ConfigError);
    json j2 = cfg.to_json();
    j2["sparsity"]["sparsity"] = 1.0;
    CHECK_THROWS_WITH_AS((void)ExperimentConfig::from_json(j2),
                         doctest::Contains("sparsity.sparsity"), ConfigError);
    json j3 = cfg.to_json();
    j3["training"]["lr_factors"] = {0.1};
    CHECK_THROWS_WITH_AS((void)ExperimentConfig::from_json(j3),
                         doctest::Contains("lr_factors"), ConfigError);
  }
}

TEST_CASE("lr schedule is a right-continuous step function") {
  ExperimentConfig cfg = tiny_config();
  cfg.optimizer.lr = 0.1;
  cfg.training.lr_breakpoints = {50, 100};
  cfg.training.lr_factors = {0.1, 0.1};
  CHECK(cfg.lr_at(0) == 0.1);
  CHECK(cfg.lr_at(49) == 0.1);
  CHECK(cfg.lr_at(50) == doctest::Approx(0.01));
  CHECK(cfg.lr_at(99) == doctest::Approx(0.01));
  CHECK(cfg.lr_at(100) == doctest::Approx(0.001));
  CHECK(cfg.lr_at(500) == doctest::Approx(0.001));
}

TEST_CASE("metrics csv round trip") {
  MetricsRecord r;
  r.epoch = 3;
  r.train_loss = 0.123456789012345678;
  r.clean_test_acc = 0.875;
  r.robust_test_acc = std::nullopt;
  r.c_hat = 0.4;
  r.c_smoothed = 0.2;
  r.anchor_corr = -0.75;
  r.mean_grad_norm = 1.5e-3;
  const MetricsRecord back = parse_metrics_csv_row(metrics_csv_row(r));
  CHECK(back.epoch == r.epoch);
  CHECK(back.train_loss == r.train_loss);
  CHECK(back.clean_test_acc == r.clean_test_acc);
  CHECK(back.robust_test_acc == r.robust_test_acc);
  CHECK(back.c_hat == r.c_hat);
  CHECK(back.c_smoothed == r.c_smoothed);
  CHECK(back.anchor_corr == r.anchor_corr);
  CHECK(back.mean_grad_norm == r.mean_grad_norm);
}

TEST_CASE("checkpoint round trip is byte-identical and failure-atomic") {
  const std::string dir = tmp_dir("sparseopt_ck_test");
  Checkpoint ck;
  ck.config_json = "{}";
  ck.seed = 42;
  ck.next_epoch = 7;
  RngStream rng(1);
  ck.put_tensor("params.w", rng.gaussian({3, 2}, 0.0, 1.0));
  ck.put_tensor("params.b", rng.gaussian({2}, 0.0, 1.0));
  ck.put_scalar("c", 0.25);
  ck.put_counter("steps", 99);

  const std::string p1 = dir + "/a.bin";
  const std::string p2 = dir + "/b.bin";
  save_checkpoint(p1, ck);
  const Checkpoint loaded = load_checkpoint(p1);
  save_checkpoint(p2, loaded);
  CHECK(slurp(p1) == slurp(p2));
  CHECK(loaded.get_scalar("c") == 0.25);
  CHECK(loaded.get_counter("steps") == 99);
  CHECK(loaded.get_tensor("params.w").vec() == ck.get_tensor("params.w").vec());

  SUBCASE("truncation is detected") {
    std::string bytes = slurp(p1);
    std::ofstream out(dir + "/trunc.bin", std::ios::binary | std::ios::trunc);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() / 2));
    out.close();
    CHECK_THROWS_AS((void)load_checkpoint(dir + "/trunc.bin"), CheckpointError);
  }

  SUBCASE("bit corruption is detected") {
    std::string bytes = slurp(p1);
    bytes[bytes.size() / 2] ^= 0x40;
    std::ofstream out(dir + "/corrupt.bin", std::ios::binary | std::ios::trunc);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.close();
    CHECK_THROWS_AS((void)load_checkpoint(dir + "/corrupt.bin"), CheckpointError);
  }

  SUBCASE("wrong magic is rejected") {
    std::ofstream out(dir + "/junk.bin", std::ios::binary | std::ios::trunc);
    out << "not a checkpoint at all";
    out.close();
    CHECK_THROWS_AS((void)load_checkpoint(dir + "/junk.bin"), CheckpointError);
  }
}

TEST_CASE("zero epochs: empty metrics, checkpoint holds the initialization") {
  ExperimentConfig cfg = tiny_config();
  cfg.training.epochs = 0;
  const std::string dir = tmp_dir("sparseopt_run0");
  const TrainResult result = run_experiment(cfg, {dir, false, std::nullopt});
  CHECK(result.metrics.empty());
  CHECK(result.epochs_completed == 0);

  // the checkpoint params equal a fresh masked initialization
  RngStream root(cfg.training.seed);
  RngStream init_rng = root.substream(stream_key::kParamInit);
  LoadedData data = load_data(cfg);
  ParamSet fresh = init_params(data.spec, init_rng);
  RngStream mask_rng = root.substream(stream_key::kMask);
  const Mask mask = init_mask(fresh, cfg.sparsity.schedule(), mask_rng);
  fresh = apply_mask(fresh, mask);
  const Checkpoint ck = load_checkpoint(dir + "/checkpoint.bin");
  CHECK(ps_equal(ck.get_param_set("params"), fresh));
}

TEST_CASE("same config and seed give byte-identical outputs") {
  const ExperimentConfig cfg = tiny_config();
  const std::string d1 = tmp_dir("sparseopt_det1");
  const std::string d2 = tmp_dir("sparseopt_det2");
  (void)run_experiment(cfg, {d1, false, std::nullopt});
  (void)run_experiment(cfg, {d2, false, std::nullopt});
  CHECK(slurp(d1 + "/metrics.csv") == slurp(d2 + "/metrics.csv"));
  CHECK(slurp(d1 + "/checkpoint.bin") == slurp(d2 + "/checkpoint.bin"));
}

TEST_CASE("agent with the weight pinned to zero walks the sgd trajectory") {
  ExperimentConfig sgd = tiny_config();
  ExperimentConfig agent = tiny_config();
  agent.optimizer.kind = OptimizerKind::Agent;
  agent.optimizer.fixed_c = 0.0;
  const TrainResult a = run_experiment(sgd);
  const TrainResult b = run_experiment(agent);
  CHECK(trajectories_equal(a.metrics, b.metrics));
  CHECK(ps_equal(a.params, b.params));
}

TEST_CASE("agent with unit weight walks the svrg trajectory") {
  ExperimentConfig svrg = tiny_config();
  svrg.optimizer.kind = OptimizerKind::Svrg;
  ExperimentConfig agent = tiny_config();
  agent.optimizer.kind = OptimizerKind::Agent;
  agent.optimizer.fixed_c = 1.0;
  agent.optimizer.gamma = 1.0;
  const TrainResult a = run_experiment(svrg);
  const TrainResult b = run_experiment(agent);
  CHECK(trajectories_equal(a.metrics, b.metrics));
  CHECK(ps_equal(a.params, b.params));
}

TEST_CASE("interrupt and resume reproduces the uninterrupted run") {
  ExperimentConfig cfg = tiny_config();
  cfg.training.epochs = 6;
  cfg.optimizer.kind = OptimizerKind::Agent;

  const std::string full_dir = tmp_dir("sparseopt_full");
  const std::string part_dir = tmp_dir("sparseopt_part");
  (void)run_experiment(cfg, {full_dir, false, std::nullopt});

  RunOptions first;
  first.out_dir = part_dir;
  first.stop_after = 3;
  (void)run_experiment(cfg, first);
  RunOptions second;
  second.out_dir = part_dir;
  second.resume = true;
  (void)run_experiment(cfg, second);

  CHECK(slurp(full_dir + "/metrics.csv") == slurp(part_dir + "/metrics.csv"));
  CHECK(slurp(full_dir + "/checkpoint.bin") == slurp(part_dir + "/checkpoint.bin"));
}

TEST_CASE("resume refuses a different config") {
  ExperimentConfig cfg = tiny_config();
  const std::string dir = tmp_dir("sparseopt_resume_conflict");
  RunOptions opts;
  opts.out_dir = dir;
  opts.stop_after = 1;
  (void)run_experiment(cfg, opts);
  cfg.optimizer.lr = 0.05;
  RunOptions again;
  again.out_dir = dir;
  again.resume = true;
  CHECK_THROWS_AS((void)run_experiment(cfg, again), ConfigError);
}

TEST_CASE("divergence aborts with a fault record") {
  ExperimentConfig cfg = tiny_config();
  cfg.optimizer.lr = 1e300;  // parameter products overflow within a few steps
  cfg.training.epochs = 5;
  const TrainResult result = run_experiment(cfg);
  REQUIRE(result.fault.has_value());
  CHECK((result.fault->reason == "non-finite loss" ||
         result.fault->reason == "non-finite gradient"));
  CHECK(result.metrics.size() < 5);
}

TEST_CASE("compare: self comparison has zero deltas, mismatches refused") {
  ExperimentConfig cfg = tiny_config();
  const std::string d1 = tmp_dir("sparseopt_cmp1");
  (void)run_experiment(cfg, {d1, false, std::nullopt});

  const CompareResult self = compare_runs({d1, d1});
  // every delta column in the budget csv is exactly 0
  std::stringstream ss(self.budgets_csv);
  std::string line;
  std::getline(ss, line);  // header
  while (std::getline(ss, line)) {
    const auto last_comma = line.rfind(',');
    CHECK(std::stod(line.substr(last_comma + 1)) == 0.0);
  }

  ExperimentConfig other = tiny_config();
  other.dataset.dim = 7;  // different dataset -> different fingerprint
  const std::string d2 = tmp_dir("sparseopt_cmp2");
  (void)run_experiment(other, {d2, false, std::nullopt});
  CHECK_THROWS_AS((void)compare_runs({d1, d2}), ConfigError);
}

TEST_CASE("one run strictly dominating gives one-signed deltas") {
  ExperimentConfig good = tiny_config();
  good.training.epochs = 4;
  ExperimentConfig bad = good;
  bad.optimizer.lr = 1e-6;  // barely moves, stays near chance

  const std::string dg = tmp_dir("sparseopt_dom_good");
  const std::string db = tmp_dir("sparseopt_dom_bad");
  (void)run_experiment(good, {dg, false, std::nullopt});
  (void)run_experiment(bad, {db, false, std::nullopt});

  const CompareResult cmp = compare_runs({db, dg});
  std::stringstream ss(cmp.budgets_csv);
  std::string line;
  std::getline(ss, line);
  bool seen = false;
  while (std::getline(ss, line)) {
    const auto last_comma = line.rfind(',');
    const double delta = std::stod(line.substr(last_comma + 1));
    CHECK(delta >= 0.0);
    seen = true;
  }
  CHECK(seen);
}

TEST_CASE("config rejects negative counts") {
  json j = tiny_config().to_json();
  j["training"]["epochs"] = -3;
  CHECK_THROWS_WITH_AS((void)ExperimentConfig::from_json(j),
                       doctest::Contains("training.epochs"), ConfigError);
  json j2 = tiny_config().to_json();
  j2["training"]["lr_breakpoints"] = {-1};
  j2["training"]["lr_factors"] = {0.1};
  CHECK_THROWS_AS((void)ExperimentConfig::from_json(j2), ConfigError);
}

TEST_CASE("compare reports epochs to threshold") {
  ExperimentConfig cfg = tiny_config();
  cfg.training.epochs = 5;
  const std::string dir = tmp_dir("sparseopt_thresh");
  const TrainResult r = run_experiment(cfg, {dir, false, std::nullopt});

  // oracle: first epoch (1-based) whose clean accuracy reaches 0.5
  long expected = -1;
  for (const auto& m : r.metrics)
    if (m.clean_test_acc >= 0.5) {
      expected = static_cast<long>(m.epoch) + 1;
      break;
    }

  const CompareResult cmp = compare_runs({dir}, {0.5});
  std::stringstream ss(cmp.thresholds_csv);
  std::string header, row;
  std::getline(ss, header);
  std::getline(ss, row);
  const auto comma = row.find(',');
  const std::string cell = row.substr(comma + 1);
  if (expected < 0)
    CHECK(cell.empty());
  else
    CHECK(std::stol(cell) == expected);
}

TEST_CASE("restore_model rebuilds the model from a checkpoint") {
  ExperimentConfig cfg = tiny_config();
  const std::string dir = tmp_dir("sparseopt_restore");
  const TrainResult result = run_experiment(cfg, {dir, false, std::nullopt});
  const RestoredModel rm = restore_model(load_checkpoint(dir + "/checkpoint.bin"));
  CHECK(rm.spec.input_dim() == 6);
  CHECK(rm.spec.classes() == 3);
  CHECK(ps_equal(rm.params, result.params));
  CHECK(ps_equal(rm.mask.tensors, result.mask.tensors));
  CHECK(rm.config.content_hash() == cfg.content_hash());
}
