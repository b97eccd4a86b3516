#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "sparseopt/adversarial.hpp"
#include "sparseopt/sparsity.hpp"

namespace sparseopt {

inline constexpr const char* kCodeVersion = "sparseopt 0.1.0";

enum class DatasetKind { Blobs, Csv };

struct DatasetConfig {
  DatasetKind kind = DatasetKind::Blobs;
  // blobs
  std::size_t classes = 4;
  std::size_t dim = 16;
  std::size_t train_per_class = 128;
  std::size_t test_per_class = 64;
  double separation = 2.0;
  // csv
  std::string path;
  std::string test_path;  // empty: evaluate on the training split
  std::size_t csv_classes = 0;  // 0 = infer from labels
};

struct ModelConfig {
  std::vector<std::size_t> hidden = {64, 32};
};

enum class OptimizerKind { Sgd, Svrg, Agent, Adam, Mvr, AgentMvr };

std::string optimizer_kind_name(OptimizerKind kind);

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::Sgd;
  double lr = 0.1;
  double momentum = 0.9;
  double weight_decay = 0.0;
  double gamma = 0.1;
  double alpha = 0.5;
  std::optional<double> fixed_c;  // freeze the adaptive weight (ablation)
  double mvr_mixing = 0.1;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
  std::size_t probe_size = 256;         // loss-probe subset for the weight estimate
  std::size_t snapshot_subsample = 0;   // 0 = full dataset at every snapshot
  bool trace_c = true;                  // emit the anchor-correlation trace

  bool needs_snapshot() const {
    return kind == OptimizerKind::Svrg || kind == OptimizerKind::Agent ||
           kind == OptimizerKind::AgentMvr;
  }
  bool is_agent() const {
    return kind == OptimizerKind::Agent || kind == OptimizerKind::AgentMvr;
  }
};

struct SparsityConfig {
  double sparsity = 0.0;
  MaskDistribution distribution = MaskDistribution::Uniform;
  MaskRule rule = MaskRule::Set;
  std::size_t update_interval = 1;  // epochs; 0 disables prune/grow updates
  double drop_fraction = 0.3;
  DropDecay decay = DropDecay::Cosine;

  SparsitySchedule schedule() const {
    return {sparsity, distribution, rule, update_interval, drop_fraction, decay};
  }
};

enum class ObjectiveKind { Standard, At, Trades };

struct ObjectiveConfig {
  ObjectiveKind kind = ObjectiveKind::Standard;
  double trades_beta = 6.0;
  AttackConfig attack;  // training-time attack
};

struct TrainingConfig {
  std::size_t epochs = 60;
  std::size_t batch_size = 128;
  std::vector<std::size_t> lr_breakpoints = {50, 100};
  std::vector<double> lr_factors = {0.1, 0.1};
  std::uint64_t seed = 1;
  std::size_t checkpoint_every = 1;  // epochs; 0 = final checkpoint only
  AttackConfig eval_attack{8.0 / 255.0, 2.0 / 255.0, 10, true, 1};
};

struct ExperimentConfig {
  DatasetConfig dataset;
  ModelConfig model;
  OptimizerConfig optimizer;
  SparsityConfig sparsity;
  ObjectiveConfig objective;
  TrainingConfig training;

  /// Strict parse: unknown keys or out-of-range values raise ConfigError
  /// naming the field; nothing is executed on a bad config.
  static ExperimentConfig from_json(const nlohmann::json& j);
  static ExperimentConfig from_file(const std::string& path);
  nlohmann::json to_json() const;
  std::string canonical_dump() const;  // sorted keys, stable formatting

  /// Piecewise-constant schedule, right-continuous: the factor at each
  /// breakpoint applies from that epoch on.
  double lr_at(std::size_t epoch) const;

  std::string content_hash() const;            // over the whole config
  std::string dataset_model_fingerprint() const;  // dataset+model sections only
};

std::string fnv1a_hex(const std::string& bytes);

}  // namespace sparseopt
