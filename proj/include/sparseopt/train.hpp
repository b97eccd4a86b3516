#pragma once

#include <optional>
#include <string>
#include <vector>

#include "sparseopt/checkpoint.hpp"
#include "sparseopt/config.hpp"
#include "sparseopt/metrics.hpp"
#include "sparseopt/model.hpp"
#include "sparseopt/optim.hpp"

namespace sparseopt {

struct FaultRecord {
  std::size_t epoch = 0;
  std::size_t iteration = 0;
  std::string reason;
};

struct TrainResult {
  ModelSpec spec;
  ParamSet params;
  Mask mask;
  std::vector<MetricsRecord> metrics;
  std::optional<FaultRecord> fault;
  std::size_t epochs_completed = 0;
};

struct RunOptions {
  std::string out_dir;  // empty: in-memory run, nothing written
  bool resume = false;
  /// Stop after this many epochs have completed in total (for resume
  /// testing); the run can be continued later with resume=true.
  std::optional<std::size_t> stop_after;
};

struct LoadedData {
  Dataset train;
  Dataset test;
  ModelSpec spec;
};

LoadedData load_data(const ExperimentConfig& config);

/// Epoch loop: [prune/grow update if due] -> [snapshot for the
/// variance-reduced optimizers] -> minibatch steps -> evaluation. Fully
/// deterministic for a fixed config+seed. A non-finite loss or gradient
/// aborts the run with a fault record instead of throwing.
TrainResult run_experiment(const ExperimentConfig& config, const RunOptions& opts = {});

/// Rebuild model/params/mask from a checkpoint written by run_experiment.
struct RestoredModel {
  ExperimentConfig config;
  ModelSpec spec;
  ParamSet params;
  Mask mask;
};
RestoredModel restore_model(const Checkpoint& ck);

}  // namespace sparseopt
