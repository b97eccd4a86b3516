#include "sparseopt/train.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>

#include "json.hpp"
#include "sparseopt/adversarial.hpp"
#include "sparseopt/diagnostics.hpp"

namespace sparseopt {

using nlohmann::json;

LoadedData load_data(const ExperimentConfig& config) {
  LoadedData d;
  if (config.dataset.kind == DatasetKind::Blobs) {
    const auto& b = config.dataset;
    BlobsSplit split =
        make_blobs(b.classes, b.dim, b.train_per_class, b.test_per_class, b.separation,
                   RngStream(config.training.seed).substream(stream_key::kData));
    d.train = std::move(split.train);
    d.test = std::move(split.test);
  } else {
    d.train = load_csv(config.dataset.path, config.dataset.csv_classes);
    d.test = config.dataset.test_path.empty()
                 ? d.train
                 : load_csv(config.dataset.test_path, d.train.classes);
  }
  d.spec = ModelSpec::mlp(d.train.dim(), config.model.hidden, d.train.classes);
  return d;
}

namespace {

// Everything the current batch's objective needs: for AT the batch already
// carries the perturbed inputs; TRADES keeps the clean batch plus the
// frozen adversarial inputs. Evaluating at different parameters therefore
// pairs the exact same examples and perturbations.
struct StepContext {
  Batch batch;
  Tensor x_adv;  // trades only
  bool trades = false;
  double trades_beta = 0.0;
};

StepContext make_step_context(const ExperimentConfig& config, const ModelSpec& spec,
                              const ParamSet& params, const Mask& mask, Batch batch,
                              RngStream& attack_rng) {
  StepContext ctx;
  switch (config.objective.kind) {
    case ObjectiveKind::Standard:
      ctx.batch = std::move(batch);
      break;
    case ObjectiveKind::At: {
      Tensor adv = pgd_attack(spec, params, mask, batch, config.objective.attack,
                              attack_rng);
      ctx.batch = std::move(batch);
      ctx.batch.inputs = std::move(adv);
      break;
    }
    case ObjectiveKind::Trades:
      ctx.x_adv = trades_attack(spec, params, mask, batch, config.objective.attack,
                                attack_rng);
      ctx.batch = std::move(batch);
      ctx.trades = true;
      ctx.trades_beta = config.objective.trades_beta;
      break;
  }
  return ctx;
}

LossGrad objective_eval(const ModelSpec& spec, const StepContext& ctx,
                        const ParamSet& at_params) {
  if (ctx.trades)
    return trades_objective(spec, at_params, ctx.batch, ctx.x_adv, ctx.trades_beta);
  return loss_and_grad(spec, at_params, ctx.batch);
}

struct OptimizerEngine {
  explicit OptimizerEngine(const OptimizerConfig& cfg) : cfg(cfg) {
    sgd_opts = {cfg.momentum, cfg.weight_decay};
    adam_opts = {cfg.adam_beta1, cfg.adam_beta2, cfg.adam_epsilon, cfg.weight_decay};
    mvr_opts = {cfg.mvr_mixing};
    agent_opts = {cfg.gamma, cfg.alpha, cfg.fixed_c};
  }

  OptimizerConfig cfg;
  SgdMomentumOptions sgd_opts;
  SgdMomentumState sgd_state;
  AdamOptions adam_opts;
  AdamState adam_state;
  MvrOptions mvr_opts;
  MvrState mvr_state;
  AgentOptions agent_opts;
  AgentState agent_state;
  SvrgState svrg_state;

  ParamSet estimator(const ModelSpec& spec, const StepContext& ctx,
                     const ParamSet& params, ParamSet g_at_params) {
    const auto grad_at = [&](const ParamSet& p) {
      return objective_eval(spec, ctx, p).grad;
    };
    switch (cfg.kind) {
      case OptimizerKind::Sgd:
      case OptimizerKind::Adam:
        return g_at_params;
      case OptimizerKind::Svrg:
        return vr_combine(g_at_params, grad_at(svrg_state.anchor),
                          svrg_state.anchor_full_grad, 1.0);
      case OptimizerKind::Agent: {
        const double w = agent_opts.gamma * agent_state.effective_c(agent_opts);
        if (w == 0.0) return g_at_params;
        return vr_combine(g_at_params, grad_at(agent_state.anchor),
                          agent_state.anchor_full_grad, w);
      }
      case OptimizerKind::Mvr:
        return mvr_combine(mvr_state, mvr_opts, params, std::move(g_at_params), grad_at);
      case OptimizerKind::AgentMvr: {
        const double w = agent_opts.gamma * agent_state.effective_c(agent_opts);
        ParamSet fresh =
            w == 0.0 ? std::move(g_at_params)
                     : vr_combine(g_at_params, grad_at(agent_state.anchor),
                                  agent_state.anchor_full_grad, w);
        return mvr_combine(mvr_state, mvr_opts, params, std::move(fresh), grad_at);
      }
    }
    return g_at_params;
  }

  void step(ParamSet& params, const Mask& mask, const ParamSet& g, double lr) {
    switch (cfg.kind) {
      case OptimizerKind::Sgd:
      case OptimizerKind::Svrg:
      case OptimizerKind::Agent:
        sgd_momentum_step(params, sgd_state, sgd_opts, mask, g, lr);
        break;
      case OptimizerKind::Adam:
        adam_step(params, adam_state, adam_opts, mask, g, lr);
        break;
      case OptimizerKind::Mvr:
      case OptimizerKind::AgentMvr:
        gradient_step(params, mask, g, lr);
        break;
    }
  }
};

Checkpoint build_checkpoint(const ExperimentConfig& config, std::uint64_t next_epoch,
                            const ParamSet& params, const Mask& mask,
                            const OptimizerEngine& eng) {
  Checkpoint ck;
  ck.config_json = config.canonical_dump();
  ck.seed = config.training.seed;
  ck.next_epoch = next_epoch;
  ck.put_param_set("params", params);
  ck.put_param_set("mask", mask.tensors);

  if (eng.sgd_state.velocity.count() > 0)
    ck.put_param_set("opt.velocity", eng.sgd_state.velocity);
  if (eng.adam_state.m.count() > 0) {
    ck.put_param_set("opt.adam_m", eng.adam_state.m);
    ck.put_param_set("opt.adam_v", eng.adam_state.v);
    ck.put_counter("opt.adam_steps", eng.adam_state.steps);
  }
  if (eng.mvr_state.has_prev) {
    ck.put_param_set("opt.mvr_d", eng.mvr_state.d);
    ck.put_param_set("opt.mvr_prev", eng.mvr_state.prev_params);
  }
  if (eng.agent_state.has_anchor) {
    ck.put_param_set("opt.anchor", eng.agent_state.anchor);
    ck.put_param_set("opt.anchor_mask", eng.agent_state.anchor_mask.tensors);
    ck.put_param_set("opt.anchor_grad", eng.agent_state.anchor_full_grad);
    ck.put_scalar("opt.c_smoothed", eng.agent_state.c_smoothed);
    ck.put_tensor("opt.probe_losses_anchor",
                  Tensor({eng.agent_state.probe_losses_anchor.size()},
                         eng.agent_state.probe_losses_anchor));
  }
  if (eng.svrg_state.has_anchor) {
    ck.put_param_set("opt.anchor", eng.svrg_state.anchor);
    ck.put_param_set("opt.anchor_mask", eng.svrg_state.anchor_mask.tensors);
    ck.put_param_set("opt.anchor_grad", eng.svrg_state.anchor_full_grad);
  }
  return ck;
}

void restore_engine(OptimizerEngine& eng, const Checkpoint& ck) {
  if (ck.has_param_set("opt.velocity"))
    eng.sgd_state.velocity = ck.get_param_set("opt.velocity");
  if (ck.has_param_set("opt.adam_m")) {
    eng.adam_state.m = ck.get_param_set("opt.adam_m");
    eng.adam_state.v = ck.get_param_set("opt.adam_v");
    eng.adam_state.steps = ck.get_counter("opt.adam_steps");
  }
  if (ck.has_param_set("opt.mvr_prev")) {
    eng.mvr_state.d = ck.get_param_set("opt.mvr_d");
    eng.mvr_state.prev_params = ck.get_param_set("opt.mvr_prev");
    eng.mvr_state.has_prev = true;
  }
  if (ck.has_param_set("opt.anchor")) {
    if (eng.cfg.is_agent()) {
      eng.agent_state.anchor = ck.get_param_set("opt.anchor");
      eng.agent_state.anchor_mask.tensors = ck.get_param_set("opt.anchor_mask");
      eng.agent_state.anchor_full_grad = ck.get_param_set("opt.anchor_grad");
      eng.agent_state.c_smoothed = ck.get_scalar("opt.c_smoothed");
      eng.agent_state.probe_losses_anchor = ck.get_tensor("opt.probe_losses_anchor").vec();
      eng.agent_state.has_anchor = true;
    } else {
      eng.svrg_state.anchor = ck.get_param_set("opt.anchor");
      eng.svrg_state.anchor_mask.tensors = ck.get_param_set("opt.anchor_mask");
      eng.svrg_state.anchor_full_grad = ck.get_param_set("opt.anchor_grad");
      eng.svrg_state.has_anchor = true;
    }
  }
}

void write_summary(const std::string& path, const ExperimentConfig& config,
                   const TrainResult& result, double total_wall_seconds) {
  json j;
  j["code_version"] = kCodeVersion;
  j["code_hash"] = fnv1a_hex(kCodeVersion);
  j["config_hash"] = config.content_hash();
  j["dataset_model_fingerprint"] = config.dataset_model_fingerprint();
  j["optimizer"] = optimizer_kind_name(config.optimizer.kind);
  j["epochs_completed"] = result.epochs_completed;
  j["final_sparsity"] = result.mask.weight_sparsity();
  j["total_wall_seconds"] = total_wall_seconds;
  if (result.metrics.empty()) {
    j["final"] = nullptr;
  } else {
    const auto& last = result.metrics.back();
    json f = {{"train_loss", last.train_loss}, {"clean_test_acc", last.clean_test_acc}};
    f["robust_test_acc"] =
        last.robust_test_acc ? json(*last.robust_test_acc) : json(nullptr);
    j["final"] = f;
  }
  j["fault"] = result.fault ? json{{"epoch", result.fault->epoch},
                                   {"iteration", result.fault->iteration},
                                   {"reason", result.fault->reason}}
                            : json(nullptr);
  std::ofstream out(path, std::ios::trunc);
  out << j.dump(2) << '\n';
}

Dataset subsample_dataset(const Dataset& data, const std::vector<std::size_t>& ids) {
  Dataset out;
  out.classes = data.classes;
  const Batch b = take_batch(data, ids);
  out.inputs = b.inputs;
  out.labels = b.labels;
  return out;
}

}  // namespace

RestoredModel restore_model(const Checkpoint& ck) {
  RestoredModel r;
  r.config = ExperimentConfig::from_json(json::parse(ck.config_json));
  r.params = ck.get_param_set("params");
  r.mask.tensors = ck.get_param_set("mask");
  const std::size_t input_dim = r.params.at("layer0.weight").shape()[0];
  const std::size_t classes =
      r.params
          .at("layer" + std::to_string(r.config.model.hidden.size()) + ".weight")
          .shape()[1];
  r.spec = ModelSpec::mlp(input_dim, r.config.model.hidden, classes);
  return r;
}

TrainResult run_experiment(const ExperimentConfig& config, const RunOptions& opts) {
  namespace fs = std::filesystem;
  const bool persist = !opts.out_dir.empty();
  if (opts.resume && !persist)
    throw ConfigError("run: resume requires an output directory");
  if (persist) fs::create_directories(opts.out_dir);
  const std::string ck_path = persist ? opts.out_dir + "/checkpoint.bin" : "";
  const std::string metrics_path = persist ? opts.out_dir + "/metrics.csv" : "";
  const std::string timing_path = persist ? opts.out_dir + "/timing.csv" : "";

  LoadedData data = load_data(config);
  const ModelSpec& spec = data.spec;
  const std::size_t n_train = data.train.size();
  const std::size_t batch_size = std::min(config.training.batch_size, n_train);
  RngStream root(config.training.seed);

  OptimizerEngine eng(config.optimizer);
  TrainResult result;
  result.spec = spec;
  std::size_t epoch_start = 0;

  if (opts.resume) {
    Checkpoint ck = load_checkpoint(ck_path);
    const auto resumed = ExperimentConfig::from_json(json::parse(ck.config_json));
    if (resumed.content_hash() != config.content_hash())
      throw ConfigError("run: checkpoint config does not match the given config");
    result.params = ck.get_param_set("params");
    result.mask.tensors = ck.get_param_set("mask");
    restore_engine(eng, ck);
    epoch_start = ck.next_epoch;
    if (fs::exists(metrics_path)) {
      std::map<std::size_t, double> wall;
      if (fs::exists(timing_path)) {
        std::ifstream tin(timing_path);
        std::string line;
        std::getline(tin, line);  // header
        while (std::getline(tin, line)) {
          const auto comma = line.find(',');
          if (comma == std::string::npos) continue;
          wall[std::stoul(line.substr(0, comma))] = std::stod(line.substr(comma + 1));
        }
      }
      for (auto& row : read_metrics_csv(metrics_path)) {
        if (row.epoch >= epoch_start) break;
        if (auto it = wall.find(row.epoch); it != wall.end())
          row.wall_seconds = it->second;
        result.metrics.push_back(std::move(row));
      }
    }
  } else {
    RngStream init_rng = root.substream(stream_key::kParamInit);
    result.params = init_params(spec, init_rng);
    RngStream mask_rng = root.substream(stream_key::kMask);
    result.mask = init_mask(result.params, config.sparsity.schedule(), mask_rng);
    result.params = apply_mask(result.params, result.mask);
  }

  // Fixed loss-probe subset, reused for the whole run so consecutive
  // anchors are comparable.
  Batch probe;
  if (config.optimizer.is_agent()) {
    RngStream probe_rng = root.substream(stream_key::kProbe);
    const std::size_t k = std::min<std::size_t>(config.optimizer.probe_size, n_train);
    probe = take_batch(data.train, probe_rng.sample_without_replacement(n_train, k));
  }

  // Snapshot gradients run over the full training set unless a fixed
  // subsample was configured.
  Dataset snap_storage;
  const Dataset* snap_data = &data.train;
  if (config.optimizer.needs_snapshot() && config.optimizer.snapshot_subsample > 0 &&
      config.optimizer.snapshot_subsample < n_train) {
    RngStream sub_rng = root.substream(stream_key::kSnapshotSubsample);
    snap_storage = subsample_dataset(
        data.train,
        sub_rng.sample_without_replacement(n_train, config.optimizer.snapshot_subsample));
    snap_data = &snap_storage;
  }

  const std::size_t epoch_end =
      opts.stop_after ? std::min(*opts.stop_after, config.training.epochs)
                      : config.training.epochs;

  double total_wall = 0.0;
  for (const auto& row : result.metrics) total_wall += row.wall_seconds;

  for (std::size_t epoch = epoch_start; epoch < epoch_end; ++epoch) {
    const auto t_start = std::chrono::steady_clock::now();
    const double lr = config.lr_at(epoch);

    // prune/grow update, strictly before the snapshot
    if (config.sparsity.sparsity > 0.0 && config.sparsity.update_interval > 0 &&
        epoch > 0 && epoch % config.sparsity.update_interval == 0) {
      const double p =
          drop_fraction_at(config.sparsity.schedule(), epoch, config.training.epochs);
      if (p > 0.0 && p < 1.0) {
        RngStream mask_rng = root.substream(stream_key::kMask).substream(epoch);
        if (config.sparsity.rule == MaskRule::Set) {
          result.mask = set_update(result.params, result.mask, p, mask_rng);
        } else {
          const ParamSet dense = full_gradient(spec, result.params, data.train);
          result.mask = rigl_update(result.params, result.mask, dense, p, mask_rng);
        }
        result.params = apply_mask(result.params, result.mask);
      }
    }

    // correlation trace against the outgoing anchor
    std::optional<double> anchor_corr;
    if (config.optimizer.is_agent() && config.optimizer.trace_c &&
        eng.agent_state.has_anchor) {
      try {
        const ParamSet g_cur = loss_and_grad(spec, result.params, probe).grad;
        const ParamSet g_anchor = loss_and_grad(spec, eng.agent_state.anchor, probe).grad;
        anchor_corr = pearson_correlation(active_coordinates(g_cur, result.mask),
                                          active_coordinates(g_anchor, result.mask));
      } catch (const UndefinedCorrelationError&) {
      }
    }

    if (config.optimizer.kind == OptimizerKind::Svrg) {
      svrg_snapshot(eng.svrg_state, spec, result.params, result.mask, *snap_data);
    } else if (config.optimizer.is_agent()) {
      agent_snapshot(eng.agent_state, eng.agent_opts, spec, result.params, result.mask,
                     *snap_data, probe, epoch);
      eng.agent_state.epoch_length = (n_train + batch_size - 1) / batch_size;
    }

    RngStream batch_rng = root.substream(stream_key::kBatch).substream(epoch);
    const std::vector<std::size_t> perm = batch_rng.permutation(n_train);

    double loss_sum = 0.0, gnorm_sum = 0.0;
    std::size_t steps = 0;
    for (std::size_t start = 0, it = 0; start < n_train; start += batch_size, ++it) {
      const std::size_t end = std::min(start + batch_size, n_train);
      const std::vector<std::size_t> ids(perm.begin() + start, perm.begin() + end);
      RngStream attack_rng =
          root.substream(stream_key::kAttack).substream(epoch).substream(it);
      const StepContext ctx = make_step_context(config, spec, result.params, result.mask,
                                                take_batch(data.train, ids), attack_rng);
      LossGrad lg = objective_eval(spec, ctx, result.params);
      if (!std::isfinite(lg.loss)) {
        result.fault = FaultRecord{epoch, it, "non-finite loss"};
        break;
      }
      ParamSet g = eng.estimator(spec, ctx, result.params, std::move(lg.grad));
      try {
        eng.step(result.params, result.mask, g, lr);
      } catch (const NonFiniteError&) {
        result.fault = FaultRecord{epoch, it, "non-finite gradient"};
        break;
      }
      loss_sum += lg.loss;
      gnorm_sum += ps_l2_norm(g);
      ++steps;
    }
    if (result.fault) break;

    MetricsRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(steps);
    rec.clean_test_acc = accuracy(spec, result.params, data.test);
    if (config.objective.kind != ObjectiveKind::Standard)
      rec.robust_test_acc = robust_accuracy(
          spec, result.params, result.mask, data.test, config.training.eval_attack,
          root.substream(stream_key::kEvalAttack).substream(epoch));
    if (config.optimizer.is_agent()) {
      rec.c_hat = eng.agent_state.last_c_hat;
      rec.c_smoothed = eng.agent_state.c_smoothed;
      rec.anchor_corr = anchor_corr;
    }
    rec.mean_grad_norm = gnorm_sum / static_cast<double>(steps);
    rec.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    total_wall += rec.wall_seconds;
    result.metrics.push_back(rec);
    result.epochs_completed = epoch + 1;

    if (persist) {
      write_metrics_csv(metrics_path, result.metrics);
      write_timing_csv(timing_path, result.metrics);
      const std::size_t done = epoch + 1;
      if (config.training.checkpoint_every > 0 &&
          done % config.training.checkpoint_every == 0)
        save_checkpoint(ck_path,
                        build_checkpoint(config, done, result.params, result.mask, eng));
    }
  }

  if (result.epochs_completed == 0) result.epochs_completed = epoch_start;
  if (persist) {
    write_metrics_csv(metrics_path, result.metrics);
    write_timing_csv(timing_path, result.metrics);
    save_checkpoint(ck_path, build_checkpoint(config, result.epochs_completed,
                                              result.params, result.mask, eng));
    write_summary(opts.out_dir + "/summary.json", config, result, total_wall);
  }
  return result;
}

}  // namespace sparseopt
