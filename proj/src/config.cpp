#include "sparseopt/config.hpp"

#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <set>
#include <type_traits>

#include "sparseopt/errors.hpp"

namespace sparseopt {

using nlohmann::json;

std::string optimizer_kind_name(OptimizerKind kind) {
  switch (kind) {
    case OptimizerKind::Sgd: return "sgd";
    case OptimizerKind::Svrg: return "svrg";
    case OptimizerKind::Agent: return "agent";
    case OptimizerKind::Adam: return "adam";
    case OptimizerKind::Mvr: return "mvr";
    case OptimizerKind::AgentMvr: return "agent+mvr";
  }
  return "?";
}

namespace {

void check_keys(const json& obj, const std::string& section,
                const std::set<std::string>& allowed) {
  if (!obj.is_object()) throw ConfigError("config: " + section + " must be an object");
  for (auto it = obj.begin(); it != obj.end(); ++it)
    if (!allowed.count(it.key()))
      throw ConfigError("config: unknown key " + section + "." + it.key());
}

template <typename T>
T get_field(const json& obj, const std::string& section, const char* key, T fallback) {
  if (!obj.contains(key)) return fallback;
  const json& v = obj.at(key);
  if constexpr (std::is_unsigned_v<T>) {
    // nlohmann silently wraps negative integers into unsigned targets
    if (v.is_number_integer() && v.get<long long>() < 0)
      throw ConfigError("config: " + section + "." + std::string(key) +
                        " must not be negative");
  }
  if constexpr (std::is_same_v<T, std::vector<std::size_t>>) {
    if (v.is_array())
      for (const auto& e : v)
        if (e.is_number_integer() && e.get<long long>() < 0)
          throw ConfigError("config: " + section + "." + std::string(key) +
                            " entries must not be negative");
  }
  try {
    return v.get<T>();
  } catch (const json::exception&) {
    throw ConfigError("config: bad value for " + section + "." + std::string(key));
  }
}

void require(bool ok, const std::string& field, const std::string& what) {
  if (!ok) throw ConfigError("config: " + field + " " + what);
}

AttackConfig parse_attack(const json& obj, const std::string& section,
                          const AttackConfig& defaults) {
  check_keys(obj, section,
             {"epsilon", "step_size", "iterations", "random_start", "restarts"});
  AttackConfig cfg = defaults;
  cfg.epsilon = get_field(obj, section, "epsilon", cfg.epsilon);
  cfg.step_size = get_field(obj, section, "step_size", cfg.step_size);
  cfg.iterations = get_field(obj, section, "iterations", cfg.iterations);
  cfg.random_start = get_field(obj, section, "random_start", cfg.random_start);
  cfg.restarts = get_field(obj, section, "restarts", cfg.restarts);
  try {
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError("config: " + section + ": " + e.what());
  }
  return cfg;
}

json attack_to_json(const AttackConfig& cfg) {
  return {{"epsilon", cfg.epsilon},
          {"step_size", cfg.step_size},
          {"iterations", cfg.iterations},
          {"random_start", cfg.random_start},
          {"restarts", cfg.restarts}};
}

}  // namespace

ExperimentConfig ExperimentConfig::from_json(const json& j) {
  check_keys(j, "<root>",
             {"dataset", "model", "optimizer", "sparsity", "objective", "training"});
  ExperimentConfig cfg;

  if (j.contains("dataset")) {
    const json& d = j.at("dataset");
    check_keys(d, "dataset",
               {"kind", "classes", "dim", "train_per_class", "test_per_class",
                "separation", "path", "test_path"});
    const auto kind = get_field<std::string>(d, "dataset", "kind", "blobs");
    if (kind == "blobs") {
      cfg.dataset.kind = DatasetKind::Blobs;
    } else if (kind == "csv") {
      cfg.dataset.kind = DatasetKind::Csv;
    } else {
      throw ConfigError("config: dataset.kind must be blobs or csv");
    }
    cfg.dataset.classes = get_field(d, "dataset", "classes", cfg.dataset.classes);
    cfg.dataset.dim = get_field(d, "dataset", "dim", cfg.dataset.dim);
    cfg.dataset.train_per_class =
        get_field(d, "dataset", "train_per_class", cfg.dataset.train_per_class);
    cfg.dataset.test_per_class =
        get_field(d, "dataset", "test_per_class", cfg.dataset.test_per_class);
    cfg.dataset.separation = get_field(d, "dataset", "separation", cfg.dataset.separation);
    cfg.dataset.path = get_field<std::string>(d, "dataset", "path", cfg.dataset.path);
    cfg.dataset.test_path =
        get_field<std::string>(d, "dataset", "test_path", cfg.dataset.test_path);
    if (cfg.dataset.kind == DatasetKind::Blobs) {
      require(cfg.dataset.classes >= 2, "dataset.classes", "must be >= 2");
      require(cfg.dataset.dim >= 1, "dataset.dim", "must be >= 1");
      require(cfg.dataset.train_per_class >= 1, "dataset.train_per_class", "must be >= 1");
      require(cfg.dataset.test_per_class >= 1, "dataset.test_per_class", "must be >= 1");
      require(cfg.dataset.separation > 0.0, "dataset.separation", "must be > 0");
    } else {
      require(!cfg.dataset.path.empty(), "dataset.path", "must be set for csv");
      if (d.contains("classes")) cfg.dataset.csv_classes = d.at("classes").get<std::size_t>();
    }
  }

  if (j.contains("model")) {
    const json& m = j.at("model");
    check_keys(m, "model", {"hidden"});
    cfg.model.hidden = get_field(m, "model", "hidden", cfg.model.hidden);
    for (std::size_t h : cfg.model.hidden)
      require(h >= 1, "model.hidden", "entries must be >= 1");
  }

  if (j.contains("optimizer")) {
    const json& o = j.at("optimizer");
    check_keys(o, "optimizer",
               {"kind", "lr", "momentum", "weight_decay", "gamma", "alpha", "fixed_c",
                "mvr_mixing", "adam_beta1", "adam_beta2", "adam_epsilon", "probe_size",
                "snapshot_subsample", "trace_c"});
    const auto kind = get_field<std::string>(o, "optimizer", "kind", "sgd");
    if (kind == "sgd") cfg.optimizer.kind = OptimizerKind::Sgd;
    else if (kind == "svrg") cfg.optimizer.kind = OptimizerKind::Svrg;
    else if (kind == "agent") cfg.optimizer.kind = OptimizerKind::Agent;
    else if (kind == "adam") cfg.optimizer.kind = OptimizerKind::Adam;
    else if (kind == "mvr") cfg.optimizer.kind = OptimizerKind::Mvr;
    else if (kind == "agent+mvr") cfg.optimizer.kind = OptimizerKind::AgentMvr;
    else throw ConfigError("config: optimizer.kind must be one of sgd, svrg, agent, adam, mvr, agent+mvr");

    auto& oc = cfg.optimizer;
    oc.lr = get_field(o, "optimizer", "lr", oc.lr);
    oc.momentum = get_field(o, "optimizer", "momentum", oc.momentum);
    oc.weight_decay = get_field(o, "optimizer", "weight_decay", oc.weight_decay);
    oc.gamma = get_field(o, "optimizer", "gamma", oc.gamma);
    oc.alpha = get_field(o, "optimizer", "alpha", oc.alpha);
    if (o.contains("fixed_c") && !o.at("fixed_c").is_null())
      oc.fixed_c = get_field(o, "optimizer", "fixed_c", 0.0);
    oc.mvr_mixing = get_field(o, "optimizer", "mvr_mixing", oc.mvr_mixing);
    oc.adam_beta1 = get_field(o, "optimizer", "adam_beta1", oc.adam_beta1);
    oc.adam_beta2 = get_field(o, "optimizer", "adam_beta2", oc.adam_beta2);
    oc.adam_epsilon = get_field(o, "optimizer", "adam_epsilon", oc.adam_epsilon);
    oc.probe_size = get_field(o, "optimizer", "probe_size", oc.probe_size);
    oc.snapshot_subsample =
        get_field(o, "optimizer", "snapshot_subsample", oc.snapshot_subsample);
    oc.trace_c = get_field(o, "optimizer", "trace_c", oc.trace_c);

    require(oc.lr > 0.0, "optimizer.lr", "must be > 0");
    require(oc.momentum >= 0.0 && oc.momentum < 1.0, "optimizer.momentum",
            "must be in [0,1)");
    require(oc.weight_decay >= 0.0, "optimizer.weight_decay", "must be >= 0");
    require(oc.gamma > 0.0 && oc.gamma <= 1.0, "optimizer.gamma", "must be in (0,1]");
    require(oc.alpha > 0.0 && oc.alpha <= 1.0, "optimizer.alpha", "must be in (0,1]");
    if (oc.fixed_c)
      require(*oc.fixed_c >= 0.0 && *oc.fixed_c <= 1.0, "optimizer.fixed_c",
              "must be in [0,1]");
    require(oc.mvr_mixing > 0.0 && oc.mvr_mixing <= 1.0, "optimizer.mvr_mixing",
            "must be in (0,1]");
    require(oc.adam_beta1 >= 0.0 && oc.adam_beta1 < 1.0, "optimizer.adam_beta1",
            "must be in [0,1)");
    require(oc.adam_beta2 >= 0.0 && oc.adam_beta2 < 1.0, "optimizer.adam_beta2",
            "must be in [0,1)");
    require(oc.adam_epsilon > 0.0, "optimizer.adam_epsilon", "must be > 0");
    require(oc.probe_size >= 2, "optimizer.probe_size", "must be >= 2");
  }

  if (j.contains("sparsity")) {
    const json& s = j.at("sparsity");
    check_keys(s, "sparsity",
               {"sparsity", "distribution", "rule", "update_interval", "drop_fraction",
                "decay"});
    auto& sc = cfg.sparsity;
    sc.sparsity = get_field(s, "sparsity", "sparsity", sc.sparsity);
    const auto dist = get_field<std::string>(s, "sparsity", "distribution", "uniform");
    if (dist == "uniform") sc.distribution = MaskDistribution::Uniform;
    else if (dist == "erk") sc.distribution = MaskDistribution::Erk;
    else throw ConfigError("config: sparsity.distribution must be uniform or erk");
    const auto rule = get_field<std::string>(s, "sparsity", "rule", "set");
    if (rule == "set") sc.rule = MaskRule::Set;
    else if (rule == "rigl") sc.rule = MaskRule::Rigl;
    else throw ConfigError("config: sparsity.rule must be set or rigl");
    sc.update_interval = get_field(s, "sparsity", "update_interval", sc.update_interval);
    sc.drop_fraction = get_field(s, "sparsity", "drop_fraction", sc.drop_fraction);
    const auto decay = get_field<std::string>(s, "sparsity", "decay", "cosine");
    if (decay == "constant") sc.decay = DropDecay::Constant;
    else if (decay == "cosine") sc.decay = DropDecay::Cosine;
    else throw ConfigError("config: sparsity.decay must be constant or cosine");

    require(sc.sparsity >= 0.0 && sc.sparsity < 1.0, "sparsity.sparsity",
            "must be in [0,1)");
    require(sc.drop_fraction > 0.0 && sc.drop_fraction < 1.0, "sparsity.drop_fraction",
            "must be in (0,1)");
  }

  if (j.contains("objective")) {
    const json& ob = j.at("objective");
    check_keys(ob, "objective", {"kind", "trades_beta", "attack"});
    const auto kind = get_field<std::string>(ob, "objective", "kind", "standard");
    if (kind == "standard") cfg.objective.kind = ObjectiveKind::Standard;
    else if (kind == "at") cfg.objective.kind = ObjectiveKind::At;
    else if (kind == "trades") cfg.objective.kind = ObjectiveKind::Trades;
    else throw ConfigError("config: objective.kind must be standard, at, or trades");
    cfg.objective.trades_beta =
        get_field(ob, "objective", "trades_beta", cfg.objective.trades_beta);
    require(cfg.objective.trades_beta >= 0.0, "objective.trades_beta", "must be >= 0");
    if (ob.contains("attack"))
      cfg.objective.attack =
          parse_attack(ob.at("attack"), "objective.attack", cfg.objective.attack);
  }

  if (j.contains("training")) {
    const json& t = j.at("training");
    check_keys(t, "training",
               {"epochs", "batch_size", "lr_breakpoints", "lr_factors", "seed",
                "checkpoint_every", "eval_attack"});
    auto& tc = cfg.training;
    tc.epochs = get_field(t, "training", "epochs", tc.epochs);
    tc.batch_size = get_field(t, "training", "batch_size", tc.batch_size);
    tc.lr_breakpoints = get_field(t, "training", "lr_breakpoints", tc.lr_breakpoints);
    tc.lr_factors = get_field(t, "training", "lr_factors", tc.lr_factors);
    tc.seed = get_field(t, "training", "seed", tc.seed);
    tc.checkpoint_every = get_field(t, "training", "checkpoint_every", tc.checkpoint_every);
    if (t.contains("eval_attack"))
      tc.eval_attack = parse_attack(t.at("eval_attack"), "training.eval_attack",
                                    tc.eval_attack);

    require(tc.batch_size >= 1, "training.batch_size", "must be >= 1");
    require(tc.lr_breakpoints.size() == tc.lr_factors.size(), "training.lr_factors",
            "must match lr_breakpoints length");
    for (std::size_t i = 1; i < tc.lr_breakpoints.size(); ++i)
      require(tc.lr_breakpoints[i] > tc.lr_breakpoints[i - 1],
              "training.lr_breakpoints", "must be strictly increasing");
    for (double f : tc.lr_factors)
      require(f > 0.0, "training.lr_factors", "entries must be > 0");
  }

  return cfg;
}

ExperimentConfig ExperimentConfig::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("config: parse error in " + path + ": " + e.what());
  }
  return from_json(j);
}

json ExperimentConfig::to_json() const {
  json d;
  if (dataset.kind == DatasetKind::Blobs) {
    d = {{"kind", "blobs"},
         {"classes", dataset.classes},
         {"dim", dataset.dim},
         {"train_per_class", dataset.train_per_class},
         {"test_per_class", dataset.test_per_class},
         {"separation", dataset.separation}};
  } else {
    d = {{"kind", "csv"}, {"path", dataset.path}, {"test_path", dataset.test_path}};
    if (dataset.csv_classes > 0) d["classes"] = dataset.csv_classes;
  }

  json o = {{"kind", optimizer_kind_name(optimizer.kind)},
            {"lr", optimizer.lr},
            {"momentum", optimizer.momentum},
            {"weight_decay", optimizer.weight_decay},
            {"gamma", optimizer.gamma},
            {"alpha", optimizer.alpha},
            {"mvr_mixing", optimizer.mvr_mixing},
            {"adam_beta1", optimizer.adam_beta1},
            {"adam_beta2", optimizer.adam_beta2},
            {"adam_epsilon", optimizer.adam_epsilon},
            {"probe_size", optimizer.probe_size},
            {"snapshot_subsample", optimizer.snapshot_subsample},
            {"trace_c", optimizer.trace_c}};
  if (optimizer.fixed_c) o["fixed_c"] = *optimizer.fixed_c;

  json s = {{"sparsity", sparsity.sparsity},
            {"distribution",
             sparsity.distribution == MaskDistribution::Uniform ? "uniform" : "erk"},
            {"rule", sparsity.rule == MaskRule::Set ? "set" : "rigl"},
            {"update_interval", sparsity.update_interval},
            {"drop_fraction", sparsity.drop_fraction},
            {"decay", sparsity.decay == DropDecay::Cosine ? "cosine" : "constant"}};

  json ob = {{"kind", objective.kind == ObjectiveKind::Standard
                          ? "standard"
                          : (objective.kind == ObjectiveKind::At ? "at" : "trades")},
             {"trades_beta", objective.trades_beta},
             {"attack", attack_to_json(objective.attack)}};

  json t = {{"epochs", training.epochs},
            {"batch_size", training.batch_size},
            {"lr_breakpoints", training.lr_breakpoints},
            {"lr_factors", training.lr_factors},
            {"seed", training.seed},
            {"checkpoint_every", training.checkpoint_every},
            {"eval_attack", attack_to_json(training.eval_attack)}};

  return {{"dataset", d}, {"model", json{{"hidden", model.hidden}}},
          {"optimizer", o}, {"sparsity", s},
          {"objective", ob}, {"training", t}};
}

std::string ExperimentConfig::canonical_dump() const { return to_json().dump(); }

double ExperimentConfig::lr_at(std::size_t epoch) const {
  double lr = optimizer.lr;
  for (std::size_t i = 0; i < training.lr_breakpoints.size(); ++i)
    if (epoch >= training.lr_breakpoints[i]) lr *= training.lr_factors[i];
  return lr;
}

std::string fnv1a_hex(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016" PRIx64, h);
  return buf;
}

std::string ExperimentConfig::content_hash() const { return fnv1a_hex(canonical_dump()); }

std::string ExperimentConfig::dataset_model_fingerprint() const {
  const json j = to_json();
  return fnv1a_hex(json{{"dataset", j.at("dataset")}, {"model", j.at("model")}}.dump());
}

}  // namespace sparseopt
