#include "gracias/config.hpp"

#include <filesystem>
#include <fstream>

namespace gracias {

namespace {

using nlohmann::json;

const json& require(const json& j, const std::string& key, const std::string& where) {
  auto it = j.find(key);
  if (it == j.end()) throw ConfigError(where + ": missing required key '" + key + "'");
  return *it;
}

template <typename T>
T get_or(const json& j, const std::string& key, T fallback) {
  auto it = j.find(key);
  if (it == j.end()) return fallback;
  try {
    return it->get<T>();
  } catch (const json::exception& e) {
    throw ConfigError("config key '" + key + "': " + e.what());
  }
}

DefenseConfig gracias_stage_from_json(const json& j) {
  DefenseConfig cfg;
  cfg.k_min = get_or<std::size_t>(j, "k_min", cfg.k_min);
  cfg.k_max = get_or<std::size_t>(j, "k_max", cfg.k_max);
  cfg.kernel_size = get_or<std::size_t>(j, "kernel_size", cfg.kernel_size);
  cfg.var_min = get_or<double>(j, "var_min", cfg.var_min);
  cfg.var_max = get_or<double>(j, "var_max", cfg.var_max);
  try {
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return cfg;
}

}  // namespace

HarnessConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  HarnessConfig cfg;
  try {
    in >> cfg.raw;
  } catch (const json::exception& e) {
    throw ConfigError("config is not valid JSON: " + std::string(e.what()));
  }
  if (get_or<int>(cfg.raw, "schema_version", 0) != 1) {
    throw ConfigError(path + ": schema_version must be 1");
  }
  if (!cfg.raw.contains("seed")) {
    throw ConfigError(path + ": a master 'seed' is required (no implicit entropy)");
  }
  cfg.master_seed = cfg.raw.at("seed").get<std::uint64_t>();
  cfg.threads = get_or<std::size_t>(cfg.raw, "threads", 1);
  return cfg;
}

Dataset dataset_from_config(const HarnessConfig& cfg) {
  const json& j = require(cfg.raw, "dataset", "config");
  const std::string type = require(j, "type", "dataset").get<std::string>();
  if (type == "synthetic") {
    return gen_synthetic(get_or<std::size_t>(j, "classes", 4), get_or<std::size_t>(j, "per_class", 120),
                         get_or<std::size_t>(j, "image_size", 16),
                         get_or<std::uint64_t>(j, "seed", cfg.master_seed),
                         get_or<double>(j, "noise", 0.06));
  }
  if (type == "idx") {
    const std::string images = require(j, "images", "dataset").get<std::string>();
    const std::string labels = require(j, "labels", "dataset").get<std::string>();
    for (const std::string& p : {images, labels}) {
      if (!std::filesystem::exists(p)) throw ConfigError("dataset file does not exist: " + p);
    }
    return load_idx(images, labels);
  }
  throw ConfigError("dataset type must be 'synthetic' or 'idx', got '" + type + "'");
}

TrainSpec train_spec_from_config(const HarnessConfig& cfg) {
  const json& model = require(cfg.raw, "model", "config");
  TrainSpec spec;
  spec.checkpoint = require(model, "checkpoint", "model").get<std::string>();
  try {
    spec.arch = arch_from_name(get_or<std::string>(model, "architecture", "mlp"));
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  spec.hidden = get_or<std::size_t>(model, "hidden", 64);
  spec.channels = get_or<std::size_t>(model, "channels", 8);
  spec.init_seed = get_or<std::uint64_t>(model, "init_seed", cfg.master_seed);

  const json& train = require(cfg.raw, "train", "config");
  spec.config.lr = get_or<double>(train, "lr", 0.1);
  spec.config.epochs = get_or<std::size_t>(train, "epochs", 10);
  spec.config.batch = get_or<std::size_t>(train, "batch", 32);
  spec.config.seed = get_or<std::uint64_t>(train, "seed", cfg.master_seed);
  return spec;
}

ClassifierParams model_from_config(const HarnessConfig& cfg) {
  const json& model = require(cfg.raw, "model", "config");
  const std::string checkpoint = require(model, "checkpoint", "model").get<std::string>();
  if (!std::filesystem::exists(checkpoint)) {
    throw ConfigError("model checkpoint does not exist: " + checkpoint + " (run `train` first)");
  }
  try {
    return load_checkpoint(checkpoint);
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
}

AttackSpec attack_spec_from_json(const json& j) {
  AttackSpec spec;
  try {
    spec.kind = attack_kind_from_name(get_or<std::string>(j, "type", "pgd"));
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  // Budgets arrive on the 0-255 pixel scale.
  const double eps = get_or<double>(j, "eps", 16.0);
  const double step = get_or<double>(j, "eps_step", (spec.kind == AttackKind::Fgsm) ? eps : 2.0);
  try {
    spec.config = AttackConfig::from_pixel_scale(eps, step, get_or<std::size_t>(j, "iters", 40),
                                                 get_or<std::size_t>(j, "eot_samples", 10),
                                                 get_or<std::uint64_t>(j, "seed", 0));
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return spec;
}

AttackSpec attack_spec_from_config(const HarnessConfig& cfg) {
  return attack_spec_from_json(require(cfg.raw, "attack", "config"));
}

DefensePipelineSpec defense_from_config(const HarnessConfig& cfg) {
  DefensePipelineSpec pipeline;
  auto it = cfg.raw.find("defense");
  if (it == cfg.raw.end()) return pipeline;  // identity
  const json& stages = require(*it, "stages", "defense");
  if (!stages.is_array()) throw ConfigError("defense.stages must be an array");
  for (const json& stage : stages) {
    const std::string type = require(stage, "type", "defense stage").get<std::string>();
    DefenseStageSpec s;
    if (type == "identity") {
      s.kind = DefenseStageSpec::Kind::Identity;
    } else if (type == "gracias") {
      s.kind = DefenseStageSpec::Kind::Gracias;
      s.gracias = gracias_stage_from_json(stage);
    } else if (type == "bitdepth") {
      s.kind = DefenseStageSpec::Kind::Bitdepth;
      s.bits = get_or<int>(stage, "bits", 3);
      if (s.bits < 1 || s.bits > 8) throw ConfigError("bitdepth stage: bits must lie in [1,8]");
    } else {
      throw ConfigError("unknown defense stage type '" + type + "'");
    }
    pipeline.stages.push_back(std::move(s));
  }
  return pipeline;
}

EvalAssertions assertions_from_config(const HarnessConfig& cfg) {
  EvalAssertions a;
  auto eval = cfg.raw.find("eval");
  if (eval == cfg.raw.end()) return a;
  auto assert_it = eval->find("assert");
  if (assert_it == eval->end()) return a;
  a.enabled = true;
  a.max_attacked_accuracy = get_or<double>(*assert_it, "max_attacked_accuracy", a.max_attacked_accuracy);
  a.min_defense_gain = get_or<double>(*assert_it, "min_defense_gain", a.min_defense_gain);
  a.max_clean_drop = get_or<double>(*assert_it, "max_clean_drop", a.max_clean_drop);
  return a;
}

std::size_t eval_limit_from_config(const HarnessConfig& cfg) {
  auto eval = cfg.raw.find("eval");
  if (eval == cfg.raw.end()) return 0;
  return get_or<std::size_t>(*eval, "limit", 0);
}

HistogramSpec histogram_spec_from_config(const HarnessConfig& cfg) {
  HistogramSpec spec;
  spec.attack.kind = AttackKind::Pgd;
  spec.attack.config = AttackConfig::from_pixel_scale(16.0, 2.0, 10);
  auto it = cfg.raw.find("histogram");
  if (it != cfg.raw.end()) {
    spec.pairs = get_or<std::size_t>(*it, "pairs", spec.pairs);
    spec.bins = get_or<std::size_t>(*it, "bins", spec.bins);
    spec.subspace_dim = get_or<std::size_t>(*it, "subspace_dim", spec.subspace_dim);
    spec.k = get_or<std::size_t>(*it, "k", spec.k);
    spec.kernel_size = get_or<std::size_t>(*it, "kernel_size", spec.kernel_size);
    if (it->contains("attack")) spec.attack = attack_spec_from_json(it->at("attack"));
  }
  spec.master_seed = cfg.master_seed;
  spec.threads = cfg.threads;
  return spec;
}

void bound_run_from_config(const HarnessConfig& cfg, BoundGeometry& geometry, double& eps,
                           std::size_t& trials) {
  geometry = BoundGeometry{};
  eps = 8.0 / 255.0;
  trials = 1000;
  auto it = cfg.raw.find("verify_bound");
  if (it == cfg.raw.end()) return;
  geometry.height = get_or<std::size_t>(*it, "height", geometry.height);
  geometry.width = get_or<std::size_t>(*it, "width", geometry.width);
  geometry.channels = get_or<std::size_t>(*it, "channels", geometry.channels);
  geometry.k = get_or<std::size_t>(*it, "k", geometry.k);
  geometry.kernel_size = get_or<std::size_t>(*it, "kernel_size", geometry.kernel_size);
  eps = get_or<double>(*it, "eps", 8.0) / 255.0;
  trials = get_or<std::size_t>(*it, "trials", trials);
}

void bench_run_from_config(const HarnessConfig& cfg, std::size_t& image_size, std::size_t& k,
                           std::size_t& repeats) {
  image_size = 64;
  k = 60;
  repeats = 20;
  auto it = cfg.raw.find("bench");
  if (it == cfg.raw.end()) return;
  image_size = get_or<std::size_t>(*it, "image_size", image_size);
  k = get_or<std::size_t>(*it, "k", k);
  repeats = get_or<std::size_t>(*it, "repeats", repeats);
}

void defend_run_from_config(const HarnessConfig& cfg, std::string& input, std::string& output) {
  const json& j = require(cfg.raw, "defend", "config");
  input = require(j, "input", "defend").get<std::string>();
  if (!std::filesystem::exists(input)) throw ConfigError("defend input does not exist: " + input);
  output = get_or<std::string>(j, "output", "defended.grct");
}

}  // namespace gracias
