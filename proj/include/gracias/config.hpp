#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "gracias/experiment.hpp"

namespace gracias {

// Anything wrong with a config file or the values inside it; the CLI maps
// this to exit code 2.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct TrainSpec {
  TrainConfig config;
  std::string checkpoint;  // written by `train`, read by the other commands
  Arch arch{Arch::Mlp};
  std::size_t hidden{64};
  std::size_t channels{8};
  std::uint64_t init_seed{0};
};

struct HarnessConfig {
  nlohmann::json raw;
  std::uint64_t master_seed{0};
  std::size_t threads{1};
};

HarnessConfig load_config(const std::string& path);

Dataset dataset_from_config(const HarnessConfig& cfg);
TrainSpec train_spec_from_config(const HarnessConfig& cfg);
ClassifierParams model_from_config(const HarnessConfig& cfg);  // loads the checkpoint
AttackSpec attack_spec_from_json(const nlohmann::json& j);
AttackSpec attack_spec_from_config(const HarnessConfig& cfg);
DefensePipelineSpec defense_from_config(const HarnessConfig& cfg);
EvalAssertions assertions_from_config(const HarnessConfig& cfg);
std::size_t eval_limit_from_config(const HarnessConfig& cfg);
HistogramSpec histogram_spec_from_config(const HarnessConfig& cfg);
void bound_run_from_config(const HarnessConfig& cfg, BoundGeometry& geometry, double& eps,
                           std::size_t& trials);
void bench_run_from_config(const HarnessConfig& cfg, std::size_t& image_size, std::size_t& k,
                           std::size_t& repeats);
void defend_run_from_config(const HarnessConfig& cfg, std::string& input, std::string& output);

}  // namespace gracias
