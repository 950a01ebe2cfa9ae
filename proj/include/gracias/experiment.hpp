#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "gracias/attacks.hpp"
#include "gracias/dataset.hpp"
#include "gracias/defense.hpp"
#include "gracias/grassmann.hpp"
#include "gracias/model.hpp"

namespace gracias {

// ---- defense pipeline -------------------------------------------------

struct DefenseStageSpec {
  enum class Kind { Identity, Gracias, Bitdepth };
  Kind kind{Kind::Identity};
  DefenseConfig gracias;  // Kind::Gracias
  int bits{3};            // Kind::Bitdepth
};

struct DefensePipelineSpec {
  std::vector<DefenseStageSpec> stages;  // empty = identity
  bool empty() const { return stages.empty(); }
};

// Instantiates the pipeline; randomized stages get streams derived from
// `seed` and the stage index, so one pipeline instance per image keeps the
// per-image determinism contract.
DefenseFn build_defense(const DefensePipelineSpec& spec, std::uint64_t seed);

// ---- experiment -------------------------------------------------------

enum class AttackKind { None, Fgsm, Pgd, Bpda, EotPgd };

std::string attack_kind_name(AttackKind kind);
AttackKind attack_kind_from_name(const std::string& name);

struct AttackSpec {
  AttackKind kind{AttackKind::Pgd};
  AttackConfig config;
};

struct EvalAssertions {
  bool enabled{false};
  double max_attacked_accuracy{0.05};
  double min_defense_gain{0.20};
  double max_clean_drop{0.30};
};

struct ExperimentSpec {
  Dataset dataset;
  ClassifierParams model;
  AttackSpec attack;
  DefensePipelineSpec defense;
  std::size_t limit{0};  // 0 = whole dataset
  std::uint64_t master_seed{0};
  std::size_t threads{1};
  std::string out_dir;  // empty = compute only
  EvalAssertions assertions;
};

struct PerImageRecord {
  std::size_t index{0};
  std::size_t label{0};
  std::size_t clean_pred{0};
  std::size_t attacked_pred{0};
  std::size_t defended_clean_pred{0};
  std::size_t defended_attacked_pred{0};
  double attack_linf{0.0};
  bool attack_success{false};
};

struct MetricsReport {
  double clean_accuracy{0.0};
  double attacked_accuracy{0.0};
  double defended_clean_accuracy{0.0};
  double defended_attacked_accuracy{0.0};
  std::vector<PerImageRecord> records;
  double wall_ms{0.0};  // runtime stat; kept out of the deterministic outputs
};

// Evaluates clean / attacked / defended-clean / defended-attacked predictions
// per image with per-image sub-seeds, aggregates, and (when out_dir is set)
// emits metrics.json, records.csv and timings.json.
MetricsReport run_experiment(const ExperimentSpec& spec);

void write_metrics_json(const MetricsReport& report, const std::string& path);
void write_records_csv(const MetricsReport& report, const std::string& path);
std::string check_assertions(const MetricsReport& report, const EvalAssertions& a);  // empty = pass

// ---- attack logs ------------------------------------------------------

struct AttackRunRecord {
  std::size_t index{0};
  std::size_t label{0};
  std::size_t clean_pred{0};
  std::size_t adversarial_pred{0};
  double linf{0.0};
  bool success{false};
};

std::vector<AttackRunRecord> run_attack(const ClassifierParams& model, const Dataset& data,
                                        const AttackSpec& attack, const DefensePipelineSpec& defense,
                                        std::uint64_t master_seed, std::size_t threads,
                                        std::size_t limit = 0);
void write_attack_jsonl(const std::vector<AttackRunRecord>& records, const std::string& path);

// ---- subspace distance histograms --------------------------------------

struct HistogramSpec {
  std::size_t pairs{200};
  std::size_t bins{30};
  std::size_t subspace_dim{8};
  std::size_t k{20};
  std::size_t kernel_size{3};
  AttackSpec attack;  // defaults set by the caller; PGD-10 in the CLI
  std::uint64_t master_seed{0};
  std::size_t threads{1};
};

struct HistogramReport {
  std::vector<double> same_distances;   // clean vs adversarial of the same sample
  std::vector<double> cross_distances;  // different-class clean vs that adversarial
  std::vector<double> same_hist;        // bin masses, sum to 1
  std::vector<double> cross_hist;
  double bin_width{0.0};
  double same_mean{0.0}, cross_mean{0.0};
  double same_se{0.0}, cross_se{0.0};
  std::size_t degenerate{0};
};

HistogramReport pair_distance_histogram(const ClassifierParams& model, const Dataset& data,
                                        const HistogramSpec& spec);
void write_histogram_json(const HistogramReport& report, const std::string& path);

// ---- bound verification serialization -----------------------------------

void write_bound_report_json(const BoundReport& report, const BoundGeometry& geometry, double eps,
                             const std::string& path);

// ---- defense timing -----------------------------------------------------

struct BenchReport {
  std::size_t image_size{0};
  std::size_t k{0};
  std::size_t repeats{0};
  std::vector<double> times_ms;
  double median_ms{0.0};
  double p95_ms{0.0};
  double mean_ms{0.0};
};

BenchReport bench_defense(std::size_t image_size, std::size_t k, std::size_t repeats,
                          std::uint64_t seed);
void write_bench_json(const BenchReport& report, const std::string& path);

// Runs fn(0..n-1) on a small worker pool; any index may run on any thread.
void parallel_for_indexed(std::size_t n, std::size_t threads,
                          const std::function<void(std::size_t)>& fn);

}  // namespace gracias
