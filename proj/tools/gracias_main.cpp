#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "gracias/config.hpp"
#include "gracias/io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct CommonArgs {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir{"out"};
  std::optional<std::size_t> threads;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config_path, "JSON experiment config")->required();
  cmd->add_option("--seed", args.seed, "override the master seed");
  cmd->add_option("--out", args.out_dir, "output directory");
  cmd->add_option("--threads", args.threads, "worker threads");
}

gracias::HarnessConfig load(const CommonArgs& args) {
  gracias::HarnessConfig cfg = gracias::load_config(args.config_path);
  if (args.seed) cfg.master_seed = *args.seed;
  if (args.threads) cfg.threads = *args.threads;
  fs::create_directories(args.out_dir);
  return cfg;
}

void write_json_file(const json& doc, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << doc.dump(2) << "\n";
}

int cmd_train(const CommonArgs& args) {
  const auto cfg = load(args);
  const gracias::Dataset data = gracias::dataset_from_config(cfg);
  gracias::TrainSpec spec = gracias::train_spec_from_config(cfg);

  gracias::ClassifierParams model =
      gracias::init_classifier(spec.arch, data.images.front().shape(), data.class_count,
                               spec.init_seed, spec.hidden, spec.channels);
  const gracias::TrainTrace trace = gracias::train_sgd(model, data.batch(), spec.config);
  gracias::save_checkpoint(model, spec.checkpoint);

  json log;
  log["checkpoint"] = spec.checkpoint;
  log["epoch_loss"] = trace.epoch_loss;
  log["train_accuracy"] = gracias::accuracy(model, data.batch());
  write_json_file(log, args.out_dir + "/train_log.json");
  std::cout << "trained " << gracias::arch_name(spec.arch) << " on " << data.size() << " images, "
            << "train accuracy " << log["train_accuracy"] << ", checkpoint " << spec.checkpoint
            << "\n";
  return 0;
}

int cmd_attack(const CommonArgs& args) {
  const auto cfg = load(args);
  const gracias::Dataset data = gracias::dataset_from_config(cfg);
  const gracias::ClassifierParams model = gracias::model_from_config(cfg);
  const gracias::AttackSpec attack = gracias::attack_spec_from_config(cfg);
  const gracias::DefensePipelineSpec defense = gracias::defense_from_config(cfg);

  const auto records = gracias::run_attack(model, data, attack, defense, cfg.master_seed,
                                           cfg.threads, gracias::eval_limit_from_config(cfg));
  gracias::write_attack_jsonl(records, args.out_dir + "/attacks.jsonl");

  std::size_t flips = 0;
  double max_linf = 0.0;
  for (const auto& r : records) {
    flips += r.success;
    max_linf = std::max(max_linf, r.linf);
  }
  json summary;
  summary["attack"] = gracias::attack_kind_name(attack.kind);
  summary["images"] = records.size();
  summary["flips"] = flips;
  summary["max_linf"] = max_linf;
  write_json_file(summary, args.out_dir + "/attack_summary.json");
  std::cout << gracias::attack_kind_name(attack.kind) << ": flipped " << flips << "/"
            << records.size() << " labels, max linf " << max_linf << "\n";
  return 0;
}

int cmd_defend(const CommonArgs& args) {
  const auto cfg = load(args);
  std::string input, output;
  gracias::defend_run_from_config(cfg, input, output);
  const gracias::Tensor image = gracias::read_grct(input);
  const gracias::DefensePipelineSpec pipeline = gracias::defense_from_config(cfg);

  gracias::DefenseFn defense = gracias::build_defense(pipeline, cfg.master_seed);
  const gracias::Tensor defended = defense(image);
  const std::string out_path = args.out_dir + "/" + output;
  gracias::write_grct(defended, out_path);

  json stats;
  stats["input"] = input;
  stats["output"] = out_path;
  stats["stages"] = pipeline.stages.size();
  write_json_file(stats, args.out_dir + "/defend_stats.json");
  std::cout << "defended " << input << " -> " << out_path << "\n";
  return 0;
}

int cmd_eval(const CommonArgs& args, bool assert_thresholds) {
  const auto cfg = load(args);
  gracias::ExperimentSpec spec;
  spec.dataset = gracias::dataset_from_config(cfg);
  spec.model = gracias::model_from_config(cfg);
  spec.attack = gracias::attack_spec_from_config(cfg);
  spec.defense = gracias::defense_from_config(cfg);
  spec.limit = gracias::eval_limit_from_config(cfg);
  spec.master_seed = cfg.master_seed;
  spec.threads = cfg.threads;
  spec.out_dir = args.out_dir;
  spec.assertions = gracias::assertions_from_config(cfg);

  const gracias::MetricsReport report = gracias::run_experiment(spec);
  std::cout << "clean " << report.clean_accuracy << ", attacked " << report.attacked_accuracy
            << ", defended-clean " << report.defended_clean_accuracy << ", defended-attacked "
            << report.defended_attacked_accuracy << "\n";

  if (assert_thresholds) {
    spec.assertions.enabled = true;
    const std::string failures = gracias::check_assertions(report, spec.assertions);
    if (!failures.empty()) {
      std::cerr << "acceptance thresholds failed: " << failures << "\n";
      return 3;
    }
    std::cout << "acceptance thresholds passed\n";
  }
  return 0;
}

int cmd_histogram(const CommonArgs& args) {
  const auto cfg = load(args);
  const gracias::Dataset data = gracias::dataset_from_config(cfg);
  const gracias::ClassifierParams model = gracias::model_from_config(cfg);
  const gracias::HistogramSpec spec = gracias::histogram_spec_from_config(cfg);

  const gracias::HistogramReport report = gracias::pair_distance_histogram(model, data, spec);
  gracias::write_histogram_json(report, args.out_dir + "/histogram.json");
  std::cout << "same-sample mean " << report.same_mean << " (se " << report.same_se << "), "
            << "cross-class mean " << report.cross_mean << " (se " << report.cross_se << "), "
            << report.degenerate << " degenerate pairs\n";
  return 0;
}

int cmd_verify_bound(const CommonArgs& args) {
  const auto cfg = load(args);
  gracias::BoundGeometry geometry;
  double eps = 0.0;
  std::size_t trials = 0;
  gracias::bound_run_from_config(cfg, geometry, eps, trials);

  gracias::Xoshiro256ss rng(cfg.master_seed);
  const gracias::BoundReport report = gracias::verify_bound(trials, geometry, eps, rng);
  gracias::write_bound_report_json(report, geometry, eps, args.out_dir + "/bound_report.json");
  std::cout << "trials " << report.trials << ", evaluated " << report.evaluated << ", violations "
            << report.violations_squared << " (squared) / " << report.violations_unsquared
            << " (unsquared form), degenerate " << report.degenerate << "\n";
  return 0;
}

int cmd_bench(const CommonArgs& args) {
  const auto cfg = load(args);
  std::size_t image_size = 0, k = 0, repeats = 0;
  gracias::bench_run_from_config(cfg, image_size, k, repeats);
  const gracias::BenchReport report = gracias::bench_defense(image_size, k, repeats, cfg.master_seed);
  gracias::write_bench_json(report, args.out_dir + "/bench.json");
  std::cout << "defense on " << image_size << "x" << image_size << "x3, k=" << k << ": median "
            << report.median_ms << " ms, p95 " << report.p95_ms << " ms over " << repeats
            << " repeats\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"randomized-subspace image defense laboratory"};
  app.require_subcommand(1);

  CommonArgs train_args, attack_args, defend_args, eval_args, hist_args, bound_args, bench_args;
  bool eval_assert = false;

  add_common(app.add_subcommand("train", "train a classifier"), train_args);
  add_common(app.add_subcommand("attack", "run an attack and log per-image records"), attack_args);
  add_common(app.add_subcommand("defend", "apply the defense pipeline to a GRCT image"), defend_args);
  CLI::App* eval_cmd = app.add_subcommand("eval", "full clean/attacked/defended evaluation");
  add_common(eval_cmd, eval_args);
  eval_cmd->add_flag("--assert", eval_assert, "exit 3 when acceptance thresholds fail");
  add_common(app.add_subcommand("histogram", "subspace distance histograms for image pairs"), hist_args);
  add_common(app.add_subcommand("verify-bound", "empirical check of the proximity bound"), bound_args);
  add_common(app.add_subcommand("bench", "defense timing statistics"), bench_args);

  CLI11_PARSE(app, argc, argv);

  try {
    if (app.got_subcommand("train")) return cmd_train(train_args);
    if (app.got_subcommand("attack")) return cmd_attack(attack_args);
    if (app.got_subcommand("defend")) return cmd_defend(defend_args);
    if (app.got_subcommand("eval")) return cmd_eval(eval_args, eval_assert);
    if (app.got_subcommand("histogram")) return cmd_histogram(hist_args);
    if (app.got_subcommand("verify-bound")) return cmd_verify_bound(bound_args);
    if (app.got_subcommand("bench")) return cmd_bench(bench_args);
  } catch (const gracias::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
