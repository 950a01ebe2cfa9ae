#include "gracias/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <mutex>
#include <stdexcept>
#include <thread>

#include <json.hpp>

namespace gracias {

namespace {

using nlohmann::json;

// Stream tags for per-image sub-seed derivation; the eval-side defense and
// the attacker's defense draws must never share a stream.
constexpr std::uint64_t kEvalDefenseStream = 1;
constexpr std::uint64_t kAttackDefenseStream = 2;

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

AttackResult craft(const ClassifierParams& model, const Tensor& x, std::size_t y,
                   const AttackSpec& attack, const DefensePipelineSpec& defense,
                   std::uint64_t attack_defense_seed) {
  switch (attack.kind) {
    case AttackKind::None:
      return AttackResult{x, 0.0, false};
    case AttackKind::Fgsm:
      return fgsm(model, x, y, attack.config.eps);
    case AttackKind::Pgd:
      return pgd(model, x, y, attack.config);
    case AttackKind::Bpda: {
      DefenseFn fn = build_defense(defense, attack_defense_seed);
      return bpda_attack(model, fn, x, y, attack.config);
    }
    case AttackKind::EotPgd: {
      DefenseFn fn = build_defense(defense, attack_defense_seed);
      return eot_pgd(model, fn, x, y, attack.config);
    }
  }
  throw std::logic_error("unknown attack kind");
}

void mean_and_se(const std::vector<double>& values, double& mean, double& se) {
  mean = 0.0;
  se = 0.0;
  if (values.empty()) return;
  for (double v : values) mean += v;
  mean /= static_cast<double>(values.size());
  if (values.size() < 2) return;
  double var = 0.0;
  for (double v : values) var += (v - mean) * (v - mean);
  var /= static_cast<double>(values.size() - 1);
  se = std::sqrt(var / static_cast<double>(values.size()));
}

std::vector<double> histogram_masses(const std::vector<double>& values, std::size_t bins) {
  std::vector<double> mass(bins, 0.0);
  if (values.empty()) return mass;
  for (double v : values) {
    std::size_t bin = static_cast<std::size_t>(std::clamp(v, 0.0, 1.0) * static_cast<double>(bins));
    if (bin >= bins) bin = bins - 1;
    mass[bin] += 1.0;
  }
  for (double& m : mass) m /= static_cast<double>(values.size());
  return mass;
}

void write_text_file(const std::string& path, const std::string& body) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << body;
  if (!out) throw std::runtime_error("write failed: " + path);
}

}  // namespace

DefenseFn build_defense(const DefensePipelineSpec& spec, std::uint64_t seed) {
  if (spec.stages.empty()) return make_identity_defense();
  std::vector<DefenseFn> fns;
  fns.reserve(spec.stages.size());
  for (std::size_t i = 0; i < spec.stages.size(); ++i) {
    const DefenseStageSpec& stage = spec.stages[i];
    switch (stage.kind) {
      case DefenseStageSpec::Kind::Identity:
        fns.push_back(make_identity_defense());
        break;
      case DefenseStageSpec::Kind::Gracias: {
        DefenseConfig cfg = stage.gracias;
        cfg.seed = derive_seed(seed, i);
        fns.push_back(make_gracias_defense(cfg));
        break;
      }
      case DefenseStageSpec::Kind::Bitdepth:
        fns.push_back(make_bitdepth_defense(stage.bits));
        break;
    }
  }
  return chain(std::move(fns));
}

std::string attack_kind_name(AttackKind kind) {
  switch (kind) {
    case AttackKind::None: return "none";
    case AttackKind::Fgsm: return "fgsm";
    case AttackKind::Pgd: return "pgd";
    case AttackKind::Bpda: return "bpda";
    case AttackKind::EotPgd: return "eot-pgd";
  }
  throw std::logic_error("unknown attack kind");
}

AttackKind attack_kind_from_name(const std::string& name) {
  if (name == "none") return AttackKind::None;
  if (name == "fgsm") return AttackKind::Fgsm;
  if (name == "pgd") return AttackKind::Pgd;
  if (name == "bpda") return AttackKind::Bpda;
  if (name == "eot-pgd" || name == "eot_pgd") return AttackKind::EotPgd;
  throw std::invalid_argument("unknown attack kind '" + name + "'");
}

void parallel_for_indexed(std::size_t n, std::size_t threads,
                          const std::function<void(std::size_t)>& fn) {
  threads = std::max<std::size_t>(threads, 1);
  if (threads == 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::mutex error_mutex;
  std::string error;
  auto worker = [&] {
    while (!failed.load()) {
      const std::size_t i = next.fetch_add(1);
      if (i >= n) return;
      try {
        fn(i);
      } catch (const std::exception& e) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!failed.exchange(true)) error = e.what();
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  if (failed.load()) throw std::runtime_error(error);
}

MetricsReport run_experiment(const ExperimentSpec& spec) {
  spec.model.validate();
  if (spec.dataset.size() == 0) throw std::invalid_argument("run_experiment: empty dataset");
  const std::size_t n =
      (spec.limit == 0) ? spec.dataset.size() : std::min(spec.limit, spec.dataset.size());

  const auto started = std::chrono::steady_clock::now();
  MetricsReport report;
  report.records.resize(n);

  parallel_for_indexed(n, spec.threads, [&](std::size_t i) {
    try {
      const Tensor& x = spec.dataset.images[i];
      const std::size_t y = spec.dataset.labels[i];
      const std::uint64_t sub_seed = derive_seed(spec.master_seed, i);

      PerImageRecord rec;
      rec.index = i;
      rec.label = y;
      rec.clean_pred = predict(spec.model, x);

      const AttackResult attack = craft(spec.model, x, y, spec.attack, spec.defense,
                                        derive_seed(sub_seed, kAttackDefenseStream));
      rec.attacked_pred = predict(spec.model, attack.adversarial);
      rec.attack_linf = attack.linf;
      rec.attack_success = attack.success;

      DefenseFn defend = build_defense(spec.defense, derive_seed(sub_seed, kEvalDefenseStream));
      rec.defended_clean_pred = predict(spec.model, defend(x));
      rec.defended_attacked_pred = predict(spec.model, defend(attack.adversarial));
      report.records[i] = rec;
    } catch (const std::exception& e) {
      throw std::runtime_error("image " + std::to_string(i) + ": " + e.what());
    }
  });

  std::size_t clean = 0, attacked = 0, dclean = 0, dattacked = 0;
  for (const PerImageRecord& r : report.records) {
    clean += (r.clean_pred == r.label);
    attacked += (r.attacked_pred == r.label);
    dclean += (r.defended_clean_pred == r.label);
    dattacked += (r.defended_attacked_pred == r.label);
  }
  const double total = static_cast<double>(n);
  report.clean_accuracy = clean / total;
  report.attacked_accuracy = attacked / total;
  report.defended_clean_accuracy = dclean / total;
  report.defended_attacked_accuracy = dattacked / total;
  report.wall_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started).count();

  if (!spec.out_dir.empty()) {
    write_metrics_json(report, spec.out_dir + "/metrics.json");
    write_records_csv(report, spec.out_dir + "/records.csv");
    json timings;
    timings["wall_ms"] = report.wall_ms;
    timings["images"] = n;
    write_text_file(spec.out_dir + "/timings.json", timings.dump(2) + "\n");
  }
  return report;
}

void write_metrics_json(const MetricsReport& report, const std::string& path) {
  json doc;
  doc["schema_version"] = 1;
  doc["clean_accuracy"] = report.clean_accuracy;
  doc["attacked_accuracy"] = report.attacked_accuracy;
  doc["defended_clean_accuracy"] = report.defended_clean_accuracy;
  doc["defended_attacked_accuracy"] = report.defended_attacked_accuracy;
  doc["images"] = report.records.size();
  json records = json::array();
  for (const PerImageRecord& r : report.records) {
    json rec;
    rec["index"] = r.index;
    rec["label"] = r.label;
    rec["clean_pred"] = r.clean_pred;
    rec["attacked_pred"] = r.attacked_pred;
    rec["defended_clean_pred"] = r.defended_clean_pred;
    rec["defended_attacked_pred"] = r.defended_attacked_pred;
    rec["attack_linf"] = r.attack_linf;
    rec["attack_success"] = r.attack_success;
    records.push_back(std::move(rec));
  }
  doc["records"] = std::move(records);
  write_text_file(path, doc.dump(2) + "\n");
}

void write_records_csv(const MetricsReport& report, const std::string& path) {
  std::string body =
      "index,label,clean_pred,attacked_pred,defended_clean_pred,defended_attacked_pred,"
      "attack_linf,attack_success\n";
  for (const PerImageRecord& r : report.records) {
    body += std::to_string(r.index) + "," + std::to_string(r.label) + "," +
            std::to_string(r.clean_pred) + "," + std::to_string(r.attacked_pred) + "," +
            std::to_string(r.defended_clean_pred) + "," + std::to_string(r.defended_attacked_pred) +
            "," + format_double(r.attack_linf) + "," + (r.attack_success ? "1" : "0") + "\n";
  }
  write_text_file(path, body);
}

std::string check_assertions(const MetricsReport& report, const EvalAssertions& a) {
  if (!a.enabled) return "";
  std::string failures;
  if (report.attacked_accuracy > a.max_attacked_accuracy) {
    failures += "attacked_accuracy " + format_double(report.attacked_accuracy) + " > " +
                format_double(a.max_attacked_accuracy) + "; ";
  }
  const double gain = report.defended_attacked_accuracy - report.attacked_accuracy;
  if (gain < a.min_defense_gain) {
    failures += "defense gain " + format_double(gain) + " < " + format_double(a.min_defense_gain) + "; ";
  }
  const double drop = report.clean_accuracy - report.defended_clean_accuracy;
  if (drop > a.max_clean_drop) {
    failures += "clean drop " + format_double(drop) + " > " + format_double(a.max_clean_drop) + "; ";
  }
  return failures;
}

std::vector<AttackRunRecord> run_attack(const ClassifierParams& model, const Dataset& data,
                                        const AttackSpec& attack, const DefensePipelineSpec& defense,
                                        std::uint64_t master_seed, std::size_t threads,
                                        std::size_t limit) {
  const std::size_t n = (limit == 0) ? data.size() : std::min(limit, data.size());
  std::vector<AttackRunRecord> records(n);
  parallel_for_indexed(n, threads, [&](std::size_t i) {
    const std::uint64_t sub_seed = derive_seed(master_seed, i);
    const Tensor& x = data.images[i];
    const std::size_t y = data.labels[i];
    const AttackResult res =
        craft(model, x, y, attack, defense, derive_seed(sub_seed, kAttackDefenseStream));
    records[i] = AttackRunRecord{i, y, predict(model, x), predict(model, res.adversarial), res.linf,
                                 res.success};
  });
  return records;
}

void write_attack_jsonl(const std::vector<AttackRunRecord>& records, const std::string& path) {
  std::string body;
  for (const AttackRunRecord& r : records) {
    json rec;
    rec["index"] = r.index;
    rec["label"] = r.label;
    rec["clean_pred"] = r.clean_pred;
    rec["adversarial_pred"] = r.adversarial_pred;
    rec["linf"] = r.linf;
    rec["success"] = r.success;
    body += rec.dump() + "\n";
  }
  write_text_file(path, body);
}

HistogramReport pair_distance_histogram(const ClassifierParams& model, const Dataset& data,
                                        const HistogramSpec& spec) {
  if (spec.pairs < 2) throw std::invalid_argument("histogram: need at least two pairs");
  if (spec.bins < 1) throw std::invalid_argument("histogram: need at least one bin");
  if (data.size() < 2 || data.class_count < 2) {
    throw std::invalid_argument("histogram: dataset must contain at least two classes");
  }

  struct PairOutcome {
    double same{-1.0};
    double cross{-1.0};
    bool degenerate{false};
  };
  std::vector<PairOutcome> outcomes(spec.pairs);

  parallel_for_indexed(spec.pairs, spec.threads, [&](std::size_t t) {
    Xoshiro256ss rng(derive_seed(spec.master_seed, t));
    const std::size_t idx = rng.uniform_int(0, data.size() - 1);
    const Tensor& x = data.images[idx];
    const std::size_t y = data.labels[idx];

    std::size_t cross_idx = idx;
    for (int tries = 0; tries < 4096; ++tries) {
      cross_idx = rng.uniform_int(0, data.size() - 1);
      if (data.labels[cross_idx] != y) break;
    }
    if (data.labels[cross_idx] == y) throw std::runtime_error("histogram: no cross-class sample found");

    const AttackResult attack =
        craft(model, x, y, spec.attack, DefensePipelineSpec{}, derive_seed(spec.master_seed, t));

    KernelBank kernels;
    kernels.kernels.reserve(spec.k);
    for (std::size_t i = 0; i < spec.k; ++i) {
      kernels.kernels.push_back(sample_kernel(spec.kernel_size, rng));
    }
    const ImageBank bank_clean = bank_from_kernels(x, kernels);
    const ImageBank bank_adv = bank_from_kernels(attack.adversarial, kernels);
    const ImageBank bank_cross = bank_from_kernels(data.images[cross_idx], kernels);

    PairOutcome outcome;
    try {
      const GrassmannPoint p_clean = grassmann_from_bank(bank_clean, spec.subspace_dim, false);
      const GrassmannPoint p_adv = grassmann_from_bank(bank_adv, spec.subspace_dim, false);
      const GrassmannPoint p_cross = grassmann_from_bank(bank_cross, spec.subspace_dim, false);
      outcome.same = normalized_geodesic(p_clean, p_adv);
      outcome.cross = normalized_geodesic(p_cross, p_adv);
    } catch (const std::invalid_argument&) {
      outcome.degenerate = true;  // rank below the requested dimension
    }
    outcomes[t] = outcome;
  });

  HistogramReport report;
  for (const PairOutcome& o : outcomes) {
    if (o.degenerate) {
      ++report.degenerate;
      continue;
    }
    report.same_distances.push_back(o.same);
    report.cross_distances.push_back(o.cross);
  }
  report.bin_width = 1.0 / static_cast<double>(spec.bins);
  report.same_hist = histogram_masses(report.same_distances, spec.bins);
  report.cross_hist = histogram_masses(report.cross_distances, spec.bins);
  mean_and_se(report.same_distances, report.same_mean, report.same_se);
  mean_and_se(report.cross_distances, report.cross_mean, report.cross_se);
  return report;
}

void write_histogram_json(const HistogramReport& report, const std::string& path) {
  json doc;
  doc["schema_version"] = 1;
  doc["same_mean"] = report.same_mean;
  doc["cross_mean"] = report.cross_mean;
  doc["same_se"] = report.same_se;
  doc["cross_se"] = report.cross_se;
  doc["degenerate_pairs"] = report.degenerate;
  doc["bin_width"] = report.bin_width;
  doc["same_hist"] = report.same_hist;
  doc["cross_hist"] = report.cross_hist;
  doc["same_distances"] = report.same_distances;
  doc["cross_distances"] = report.cross_distances;
  write_text_file(path, doc.dump(2) + "\n");
}

void write_bound_report_json(const BoundReport& report, const BoundGeometry& geometry, double eps,
                             const std::string& path) {
  json doc;
  doc["schema_version"] = 1;
  doc["trials"] = report.trials;
  doc["evaluated"] = report.evaluated;
  doc["degenerate"] = report.degenerate;
  doc["violations_squared"] = report.violations_squared;
  doc["violations_unsquared"] = report.violations_unsquared;
  doc["lhs_mean"] = report.lhs_mean;
  doc["lhs_max"] = report.lhs_max;
  doc["rhs_squared_mean"] = report.rhs_squared_mean;
  doc["rhs_squared_min"] = report.rhs_squared_min;
  doc["rhs_unsquared_min"] = report.rhs_unsquared_min;
  doc["min_margin_squared"] = report.min_margin_squared;
  doc["geometry"] = {{"height", geometry.height},
                     {"width", geometry.width},
                     {"channels", geometry.channels},
                     {"k", geometry.k},
                     {"kernel_size", geometry.kernel_size}};
  doc["eps"] = eps;
  write_text_file(path, doc.dump(2) + "\n");
}

BenchReport bench_defense(std::size_t image_size, std::size_t k, std::size_t repeats,
                          std::uint64_t seed) {
  BenchReport report;
  report.image_size = image_size;
  report.k = k;
  report.repeats = repeats;
  if (repeats == 0) return report;

  Xoshiro256ss rng(seed);
  Tensor image({image_size, image_size, 3});
  for (std::size_t i = 0; i < image.size(); ++i) image[i] = rng.uniform01();

  DefenseConfig cfg = DefenseConfig::defaults_for(image.shape());
  cfg.k_min = cfg.k_max = k;

  for (std::size_t r = 0; r < repeats; ++r) {
    const auto start = std::chrono::steady_clock::now();
    const Tensor defended = gracias_defend(image, cfg, rng);
    const auto stop = std::chrono::steady_clock::now();
    (void)defended;
    report.times_ms.push_back(std::chrono::duration<double, std::milli>(stop - start).count());
  }

  std::vector<double> sorted = report.times_ms;
  std::sort(sorted.begin(), sorted.end());
  report.median_ms = sorted[sorted.size() / 2];
  report.p95_ms = sorted[std::min(sorted.size() - 1,
                                  static_cast<std::size_t>(std::ceil(0.95 * sorted.size())) - 1)];
  for (double t : sorted) report.mean_ms += t;
  report.mean_ms /= static_cast<double>(sorted.size());
  return report;
}

void write_bench_json(const BenchReport& report, const std::string& path) {
  json doc;
  doc["schema_version"] = 1;
  doc["image_size"] = report.image_size;
  doc["k"] = report.k;
  doc["repeats"] = report.repeats;
  doc["median_ms"] = report.median_ms;
  doc["p95_ms"] = report.p95_ms;
  doc["mean_ms"] = report.mean_ms;
  doc["times_ms"] = report.times_ms;
  write_text_file(path, doc.dump(2) + "\n");
}

}  // namespace gracias
