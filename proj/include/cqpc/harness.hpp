#pragma once

// Replicated experiments: raw vs calibrated learners, pooling and sample-size
// sweeps, and the bike-share protocol.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "cqpc/conformal.hpp"
#include "cqpc/csv.hpp"
#include "cqpc/datagen.hpp"
#include "cqpc/dataset.hpp"
#include "cqpc/error.hpp"
#include "cqpc/loss.hpp"
#include "cqpc/parallel.hpp"
#include "cqpc/regressors.hpp"
#include "cqpc/rng.hpp"

namespace cqpc {

enum class ExperimentMode { compare, pooling_sweep, samplesize_sweep, bike };

inline const char* to_string(ExperimentMode m) noexcept {
  switch (m) {
    case ExperimentMode::compare:
      return "compare";
    case ExperimentMode::pooling_sweep:
      return "pooling_sweep";
    case ExperimentMode::samplesize_sweep:
      return "samplesize_sweep";
    case ExperimentMode::bike:
      return "bike";
  }
  return "unknown";
}

inline ExperimentMode mode_from_string(const std::string& s) {
  if (s == "compare") return ExperimentMode::compare;
  if (s == "pooling_sweep") return ExperimentMode::pooling_sweep;
  if (s == "samplesize_sweep") return ExperimentMode::samplesize_sweep;
  if (s == "bike") return ExperimentMode::bike;
  throw InvalidArgument("unknown mode '" + s +
                        "' (valid: compare, pooling_sweep, samplesize_sweep, bike)");
}

struct LearnerEntry {
  std::string name;
  LearnerConfig config;
};

inline std::vector<LearnerEntry> default_learners() {
  return {{"linear_qr", LinearQRConfig{}},
          {"gbq", GBQConfig{}},
          {"gbq_light", gbq_light_preset()},
          {"knnq", KNNQConfig{}}};
}

/// Columns of the UCI hourly bike-share file used as features.
inline std::vector<std::string> bike_feature_columns() {
  return {"season", "yr",      "mnth", "hr",   "holiday", "weekday",
          "workingday", "weathersit", "temp", "atemp", "hum", "windspeed"};
}

struct ExperimentConfig {
  ExperimentMode mode = ExperimentMode::compare;
  std::optional<GeneratorSpec> generator;
  std::size_t n = 2000;
  std::string csv_path;
  CsvOptions csv;
  std::vector<LearnerEntry> learners = default_learners();
  std::vector<double> quantiles{0.25, 0.5, 0.75};
  SplitSpec split{};
  PoolingSpec pooling = PoolingSpec::count(50);
  std::vector<PoolingSpec> pooling_grid;  // sweeps
  std::vector<double> fractions;          // sample-size sweep
  std::size_t replications = 100;
  std::uint64_t seed = 0;
  bool standardize = true;
  std::size_t jobs = 0;
  bool keep_predictions = false;

  void validate() const {
    if (learners.empty()) throw InvalidArgument("no learners configured");
    if (quantiles.empty()) throw InvalidArgument("no quantile levels configured");
    for (double q : quantiles) (void)QuantileLevel(q);
    split.validate();
    if (replications == 0) throw InvalidArgument("replications must be positive");
    if (mode == ExperimentMode::bike || (!generator && !csv_path.empty())) {
      if (csv_path.empty()) throw InvalidArgument("bike mode needs a dataset path");
    } else if (!generator) {
      throw InvalidArgument("config needs a generator or a dataset path");
    }
    if ((mode == ExperimentMode::pooling_sweep || mode == ExperimentMode::samplesize_sweep) &&
        pooling_grid.empty()) {
      throw InvalidArgument("sweep mode needs a nonempty pooling grid");
    }
    if (mode == ExperimentMode::samplesize_sweep) {
      if (fractions.empty()) throw InvalidArgument("samplesize_sweep needs a fraction grid");
      for (double f : fractions) {
        if (!(f > 0.0 && f <= 1.0)) throw InvalidArgument("fractions must lie in (0,1]");
      }
    }
    if (generator) generator->validate();
  }
};

struct ResultRecord {
  std::string learner;
  double quantile = 0.0;
  std::string variant;  // "raw" or "calibrated"
  std::string pooling;  // "none" for raw
  double fraction = 1.0;
  std::size_t rep = 0;
  double loss = std::numeric_limits<double>::quiet_NaN();
  double wall_ms = 0.0;
  bool failed = false;
  std::string error;
  std::vector<double> predictions;
  std::vector<double> targets;
};

inline ResultRecord make_record(std::string learner, double quantile, std::string variant,
                                std::string pooling, double fraction, std::size_t rep) {
  ResultRecord r;
  r.learner = std::move(learner);
  r.quantile = quantile;
  r.variant = std::move(variant);
  r.pooling = std::move(pooling);
  r.fraction = fraction;
  r.rep = rep;
  return r;
}

/// Per-purpose seed for one replication, independent of every other replication.
inline std::uint64_t replication_seed(std::uint64_t master, std::size_t rep,
                                      std::uint64_t purpose) {
  return mix64(master ^ mix64((static_cast<std::uint64_t>(rep) + 1) * 0x9e3779b97f4a7c15ULL +
                              purpose));
}

namespace detail {

inline LearnerConfig seeded(LearnerConfig config, std::uint64_t seed) {
  if (auto* g = std::get_if<GBQConfig>(&config)) g->seed = seed;
  return config;
}

inline double elapsed_ms(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start)
      .count();
}

inline void append_failed(std::vector<ResultRecord>& out, const std::string& learner, double q,
                          const std::vector<PoolingSpec>& poolings, double fraction,
                          std::size_t rep, const std::string& why) {
  ResultRecord r = make_record(learner, q, "raw", "none", fraction, rep);
  r.failed = true;
  r.error = why;
  out.push_back(r);
  for (const auto& p : poolings) {
    ResultRecord c = make_record(learner, q, "calibrated", p.label(), fraction, rep);
    c.failed = true;
    c.error = why;
    out.push_back(c);
  }
}

/// Every record of a cell marked failed, e.g. when the subsample cannot be split.
inline std::vector<ResultRecord> failed_cell(const ExperimentConfig& config,
                                             const std::vector<PoolingSpec>& poolings,
                                             double fraction, std::size_t rep,
                                             const std::string& why) {
  std::vector<ResultRecord> out;
  for (const auto& l : config.learners) {
    for (double q : config.quantiles) append_failed(out, l.name, q, poolings, fraction, rep, why);
  }
  return out;
}

/// One replication on one dataset: every learner x quantile, raw plus each pooling rule.
inline std::vector<ResultRecord> run_cell(const ExperimentConfig& config, const Dataset& data,
                                          const std::vector<PoolingSpec>& poolings,
                                          double fraction, std::size_t rep) {
  SplitSpec spec = config.split;
  spec.seed = replication_seed(config.seed, rep, 2);
  SplitIndices idx;
  try {
    idx = split(data, spec);
  } catch (const Error& e) {
    return failed_cell(config, poolings, fraction, rep, e.what());
  }
  std::vector<ResultRecord> out;
  auto fail_all = [&](const std::string& learner, double q, const std::string& why) {
    append_failed(out, learner, q, poolings, fraction, rep, why);
  };
  const Dataset train = data.subset(idx.train);
  const Dataset calib = data.subset(idx.calib);
  const Dataset test = data.subset(idx.test);
  const Standardization scaling = pooling_scaling(train, config.standardize);
  std::vector<double> targets(test.demand().begin(), test.demand().end());

  for (std::size_t li = 0; li < config.learners.size(); ++li) {
    const auto& entry = config.learners[li];
    const Learner learner =
        make_learner(seeded(entry.config, replication_seed(config.seed, rep, 3 + li)));
    for (double q : config.quantiles) {
      const QuantileLevel level(q);
      const auto start = std::chrono::steady_clock::now();
      ModelPtr base;
      try {
        base = learner(train, level);
      } catch (const std::exception& e) {
        fail_all(entry.name, q, e.what());
        continue;
      }
      const double fit_ms = elapsed_ms(start);
      const auto raw_pred = base->predict_all(test);
      ResultRecord raw = make_record(entry.name, q, "raw", "none", fraction, rep);
      raw.loss = empirical_pinball(raw_pred, targets, level);
      raw.wall_ms = fit_ms;
      if (config.keep_predictions) {
        raw.predictions = raw_pred;
        raw.targets = targets;
      }
      out.push_back(std::move(raw));

      const CalibratedModel calibrated(base, calib, scaling, level);
      for (const auto& p : poolings) {
        const auto t0 = std::chrono::steady_clock::now();
        ResultRecord c = make_record(entry.name, q, "calibrated", p.label(), fraction, rep);
        try {
          const auto model = calibrated.with_pooling(p);
          const auto pred = model.predict_all(test);
          c.loss = empirical_pinball(pred, targets, level);
          if (config.keep_predictions) {
            c.predictions = pred;
            c.targets = targets;
          }
        } catch (const Error& e) {
          c.failed = true;
          c.error = e.what();
        }
        c.wall_ms = fit_ms + elapsed_ms(t0);
        out.push_back(std::move(c));
      }
    }
  }
  return out;
}

}  // namespace detail

/// Dataset for replication `rep`: a fresh draw from the generator, or the CSV.
inline Dataset replication_dataset(const ExperimentConfig& config, std::size_t rep,
                                   const std::optional<Dataset>& fixed) {
  if (fixed) return *fixed;
  GeneratorSpec g = *config.generator;
  g.seed = replication_seed(config.seed, rep, 1);
  return generate(g, config.n);
}

inline std::optional<Dataset> load_fixed_dataset(const ExperimentConfig& config) {
  if (config.generator && config.mode != ExperimentMode::bike) return std::nullopt;
  return read_csv(config.csv_path, config.csv);
}

namespace detail {

inline std::vector<ResultRecord> run_grid(const ExperimentConfig& config,
                                          const std::vector<PoolingSpec>& poolings,
                                          const std::vector<double>& fractions) {
  config.validate();
  const auto fixed = load_fixed_dataset(config);
  const std::size_t cells = fractions.size() * config.replications;
  std::vector<std::vector<ResultRecord>> slots(cells);
  parallel_for(config.replications, config.jobs, [&](std::size_t rep) {
    const Dataset base = replication_dataset(config, rep, fixed);
    for (std::size_t fi = 0; fi < fractions.size(); ++fi) {
      const double f = fractions[fi];
      auto& slot = slots[fi * config.replications + rep];
      if (f >= 1.0) {
        slot = run_cell(config, base, poolings, f, rep);
        continue;
      }
      const auto keep = static_cast<std::size_t>(std::llround(f * static_cast<double>(base.rows())));
      if (keep == 0) {
        slot = failed_cell(config, poolings, f, rep, "insufficient data: empty subsample");
        continue;
      }
      RngStream rng(replication_seed(config.seed, rep, 0x5353), static_cast<std::uint64_t>(fi));
      const auto rows = rng.sample_without_replacement(base.rows(), keep);
      slot = run_cell(config, base.subset(rows), poolings, f, rep);
    }
  });
  std::vector<ResultRecord> out;
  for (auto& s : slots) {
    for (auto& r : s) out.push_back(std::move(r));
  }
  return out;
}

}  // namespace detail

/// Raw vs calibrated with the configured pooling rule.
inline std::vector<ResultRecord> run_comparison(const ExperimentConfig& config) {
  return detail::run_grid(config, {config.pooling}, {1.0});
}

/// One global fit per replication, calibrated under every pooling rule in the grid.
inline std::vector<ResultRecord> run_pooling_sweep(const ExperimentConfig& config) {
  return detail::run_grid(config, config.pooling_grid, {1.0});
}

/// Pooling sweep on seeded subsamples of each replication's dataset.
inline std::vector<ResultRecord> run_samplesize_sweep(const ExperimentConfig& config) {
  return detail::run_grid(config, config.pooling_grid, config.fractions);
}

/// Hourly bike-share protocol: cnt as demand, the documented feature columns.
inline std::vector<ResultRecord> run_bike(ExperimentConfig config) {
  config.mode = ExperimentMode::bike;
  config.generator.reset();
  config.csv.target = "cnt";
  if (config.csv.features.empty()) config.csv.features = bike_feature_columns();
  return detail::run_grid(config, {config.pooling}, {1.0});
}

inline std::vector<ResultRecord> run_experiment(const ExperimentConfig& config) {
  switch (config.mode) {
    case ExperimentMode::compare:
      return run_comparison(config);
    case ExperimentMode::pooling_sweep:
      return run_pooling_sweep(config);
    case ExperimentMode::samplesize_sweep:
      return run_samplesize_sweep(config);
    case ExperimentMode::bike:
      return run_bike(config);
  }
  return {};
}

// ---------------------------------------------------------------------------
// Aggregation
// ---------------------------------------------------------------------------

struct CellSummary {
  std::string learner;
  double quantile = 0.0;
  std::string variant;
  std::string pooling;
  double fraction = 1.0;
  double mean = std::numeric_limits<double>::quiet_NaN();
  double std = std::numeric_limits<double>::quiet_NaN();
  std::size_t count = 0;
  std::size_t failures = 0;
  // calibrated cells only: 100 (raw - calibrated) / raw
  std::optional<double> percent_reduction;
};

inline std::vector<CellSummary> summarize(const std::vector<ResultRecord>& records) {
  using Key = std::tuple<std::string, double, double, std::string, std::string>;
  std::map<Key, std::vector<const ResultRecord*>> groups;
  std::vector<Key> order;
  for (const auto& r : records) {
    Key k{r.learner, r.quantile, r.fraction, r.variant, r.pooling};
    auto [it, inserted] = groups.try_emplace(k);
    if (inserted) order.push_back(k);
    it->second.push_back(&r);
  }
  std::vector<CellSummary> out;
  std::map<std::tuple<std::string, double, double>, double> raw_mean;
  for (const auto& k : order) {
    CellSummary s;
    std::tie(s.learner, s.quantile, s.fraction, s.variant, s.pooling) = k;
    double sum = 0.0;
    for (const auto* r : groups[k]) {
      if (r->failed) {
        ++s.failures;
        continue;
      }
      sum += r->loss;
      ++s.count;
    }
    if (s.count > 0) {
      s.mean = sum / static_cast<double>(s.count);
      double ss = 0.0;
      for (const auto* r : groups[k]) {
        if (!r->failed) ss += (r->loss - s.mean) * (r->loss - s.mean);
      }
      s.std = s.count > 1 ? std::sqrt(ss / static_cast<double>(s.count - 1)) : 0.0;
    }
    if (s.variant == "raw") raw_mean[{s.learner, s.quantile, s.fraction}] = s.mean;
    out.push_back(s);
  }
  for (auto& s : out) {
    if (s.variant != "calibrated") continue;
    auto it = raw_mean.find({s.learner, s.quantile, s.fraction});
    if (it != raw_mean.end() && it->second > 0.0 && std::isfinite(s.mean)) {
      s.percent_reduction = 100.0 * (it->second - s.mean) / it->second;
    }
  }
  return out;
}

inline std::size_t failure_count(const std::vector<ResultRecord>& records) {
  return static_cast<std::size_t>(
      std::count_if(records.begin(), records.end(), [](const ResultRecord& r) { return r.failed; }));
}

inline void write_results_csv(std::ostream& out, const std::vector<ResultRecord>& records) {
  out << "learner,quantile,variant,pooling,fraction,rep,loss,wall_ms\n";
  for (const auto& r : records) {
    out << r.learner << ',' << detail::format_number(r.quantile) << ',' << r.variant << ','
        << r.pooling << ',' << detail::format_number(r.fraction) << ',' << r.rep << ','
        << (r.failed ? std::string("nan") : detail::format_number(r.loss)) << ','
        << detail::format_number(std::round(r.wall_ms * 1000.0) / 1000.0) << '\n';
  }
}

}  // namespace cqpc
