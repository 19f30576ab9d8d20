// cqpc: generate data, run experiments, evaluate bounds and estimate margins.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <string>

#include "CLI11.hpp"

#include "cqpc/config.hpp"
#include "cqpc/cqpc.hpp"

namespace fs = std::filesystem;
using cqpc::config::json;
using cqpc::config::ordered_json;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;
constexpr const char* kVersion = "0.1.0";

struct Common {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> jobs;
  bool quiet = false;
};

json load_or_empty(const std::string& path) {
  return path.empty() ? json::object() : cqpc::config::load_json(path);
}

void ensure_dir(const fs::path& dir) {
  if (dir.empty()) return;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw cqpc::DataError("cannot create output directory " + dir.string() + ": " + ec.message());
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw cqpc::DataError("cannot write " + path.string());
  out << text;
}

/// NaN and infinities are not JSON numbers; emit null instead.
ordered_json num(double v) { return std::isfinite(v) ? ordered_json(v) : ordered_json(nullptr); }

void write_manifest(const fs::path& dir, const std::string& command, ordered_json resolved,
                    ordered_json seeds) {
  ordered_json m;
  m["tool"] = "cqpc";
  m["version"] = kVersion;
  m["command"] = command;
  m["config"] = std::move(resolved);
  m["seeds"] = std::move(seeds);
  write_text(dir / "manifest.json", m.dump(2) + "\n");
}

void note(const Common& c, const std::string& msg) {
  if (!c.quiet) std::cerr << msg << '\n';
}

// ---------------------------------------------------------------------------
// generate
// ---------------------------------------------------------------------------

struct GenerateFlags {
  std::optional<std::string> family;
  std::optional<std::size_t> n;
  std::optional<std::size_t> d;
};

int cmd_generate(const Common& c, const GenerateFlags& f) {
  auto cfg = cqpc::config::parse_generate(load_or_empty(c.config));
  if (f.family) cfg.generator.family = cqpc::family_from_string(*f.family);
  if (f.n) cfg.n = *f.n;
  if (f.d) cfg.generator.d = *f.d;
  if (c.seed) cfg.generator.seed = *c.seed;
  cfg.generator.validate();
  if (cfg.n == 0) throw cqpc::InvalidArgument("n must be positive");

  const fs::path out = c.out.empty() ? fs::path("data.csv") : fs::path(c.out);
  ensure_dir(out.parent_path());
  const auto data = cqpc::generate(cfg.generator, cfg.n);
  cqpc::write_csv(out, data);
  write_manifest(out.parent_path(), "generate", cqpc::config::to_json(cfg),
                 {{"generator", cfg.generator.seed}, {"row_streams", "row i uses stream i+1"}});
  note(c, "wrote " + std::to_string(data.rows()) + " rows to " + out.string());
  return 0;
}

// ---------------------------------------------------------------------------
// run
// ---------------------------------------------------------------------------

std::string fmt(double v) { return cqpc::detail::format_number(v); }

void write_charts(const fs::path& dir, const cqpc::ExperimentConfig& cfg,
                  const std::vector<cqpc::CellSummary>& cells) {
  using cqpc::svg::Series;
  auto mean_of = [&](const std::string& learner, double q, const std::string& variant,
                     const std::string& pooling, double fraction) {
    for (const auto& s : cells) {
      if (s.learner == learner && s.quantile == q && s.variant == variant &&
          (variant == "raw" || s.pooling == pooling) && s.fraction == fraction) {
        return s.mean;
      }
    }
    return std::numeric_limits<double>::quiet_NaN();
  };

  switch (cfg.mode) {
    case cqpc::ExperimentMode::pooling_sweep: {
      for (const auto& l : cfg.learners) {
        for (double q : cfg.quantiles) {
          cqpc::svg::LineChart chart;
          chart.title = l.name + ", alpha = " + fmt(q);
          chart.x_label = "pooling";
          chart.y_label = "mean test pinball loss";
          Series cal{"calibrated", {}};
          Series raw{"raw", {}};
          for (const auto& p : cfg.pooling_grid) {
            chart.categories.push_back(p.label());
            cal.values.push_back(mean_of(l.name, q, "calibrated", p.label(), 1.0));
            raw.values.push_back(mean_of(l.name, q, "raw", "", 1.0));
          }
          chart.series = {cal, raw};
          write_text(dir / ("pooling_" + l.name + "_q" + fmt(q) + ".svg"), cqpc::svg::render(chart));
        }
      }
      break;
    }
    case cqpc::ExperimentMode::samplesize_sweep: {
      for (double q : cfg.quantiles) {
        cqpc::svg::LineChart chart;
        chart.title = "sample size, alpha = " + fmt(q);
        chart.x_label = "training fraction";
        chart.y_label = "mean test pinball loss";
        for (double f : cfg.fractions) chart.categories.push_back(fmt(f));
        for (const auto& l : cfg.learners) {
          Series raw{l.name + " raw", {}};
          for (double f : cfg.fractions) raw.values.push_back(mean_of(l.name, q, "raw", "", f));
          chart.series.push_back(raw);
          for (const auto& p : cfg.pooling_grid) {
            Series cal{l.name + " " + p.label(), {}};
            for (double f : cfg.fractions) {
              cal.values.push_back(mean_of(l.name, q, "calibrated", p.label(), f));
            }
            chart.series.push_back(cal);
          }
        }
        write_text(dir / ("samplesize_q" + fmt(q) + ".svg"), cqpc::svg::render(chart));
      }
      break;
    }
    case cqpc::ExperimentMode::compare:
    case cqpc::ExperimentMode::bike: {
      cqpc::svg::BarChart chart;
      chart.title = std::string(cqpc::to_string(cfg.mode)) + ": raw vs calibrated";
      chart.y_label = "mean test pinball loss";
      for (double q : cfg.quantiles) chart.categories.push_back("alpha = " + fmt(q));
      const std::string pooling = cfg.pooling.label();
      for (const auto& l : cfg.learners) {
        for (const char* variant : {"raw", "calibrated"}) {
          Series s{l.name + " " + variant, {}};
          for (double q : cfg.quantiles) s.values.push_back(mean_of(l.name, q, variant, pooling, 1.0));
          chart.series.push_back(s);
        }
      }
      write_text(dir / (std::string(cqpc::to_string(cfg.mode)) + ".svg"), cqpc::svg::render(chart));
      break;
    }
  }
}

int cmd_run(const Common& c) {
  if (c.config.empty()) throw cqpc::InvalidArgument("run needs --config");
  auto cfg = cqpc::config::parse_experiment(cqpc::config::load_json(c.config));
  if (c.seed) cfg.seed = *c.seed;
  if (c.jobs) cfg.jobs = *c.jobs;
  if (cfg.mode == cqpc::ExperimentMode::bike) {
    cfg.generator.reset();
    if (cfg.csv.features.empty()) cfg.csv.features = cqpc::bike_feature_columns();
  }
  cfg.validate();

  const fs::path dir = c.out.empty() ? fs::path("cqpc_out") : fs::path(c.out);
  ensure_dir(dir);
  note(c, std::string("running ") + cqpc::to_string(cfg.mode) + " with " +
              std::to_string(cfg.replications) + " replications");
  const auto records = cqpc::run_experiment(cfg);

  {
    std::ofstream out(dir / "results.csv", std::ios::binary);
    if (!out) throw cqpc::DataError("cannot write results.csv");
    cqpc::write_results_csv(out, records);
  }
  const auto cells = cqpc::summarize(records);
  ordered_json summary;
  summary["mode"] = cqpc::to_string(cfg.mode);
  summary["replications"] = cfg.replications;
  summary["failures"] = cqpc::failure_count(records);
  summary["cells"] = ordered_json::array();
  for (const auto& s : cells) {
    ordered_json cell;
    cell["learner"] = s.learner;
    cell["quantile"] = s.quantile;
    cell["variant"] = s.variant;
    cell["pooling"] = s.pooling;
    cell["fraction"] = s.fraction;
    cell["mean"] = num(s.mean);
    cell["std"] = num(s.std);
    cell["count"] = s.count;
    cell["failures"] = s.failures;
    cell["percent_reduction"] = s.percent_reduction ? num(*s.percent_reduction) : ordered_json(nullptr);
    summary["cells"].push_back(cell);
  }
  std::map<std::string, std::string> errors;
  for (const auto& r : records) {
    if (r.failed && errors.size() < 20) errors.emplace(r.learner + " q=" + fmt(r.quantile), r.error);
  }
  summary["failure_examples"] = errors;
  write_text(dir / "summary.json", summary.dump(2) + "\n");
  write_charts(dir, cfg, cells);

  ordered_json seeds;
  seeds["master"] = cfg.seed;
  seeds["derivation"] =
      "replication_seed(master, rep, purpose): purpose 1 data, 2 split, 3+i learner i";
  write_manifest(dir, "run", cqpc::config::to_json(cfg), seeds);

  for (const auto& s : cells) {
    if (s.percent_reduction) {
      note(c, s.learner + " alpha=" + fmt(s.quantile) + " " + s.pooling + " fraction=" +
                  fmt(s.fraction) + ": reduction " + fmt(std::round(*s.percent_reduction * 100) / 100) +
                  "%");
    }
  }
  return 0;
}

// ---------------------------------------------------------------------------
// bounds
// ---------------------------------------------------------------------------

const char* kind_name(cqpc::DiameterKind k) {
  switch (k) {
    case cqpc::DiameterKind::full_region:
      return "full_region";
    case cqpc::DiameterKind::roots:
      return "roots";
    case cqpc::DiameterKind::no_stationary_point:
      return "no_stationary_point";
  }
  return "unknown";
}

int cmd_bounds(const Common& c) {
  if (c.config.empty()) throw cqpc::InvalidArgument("bounds needs --config");
  const auto cfg = cqpc::config::parse_bounds(cqpc::config::load_json(c.config));
  const cqpc::QuantileLevel level(cfg.alpha);
  const auto margin = cfg.margin.build(level);
  const auto gap = cqpc::GapSpec::power(cfg.gap_C, cfg.gap_nu);
  const auto region = cqpc::region_fn(cfg.region);

  ordered_json report;
  report["alpha"] = cfg.alpha;

  ordered_json table = ordered_json::array();
  for (double xi : cfg.xi_grid) {
    ordered_json row;
    row["xi"] = xi;
    const auto r = region(xi);
    row["n1"] = r.n1;
    row["n2"] = r.n2;
    row["kappa"] = num(gap(r.n1, xi));
    try {
      const auto td = cqpc::solve_tilde_delta(r, margin, gap, cfg.tol);
      row["delta"] = td.delta;
      row["phi"] = num(cqpc::phi(td.delta, r, margin, gap));
      row["residual"] = td.residual;
    } catch (const cqpc::NoCrossing&) {
      row["delta"] = nullptr;
      row["phi"] = nullptr;
      row["residual"] = nullptr;
    }
    table.push_back(row);
  }

  const auto best = cqpc::two_approx_pool_search(cfg.xi_grid, region, margin, gap, cfg.tol);
  report["xi"] = best.xi;
  report["delta"] = best.delta;
  report["phi"] = best.phi;
  report["residual"] = best.residual;
  report["skipped"] = best.skipped;

  if (!cfg.delta_grid.empty()) {
    double min_phi = std::numeric_limits<double>::infinity();
    double at_delta = 0.0;
    double at_xi = 0.0;
    for (double xi : cfg.xi_grid) {
      const auto r = region(xi);
      for (double d : cfg.delta_grid) {
        const double v = cqpc::phi(d, r, margin, gap);
        if (v < min_phi) {
          min_phi = v;
          at_delta = d;
          at_xi = xi;
        }
      }
    }
    report["grid_min"] = {{"phi", num(min_phi)}, {"delta", at_delta}, {"xi", at_xi}};
  }

  report["z"] = nullptr;
  report["lo"] = nullptr;
  report["hi"] = nullptr;
  if (cfg.confidence_delta) {
    const double xi = cfg.confidence_xi.value_or(best.xi);
    const double z = cqpc::interval_z(region(xi), margin, gap, *cfg.confidence_delta);
    const double a = cfg.alpha;
    if (!(z < std::min(a, 1.0 - a))) throw cqpc::IntervalEscapes(z);
    report["z"] = z;
    report["lo"] = a - z;
    report["hi"] = a + z;
    report["confidence_xi"] = xi;
  }

  report["roots"] = ordered_json::array();
  if (cfg.prop1) {
    const auto p = cqpc::optimal_diameter_prop1(*cfg.prop1);
    ordered_json pr;
    pr["kind"] = kind_name(p.kind);
    pr["c1_prime"] = num(p.c1_prime);
    pr["c2_prime"] = num(p.c2_prime);
    pr["roots"] = p.roots;
    pr["xi"] = num(p.xi);
    pr["phi"] = num(p.phi);
    pr["max_l"] = num(p.max_l);
    pr["argmax_l"] = num(p.argmax_l);
    report["roots"] = p.roots;
    report["prop1"] = pr;
  }
  report["table"] = table;

  const fs::path dir = c.out.empty() ? fs::path("cqpc_out") : fs::path(c.out);
  ensure_dir(dir);
  write_text(dir / "bounds.json", report.dump(2) + "\n");
  write_manifest(dir, "bounds", cqpc::config::to_json(cfg), ordered_json::object());
  note(c, "xi = " + fmt(best.xi) + ", delta = " + fmt(best.delta) + ", phi = " + fmt(best.phi));
  return 0;
}

// ---------------------------------------------------------------------------
// estimate
// ---------------------------------------------------------------------------

int cmd_estimate(const Common& c) {
  if (c.config.empty()) throw cqpc::InvalidArgument("estimate needs --config");
  auto cfg = cqpc::config::parse_estimate(cqpc::config::load_json(c.config));
  if (c.seed) {
    cfg.seed = *c.seed;
    cfg.loop.seed = *c.seed;
  }
  if (c.jobs && *c.jobs == 1) {
    cfg.loop.margin.parallel = false;
    cfg.loop.kappa.parallel = false;
  }

  cqpc::Dataset data = [&] {
    if (cfg.generator) {
      auto g = *cfg.generator;
      if (c.seed) g.seed = cqpc::mix64(*c.seed ^ 0x64617461ULL);
      cfg.generator = g;
      return cqpc::generate(g, cfg.n);
    }
    return cqpc::read_csv(cfg.dataset.path, cfg.dataset.csv);
  }();

  const fs::path dir = c.out.empty() ? fs::path("cqpc_out") : fs::path(c.out);
  ensure_dir(dir);
  const auto learner = cqpc::make_learner(cfg.learner.config);
  const auto result = cqpc::algorithm3_loop(data, cqpc::QuantileLevel(cfg.alpha), learner, cfg.loop);

  {
    std::ofstream out(dir / "margins.csv", std::ios::binary);
    out << "delta,h_upper,h_lower\n";
    const auto& m = result.margins;
    for (std::size_t i = 0; i < m.deltas.size(); ++i) {
      out << fmt(m.deltas[i]) << ',' << fmt(m.h_upper[i]) << ',' << fmt(m.h_lower[i]) << '\n';
    }
  }
  {
    std::ofstream out(dir / "kappa.csv", std::ios::binary);
    out << "n1,xi,kappa_tilde\n";
    for (const auto& s : result.kappa.samples) {
      out << fmt(s.n1) << ',' << fmt(s.xi) << ',' << fmt(s.kappa) << '\n';
    }
  }
  ordered_json est;
  est["C"] = num(result.kappa.C);
  est["nu"] = num(result.kappa.nu);
  est["eta"] = num(result.kappa.eta);
  est["xi"] = num(result.xi);
  est["converged"] = result.converged;
  est["xi_range"] = {num(result.xi_lo), num(result.xi_hi)};
  est["trace"] = ordered_json::array();
  for (const auto& r : result.trace) {
    ordered_json t;
    t["round"] = r.round;
    t["xi"] = num(r.xi);
    t["delta"] = num(r.delta);
    t["phi"] = num(r.phi);
    t["failed"] = r.failed;
    t["pool_size"] = r.pool_size;
    t["C"] = num(r.C);
    t["nu"] = num(r.nu);
    t["note"] = r.note;
    est["trace"].push_back(t);
  }
  write_text(dir / "estimate.json", est.dump(2) + "\n");
  ordered_json seeds{{"master", cfg.seed}};
  if (cfg.generator) seeds["generator"] = cfg.generator->seed;
  write_manifest(dir, "estimate", cqpc::config::to_json(cfg), seeds);
  note(c, "xi = " + fmt(result.xi) + " after " + std::to_string(result.trace.size()) +
              " round(s); C = " + fmt(result.kappa.C) + ", nu = " + fmt(result.kappa.nu));
  return 0;
}

void add_common(CLI::App* sub, Common& c, bool out_is_file = false) {
  sub->add_option("--config", c.config, "JSON configuration file")->check(CLI::ExistingFile);
  sub->add_option("--out", c.out, out_is_file ? "output CSV path" : "output directory");
  sub->add_option("--seed", c.seed, "master seed (overrides the config)");
  sub->add_option("--jobs", c.jobs, "worker threads, 0 = hardware concurrency");
  sub->add_flag("--quiet", c.quiet, "suppress progress messages");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Conformalized contextual quantile prediction toolkit"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  Common common;
  GenerateFlags gen;
  auto* generate = app.add_subcommand("generate", "write a synthetic dataset as CSV");
  add_common(generate, common, true);
  generate->add_option("--family", gen.family, "ml, ma, example2, example3 or linear");
  generate->add_option("--n", gen.n, "number of rows");
  generate->add_option("--d", gen.d, "feature dimension");
  auto* run = app.add_subcommand("run", "run a comparison or sweep experiment");
  add_common(run, common);
  auto* bounds = app.add_subcommand("bounds", "evaluate coverage-gap bounds and pooling diameters");
  add_common(bounds, common);
  auto* estimate = app.add_subcommand("estimate", "estimate margin and gap functions from data");
  add_common(estimate, common);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitUsage;
  }

  try {
    if (generate->parsed()) return cmd_generate(common, gen);
    if (run->parsed()) return cmd_run(common);
    if (bounds->parsed()) return cmd_bounds(common);
    if (estimate->parsed()) return cmd_estimate(common);
  } catch (const cqpc::InvalidArgument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const cqpc::DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const cqpc::NumericError& e) {
    std::cerr << "numeric error: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return kExitUsage;
}
