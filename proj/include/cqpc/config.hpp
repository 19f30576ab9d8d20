#pragma once

// JSON configuration documents for the command-line tool. Unknown keys are
// rejected with their full path.

#include <cstddef>
#include <cstdint>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"

#include "cqpc/bounds.hpp"
#include "cqpc/datagen.hpp"
#include "cqpc/estimation.hpp"
#include "cqpc/harness.hpp"

namespace cqpc::config {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

class ConfigError : public InvalidArgument {
 public:
  ConfigError(const std::string& path, const std::string& what)
      : InvalidArgument("config: " + (path.empty() ? std::string("<root>") : path) + ": " + what) {}
};

/// Typed, strict view of one JSON object.
class Reader {
 public:
  Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_, "expected an object");
  }

  std::string at(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
  bool has(const std::string& key) const { return j_.contains(key); }

  const json* child(const std::string& key) {
    used_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  template <class T>
  std::optional<T> opt(const std::string& key) {
    const json* v = child(key);
    if (!v || v->is_null()) return std::nullopt;
    return convert<T>(*v, at(key));
  }

  template <class T>
  T get(const std::string& key, T fallback) {
    auto v = opt<T>(key);
    return v ? *v : fallback;
  }

  template <class T>
  T req(const std::string& key) {
    auto v = opt<T>(key);
    if (!v) throw ConfigError(at(key), "required key is missing");
    return *v;
  }

  /// Throws if the object holds keys nobody asked for.
  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!used_.count(it.key())) throw ConfigError(at(it.key()), "unknown key");
    }
  }

  template <class T>
  static T convert(const json& v, const std::string& path) {
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) throw ConfigError(path, "expected a boolean");
      return v.get<bool>();
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) throw ConfigError(path, "expected a string");
      return v.get<std::string>();
    } else if constexpr (std::is_same_v<T, double>) {
      if (!v.is_number()) throw ConfigError(path, "expected a number");
      return v.get<double>();
    } else if constexpr (std::is_same_v<T, std::size_t> || std::is_same_v<T, std::uint64_t>) {
      if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0)) {
        throw ConfigError(path, "expected a nonnegative integer");
      }
      return static_cast<T>(v.get<std::uint64_t>());
    } else if constexpr (std::is_same_v<T, std::vector<double>>) {
      if (!v.is_array()) throw ConfigError(path, "expected an array of numbers");
      std::vector<double> out;
      for (std::size_t i = 0; i < v.size(); ++i) {
        out.push_back(convert<double>(v[i], path + "[" + std::to_string(i) + "]"));
      }
      return out;
    } else if constexpr (std::is_same_v<T, std::vector<std::string>>) {
      if (!v.is_array()) throw ConfigError(path, "expected an array of strings");
      std::vector<std::string> out;
      for (std::size_t i = 0; i < v.size(); ++i) {
        out.push_back(convert<std::string>(v[i], path + "[" + std::to_string(i) + "]"));
      }
      return out;
    } else {
      static_assert(sizeof(T) == 0, "unsupported config type");
    }
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> used_;
};

inline json load_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("", "cannot open configuration file " + path);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("", std::string("malformed JSON: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Pieces shared by several documents
// ---------------------------------------------------------------------------

inline GeneratorSpec parse_generator(const json& j, const std::string& path) {
  Reader r(j, path);
  GeneratorSpec g;
  g.family = family_from_string(r.req<std::string>("family"));
  g.d = r.get<std::size_t>("d", 0);
  g.theta = r.get<std::vector<double>>("theta", {});
  g.theta0 = r.get<double>("theta0", g.theta0);
  g.noise = noise_from_string(r.get<std::string>("noise", "normal"));
  g.gamma_low = r.get<double>("gamma_low", g.gamma_low);
  g.gamma_high = r.get<double>("gamma_high", g.gamma_high);
  g.seed = r.get<std::uint64_t>("seed", 0);
  r.finish();
  g.validate();
  return g;
}

inline ordered_json to_json(const GeneratorSpec& g) {
  ordered_json j;
  j["family"] = to_string(g.family);
  j["d"] = g.dim();
  j["theta"] = g.coefficients();
  j["theta0"] = g.theta0;
  j["noise"] = to_string(g.noise);
  j["gamma_low"] = g.gamma_low;
  j["gamma_high"] = g.gamma_high;
  j["seed"] = g.seed;
  return j;
}

struct DatasetRef {
  std::string path;
  CsvOptions csv;
};

inline DatasetRef parse_dataset(const json& j, const std::string& path) {
  Reader r(j, path);
  DatasetRef d;
  d.path = r.get<std::string>("path", "");
  d.csv.target = r.get<std::string>("target", d.csv.target);
  d.csv.features = r.get<std::vector<std::string>>("features", {});
  r.finish();
  return d;
}

inline LearnerEntry parse_learner(const json& j, const std::string& path) {
  Reader r(j, path);
  const std::string type = r.req<std::string>("type");
  LearnerEntry e;
  e.name = r.get<std::string>("name", type);
  if (type == "linear_qr") {
    LinearQRConfig c;
    c.ridge_lambda = r.get<double>("ridge_lambda", c.ridge_lambda);
    c.max_iters = r.get<std::size_t>("max_iters", c.max_iters);
    c.initial_step = r.get<double>("initial_step", c.initial_step);
    c.step_decay = r.get<double>("step_decay", c.step_decay);
    c.tol = r.get<double>("tol", c.tol);
    c.validate();
    e.config = c;
  } else if (type == "gbq" || type == "gbq_light") {
    GBQConfig c = type == "gbq" ? GBQConfig{} : gbq_light_preset();
    c.n_trees = r.get<std::size_t>("n_trees", c.n_trees);
    c.max_depth = r.get<std::size_t>("max_depth", c.max_depth);
    c.learning_rate = r.get<double>("learning_rate", c.learning_rate);
    c.min_leaf = r.get<std::size_t>("min_leaf", c.min_leaf);
    c.subsample = r.get<double>("subsample", c.subsample);
    c.seed = r.get<std::uint64_t>("seed", c.seed);
    c.validate();
    e.config = c;
  } else if (type == "knnq") {
    KNNQConfig c;
    c.k = r.get<std::size_t>("k", c.k);
    c.standardize = r.get<bool>("standardize", c.standardize);
    if (c.k == 0) throw ConfigError(r.at("k"), "k must be positive");
    e.config = c;
  } else {
    throw ConfigError(r.at("type"),
                      "unknown learner '" + type + "' (valid: linear_qr, gbq, gbq_light, knnq)");
  }
  r.finish();
  return e;
}

inline ordered_json to_json(const LearnerEntry& e) {
  ordered_json j;
  j["name"] = e.name;
  std::visit(
      [&](const auto& c) {
        using C = std::decay_t<decltype(c)>;
        if constexpr (std::is_same_v<C, LinearQRConfig>) {
          j["type"] = "linear_qr";
          j["ridge_lambda"] = c.ridge_lambda;
          j["max_iters"] = c.max_iters;
          j["initial_step"] = c.initial_step;
          j["step_decay"] = c.step_decay;
          j["tol"] = c.tol;
        } else if constexpr (std::is_same_v<C, GBQConfig>) {
          j["type"] = "gbq";
          j["n_trees"] = c.n_trees;
          j["max_depth"] = c.max_depth;
          j["learning_rate"] = c.learning_rate;
          j["min_leaf"] = c.min_leaf;
          j["subsample"] = c.subsample;
          j["seed"] = c.seed;
        } else {
          j["type"] = "knnq";
          j["k"] = c.k;
          j["standardize"] = c.standardize;
        }
      },
      e.config);
  return j;
}

/// "all", a count m, or {"m": ...} / {"xi": ...}.
inline PoolingSpec parse_pooling(const json& j, const std::string& path) {
  if (j.is_string()) {
    if (j.get<std::string>() == "all") return PoolingSpec::all();
    throw ConfigError(path, "pooling string must be \"all\"");
  }
  if (j.is_number()) return PoolingSpec::count(Reader::convert<std::size_t>(j, path));
  Reader r(j, path);
  std::optional<PoolingSpec> out;
  if (auto m = r.opt<std::size_t>("m")) out = PoolingSpec::count(*m);
  if (auto xi = r.opt<double>("xi")) {
    if (out) throw ConfigError(path, "pooling takes exactly one of m or xi");
    out = PoolingSpec::radius(*xi);
  }
  r.finish();
  if (!out) throw ConfigError(path, "pooling needs m or xi");
  return *out;
}

inline ordered_json to_json(const PoolingSpec& p) {
  switch (p.mode) {
    case PoolingMode::all:
      return "all";
    case PoolingMode::count:
      return ordered_json{{"m", p.m}};
    case PoolingMode::radius:
      return ordered_json{{"xi", p.xi}};
  }
  return "all";
}

inline SplitSpec parse_split(const json& j, const std::string& path) {
  Reader r(j, path);
  SplitSpec s;
  s.train_fraction = r.get<double>("train", s.train_fraction);
  s.calib_fraction = r.get<double>("calib", s.calib_fraction);
  s.test_fraction = r.get<double>("test", s.test_fraction);
  r.finish();
  try {
    s.validate();
  } catch (const InvalidArgument& e) {
    throw ConfigError(path, e.what());
  }
  return s;
}

// ---------------------------------------------------------------------------
// generate
// ---------------------------------------------------------------------------

struct GenerateConfig {
  GeneratorSpec generator;
  std::size_t n = 2000;
};

/// Generator keys plus n, all at the top level. Validation happens after flag overrides.
inline GenerateConfig parse_generate(const json& j) {
  Reader r(j, "");
  GenerateConfig c;
  auto& g = c.generator;
  g.family = family_from_string(r.get<std::string>("family", "ml"));
  g.d = r.get<std::size_t>("d", 0);
  g.theta = r.get<std::vector<double>>("theta", {});
  g.theta0 = r.get<double>("theta0", g.theta0);
  g.noise = noise_from_string(r.get<std::string>("noise", "normal"));
  g.gamma_low = r.get<double>("gamma_low", g.gamma_low);
  g.gamma_high = r.get<double>("gamma_high", g.gamma_high);
  g.seed = r.get<std::uint64_t>("seed", 0);
  c.n = r.get<std::size_t>("n", c.n);
  r.finish();
  return c;
}

inline ordered_json to_json(const GenerateConfig& c) {
  ordered_json j = to_json(c.generator);
  j["n"] = c.n;
  return j;
}

// ---------------------------------------------------------------------------
// run
// ---------------------------------------------------------------------------

inline ExperimentConfig parse_experiment(const json& j) {
  Reader r(j, "");
  ExperimentConfig c;
  c.mode = mode_from_string(r.get<std::string>("mode", "compare"));
  if (const json* g = r.child("generator")) c.generator = parse_generator(*g, "generator");
  c.n = r.get<std::size_t>("n", c.n);
  if (const json* d = r.child("dataset")) {
    auto ref = parse_dataset(*d, "dataset");
    c.csv_path = ref.path;
    c.csv = ref.csv;
  }
  if (const json* ls = r.child("learners")) {
    if (!ls->is_array()) throw ConfigError("learners", "expected an array");
    c.learners.clear();
    for (std::size_t i = 0; i < ls->size(); ++i) {
      c.learners.push_back(parse_learner((*ls)[i], "learners[" + std::to_string(i) + "]"));
    }
  }
  c.quantiles = r.get<std::vector<double>>("quantiles", c.quantiles);
  if (const json* s = r.child("split")) c.split = parse_split(*s, "split");
  if (c.mode == ExperimentMode::bike) c.pooling = PoolingSpec::count(20);
  if (const json* p = r.child("pooling")) c.pooling = parse_pooling(*p, "pooling");
  if (const json* g = r.child("pooling_grid")) {
    if (!g->is_array()) throw ConfigError("pooling_grid", "expected an array");
    for (std::size_t i = 0; i < g->size(); ++i) {
      c.pooling_grid.push_back(parse_pooling((*g)[i], "pooling_grid[" + std::to_string(i) + "]"));
    }
  }
  c.fractions = r.get<std::vector<double>>("fractions", {});
  c.replications = r.get<std::size_t>("replications", c.mode == ExperimentMode::bike ? 50 : 100);
  c.seed = r.get<std::uint64_t>("seed", 0);
  c.standardize = r.get<bool>("standardize", true);
  c.jobs = r.get<std::size_t>("jobs", 0);
  r.finish();
  if (c.mode == ExperimentMode::bike && c.csv.target == CsvOptions{}.target) c.csv.target = "cnt";
  return c;
}

inline ordered_json to_json(const ExperimentConfig& c) {
  ordered_json j;
  j["mode"] = to_string(c.mode);
  if (c.generator) j["generator"] = to_json(*c.generator);
  j["n"] = c.n;
  if (!c.csv_path.empty()) {
    j["dataset"] = {{"path", c.csv_path}, {"target", c.csv.target}, {"features", c.csv.features}};
  }
  j["learners"] = ordered_json::array();
  for (const auto& l : c.learners) j["learners"].push_back(to_json(l));
  j["quantiles"] = c.quantiles;
  j["split"] = {{"train", c.split.train_fraction},
                {"calib", c.split.calib_fraction},
                {"test", c.split.test_fraction}};
  j["pooling"] = to_json(c.pooling);
  j["pooling_grid"] = ordered_json::array();
  for (const auto& p : c.pooling_grid) j["pooling_grid"].push_back(to_json(p));
  j["fractions"] = c.fractions;
  j["replications"] = c.replications;
  j["seed"] = c.seed;
  j["standardize"] = c.standardize;
  j["jobs"] = c.jobs;
  return j;
}

// ---------------------------------------------------------------------------
// bounds
// ---------------------------------------------------------------------------

struct GridSpec {
  std::vector<double> values;
};

/// An explicit list, or {"min","max","count"} (log-spaced unless "linear": true).
inline std::vector<double> parse_grid(const json& j, const std::string& path) {
  if (j.is_array()) return Reader::convert<std::vector<double>>(j, path);
  Reader r(j, path);
  const double lo = r.req<double>("min");
  const double hi = r.req<double>("max");
  const auto count = r.req<std::size_t>("count");
  const bool linear = r.get<bool>("linear", false);
  r.finish();
  if (count == 0 || !(hi >= lo)) throw ConfigError(path, "grid needs count >= 1 and max >= min");
  if (!linear) {
    if (!(lo > 0.0)) throw ConfigError(path, "log grid needs min > 0");
    return log_grid(lo, hi, count);
  }
  std::vector<double> g(count);
  for (std::size_t i = 0; i < count; ++i) {
    g[i] = count == 1 ? lo : lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(count - 1);
  }
  return g;
}

struct MarginConfig {
  std::string family = "uniform";
  double gamma_low = 1.0;
  double gamma_high = 1.0;
  std::vector<double> deltas;
  std::vector<double> upper;
  std::vector<double> lower;

  MarginSpec build(QuantileLevel level) const {
    switch (margin_family_from_string(family)) {
      case MarginFamily::uniform:
        return margin_uniform(gamma_low, gamma_high);
      case MarginFamily::gaussian:
        return margin_gaussian(gamma_low, gamma_high, level);
      case MarginFamily::exponential:
        return margin_exponential(gamma_low, gamma_high, level);
      case MarginFamily::table:
        return MarginTable::from_raw(deltas, upper, lower).spec();
    }
    return margin_uniform(gamma_low, gamma_high);
  }
};

inline MarginConfig parse_margin(const json& j, const std::string& path) {
  Reader r(j, path);
  MarginConfig m;
  m.family = r.req<std::string>("family");
  try {
    const auto fam = margin_family_from_string(m.family);
    if (fam == MarginFamily::table) {
      m.deltas = r.req<std::vector<double>>("deltas");
      m.upper = r.req<std::vector<double>>("upper");
      m.lower = r.req<std::vector<double>>("lower");
    } else {
      m.gamma_low = r.req<double>("gamma_low");
      m.gamma_high = r.req<double>("gamma_high");
    }
  } catch (const ConfigError&) {
    throw;
  } catch (const InvalidArgument& e) {
    throw ConfigError(r.at("family"), e.what());
  }
  r.finish();
  return m;
}

struct BoundsConfig {
  double alpha = 0.5;
  MarginConfig margin;
  double gap_C = 0.0;
  double gap_nu = 0.0;
  RegionModel region{0.75, 10000.0, 1.0, 1.0};
  std::vector<double> xi_grid;
  std::vector<double> delta_grid;  // optional dense grid for the 2-D minimum
  std::optional<double> confidence_delta;
  std::optional<double> confidence_xi;
  std::optional<Prop1Params> prop1;
  double tol = 1e-12;
};

inline BoundsConfig parse_bounds(const json& j) {
  Reader r(j, "");
  BoundsConfig b;
  b.alpha = r.get<double>("alpha", b.alpha);
  (void)QuantileLevel(b.alpha);
  if (const json* m = r.child("margin")) {
    b.margin = parse_margin(*m, "margin");
  } else {
    throw ConfigError("margin", "required key is missing");
  }
  if (const json* g = r.child("gap")) {
    Reader gr(*g, "gap");
    b.gap_C = gr.get<double>("C", 0.0);
    b.gap_nu = gr.get<double>("nu", 0.0);
    gr.finish();
    if (!(b.gap_C >= 0.0) || !(b.gap_nu >= 0.0)) throw ConfigError("gap", "C and nu must be >= 0");
  }
  if (const json* reg = r.child("region")) {
    Reader rr(*reg, "region");
    b.region.rho = rr.get<double>("rho", b.region.rho);
    b.region.n = rr.get<double>("n", b.region.n);
    b.region.iota = rr.get<double>("iota", b.region.iota);
    b.region.xi_max = rr.get<double>("xi_max", b.region.xi_max);
    rr.finish();
    try {
      b.region.validate();
    } catch (const InvalidArgument& e) {
      throw ConfigError("region", e.what());
    }
  }
  if (const json* g = r.child("xi_grid")) {
    b.xi_grid = parse_grid(*g, "xi_grid");
  } else {
    b.xi_grid = log_grid(b.region.xi_max / 1000.0, b.region.xi_max, 200);
  }
  if (const json* g = r.child("delta_grid")) b.delta_grid = parse_grid(*g, "delta_grid");
  if (const json* c = r.child("confidence")) {
    Reader cr(*c, "confidence");
    b.confidence_delta = cr.req<double>("delta");
    b.confidence_xi = cr.opt<double>("xi");
    cr.finish();
  }
  if (const json* p = r.child("prop1")) {
    Reader pr(*p, "prop1");
    Prop1Params q;
    q.c1 = pr.req<double>("c1");
    q.c2 = pr.req<double>("c2");
    q.rho = pr.req<double>("rho");
    q.n = pr.req<double>("n");
    q.iota = pr.req<double>("iota");
    q.nu = pr.req<double>("nu");
    pr.finish();
    b.prop1 = q;
  }
  b.tol = r.get<double>("tol", b.tol);
  r.finish();
  return b;
}

inline ordered_json to_json(const BoundsConfig& b) {
  ordered_json j;
  j["alpha"] = b.alpha;
  ordered_json m;
  m["family"] = b.margin.family;
  if (b.margin.family == "table") {
    m["deltas"] = b.margin.deltas;
    m["upper"] = b.margin.upper;
    m["lower"] = b.margin.lower;
  } else {
    m["gamma_low"] = b.margin.gamma_low;
    m["gamma_high"] = b.margin.gamma_high;
  }
  j["margin"] = m;
  j["gap"] = {{"C", b.gap_C}, {"nu", b.gap_nu}};
  j["region"] = {{"rho", b.region.rho},
                 {"n", b.region.n},
                 {"iota", b.region.iota},
                 {"xi_max", b.region.xi_max}};
  j["xi_grid"] = b.xi_grid;
  j["delta_grid"] = b.delta_grid;
  if (b.confidence_delta) {
    j["confidence"] = {{"delta", *b.confidence_delta}};
    if (b.confidence_xi) j["confidence"]["xi"] = *b.confidence_xi;
  }
  if (b.prop1) {
    j["prop1"] = {{"c1", b.prop1->c1}, {"c2", b.prop1->c2},     {"rho", b.prop1->rho},
                  {"n", b.prop1->n},   {"iota", b.prop1->iota}, {"nu", b.prop1->nu}};
  }
  j["tol"] = b.tol;
  return j;
}

// ---------------------------------------------------------------------------
// estimate
// ---------------------------------------------------------------------------

struct EstimateConfig {
  double alpha = 0.5;
  std::optional<GeneratorSpec> generator;
  std::size_t n = 5000;
  DatasetRef dataset;
  LearnerEntry learner{"linear_qr", LinearQRConfig{}};
  Algorithm3Config loop;
  std::uint64_t seed = 0;
};

inline EstimateConfig parse_estimate(const json& j) {
  Reader r(j, "");
  EstimateConfig e;
  e.alpha = r.get<double>("alpha", e.alpha);
  (void)QuantileLevel(e.alpha);
  if (const json* g = r.child("generator")) e.generator = parse_generator(*g, "generator");
  e.n = r.get<std::size_t>("n", e.n);
  if (const json* d = r.child("dataset")) e.dataset = parse_dataset(*d, "dataset");
  if (!e.generator && e.dataset.path.empty()) {
    throw ConfigError("", "estimate needs a generator or dataset.path");
  }
  if (const json* l = r.child("learner")) e.learner = parse_learner(*l, "learner");
  auto& a = e.loop;
  a.init_xi = r.get<double>("init_xi", a.init_xi);
  a.max_rounds = r.get<std::size_t>("max_rounds", a.max_rounds);
  a.stability_tol = r.get<double>("stability_tol", a.stability_tol);
  a.delta_grid = r.get<std::vector<double>>("delta_grid", a.delta_grid);
  a.rho_grid = r.get<std::vector<double>>("rho_grid", a.rho_grid);
  a.region_rho = r.get<double>("region_rho", a.region_rho);
  a.xi_min = r.get<double>("xi_min", a.xi_min);
  a.xi_max = r.get<double>("xi_max", a.xi_max);
  a.xi_grid_size = r.get<std::size_t>("xi_grid_size", a.xi_grid_size);
  a.min_pool = r.get<std::size_t>("min_pool", a.min_pool);
  a.standardize = r.get<bool>("standardize", a.standardize);
  a.reference = r.get<std::vector<double>>("reference", a.reference);
  if (const json* k = r.child("kappa")) {
    Reader kr(*k, "kappa");
    a.kappa.test_fraction = kr.get<double>("test_fraction", a.kappa.test_fraction);
    a.kappa.pair_cap = kr.get<std::size_t>("pair_cap", a.kappa.pair_cap);
    a.kappa.eta_override = kr.opt<double>("eta_override");
    kr.finish();
  }
  if (const json* m = r.child("margin")) {
    Reader mr(*m, "margin");
    a.margin.level_offsets = mr.get<std::vector<double>>("level_offsets", {});
    a.margin.default_steps = mr.get<std::size_t>("steps", a.margin.default_steps);
    mr.finish();
  }
  e.seed = r.get<std::uint64_t>("seed", 0);
  r.finish();
  a.seed = e.seed;
  try {
    a.validate();
  } catch (const InvalidArgument& ex) {
    throw ConfigError("", ex.what());
  }
  return e;
}

inline ordered_json to_json(const EstimateConfig& e) {
  ordered_json j;
  const auto& a = e.loop;
  j["alpha"] = e.alpha;
  if (e.generator) j["generator"] = to_json(*e.generator);
  j["n"] = e.n;
  if (!e.dataset.path.empty()) {
    j["dataset"] = {{"path", e.dataset.path},
                    {"target", e.dataset.csv.target},
                    {"features", e.dataset.csv.features}};
  }
  j["learner"] = to_json(e.learner);
  j["init_xi"] = a.init_xi;
  j["max_rounds"] = a.max_rounds;
  j["stability_tol"] = a.stability_tol;
  j["delta_grid"] = a.delta_grid;
  j["rho_grid"] = a.rho_grid;
  j["region_rho"] = a.region_rho;
  j["xi_min"] = a.xi_min;
  j["xi_max"] = a.xi_max;
  j["xi_grid_size"] = a.xi_grid_size;
  j["min_pool"] = a.min_pool;
  j["standardize"] = a.standardize;
  j["reference"] = a.reference;
  j["kappa"] = {{"test_fraction", a.kappa.test_fraction}, {"pair_cap", a.kappa.pair_cap}};
  if (a.kappa.eta_override) j["kappa"]["eta_override"] = *a.kappa.eta_override;
  j["margin"] = {{"level_offsets", a.margin.level_offsets}, {"steps", a.margin.default_steps}};
  j["seed"] = e.seed;
  return j;
}

}  // namespace cqpc::config
