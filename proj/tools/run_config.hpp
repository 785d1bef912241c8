#pragma once

// Run configuration for the fkkam driver: a JSON document with the blocks
// "model", "numerics", "task" and "output". Every key has a default listed in
// default_document(); unknown blocks or keys are rejected.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "fkkam/fkkam.hpp"
#include "json.hpp"

namespace fkkam::cli {

using Json = nlohmann::json;

/// Malformed configuration: bad JSON, unknown or missing keys, wrong types.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ModelBlock {
  std::vector<double> omega;
  double tau = 1.0;
  int diophantine_cutoff = 200;
  std::vector<double> beta;
  double eta = 0.0;
  double mu = 1.0;
  Potential potential;
  double range_margin = 0.5;
  double range_rho = 0.0;
};

struct NumericsBlock {
  int grid_size = 64;
  double tol = 1e-12;
  int max_iter = 30;
  bool dealias = true;
  int oversampling = 2;
  double tail_warning = 1e-8;
  NondegeneracyThresholds thresholds;
  double series_growth_bound = 1e8;
  int threads = 0;
};

struct TaskBlock {
  int order = 3;
  double mu0 = 0.0;
  std::vector<double> mu_list;
  int continuation_steps = 1;
  int eta_count = 16;
  double iota = 0.01;
  std::optional<int> oracle_cutoff;
  int oracle_steps = 3;
  double oracle_tol = 1e-8;
};

struct OutputBlock {
  std::string directory = "out";
  bool csv = true;
  bool txt = true;
};

struct RunConfig {
  ModelBlock model;
  NumericsBlock numerics;
  TaskBlock task;
  OutputBlock output;
  Json resolved;  // merged document with defaults applied

  /// Model at the configured potential scale mu.
  ModelConfig model_config() const { return with_potential_scale(family(), model.mu); }

  /// Model with the unscaled potential; series and sweeps multiply it by mu.
  ModelConfig family() const {
    ModelConfig c;
    c.freq = diophantine_constant(model.omega, model.tau, model.diophantine_cutoff);
    c.beta = model.beta;
    c.eta = model.eta;
    c.potential = model.potential;
    c.range_margin = model.range_margin;
    c.range_rho = model.range_rho;
    c.oversampling = numerics.oversampling;
    check_model(c);
    return c;
  }

  KamOptions kam_options() const {
    KamOptions o;
    o.tol = numerics.tol;
    o.max_iter = numerics.max_iter;
    o.thresholds = numerics.thresholds;
    o.tail_warning = numerics.tail_warning;
    return o;
  }
};

/// Every accepted key with its default. null marks a key that is required
/// (omega, beta) or optional without a default value.
inline Json default_document() {
  return Json::parse(R"({
    "model": {
      "omega": null,
      "tau": 1.0,
      "diophantine_cutoff": 200,
      "beta": null,
      "eta": 0.0,
      "mu": 1.0,
      "potential_file": null,
      "potential_modes": [],
      "potential_strip": null,
      "range_margin": 0.5,
      "range_rho": 0.0
    },
    "numerics": {
      "grid_size": 64,
      "tol": 1e-12,
      "max_iter": 30,
      "dealias": true,
      "oversampling": 2,
      "tail_warning": 1e-8,
      "threshold_c_deviation": 0.5,
      "threshold_sigma": 0.5,
      "threshold_potential": 10.0,
      "threshold_v": 1.0,
      "threshold_transversality": 1e-6,
      "series_growth_bound": 1e8,
      "threads": 0
    },
    "task": {
      "order": 3,
      "mu0": 0.0,
      "mu_list": [0.001, 0.0017782794100389228, 0.0031622776601683794, 0.005623413251903491, 0.01],
      "continuation_steps": 1,
      "eta_count": 16,
      "iota": 0.01,
      "oracle_cutoff": null,
      "oracle_steps": 3,
      "oracle_tol": 1e-8
    },
    "output": {
      "directory": "out",
      "formats": ["csv", "txt"]
    }
  })");
}

namespace detail {

inline std::string key_path(const std::string& block, const std::string& key) { return block + "." + key; }

inline double get_number(const Json& j, const std::string& path) {
  if (!j.is_number()) throw ConfigError(path + " must be a number");
  const double x = j.get<double>();
  if (!std::isfinite(x)) throw ConfigError(path + " must be finite");
  return x;
}

inline int get_int(const Json& j, const std::string& path) {
  if (!j.is_number_integer()) throw ConfigError(path + " must be an integer");
  return j.get<int>();
}

inline bool get_bool(const Json& j, const std::string& path) {
  if (!j.is_boolean()) throw ConfigError(path + " must be true or false");
  return j.get<bool>();
}

inline std::string get_string(const Json& j, const std::string& path) {
  if (!j.is_string()) throw ConfigError(path + " must be a string");
  return j.get<std::string>();
}

inline std::vector<double> get_numbers(const Json& j, const std::string& path) {
  if (!j.is_array()) throw ConfigError(path + " must be an array of numbers");
  std::vector<double> out;
  for (const auto& x : j) out.push_back(get_number(x, path));
  return out;
}

inline Potential parse_inline_potential(const Json& modes, int dim_total, double strip) {
  if (!modes.is_array()) throw ConfigError("model.potential_modes must be an array");
  std::vector<PotentialMode> out;
  for (const auto& m : modes) {
    if (!m.is_object()) throw ConfigError("model.potential_modes entries must be objects {j, re, im}");
    for (const auto& [k, _] : m.items())
      if (k != "j" && k != "re" && k != "im") throw ConfigError("unknown key in model.potential_modes entry: " + k);
    if (!m.contains("j") || !m.contains("re")) throw ConfigError("model.potential_modes entry needs j and re");
    PotentialMode pm;
    if (!m["j"].is_array()) throw ConfigError("model.potential_modes j must be an integer array");
    for (const auto& x : m["j"]) pm.j.push_back(get_int(x, "model.potential_modes.j"));
    const double re = get_number(m["re"], "model.potential_modes.re");
    const double im = m.contains("im") ? get_number(m["im"], "model.potential_modes.im") : 0.0;
    pm.amplitude = Complex(re, im);
    out.push_back(std::move(pm));
  }
  if (out.empty()) return Potential();
  return Potential(dim_total, out, strip);
}

}  // namespace detail

/// Merges `doc` over the defaults, rejecting unknown blocks and keys.
inline Json merge_with_defaults(const Json& doc) {
  if (!doc.is_object()) throw ConfigError("configuration must be a JSON object");
  Json merged = default_document();
  for (const auto& [block, body] : doc.items()) {
    if (!merged.contains(block)) throw ConfigError("unknown block: " + block);
    if (!body.is_object()) throw ConfigError("block " + block + " must be an object");
    for (const auto& [key, value] : body.items()) {
      if (!merged[block].contains(key)) throw ConfigError("unknown key: " + detail::key_path(block, key));
      merged[block][key] = value;
    }
  }
  return merged;
}

/// Applies "block.key=value"; the value is parsed as JSON, else taken as a string.
inline void apply_override(Json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  const auto dot = assignment.find('.');
  if (eq == std::string::npos || dot == std::string::npos || dot > eq)
    throw ConfigError("override must look like block.key=value: " + assignment);
  const std::string block = assignment.substr(0, dot);
  const std::string key = assignment.substr(dot + 1, eq - dot - 1);
  const std::string text = assignment.substr(eq + 1);
  const Json defaults = default_document();
  if (!defaults.contains(block) || !defaults[block].contains(key))
    throw ConfigError("unknown key: " + detail::key_path(block, key));
  Json value = Json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;
  if (!doc.contains(block)) doc[block] = Json::object();
  doc[block][key] = value;
}

/// Builds the typed configuration. Relative potential files resolve against `base_dir`.
inline RunConfig build_config(const Json& doc, const std::filesystem::path& base_dir = {}) {
  using detail::get_bool;
  using detail::get_int;
  using detail::get_number;
  using detail::get_numbers;
  using detail::get_string;
  RunConfig rc;
  rc.resolved = merge_with_defaults(doc);
  const Json& m = rc.resolved["model"];
  const Json& n = rc.resolved["numerics"];
  const Json& t = rc.resolved["task"];
  const Json& o = rc.resolved["output"];

  if (m["omega"].is_null()) throw ConfigError("missing required key: model.omega");
  if (m["beta"].is_null()) throw ConfigError("missing required key: model.beta");
  rc.model.omega = get_numbers(m["omega"], "model.omega");
  rc.model.beta = get_numbers(m["beta"], "model.beta");
  if (rc.model.omega.empty() || rc.model.omega.size() > 3) throw ConfigError("model.omega must have 1 to 3 entries");
  if (rc.model.beta.size() != rc.model.omega.size() + 1)
    throw ConfigError("model.beta must have one more entry than model.omega");
  rc.model.tau = get_number(m["tau"], "model.tau");
  rc.model.diophantine_cutoff = get_int(m["diophantine_cutoff"], "model.diophantine_cutoff");
  rc.model.eta = get_number(m["eta"], "model.eta");
  rc.model.mu = get_number(m["mu"], "model.mu");
  rc.model.range_margin = get_number(m["range_margin"], "model.range_margin");
  rc.model.range_rho = get_number(m["range_rho"], "model.range_rho");
  const double strip = m["potential_strip"].is_null() ? std::numeric_limits<double>::infinity()
                                                      : get_number(m["potential_strip"], "model.potential_strip");
  const int dim_total = static_cast<int>(rc.model.beta.size());
  const bool has_inline = !m["potential_modes"].is_array() || !m["potential_modes"].empty();
  if (!m["potential_file"].is_null()) {
    if (has_inline) throw ConfigError("give either model.potential_file or model.potential_modes, not both");
    std::filesystem::path path = get_string(m["potential_file"], "model.potential_file");
    if (path.is_relative() && !base_dir.empty()) path = base_dir / path;
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open potential file " + path.string());
    rc.model.potential = read_potential(in, strip);
    if (!rc.model.potential.is_zero() && rc.model.potential.dim_total() != dim_total)
      throw ConfigError("potential file dimension differs from the length of model.beta");
  } else {
    rc.model.potential = detail::parse_inline_potential(m["potential_modes"], dim_total, strip);
  }

  rc.numerics.grid_size = get_int(n["grid_size"], "numerics.grid_size");
  if (rc.numerics.grid_size < 4 || rc.numerics.grid_size % 2 != 0)
    throw ConfigError("numerics.grid_size must be an even integer >= 4");
  rc.numerics.tol = get_number(n["tol"], "numerics.tol");
  rc.numerics.max_iter = get_int(n["max_iter"], "numerics.max_iter");
  rc.numerics.dealias = get_bool(n["dealias"], "numerics.dealias");
  if (!rc.numerics.dealias) throw ConfigError("numerics.dealias=false is not supported; products are always dealiased");
  rc.numerics.oversampling = get_int(n["oversampling"], "numerics.oversampling");
  rc.numerics.tail_warning = get_number(n["tail_warning"], "numerics.tail_warning");
  rc.numerics.thresholds.c_deviation = get_number(n["threshold_c_deviation"], "numerics.threshold_c_deviation");
  rc.numerics.thresholds.sigma = get_number(n["threshold_sigma"], "numerics.threshold_sigma");
  rc.numerics.thresholds.potential = get_number(n["threshold_potential"], "numerics.threshold_potential");
  rc.numerics.thresholds.v = get_number(n["threshold_v"], "numerics.threshold_v");
  rc.numerics.thresholds.transversality =
      get_number(n["threshold_transversality"], "numerics.threshold_transversality");
  rc.numerics.series_growth_bound = get_number(n["series_growth_bound"], "numerics.series_growth_bound");
  rc.numerics.threads = get_int(n["threads"], "numerics.threads");

  rc.task.order = get_int(t["order"], "task.order");
  if (rc.task.order < 0) throw ConfigError("task.order must be nonnegative");
  rc.task.mu0 = get_number(t["mu0"], "task.mu0");
  rc.task.mu_list = get_numbers(t["mu_list"], "task.mu_list");
  rc.task.continuation_steps = get_int(t["continuation_steps"], "task.continuation_steps");
  if (rc.task.continuation_steps < 1) throw ConfigError("task.continuation_steps must be >= 1");
  rc.task.eta_count = get_int(t["eta_count"], "task.eta_count");
  if (rc.task.eta_count < 1) throw ConfigError("task.eta_count must be >= 1");
  rc.task.iota = get_number(t["iota"], "task.iota");
  if (!t["oracle_cutoff"].is_null()) rc.task.oracle_cutoff = get_int(t["oracle_cutoff"], "task.oracle_cutoff");
  rc.task.oracle_steps = get_int(t["oracle_steps"], "task.oracle_steps");
  rc.task.oracle_tol = get_number(t["oracle_tol"], "task.oracle_tol");

  rc.output.directory = get_string(o["directory"], "output.directory");
  if (!o["formats"].is_array()) throw ConfigError("output.formats must be an array");
  rc.output.csv = rc.output.txt = false;
  for (const auto& f : o["formats"]) {
    const std::string s = get_string(f, "output.formats");
    if (s == "csv") rc.output.csv = true;
    else if (s == "txt") rc.output.txt = true;
    else throw ConfigError("unknown output format: " + s);
  }
  return rc;
}

inline Json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  Json doc = Json::parse(in, nullptr, false, true);
  if (doc.is_discarded()) throw ConfigError("config file is not valid JSON: " + path.string());
  return doc;
}

}  // namespace fkkam::cli
