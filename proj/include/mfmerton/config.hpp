#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "mfmerton/delay_sde.hpp"
#include "mfmerton/errors.hpp"
#include "mfmerton/kernel.hpp"
#include "mfmerton/model_params.hpp"
#include "mfmerton/verify.hpp"

namespace mfmerton {

struct PolicyConfig {
  std::string type = "optimal";  // optimal | scaled | zero_consumption
  double consumption_scale = 1.0;
  double bequest_scale = 1.0;

  PolicySpec spec() const {
    if (type == "optimal") return PolicySpec::optimal();
    if (type == "zero_consumption") return PolicySpec::zero_consumption();
    return PolicySpec::scaled(consumption_scale, bequest_scale);
  }
};

struct RunConfig {
  MarketParams market;
  LaborParams labor;
  double w0 = 0.0;
  SimConfig sim;
  PolicyConfig policy;
  VerifySettings verify;
};

namespace config_detail {

using nlohmann::json;

struct Position {
  std::size_t line = 1;
  std::size_t column = 1;
};

inline Position position_of(const std::string& text, std::size_t offset) {
  Position p;
  for (std::size_t i = 0; i < offset && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++p.line;
      p.column = 1;
    } else {
      ++p.column;
    }
  }
  return p;
}

// Best-effort source location of a field: each key of the path is searched after the previous one.
inline std::string locate(const std::string& text, const std::vector<std::string>& path) {
  std::size_t at = 0;
  for (const auto& key : path) {
    const std::size_t hit = text.find('"' + key + '"', at);
    if (hit == std::string::npos) break;
    at = hit;
  }
  const Position p = position_of(text, at);
  return "line " + std::to_string(p.line) + ", column " + std::to_string(p.column);
}

class Reader {
 public:
  Reader(const json& node, std::vector<std::string> path, const std::string& text)
      : node_(node), path_(std::move(path)), text_(text) {
    if (!node_.is_object()) error("expected an object");
  }

  [[noreturn]] void error(const std::string& what, const std::string& key = "") const {
    std::vector<std::string> p = path_;
    if (!key.empty()) p.push_back(key);
    std::string ptr;
    for (const auto& s : p) ptr += "/" + s;
    if (ptr.empty()) ptr = "/";
    fail(ErrorKind::ConfigError, "config field " + ptr + " (" + locate(text_, p) + "): " + what);
  }

  bool has(const std::string& key) const { return node_.contains(key); }

  const json& raw(const std::string& key) {
    seen_.insert(key);
    if (!node_.contains(key)) error("missing required field", key);
    return node_.at(key);
  }

  double number(const std::string& key) {
    const json& v = raw(key);
    if (!v.is_number()) error("expected a number", key);
    return v.get<double>();
  }
  double number(const std::string& key, double fallback) { return has(key) ? number(key) : (seen_.insert(key), fallback); }

  std::uint64_t unsigned_int(const std::string& key) {
    const json& v = raw(key);
    if (!v.is_number_unsigned()) error("expected a nonnegative integer", key);
    return v.get<std::uint64_t>();
  }
  std::uint64_t unsigned_int(const std::string& key, std::uint64_t fallback) {
    return has(key) ? unsigned_int(key) : (seen_.insert(key), fallback);
  }

  std::string string(const std::string& key) {
    const json& v = raw(key);
    if (!v.is_string()) error("expected a string", key);
    return v.get<std::string>();
  }
  std::string string(const std::string& key, const std::string& fallback) {
    return has(key) ? string(key) : (seen_.insert(key), fallback);
  }

  std::vector<double> numbers(const std::string& key) {
    const json& v = raw(key);
    if (!v.is_array()) error("expected an array of numbers", key);
    std::vector<double> out;
    for (const auto& x : v) {
      if (!x.is_number()) error("expected an array of numbers", key);
      out.push_back(x.get<double>());
    }
    return out;
  }

  std::vector<std::uint64_t> unsigned_list(const std::string& key) {
    const json& v = raw(key);
    if (!v.is_array()) error("expected an array of nonnegative integers", key);
    std::vector<std::uint64_t> out;
    for (const auto& x : v) {
      if (!x.is_number_unsigned()) error("expected an array of nonnegative integers", key);
      out.push_back(x.get<std::uint64_t>());
    }
    return out;
  }

  Eigen::MatrixXd matrix(const std::string& key) {
    const json& v = raw(key);
    if (!v.is_array() || v.empty()) error("expected a nonempty array of rows", key);
    const std::size_t rows = v.size();
    std::size_t cols = 0;
    for (const auto& row : v) {
      if (!row.is_array() || row.empty()) error("expected a nonempty array of rows", key);
      if (cols == 0) cols = row.size();
      if (row.size() != cols) error("rows have different lengths", key);
    }
    Eigen::MatrixXd m(rows, cols);
    for (std::size_t i = 0; i < rows; ++i) {
      for (std::size_t j = 0; j < cols; ++j) {
        if (!v[i][j].is_number()) error("matrix entries must be numbers", key);
        m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = v[i][j].get<double>();
      }
    }
    return m;
  }

  Reader child(const std::string& key) {
    const json& v = raw(key);
    std::vector<std::string> p = path_;
    p.push_back(key);
    return Reader(v, p, text_);
  }

  void finish() const {
    for (auto it = node_.begin(); it != node_.end(); ++it) {
      if (!seen_.count(it.key())) error("unknown key", it.key());
    }
  }

 private:
  const json& node_;
  std::vector<std::string> path_;
  const std::string& text_;
  std::set<std::string> seen_;
};

inline Eigen::VectorXd to_vector(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

inline KernelSpec read_kernel(Reader r, double d) {
  const std::string variant = r.string("variant");
  KernelSpec k;
  if (variant == "zero") {
    k = KernelSpec::zero(d);
  } else if (variant == "constant") {
    k = KernelSpec::constant(d, r.number("c"));
  } else if (variant == "exponential") {
    k = KernelSpec::exponential(d, r.number("c"), r.number("a"));
  } else if (variant == "grid") {
    k = KernelSpec::grid(d, r.numbers("values"));
  } else {
    r.error("unknown kernel variant '" + variant + "'", "variant");
  }
  r.finish();
  return k;
}

inline InitialPath read_initial_path(Reader r) {
  const std::string variant = r.string("variant");
  InitialPath p;
  if (variant == "constant") {
    p = InitialPath::constant(r.number("value"));
  } else if (variant == "exponential") {
    p = InitialPath::exponential(r.number("level"), r.number("rate"));
  } else if (variant == "samples") {
    p = InitialPath::samples(r.numbers("values"));
  } else {
    r.error("unknown initial path variant '" + variant + "'", "variant");
  }
  r.finish();
  return p;
}

inline VerifySettings read_verify(Reader r) {
  VerifySettings s;
  s.perturbation = r.number("perturbation", s.perturbation);
  s.hc_paths = r.unsigned_int("hc_paths", s.hc_paths);
  s.hc_dt = r.number("hc_dt", s.hc_dt);
  s.fi_paths = r.unsigned_int("fi_paths", s.fi_paths);
  s.fi_dt = r.number("fi_dt", s.fi_dt);
  s.fi_horizon = r.number("fi_horizon", s.fi_horizon);
  s.boundary_paths = r.unsigned_int("boundary_paths", s.boundary_paths);
  s.boundary_dt = r.number("boundary_dt", s.boundary_dt);
  s.boundary_horizon = r.number("boundary_horizon", s.boundary_horizon);
  s.super_paths = r.unsigned_int("super_paths", s.super_paths);
  s.super_dt = r.number("super_dt", s.super_dt);
  if (r.has("super_horizons")) s.super_horizons = r.numbers("super_horizons");
  if (r.has("n_list")) {
    s.n_list.clear();
    for (auto n : r.unsigned_list("n_list")) s.n_list.push_back(static_cast<std::size_t>(n));
  }
  s.replicates = r.unsigned_int("replicates", s.replicates);
  s.chaos_dt = r.number("chaos_dt", s.chaos_dt);
  s.chaos_horizon = r.number("chaos_horizon", s.chaos_horizon);
  s.mean_field_paths = r.unsigned_int("mean_field_paths", s.mean_field_paths);
  s.mean_field_dt = r.number("mean_field_dt", s.mean_field_dt);
  s.mean_field_horizon = r.number("mean_field_horizon", s.mean_field_horizon);
  s.gamma_star_paths = r.unsigned_int("gamma_star_paths", s.gamma_star_paths);
  s.gamma_star_dt = r.number("gamma_star_dt", s.gamma_star_dt);
  s.gamma_star_horizon = r.number("gamma_star_horizon", s.gamma_star_horizon);
  s.draws = r.unsigned_int("draws", s.draws);
  s.states = r.unsigned_int("states", s.states);
  r.finish();
  return s;
}

}  // namespace config_detail

// Parses and validates a configuration document. Every failure is an Error of kind ConfigError.
inline RunConfig parse_config(const std::string& text) {
  using config_detail::json;
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    const auto p = config_detail::position_of(text, e.byte == 0 ? 0 : e.byte - 1);
    fail(ErrorKind::ConfigError, "malformed JSON at line " + std::to_string(p.line) + ", column " +
                                     std::to_string(p.column) + ": " + e.what());
  }
  config_detail::Reader root(doc, {}, text);
  RunConfig cfg;

  auto market = root.child("market");
  cfg.market.r = market.number("r");
  cfg.market.mu = config_detail::to_vector(market.numbers("mu"));
  cfg.market.sigma = market.matrix("sigma");
  cfg.market.delta = market.number("delta");
  cfg.market.rho = market.number("rho");
  cfg.market.gamma = market.number("gamma");
  cfg.market.k = market.number("k");
  market.finish();

  auto labor = root.child("labor");
  cfg.labor.epsilon = labor.number("epsilon");
  cfg.labor.mu_y = labor.number("mu_y");
  cfg.labor.sigma_y = config_detail::to_vector(labor.numbers("sigma_y"));
  cfg.labor.d = labor.number("d");
  cfg.labor.kernel = config_detail::read_kernel(labor.child("kernel"), cfg.labor.d);
  cfg.labor.x0 = labor.number("x0");
  cfg.labor.x1 = config_detail::read_initial_path(labor.child("x1"));
  labor.finish();

  if (root.has("state")) {
    auto state = root.child("state");
    cfg.w0 = state.number("w");
    state.finish();
  }

  if (root.has("sim")) {
    auto sim = root.child("sim");
    cfg.sim.dt = sim.number("dt", cfg.sim.dt);
    cfg.sim.horizon = sim.number("horizon", cfg.sim.horizon);
    cfg.sim.n_paths = sim.unsigned_int("n_paths", cfg.sim.n_paths);
    cfg.sim.seed = sim.unsigned_int("seed", cfg.sim.seed);
    const std::string scheme = sim.string("scheme", "euler_maruyama");
    if (scheme != "euler_maruyama") sim.error("only 'euler_maruyama' is supported", "scheme");
    cfg.sim.threads = static_cast<unsigned>(sim.unsigned_int("threads", cfg.sim.threads));
    cfg.sim.checkpoints = sim.unsigned_int("checkpoints", cfg.sim.checkpoints);
    sim.finish();
  }

  if (root.has("policy")) {
    auto pol = root.child("policy");
    cfg.policy.type = pol.string("type", cfg.policy.type);
    if (cfg.policy.type != "optimal" && cfg.policy.type != "scaled" && cfg.policy.type != "zero_consumption") {
      pol.error("expected 'optimal', 'scaled' or 'zero_consumption'", "type");
    }
    cfg.policy.consumption_scale = pol.number("consumption_scale", cfg.policy.consumption_scale);
    cfg.policy.bequest_scale = pol.number("bequest_scale", cfg.policy.bequest_scale);
    if (cfg.policy.consumption_scale < 0.0 || cfg.policy.bequest_scale < 0.0) {
      pol.error("scales must be nonnegative");
    }
    pol.finish();
  }

  if (root.has("verify")) cfg.verify = config_detail::read_verify(root.child("verify"));
  root.finish();

  cfg.verify.seed = cfg.sim.seed;
  cfg.verify.threads = cfg.sim.threads;
  cfg.verify.w0 = cfg.w0;

  try {
    cfg.market.validate();
    cfg.labor.validate(cfg.market.n_assets());
    cfg.sim.validate(cfg.labor.d);
  } catch (const Error& e) {
    fail(ErrorKind::ConfigError, std::string("invalid parameters: ") + e.what());
  }
  return cfg;
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::ConfigError, "cannot open config file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

}  // namespace mfmerton
