#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "mfmerton/closed_form.hpp"
#include "mfmerton/errors.hpp"
#include "mfmerton/kernel.hpp"
#include "mfmerton/model_params.hpp"
#include "mfmerton/parallel.hpp"
#include "mfmerton/rng.hpp"
#include "mfmerton/stats.hpp"

namespace mfmerton {

enum class Scheme { EulerMaruyama };

struct SimConfig {
  double dt = 1e-2;
  double horizon = 1.0;
  std::size_t n_paths = 1000;
  std::uint64_t seed = 0;
  Scheme scheme = Scheme::EulerMaruyama;
  unsigned threads = 0;  // 0: hardware concurrency
  std::size_t checkpoints = 10;
  int substeps = 1;  // Gaussian draws summed per increment

  std::size_t steps() const {
    if (!(dt > 0.0) || !std::isfinite(dt)) fail(ErrorKind::InvalidArgument, "dt must be positive");
    if (!(horizon >= 0.0) || !std::isfinite(horizon)) fail(ErrorKind::InvalidArgument, "horizon must be nonnegative");
    const double ratio = horizon / dt;
    const double rounded = std::round(ratio);
    if (std::abs(ratio - rounded) > 1e-9 * std::max(1.0, ratio)) {
      fail(ErrorKind::MeshMismatch, "horizon is not an integer number of steps");
    }
    return static_cast<std::size_t>(rounded);
  }

  TimeMesh mesh(double d) const { return TimeMesh::uniform(d, dt); }

  void validate(double d) const {
    steps();
    mesh(d);
    if (n_paths == 0) fail(ErrorKind::InvalidArgument, "n_paths must be positive");
    if (substeps < 1) fail(ErrorKind::InvalidArgument, "substeps must be at least 1");
    if (checkpoints == 0) fail(ErrorKind::InvalidArgument, "checkpoints must be positive");
  }

  // Step indices of the recorded checkpoints, including 0 and the final step.
  std::vector<std::size_t> checkpoint_steps() const {
    const std::size_t n = steps();
    std::vector<std::size_t> out;
    for (std::size_t c = 0; c <= checkpoints; ++c) {
      const auto k = static_cast<std::size_t>(std::llround(static_cast<double>(c) * static_cast<double>(n) /
                                                           static_cast<double>(checkpoints)));
      if (out.empty() || out.back() != k) out.push_back(k);
    }
    return out;
  }
};

// Ring buffer holding a path on [t - d, t]: at(0) is the oldest sample, at(cells()) the current one.
class DelayBuffer {
 public:
  DelayBuffer() = default;
  DelayBuffer(const std::vector<double>& history, double current)
      : data_(history.size() + 1), cells_(history.size()) {
    std::copy(history.begin(), history.end(), data_.begin());
    data_.back() = current;
  }

  std::size_t cells() const { return cells_; }
  std::size_t size() const { return data_.size(); }

  double at(std::size_t j) const {
    std::size_t idx = head_ + j;
    if (idx >= data_.size()) idx -= data_.size();
    return data_[idx];
  }

  double current() const { return at(cells_); }

  void push(double v) {
    data_[head_] = v;
    head_ = head_ + 1 == data_.size() ? 0 : head_ + 1;
  }

 private:
  std::vector<double> data_;
  std::size_t cells_ = 0;
  std::size_t head_ = 0;
};

// Left-endpoint cell sum sum_j Phi_j x(t + s_j) with exact cell integrals Phi_j of the kernel.
class ConvolutionPlan {
 public:
  enum class Kind { None, Pieces, Geometric };

  ConvolutionPlan(const KernelSpec& k, const TimeMesh& mesh) : cells_(mesh.cells()) {
    weights_ = cell_integrals(k, mesh);
    if (k.is_zero()) {
      kind_ = Kind::None;
    } else if (const auto* e = std::get_if<KernelSpec::Exponential>(&k.shape)) {
      kind_ = Kind::Geometric;
      ratio_ = std::exp(-e->a * mesh.step());
    } else {
      if (!aligned_with(k, mesh)) {
        fail(ErrorKind::MeshMismatch, "kernel grid of " + std::to_string(k.pieces()) +
                                          " cells does not align with a mesh of " + std::to_string(mesh.cells()));
      }
      kind_ = Kind::Pieces;
      pieces_ = k.pieces();
      per_piece_ = cells_ / pieces_;
      for (std::size_t c = 0; c < pieces_; ++c) piece_weight_.push_back(weights_[c * per_piece_]);
    }
  }

  Kind kind() const { return kind_; }
  std::size_t cells() const { return cells_; }
  const std::vector<double>& weights() const { return weights_; }

 private:
  friend class DelayLine;
  Kind kind_ = Kind::None;
  std::size_t cells_;
  std::vector<double> weights_;
  double ratio_ = 1.0;
  std::size_t pieces_ = 0;
  std::size_t per_piece_ = 0;
  std::vector<double> piece_weight_;
};

// A delayed path together with its running convolution, updated in O(pieces) per step
// and recomputed exactly once per delay window.
class DelayLine {
 public:
  DelayLine(const ConvolutionPlan& plan, const std::vector<double>& history, double current)
      : plan_(&plan), buf_(history, current), sums_(plan.pieces_, 0.0) {
    if (history.size() != plan.cells_) fail(ErrorKind::MeshMismatch, "history length differs from the mesh");
    recompute();
  }

  double convolution() const { return conv_; }
  double current() const { return buf_.current(); }
  const DelayBuffer& buffer() const { return buf_; }

  void push(double v) {
    advance();
    buf_.push(v);
    if (++since_ >= plan_->cells_) recompute();
  }

 private:
  void recompute() {
    since_ = 0;
    const ConvolutionPlan& p = *plan_;
    if (p.kind_ == ConvolutionPlan::Kind::None) {
      conv_ = 0.0;
    } else if (p.kind_ == ConvolutionPlan::Kind::Geometric) {
      double s = 0.0;
      for (std::size_t j = 0; j < p.cells_; ++j) s += p.weights_[j] * buf_.at(j);
      conv_ = s;
    } else {
      for (std::size_t c = 0; c < p.pieces_; ++c) {
        double s = 0.0;
        for (std::size_t j = c * p.per_piece_; j < (c + 1) * p.per_piece_; ++j) s += buf_.at(j);
        sums_[c] = s;
      }
      pieces_sum();
    }
  }

  // Shift the window by one sample; called before the new sample is pushed.
  void advance() {
    const ConvolutionPlan& p = *plan_;
    if (p.kind_ == ConvolutionPlan::Kind::Geometric) {
      conv_ = p.ratio_ * (conv_ - p.weights_.front() * buf_.at(0)) + p.weights_.back() * buf_.at(p.cells_);
    } else if (p.kind_ == ConvolutionPlan::Kind::Pieces) {
      for (std::size_t c = 0; c < p.pieces_; ++c) {
        sums_[c] += buf_.at((c + 1) * p.per_piece_) - buf_.at(c * p.per_piece_);
      }
      pieces_sum();
    }
  }

  void pieces_sum() {
    double s = 0.0;
    for (std::size_t c = 0; c < plan_->pieces_; ++c) s += plan_->piece_weight_[c] * sums_[c];
    conv_ = s;
  }

  const ConvolutionPlan* plan_;
  DelayBuffer buf_;
  std::vector<double> sums_;
  double conv_ = 0.0;
  std::size_t since_ = 0;
};

// Deterministic mean path on [-d, T]; values[cells + k] = e(t_k).
struct MeanPath {
  double dt = 0.0;
  std::size_t cells = 0;
  std::vector<double> values;

  std::size_t steps() const { return values.size() - cells - 1; }
  double at(std::size_t k) const { return values[cells + k]; }
  // Cell j of the window [t_k - d, t_k).
  double history(std::size_t k, std::size_t j) const { return values[k + j]; }
};

inline MeanPath solve_mean_ode(const LaborParams& l, const SimConfig& cfg) {
  const TimeMesh mesh = cfg.mesh(l.d);
  const ConvolutionPlan plan(l.kernel, mesh);
  const std::vector<double> hist = l.x1.cell_averages(mesh);
  DelayLine line(plan, hist, l.x0);
  const std::size_t n = cfg.steps();
  MeanPath out;
  out.dt = cfg.dt;
  out.cells = mesh.cells();
  out.values = hist;
  out.values.reserve(hist.size() + n + 1);
  out.values.push_back(l.x0);
  for (std::size_t k = 0; k < n; ++k) {
    const double e = line.current();
    const double next = e + (l.mu_y * e + line.convolution()) * cfg.dt;
    line.push(next);
    out.values.push_back(next);
  }
  return out;
}

// One Euler-Maruyama step of the benchmarked income equation driven by a given reference level.
class IncomeStepper {
 public:
  IncomeStepper(const ConvolutionPlan& plan, const LaborParams& l, const std::vector<double>& history)
      : IncomeStepper(plan, l, history, l.x0) {}
  IncomeStepper(const ConvolutionPlan& plan, const LaborParams& l, const std::vector<double>& history, double current)
      : line_(plan, history, current), eps_(l.epsilon), mu_(l.mu_y) {}

  double y() const { return line_.current(); }
  double convolution() const { return line_.convolution(); }
  const DelayBuffer& buffer() const { return line_.buffer(); }

  // sz = sigma_y . dZ
  void step(double reference, double sz, double dt, double mu_y) {
    const double y = line_.current();
    const double next = y + (eps_ * (y - reference) + mu_y * y + line_.convolution()) * dt + y * sz;
    line_.push(next);
  }
  void step(double reference, double sz, double dt) { step(reference, sz, dt, mu_); }

 private:
  DelayLine line_;
  double eps_;
  double mu_;
};

struct IncomePaths {
  MeanPath mean;
  std::vector<std::size_t> steps;
  std::vector<double> times;
  std::size_t n_paths = 0;
  std::vector<double> y;                   // [checkpoint * n_paths + path]
  std::vector<std::uint8_t> nonpositive;  // path reached y <= 0 at some step

  double at(std::size_t c, std::size_t p) const { return y[c * n_paths + p]; }
};

namespace detail {

inline std::vector<double> checkpoint_times(const std::vector<std::size_t>& steps, double dt) {
  std::vector<double> t(steps.size());
  for (std::size_t i = 0; i < steps.size(); ++i) t[i] = static_cast<double>(steps[i]) * dt;
  return t;
}

inline PathNoise market_noise(const SimConfig& cfg, std::size_t path, int dim) {
  return PathNoise(cfg.seed, StreamDomain::Market, path, 0, dim, cfg.dt, cfg.substeps);
}

}  // namespace detail

inline IncomePaths simulate_income(const MarketParams& m, const LaborParams& l, const SimConfig& cfg) {
  cfg.validate(l.d);
  const TimeMesh mesh = cfg.mesh(l.d);
  const ConvolutionPlan plan(l.kernel, mesh);
  const std::vector<double> hist = l.x1.cell_averages(mesh);
  const int dim = static_cast<int>(m.n_assets());
  const std::size_t n = cfg.steps();

  IncomePaths out;
  out.mean = solve_mean_ode(l, cfg);
  out.steps = cfg.checkpoint_steps();
  out.times = detail::checkpoint_times(out.steps, cfg.dt);
  out.n_paths = cfg.n_paths;
  out.y.assign(out.steps.size() * cfg.n_paths, 0.0);
  out.nonpositive.assign(cfg.n_paths, 0);

  parallel_for(cfg.n_paths, cfg.threads, [&](std::size_t begin, std::size_t end) {
    Eigen::VectorXd dz(dim);
    for (std::size_t p = begin; p < end; ++p) {
      PathNoise noise = detail::market_noise(cfg, p, dim);
      IncomeStepper inc(plan, l, hist);
      std::size_t c = 0;
      for (std::size_t k = 0;; ++k) {
        if (c < out.steps.size() && out.steps[c] == k) out.y[c++ * cfg.n_paths + p] = inc.y();
        if (k == n) break;
        noise.draw(dz.data());
        inc.step(out.mean.at(k), l.sigma_y.dot(dz), cfg.dt);
        if (!(inc.y() > 0.0)) out.nonpositive[p] = 1;
      }
    }
  });
  return out;
}

struct CheckpointPaths {
  std::vector<std::size_t> steps;
  std::vector<double> times;
  std::size_t n_paths = 0;
  std::vector<double> values;  // [checkpoint * n_paths + path]

  double at(std::size_t c, std::size_t p) const { return values[c * n_paths + p]; }
};

// xi(0) = 1, d xi = -xi (r + delta) dt - xi kappa . dZ, stepped exactly in log space on the market streams.
inline CheckpointPaths simulate_state_price(const MarketParams& m, const SimConfig& cfg) {
  const Eigen::VectorXd kappa = market_price_of_risk(m);
  const int dim = static_cast<int>(m.n_assets());
  const std::size_t n = cfg.steps();
  const double drift = -(m.discount() + 0.5 * kappa.squaredNorm()) * cfg.dt;
  CheckpointPaths out;
  out.steps = cfg.checkpoint_steps();
  out.times = detail::checkpoint_times(out.steps, cfg.dt);
  out.n_paths = cfg.n_paths;
  out.values.assign(out.steps.size() * cfg.n_paths, 0.0);
  parallel_for(cfg.n_paths, cfg.threads, [&](std::size_t begin, std::size_t end) {
    Eigen::VectorXd dz(dim);
    for (std::size_t p = begin; p < end; ++p) {
      PathNoise noise = detail::market_noise(cfg, p, dim);
      double lx = 0.0;
      std::size_t c = 0;
      for (std::size_t k = 0;; ++k) {
        if (c < out.steps.size() && out.steps[c] == k) out.values[c++ * cfg.n_paths + p] = std::exp(lx);
        if (k == n) break;
        noise.draw(dz.data());
        lx += drift - kappa.dot(dz);
      }
    }
  });
  return out;
}

// Gamma* under the feedback map: geometric with drift a and volatility kappa / gamma, exact log steps.
inline CheckpointPaths simulate_gamma_star(const DerivedConstants& dc, double gamma0, const SimConfig& cfg) {
  if (gamma0 < 0.0) fail(ErrorKind::OutsideConstraintSet, "Gamma(0) < 0");
  const int dim = static_cast<int>(dc.kappa.size());
  const std::size_t n = cfg.steps();
  const Eigen::VectorXd vol = dc.kappa / dc.gamma();
  const double drift = (gamma_star_drift(dc) - 0.5 * vol.squaredNorm()) * cfg.dt;
  CheckpointPaths out;
  out.steps = cfg.checkpoint_steps();
  out.times = detail::checkpoint_times(out.steps, cfg.dt);
  out.n_paths = cfg.n_paths;
  out.values.assign(out.steps.size() * cfg.n_paths, 0.0);
  if (gamma0 == 0.0) return out;
  const double l0 = std::log(gamma0);
  parallel_for(cfg.n_paths, cfg.threads, [&](std::size_t begin, std::size_t end) {
    Eigen::VectorXd dz(dim);
    for (std::size_t p = begin; p < end; ++p) {
      PathNoise noise = detail::market_noise(cfg, p, dim);
      double lg = l0;
      std::size_t c = 0;
      for (std::size_t k = 0;; ++k) {
        if (c < out.steps.size() && out.steps[c] == k) out.values[c++ * cfg.n_paths + p] = std::exp(lg);
        if (k == n) break;
        noise.draw(dz.data());
        lg += drift + vol.dot(dz);
      }
    }
  });
  return out;
}

// Per-path trapezoid estimate of int_0^T xi(u) y(u) du on common noise.
inline std::vector<double> simulate_discounted_income(const MarketParams& m, const LaborParams& l,
                                                      const SimConfig& cfg) {
  cfg.validate(l.d);
  const TimeMesh mesh = cfg.mesh(l.d);
  const ConvolutionPlan plan(l.kernel, mesh);
  const std::vector<double> hist = l.x1.cell_averages(mesh);
  const MeanPath mean = solve_mean_ode(l, cfg);
  const Eigen::VectorXd kappa = market_price_of_risk(m);
  const int dim = static_cast<int>(m.n_assets());
  const std::size_t n = cfg.steps();
  const double drift = -(m.discount() + 0.5 * kappa.squaredNorm()) * cfg.dt;
  std::vector<double> out(cfg.n_paths, 0.0);
  parallel_for(cfg.n_paths, cfg.threads, [&](std::size_t begin, std::size_t end) {
    Eigen::VectorXd dz(dim);
    for (std::size_t p = begin; p < end; ++p) {
      PathNoise noise = detail::market_noise(cfg, p, dim);
      IncomeStepper inc(plan, l, hist);
      double lx = 0.0;
      double prev = inc.y();
      double acc = 0.0;
      for (std::size_t k = 0; k < n; ++k) {
        noise.draw(dz.data());
        inc.step(mean.at(k), l.sigma_y.dot(dz), cfg.dt);
        lx += drift - kappa.dot(dz);
        const double cur = std::exp(lx) * inc.y();
        acc += 0.5 * (prev + cur);
        prev = cur;
      }
      out[p] = acc * cfg.dt;
    }
  });
  return out;
}

struct DiscountedIncomeLevels {
  std::vector<double> fine;    // step dt
  std::vector<double> coarse;  // step 2 dt, increments summed from consecutive fine increments
};

// Two Euler levels of int_0^T xi(u) y(u) du driven by the same Brownian path.
inline DiscountedIncomeLevels simulate_discounted_income_levels(const MarketParams& m, const LaborParams& l,
                                                                const SimConfig& cfg) {
  SimConfig coarse_cfg = cfg;
  coarse_cfg.dt = 2.0 * cfg.dt;
  cfg.validate(l.d);
  coarse_cfg.validate(l.d);
  const TimeMesh mesh_f = cfg.mesh(l.d), mesh_c = coarse_cfg.mesh(l.d);
  const ConvolutionPlan plan_f(l.kernel, mesh_f), plan_c(l.kernel, mesh_c);
  const std::vector<double> hist_f = l.x1.cell_averages(mesh_f), hist_c = l.x1.cell_averages(mesh_c);
  const MeanPath mean_f = solve_mean_ode(l, cfg), mean_c = solve_mean_ode(l, coarse_cfg);
  const Eigen::VectorXd kappa = market_price_of_risk(m);
  const int dim = static_cast<int>(m.n_assets());
  const std::size_t n = coarse_cfg.steps();
  const double drift_f = -(m.discount() + 0.5 * kappa.squaredNorm()) * cfg.dt;
  DiscountedIncomeLevels out;
  out.fine.assign(cfg.n_paths, 0.0);
  out.coarse.assign(cfg.n_paths, 0.0);
  parallel_for(cfg.n_paths, cfg.threads, [&](std::size_t begin, std::size_t end) {
    Eigen::VectorXd dz1(dim), dz2(dim), dzc(dim);
    for (std::size_t p = begin; p < end; ++p) {
      PathNoise noise = detail::market_noise(cfg, p, dim);
      IncomeStepper fine(plan_f, l, hist_f), coarse(plan_c, l, hist_c);
      double lx = 0.0;
      double prev_f = fine.y(), prev_c = coarse.y();
      double acc_f = 0.0, acc_c = 0.0;
      for (std::size_t k = 0; k < n; ++k) {
        noise.draw(dz1.data());
        noise.draw(dz2.data());
        fine.step(mean_f.at(2 * k), l.sigma_y.dot(dz1), cfg.dt);
        lx += drift_f - kappa.dot(dz1);
        double cur = std::exp(lx) * fine.y();
        acc_f += 0.5 * (prev_f + cur);
        prev_f = cur;
        fine.step(mean_f.at(2 * k + 1), l.sigma_y.dot(dz2), cfg.dt);
        lx += drift_f - kappa.dot(dz2);
        const double xi = std::exp(lx);
        cur = xi * fine.y();
        acc_f += 0.5 * (prev_f + cur);
        prev_f = cur;
        dzc = dz1 + dz2;
        coarse.step(mean_c.at(k), l.sigma_y.dot(dzc), coarse_cfg.dt);
        const double cc = xi * coarse.y();
        acc_c += 0.5 * (prev_c + cc);
        prev_c = cc;
      }
      out.fine[p] = acc_f * cfg.dt;
      out.coarse[p] = acc_c * coarse_cfg.dt;
    }
  });
  return out;
}

struct ParticleOptions {
  std::uint64_t replicate = 0;
  // Drift mu_y y_i is included by default; set false for the undrifted n-agent system.
  bool include_mu_y = true;
  // Optional relabeling: agent i draws from stream stream_ids[i].
  std::vector<std::uint64_t> stream_ids;
};

struct ParticleRun {
  std::vector<double> mean_path;  // all-agent average at every step
  std::vector<double> e;          // mean-field reference at every step
  std::vector<std::size_t> steps;
  std::vector<double> times;
  std::size_t n_agents = 0;
  std::vector<double> agents;  // [checkpoint * n_agents + agent]
  double sup_deviation = 0.0;  // sup_k |mean_path[k] - e[k]|
};

// n-agent system benchmarked against the leave-one-out average of the other agents.
inline ParticleRun simulate_particles(const MarketParams& m, const LaborParams& l, std::size_t n_agents,
                                      const SimConfig& cfg, const ParticleOptions& opts = {}) {
  if (n_agents < 2) fail(ErrorKind::InvalidArgument, "at least two agents required");
  if (!opts.stream_ids.empty() && opts.stream_ids.size() != n_agents) {
    fail(ErrorKind::InvalidArgument, "stream_ids must have one entry per agent");
  }
  cfg.validate(l.d);
  const TimeMesh mesh = cfg.mesh(l.d);
  const ConvolutionPlan plan(l.kernel, mesh);
  const std::vector<double> hist = l.x1.cell_averages(mesh);
  const int dim = static_cast<int>(m.n_assets());
  const std::size_t n = cfg.steps();
  const double mu = opts.include_mu_y ? l.mu_y : 0.0;
  LaborParams ref = l;
  ref.mu_y = mu;
  const MeanPath mean = solve_mean_ode(ref, cfg);

  std::vector<IncomeStepper> agents;
  std::vector<PathNoise> noise;
  agents.reserve(n_agents);
  noise.reserve(n_agents);
  for (std::size_t i = 0; i < n_agents; ++i) {
    agents.emplace_back(plan, l, hist);
    const std::uint64_t id = opts.stream_ids.empty() ? i : opts.stream_ids[i];
    noise.emplace_back(cfg.seed, StreamDomain::Particles, opts.replicate,
                       (static_cast<std::uint64_t>(n_agents) << 32) | id, dim, cfg.dt, cfg.substeps);
  }

  ParticleRun out;
  out.n_agents = n_agents;
  out.steps = cfg.checkpoint_steps();
  out.times = detail::checkpoint_times(out.steps, cfg.dt);
  out.agents.assign(out.steps.size() * n_agents, 0.0);
  out.mean_path.reserve(n + 1);
  out.e.reserve(n + 1);
  const double inv = 1.0 / static_cast<double>(n_agents);
  const double inv_others = 1.0 / static_cast<double>(n_agents - 1);
  Eigen::VectorXd dz(dim);
  std::size_t c = 0;
  for (std::size_t k = 0;; ++k) {
    double total = 0.0;
    for (const auto& a : agents) total += a.y();
    out.mean_path.push_back(total * inv);
    out.e.push_back(mean.at(k));
    out.sup_deviation = std::max(out.sup_deviation, std::abs(out.mean_path.back() - out.e.back()));
    if (c < out.steps.size() && out.steps[c] == k) {
      for (std::size_t i = 0; i < n_agents; ++i) out.agents[c * n_agents + i] = agents[i].y();
      ++c;
    }
    if (k == n) break;
    for (std::size_t i = 0; i < n_agents; ++i) {
      noise[i].draw(dz.data());
      const double others = (total - agents[i].y()) * inv_others;
      agents[i].step(others, l.sigma_y.dot(dz), cfg.dt, mu);
    }
  }
  return out;
}

struct PolicyState {
  double t = 0.0;
  double w = 0.0;
  double gamma = 0.0;  // Gamma-bar
  double y0 = 0.0;
  double e0 = 0.0;
};

struct PolicySpec {
  enum class Kind { Feedback, Exogenous };

  Kind kind = Kind::Feedback;
  double consumption_scale = 1.0;
  double bequest_scale = 1.0;
  std::function<ControlTriple(const PolicyState&)> control;

  static PolicySpec optimal() { return {}; }
  static PolicySpec scaled(double consumption, double bequest = 1.0) {
    PolicySpec p;
    p.consumption_scale = consumption;
    p.bequest_scale = bequest;
    return p;
  }
  // c = 0, bequest and portfolio from the feedback map.
  static PolicySpec zero_consumption() { return scaled(0.0, 1.0); }
  static PolicySpec exogenous(std::function<ControlTriple(const PolicyState&)> f) {
    PolicySpec p;
    p.kind = Kind::Exogenous;
    p.control = std::move(f);
    return p;
  }

  bool is_optimal() const { return kind == Kind::Feedback && consumption_scale == 1.0 && bequest_scale == 1.0; }
};

struct WealthOptions {
  double w0 = 0.0;
  std::optional<StatePoint> initial;  // overrides w0 and the deterministic initial paths
  bool accumulate_utility = false;    // discounted utility and Hamiltonian gap, gamma in (0,1)
  bool track_consistency = false;     // compare against a direct Euler step of wealth
  bool diagnostics = false;           // per-path control extremes
  std::vector<double> marks;          // times of accounting snapshots
};

struct PathDiagnostics {
  double min_gamma = std::numeric_limits<double>::infinity();
  double max_abs_gamma = 0.0;
  double max_c = 0.0;
  double max_B = 0.0;
  double max_exposure_residual = 0.0;  // |sigma^T theta + g y sigma_y|_inf
  double max_hedge_error = 0.0;        // |theta - (Gamma/gamma sigma^{-T} kappa - g y sigma^{-T} sigma_y)|_inf
  double max_control_gap = 0.0;        // |(c, B, sigma^T theta) - feedback|_inf
};

struct Trajectory {
  std::vector<std::size_t> steps;
  std::vector<double> times;
  std::size_t n_paths = 0;
  double dt = 0.0;
  double gamma0 = 0.0;
  std::vector<double> W, y, Gamma, xi;  // [checkpoint * n_paths + path]
  std::vector<double> e;                // [checkpoint]
  std::vector<long long> tau_index;     // first step with Gamma < 0, -1 if none
  std::vector<std::uint8_t> frozen;

  std::vector<double> mark_times;
  std::vector<double> J, gap, value_term, stopped_time;  // [mark * n_paths + path]
  std::vector<double> consistency_error;                 // max per-step discrepancy per path
  std::vector<PathDiagnostics> diagnostics;

  double at(const std::vector<double>& v, std::size_t c, std::size_t p) const { return v[c * n_paths + p]; }
};

namespace detail {

inline double crra_or_zero(double x, double gamma) { return x > 0.0 ? crra(x, gamma) : (gamma < 1.0 ? 0.0 : -std::numeric_limits<double>::infinity()); }

}  // namespace detail

// Wealth under a policy. Gamma-bar is stepped along its own Euler dynamics and W is recovered as
// Gamma-bar minus the discrete human-capital functional, so boundary paths stay exactly at zero.
inline Trajectory simulate_wealth(const DerivedConstants& dc, const PolicySpec& policy, const SimConfig& cfg,
                                  const WealthOptions& opts = {}) {
  const MarketParams& m = dc.market;
  const LaborParams& l = dc.labor;
  cfg.validate(l.d);
  const TimeMesh mesh = cfg.mesh(l.d);
  if (mesh.cells() != dc.cells()) fail(ErrorKind::MeshMismatch, "constants were derived on a different mesh");
  if (policy.kind == PolicySpec::Kind::Exogenous && !policy.control) {
    fail(ErrorKind::InvalidArgument, "exogenous policy without a control function");
  }
  if (opts.accumulate_utility && !(dc.gamma() < 1.0)) {
    fail(ErrorKind::GammaOutOfRange, "utility accounting is restricted to gamma in (0,1)");
  }

  const ConvolutionPlan plan(l.kernel, mesh);
  const MeanPath mean = solve_mean_ode(l, cfg);
  const StatePoint init = opts.initial ? *opts.initial : initial_state(l, opts.w0, mesh);
  require_mesh(dc, init);
  const double gamma0 = gamma_infinity(dc, init);
  if (gamma0 < 0.0) fail(ErrorKind::OutsideConstraintSet, "initial total wealth is negative");

  const int dim = static_cast<int>(m.n_assets());
  const std::size_t n = cfg.steps();
  const double dt = cfg.dt;
  const double lam = dc.discount;
  const double gam = dc.gamma();
  const double g = dc.g_inf;
  const double kb = dc.bequest_factor;
  const double inv_f = 1.0 / dc.f_inf;
  const double fg = std::pow(dc.f_inf, gam);
  const double rho_d = m.rho + m.delta;
  const double xi_drift = -(lam + 0.5 * dc.kappa_sq) * dt;

  Trajectory out;
  out.steps = cfg.checkpoint_steps();
  out.times = detail::checkpoint_times(out.steps, dt);
  out.n_paths = cfg.n_paths;
  out.dt = dt;
  out.gamma0 = gamma0;
  const std::size_t nc = out.steps.size();
  out.W.assign(nc * cfg.n_paths, 0.0);
  out.y = out.W;
  out.Gamma = out.W;
  out.xi = out.W;
  out.e.resize(nc);
  for (std::size_t c = 0; c < nc; ++c) out.e[c] = mean.at(out.steps[c]);
  out.tau_index.assign(cfg.n_paths, -1);
  out.frozen.assign(cfg.n_paths, 0);

  std::vector<std::size_t> mark_steps;
  for (double t : opts.marks) {
    const double r = t / dt;
    const auto k = static_cast<std::size_t>(std::llround(r));
    if (t < 0.0 || std::abs(r - static_cast<double>(k)) > 1e-9 * std::max(1.0, r) || k > n) {
      fail(ErrorKind::InvalidArgument, "accounting mark is not a step time inside the horizon");
    }
    mark_steps.push_back(k);
    out.mark_times.push_back(static_cast<double>(k) * dt);
  }
  const std::size_t nm = mark_steps.size();
  out.J.assign(nm * cfg.n_paths, 0.0);
  out.gap = out.J;
  out.value_term = out.J;
  out.stopped_time = out.J;
  if (opts.track_consistency) out.consistency_error.assign(cfg.n_paths, 0.0);
  if (opts.diagnostics) out.diagnostics.assign(cfg.n_paths, PathDiagnostics{});

  parallel_for(cfg.n_paths, cfg.threads, [&](std::size_t begin, std::size_t end) {
    Eigen::VectorXd dz(dim), v(dim), vstar(dim), theta(dim), fb_v(dim);
    for (std::size_t p = begin; p < end; ++p) {
      PathNoise noise = detail::market_noise(cfg, p, dim);
      IncomeStepper inc(plan, l, init.y1, init.y0);
      auto human_capital_now = [&](std::size_t k) {
        return human_capital_from(
            dc, inc.y(), [&](std::size_t j) { return inc.buffer().at(j); }, mean.at(k),
            [&](std::size_t j) { return mean.history(k, j); });
      };

      double G = gamma0;
      double lxi = 0.0;
      double J = 0.0, gap = 0.0;
      long long tau = -1;
      bool frozen = false;
      PathDiagnostics diag;
      double cons_err = 0.0;
      std::size_t c = 0, mk = 0;

      for (std::size_t k = 0;; ++k) {
        const double t = static_cast<double>(k) * dt;
        const double y = inc.y();
        if (c < nc && out.steps[c] == k) {
          const std::size_t idx = c * cfg.n_paths + p;
          out.Gamma[idx] = G;
          out.W[idx] = G - human_capital_now(k);
          out.y[idx] = y;
          out.xi[idx] = std::exp(lxi);
          ++c;
        }
        while (mk < nm && mark_steps[mk] == k) {
          const std::size_t idx = mk * cfg.n_paths + p;
          out.J[idx] = J;
          out.gap[idx] = gap;
          out.stopped_time[idx] = tau >= 0 ? static_cast<double>(tau) * dt : t;
          if (opts.accumulate_utility) out.value_term[idx] = value_from_gamma(dc, G);
          ++mk;
        }
        if (k == n) break;

        // Controls at t_k; after the exit time the boundary triple is enforced.
        const double gy = g * y;
        double cc = 0.0, BB = 0.0;
        if (frozen) {
          v = -gy * l.sigma_y;
        } else if (policy.kind == PolicySpec::Kind::Feedback) {
          cc = policy.consumption_scale * G * inv_f;
          BB = policy.bequest_scale * kb * G * inv_f;
          for (int i = 0; i < dim; ++i) v[i] = (G / gam) * dc.kappa[i] - gy * l.sigma_y[i];
        } else {
          PolicyState st{t, G - human_capital_now(k), G, y, mean.at(k)};
          const ControlTriple pi = policy.control(st);
          if (!(pi.c >= 0.0) || !(pi.B >= 0.0) || pi.theta.size() != dim || !pi.theta.allFinite()) {
            fail(ErrorKind::InvalidArgument, "exogenous policy returned an inadmissible control");
          }
          cc = pi.c;
          BB = pi.B;
          v.noalias() = m.sigma.transpose() * pi.theta;
        }

        if (opts.diagnostics) {
          diag.min_gamma = std::min(diag.min_gamma, G);
          diag.max_abs_gamma = std::max(diag.max_abs_gamma, std::abs(G));
          diag.max_c = std::max(diag.max_c, cc);
          diag.max_B = std::max(diag.max_B, BB);
          theta = (G / gam) * dc.merton_dir - gy * dc.hedge_dir;
          const Eigen::VectorXd hedge = -gy * dc.hedge_dir;
          for (int i = 0; i < dim; ++i) {
            diag.max_exposure_residual = std::max(diag.max_exposure_residual, std::abs(v[i] + gy * l.sigma_y[i]));
            if (G == 0.0) diag.max_hedge_error = std::max(diag.max_hedge_error, std::abs(theta[i] - hedge[i]));
            fb_v[i] = (G / gam) * dc.kappa[i] - gy * l.sigma_y[i];
          }
          const double fc = G * inv_f, fB = kb * G * inv_f;
          const double cg = std::max({std::abs(cc - fc), std::abs(BB - fB), (v - fb_v).lpNorm<Eigen::Infinity>()});
          if (!frozen) diag.max_control_gap = std::max(diag.max_control_gap, cg);
        }

        if (opts.accumulate_utility && !frozen) {
          const double disc = std::exp(-rho_d * t);
          const double U = detail::crra_or_zero(cc, gam) + m.delta * detail::crra_or_zero(m.k * BB, gam);
          J += disc * U * dt;
          if (G > 0.0) {
            const double lg = std::log(G);
            const double u = fg * std::exp(-gam * lg);
            const double Q11 = -gam * u / G;
            const double Q12 = Q11 * g;
            const double cs = std::exp(-std::log(u) / gam);
            for (int i = 0; i < dim; ++i) vstar[i] = -(dc.kappa[i] * u + l.sigma_y[i] * y * Q12) / Q11;
            const double hmax = hamiltonian_cv_exposure(y, u, Q11, Q12, cs, kb * cs, vstar, dc.kappa, l.sigma_y,
                                                        gam, m.delta, m.k);
            const double hc = hamiltonian_cv_exposure(y, u, Q11, Q12, cc, BB, v, dc.kappa, l.sigma_y, gam,
                                                      m.delta, m.k);
            gap += disc * (hmax - hc) * dt;
          }
        }

        noise.draw(dz.data());
        double hc_before = 0.0, w_euler = 0.0;
        if (opts.track_consistency && !frozen) {
          hc_before = human_capital_now(k);
          const double W = G - hc_before;
          w_euler = W + (W * m.r + v.dot(dc.kappa) + y - cc - m.delta * (BB - W)) * dt + v.dot(dz);
        }

        double Gn = G;
        if (!frozen) {
          double drift = (lam * G - cc - m.delta * BB) * dt;
          double diff = 0.0;
          for (int i = 0; i < dim; ++i) {
            const double wv = gy * l.sigma_y[i] + v[i];
            drift += wv * dc.kappa[i] * dt;
            diff += wv * dz[i];
          }
          Gn = G + drift + diff;
        }
        inc.step(mean.at(k), l.sigma_y.dot(dz), dt);
        lxi += xi_drift - dc.kappa.dot(dz);

        if (opts.track_consistency && !frozen) {
          const double direct = w_euler + human_capital_now(k + 1);
          cons_err = std::max(cons_err, std::abs(direct - Gn));
        }
        if (!frozen && Gn < 0.0) {
          tau = static_cast<long long>(k + 1);
          frozen = true;
          Gn = 0.0;
        }
        G = Gn;
      }
      out.tau_index[p] = tau;
      out.frozen[p] = frozen ? 1 : 0;
      if (opts.track_consistency) out.consistency_error[p] = cons_err;
      if (opts.diagnostics) out.diagnostics[p] = diag;
    }
  });
  return out;
}

// Shortest round-trip decimal form.
inline std::string format_number(double x) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, res.ptr);
}

inline void write_trajectory_csv(std::ostream& os, const Trajectory& tr) {
  os << "t,path_id,W,y,e,Gamma,xi\n";
  for (std::size_t c = 0; c < tr.steps.size(); ++c) {
    const std::string t = format_number(tr.times[c]);
    const std::string e = format_number(tr.e[c]);
    for (std::size_t p = 0; p < tr.n_paths; ++p) {
      os << t << ',' << p << ',' << format_number(tr.at(tr.W, c, p)) << ',' << format_number(tr.at(tr.y, c, p))
         << ',' << e << ',' << format_number(tr.at(tr.Gamma, c, p)) << ',' << format_number(tr.at(tr.xi, c, p))
         << '\n';
    }
  }
  for (std::size_t c = 0; c < tr.steps.size(); ++c) {
    const double* base = nullptr;
    Summary s[4];
    const std::vector<double>* cols[4] = {&tr.W, &tr.y, &tr.Gamma, &tr.xi};
    for (int i = 0; i < 4; ++i) {
      base = cols[i]->data() + c * tr.n_paths;
      s[i] = summarize(base, tr.n_paths);
    }
    const std::string t = format_number(tr.times[c]);
    const std::string e = format_number(tr.e[c]);
    os << t << ",mean," << format_number(s[0].mean) << ',' << format_number(s[1].mean) << ',' << e << ','
       << format_number(s[2].mean) << ',' << format_number(s[3].mean) << '\n';
    os << t << ",se," << format_number(s[0].se) << ',' << format_number(s[1].se) << ",0," << format_number(s[2].se)
       << ',' << format_number(s[3].se) << '\n';
  }
}

}  // namespace mfmerton
