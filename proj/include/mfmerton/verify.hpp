#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "mfmerton/closed_form.hpp"
#include "mfmerton/delay_sde.hpp"
#include "mfmerton/errors.hpp"
#include "mfmerton/kernel.hpp"
#include "mfmerton/model_params.hpp"
#include "mfmerton/parallel.hpp"
#include "mfmerton/spectral.hpp"
#include "mfmerton/stats.hpp"

namespace mfmerton {

enum class Comparison {
  TwoSided,         // |est - target| <= tol + z se
  AtMost,           // est <= target + tol + z se
  Below,            // est + tol + z se < target
  Above,            // est - tol - z se > target
  WithinTolerance   // |est - target| <= tol, standard error reported only
};

inline const char* to_string(Comparison c) {
  switch (c) {
    case Comparison::TwoSided: return "two_sided";
    case Comparison::AtMost: return "at_most";
    case Comparison::Below: return "below";
    case Comparison::Above: return "above";
    case Comparison::WithinTolerance: return "within_tolerance";
  }
  return "unknown";
}

inline constexpr double kZ = 3.0;

struct VerificationResult {
  std::string name;
  double estimate = 0.0;
  double target = 0.0;
  double standard_error = 0.0;
  double tolerance = 0.0;  // deterministic allowance (dt-refinement bias, truncation, rounding)
  Comparison comparison = Comparison::TwoSided;
  bool pass = false;
  std::size_t n_paths = 0;
  double dt = 0.0;
  double runtime_seconds = 0.0;
  std::vector<std::pair<std::string, double>> extras;

  void decide() {
    const double allow = tolerance + kZ * standard_error;
    switch (comparison) {
      case Comparison::TwoSided: pass = std::abs(estimate - target) <= allow; break;
      case Comparison::AtMost: pass = estimate <= target + allow; break;
      case Comparison::Below: pass = estimate + allow < target; break;
      case Comparison::Above: pass = estimate - allow > target; break;
      case Comparison::WithinTolerance: pass = std::abs(estimate - target) <= tolerance; break;
    }
    if (!std::isfinite(estimate)) pass = false;
  }
};

using SuiteReport = std::vector<VerificationResult>;

namespace detail {

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

inline VerificationResult make_result(std::string name, double est, double target, double se, double tol,
                                      Comparison cmp, std::size_t n_paths, double dt) {
  VerificationResult r;
  r.name = std::move(name);
  r.estimate = est;
  r.target = target;
  r.standard_error = se;
  r.tolerance = tol;
  r.comparison = cmp;
  r.n_paths = n_paths;
  r.dt = dt;
  r.decide();
  return r;
}

inline void stamp(SuiteReport& rep, std::size_t from, const Stopwatch& sw) {
  for (std::size_t i = from; i < rep.size(); ++i) rep[i].runtime_seconds = sw.seconds();
}

inline void require_gamma_below_one(const MarketParams& m, const char* suite) {
  if (!(m.gamma < 1.0)) {
    fail(ErrorKind::GammaOutOfRange,
         std::string(suite) + " is verified for gamma in (0,1) only; gamma = " + std::to_string(m.gamma));
  }
}

inline SimConfig refined(const SimConfig& cfg, double dt, double horizon, int substeps) {
  SimConfig out = cfg;
  out.dt = dt;
  out.horizon = horizon;
  out.substeps = substeps;
  return out;
}

inline double round_up_to(double t, double dt) { return std::ceil(t / dt - 1e-9) * dt; }

}  // namespace detail

// ---------------------------------------------------------------------------------------------
// Random parameter draws

struct SampleOptions {
  bool gamma_below_one = false;
  int max_assets = 3;
  std::size_t mesh_cells = 40;
};

struct ParamDraw {
  MarketParams market;
  LaborParams labor;
};

inline ParamDraw sample_params(std::mt19937_64& rng, const SampleOptions& opt = {}) {
  auto U = [&](double a, double b) { return std::uniform_real_distribution<double>(a, b)(rng); };
  auto pick = [&](int n) { return static_cast<int>(std::uniform_int_distribution<int>(0, n - 1)(rng)); };
  ParamDraw p;
  const int n = 1 + pick(opt.max_assets);
  MarketParams& m = p.market;
  m.r = U(0.0, 0.06);
  m.delta = U(0.01, 0.3);
  m.rho = U(0.02, 0.4);
  m.gamma = (opt.gamma_below_one || pick(2) == 0) ? U(0.2, 0.9) : U(1.2, 5.0);
  m.k = U(0.2, 3.0);
  m.sigma = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    m.sigma(i, i) = U(0.1, 0.4);
    for (int j = 0; j < i; ++j) m.sigma(i, j) = U(-0.1, 0.1);
  }
  Eigen::VectorXd kappa(n);
  for (int i = 0; i < n; ++i) kappa[i] = U(-0.3, 0.5);
  m.mu = m.r * Eigen::VectorXd::Ones(n) + m.sigma * kappa;

  LaborParams& l = p.labor;
  l.epsilon = U(-0.3, 0.2);
  l.mu_y = U(-0.05, 0.05);
  l.sigma_y.resize(n);
  for (int i = 0; i < n; ++i) l.sigma_y[i] = U(-0.2, 0.2);
  const double ds[] = {0.25, 0.5, 1.0, 2.0};
  l.d = ds[pick(4)];
  switch (pick(4)) {
    case 0: l.kernel = KernelSpec::zero(l.d); break;
    case 1: l.kernel = KernelSpec::constant(l.d, U(-0.1, 0.1)); break;
    case 2: l.kernel = KernelSpec::exponential(l.d, U(-0.1, 0.1), U(-2.0, 2.0)); break;
    default: {
      const std::size_t cells[] = {2, 4, 5};
      std::vector<double> v(cells[pick(3)]);
      for (double& x : v) x = U(-0.15, 0.15);
      l.kernel = KernelSpec::grid(l.d, v);
    }
  }
  l.x0 = U(0.5, 2.0);
  l.x1 = pick(2) == 0 ? InitialPath::constant(U(0.5, 2.0)) : InitialPath::exponential(U(0.5, 2.0), U(-0.5, 0.5));
  return p;
}

inline ParamDraw sample_feasible_params(std::mt19937_64& rng, const SampleOptions& opt = {}) {
  for (int attempt = 0; attempt < 100000; ++attempt) {
    ParamDraw p = sample_params(rng, opt);
    if (check_hypotheses(p.market, p.labor).ok()) return p;
  }
  fail(ErrorKind::Internal, "no feasible parameter draw found");
}

// Interior state with Gamma > 0 and random income histories.
inline StatePoint sample_interior_state(const DerivedConstants& dc, std::mt19937_64& rng) {
  auto U = [&](double a, double b) { return std::uniform_real_distribution<double>(a, b)(rng); };
  StatePoint s;
  s.y0 = U(0.2, 3.0);
  s.e0 = U(0.2, 3.0);
  s.y1.resize(dc.cells());
  s.e1.resize(dc.cells());
  for (auto& x : s.y1) x = U(0.1, 3.0);
  for (auto& x : s.e1) x = U(0.1, 3.0);
  s.w = 0.0;
  const double hc = human_capital(dc, s);
  s.w = -hc + U(0.1, 5.0) * std::max(1.0, std::abs(hc));
  return s;
}

// ---------------------------------------------------------------------------------------------
// Human capital: closed form against the state-price Monte Carlo oracle.

struct TruncationPlan {
  double horizon = 0.0;
  double tail_bound = 0.0;
  double resolvent_value = 0.0;  // deterministic integral of the risk-neutral mean
};

// Risk-neutral mean income M solves M' = (eps + mu_y - sy.k) M - eps e + conv(M); the discounted
// tail of int e^{-(r+delta)u} M(u) du fixes the truncation horizon.
inline TruncationPlan plan_truncation(const MarketParams& m, const LaborParams& l, double dt, double tail_tol) {
  const Eigen::VectorXd kappa = market_price_of_risk(m);
  const double a = l.epsilon + l.mu_y - l.sigma_y.dot(kappa);
  const double lam = m.discount();
  const TimeMesh mesh = TimeMesh::uniform(l.d, dt);
  const ConvolutionPlan plan(l.kernel, mesh);
  const std::vector<double> hist = l.x1.cell_averages(mesh);
  DelayLine M(plan, hist, l.x0);
  DelayLine e(plan, hist, l.x0);
  const double window = std::max(l.d, 1.0);
  const std::size_t window_steps = static_cast<std::size_t>(std::ceil(window / dt));
  const std::size_t max_steps = static_cast<std::size_t>(std::ceil(2e4 / dt));

  std::vector<double> integrand;
  integrand.push_back(l.x0);
  double peak = std::abs(l.x0);
  for (std::size_t k = 0; k < max_steps; ++k) {
    const double mk = M.current(), ek = e.current();
    const double mn = mk + (a * mk - l.epsilon * ek + M.convolution()) * dt;
    const double en = ek + (l.mu_y * ek + e.convolution()) * dt;
    M.push(mn);
    e.push(en);
    const double val = std::exp(-lam * static_cast<double>(k + 1) * dt) * mn;
    integrand.push_back(val);
    peak = std::max(peak, std::abs(val));
    if (integrand.size() > 2 * window_steps) {
      double recent = 0.0;
      for (std::size_t j = integrand.size() - window_steps; j < integrand.size(); ++j) {
        recent = std::max(recent, std::abs(integrand[j]));
      }
      if (recent <= 1e-14 * peak) break;
    }
  }
  TruncationPlan out;
  double total = 0.0;
  for (std::size_t k = 0; k + 1 < integrand.size(); ++k) total += 0.5 * (integrand[k] + integrand[k + 1]) * dt;
  out.resolvent_value = total;
  // Smallest horizon whose absolute tail is below tail_tol.
  double tail = 0.0;
  std::size_t cut = integrand.size() - 1;
  while (cut > 0) {
    const double piece = 0.5 * (std::abs(integrand[cut - 1]) + std::abs(integrand[cut])) * dt;
    if (tail + piece > tail_tol) break;
    tail += piece;
    --cut;
  }
  out.horizon = static_cast<double>(cut) * dt;
  out.tail_bound = tail;
  return out;
}

inline SuiteReport verify_human_capital(const MarketParams& m, const LaborParams& l, const SimConfig& cfg) {
  detail::Stopwatch sw;
  if (!certify_domination(m, l)) fail(ErrorKind::DominationFailure, check_hypotheses(m, l).failure());
  const double dt_c = cfg.dt;
  const double dt_f = cfg.dt / 2.0;
  const TimeMesh mesh_f = TimeMesh::uniform(l.d, dt_f);
  const DerivedConstants dc = derive_constants(m, l, mesh_f);
  const double target = human_capital(dc, initial_state(l, 0.0, mesh_f));

  SuiteReport rep;
  const std::string name = "human_capital[" + l.kernel.variant_name() + "]";
  const double rel_tol = 1e-4 * std::max(std::abs(target), 1e-12);
  const TruncationPlan tp = plan_truncation(m, l, dt_f, rel_tol);
  const double horizon = detail::round_up_to(std::max(tp.horizon, dt_c), dt_c);

  const DiscountedIncomeLevels lv = simulate_discounted_income_levels(m, l, detail::refined(cfg, dt_f, horizon, 1));
  const Summary sf = summarize(lv.fine);
  const Summary sc = summarize(lv.coarse);
  const double bias = std::abs(sc.mean - sf.mean);
  auto r = detail::make_result(name, sf.mean, target, sf.se, bias + tp.tail_bound, Comparison::TwoSided,
                               cfg.n_paths, dt_f);
  r.extras = {{"estimate_coarse", sc.mean},   {"se_coarse", sc.se},
              {"dt_coarse", dt_c},             {"euler_bias_allowance", bias},
              {"truncation_horizon", horizon}, {"truncation_bound", tp.tail_bound},
              {"resolvent_integral", tp.resolvent_value}};
  rep.push_back(r);
  detail::stamp(rep, 0, sw);
  return rep;
}

// ---------------------------------------------------------------------------------------------
// Fundamental identity: v = E int_0^T e^{-(rho+delta)s}(U + Hmax - Hc) ds + E e^{-(rho+delta)T} v(X_T).

namespace detail {

struct PathTotals {
  std::vector<double> total, J, gap, terminal, J_upper;
};

inline PathTotals identity_totals(const DerivedConstants& dc, const PolicySpec& policy, const SimConfig& cfg,
                                  double w0) {
  WealthOptions opts;
  opts.w0 = w0;
  opts.accumulate_utility = true;
  opts.marks = {cfg.horizon};
  const Trajectory tr = simulate_wealth(dc, policy, cfg, opts);
  const double disc = std::exp(-(dc.market.rho + dc.market.delta) * cfg.horizon);
  PathTotals out;
  const std::size_t n = tr.n_paths;
  out.total.resize(n);
  out.J.resize(n);
  out.gap.resize(n);
  out.terminal.resize(n);
  out.J_upper.resize(n);
  for (std::size_t p = 0; p < n; ++p) {
    out.J[p] = tr.J[p];
    out.gap[p] = tr.gap[p];
    out.terminal[p] = disc * tr.value_term[p];
    out.total[p] = out.J[p] + out.gap[p] + out.terminal[p];
    out.J_upper[p] = out.J[p] + out.terminal[p];
  }
  return out;
}

// Fine level (dt/2) and coarse level (dt, two summed draws per increment) on the same noise.
struct LevelTotals {
  PathTotals fine, coarse;
};

inline LevelTotals identity_levels(const DerivedConstants& dc_f, const DerivedConstants& dc_c,
                                   const PolicySpec& policy, const SimConfig& cfg, double w0) {
  return {identity_totals(dc_f, policy, refined(cfg, cfg.dt / 2, cfg.horizon, 1), w0),
          identity_totals(dc_c, policy, refined(cfg, cfg.dt, cfg.horizon, 2), w0)};
}

// Per-path J_upper(policy) - (J_upper(optimal) - v): the optimal run is a control with mean v.
inline std::vector<double> controlled(const PathTotals& pol, const PathTotals& opt, double v0) {
  std::vector<double> out(pol.J_upper.size());
  for (std::size_t p = 0; p < out.size(); ++p) out[p] = pol.J_upper[p] - (opt.J_upper[p] - v0);
  return out;
}

}  // namespace detail

inline std::string policy_label(const PolicySpec& p) {
  if (p.kind == PolicySpec::Kind::Exogenous) return "exogenous";
  if (p.is_optimal()) return "optimal";
  if (p.consumption_scale == 0.0) return "zero_consumption";
  return "scaled_c" + format_number(p.consumption_scale) + "_B" + format_number(p.bequest_scale);
}

// cfg.dt is the coarse step (the fine level uses dt/2 on common noise); cfg.horizon is the finite T.
// The optimal policy is always simulated: it is checked against v and then reused as a control variate
// when testing J < v for the other policies.
inline SuiteReport verify_fundamental_identity(const MarketParams& m, const LaborParams& l,
                                               const std::vector<PolicySpec>& policies, const SimConfig& cfg,
                                               double w0) {
  detail::Stopwatch sw;
  detail::require_gamma_below_one(m, "fundamental identity");
  const DerivedConstants dc_f = derive_constants(m, l, cfg.dt / 2);
  const DerivedConstants dc_c = derive_constants(m, l, cfg.dt);
  const StatePoint s0 = initial_state(l, w0, dc_f.profiles.mesh);
  if (!(gamma_infinity(dc_f, s0) > 0.0)) fail(ErrorKind::OutsideConstraintSet, "identity needs Gamma(0) > 0");
  const double v0 = value_function(dc_f, s0);
  const double dt_f = cfg.dt / 2;
  const double rounding = 1e-10 * std::abs(v0);
  const std::size_t n = cfg.n_paths;
  auto bias = [](const std::vector<double>& f, const std::vector<double>& c) {
    return std::abs(summarize(f).mean - summarize(c).mean);
  };

  const detail::LevelTotals opt = detail::identity_levels(dc_f, dc_c, PolicySpec::optimal(), cfg, w0);
  SuiteReport rep;
  auto add_identity = [&](const std::string& label, const detail::LevelTotals& lv) {
    const Summary s = summarize(lv.fine.total);
    auto r = detail::make_result("fundamental_identity[" + label + "]", s.mean, v0, s.se,
                                 bias(lv.fine.total, lv.coarse.total) + rounding, Comparison::TwoSided, n, dt_f);
    r.extras = {{"J_truncated", summarize(lv.fine.J).mean},
                {"gap", summarize(lv.fine.gap).mean},
                {"terminal", summarize(lv.fine.terminal).mean},
                {"horizon", cfg.horizon},
                {"coarse_estimate", summarize(lv.coarse.total).mean}};
    rep.push_back(r);
  };

  {
    add_identity("optimal", opt);
    // J over [0, inf) lies in [J_T, J_T + terminal]; the terminal mean is the truncation allowance.
    const Summary j = summarize(opt.fine.J);
    const Summary term = summarize(opt.fine.terminal);
    auto jr = detail::make_result("J_equals_value[optimal]", j.mean, v0, j.se,
                                  bias(opt.fine.J, opt.coarse.J) + term.mean + rounding, Comparison::TwoSided, n,
                                  dt_f);
    jr.extras = {{"terminal", term.mean}};
    rep.push_back(jr);
    const Summary g = summarize(opt.fine.gap);
    rep.push_back(detail::make_result("gap_zero[optimal]", g.mean, 0.0, g.se,
                                      bias(opt.fine.gap, opt.coarse.gap) + rounding, Comparison::TwoSided, n, dt_f));
  }

  for (const PolicySpec& pol : policies) {
    if (pol.is_optimal()) continue;
    const std::string label = policy_label(pol);
    const detail::LevelTotals lv = detail::identity_levels(dc_f, dc_c, pol, cfg, w0);
    add_identity(label, lv);
    const Summary g = summarize(lv.fine.gap);
    rep.push_back(detail::make_result("gap_positive[" + label + "]", g.mean, 0.0, g.se,
                                      bias(lv.fine.gap, lv.coarse.gap), Comparison::Above, n, dt_f));
    const std::vector<double> cf = detail::controlled(lv.fine, opt.fine, v0);
    const std::vector<double> cc = detail::controlled(lv.coarse, opt.coarse, v0);
    const Summary s = summarize(cf);
    auto jr = detail::make_result("J_below_value[" + label + "]", s.mean, v0, s.se, bias(cf, cc) + rounding,
                                  Comparison::Below, n, dt_f);
    const Summary raw = summarize(lv.fine.J_upper);
    jr.extras = {{"J_upper_plain", raw.mean}, {"J_upper_plain_se", raw.se}, {"J_truncated", summarize(lv.fine.J).mean}};
    rep.push_back(jr);
  }
  detail::stamp(rep, 0, sw);
  return rep;
}

inline SuiteReport verify_fundamental_identity(const MarketParams& m, const LaborParams& l, const PolicySpec& policy,
                                               const SimConfig& cfg, double w0) {
  return verify_fundamental_identity(m, l, std::vector<PolicySpec>{policy}, cfg, w0);
}
// ---------------------------------------------------------------------------------------------
// Boundary behavior and interior positivity.

inline SuiteReport verify_boundary(const MarketParams& m, const LaborParams& l, const SimConfig& cfg, double w0) {
  detail::Stopwatch sw;
  const DerivedConstants dc = derive_constants(m, l, cfg.dt);
  const TimeMesh& mesh = dc.profiles.mesh;
  StatePoint s0 = initial_state(l, 0.0, mesh);
  s0.w = -human_capital(dc, s0);

  WealthOptions opts;
  opts.initial = s0;
  opts.diagnostics = true;
  const Trajectory tr = simulate_wealth(dc, PolicySpec::optimal(), cfg, opts);
  double gmax = std::abs(tr.gamma0), cmax = 0.0, bmax = 0.0, emax = 0.0, hmax = 0.0;
  for (const auto& d : tr.diagnostics) {
    gmax = std::max(gmax, d.max_abs_gamma);
    cmax = std::max(cmax, d.max_c);
    bmax = std::max(bmax, d.max_B);
    emax = std::max(emax, d.max_exposure_residual);
    hmax = std::max(hmax, d.max_hedge_error);
  }
  for (double g : tr.Gamma) gmax = std::max(gmax, std::abs(g));

  SuiteReport rep;
  const auto wc = Comparison::WithinTolerance;
  rep.push_back(detail::make_result("boundary_gamma_zero", gmax, 0.0, 0.0, 0.0, wc, cfg.n_paths, cfg.dt));
  rep.push_back(detail::make_result("boundary_consumption_zero", cmax, 0.0, 0.0, 0.0, wc, cfg.n_paths, cfg.dt));
  rep.push_back(detail::make_result("boundary_bequest_zero", bmax, 0.0, 0.0, 0.0, wc, cfg.n_paths, cfg.dt));
  rep.push_back(detail::make_result("boundary_exposure_zero", emax, 0.0, 0.0, 0.0, wc, cfg.n_paths, cfg.dt));
  rep.push_back(detail::make_result("boundary_hedging_portfolio", hmax, 0.0, 0.0, 1e-14, wc, cfg.n_paths, cfg.dt));

  // Interior start: no path may cross below -1e-10 * scale, and the Gamma recursion must track
  // a direct Euler step of wealth plus recomputed human capital.
  StatePoint s1 = initial_state(l, w0, mesh);
  const double hc = human_capital(dc, s1);
  if (!(gamma_infinity(dc, s1) > 0.0)) s1.w = -hc + std::max(1.0, std::abs(hc));
  const double scale = std::abs(s1.w) + std::abs(hc);
  WealthOptions io;
  io.initial = s1;
  io.diagnostics = true;
  const Trajectory ti = simulate_wealth(dc, PolicySpec::optimal(), cfg, io);
  double crossings = 0.0, min_gamma = ti.gamma0;
  for (std::size_t p = 0; p < ti.n_paths; ++p) {
    min_gamma = std::min(min_gamma, ti.diagnostics[p].min_gamma);
    if (ti.diagnostics[p].min_gamma < -1e-10 * scale || ti.tau_index[p] >= 0) crossings += 1.0;
  }
  auto pos = detail::make_result("interior_no_crossing", crossings, 0.0, 0.0, 0.0, wc, cfg.n_paths, cfg.dt);
  pos.extras = {{"min_gamma", min_gamma}, {"gamma0", ti.gamma0}};
  rep.push_back(pos);

  SimConfig small = cfg;
  small.n_paths = std::min<std::size_t>(cfg.n_paths, 200);
  WealthOptions co;
  co.initial = s1;
  co.track_consistency = true;
  const Trajectory tc = simulate_wealth(dc, PolicySpec::optimal(), small, co);
  double cmax_err = 0.0;
  for (double e : tc.consistency_error) cmax_err = std::max(cmax_err, e);
  auto cons = detail::make_result("gamma_recursion_consistency", cmax_err / scale, 0.0, 0.0, cfg.dt, wc,
                                  small.n_paths, cfg.dt);
  cons.extras = {{"max_abs_discrepancy", cmax_err}, {"scale", scale}};
  rep.push_back(cons);
  detail::stamp(rep, 0, sw);
  return rep;
}

// ---------------------------------------------------------------------------------------------
// Supermartingale bound and vanishing discounted value.

inline SuiteReport verify_supermartingale(const MarketParams& m, const LaborParams& l, const SimConfig& cfg,
                                          double w0, const std::vector<double>& horizons,
                                          double perturbation = 1.2) {
  detail::Stopwatch sw;
  detail::require_gamma_below_one(m, "supermartingale bound");
  if (horizons.empty()) fail(ErrorKind::InvalidArgument, "no horizons given");
  const DerivedConstants dc = derive_constants(m, l, cfg.dt);
  const StatePoint s0 = initial_state(l, w0, dc.profiles.mesh);
  const double v0 = value_function(dc, s0);
  const double g = m.gamma;
  const double growth = (g - 1.0) * (dc.discount + dc.kappa_sq / (2.0 * g));
  const double rho_d = m.rho + m.delta;
  SimConfig run = cfg;
  run.horizon = *std::max_element(horizons.begin(), horizons.end());

  SuiteReport rep;
  for (const PolicySpec& pol : {PolicySpec::optimal(), PolicySpec::scaled(perturbation)}) {
    WealthOptions opts;
    opts.w0 = w0;
    opts.accumulate_utility = true;
    opts.marks = horizons;
    const Trajectory tr = simulate_wealth(dc, pol, run, opts);
    const std::string label = policy_label(pol);
    const std::size_t n = tr.n_paths;
    std::vector<std::vector<double>> disc(horizons.size(), std::vector<double>(n));
    for (std::size_t h = 0; h < horizons.size(); ++h) {
      std::vector<double> lhs(n);
      for (std::size_t p = 0; p < n; ++p) {
        const double stop = tr.stopped_time[h * n + p];
        const double val = tr.value_term[h * n + p];
        lhs[p] = std::exp(growth * stop) * val;
        disc[h][p] = std::exp(-rho_d * stop) * val;
      }
      const Summary s = summarize(lhs);
      auto r = detail::make_result("supermartingale[" + label + ",T=" + format_number(horizons[h]) + "]", s.mean, v0,
                                   s.se, 0.0, Comparison::AtMost, n, cfg.dt);
      if (pol.is_optimal()) {
        r.extras = {{"analytic_optimal", v0 * std::exp((g - 1.0) / dc.nu * horizons[h])}};
      }
      rep.push_back(r);
    }
    // Discounted value decreases along the sweep: every consecutive path-wise difference is negative.
    double worst = -std::numeric_limits<double>::infinity(), worst_se = 0.0;
    for (std::size_t h = 0; h + 1 < horizons.size(); ++h) {
      std::vector<double> diff(n);
      for (std::size_t p = 0; p < n; ++p) diff[p] = disc[h + 1][p] - disc[h][p];
      const Summary s = summarize(diff);
      if (s.mean + kZ * s.se > worst + kZ * worst_se) {
        worst = s.mean;
        worst_se = s.se;
      }
    }
    if (horizons.size() > 1) {
      auto r = detail::make_result("discounted_value_decreasing[" + label + "]", worst, 0.0, worst_se, 0.0,
                                   Comparison::Below, n, cfg.dt);
      std::vector<std::pair<std::string, double>> ex;
      for (std::size_t h = 0; h < horizons.size(); ++h) {
        ex.emplace_back("T=" + format_number(horizons[h]), summarize(disc[h]).mean);
      }
      r.extras = ex;
      rep.push_back(r);
    }
  }
  detail::stamp(rep, 0, sw);
  return rep;
}

// ---------------------------------------------------------------------------------------------
// Propagation of chaos.

inline SuiteReport verify_chaos(const MarketParams& m, const LaborParams& l, const SimConfig& cfg,
                                const std::vector<std::size_t>& n_list, std::size_t replicates) {
  detail::Stopwatch sw;
  if (n_list.size() < 3 || !std::is_sorted(n_list.begin(), n_list.end()) || n_list.front() < 2) {
    fail(ErrorKind::InvalidArgument, "n_list must be ascending with at least three entries >= 2");
  }
  if (replicates < 2) fail(ErrorKind::InvalidArgument, "at least two replicates required");
  std::vector<Summary> dev(n_list.size());
  double max_dev = 0.0;
  for (std::size_t i = 0; i < n_list.size(); ++i) {
    std::vector<double> sup(replicates);
    parallel_for(replicates, cfg.threads, [&](std::size_t b, std::size_t e) {
      for (std::size_t r = b; r < e; ++r) {
        ParticleOptions po;
        po.replicate = r;
        sup[r] = simulate_particles(m, l, n_list[i], cfg, po).sup_deviation;
      }
    });
    dev[i] = summarize(sup);
    for (double s : sup) max_dev = std::max(max_dev, s);
  }
  SuiteReport rep;
  if (max_dev <= 1e-12) {
    rep.push_back(detail::make_result("chaos_degenerate", max_dev, 0.0, 0.0, 1e-12, Comparison::WithinTolerance,
                                      replicates, cfg.dt));
    detail::stamp(rep, 0, sw);
    return rep;
  }
  const std::size_t k = n_list.size();
  std::vector<double> x(k), y(k), vy(k);
  for (std::size_t i = 0; i < k; ++i) {
    x[i] = std::log(static_cast<double>(n_list[i]));
    y[i] = std::log(dev[i].mean);
    vy[i] = dev[i].se * dev[i].se / (dev[i].mean * dev[i].mean);
  }
  double xm = 0.0, ym = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    xm += x[i] / static_cast<double>(k);
    ym += y[i] / static_cast<double>(k);
  }
  double sxx = 0.0, sxy = 0.0, var = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    sxx += (x[i] - xm) * (x[i] - xm);
    sxy += (x[i] - xm) * (y[i] - ym);
  }
  for (std::size_t i = 0; i < k; ++i) var += (x[i] - xm) * (x[i] - xm) * vy[i];
  const double slope = sxy / sxx;
  const double slope_se = std::sqrt(var) / sxx;
  auto r = detail::make_result("chaos_slope", slope, -0.5, slope_se, 0.3, Comparison::WithinTolerance, replicates,
                               cfg.dt);
  for (std::size_t i = 0; i < k; ++i) {
    r.extras.emplace_back("mean_sup_dev_n=" + std::to_string(n_list[i]), dev[i].mean);
    r.extras.emplace_back("se_sup_dev_n=" + std::to_string(n_list[i]), dev[i].se);
  }
  rep.push_back(r);
  detail::stamp(rep, 0, sw);
  return rep;
}

// ---------------------------------------------------------------------------------------------
// Algebraic HJB checks.

struct HjbOptions {
  std::size_t draws = 1000;
  std::size_t states = 100;
  std::uint64_t seed = 0;
};

inline SuiteReport verify_hjb_residual(const MarketParams& m, const LaborParams& l, const HjbOptions& opt = {}) {
  detail::Stopwatch sw;
  const TimeMesh mesh = TimeMesh::with_cells(l.d, 40);
  const DerivedConstants base = derive_constants(m, l, mesh);
  std::mt19937_64 rng(opt.seed ^ 0x9e3779b97f4a7c15ull);

  double max_res = std::abs(hjb_scalar_residual(base));
  double max_id = std::abs(benchmark_identity_residual(base.i_inf, base.g_inf, l.epsilon, base.sigma_y_kappa));
  double max_full = 0.0;
  for (std::size_t s = 0; s < opt.states; ++s) {
    max_full = std::max(max_full, evaluate_hjb(base, sample_interior_state(base, rng)).relative_error());
  }
  for (std::size_t i = 0; i < opt.draws; ++i) {
    const ParamDraw p = sample_feasible_params(rng);
    const DerivedConstants dc = derive_constants(p.market, p.labor, TimeMesh::with_cells(p.labor.d, 40));
    max_res = std::max(max_res, std::abs(hjb_scalar_residual(dc)));
    max_id = std::max(max_id, std::abs(benchmark_identity_residual(dc.i_inf, dc.g_inf, p.labor.epsilon, dc.sigma_y_kappa)));
    if (i < opt.states) max_full = std::max(max_full, evaluate_hjb(dc, sample_interior_state(dc, rng)).relative_error());
  }
  SuiteReport rep;
  const auto wc = Comparison::WithinTolerance;
  rep.push_back(detail::make_result("hjb_scalar_residual", max_res, 0.0, 0.0, 1e-12, wc, opt.draws + 1, 0.0));
  rep.push_back(detail::make_result("benchmark_identity", max_id, 0.0, 0.0, 1e-12, wc, opt.draws + 1, 0.0));
  rep.push_back(detail::make_result("hjb_full_state", max_full, 0.0, 0.0, 1e-8, wc, 2 * opt.states, 0.0));
  detail::stamp(rep, 0, sw);
  return rep;
}

// ---------------------------------------------------------------------------------------------
// Closed-form value against the Gamma* geometric dynamics.

inline SuiteReport verify_gamma_star(const MarketParams& m, const LaborParams& l, const SimConfig& cfg, double w0,
                                     std::size_t draws = 1000) {
  detail::Stopwatch sw;
  detail::require_gamma_below_one(m, "analytic closure");
  std::mt19937_64 rng(cfg.seed ^ 0x5bd1e995ull);
  const DerivedConstants dc = derive_constants(m, l, cfg.dt);
  const StatePoint s0 = initial_state(l, w0, dc.profiles.mesh);
  const double gamma0 = gamma_infinity(dc, s0);

  auto closure_err = [](const DerivedConstants& d, double g0) {
    const double v = value_from_gamma(d, g0);
    const double a = analytic_J_optimal(d, g0).value;
    return std::abs(a - v) / std::max(std::abs(v), 1e-300);
  };
  double worst = closure_err(dc, std::max(gamma0, 1.0));
  SampleOptions so;
  so.gamma_below_one = true;
  for (std::size_t i = 0; i < draws; ++i) {
    const ParamDraw p = sample_feasible_params(rng, so);
    const DerivedConstants d = derive_constants(p.market, p.labor, TimeMesh::with_cells(p.labor.d, 40));
    const StatePoint s = sample_interior_state(d, rng);
    worst = std::max(worst, closure_err(d, gamma_infinity(d, s)));
  }
  SuiteReport rep;
  rep.push_back(detail::make_result("analytic_closure", worst, 0.0, 0.0, 1e-12, Comparison::WithinTolerance,
                                    draws + 1, 0.0));

  SimConfig run = cfg;
  run.checkpoints = 1;
  const CheckpointPaths gs = simulate_gamma_star(dc, gamma0, run);
  const std::size_t last = gs.steps.size() - 1;
  const double T = gs.times[last];
  const double g = m.gamma;
  std::vector<double> level(gs.n_paths), power(gs.n_paths);
  const double disc = std::exp(-(m.rho + m.delta) * T);
  for (std::size_t p = 0; p < gs.n_paths; ++p) {
    level[p] = gs.at(last, p);
    power[p] = disc * boundary_pow(level[p], 1.0 - g);
  }
  const Summary sl = summarize(level), sp = summarize(power);
  rep.push_back(detail::make_result("gamma_star_mean", sl.mean, gamma0 * std::exp(gamma_star_drift(dc) * T), sl.se,
                                    0.0, Comparison::TwoSided, gs.n_paths, cfg.dt));
  rep.push_back(detail::make_result("gamma_star_discounted_power_moment", sp.mean,
                                    boundary_pow(gamma0, 1.0 - g) * std::exp(-T / dc.nu), sp.se, 0.0,
                                    Comparison::TwoSided, gs.n_paths, cfg.dt));
  detail::stamp(rep, 0, sw);
  return rep;
}

// ---------------------------------------------------------------------------------------------
// Mean-field consistency: the sample mean of y tracks the deterministic mean path.

inline SuiteReport verify_mean_field(const MarketParams& m, const LaborParams& l, const SimConfig& cfg) {
  detail::Stopwatch sw;
  SimConfig run = cfg;
  run.checkpoints = 2;
  const IncomePaths ip = simulate_income(m, l, run);
  SuiteReport rep;
  std::size_t nonpos = 0;
  for (auto f : ip.nonpositive) nonpos += f;
  for (std::size_t c = 1; c < ip.steps.size(); ++c) {
    const Summary s = summarize(ip.y.data() + c * ip.n_paths, ip.n_paths);
    auto r = detail::make_result("mean_field[t=" + format_number(ip.times[c]) + "]", s.mean,
                                 ip.mean.at(ip.steps[c]), s.se, 0.0, Comparison::TwoSided, ip.n_paths, cfg.dt);
    r.extras = {{"nonpositive_paths", static_cast<double>(nonpos)}};
    rep.push_back(r);
  }
  detail::stamp(rep, 0, sw);
  return rep;
}

// ---------------------------------------------------------------------------------------------
// Spectral checks.

// Sign changes of an increasing function located by a fixed-step scan.
inline std::vector<double> grid_scan_roots(const std::function<double(double)>& f, double lo, double hi,
                                           double step) {
  std::vector<double> roots;
  double prev = f(lo);
  const auto n = static_cast<std::size_t>(std::ceil((hi - lo) / step));
  for (std::size_t i = 1; i <= n; ++i) {
    const double x = lo + static_cast<double>(i) * step;
    const double v = f(x);
    if ((prev < 0.0) != (v < 0.0)) roots.push_back(x - 0.5 * step);
    prev = v;
  }
  return roots;
}

inline SuiteReport verify_spectral(const MarketParams& m, const LaborParams& l, std::size_t draws = 1000,
                                   std::uint64_t seed = 0) {
  detail::Stopwatch sw;
  SuiteReport rep;
  auto residual = [](const MarketParams& mm, const LaborParams& ll, const SpectralReport& s) {
    const KPair a = eval_K_tilde(mm, ll, s.xi1);
    const KPair b = eval_K_tilde(mm, ll, s.xi2);
    return std::max(std::abs(a.K1), std::abs(b.K2));
  };
  const SpectralReport base = find_real_roots(m, l);
  double worst_res = residual(m, l, base);
  double violations = 0.0, branch_errors = 0.0;
  std::mt19937_64 rng(seed ^ 0x2545f4914f6cdd1dull);
  for (std::size_t i = 0; i < draws; ++i) {
    const ParamDraw p = sample_params(rng);
    const SpectralReport s = find_real_roots(p.market, p.labor);
    worst_res = std::max(worst_res, residual(p.market, p.labor, s));
    const HypothesisReport h = check_hypotheses(p.market, p.labor);
    if (h.hyp_K_ok && !s.dominated) violations += 1.0;
    const bool expect_xi2 = s.spread < 0.0;
    if ((expect_xi2 && s.xi2 < s.xi1) || (!expect_xi2 && s.spread > 0.0 && s.xi1 < s.xi2) ||
        s.xi0 != s.lambda0_tilde) {
      branch_errors += 1.0;
    }
  }
  const auto wc = Comparison::WithinTolerance;
  rep.push_back(detail::make_result("spectral_root_residual", worst_res, 0.0, 0.0, 1e-10, wc, draws + 1, 0.0));
  rep.push_back(detail::make_result("spectral_domination_implication", violations, 0.0, 0.0, 0.0, wc, draws, 0.0));
  rep.push_back(detail::make_result("spectral_branch_rule", branch_errors, 0.0, 0.0, 0.0, wc, draws, 0.0));

  // Grid-scan oracle for the configured parameters.
  const double sk = l.sigma_y.dot(market_price_of_risk(m));
  const KernelSpec k = l.kernel;
  auto k1 = [&](double x) { return x - (l.epsilon + l.mu_y - sk) - discounted_abs_moment(k, x); };
  auto k2 = [&](double x) { return x - l.mu_y - discounted_abs_moment(k, x); };
  double scan_err = 0.0;
  for (int which = 0; which < 2; ++which) {
    const double xi = which == 0 ? base.xi1 : base.xi2;
    const double lo = std::min(-5.0, xi - 0.5), hi = std::max(5.0, xi + 0.5);
    const auto roots = grid_scan_roots(which == 0 ? std::function<double(double)>(k1) : k2, lo, hi, 1e-6);
    scan_err = std::max(scan_err, roots.size() == 1 ? std::abs(roots.front() - xi) : 1.0);
  }
  rep.push_back(detail::make_result("spectral_grid_scan", scan_err, 0.0, 0.0, 1e-6, wc, 1, 1e-6));

  const auto roots = find_complex_roots(m, l, 100, seed);
  double excess = -std::numeric_limits<double>::infinity();
  for (const auto& r : roots) excess = std::max(excess, r.z.real() - base.lambda0_tilde);
  auto cr = detail::make_result("complex_roots_bounded", roots.empty() ? 0.0 : std::max(0.0, excess), 0.0, 0.0, 1e-6,
                                wc, roots.size(), 0.0);
  cr.extras = {{"roots_found", static_cast<double>(roots.size())}, {"lambda0_tilde", base.lambda0_tilde}};
  rep.push_back(cr);
  detail::stamp(rep, 0, sw);
  return rep;
}

// ---------------------------------------------------------------------------------------------
// Suite registry.

struct VerifySettings {
  std::uint64_t seed = 0;
  unsigned threads = 0;
  double w0 = 0.0;
  double perturbation = 1.2;

  std::size_t hc_paths = 100000;
  double hc_dt = 1e-2;

  std::size_t fi_paths = 40000;
  double fi_dt = 1e-2;
  double fi_horizon = 10.0;

  std::size_t boundary_paths = 1000;
  double boundary_dt = 1e-3;
  double boundary_horizon = 1.0;

  std::size_t super_paths = 20000;
  double super_dt = 1e-2;
  std::vector<double> super_horizons = {1.0, 5.0, 10.0};

  std::vector<std::size_t> n_list = {10, 100, 1000};
  std::size_t replicates = 50;
  double chaos_dt = 1e-2;
  double chaos_horizon = 2.0;

  std::size_t mean_field_paths = 100000;
  double mean_field_dt = 1e-2;
  double mean_field_horizon = 2.0;

  std::size_t gamma_star_paths = 100000;
  double gamma_star_dt = 1e-2;
  double gamma_star_horizon = 5.0;

  std::size_t draws = 1000;
  std::size_t states = 100;
};

inline const std::vector<std::string>& suite_names() {
  static const std::vector<std::string> names = {"hjb",        "spectral",  "human_capital", "fundamental",
                                                 "boundary",   "supermartingale", "chaos",  "mean_field",
                                                 "gamma_star"};
  return names;
}

inline bool suite_needs_gamma_below_one(const std::string& name) {
  return name == "fundamental" || name == "supermartingale" || name == "gamma_star";
}

inline SimConfig suite_config(const VerifySettings& s, std::size_t paths, double dt, double horizon) {
  SimConfig c;
  c.seed = s.seed;
  c.threads = s.threads;
  c.n_paths = paths;
  c.dt = dt;
  c.horizon = horizon;
  c.checkpoints = 1;
  return c;
}

inline SuiteReport run_suite(const std::string& name, const MarketParams& m, const LaborParams& l,
                             const VerifySettings& s) {
  if (suite_needs_gamma_below_one(name)) detail::require_gamma_below_one(m, name.c_str());
  if (name == "hjb") return verify_hjb_residual(m, l, {s.draws, s.states, s.seed});
  if (name == "spectral") return verify_spectral(m, l, s.draws, s.seed);
  if (name == "human_capital") return verify_human_capital(m, l, suite_config(s, s.hc_paths, s.hc_dt, 0.0));
  if (name == "fundamental") {
    return verify_fundamental_identity(
        m, l, std::vector<PolicySpec>{PolicySpec::scaled(s.perturbation), PolicySpec::zero_consumption()},
        suite_config(s, s.fi_paths, s.fi_dt, s.fi_horizon), s.w0);
  }
  if (name == "boundary") {
    return verify_boundary(m, l, suite_config(s, s.boundary_paths, s.boundary_dt, s.boundary_horizon), s.w0);
  }
  if (name == "supermartingale") {
    return verify_supermartingale(m, l, suite_config(s, s.super_paths, s.super_dt, 0.0), s.w0, s.super_horizons,
                                  s.perturbation);
  }
  if (name == "chaos") {
    return verify_chaos(m, l, suite_config(s, 1, s.chaos_dt, s.chaos_horizon), s.n_list, s.replicates);
  }
  if (name == "mean_field") {
    return verify_mean_field(m, l, suite_config(s, s.mean_field_paths, s.mean_field_dt, s.mean_field_horizon));
  }
  if (name == "gamma_star") {
    return verify_gamma_star(m, l, suite_config(s, s.gamma_star_paths, s.gamma_star_dt, s.gamma_star_horizon), s.w0,
                             s.draws);
  }
  fail(ErrorKind::InvalidArgument, "unknown suite '" + name + "'");
}

}  // namespace mfmerton
