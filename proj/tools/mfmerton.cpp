#include <CLI11.hpp>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "mfmerton/mfmerton.hpp"
#include "mfmerton/report.hpp"

namespace {

using namespace mfmerton;

constexpr int kExitPass = 0;
constexpr int kExitFailure = 1;
constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::vector<std::string> suites;
};

RunConfig load(const Options& o) {
  RunConfig cfg = load_config(o.config);
  if (o.seed) {
    cfg.sim.seed = *o.seed;
    cfg.verify.seed = *o.seed;
  }
  return cfg;
}

void emit(const Options& o, const std::string& text) {
  if (o.out.empty()) {
    std::cout << text;
    return;
  }
  std::ofstream f(o.out, std::ios::binary);
  if (!f) fail(ErrorKind::IoError, "cannot open output file '" + o.out + "'");
  f << text;
  if (!f) fail(ErrorKind::IoError, "failed writing '" + o.out + "'");
}

void require_gates(const RunConfig& cfg) {
  const HypothesisReport h = check_hypotheses(cfg.market, cfg.labor);
  if (!h.ok()) fail(ErrorKind::HypothesisViolation, h.failure());
  if (!certify_domination(cfg.market, cfg.labor)) fail(ErrorKind::DominationFailure, h.failure());
}

int cmd_check_params(const Options& o) {
  const RunConfig cfg = load(o);
  bool ok = false;
  const Json j = check_params_report(cfg.market, cfg.labor, ok);
  emit(o, j.dump(2) + "\n");
  if (!ok) std::cerr << "hypothesis check failed: " << check_hypotheses(cfg.market, cfg.labor).failure() << "\n";
  return ok ? kExitPass : kExitFailure;
}

int cmd_solve(const Options& o) {
  const RunConfig cfg = load(o);
  require_gates(cfg);
  const DerivedConstants dc = derive_constants(cfg.market, cfg.labor, cfg.sim.mesh(cfg.labor.d));
  const StatePoint s = initial_state(cfg.labor, cfg.w0, dc.profiles.mesh);
  emit(o, solve_report(dc, s).dump(2) + "\n");
  return kExitPass;
}

int cmd_simulate(const Options& o) {
  const RunConfig cfg = load(o);
  require_gates(cfg);
  const DerivedConstants dc = derive_constants(cfg.market, cfg.labor, cfg.sim.mesh(cfg.labor.d));
  WealthOptions wo;
  wo.w0 = cfg.w0;
  const Trajectory tr = simulate_wealth(dc, cfg.policy.spec(), cfg.sim, wo);
  std::ostringstream csv;
  write_trajectory_csv(csv, tr);
  emit(o, csv.str());

  std::ostream& log = o.out.empty() ? std::cerr : std::cout;
  const std::size_t last = tr.steps.size() - 1;
  const Summary w = summarize(tr.W.data() + last * tr.n_paths, tr.n_paths);
  const Summary g = summarize(tr.Gamma.data() + last * tr.n_paths, tr.n_paths);
  std::size_t stopped = 0;
  for (auto f : tr.frozen) stopped += f;
  log << "paths " << tr.n_paths << ", steps " << tr.steps.back() << ", T " << format_number(tr.times[last]) << "\n"
      << "Gamma(0) " << format_number(tr.gamma0) << "\n"
      << "E[W(T)] " << format_number(w.mean) << " (se " << format_number(w.se) << ")\n"
      << "E[Gamma(T)] " << format_number(g.mean) << " (se " << format_number(g.se) << ")\n"
      << "paths reaching Gamma = 0: " << stopped << "\n";
  return kExitPass;
}

int cmd_verify(const Options& o) {
  const RunConfig cfg = load(o);
  std::vector<std::string> names;
  for (const auto& s : o.suites.empty() ? std::vector<std::string>{"all"} : o.suites) {
    if (s == "all") {
      names.insert(names.end(), suite_names().begin(), suite_names().end());
    } else if (std::find(suite_names().begin(), suite_names().end(), s) != suite_names().end()) {
      names.push_back(s);
    } else {
      fail(ErrorKind::ConfigError, "unknown suite '" + s + "'");
    }
  }
  for (const auto& s : names) {
    if (suite_needs_gamma_below_one(s) && !(cfg.market.gamma < 1.0)) {
      fail(ErrorKind::GammaOutOfRange, "suite '" + s + "' is verified for gamma in (0,1) only; got gamma = " +
                                           format_number(cfg.market.gamma));
    }
  }
  require_gates(cfg);

  SuiteReport all;
  for (const auto& s : names) {
    SuiteReport rep = run_suite(s, cfg.market, cfg.labor, cfg.verify);
    for (const auto& r : rep) {
      std::cerr << "[" << s << "] " << r.name << " " << (r.pass ? "PASS" : "FAIL") << " ("
                << format_number(r.runtime_seconds) << " s)\n";
    }
    all.insert(all.end(), rep.begin(), rep.end());
  }
  const std::string json = to_json(all).dump(2) + "\n";
  if (!o.out.empty()) emit(o, json);
  print_table(std::cout, all);
  if (o.out.empty()) std::cout << json;
  bool ok = true;
  for (const auto& r : all) ok = ok && r.pass;
  return ok ? kExitPass : kExitFailure;
}

int exit_code_for(ErrorKind k) {
  switch (k) {
    case ErrorKind::ConfigError:
    case ErrorKind::SingularSigma:
    case ErrorKind::MeshMismatch:
    case ErrorKind::InvalidArgument:
      return kExitConfig;
    case ErrorKind::HypothesisViolation:
    case ErrorKind::GammaOutOfRange:
    case ErrorKind::DominationFailure:
    case ErrorKind::OutsideConstraintSet:
      return kExitFailure;
    default:
      return kExitRuntime;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Mean-field Merton problem with delayed labor income"};
  app.require_subcommand(1);
  Options o;
  app.add_option("--config", o.config, "configuration file (JSON)")->required();
  app.add_option("--seed", o.seed, "override the configured seed");
  app.add_option("--out", o.out, "output file (default: standard output)");
  app.add_option("--suite", o.suites, "verification suites, comma separated")->delimiter(',');
  app.fallthrough();

  int code = kExitPass;
  auto* check = app.add_subcommand("check-params", "evaluate the hypotheses and spectral bounds");
  auto* solve = app.add_subcommand("solve", "closed-form constants, value and initial controls");
  auto* simulate = app.add_subcommand("simulate", "simulate wealth paths and write CSV");
  auto* verify = app.add_subcommand("verify", "run verification suites");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitConfig;
  }

  try {
    if (check->parsed()) code = cmd_check_params(o);
    if (solve->parsed()) code = cmd_solve(o);
    if (simulate->parsed()) code = cmd_simulate(o);
    if (verify->parsed()) code = cmd_verify(o);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return code;
}
