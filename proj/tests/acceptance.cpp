// Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any criterion fails.
// Usage: acceptance [criterion numbers...]
#include <sys/wait.h>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>

#include "mfmerton/config.hpp"
#include "mfmerton/mfmerton.hpp"

namespace fs = std::filesystem;
using namespace mfmerton;

namespace {

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << " [failed: " << what << "]";
    }
  }
  void absorb(const SuiteReport& rep) {
    for (const auto& r : rep) {
      detail << " " << r.name << "=" << format_number(r.estimate);
      if (r.comparison != Comparison::WithinTolerance || r.standard_error > 0.0) {
        detail << "(target " << format_number(r.target) << ", se " << format_number(r.standard_error) << ")";
      }
      require(r.pass, r.name);
    }
  }
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

const RunConfig& reference() {
  static const RunConfig cfg = load_config(std::string(MFMERTON_SOURCE_DIR) + "/configs/reference.json");
  return cfg;
}

void hjb(Outcome& o, double) {
  o.absorb(run_suite("hjb", reference().market, reference().labor, reference().verify));
}

void human_capital(Outcome& o, double budget) {
  const RunConfig& ref = reference();
  std::vector<std::pair<std::string, KernelSpec>> kernels = {
      {"grid", ref.labor.kernel},
      {"exponential", KernelSpec::exponential(ref.labor.d, -0.4, 2.0)},
      {"constant", KernelSpec::constant(ref.labor.d, 0.3)}};
  for (const auto& [label, k] : kernels) {
    LaborParams l = ref.labor;
    l.kernel = k;
    const auto t0 = std::chrono::steady_clock::now();
    const SuiteReport rep = run_suite("human_capital", ref.market, l, ref.verify);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    o.detail << " {" << label << " " << format_number(std::round(secs * 10) / 10) << "s";
    o.absorb(rep);
    o.detail << "}";
    o.require(secs < budget, label + " runtime");
  }
  bool sign_changing = false;
  for (double v : std::get<KernelSpec::Grid>(ref.labor.kernel.shape).values) sign_changing |= v < 0.0;
  o.require(sign_changing, "grid kernel changes sign");
}

void fundamental(Outcome& o, double) {
  const RunConfig& ref = reference();
  const VerifySettings& s = ref.verify;
  o.absorb(verify_fundamental_identity(ref.market, ref.labor, std::vector<PolicySpec>{PolicySpec::scaled(s.perturbation)},
                                       suite_config(s, s.fi_paths, s.fi_dt, s.fi_horizon), s.w0));
}

void closure(Outcome& o, double) {
  o.absorb(run_suite("gamma_star", reference().market, reference().labor, reference().verify));
}

void boundary(Outcome& o, double) {
  const RunConfig& ref = reference();
  const SuiteReport rep = run_suite("boundary", ref.market, ref.labor, ref.verify);
  o.absorb(rep);
  for (const std::string name :
       {"boundary_gamma_zero", "boundary_consumption_zero", "boundary_bequest_zero", "boundary_exposure_zero"}) {
    bool exact = false;
    for (const auto& r : rep) exact |= r.name == name && r.estimate == 0.0;
    o.require(exact, name + " exactly zero");
  }
}

void chaos(Outcome& o, double) {
  const RunConfig& ref = reference();
  o.require(ref.verify.n_list == std::vector<std::size_t>({10, 100, 1000}) && ref.verify.replicates == 50,
            "reference n_list and replicates");
  const SuiteReport rep = run_suite("chaos", ref.market, ref.labor, ref.verify);
  o.absorb(rep);
  o.require(rep.size() == 1 && rep[0].name == "chaos_slope" && rep[0].estimate >= -0.8 && rep[0].estimate <= -0.2,
            "slope in [-0.8, -0.2]");
}

void spectral(Outcome& o, double) {
  o.absorb(run_suite("spectral", reference().market, reference().labor, reference().verify));
}

struct CliRun {
  int code = -1;
  std::string out;
};

CliRun cli(const std::string& args, const fs::path& dir) {
  const fs::path o = dir / "stdout.txt";
  const std::string cmd = std::string(MFMERTON_CLI) + " " + args + " > " + o.string() + " 2> /dev/null";
  const int status = std::system(cmd.c_str());
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(o)};
}

void determinism(Outcome& o, double) {
  const fs::path dir = fs::temp_directory_path() / "mfmerton_acceptance";
  fs::create_directories(dir);
  std::string text = slurp(std::string(MFMERTON_SOURCE_DIR) + "/configs/reference.json");
  auto sub = [&](const std::string& from, const std::string& to) { text.replace(text.find(from), from.size(), to); };
  sub("\"replicates\": 50", "\"replicates\": 50, \"mean_field_paths\": 20000, \"hc_paths\": 5000, "
                            "\"fi_paths\": 1000, \"fi_horizon\": 2.0, \"super_paths\": 1000, "
                            "\"gamma_star_paths\": 5000, \"boundary_paths\": 100, \"draws\": 200, \"states\": 20");
  sub("\"n_list\": [10, 100, 1000]", "\"n_list\": [10, 20, 40]");
  std::vector<fs::path> configs;
  for (unsigned threads : {1u, 4u}) {
    std::string t = text;
    t.replace(t.find("\"threads\": 0"), 12, "\"threads\": " + std::to_string(threads));
    configs.push_back(dir / ("threads" + std::to_string(threads) + ".json"));
    std::ofstream(configs.back(), std::ios::binary) << t;
  }
  const std::vector<std::string> commands = {"check-params", "solve", "simulate --seed 7", "verify --suite all"};
  for (const auto& cmd : commands) {
    std::vector<std::string> outputs;
    for (const auto& c : configs) {
      for (int rep = 0; rep < 2; ++rep) {
        const CliRun r = cli(cmd + " --config " + c.string(), dir);
        o.require(r.code == 0, cmd + " exit code " + std::to_string(r.code));
        outputs.push_back(r.out);
      }
    }
    bool same = true;
    for (const auto& s : outputs) same &= s == outputs.front() && !s.empty();
    o.detail << " " << cmd.substr(0, cmd.find(' ')) << ":" << (same ? "identical" : "differs") << "("
             << outputs.front().size() << " bytes)";
    o.require(same, cmd + " byte identical");
  }
  fs::remove_all(dir);
}

void mean_field(Outcome& o, double) {
  const RunConfig& ref = reference();
  o.require(ref.verify.mean_field_paths >= 100000, "100000 paths");
  o.absorb(run_suite("mean_field", ref.market, ref.labor, ref.verify));
}

void supermartingale(Outcome& o, double) {
  const RunConfig& ref = reference();
  o.require(ref.verify.super_horizons == std::vector<double>({1.0, 5.0, 10.0}), "horizons {1, 5, 10}");
  o.absorb(run_suite("supermartingale", ref.market, ref.labor, ref.verify));
}

struct Criterion {
  int id;
  const char* name;
  double budget;  // seconds, 0 = none stated
  std::function<void(Outcome&, double)> run;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> criteria = {
      {1, "hjb residual and identity", 5.0, hjb},
      {2, "human capital vs Monte Carlo", 0.0, [](Outcome& o, double) { human_capital(o, 60.0); }},
      {3, "fundamental identity", 90.0, fundamental},
      {4, "analytic closure", 30.0, closure},
      {5, "boundary behaviour", 5.0, boundary},
      {6, "propagation of chaos", 180.0, chaos},
      {7, "spectral roots and domination", 10.0, spectral},
      {8, "determinism", 0.0, determinism},
      {9, "mean-field consistency", 30.0, mean_field},
      {10, "supermartingale bound", 0.0, supermartingale},
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));

  int failures = 0;
  for (const auto& c : criteria) {
    if (!selected.empty() && !selected.count(c.id)) continue;
    Outcome o;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      c.run(o, c.budget);
    } catch (const std::exception& e) {
      o.require(false, std::string("exception: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (c.budget > 0.0) o.require(secs < c.budget, "runtime budget " + format_number(c.budget) + " s");
    if (!o.pass) ++failures;
    std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << c.id << " (" << c.name << ", "
              << format_number(std::round(secs * 100) / 100) << " s):" << o.detail.str() << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
