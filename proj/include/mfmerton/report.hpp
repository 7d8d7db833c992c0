#pragma once

#include <cstdio>
#include <ostream>
#include <string>
#include <vector>

#include "json.hpp"
#include "mfmerton/closed_form.hpp"
#include "mfmerton/delay_sde.hpp"
#include "mfmerton/model_params.hpp"
#include "mfmerton/spectral.hpp"
#include "mfmerton/verify.hpp"

namespace mfmerton {

using Json = nlohmann::ordered_json;

inline Json to_json(const Eigen::VectorXd& v) {
  Json a = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

inline Json to_json(const HypothesisReport& h) {
  Json j;
  j["kappa"] = to_json(h.kappa);
  j["sigma_y_kappa"] = h.sigma_y_kappa;
  j["spread"] = h.spread;
  j["abs_moment"] = h.abs_moment;
  j["K1_tilde"] = h.K1_tilde;
  j["K2_tilde"] = h.K2_tilde;
  j["hyp_K_branch"] = to_string(h.hyp_K_branch);
  j["hyp_K_ok"] = h.hyp_K_ok;
  j["hyp_K_margin"] = h.hyp_K_margin;
  j["hyp_gamma_ok"] = h.hyp_gamma_ok;
  j["hyp_gamma_margin"] = h.hyp_gamma_margin;
  if (!h.ok()) j["failure"] = h.failure();
  return j;
}

inline Json to_json(const SpectralReport& s) {
  Json j;
  j["xi1"] = s.xi1;
  j["xi2"] = s.xi2;
  j["xi0"] = s.xi0;
  j["lambda0_tilde"] = s.lambda0_tilde;
  j["discount"] = s.discount;
  j["spread"] = s.spread;
  j["dominated"] = s.dominated;
  return j;
}

inline Json check_params_report(const MarketParams& m, const LaborParams& l, bool& ok) {
  const HypothesisReport h = check_hypotheses(m, l);
  const SpectralReport s = find_real_roots(m, l);
  ok = h.ok() && s.dominated;
  Json j;
  j["ok"] = ok;
  j["hypotheses"] = to_json(h);
  j["spectral"] = to_json(s);
  return j;
}

inline Json solve_report(const DerivedConstants& dc, const StatePoint& s) {
  Json j;
  j["kappa"] = to_json(dc.kappa);
  j["g_inf"] = dc.g_inf;
  j["i_inf"] = dc.i_inf;
  j["beta"] = dc.beta;
  j["b"] = dc.b;
  j["nu"] = dc.nu;
  j["f_inf"] = dc.f_inf;
  Json h;
  h["s"] = Json::array();
  h["value"] = Json::array();
  const TimeMesh& mesh = dc.profiles.mesh;
  for (std::size_t k = 0; k < dc.profiles.h.size(); ++k) {
    h["s"].push_back(mesh.point(k));
    h["value"].push_back(dc.profiles.h[k]);
  }
  j["h_inf"] = h;
  j["human_capital"] = human_capital(dc, s);
  const double G = gamma_infinity(dc, s);
  j["gamma_inf"] = G;
  j["value"] = value_from_gamma(dc, G);
  const ControlTriple pi = feedback_from_gamma(dc, G, s.y0);
  Json c;
  c["c"] = pi.c;
  c["B"] = pi.B;
  c["theta"] = to_json(pi.theta);
  j["controls"] = c;
  return j;
}

inline Json to_json(const VerificationResult& r) {
  Json j;
  j["name"] = r.name;
  j["pass"] = r.pass;
  j["estimate"] = r.estimate;
  j["target"] = r.target;
  j["standard_error"] = r.standard_error;
  j["tolerance"] = r.tolerance;
  j["comparison"] = to_string(r.comparison);
  j["n_paths"] = r.n_paths;
  j["dt"] = r.dt;
  Json ex = Json::object();
  for (const auto& [k, v] : r.extras) ex[k] = v;
  j["extras"] = ex;
  return j;
}

inline Json to_json(const SuiteReport& rep) {
  Json a = Json::array();
  for (const auto& r : rep) a.push_back(to_json(r));
  return a;
}

inline void print_table(std::ostream& os, const SuiteReport& rep) {
  char line[256];
  std::snprintf(line, sizeof(line), "%-44s %-5s %14s %14s %11s %11s\n", "check", "pass", "estimate", "target", "se",
                "tolerance");
  os << line;
  for (const auto& r : rep) {
    std::snprintf(line, sizeof(line), "%-44s %-5s %14.7g %14.7g %11.3g %11.3g\n", r.name.c_str(),
                  r.pass ? "PASS" : "FAIL", r.estimate, r.target, r.standard_error, r.tolerance);
    os << line;
  }
}

}  // namespace mfmerton
