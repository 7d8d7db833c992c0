#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "mfmerton/config.hpp"
#include "test_helpers.hpp"

using namespace mfmerton;

namespace {

std::string reference_text() {
  std::ifstream in(std::string(MFMERTON_SOURCE_DIR) + "/configs/reference.json");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Applies a textual substitution to the reference document.
std::string edited(const std::string& from, const std::string& to) {
  std::string t = reference_text();
  const auto at = t.find(from);
  if (at == std::string::npos) throw std::runtime_error("pattern not found: " + from);
  return t.replace(at, from.size(), to);
}

std::string config_error(const std::string& text) {
  try {
    parse_config(text);
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::ConfigError) << e.what();
    return e.what();
  }
  ADD_FAILURE() << "config was accepted";
  return {};
}

}  // namespace

TEST(Config, ReferenceParsesToHelperParameters) {
  const RunConfig cfg = load_config(std::string(MFMERTON_SOURCE_DIR) + "/configs/reference.json");
  const MarketParams m = testing_support::reference_market();
  const LaborParams l = testing_support::reference_labor();
  EXPECT_EQ(cfg.market.r, m.r);
  EXPECT_LT((cfg.market.mu - m.mu).norm(), 1e-15);
  EXPECT_EQ(cfg.market.sigma, m.sigma);
  EXPECT_EQ(cfg.labor.sigma_y, l.sigma_y);
  EXPECT_EQ(cfg.labor.kernel.pieces(), 5u);
  EXPECT_EQ(cfg.w0, 1.0);
  EXPECT_EQ(cfg.sim.seed, 42u);
  EXPECT_EQ(cfg.sim.steps(), 100u);
  EXPECT_EQ(cfg.verify.seed, 42u);
  EXPECT_EQ(cfg.verify.w0, 1.0);
  EXPECT_EQ(cfg.verify.n_list, (std::vector<std::size_t>{10, 100, 1000}));
  EXPECT_EQ(cfg.policy.type, "optimal");
}

TEST(Config, OptionalSectionsUseDefaults) {
  std::string t = reference_text();
  const auto cut = t.find(",\n  \"state\"");
  t = t.substr(0, cut) + "\n}\n";
  const RunConfig cfg = parse_config(t);
  EXPECT_EQ(cfg.w0, 0.0);
  EXPECT_EQ(cfg.sim.dt, SimConfig{}.dt);
  EXPECT_EQ(cfg.policy.type, "optimal");
}

TEST(Config, UnknownKeyIsReportedWithPath) {
  const std::string msg = config_error(edited("\"delta\": 0.4", "\"delta\": 0.4, \"deltaa\": 1"));
  EXPECT_NE(msg.find("/market/deltaa"), std::string::npos) << msg;
  EXPECT_NE(msg.find("unknown key"), std::string::npos) << msg;
  EXPECT_NE(msg.find("line 6"), std::string::npos) << msg;
}

TEST(Config, MalformedJsonReportsLineAndColumn) {
  const std::string msg = config_error(edited("\"rho\": 0.3,", "\"rho\": 0.3,,"));
  EXPECT_NE(msg.find("line 7"), std::string::npos) << msg;
  EXPECT_NE(msg.find("column"), std::string::npos) << msg;
}

TEST(Config, MissingFieldIsNamed) {
  const std::string msg = config_error(edited("\"mu_y\": 0.01,", ""));
  EXPECT_NE(msg.find("/labor/mu_y"), std::string::npos) << msg;
  EXPECT_NE(msg.find("missing"), std::string::npos) << msg;
}

TEST(Config, WrongTypeIsRejected) {
  const std::string msg = config_error(edited("\"gamma\": 0.5", "\"gamma\": \"half\""));
  EXPECT_NE(msg.find("/market/gamma"), std::string::npos) << msg;
}

TEST(Config, UnknownKernelVariantIsRejected) {
  const std::string msg = config_error(edited("\"variant\": \"grid\"", "\"variant\": \"spline\""));
  EXPECT_NE(msg.find("/labor/kernel/variant"), std::string::npos) << msg;
}

TEST(Config, KernelVariantsParse) {
  EXPECT_NO_THROW(parse_config(edited("{\"variant\": \"grid\", \"values\": [0.2, -0.1, 0.15, -0.05, 0.1]}",
                                      "{\"variant\": \"exponential\", \"c\": 0.2, \"a\": 1.0}")));
  EXPECT_NO_THROW(parse_config(edited("{\"variant\": \"grid\", \"values\": [0.2, -0.1, 0.15, -0.05, 0.1]}",
                                      "{\"variant\": \"zero\"}")));
  EXPECT_NO_THROW(parse_config(edited("{\"variant\": \"exponential\", \"level\": 1.0, \"rate\": 0.05}",
                                      "{\"variant\": \"samples\", \"values\": [1.0, 1.1]}")));
}

TEST(Config, SingularVolatilityIsAConfigError) {
  const std::string msg = config_error(edited("[[0.2, 0.0], [0.05, 0.25]]", "[[0.2, 0.1], [0.4, 0.2]]"));
  EXPECT_NE(msg.find("SingularSigma"), std::string::npos) << msg;
}

TEST(Config, UnsupportedSchemeIsRejected) {
  const std::string msg = config_error(edited("\"euler_maruyama\"", "\"milstein\""));
  EXPECT_NE(msg.find("/sim/scheme"), std::string::npos) << msg;
}

TEST(Config, HorizonOffTheStepGridIsRejected) {
  config_error(edited("\"horizon\": 1.0", "\"horizon\": 1.005"));
}

TEST(Config, NegativeSeedIsRejected) {
  const std::string msg = config_error(edited("\"seed\": 42", "\"seed\": -1"));
  EXPECT_NE(msg.find("/sim/seed"), std::string::npos) << msg;
}

TEST(Config, ScaledPolicyRoundTrips) {
  const RunConfig cfg = parse_config(
      edited("{\"type\": \"optimal\"}", "{\"type\": \"scaled\", \"consumption_scale\": 1.5, \"bequest_scale\": 0.5}"));
  const PolicySpec p = cfg.policy.spec();
  EXPECT_EQ(p.consumption_scale, 1.5);
  EXPECT_EQ(p.bequest_scale, 0.5);
  EXPECT_FALSE(p.is_optimal());
}

TEST(Config, MissingFileIsAConfigError) {
  try {
    load_config("/nonexistent/config.json");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::ConfigError);
  }
}
