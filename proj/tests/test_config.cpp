#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "ebsde/config.hpp"

using namespace ebsde;

namespace {
std::optional<ErrorCode> code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  return std::nullopt;
}
}  // namespace

TEST(Config, DefaultsCoverSchema) {
  Config c;
  for (const auto& k : config_schema()) EXPECT_EQ(c.text(k.key), k.fallback);
  EXPECT_EQ(c.seed(), 1u);
  EXPECT_EQ(c.real("grid.h"), 0.01);
}

TEST(Config, ParsesGrammar) {
  Config c;
  c.merge_text("# comment\n\n  grid.h = 0.02   # trailing\nmodel.kappa = 1.0, 0.83\nestimator.M = 1e5\n"
               "train.resample = yes\ndriver.free_coords = 0,1\n");
  EXPECT_EQ(c.real("grid.h"), 0.02);
  EXPECT_EQ(c.reals("model.kappa"), (std::vector<double>{1.0, 0.83}));
  EXPECT_EQ(c.count("estimator.M"), 100000u);
  EXPECT_TRUE(c.flag("train.resample"));
  EXPECT_EQ(c.counts("driver.free_coords"), (std::vector<std::size_t>{0, 1}));
  EXPECT_EQ(c.text("model.kappa"), "1,0.83");
}

TEST(Config, Rejections) {
  Config c;
  EXPECT_EQ(code_of([&] { c.merge_text("nope.key = 1\n"); }), ErrorCode::ConfigError);
  EXPECT_EQ(code_of([&] { c.merge_text("grid.h = 0.1\ngrid.h = 0.2\n"); }), ErrorCode::ConfigError);
  EXPECT_EQ(code_of([&] { c.merge_text("grid.h 0.1\n"); }), ErrorCode::ConfigError);
  EXPECT_EQ(code_of([&] { c.set("grid.h", "abc"); }), ErrorCode::ConfigError);
  EXPECT_EQ(code_of([&] { c.set("train.steps", "1.5"); }), ErrorCode::ConfigError);
  EXPECT_EQ(code_of([&] { c.set("driver.kind", "quadratic"); }), ErrorCode::ConfigError);
  EXPECT_EQ(code_of([&] { c.set("train.resample", "maybe"); }), ErrorCode::ConfigError);
  EXPECT_EQ(code_of([&] { c.set("model.kappa", "1,x"); }), ErrorCode::ConfigError);
  EXPECT_EQ(code_of([&] { c.merge_file("/nonexistent.conf"); }), ErrorCode::IoError);
  EXPECT_EQ(code_of([] { preset_config("example9"); }), ErrorCode::ConfigError);
}

TEST(Config, LaterSourcesOverride) {
  Config c = preset_config("example2");
  c.merge_text("grid.h = 0.02\n");
  c.set("train.seed", "9");
  EXPECT_EQ(c.real("grid.h"), 0.02);
  EXPECT_EQ(c.seed(), 9u);
  EXPECT_EQ(c.real("driver.C_v"), 0.75);
}

TEST(Config, HashStableAndIgnoresOutput) {
  Config a = preset_config("example1"), b = preset_config("example1");
  EXPECT_EQ(a.hash(), b.hash());
  b.set("output.dir", "/tmp/elsewhere");
  EXPECT_EQ(a.hash(), b.hash());
  b.set("grid.h", "0.010");  // same canonical value
  EXPECT_EQ(a.hash(), b.hash());
  b.set("train.seed", "2");
  EXPECT_NE(a.hash(), b.hash());
  EXPECT_EQ(a.hash_hex().size(), 16u);
  EXPECT_EQ(a.provenance(), "config_hash=" + a.hash_hex() + " seed=1");
  // dump round-trips
  Config c;
  c.merge_text(a.dump());
  EXPECT_EQ(c.dump(), a.dump());
}

TEST(Presets, MatchConfigFiles) {
  for (const auto& [name, text] : preset_texts()) {
    const std::filesystem::path p = std::filesystem::path(EBSDE_CONFIG_DIR) / (name + ".conf");
    std::ifstream in(p);
    ASSERT_TRUE(in) << p;
    std::stringstream ss;
    ss << in.rdbuf();
    EXPECT_EQ(ss.str(), text) << name;
    Config c;
    c.merge_file(p.string());
    EXPECT_EQ(c.hash(), preset_config(name).hash());
  }
}

TEST(Presets, AllBuild) {
  for (const auto& [name, text] : preset_texts()) {
    const Config c = preset_config(name);
    EXPECT_NO_THROW(build_solver_config(c)) << name;
    EXPECT_NO_THROW(build_method(c)) << name;
  }
}

TEST(Builders, ExamplePresets) {
  const Config c = preset_config("example2");
  const SolverConfig s = build_solver_config(c);
  EXPECT_EQ(s.kind, SolverKind::GeBSDE);
  EXPECT_EQ(s.model.kappa[0], std::sqrt(2.0));
  EXPECT_EQ(s.driver.kind, DriverKind::Example2);
  EXPECT_NEAR(s.K, 0.75 / std::sqrt(std::exp(1.0)), 1e-12);
  const auto o = build_oracle(c, s.model, s.driver);
  ASSERT_TRUE(o.has_value());
  EXPECT_EQ(s.y0, o->y(0.0));
  const SolverConfig e1 = build_solver_config(preset_config("example1"));
  EXPECT_NEAR(e1.K, 1.0 / std::sqrt(std::exp(1.0)), 1e-12);
}

TEST(Builders, PowerAndTwoDim) {
  const SolverConfig p = build_solver_config(preset_config("power-5.3"));
  EXPECT_EQ(p.driver.kind, DriverKind::Power);
  EXPECT_NEAR(p.K, 4.5, 1e-12);
  EXPECT_NEAR(p.y0, 0.0, 1e-15);
  const Config two = preset_config("two-dim-5.3");
  const SolverConfig t = build_solver_config(two);
  EXPECT_EQ(t.model.dims(), 2u);
  EXPECT_EQ(t.driver.pi.kind, SetKind::AxisSubspace);
  EXPECT_EQ(t.driver.pi.free, (std::vector<std::size_t>{0}));
  EXPECT_FALSE(build_oracle(two, t.model, t.driver).has_value());
}

TEST(Builders, InvalidValuesSurface) {
  Config c = preset_config("example1");
  c.set("grid.h", "0");
  EXPECT_THROW(build_solver_config(c), Error);
  c = preset_config("example1");
  c.set("driver.K", "-1");
  EXPECT_EQ(code_of([&] { build_solver_config(c); }), ErrorCode::ConfigError);
  c = preset_config("example1");
  c.set("driver.K", "abc");
  EXPECT_EQ(code_of([&] { build_solver_config(c); }), ErrorCode::ConfigError);
  c = preset_config("example1");
  c.set("train.y0", "0.25");
  EXPECT_EQ(build_solver_config(c).y0, 0.25);
  c.set("driver.truncate", "true");
  EXPECT_TRUE(build_solver_config(c).driver.truncate);
}
