#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include "doctest.h"
#include "mof/config.hpp"
#include "mof/error.hpp"

using namespace mof;
namespace fs = std::filesystem;

namespace {

struct EnvGuard {
  std::string name;
  std::string saved;
  bool had;
  explicit EnvGuard(const std::string& n) : name(n) {
    const char* v = std::getenv(n.c_str());
    had = v != nullptr;
    if (had) saved = v;
  }
  ~EnvGuard() {
    if (had)
      setenv(name.c_str(), saved.c_str(), 1);
    else
      unsetenv(name.c_str());
  }
};

std::string temp_config_path() {
  static int n = 0;
  return (fs::temp_directory_path() /
          ("mof_cfg_" + std::to_string(::getpid()) + "_" + std::to_string(n++)))
      .string();
}

}  // namespace

TEST_CASE("defaults carry the documented training setup") {
  RunConfig cfg;
  CHECK(cfg.u == 2);
  CHECK(cfg.r == 16);
  CHECK(cfg.alpha == 1e-3);
  CHECK(cfg.beta == 8e-4);
  CHECK(cfg.inner_steps == 1);
  CHECK(cfg.batch_size == 16);
  CHECK(cfg.eval_every == 0);
  CHECK(cfg.k_test == 0);
  CHECK(cfg.workers == 1);
  CHECK(cfg.precision == "f32");
  CHECK(cfg.preset == "toy-lr");
}

TEST_CASE("presets pin the learning rates") {
  RunConfig cfg;
  cfg.alpha = 99.0;
  cfg.beta = 99.0;
  cfg.batch_size = 1;
  apply_preset(cfg, "toy-lr");
  CHECK(cfg.alpha == 1e-3);
  CHECK(cfg.beta == 8e-4);
  CHECK(cfg.batch_size == 16);
  CHECK(cfg.preset == "toy-lr");

  apply_preset(cfg, "paper-lr");
  CHECK(cfg.alpha == 1e-5);
  CHECK(cfg.beta == 8e-4);
  CHECK(cfg.batch_size == 16);

  CHECK_THROWS_AS(apply_preset(cfg, "warp-speed"), ConfigError);
}

TEST_CASE("set_config_key parses every field type") {
  RunConfig cfg;
  set_config_key(cfg, "u", "4");
  CHECK(cfg.u == 4);
  set_config_key(cfg, "alpha", "0.25");
  CHECK(cfg.alpha == 0.25);
  set_config_key(cfg, "no_mof", "true");
  CHECK(cfg.no_mof);
  set_config_key(cfg, "no_mof", "0");
  CHECK_FALSE(cfg.no_mof);
  set_config_key(cfg, "data", "some/path.bin");
  CHECK(cfg.data == "some/path.bin");
  set_config_key(cfg, "seed", "12345");
  CHECK(cfg.seed == 12345);
  set_config_key(cfg, "preset", "paper-lr");
  CHECK(cfg.alpha == 1e-5);

  CHECK_THROWS_AS(set_config_key(cfg, "unknown_key", "1"), ConfigError);
  CHECK_THROWS_AS(set_config_key(cfg, "u", "four"), ConfigError);
  CHECK_THROWS_AS(set_config_key(cfg, "u", "4x"), ConfigError);
  CHECK_THROWS_AS(set_config_key(cfg, "alpha", ""), ConfigError);
  CHECK_THROWS_AS(set_config_key(cfg, "no_mof", "maybe"), ConfigError);
  CHECK_THROWS_AS(set_config_key(cfg, "seed", "-3"), ConfigError);
}

TEST_CASE("rendered configs re-parse to the same run") {
  RunConfig cfg;
  cfg.u = 3;
  cfg.r = 12;
  cfg.phases = 77;
  cfg.alpha = 1.25e-4;
  cfg.beta = 3.5e-5;
  cfg.seed = 991;
  cfg.data = "ds.bin";
  cfg.out = "runs/a";
  cfg.k_test = 2;
  cfg.no_mof = true;
  cfg.precision = "f64";

  std::string path = temp_config_path();
  write_config(path, cfg);
  RunConfig back;
  apply_config_pairs(back, read_config_pairs(path));
  fs::remove(path);

  CHECK(back.u == cfg.u);
  CHECK(back.r == cfg.r);
  CHECK(back.phases == cfg.phases);
  CHECK(back.alpha == cfg.alpha);
  CHECK(back.beta == cfg.beta);
  CHECK(back.seed == cfg.seed);
  CHECK(back.data == cfg.data);
  CHECK(back.out == cfg.out);
  CHECK(back.k_test == cfg.k_test);
  CHECK(back.no_mof == cfg.no_mof);
  CHECK(back.precision == cfg.precision);
  CHECK(render_config(back) == render_config(cfg));
}

TEST_CASE("config files allow comments and blank lines") {
  std::string path = temp_config_path();
  {
    std::ofstream f(path);
    f << "# a comment\n\n  u = 5 \nphases=9\n# another\n";
  }
  auto pairs = read_config_pairs(path);
  fs::remove(path);
  REQUIRE(pairs.size() == 2);
  CHECK(pairs[0].first == "u");
  CHECK(pairs[0].second == "5");
  RunConfig cfg;
  apply_config_pairs(cfg, pairs);
  CHECK(cfg.u == 5);
  CHECK(cfg.phases == 9);
}

TEST_CASE("a preset entry applies before explicit keys in the same file") {
  std::string path = temp_config_path();
  {
    std::ofstream f(path);
    f << "alpha=0.5\npreset=toy-lr\n";
  }
  RunConfig cfg;
  apply_config_pairs(cfg, read_config_pairs(path));
  fs::remove(path);
  // the explicit alpha wins even though it precedes the preset line
  CHECK(cfg.alpha == 0.5);
  CHECK(cfg.beta == 8e-4);
}

TEST_CASE("missing config files are an io error") {
  CHECK_THROWS_AS(read_config_pairs("definitely/not/here.cfg"), IoError);
}

TEST_CASE("malformed config lines are rejected") {
  std::string path = temp_config_path();
  {
    std::ofstream f(path);
    f << "just words without equals\n";
  }
  CHECK_THROWS_AS(read_config_pairs(path), ConfigError);
  fs::remove(path);
}

TEST_CASE("the seed environment variable is honored when valid") {
  EnvGuard guard("MOF_SEED");
  unsetenv("MOF_SEED");
  CHECK_FALSE(seed_from_env().has_value());
  setenv("MOF_SEED", "777", 1);
  REQUIRE(seed_from_env().has_value());
  CHECK(*seed_from_env() == 777);
  setenv("MOF_SEED", "", 1);
  CHECK_FALSE(seed_from_env().has_value());
  setenv("MOF_SEED", "not-a-number", 1);
  CHECK_THROWS_AS(seed_from_env(), ConfigError);
}

TEST_CASE("precision strings map to tensor precisions") {
  RunConfig cfg;
  cfg.precision = "f32";
  CHECK(cfg.prec() == Prec::f32);
  cfg.precision = "f64";
  CHECK(cfg.prec() == Prec::f64);
  cfg.precision = "f16";
  CHECK_THROWS_AS(cfg.prec(), ConfigError);
}

TEST_CASE("phase and encoder views mirror the flat config") {
  RunConfig cfg;
  cfg.u = 4;
  cfg.r = 8;
  cfg.phases = 33;
  cfg.alpha = 2e-3;
  cfg.first_order = true;
  cfg.dh = 24;
  cfg.d = 12;
  cfg.precision = "f64";

  PhaseConfig p = cfg.phase();
  CHECK(p.u == 4);
  CHECK(p.r == 8);
  CHECK(p.t == 33);
  CHECK(p.alpha == 2e-3);
  CHECK(p.first_order);

  EncoderConfig e = cfg.encoder();
  CHECK(e.dh == 24);
  CHECK(e.d == 12);
  CHECK(e.prec == Prec::f64);
}
