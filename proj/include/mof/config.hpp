#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "mof/bop.hpp"
#include "mof/encoders.hpp"

namespace mof {

/// Everything a run needs, flat and serializable. File format is key=value
/// lines; a written config reproduces the run it came from.
struct RunConfig {
  // phase loop
  int64_t u = 2;
  int64_t r = 16;
  int64_t phases = 200;
  double alpha = 1e-3;
  double beta = 8e-4;
  int64_t inner_steps = 1;
  int64_t batch_size = 16;
  int64_t eval_every = 0;
  bool first_order = false;
  uint64_t seed = 0;
  // model dims (frame geometry and vocab come from the dataset)
  int64_t patch = 4;
  int64_t dh = 32;
  int64_t d = 16;
  int64_t umax = 32;
  std::string precision = "f32";
  // run plumbing
  std::string data;
  std::string out = "run";
  std::string preset = "toy-lr";
  int64_t k_test = 0;  // 0 resolves to u
  bool no_mof = false;
  bool no_timing = false;
  int64_t workers = 1;

  PhaseConfig phase() const;
  EncoderConfig encoder() const;
  Prec prec() const;
};

/// Learning-rate presets. "toy-lr" is the from-scratch default, "paper-lr"
/// the small finetuning rate; both pin beta=8e-4 and batch_size=16.
void apply_preset(RunConfig& cfg, const std::string& name);

/// Assign one key. Unknown keys and malformed values raise ConfigError.
/// "preset" applies the named preset in place.
void set_config_key(RunConfig& cfg, const std::string& key, const std::string& value);

/// key=value pairs in file order; '#' starts a comment, blank lines skipped.
std::vector<std::pair<std::string, std::string>> read_config_pairs(const std::string& path);

/// Apply one layer of pairs: a "preset" entry first, then the rest in
/// order, so explicit keys in the same layer override the preset.
void apply_config_pairs(RunConfig& cfg, const std::vector<std::pair<std::string, std::string>>& pairs);

/// Stable key order, values formatted to re-parse bitwise.
std::string render_config(const RunConfig& cfg);
void write_config(const std::string& path, const RunConfig& cfg);

/// MOF_SEED from the environment, if set and a valid unsigned integer.
std::optional<uint64_t> seed_from_env();

}  // namespace mof
