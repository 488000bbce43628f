#include "mof/config.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "mof/error.hpp"

namespace mof {
namespace {

std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

int64_t parse_i64(const std::string& key, const std::string& value) {
  try {
    size_t pos = 0;
    int64_t v = std::stoll(value, &pos);
    if (pos != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': expected integer, got '" + value + "'");
  }
}

uint64_t parse_u64(const std::string& key, const std::string& value) {
  try {
    size_t pos = 0;
    if (!value.empty() && value[0] == '-') throw std::invalid_argument(value);
    uint64_t v = std::stoull(value, &pos);
    if (pos != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': expected unsigned integer, got '" + value +
                      "'");
  }
}

double parse_f64(const std::string& key, const std::string& value) {
  try {
    size_t pos = 0;
    double v = std::stod(value, &pos);
    if (pos != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': expected number, got '" + value + "'");
  }
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw ConfigError("config key '" + key + "': expected true or false, got '" + value + "'");
}

std::string fmt_f64(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

PhaseConfig RunConfig::phase() const {
  PhaseConfig p;
  p.u = u;
  p.r = r;
  p.t = phases;
  p.alpha = alpha;
  p.beta = beta;
  p.inner_steps = inner_steps;
  p.batch_size = batch_size;
  p.eval_every = eval_every;
  p.first_order = first_order;
  p.seed = seed;
  return p;
}

EncoderConfig RunConfig::encoder() const {
  EncoderConfig e;
  e.patch = patch;
  e.dh = dh;
  e.d = d;
  e.umax = umax;
  e.prec = prec();
  return e;
}

Prec RunConfig::prec() const {
  if (precision == "f32") return Prec::f32;
  if (precision == "f64") return Prec::f64;
  throw ConfigError("precision must be f32 or f64, got '" + precision + "'");
}

void apply_preset(RunConfig& cfg, const std::string& name) {
  if (name == "toy-lr") {
    cfg.alpha = 1e-3;
  } else if (name == "paper-lr") {
    cfg.alpha = 1e-5;
  } else {
    throw ConfigError("unknown preset '" + name + "' (known: toy-lr, paper-lr)");
  }
  cfg.beta = 8e-4;
  cfg.batch_size = 16;
  cfg.preset = name;
}

void set_config_key(RunConfig& cfg, const std::string& key, const std::string& value) {
  if (key == "u") cfg.u = parse_i64(key, value);
  else if (key == "r") cfg.r = parse_i64(key, value);
  else if (key == "phases") cfg.phases = parse_i64(key, value);
  else if (key == "alpha") cfg.alpha = parse_f64(key, value);
  else if (key == "beta") cfg.beta = parse_f64(key, value);
  else if (key == "inner_steps") cfg.inner_steps = parse_i64(key, value);
  else if (key == "batch_size") cfg.batch_size = parse_i64(key, value);
  else if (key == "eval_every") cfg.eval_every = parse_i64(key, value);
  else if (key == "first_order") cfg.first_order = parse_bool(key, value);
  else if (key == "seed") cfg.seed = parse_u64(key, value);
  else if (key == "patch") cfg.patch = parse_i64(key, value);
  else if (key == "dh") cfg.dh = parse_i64(key, value);
  else if (key == "d") cfg.d = parse_i64(key, value);
  else if (key == "umax") cfg.umax = parse_i64(key, value);
  else if (key == "precision") cfg.precision = value;
  else if (key == "data") cfg.data = value;
  else if (key == "out") cfg.out = value;
  else if (key == "preset") apply_preset(cfg, value);
  else if (key == "k_test") cfg.k_test = parse_i64(key, value);
  else if (key == "no_mof") cfg.no_mof = parse_bool(key, value);
  else if (key == "no_timing") cfg.no_timing = parse_bool(key, value);
  else if (key == "workers") cfg.workers = parse_i64(key, value);
  else throw ConfigError("unknown config key '" + key + "'");
}

std::vector<std::pair<std::string, std::string>> read_config_pairs(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open config file: " + path);
  std::vector<std::pair<std::string, std::string>> pairs;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(path + ":" + std::to_string(lineno) + ": expected key=value, got '" +
                        line + "'");
    }
    pairs.emplace_back(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return pairs;
}

void apply_config_pairs(RunConfig& cfg,
                        const std::vector<std::pair<std::string, std::string>>& pairs) {
  for (const auto& [key, value] : pairs) {
    if (key == "preset") set_config_key(cfg, key, value);
  }
  for (const auto& [key, value] : pairs) {
    if (key != "preset") set_config_key(cfg, key, value);
  }
}

std::string render_config(const RunConfig& cfg) {
  std::ostringstream os;
  os << "preset=" << cfg.preset << "\n";
  os << "u=" << cfg.u << "\n";
  os << "r=" << cfg.r << "\n";
  os << "phases=" << cfg.phases << "\n";
  os << "alpha=" << fmt_f64(cfg.alpha) << "\n";
  os << "beta=" << fmt_f64(cfg.beta) << "\n";
  os << "inner_steps=" << cfg.inner_steps << "\n";
  os << "batch_size=" << cfg.batch_size << "\n";
  os << "eval_every=" << cfg.eval_every << "\n";
  os << "first_order=" << (cfg.first_order ? "true" : "false") << "\n";
  os << "seed=" << cfg.seed << "\n";
  os << "patch=" << cfg.patch << "\n";
  os << "dh=" << cfg.dh << "\n";
  os << "d=" << cfg.d << "\n";
  os << "umax=" << cfg.umax << "\n";
  os << "precision=" << cfg.precision << "\n";
  os << "data=" << cfg.data << "\n";
  os << "out=" << cfg.out << "\n";
  os << "k_test=" << cfg.k_test << "\n";
  os << "no_mof=" << (cfg.no_mof ? "true" : "false") << "\n";
  os << "no_timing=" << (cfg.no_timing ? "true" : "false") << "\n";
  os << "workers=" << cfg.workers << "\n";
  return os.str();
}

void write_config(const std::string& path, const RunConfig& cfg) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write config file: " + path);
  os << render_config(cfg);
  if (!os) throw IoError("failed writing config file: " + path);
}

std::optional<uint64_t> seed_from_env() {
  const char* env = std::getenv("MOF_SEED");
  if (env == nullptr || *env == '\0') return std::nullopt;
  try {
    return parse_u64("MOF_SEED", env);
  } catch (const ConfigError&) {
    throw ConfigError("MOF_SEED must be an unsigned integer, got '" + std::string(env) + "'");
  }
}

}  // namespace mof
