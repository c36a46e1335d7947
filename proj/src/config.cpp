#include "scfl/config.hpp"

#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

namespace scfl {

namespace {

std::string trim(const std::string& s) {
  std::size_t begin = 0, end = s.size();
  while (begin < end && std::isspace(static_cast<unsigned char>(s[begin]))) ++begin;
  while (end > begin && std::isspace(static_cast<unsigned char>(s[end - 1]))) --end;
  return s.substr(begin, end - begin);
}

[[noreturn]] void fail(const std::string& key, const std::string& rule) {
  throw ConfigError(key + ": " + rule);
}

double parse_real(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const double v = std::stod(value, &used);
    if (used != value.size()) fail(key, "not a number: '" + value + "'");
    if (!std::isfinite(v)) fail(key, "value must be finite");
    return v;
  } catch (const std::invalid_argument&) {
    fail(key, "not a number: '" + value + "'");
  } catch (const std::out_of_range&) {
    fail(key, "value out of range: '" + value + "'");
  }
}

std::size_t parse_count(const std::string& key, const std::string& value) {
  const double v = parse_real(key, value);
  if (v < 0.0 || v != std::floor(v)) fail(key, "expected a nonnegative integer");
  return static_cast<std::size_t>(v);
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "on" || value == "1") return true;
  if (value == "false" || value == "off" || value == "0") return false;
  fail(key, "expected true or false");
}

std::vector<double> parse_list(const std::string& key, const std::string& value) {
  std::vector<double> out;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) fail(key, "empty element in list");
    out.push_back(parse_real(key, item));
  }
  if (out.empty()) fail(key, "empty list");
  return out;
}

std::string format_real(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string format_list(const std::vector<double>& values) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out += ',';
    out += format_real(values[i]);
  }
  return out;
}

StrategyKind parse_kind(const std::string& value) {
  if (value == "scfl") return StrategyKind::Scfl;
  if (value == "fl-pma") return StrategyKind::FlPma;
  if (value == "cfl-fb") return StrategyKind::CflFb;
  if (value == "codedfedl") return StrategyKind::CodedFedl;
  if (value == "dp-cfl") return StrategyKind::DpCfl;
  fail("strategy.kind", "unknown strategy '" + value +
                            "' (expected scfl, fl-pma, cfl-fb, codedfedl, or dp-cfl)");
}

}  // namespace

const char* convention_name(NoiseConvention convention) {
  return convention == NoiseConvention::CompositeUnit ? "composite-unit" : "per-client-unit";
}

const char* schedule_name(LrSchedule schedule) {
  return schedule == LrSchedule::Theorem ? "theorem" : "constant";
}

ExperimentConfig parse_config_text(const std::string& text) {
  ExperimentConfig cfg;
  bool sigma_set = false, target_set = false;
  bool kind_set = false;

  std::istringstream in(text);
  std::string line;
  std::string section;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string stripped = trim(line.substr(0, line.find('#')));
    if (stripped.empty()) continue;
    if (stripped.front() == '[') {
      if (stripped.back() != ']') {
        throw ConfigError("line " + std::to_string(line_no) + ": unterminated section header");
      }
      section = trim(stripped.substr(1, stripped.size() - 2));
      if (section != "data" && section != "coding" && section != "network" &&
          section != "strategy" && section != "run") {
        fail(section, "unknown section");
      }
      if (section == "strategy") cfg.strategy.present = true;
      continue;
    }
    const std::size_t eq = stripped.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(line_no) + ": expected key = value");
    }
    const std::string key = trim(stripped.substr(0, eq));
    const std::string value = trim(stripped.substr(eq + 1));
    const std::string qual = section.empty() ? key : section + "." + key;
    if (value.empty()) fail(qual, "missing value");

    if (section.empty()) {
      if (key == "seed") {
        cfg.seed = static_cast<std::uint64_t>(parse_count(qual, value));
      } else {
        fail(qual, "unknown key outside any section");
      }
    } else if (section == "data") {
      if (key == "m") cfg.data.m = parse_count(qual, value);
      else if (key == "d") cfg.data.d = parse_count(qual, value);
      else if (key == "o") cfg.data.o = parse_count(qual, value);
      else if (key == "n") cfg.data.n = parse_count(qual, value);
      else if (key == "skew") cfg.data.skew = parse_bool(qual, value);
      else if (key == "noise_std") cfg.data.noise_std = parse_real(qual, value);
      else if (key == "ground_truth_scale") cfg.data.ground_truth_scale = parse_real(qual, value);
      else if (key == "feature_file") cfg.data.feature_file = value;
      else if (key == "rffm") cfg.data.rffm = parse_bool(qual, value);
      else if (key == "rffm_dim") cfg.data.rffm_dim = parse_count(qual, value);
      else if (key == "rffm_bandwidth") cfg.data.rffm_bandwidth = parse_real(qual, value);
      else if (key == "phi_cap") cfg.data.phi_cap = parse_real(qual, value);
      else fail(qual, "unknown key");
    } else if (section == "coding") {
      if (key == "c") cfg.coding.c = parse_count(qual, value);
      else if (key == "sigma") { cfg.coding.sigma = parse_real(qual, value); sigma_set = true; }
      else if (key == "target_epsilon") {
        cfg.coding.target_epsilon = parse_real(qual, value);
        target_set = true;
      } else if (key == "noise_convention") {
        if (value == "composite-unit") cfg.coding.convention = NoiseConvention::CompositeUnit;
        else if (value == "per-client-unit") cfg.coding.convention = NoiseConvention::PerClientUnit;
        else fail(qual, "expected composite-unit or per-client-unit");
      } else fail(qual, "unknown key");
    } else if (section == "network") {
      if (key == "profile") {
        if (value == "sampled") cfg.network.sampled = true;
        else if (value == "explicit") cfg.network.sampled = false;
        else fail(qual, "expected sampled or explicit");
      } else if (key == "downlink_rate") cfg.network.downlink_rate = parse_real(qual, value);
      else if (key == "server_mac_rate") cfg.network.server_mac_rate = parse_real(qual, value);
      else if (key == "n_mac_per_sample") cfg.network.n_mac_per_sample = parse_real(qual, value);
      else if (key == "payload_bits") cfg.network.payload_bits = parse_real(qual, value);
      else if (key == "model_bits") cfg.network.model_bits = parse_real(qual, value);
      else if (key == "erasure") cfg.network.erasure = parse_real(qual, value);
      else if (key == "uplink_rates") cfg.network.uplink_rates = parse_list(qual, value);
      else if (key == "mac_rates") cfg.network.mac_rates = parse_list(qual, value);
      else if (key == "erasure_probs") cfg.network.erasure_probs = parse_list(qual, value);
      else fail(qual, "unknown key");
    } else if (section == "strategy") {
      if (key == "kind") { cfg.strategy.kind = parse_kind(value); kind_set = true; }
      else if (key == "deadline_T") {
        cfg.strategy.deadline_t = parse_real(qual, value);
        cfg.strategy.has_deadline = true;
      } else if (key == "server_batch") cfg.strategy.server_batch = parse_count(qual, value);
      else if (key == "client_batch") cfg.strategy.client_batch = parse_count(qual, value);
      else if (key == "psi") cfg.strategy.psi = parse_real(qual, value);
      else if (key == "learning_rate") {
        if (value == "theorem") cfg.strategy.learning_rate = LrSchedule::Theorem;
        else if (value == "constant") cfg.strategy.learning_rate = LrSchedule::Constant;
        else fail(qual, "expected theorem or constant");
      } else if (key == "eta") cfg.strategy.eta = parse_real(qual, value);
      else if (key == "project_phi") cfg.strategy.project_phi = parse_bool(qual, value) ? 1 : 0;
      else fail(qual, "unknown key");
    } else if (section == "run") {
      if (key == "epochs") cfg.run.epochs = parse_count(qual, value);
      else if (key == "out_dir") cfg.run.out_dir = value;
      else fail(qual, "unknown key");
    }
  }

  // Cross-field rules.
  if (cfg.data.m == 0 || cfg.data.d == 0 || cfg.data.o == 0 || cfg.data.n == 0) {
    fail("data", "m, d, o, n must all be positive");
  }
  if (cfg.data.n > cfg.data.m) fail("data.n", "more clients than samples");
  if (cfg.data.noise_std < 0.0) fail("data.noise_std", "must be nonnegative");
  if (cfg.data.rffm && cfg.data.rffm_dim == 0) fail("data.rffm_dim", "must be positive");
  if (cfg.data.rffm && cfg.data.rffm_bandwidth <= 0.0) {
    fail("data.rffm_bandwidth", "must be positive");
  }
  if (cfg.data.phi_cap < 0.0) fail("data.phi_cap", "must be nonnegative");

  if (cfg.coding.c == 0) fail("coding.c", "must be positive");
  if (sigma_set && target_set) {
    fail("coding.sigma / coding.target_epsilon", "exactly one may be set");
  }
  cfg.coding.has_target_epsilon = target_set;
  if (target_set && cfg.coding.target_epsilon <= 0.0) {
    fail("coding.target_epsilon", "must be positive");
  }
  if (cfg.coding.sigma < 0.0) fail("coding.sigma", "must be nonnegative");

  if (cfg.network.erasure < 0.0 || cfg.network.erasure >= 1.0) {
    fail("network.erasure", "must lie in [0, 1)");
  }
  if (!cfg.network.sampled) {
    if (cfg.network.uplink_rates.size() != cfg.data.n ||
        cfg.network.mac_rates.size() != cfg.data.n) {
      fail("network.uplink_rates", "explicit profile needs one rate per client");
    }
    if (!cfg.network.erasure_probs.empty() &&
        cfg.network.erasure_probs.size() != cfg.data.n) {
      fail("network.erasure_probs", "explicit profile needs one value per client");
    }
  }

  if (cfg.strategy.present) {
    if (!kind_set) fail("strategy.kind", "missing required key");
    if (cfg.strategy.psi < 0.0 || cfg.strategy.psi >= 1.0) {
      fail("strategy.psi", "must lie in [0, 1)");
    }
    const bool needs_deadline = cfg.strategy.kind == StrategyKind::Scfl ||
                                cfg.strategy.kind == StrategyKind::CflFb ||
                                cfg.strategy.kind == StrategyKind::CodedFedl;
    if (needs_deadline && (!cfg.strategy.has_deadline || cfg.strategy.deadline_t <= 0.0)) {
      fail("strategy.deadline_T", "required and positive for deadline strategies");
    }
    if (cfg.strategy.eta <= 0.0 && cfg.strategy.learning_rate == LrSchedule::Constant) {
      fail("strategy.eta", "must be positive for the constant schedule");
    }
    if (cfg.strategy.kind == StrategyKind::CflFb &&
        ((sigma_set && cfg.coding.sigma != 0.0) || target_set)) {
      fail("strategy.kind", "cfl-fb trains on noise-free coded data (sigma = 0)");
    }
  }
  return cfg;
}

ExperimentConfig parse_config(const std::string& path) {
  std::ifstream file(path);
  if (!file) throw ConfigError("cannot open config file " + path);
  std::stringstream buffer;
  buffer << file.rdbuf();
  return parse_config_text(buffer.str());
}

std::string serialize_config(const ExperimentConfig& cfg) {
  std::ostringstream out;
  out << "seed = " << cfg.seed << "\n\n";

  out << "[data]\n";
  out << "m = " << cfg.data.m << "\n";
  out << "d = " << cfg.data.d << "\n";
  out << "o = " << cfg.data.o << "\n";
  out << "n = " << cfg.data.n << "\n";
  out << "skew = " << (cfg.data.skew ? "true" : "false") << "\n";
  out << "noise_std = " << format_real(cfg.data.noise_std) << "\n";
  out << "ground_truth_scale = " << format_real(cfg.data.ground_truth_scale) << "\n";
  if (!cfg.data.feature_file.empty()) out << "feature_file = " << cfg.data.feature_file << "\n";
  out << "rffm = " << (cfg.data.rffm ? "true" : "false") << "\n";
  if (cfg.data.rffm) {
    out << "rffm_dim = " << cfg.data.rffm_dim << "\n";
    out << "rffm_bandwidth = " << format_real(cfg.data.rffm_bandwidth) << "\n";
  }
  if (cfg.data.phi_cap > 0.0) out << "phi_cap = " << format_real(cfg.data.phi_cap) << "\n";

  out << "\n[coding]\n";
  out << "c = " << cfg.coding.c << "\n";
  if (cfg.coding.has_target_epsilon) {
    out << "target_epsilon = " << format_real(cfg.coding.target_epsilon) << "\n";
  } else {
    out << "sigma = " << format_real(cfg.coding.sigma) << "\n";
  }
  out << "noise_convention = " << convention_name(cfg.coding.convention) << "\n";

  out << "\n[network]\n";
  out << "profile = " << (cfg.network.sampled ? "sampled" : "explicit") << "\n";
  out << "downlink_rate = " << format_real(cfg.network.downlink_rate) << "\n";
  out << "server_mac_rate = " << format_real(cfg.network.server_mac_rate) << "\n";
  out << "n_mac_per_sample = " << format_real(cfg.network.n_mac_per_sample) << "\n";
  if (cfg.network.payload_bits > 0.0) {
    out << "payload_bits = " << format_real(cfg.network.payload_bits) << "\n";
  }
  if (cfg.network.model_bits > 0.0) {
    out << "model_bits = " << format_real(cfg.network.model_bits) << "\n";
  }
  out << "erasure = " << format_real(cfg.network.erasure) << "\n";
  if (!cfg.network.sampled) {
    out << "uplink_rates = " << format_list(cfg.network.uplink_rates) << "\n";
    out << "mac_rates = " << format_list(cfg.network.mac_rates) << "\n";
    if (!cfg.network.erasure_probs.empty()) {
      out << "erasure_probs = " << format_list(cfg.network.erasure_probs) << "\n";
    }
  }

  if (cfg.strategy.present) {
    out << "\n[strategy]\n";
    out << "kind = " << strategy_name(cfg.strategy.kind) << "\n";
    if (cfg.strategy.has_deadline) {
      out << "deadline_T = " << format_real(cfg.strategy.deadline_t) << "\n";
    }
    if (cfg.strategy.server_batch > 0) out << "server_batch = " << cfg.strategy.server_batch << "\n";
    if (cfg.strategy.client_batch > 0) out << "client_batch = " << cfg.strategy.client_batch << "\n";
    if (cfg.strategy.kind == StrategyKind::FlPma) {
      out << "psi = " << format_real(cfg.strategy.psi) << "\n";
    }
    out << "learning_rate = " << schedule_name(cfg.strategy.learning_rate) << "\n";
    if (cfg.strategy.learning_rate == LrSchedule::Constant) {
      out << "eta = " << format_real(cfg.strategy.eta) << "\n";
    }
    if (cfg.strategy.project_phi >= 0) {
      out << "project_phi = " << (cfg.strategy.project_phi ? "true" : "false") << "\n";
    }
  }

  out << "\n[run]\n";
  out << "epochs = " << cfg.run.epochs << "\n";
  out << "out_dir = " << cfg.run.out_dir << "\n";
  return out.str();
}

std::string config_hash_hex(const ExperimentConfig& cfg) {
  // The hash pins every field that determines a random draw; the output
  // location is not one of them.
  ExperimentConfig keyed = cfg;
  keyed.run.out_dir = "out";
  const std::string text = serialize_config(keyed);
  // FNV-1a, 64 bit.
  std::uint64_t hash = 0xcbf29ce484222325ull;
  for (unsigned char ch : text) {
    hash ^= ch;
    hash *= 0x100000001b3ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(hash));
  return buf;
}

}  // namespace scfl
