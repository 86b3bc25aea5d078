#include "guidance/config.hpp"

#include <charconv>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

namespace guidance {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

double parse_double(const std::string& section, const std::string& key, const std::string& raw) {
  const std::string v = trim(raw);
  std::string lowered;
  for (char c : v) lowered.push_back(static_cast<char>(std::tolower(c)));
  if (lowered == "inf" || lowered == "+inf") return std::numeric_limits<double>::infinity();
  if (lowered == "-inf") return -std::numeric_limits<double>::infinity();
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument("trailing");
    return d;
  } catch (const std::exception&) {
    throw ConfigError("[" + section + "] " + key + ": not a number: '" + raw + "'");
  }
}

}  // namespace

ConfigSections parse_config_text(const std::string& text) {
  ConfigSections out;
  std::istringstream is(text);
  std::string line, section;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    const auto comment = line.find_first_of("#;");
    if (comment != std::string::npos) line = line.substr(0, comment);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') {
        throw ConfigError("line " + std::to_string(line_no) + ": unterminated section header");
      }
      section = trim(line.substr(1, line.size() - 2));
      if (section.empty()) {
        throw ConfigError("line " + std::to_string(line_no) + ": empty section name");
      }
      out[section];
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(line_no) + ": expected key = value");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError("line " + std::to_string(line_no) + ": empty key");
    if (section.empty()) {
      throw ConfigError("line " + std::to_string(line_no) + ": key outside any [section]");
    }
    out[section][key] = value;
  }
  return out;
}

namespace {

/// Tracks consumed keys so leftovers can be reported.
class SectionReader {
 public:
  SectionReader(const ConfigSections& sections, const std::string& name) : name_(name) {
    const auto it = sections.find(name);
    if (it != sections.end()) kv_ = &it->second;
  }

  bool has(const std::string& key) const { return kv_ && kv_->count(key) > 0; }

  const std::string* raw(const std::string& key) {
    if (!kv_) return nullptr;
    const auto it = kv_->find(key);
    if (it == kv_->end()) return nullptr;
    seen_.insert(key);
    return &it->second;
  }

  void number(const std::string& key, double& dst) {
    if (const std::string* v = raw(key)) dst = parse_double(name_, key, *v);
  }
  void integer(const std::string& key, int& dst) {
    if (const std::string* v = raw(key)) {
      const double d = parse_double(name_, key, *v);
      dst = static_cast<int>(d);
      if (static_cast<double>(dst) != d) {
        throw ConfigError("[" + name_ + "] " + key + ": expected an integer");
      }
    }
  }
  void size(const std::string& key, std::size_t& dst) {
    int v = static_cast<int>(dst);
    integer(key, v);
    if (v < 0) throw ConfigError("[" + name_ + "] " + key + ": must be non-negative");
    dst = static_cast<std::size_t>(v);
  }
  void u64(const std::string& key, std::uint64_t& dst) {
    if (const std::string* v = raw(key)) {
      try {
        dst = std::stoull(trim(*v));
      } catch (const std::exception&) {
        throw ConfigError("[" + name_ + "] " + key + ": not an unsigned integer");
      }
    }
  }
  void text(const std::string& key, std::string& dst) {
    if (const std::string* v = raw(key)) dst = trim(*v);
  }

  /// Scalar or {low, high}.
  void scalar_or_range(const std::string& key, ScalarOrRange& dst) {
    const std::string* v = raw(key);
    if (!v) return;
    const std::string s = trim(*v);
    if (!s.empty() && s.front() == '{') {
      if (s.back() != '}') throw ConfigError("[" + name_ + "] " + key + ": unterminated range");
      const std::string body = s.substr(1, s.size() - 2);
      const auto comma = body.find(',');
      if (comma == std::string::npos) {
        throw ConfigError("[" + name_ + "] " + key + ": range needs two values");
      }
      const double a = parse_double(name_, key, body.substr(0, comma));
      const double b = parse_double(name_, key, body.substr(comma + 1));
      dst = ScalarOrRange(a, b);  // normalizes to lo <= hi
    } else {
      dst = ScalarOrRange(parse_double(name_, key, s));
    }
  }

  void finish(const ConfigSections& sections) const {
    const auto it = sections.find(name_);
    if (it == sections.end()) return;
    for (const auto& [key, value] : it->second) {
      if (!seen_.count(key)) {
        throw ConfigError("[" + name_ + "] unknown key: " + key);
      }
    }
  }

 private:
  std::string name_;
  const std::map<std::string, std::string>* kv_ = nullptr;
  std::set<std::string> seen_;
};

}  // namespace

ControllerVariant variant_from_name(const std::string& name) {
  if (name == "proposed") return ControllerVariant::Proposed;
  if (name == "fixed_temperature") return ControllerVariant::FixedTemperature;
  if (name == "no_adaptation") return ControllerVariant::NoAdaptation;
  throw ConfigError("unknown controller variant: " + name);
}

std::string variant_name(ControllerVariant v) {
  switch (v) {
    case ControllerVariant::Proposed: return "proposed";
    case ControllerVariant::FixedTemperature: return "fixed_temperature";
    case ControllerVariant::NoAdaptation: return "no_adaptation";
  }
  return "?";
}

EngagementConfig config_from_text(const std::string& text) {
  const ConfigSections sections = parse_config_text(text);
  static const std::set<std::string> known = {"engagement", "target",  "fault",
                                              "speed",      "sim",     "noise",
                                              "mppi",       "cost",    "network",
                                              "adaptation", "collect", "run"};
  for (const auto& [name, kv] : sections) {
    if (!known.count(name)) throw ConfigError("unknown section: [" + name + "]");
  }

  EngagementConfig cfg;

  {
    SectionReader r(sections, "engagement");
    r.scalar_or_range("R0", cfg.scenario.R0);
    r.scalar_or_range("theta_L0", cfg.scenario.theta_L0);
    r.scalar_or_range("phi_L0", cfg.scenario.phi_L0);
    r.scalar_or_range("theta_m0", cfg.scenario.theta_m0);
    r.scalar_or_range("phi_m0", cfg.scenario.phi_m0);
    r.scalar_or_range("theta_t0", cfg.scenario.theta_t0);
    r.scalar_or_range("phi_t0", cfg.scenario.phi_t0);
    r.scalar_or_range("V_M0", cfg.scenario.V_M0);
    r.number("V_T", cfg.scenario.V_T);
    r.number("theta_LD", cfg.scenario.theta_LD);
    r.number("phi_LD", cfg.scenario.phi_LD);
    r.finish(sections);
    cfg.cost.theta_LD = cfg.scenario.theta_LD;
    cfg.cost.phi_LD = cfg.scenario.phi_LD;
  }
  {
    SectionReader r(sections, "target");
    r.number("accel_amplitude_y", cfg.scenario.maneuver.amplitude_y);
    r.number("accel_amplitude_z", cfg.scenario.maneuver.amplitude_z);
    r.number("angular_frequency", cfg.scenario.maneuver.angular_frequency);
    r.finish(sections);
  }
  {
    SectionReader r(sections, "fault");
    r.number("eta", cfg.scenario.fault.eta);
    r.number("t_start", cfg.scenario.fault.t_start);
    r.number("t_end", cfg.scenario.fault.t_end);
    r.finish(sections);
    if (cfg.scenario.fault.eta <= 0.0 || cfg.scenario.fault.eta > 1.0) {
      throw ConfigError("[fault] eta must be in (0, 1]");
    }
  }
  {
    SectionReader r(sections, "speed");
    r.number("thrust_accel", cfg.scenario.speed.thrust_accel);
    r.number("boost_duration", cfg.scenario.speed.T_B);
    r.number("drag_parasite", cfg.scenario.speed.drag_coeff_parasite);
    r.number("drag_induced", cfg.scenario.speed.drag_coeff_induced);
    r.number("v_min", cfg.scenario.speed.v_min);
    r.finish(sections);
  }
  {
    SectionReader r(sections, "sim");
    r.number("dt", cfg.scenario.dt);
    r.number("t_max", cfg.scenario.t_max);
    r.number("a_max", cfg.scenario.a_max);
    r.number("r_hit", cfg.scenario.terminal.r_hit);
    r.number("r_ceiling", cfg.scenario.terminal.r_ceiling);
    r.integer("consecutive_increases", cfg.scenario.terminal.consecutive_increases);
    r.finish(sections);
    if (cfg.scenario.dt <= 0.0) throw ConfigError("[sim] dt must be positive");
    cfg.scenario.terminal.t_max = cfg.scenario.t_max;
  }
  {
    SectionReader r(sections, "noise");
    r.number("multiplier_amplitude", cfg.scenario.noise.multiplier_amplitude);
    r.number("multiplier_frequency", cfg.scenario.noise.multiplier_frequency);
    r.number("los_angle_sigma", cfg.scenario.noise.los_angle_sigma);
    r.number("los_rate_rel_sigma", cfg.scenario.noise.los_rate_rel_sigma);
    r.finish(sections);
  }
  {
    SectionReader r(sections, "mppi");
    r.integer("samples", cfg.controller.samples);
    r.integer("horizon", cfg.controller.horizon);
    double sy = cfg.controller.sigma(0), sz = cfg.controller.sigma(1);
    r.number("sigma_y", sy);
    r.number("sigma_z", sz);
    cfg.controller.sigma << sy, sz;
    r.number("lambda_star", cfg.controller.lambda_star);
    r.number("control_penalty", cfg.controller.control_penalty);
    r.number("sigma_floor", cfg.controller.sigma_floor);
    r.number("fixed_lambda", cfg.controller.fixed_lambda);
    r.integer("workers", cfg.controller.workers);
    std::string variant;
    r.text("variant", variant);
    if (!variant.empty()) cfg.controller.variant = variant_from_name(variant);
    r.finish(sections);
    if (cfg.controller.samples < 1) throw ConfigError("[mppi] samples must be >= 1");
    if (cfg.controller.horizon < 1) throw ConfigError("[mppi] horizon must be >= 1");
    if (cfg.controller.lambda_star <= 0.0) throw ConfigError("[mppi] lambda_star must be > 0");
  }
  {
    SectionReader r(sections, "cost");
    double k1t = cfg.cost.k1(0), k1p = cfg.cost.k1(1);
    double k2t = cfg.cost.k2(0), k2p = cfg.cost.k2(1);
    r.number("k1_theta", k1t);
    r.number("k1_phi", k1p);
    r.number("k2_theta", k2t);
    r.number("k2_phi", k2p);
    cfg.cost.k1 << k1t, k1p;
    cfg.cost.k2 << k2t, k2p;
    r.number("terminal_weight", cfg.cost.terminal_weight);
    r.finish(sections);
  }
  {
    SectionReader r(sections, "network");
    if (const std::string* v = r.raw("hidden_dims")) {
      std::istringstream hs(*v);
      std::vector<int> dims;
      int d;
      while (hs >> d) dims.push_back(d);
      if (dims.empty()) throw ConfigError("[network] hidden_dims: expected integers");
      cfg.train.hidden_dims = dims;
    }
    r.number("learning_rate", cfg.train.learning_rate);
    r.integer("batch_size", cfg.train.batch_size);
    r.integer("max_epochs", cfg.train.max_epochs);
    r.integer("patience", cfg.train.patience);
    r.number("validation_fraction", cfg.train.validation_fraction);
    r.finish(sections);
  }
  {
    SectionReader r(sections, "adaptation");
    r.number("alpha", cfg.adaptation.alpha);
    r.size("window", cfg.adaptation.window);
    r.integer("steps_per_cycle", cfg.adaptation.steps_per_cycle);
    r.finish(sections);
    if (cfg.adaptation.alpha <= 0.0) throw ConfigError("[adaptation] alpha must be > 0");
    if (cfg.adaptation.window < 1) throw ConfigError("[adaptation] window must be >= 1");
  }
  {
    SectionReader r(sections, "collect");
    r.integer("trajectories", cfg.collect.n_trajectories);
    r.number("control_sigma", cfg.collect.control_sigma);
    double aug = cfg.augmentation_sigma;
    r.number("augmentation_sigma", aug);
    cfg.augmentation_sigma = aug;
    const bool any = r.has("R0") || r.has("theta_L0") || r.has("phi_L0") || r.has("theta_m0") ||
                     r.has("phi_m0") || r.has("theta_t0") || r.has("phi_t0") || r.has("V_M0");
    if (any) {
      cfg.collect.override_initials = true;
      cfg.collect.R0 = cfg.scenario.R0;
      cfg.collect.theta_L0 = cfg.scenario.theta_L0;
      cfg.collect.phi_L0 = cfg.scenario.phi_L0;
      cfg.collect.theta_m0 = cfg.scenario.theta_m0;
      cfg.collect.phi_m0 = cfg.scenario.phi_m0;
      cfg.collect.theta_t0 = cfg.scenario.theta_t0;
      cfg.collect.phi_t0 = cfg.scenario.phi_t0;
      cfg.collect.V_M0 = cfg.scenario.V_M0;
      r.scalar_or_range("R0", cfg.collect.R0);
      r.scalar_or_range("theta_L0", cfg.collect.theta_L0);
      r.scalar_or_range("phi_L0", cfg.collect.phi_L0);
      r.scalar_or_range("theta_m0", cfg.collect.theta_m0);
      r.scalar_or_range("phi_m0", cfg.collect.phi_m0);
      r.scalar_or_range("theta_t0", cfg.collect.theta_t0);
      r.scalar_or_range("phi_t0", cfg.collect.phi_t0);
      r.scalar_or_range("V_M0", cfg.collect.V_M0);
    }
    r.finish(sections);
  }
  {
    SectionReader r(sections, "run");
    double hit = cfg.hit_threshold;
    r.number("hit_threshold", hit);
    cfg.hit_threshold = hit;
    r.integer("monte_carlo_runs", cfg.monte_carlo_runs);
    r.integer("full_scale_runs", cfg.full_scale_runs);
    r.finish(sections);
  }

  // The controller and the truth integrator share the cycle time.
  cfg.controller.dt = cfg.scenario.dt;
  cfg.controller.a_max = cfg.scenario.a_max;
  return cfg;
}

EngagementConfig load_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config file: " + path);
  std::ostringstream buf;
  buf << is.rdbuf();
  return config_from_text(buf.str());
}

}  // namespace guidance
