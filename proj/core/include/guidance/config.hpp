#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "guidance/meta.hpp"
#include "guidance/mppi.hpp"
#include "guidance/neural.hpp"
#include "guidance/scenario.hpp"

namespace guidance {

/// Full description of one experiment: scenario, controller, cost, training,
/// adaptation and collection settings. Loaded from an INI-style file of
/// [section] blocks with `key = value` lines; values are numbers, names, or
/// uniform ranges written {low, high} (normalized to lo <= hi on load).
struct EngagementConfig {
  ScenarioConfig scenario;
  ControllerConfig controller;
  CostConfig cost;
  TrainConfig train;
  AdaptationConfig adaptation;
  CollectConfig collect;

  double augmentation_sigma = 0.01;  // preprocess noise, relative to scale
  double hit_threshold = 1.0;        // m, miss distance counted as a hit
  int monte_carlo_runs = 50;
  int full_scale_runs = 3500;
};

/// Parsed file: section -> key -> raw value string.
using ConfigSections = std::map<std::string, std::map<std::string, std::string>>;

ConfigSections parse_config_text(const std::string& text);

/// Load and validate a config file. Unknown sections or keys raise
/// ConfigError, as do malformed values.
EngagementConfig load_config(const std::string& path);
EngagementConfig config_from_text(const std::string& text);

ControllerVariant variant_from_name(const std::string& name);
std::string variant_name(ControllerVariant v);

}  // namespace guidance
