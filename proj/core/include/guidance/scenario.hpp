#pragma once

#include <algorithm>
#include <cstdint>

#include "guidance/engagement.hpp"
#include "guidance/rng.hpp"

namespace guidance {

/// A fixed value or a uniform range. Ranges are normalized to lo <= hi.
struct ScalarOrRange {
  double lo = 0.0;
  double hi = 0.0;

  ScalarOrRange() = default;
  ScalarOrRange(double v) : lo(v), hi(v) {}  // NOLINT: implicit by design
  ScalarOrRange(double a, double b) : lo(std::min(a, b)), hi(std::max(a, b)) {}

  bool is_range() const { return lo != hi; }
  double sample(Rng& rng) const { return is_range() ? rng.uniform(lo, hi) : lo; }
  double midpoint() const { return 0.5 * (lo + hi); }
};

/// One engagement scenario: initial conditions (fixed or ranged), desired
/// impact angles, plant models and sensor noise.
struct ScenarioConfig {
  ScalarOrRange R0 = 4000.0;
  ScalarOrRange theta_L0 = -0.7;
  ScalarOrRange phi_L0 = 0.65;
  ScalarOrRange theta_m0 = -0.36;
  ScalarOrRange phi_m0 = -0.2;
  ScalarOrRange theta_t0 = -0.32;
  ScalarOrRange phi_t0 = -0.22;
  ScalarOrRange V_M0 = 800.0;
  double V_T = 270.0;

  double theta_LD = -0.6;  // desired terminal LOS elevation, rad
  double phi_LD = 0.8;     // desired terminal LOS azimuth, rad

  TargetManeuver maneuver{40.0, 40.0, 1.0};
  ActuatorFault fault{1.0, 0.0, 0.0};  // disabled by default
  SpeedModel speed;
  NoiseConfig noise;

  double dt = 0.005;   // control cycle and truth integration step, s
  double t_max = 15.0; // s
  double a_max = 200.0;
  TerminalMonitor::Settings terminal{};
};

/// Draw a concrete initial state from the (possibly ranged) initial
/// conditions. Deterministic given the rng state.
inline EngagementState sample_initial_state(const ScenarioConfig& cfg, Rng& rng) {
  EngagementState s;
  s.R = cfg.R0.sample(rng);
  s.theta_L = cfg.theta_L0.sample(rng);
  s.phi_L = cfg.phi_L0.sample(rng);
  s.theta_m = cfg.theta_m0.sample(rng);
  s.phi_m = cfg.phi_m0.sample(rng);
  s.theta_t = cfg.theta_t0.sample(rng);
  s.phi_t = cfg.phi_t0.sample(rng);
  s.V_M = cfg.V_M0.sample(rng);
  s.V_T = cfg.V_T;
  s.t = 0.0;
  return s;
}

/// Training-data collection settings.
struct CollectConfig {
  int n_trajectories = 200;
  double control_sigma = 60.0;  // m/s^2 per axis, zero-mean Gaussian
  // Optional wider initial-condition ranges for coverage; when unset (empty),
  // the scenario's own initial conditions are used.
  bool override_initials = false;
  ScalarOrRange R0, theta_L0, phi_L0, theta_m0, phi_m0, theta_t0, phi_t0, V_M0;
};

}  // namespace guidance
