#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <optional>

#include "guidance/common.hpp"

namespace guidance {

/// Full kinematic truth state of the interceptor/target pair in the
/// rotating line-of-sight frame. Heading angles (theta_m, phi_m) and
/// (theta_t, phi_t) are the velocity direction angles of interceptor and
/// target expressed relative to the LOS frame.
struct EngagementState {
  double R = 0.0;        // range, m
  double theta_L = 0.0;  // LOS elevation, rad
  double phi_L = 0.0;    // LOS azimuth, rad
  double theta_m = 0.0;  // interceptor heading elevation, rad
  double phi_m = 0.0;    // interceptor heading azimuth, rad
  double theta_t = 0.0;  // target heading elevation, rad
  double phi_t = 0.0;    // target heading azimuth, rad
  double V_M = 0.0;      // interceptor speed, m/s
  double V_T = 0.0;      // target speed, m/s
  double t = 0.0;        // elapsed time, s
};

/// Commanded lateral (a_ym) and normal (a_zm) accelerations, m/s^2.
struct ControlCommand {
  double a_ym = 0.0;
  double a_zm = 0.0;
};

inline ControlCommand saturate(ControlCommand u, double a_max) {
  u.a_ym = std::clamp(u.a_ym, -a_max, a_max);
  u.a_zm = std::clamp(u.a_zm, -a_max, a_max);
  return u;
}

/// Loss-of-effectiveness actuator fault: commanded acceleration is scaled
/// by gain eta inside [t_start, t_end).
struct ActuatorFault {
  double eta = 1.0;
  double t_start = 0.0;
  double t_end = std::numeric_limits<double>::infinity();

  bool active_at(double t) const { return t >= t_start && t < t_end; }
};

/// Sinusoidal target acceleration: a = amplitude * sin(angular_frequency * t)
/// per axis.
struct TargetManeuver {
  double amplitude_y = 0.0;        // m/s^2
  double amplitude_z = 0.0;        // m/s^2
  double angular_frequency = 1.0;  // rad/s

  double accel_y(double t) const { return amplitude_y * std::sin(angular_frequency * t); }
  double accel_z(double t) const { return amplitude_z * std::sin(angular_frequency * t); }
};

/// Boost-then-drag interceptor speed model:
///   dV/dt = thrust (while t < T_B)  -  c_p V^2  -  c_i (a_ym^2 + a_zm^2) / V^2
/// Speed is floored at v_min by the integrator.
struct SpeedModel {
  double thrust_accel = 25.0;        // m/s^2 during boost
  double T_B = 3.5;                  // boost duration, s
  double drag_coeff_parasite = 3e-5; // 1/m
  double drag_coeff_induced = 50.0;  // scales (commanded accel)^2 / V^2
  double v_min = 200.0;              // m/s floor
};

/// Time derivative of the kinematic state (speed derivative handled
/// separately by speed_derivative).
struct StateDerivative {
  double R_dot = 0.0;
  double theta_L_dot = 0.0;
  double phi_L_dot = 0.0;
  double theta_m_dot = 0.0;
  double phi_m_dot = 0.0;
  double theta_t_dot = 0.0;
  double phi_t_dot = 0.0;
};

/// Guards for the trigonometric divisions in the kinematics.
struct GeometryGuards {
  double cos_epsilon = 1e-6;  // rad-scale guard on |cos(...)|
  double r_epsilon = 0.1;     // m guard on R
};

/// Relative-motion kinematics in the rotating LOS frame.
/// Throws SingularGeometry when a guarded denominator collapses.
StateDerivative kinematics_derivative(const EngagementState& state, const ControlCommand& u,
                                      double target_accel_y, double target_accel_z,
                                      const GeometryGuards& guards = {});

/// dV_M/dt under the boost-then-drag speed model.
double speed_derivative(const EngagementState& state, const ControlCommand& u,
                        const SpeedModel& model);

/// Actuator output for a commanded acceleration: fault gain inside the fault
/// window, then saturation to a_max.
ControlCommand apply_fault(const ControlCommand& u_c, const ActuatorFault& fault, double t,
                           double a_max);

/// Advance the truth state one fixed RK4 step. The fault is applied to u_c
/// before integration and the actuator output is held constant over the step;
/// target accelerations are evaluated at the RK4 stage times. Angles are
/// wrapped on output and V_M is floored at model.v_min.
EngagementState step(const EngagementState& state, const ControlCommand& u_c,
                     const ActuatorFault& fault, const TargetManeuver& maneuver,
                     const SpeedModel& speed_model, double dt, double a_max = 200.0,
                     const GeometryGuards& guards = {});

/// Sensor model configuration. All-zero = identity sensor.
struct NoiseConfig {
  // Multiplicative uncertainty (1 + amplitude * sin(frequency * t)) applied to
  // range, range rate, LOS angles and LOS rates.
  double multiplier_amplitude = 0.0;
  double multiplier_frequency = 1.0;
  double los_angle_sigma = 0.0;     // rad, additive Gaussian on LOS angles
  double los_rate_rel_sigma = 0.0;  // relative Gaussian on LOS rates

  bool enabled() const {
    return multiplier_amplitude != 0.0 || los_angle_sigma != 0.0 || los_rate_rel_sigma != 0.0;
  }
};

/// Measured channels consumed by the controller. Rates are instantaneous
/// values from the truth kinematics before corruption.
struct Observation {
  double R = 0.0;
  double R_dot = 0.0;
  double theta_L = 0.0;
  double phi_L = 0.0;
  double theta_L_dot = 0.0;
  double phi_L_dot = 0.0;
  double V_M = 0.0;
  double theta_m = 0.0;
  double phi_m = 0.0;
  double t = 0.0;
};

/// Sample the sensor at the current state. Deterministic given the seed.
Observation observe(const EngagementState& state, const NoiseConfig& cfg, std::uint64_t seed,
                    const GeometryGuards& guards = {});

/// Terminal decision for one engagement step.
enum class TerminalKind { Continue, Hit, Diverged };

struct TerminalResult {
  TerminalKind kind = TerminalKind::Continue;
  double miss_distance = 0.0;  // m, interpolated minimum R
  double t = 0.0;              // s, time of closest approach (or of divergence)
  double theta_LT = 0.0;       // rad, LOS elevation at closest approach
  double phi_LT = 0.0;         // rad, LOS azimuth at closest approach
};

/// Tracks the range history of one engagement and decides termination:
/// Hit when R <= r_hit or R has grown for `consecutive_increases` steps past
/// the minimum; Diverged on the range ceiling or the time limit. The reported
/// miss distance interpolates the closest approach inside the final step by
/// fitting a quadratic to R^2 around the minimum sample (R^2 is exactly
/// quadratic in t for linear relative motion, which the trajectory is locally).
/// Closest approach extrapolated from one state under locally linear relative
/// motion: exact for straight-line flybys, used when the final integration
/// step would cross through the range singularity.
TerminalResult refine_flyby(const EngagementState& state, const GeometryGuards& guards = {});

struct TerminalSettings {
  double r_hit = 0.25;    // m
  double r_ceiling = 1e5; // m
  double t_max = 15.0;    // s
  int consecutive_increases = 3;
};

class TerminalMonitor {
 public:
  using Settings = TerminalSettings;

  explicit TerminalMonitor(Settings s = Settings()) : settings_(s) {}

  /// Feed one integrated state; returns the decision for this step.
  TerminalResult update(const EngagementState& state);

  const Settings& settings() const { return settings_; }

 private:
  struct Sample {
    double t, R, theta_L, phi_L;
  };

  TerminalResult closest_approach() const;

  Settings settings_;
  std::optional<Sample> prev_;
  std::optional<Sample> best_, best_prev_, best_next_;
  int increases_ = 0;
};

}  // namespace guidance
