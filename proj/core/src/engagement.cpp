#include "guidance/engagement.hpp"

#include <array>
#include <cmath>

#include "guidance/rng.hpp"

namespace guidance {

StateDerivative kinematics_derivative(const EngagementState& state, const ControlCommand& u,
                                      double target_accel_y, double target_accel_z,
                                      const GeometryGuards& guards) {
  const double cos_tm = std::cos(state.theta_m);
  const double cos_tt = std::cos(state.theta_t);
  const double cos_tL = std::cos(state.theta_L);

  if (std::abs(cos_tm) < guards.cos_epsilon || std::abs(cos_tt) < guards.cos_epsilon ||
      std::abs(cos_tL) < guards.cos_epsilon || state.R < guards.r_epsilon) {
    throw SingularGeometry("kinematics_derivative: guarded denominator below epsilon");
  }

  const double sin_tm = std::sin(state.theta_m);
  const double sin_tt = std::sin(state.theta_t);
  const double sin_tL = std::sin(state.theta_L);
  const double sin_pm = std::sin(state.phi_m);
  const double cos_pm = std::cos(state.phi_m);
  const double sin_pt = std::sin(state.phi_t);
  const double cos_pt = std::cos(state.phi_t);

  StateDerivative d;
  d.R_dot = state.V_T * cos_tt * cos_pt - state.V_M * cos_tm * cos_pm;
  d.theta_L_dot = (state.V_T * sin_tt - state.V_M * sin_tm) / state.R;
  d.phi_L_dot = (state.V_T * cos_tt * sin_pt - state.V_M * cos_tm * sin_pm) / (state.R * cos_tL);

  const double tan_tm = sin_tm / cos_tm;
  const double tan_tt = sin_tt / cos_tt;

  d.theta_m_dot = u.a_zm / state.V_M - d.phi_L_dot * sin_tL * sin_pm - d.theta_L_dot * cos_pm;
  d.phi_m_dot = u.a_ym / (state.V_M * cos_tm) + d.phi_L_dot * tan_tm * cos_pm * sin_tL -
                d.theta_L_dot * tan_tm * sin_pm - d.phi_L_dot * cos_tL;
  d.theta_t_dot =
      target_accel_z / state.V_T - d.phi_L_dot * sin_tL * sin_pt - d.theta_L_dot * cos_pt;
  d.phi_t_dot = target_accel_y / (state.V_T * cos_tt) + d.phi_L_dot * tan_tt * cos_pt * sin_tL -
                d.theta_L_dot * tan_tt * sin_pt - d.phi_L_dot * cos_tL;
  return d;
}

double speed_derivative(const EngagementState& state, const ControlCommand& u,
                        const SpeedModel& model) {
  const double v = state.V_M;
  const double drag = model.drag_coeff_parasite * v * v +
                      model.drag_coeff_induced * (u.a_ym * u.a_ym + u.a_zm * u.a_zm) / (v * v);
  return (state.t < model.T_B ? model.thrust_accel : 0.0) - drag;
}

ControlCommand apply_fault(const ControlCommand& u_c, const ActuatorFault& fault, double t,
                           double a_max) {
  ControlCommand u = u_c;
  if (fault.active_at(t)) {
    u.a_ym *= fault.eta;
    u.a_zm *= fault.eta;
  }
  return saturate(u, a_max);
}

namespace {

// Packed state for the RK4 stages: kinematic components plus V_M.
struct PackedState {
  std::array<double, 8> v;  // R, theta_L, phi_L, theta_m, phi_m, theta_t, phi_t, V_M
};

PackedState derivative(const PackedState& y, double t, const ControlCommand& u,
                       const TargetManeuver& maneuver, const SpeedModel& speed_model, double V_T,
                       const GeometryGuards& guards) {
  EngagementState s;
  s.R = y.v[0];
  s.theta_L = y.v[1];
  s.phi_L = y.v[2];
  s.theta_m = y.v[3];
  s.phi_m = y.v[4];
  s.theta_t = y.v[5];
  s.phi_t = y.v[6];
  s.V_M = y.v[7];
  s.V_T = V_T;
  s.t = t;

  const StateDerivative k = kinematics_derivative(s, u, maneuver.accel_y(t), maneuver.accel_z(t), guards);
  PackedState d;
  d.v = {k.R_dot,      k.theta_L_dot, k.phi_L_dot, k.theta_m_dot,
         k.phi_m_dot,  k.theta_t_dot, k.phi_t_dot, speed_derivative(s, u, speed_model)};
  return d;
}

PackedState axpy(const PackedState& y, double a, const PackedState& d) {
  PackedState r;
  for (std::size_t i = 0; i < r.v.size(); ++i) r.v[i] = y.v[i] + a * d.v[i];
  return r;
}

}  // namespace

EngagementState step(const EngagementState& state, const ControlCommand& u_c,
                     const ActuatorFault& fault, const TargetManeuver& maneuver,
                     const SpeedModel& speed_model, double dt, double a_max,
                     const GeometryGuards& guards) {
  const ControlCommand u = apply_fault(u_c, fault, state.t, a_max);

  PackedState y;
  y.v = {state.R,     state.theta_L, state.phi_L, state.theta_m,
         state.phi_m, state.theta_t, state.phi_t, state.V_M};

  const double t = state.t;
  const PackedState k1 = derivative(y, t, u, maneuver, speed_model, state.V_T, guards);
  const PackedState k2 =
      derivative(axpy(y, dt / 2.0, k1), t + dt / 2.0, u, maneuver, speed_model, state.V_T, guards);
  const PackedState k3 =
      derivative(axpy(y, dt / 2.0, k2), t + dt / 2.0, u, maneuver, speed_model, state.V_T, guards);
  const PackedState k4 = derivative(axpy(y, dt, k3), t + dt, u, maneuver, speed_model, state.V_T, guards);

  PackedState out;
  for (std::size_t i = 0; i < out.v.size(); ++i) {
    out.v[i] = y.v[i] + dt / 6.0 * (k1.v[i] + 2.0 * k2.v[i] + 2.0 * k3.v[i] + k4.v[i]);
  }

  EngagementState next;
  next.R = out.v[0];
  next.theta_L = wrap_angle(out.v[1]);
  next.phi_L = wrap_angle(out.v[2]);
  next.theta_m = wrap_angle(out.v[3]);
  next.phi_m = wrap_angle(out.v[4]);
  next.theta_t = wrap_angle(out.v[5]);
  next.phi_t = wrap_angle(out.v[6]);
  next.V_M = std::max(out.v[7], speed_model.v_min);
  next.V_T = state.V_T;
  next.t = state.t + dt;
  return next;
}

Observation observe(const EngagementState& state, const NoiseConfig& cfg, std::uint64_t seed,
                    const GeometryGuards& guards) {
  // Rates do not depend on the control inputs (Coriolis terms only), so a
  // zero command is exact here.
  const StateDerivative d = kinematics_derivative(state, ControlCommand{}, 0.0, 0.0, guards);

  Observation obs;
  obs.R = state.R;
  obs.R_dot = d.R_dot;
  obs.theta_L = state.theta_L;
  obs.phi_L = state.phi_L;
  obs.theta_L_dot = d.theta_L_dot;
  obs.phi_L_dot = d.phi_L_dot;
  obs.V_M = state.V_M;
  obs.theta_m = state.theta_m;
  obs.phi_m = state.phi_m;
  obs.t = state.t;

  if (!cfg.enabled()) return obs;

  const double mult = 1.0 + cfg.multiplier_amplitude * std::sin(cfg.multiplier_frequency * state.t);
  obs.R *= mult;
  obs.R_dot *= mult;
  obs.theta_L *= mult;
  obs.phi_L *= mult;
  obs.theta_L_dot *= mult;
  obs.phi_L_dot *= mult;

  Rng rng(derive_seed(seed, stream::kObservation));
  if (cfg.los_angle_sigma > 0.0) {
    obs.theta_L += rng.normal(0.0, cfg.los_angle_sigma);
    obs.phi_L += rng.normal(0.0, cfg.los_angle_sigma);
  }
  if (cfg.los_rate_rel_sigma > 0.0) {
    obs.theta_L_dot += rng.normal(0.0, cfg.los_rate_rel_sigma * std::abs(obs.theta_L_dot));
    obs.phi_L_dot += rng.normal(0.0, cfg.los_rate_rel_sigma * std::abs(obs.phi_L_dot));
  }
  return obs;
}

TerminalResult refine_flyby(const EngagementState& state, const GeometryGuards& guards) {
  const StateDerivative d = kinematics_derivative(state, ControlCommand{}, 0.0, 0.0, guards);
  const double vt = state.R * d.theta_L_dot;
  const double vp = state.R * std::cos(state.theta_L) * d.phi_L_dot;
  const double v2 = d.R_dot * d.R_dot + vt * vt + vp * vp;

  TerminalResult r;
  r.kind = TerminalKind::Hit;
  if (v2 <= 0.0) {
    r.miss_distance = state.R;
    r.t = state.t;
    r.theta_LT = state.theta_L;
    r.phi_LT = state.phi_L;
    return r;
  }
  const double tau = std::max(0.0, -state.R * d.R_dot / v2);
  const double miss2 = state.R * state.R - (state.R * d.R_dot) * (state.R * d.R_dot) / v2;
  r.miss_distance = std::sqrt(std::max(miss2, 0.0));
  r.t = state.t + tau;
  r.theta_LT = wrap_angle(state.theta_L + d.theta_L_dot * tau);
  r.phi_LT = wrap_angle(state.phi_L + d.phi_L_dot * tau);
  return r;
}

TerminalResult TerminalMonitor::closest_approach() const {
  TerminalResult r;
  r.kind = TerminalKind::Hit;
  const Sample& b = *best_;
  r.miss_distance = b.R;
  r.t = b.t;
  r.theta_LT = b.theta_L;
  r.phi_LT = b.phi_L;

  // Quadratic fit of R^2(t) through the minimum sample and its neighbours.
  if (best_prev_ && best_next_) {
    const Sample& a = *best_prev_;
    const Sample& c = *best_next_;
    const double t0 = a.t, t1 = b.t, t2 = c.t;
    const double f0 = a.R * a.R, f1 = b.R * b.R, f2 = c.R * c.R;
    const double d01 = (f1 - f0) / (t1 - t0);
    const double d12 = (f2 - f1) / (t2 - t1);
    const double curv = (d12 - d01) / (t2 - t0);  // half of f''
    if (curv > 0.0) {
      // Vertex of f(t) = f1 + d01 (t - t0)(...) in Newton form.
      const double t_star = 0.5 * (t0 + t1 - d01 / curv);
      if (t_star >= t0 && t_star <= t2) {
        const double f_star = f0 + d01 * (t_star - t0) + curv * (t_star - t0) * (t_star - t1);
        r.miss_distance = std::sqrt(std::max(f_star, 0.0));
        r.t = t_star;
        // Quadratic (Lagrange) interpolation of the LOS angles to t_star.
        const auto lag = [&](double y0, double y1, double y2) {
          const double l0 = (t_star - t1) * (t_star - t2) / ((t0 - t1) * (t0 - t2));
          const double l1 = (t_star - t0) * (t_star - t2) / ((t1 - t0) * (t1 - t2));
          const double l2 = (t_star - t0) * (t_star - t1) / ((t2 - t0) * (t2 - t1));
          return y0 * l0 + y1 * l1 + y2 * l2;
        };
        r.theta_LT = lag(a.theta_L, b.theta_L, c.theta_L);
        r.phi_LT = lag(a.phi_L, b.phi_L, c.phi_L);
      }
    }
  }
  return r;
}

TerminalResult TerminalMonitor::update(const EngagementState& state) {
  const Sample cur{state.t, state.R, state.theta_L, state.phi_L};

  if (!best_ || cur.R < best_->R) {
    best_ = cur;
    best_prev_ = prev_;
    best_next_.reset();
    increases_ = 0;
  } else {
    if (!best_next_ && prev_ && prev_->t == best_->t) best_next_ = cur;
    if (prev_ && cur.R > prev_->R) {
      ++increases_;
    } else {
      increases_ = 0;
    }
  }

  prev_ = cur;

  if (state.R <= settings_.r_hit) {
    // Threshold crossing: the minimum sample itself is already inside the hit
    // radius; closest_approach refines it when neighbours are available.
    return closest_approach();
  }
  if (best_ && increases_ >= settings_.consecutive_increases) {
    return closest_approach();
  }

  TerminalResult r;
  if (state.R > settings_.r_ceiling || state.t >= settings_.t_max - 1e-9) {
    r.kind = TerminalKind::Diverged;
    r.t = state.t;
    r.miss_distance = best_ ? best_->R : state.R;
    r.theta_LT = state.theta_L;
    r.phi_LT = state.phi_L;
    return r;
  }
  r.kind = TerminalKind::Continue;
  return r;
}

}  // namespace guidance
