#include <doctest.h>

#include <cmath>
#include <vector>

#include "cartesian_oracle.hpp"
#include "guidance/engagement.hpp"
#include "guidance/rng.hpp"

using namespace guidance;

namespace {

EngagementState case1_state() {
  EngagementState s;
  s.R = 4000.0;
  s.theta_L = -0.7;
  s.phi_L = 0.65;
  s.theta_m = -0.36;
  s.phi_m = -0.2;
  s.theta_t = -0.32;
  s.phi_t = -0.22;
  s.V_M = 800.0;
  s.V_T = 270.0;
  return s;
}

// Five-point central difference, O(h^4).
template <typename F>
double diff5(F f, double h) {
  return (-f(2.0 * h) + 8.0 * f(h) - 8.0 * f(-h) + f(-2.0 * h)) / (12.0 * h);
}

}  // namespace

TEST_CASE("kinematics: collinear head-on closes at speed difference") {
  EngagementState s;
  s.R = 5000.0;
  s.V_M = 800.0;
  s.V_T = 270.0;
  const StateDerivative d = kinematics_derivative(s, {}, 0.0, 0.0);
  CHECK(d.R_dot == doctest::Approx(270.0 - 800.0));
  CHECK(d.theta_L_dot == 0.0);
  CHECK(d.phi_L_dot == 0.0);
  CHECK(d.theta_m_dot == 0.0);
  CHECK(d.phi_m_dot == 0.0);
}

TEST_CASE("kinematics: pure normal acceleration turns the heading at a/V") {
  EngagementState s;
  s.R = 5000.0;
  s.V_M = 800.0;
  s.V_T = 800.0;  // equal speeds, zero closing -> zero LOS rates
  const StateDerivative d = kinematics_derivative(s, {0.0, 200.0}, 0.0, 0.0);
  CHECK(d.theta_L_dot == 0.0);
  CHECK(d.phi_L_dot == 0.0);
  CHECK(d.theta_m_dot == doctest::Approx(200.0 / 800.0));
}

TEST_CASE("kinematics: derivative matches the Cartesian point-mass oracle") {
  const EngagementState s = case1_state();
  const StateDerivative d = kinematics_derivative(s, {}, 0.0, 0.0);
  const oracle::Cartesian c0 = oracle::to_cartesian(s);

  // Round trip sanity first.
  const EngagementState back = oracle::from_cartesian(c0, 0.0);
  CHECK(back.R == doctest::Approx(s.R).epsilon(1e-12));
  CHECK(back.theta_m == doctest::Approx(s.theta_m).epsilon(1e-12));
  CHECK(back.phi_t == doctest::Approx(s.phi_t).epsilon(1e-12));

  const double h = 1e-3;
  const auto field = [&](auto getter) {
    return diff5([&](double tau) { return getter(oracle::coast(c0, tau)); }, h);
  };
  const double R_dot = field([](const EngagementState& x) { return x.R; });
  const double tL_dot = field([](const EngagementState& x) { return x.theta_L; });
  const double pL_dot = field([](const EngagementState& x) { return x.phi_L; });
  const double tm_dot = field([](const EngagementState& x) { return x.theta_m; });
  const double pm_dot = field([](const EngagementState& x) { return x.phi_m; });
  const double tt_dot = field([](const EngagementState& x) { return x.theta_t; });
  const double pt_dot = field([](const EngagementState& x) { return x.phi_t; });

  CHECK(d.R_dot == doctest::Approx(R_dot).epsilon(1e-6));
  CHECK(d.theta_L_dot == doctest::Approx(tL_dot).epsilon(1e-6));
  CHECK(d.phi_L_dot == doctest::Approx(pL_dot).epsilon(1e-6));
  CHECK(d.theta_m_dot == doctest::Approx(tm_dot).epsilon(1e-6));
  CHECK(d.phi_m_dot == doctest::Approx(pm_dot).epsilon(1e-6));
  CHECK(d.theta_t_dot == doctest::Approx(tt_dot).epsilon(1e-6));
  CHECK(d.phi_t_dot == doctest::Approx(pt_dot).epsilon(1e-6));
}

TEST_CASE("kinematics: swapping the vehicles negates the closing speed") {
  Rng rng(7);
  for (int i = 0; i < 50; ++i) {
    EngagementState s;
    s.R = rng.uniform(500.0, 8000.0);
    s.theta_L = rng.uniform(-1.0, 1.0);
    s.phi_L = rng.uniform(-1.0, 1.0);
    s.theta_m = rng.uniform(-1.0, 1.0);
    s.phi_m = rng.uniform(-1.0, 1.0);
    s.theta_t = rng.uniform(-1.0, 1.0);
    s.phi_t = rng.uniform(-1.0, 1.0);
    s.V_M = rng.uniform(300.0, 900.0);
    s.V_T = rng.uniform(100.0, 400.0);

    EngagementState swapped = s;
    std::swap(swapped.V_M, swapped.V_T);
    std::swap(swapped.theta_m, swapped.theta_t);
    std::swap(swapped.phi_m, swapped.phi_t);

    const double a = kinematics_derivative(s, {}, 0.0, 0.0).R_dot;
    const double b = kinematics_derivative(swapped, {}, 0.0, 0.0).R_dot;
    CHECK(a == doctest::Approx(-b).epsilon(1e-12));
  }
}

TEST_CASE("kinematics: singular geometry is rejected") {
  EngagementState s = case1_state();
  s.theta_m = std::numbers::pi / 2.0;
  CHECK_THROWS_AS(kinematics_derivative(s, {}, 0.0, 0.0), SingularGeometry);
  s = case1_state();
  s.R = 0.01;
  CHECK_THROWS_AS(kinematics_derivative(s, {}, 0.0, 0.0), SingularGeometry);
}

TEST_CASE("speed model: boost, coast and parasite drag") {
  SpeedModel m;
  m.thrust_accel = 30.0;
  m.T_B = 3.5;
  m.drag_coeff_parasite = 0.0;
  m.drag_coeff_induced = 0.0;
  EngagementState s = case1_state();

  s.t = 1.0;
  CHECK(speed_derivative(s, {}, m) == doctest::Approx(30.0));
  s.t = 5.0;
  CHECK(speed_derivative(s, {}, m) == doctest::Approx(0.0));

  m.drag_coeff_parasite = 1e-5;
  s.V_M = 800.0;
  CHECK(speed_derivative(s, {}, m) == doctest::Approx(-6.4));
}

TEST_CASE("apply_fault: gain inside the window, saturation afterwards") {
  ActuatorFault f{0.5, 3.0, std::numeric_limits<double>::infinity()};
  const ControlCommand inside = apply_fault({100.0, -100.0}, f, 4.0, 200.0);
  CHECK(inside.a_ym == doctest::Approx(50.0));
  CHECK(inside.a_zm == doctest::Approx(-50.0));

  const ControlCommand before = apply_fault({100.0, -100.0}, f, 2.0, 200.0);
  CHECK(before.a_ym == doctest::Approx(100.0));
  CHECK(before.a_zm == doctest::Approx(-100.0));

  ActuatorFault g{0.6, 3.0, std::numeric_limits<double>::infinity()};
  const ControlCommand clipped = apply_fault({400.0, 0.0}, g, 4.0, 200.0);
  CHECK(clipped.a_ym == doctest::Approx(200.0));
  CHECK(clipped.a_zm == doctest::Approx(0.0));
}

TEST_CASE("apply_fault: identity outside, homogeneous inside") {
  ActuatorFault f{0.7, 2.0, 6.0};
  Rng rng(3);
  for (int i = 0; i < 20; ++i) {
    const ControlCommand u{rng.uniform(-150.0, 150.0), rng.uniform(-150.0, 150.0)};
    const ControlCommand out = apply_fault(u, f, 1.0, 200.0);
    CHECK(out.a_ym == u.a_ym);
    CHECK(out.a_zm == u.a_zm);
    // Degree-1 homogeneity inside the window (pre-saturation magnitudes).
    const double k = 0.5;
    const ControlCommand a = apply_fault({k * u.a_ym, k * u.a_zm}, f, 3.0, 1e9);
    const ControlCommand b = apply_fault(u, f, 3.0, 1e9);
    CHECK(a.a_ym == doctest::Approx(k * b.a_ym).epsilon(1e-12));
    CHECK(a.a_zm == doctest::Approx(k * b.a_zm).epsilon(1e-12));
  }
}

TEST_CASE("step: time bookkeeping, boost integration, determinism") {
  const EngagementState s0 = case1_state();
  SpeedModel m;
  m.thrust_accel = 30.0;
  m.T_B = 2.0;
  m.drag_coeff_parasite = 0.0;
  m.drag_coeff_induced = 0.0;

  EngagementState s = s0;
  const double dt = 0.005;
  for (int i = 0; i < 200; ++i) s = step(s, {}, {}, {}, m, dt);
  CHECK(s.t == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(s.V_M == doctest::Approx(830.0).epsilon(1e-9));

  EngagementState again = s0;
  for (int i = 0; i < 200; ++i) again = step(again, {}, {}, {}, m, dt);
  CHECK(again.R == s.R);          // bit-identical
  CHECK(again.theta_L == s.theta_L);
  CHECK(again.V_M == s.V_M);
}

TEST_CASE("step: straight-line trajectory matches the Cartesian oracle") {
  EngagementState s = case1_state();
  SpeedModel m;
  m.thrust_accel = 0.0;
  m.T_B = 0.0;
  m.drag_coeff_parasite = 0.0;
  m.drag_coeff_induced = 0.0;
  m.v_min = 1.0;

  const oracle::Cartesian c0 = oracle::to_cartesian(s);
  const double dt = 0.005;
  for (int i = 1; i <= 200; ++i) {
    s = step(s, {}, {}, {}, m, dt);
    const EngagementState ref = oracle::coast(c0, i * dt);
    CHECK(std::abs(s.R - ref.R) < 1e-3);
    CHECK(std::abs(s.theta_L - ref.theta_L) < 1e-3);
    CHECK(std::abs(s.phi_L - ref.phi_L) < 1e-3);
  }
}

TEST_CASE("step: RK4 order is at least 3.9 against the straight-line oracle") {
  // Fast LOS rotation so truncation error dominates roundoff.
  EngagementState s0;
  s0.R = 1200.0;
  s0.theta_L = 0.3;
  s0.phi_L = -0.4;
  s0.theta_m = 0.5;
  s0.phi_m = 0.7;
  s0.theta_t = -0.4;
  s0.phi_t = 0.9;
  s0.V_M = 700.0;
  s0.V_T = 300.0;

  SpeedModel m{0.0, 0.0, 0.0, 0.0, 1.0};
  const oracle::Cartesian c0 = oracle::to_cartesian(s0);
  const double T = 0.8;

  const auto r_error = [&](double dt) {
    EngagementState s = s0;
    const int n = static_cast<int>(std::round(T / dt));
    for (int i = 0; i < n; ++i) s = step(s, {}, {}, {}, m, dt);
    return std::abs(s.R - oracle::coast(c0, T).R);
  };

  const double e1 = r_error(0.1);
  const double e2 = r_error(0.05);
  const double e4 = r_error(0.025);
  REQUIRE(e1 > 1e-10);  // above roundoff, otherwise the ratio is meaningless
  const double order12 = std::log2(e1 / e2);
  const double order24 = std::log2(e2 / e4);
  CHECK(order12 >= 3.9);
  CHECK(order24 >= 3.9);
}

TEST_CASE("observe: identity sensor and determinism") {
  const EngagementState s = case1_state();
  const Observation clean = observe(s, {}, 42);
  CHECK(clean.R == s.R);
  CHECK(clean.theta_L == s.theta_L);
  CHECK(clean.V_M == s.V_M);
  const StateDerivative d = kinematics_derivative(s, {}, 0.0, 0.0);
  CHECK(clean.theta_L_dot == d.theta_L_dot);
  CHECK(clean.R_dot == d.R_dot);

  NoiseConfig noisy;
  noisy.multiplier_amplitude = 0.15;
  noisy.los_angle_sigma = 8e-3;
  noisy.los_rate_rel_sigma = 0.01;
  const Observation a = observe(s, noisy, 42);
  const Observation b = observe(s, noisy, 42);
  CHECK(a.theta_L == b.theta_L);
  CHECK(a.phi_L_dot == b.phi_L_dot);
  const Observation c = observe(s, noisy, 43);
  CHECK(a.theta_L != c.theta_L);
}

TEST_CASE("observe: multiplicative uncertainty tracks 1 + 0.15 sin t") {
  EngagementState s = case1_state();
  s.t = 2.0;
  NoiseConfig cfg;
  cfg.multiplier_amplitude = 0.15;
  const Observation o = observe(s, cfg, 1);
  const double mult = 1.0 + 0.15 * std::sin(2.0);
  CHECK(o.R == doctest::Approx(s.R * mult).epsilon(1e-12));
  CHECK(o.theta_L == doctest::Approx(s.theta_L * mult).epsilon(1e-12));
  CHECK(o.V_M == s.V_M);  // clean channel
}

TEST_CASE("observe: LOS angle noise sigma is 8 mrad within 2 percent") {
  const EngagementState s = case1_state();
  NoiseConfig cfg;
  cfg.los_angle_sigma = 8e-3;
  const int n = 100000;
  double sum = 0.0, sum2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const Observation o = observe(s, cfg, static_cast<std::uint64_t>(i));
    const double dev = o.theta_L - s.theta_L;
    sum += dev;
    sum2 += dev * dev;
  }
  const double mean = sum / n;
  const double sigma = std::sqrt(sum2 / n - mean * mean);
  CHECK(sigma == doctest::Approx(8e-3).epsilon(0.02));
}

TEST_CASE("terminal monitor: threshold crossing and timeout") {
  TerminalMonitor monitor({0.1, 1e5, 15.0, 3});
  EngagementState s = case1_state();
  s.R = 0.05;
  const TerminalResult r = monitor.update(s);
  CHECK(r.kind == TerminalKind::Hit);
  CHECK(r.miss_distance <= 0.05);

  TerminalMonitor late({0.1, 1e5, 15.0, 3});
  EngagementState far = case1_state();
  far.t = 16.0;
  const TerminalResult d = late.update(far);
  CHECK(d.kind == TerminalKind::Diverged);
}

TEST_CASE("terminal monitor: interpolated closest approach on an analytic flyby") {
  // Straight-line near miss: analytic minimum available in closed form.
  const Eigen::Vector3d dp0(-4000.0, 0.4, 0.3);
  const Eigen::Vector3d dv(950.0, 0.0, 0.0);
  const double t_star = -dp0.dot(dv) / dv.squaredNorm();
  const double miss_true = (dp0 + t_star * dv).norm();
  REQUIRE(miss_true < 1.0);

  const auto range_at = [&](double t) { return (dp0 + t * dv).norm(); };

  TerminalMonitor coarse({0.001, 1e5, 60.0, 3});
  TerminalResult coarse_result;
  const double dt = 0.005;
  for (int i = 0;; ++i) {
    EngagementState s;
    s.R = range_at(i * dt);
    s.t = i * dt;
    coarse_result = coarse.update(s);
    if (coarse_result.kind != TerminalKind::Continue) break;
  }
  REQUIRE(coarse_result.kind == TerminalKind::Hit);

  // Dense 10x sub-stepped oracle over the same trajectory.
  TerminalMonitor dense({0.001, 1e5, 60.0, 3});
  TerminalResult dense_result;
  for (int i = 0;; ++i) {
    EngagementState s;
    s.R = range_at(i * dt / 10.0);
    s.t = i * dt / 10.0;
    dense_result = dense.update(s);
    if (dense_result.kind != TerminalKind::Continue) break;
  }
  REQUIRE(dense_result.kind == TerminalKind::Hit);

  CHECK(coarse_result.miss_distance == doctest::Approx(miss_true).epsilon(1e-6));
  CHECK(coarse_result.miss_distance == doctest::Approx(dense_result.miss_distance).epsilon(1e-6));
  CHECK(coarse_result.t == doctest::Approx(t_star).epsilon(1e-6));
}

TEST_CASE("terminal monitor: interpolation agrees with a sub-stepped simulation") {
  // A gently curved near-collision trajectory through the real integrator.
  EngagementState s0;
  s0.R = 1500.0;
  s0.theta_L = -0.2;
  s0.phi_L = 0.3;
  s0.theta_m = -0.008;
  s0.phi_m = 0.006;
  s0.theta_t = 0.0;
  s0.phi_t = 0.0;
  s0.V_M = 800.0;
  s0.V_T = 270.0;
  SpeedModel m{0.0, 0.0, 0.0, 0.0, 1.0};
  TargetManeuver maneuver{10.0, 10.0, 1.0};

  const auto run = [&](double dt) {
    EngagementState s = s0;
    TerminalMonitor monitor({0.001, 1e5, 30.0, 3});
    monitor.update(s);
    for (;;) {
      s = step(s, {}, {}, maneuver, m, dt);
      const TerminalResult r = monitor.update(s);
      if (r.kind != TerminalKind::Continue) return r;
    }
  };

  const TerminalResult coarse = run(0.005);
  const TerminalResult dense = run(0.0005);
  REQUIRE(coarse.kind == TerminalKind::Hit);
  REQUIRE(dense.kind == TerminalKind::Hit);
  CHECK(std::abs(coarse.miss_distance - dense.miss_distance) < 0.01);
  CHECK(std::abs(coarse.t - dense.t) < 0.005);
}
