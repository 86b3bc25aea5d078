#pragma once

#include <Eigen/Dense>

#include "guidance/engagement.hpp"

namespace guidance {

// Frozen feature layout of the dynamics-model input vector. Order matters:
// datasets, weight files and the controller all share it.
namespace feat {
inline constexpr int kR = 0;
inline constexpr int kRdot = 1;
inline constexpr int kThetaL = 2;
inline constexpr int kPhiL = 3;
inline constexpr int kThetaLdot = 4;
inline constexpr int kPhiLdot = 5;
inline constexpr int kVM = 6;
inline constexpr int kThetaM = 7;
inline constexpr int kPhiM = 8;
inline constexpr int kAy = 9;
inline constexpr int kAz = 10;
inline constexpr int kInputDim = 11;
inline constexpr int kTargetDim = 2;  // (theta_L_ddot, phi_L_ddot)
}  // namespace feat

inline Eigen::VectorXd make_model_input(const Observation& obs, const ControlCommand& u) {
  Eigen::VectorXd x(feat::kInputDim);
  x(feat::kR) = obs.R;
  x(feat::kRdot) = obs.R_dot;
  x(feat::kThetaL) = obs.theta_L;
  x(feat::kPhiL) = obs.phi_L;
  x(feat::kThetaLdot) = obs.theta_L_dot;
  x(feat::kPhiLdot) = obs.phi_L_dot;
  x(feat::kVM) = obs.V_M;
  x(feat::kThetaM) = obs.theta_m;
  x(feat::kPhiM) = obs.phi_m;
  x(feat::kAy) = u.a_ym;
  x(feat::kAz) = u.a_zm;
  return x;
}

}  // namespace guidance
