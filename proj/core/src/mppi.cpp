#include "guidance/mppi.hpp"

#include <cmath>
#include <thread>

#include "guidance/rng.hpp"

namespace guidance {

NoiseBatch::NoiseBatch(int n_samples, int horizon, const Eigen::Vector2d& sigma,
                       std::uint64_t seed, std::uint64_t cycle)
    : n_(n_samples), horizon_(horizon), sigma_(sigma) {
  data_.resize(static_cast<std::size_t>(n_) * horizon_ * 2);
  for (int n = 0; n < n_; ++n) {
    Rng rng(derive_seed(seed, stream::kRolloutNoise, cycle, static_cast<std::uint64_t>(n)));
    for (int t = 0; t < horizon_; ++t) {
      data_[(static_cast<std::size_t>(n) * horizon_ + t) * 2 + 0] = rng.normal(0.0, sigma_(0));
      data_[(static_cast<std::size_t>(n) * horizon_ + t) * 2 + 1] = rng.normal(0.0, sigma_(1));
    }
  }
}

Eigen::Vector2d desired_los_rates(double theta_err, double phi_err, double t_go,
                                  const CostConfig& cfg) {
  if (cfg.rate_shaping_gain == 0.0) return Eigen::Vector2d::Zero();
  const double inv_tgo = 1.0 / std::max(t_go, 1e-6);
  Eigen::Vector2d ref(-cfg.rate_shaping_gain * theta_err * inv_tgo,
                      -cfg.rate_shaping_gain * phi_err * inv_tgo);
  ref(0) = std::clamp(ref(0), -cfg.rate_shaping_max, cfg.rate_shaping_max);
  ref(1) = std::clamp(ref(1), -cfg.rate_shaping_max, cfg.rate_shaping_max);
  return ref;
}

double running_cost(double theta_L, double phi_L, double theta_L_dot, double phi_L_dot,
                    const Eigen::Vector2d& desired_rates, const CostConfig& cfg) {
  const double e_theta = theta_L - cfg.theta_LD;
  const double e_phi = phi_L - cfg.phi_LD;
  const double r_theta = theta_L_dot - desired_rates(0);
  const double r_phi = phi_L_dot - desired_rates(1);
  return cfg.k1(0) * e_theta * e_theta + cfg.k1(1) * e_phi * e_phi +
         cfg.k2(0) * r_theta * r_theta + cfg.k2(1) * r_phi * r_phi;
}

double terminal_cost(double theta_L, double phi_L, double theta_L_dot, double phi_L_dot,
                     const Eigen::Vector2d& desired_rates, const CostConfig& cfg) {
  return cfg.terminal_weight *
         running_cost(theta_L, phi_L, theta_L_dot, phi_L_dot, desired_rates, cfg);
}

Eigen::MatrixXd NetworkPredictor::q_ddot_batch(const Eigen::MatrixXd& raw_inputs) const {
  Eigen::MatrixXd X(raw_inputs.rows(), raw_inputs.cols());
  for (Eigen::Index i = 0; i < raw_inputs.rows(); ++i) {
    X.row(i) = norm_->input.normalize(raw_inputs.row(i).transpose()).transpose();
  }
  Eigen::MatrixXd out = forward_batch(*params_, X);
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    out.row(i) = norm_->target.denormalize(out.row(i).transpose()).transpose();
  }
  return out;
}

namespace {

// Fixed block width for the rollout batches. Block boundaries depend only on
// the sample index, so worker scheduling cannot change any result bit.
constexpr int kRolloutBlock = 128;

void rollout_block(const DynamicsPredictor& predictor, const Observation& obs,
                   const ControlPlan& plan, const NoiseBatch& noise, const CostConfig& cost_cfg,
                   const ControllerConfig& ctrl, int first, int count, Eigen::VectorXd& costs) {
  const int T = plan.horizon();
  const double dt = ctrl.dt;
  // Inverse noise covariance for the coupling term; a disabled axis
  // (sigma = 0) contributes nothing since its perturbations are zero.
  const Eigen::Vector2d inv_sigma2(
      ctrl.sigma(0) > 0.0 ? 1.0 / (ctrl.sigma(0) * ctrl.sigma(0)) : 0.0,
      ctrl.sigma(1) > 0.0 ? 1.0 / (ctrl.sigma(1) * ctrl.sigma(1)) : 0.0);

  Eigen::MatrixXd X(count, feat::kInputDim);
  Eigen::VectorXd q_theta = Eigen::VectorXd::Constant(count, obs.theta_L);
  Eigen::VectorXd q_phi = Eigen::VectorXd::Constant(count, obs.phi_L);
  Eigen::VectorXd qd_theta = Eigen::VectorXd::Constant(count, obs.theta_L_dot);
  Eigen::VectorXd qd_phi = Eigen::VectorXd::Constant(count, obs.phi_L_dot);

  // Slow channels are held at their observed values across the short horizon;
  // the model only advances the LOS pair.
  X.col(feat::kR).setConstant(obs.R);
  X.col(feat::kRdot).setConstant(obs.R_dot);
  X.col(feat::kVM).setConstant(obs.V_M);
  X.col(feat::kThetaM).setConstant(obs.theta_m);
  X.col(feat::kPhiM).setConstant(obs.phi_m);

  Eigen::VectorXd acc = Eigen::VectorXd::Zero(count);

  // Time-to-go from the cycle's observation, advanced along the horizon.
  const double t_go0 = obs.R / std::max(std::abs(obs.R_dot), cost_cfg.closing_speed_floor);

  for (int t = 0; t < T; ++t) {
    const ControlCommand& u_nom = plan.u[static_cast<std::size_t>(t)];
    for (int i = 0; i < count; ++i) {
      const int n = first + i;
      const double dy = noise.delta(n, t, 0);
      const double dz = noise.delta(n, t, 1);
      const ControlCommand u_pert =
          saturate(ControlCommand{u_nom.a_ym + dy, u_nom.a_zm + dz}, ctrl.a_max);
      X(i, feat::kThetaL) = q_theta(i);
      X(i, feat::kPhiL) = q_phi(i);
      X(i, feat::kThetaLdot) = qd_theta(i);
      X(i, feat::kPhiLdot) = qd_phi(i);
      X(i, feat::kAy) = u_pert.a_ym;
      X(i, feat::kAz) = u_pert.a_zm;
      // Control-noise coupling term, evaluated on the sampled (pre-saturation)
      // perturbation.
      acc(i) += ctrl.control_penalty *
                (u_nom.a_ym * dy * inv_sigma2(0) + u_nom.a_zm * dz * inv_sigma2(1));
    }

    const Eigen::MatrixXd qdd = predictor.q_ddot_batch(X);

    const double t_go = std::max(t_go0 - (t + 1) * dt, dt);
    for (int i = 0; i < count; ++i) {
      const double q_theta_next = q_theta(i) + qd_theta(i) * dt;
      const double q_phi_next = q_phi(i) + qd_phi(i) * dt;
      const double qd_theta_next = qd_theta(i) + qdd(i, 0) * dt;
      const double qd_phi_next = qd_phi(i) + qdd(i, 1) * dt;
      q_theta(i) = q_theta_next;
      q_phi(i) = q_phi_next;
      qd_theta(i) = qd_theta_next;
      qd_phi(i) = qd_phi_next;
      const Eigen::Vector2d ref = desired_los_rates(
          q_theta(i) - cost_cfg.theta_LD, q_phi(i) - cost_cfg.phi_LD, t_go, cost_cfg);
      acc(i) += running_cost(q_theta(i), q_phi(i), qd_theta(i), qd_phi(i), ref, cost_cfg);
      if (t + 1 == T) {
        acc(i) += terminal_cost(q_theta(i), q_phi(i), qd_theta(i), qd_phi(i), ref, cost_cfg);
        costs(first + i) = acc(i);
      }
    }
  }
}

}  // namespace

Eigen::VectorXd rollout_costs(const DynamicsPredictor& predictor, const Observation& obs,
                              const ControlPlan& plan, const NoiseBatch& noise,
                              const CostConfig& cost_cfg, const ControllerConfig& ctrl_cfg) {
  const int N = noise.samples();
  Eigen::VectorXd costs(N);
  const int n_blocks = (N + kRolloutBlock - 1) / kRolloutBlock;

  auto run_blocks = [&](int block_begin, int block_end) {
    for (int b = block_begin; b < block_end; ++b) {
      const int first = b * kRolloutBlock;
      const int count = std::min(kRolloutBlock, N - first);
      rollout_block(predictor, obs, plan, noise, cost_cfg, ctrl_cfg, first, count, costs);
    }
  };

  const int workers = std::max(1, std::min(ctrl_cfg.workers, n_blocks));
  if (workers == 1) {
    run_blocks(0, n_blocks);
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    const int per = (n_blocks + workers - 1) / workers;
    for (int w = 0; w < workers; ++w) {
      const int lo = w * per;
      const int hi = std::min(n_blocks, lo + per);
      if (lo >= hi) break;
      pool.emplace_back(run_blocks, lo, hi);
    }
    for (auto& th : pool) th.join();
  }
  return costs;
}

double adaptive_temperature(const Eigen::VectorXd& costs_shifted, double lambda_star,
                            double sigma_floor) {
  const double n = static_cast<double>(costs_shifted.size());
  const double mean = costs_shifted.mean();
  const double var = (costs_shifted.array() - mean).square().sum() / n;
  const double sigma = std::sqrt(var);
  return lambda_star * std::max(sigma, sigma_floor);
}

WeightResult importance_weights(const Eigen::VectorXd& costs, double lambda_star,
                                double sigma_floor, double fixed_lambda) {
  WeightResult r;
  r.min_cost = costs.minCoeff();
  r.mean_cost = costs.mean();
  const Eigen::VectorXd shifted = costs.array() - r.min_cost;
  r.lambda = fixed_lambda > 0.0 ? fixed_lambda
                                : adaptive_temperature(shifted, lambda_star, sigma_floor);

  // eta accumulated in extended precision; exponents are <= 0 by the shift.
  Eigen::VectorXd ex(shifted.size());
  long double eta = 0.0L;
  for (Eigen::Index i = 0; i < shifted.size(); ++i) {
    ex(i) = std::exp(-shifted(i) / r.lambda);
    eta += static_cast<long double>(ex(i));
  }
  r.weights = ex / static_cast<double>(eta);
  const double w2 = r.weights.squaredNorm();
  r.effective_samples = w2 > 0.0 ? 1.0 / w2 : 0.0;
  return r;
}

void update_plan(ControlPlan& plan, const NoiseBatch& noise, const Eigen::VectorXd& weights,
                 double a_max) {
  for (int t = 0; t < plan.horizon(); ++t) {
    double dy = 0.0, dz = 0.0;
    for (int n = 0; n < noise.samples(); ++n) {
      dy += weights(n) * noise.delta(n, t, 0);
      dz += weights(n) * noise.delta(n, t, 1);
    }
    ControlCommand& u = plan.u[static_cast<std::size_t>(t)];
    u.a_ym += dy;
    u.a_zm += dz;
    u = saturate(u, a_max);
  }
}

ControlCommand shift_plan(ControlPlan& plan) {
  const ControlCommand out = plan.u.front();
  for (std::size_t t = 0; t + 1 < plan.u.size(); ++t) plan.u[t] = plan.u[t + 1];
  // Initialize(u_{T-1}): hold the previous last command.
  return out;
}

CycleResult control_cycle(const Observation& obs, const ModelBundle& prior,
                          const ExperienceBuffer& buffer, ControlPlan& plan,
                          const ControllerConfig& ctrl_cfg, const CostConfig& cost_cfg,
                          const AdaptationConfig& adapt_cfg, std::uint64_t seed,
                          std::uint64_t cycle) {
  CycleResult result;

  const bool adapt_enabled = ctrl_cfg.variant != ControllerVariant::NoAdaptation;
  if (adapt_enabled && !buffer.empty()) {
    result.params_prime = adapt(prior.params, prior.norm, buffer, adapt_cfg);
    result.diagnostics.adapted = true;
  } else {
    result.params_prime = prior.params;
  }

  const NoiseBatch noise(ctrl_cfg.samples, ctrl_cfg.horizon, ctrl_cfg.sigma, seed, cycle);
  const NetworkPredictor predictor(result.params_prime, prior.norm);
  const Eigen::VectorXd costs = rollout_costs(predictor, obs, plan, noise, cost_cfg, ctrl_cfg);

  const double fixed = ctrl_cfg.variant == ControllerVariant::FixedTemperature
                           ? ctrl_cfg.fixed_lambda
                           : -1.0;
  const WeightResult w =
      importance_weights(costs, ctrl_cfg.lambda_star, ctrl_cfg.sigma_floor, fixed);
  result.diagnostics.lambda = w.lambda;
  result.diagnostics.min_cost = w.min_cost;
  result.diagnostics.mean_cost = w.mean_cost;
  result.diagnostics.effective_samples = w.effective_samples;

  update_plan(plan, noise, w.weights, ctrl_cfg.a_max);
  result.command = shift_plan(plan);
  return result;
}

}  // namespace guidance
