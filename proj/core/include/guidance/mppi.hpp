#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "guidance/engagement.hpp"
#include "guidance/features.hpp"
#include "guidance/meta.hpp"
#include "guidance/neural.hpp"

namespace guidance {

/// Rolling-horizon control sequence u_0..u_{T-1}.
struct ControlPlan {
  std::vector<ControlCommand> u;

  explicit ControlPlan(int horizon = 3) : u(static_cast<std::size_t>(horizon)) {}
  int horizon() const { return static_cast<int>(u.size()); }
};

/// Seeded exploration noise for one control cycle: N samples x T steps x 2
/// axes, drawn from a diagonal Gaussian. Sample n's stream depends only on
/// (seed, cycle, n), never on scheduling.
class NoiseBatch {
 public:
  NoiseBatch(int n_samples, int horizon, const Eigen::Vector2d& sigma, std::uint64_t seed,
             std::uint64_t cycle);

  int samples() const { return n_; }
  int horizon() const { return horizon_; }
  const Eigen::Vector2d& sigma() const { return sigma_; }

  double delta(int n, int t, int axis) const {
    return data_[(static_cast<std::size_t>(n) * horizon_ + t) * 2 + axis];
  }

 private:
  int n_, horizon_;
  Eigen::Vector2d sigma_;
  std::vector<double> data_;
};

/// Quadratic LOS tracking cost: K1 on the angle errors, K2 on the deviation
/// of the rates from a shaped reference, terminal step scaled by
/// terminal_weight. The reference rate closes the angle error over the
/// remaining flight time (q_dot_ref = -gain * error / t_go); with
/// rate_shaping_gain = 0 the cost reduces to a plain rate penalty.
struct CostConfig {
  Eigen::Vector2d k1{0.6, 0.5};  // (theta, phi) angle-error weights
  Eigen::Vector2d k2{3.0, 2.0};  // (theta, phi) rate weights
  double terminal_weight = 10.0;
  double theta_LD = -0.6;
  double phi_LD = 0.8;
  double rate_shaping_gain = 3.0;
  double rate_shaping_max = 1.0;      // rad/s clamp on the reference rate
  double closing_speed_floor = 1.0;   // m/s floor on |R_dot| in t_go
};

/// Reference LOS rates for the current angle errors and time-to-go.
Eigen::Vector2d desired_los_rates(double theta_err, double phi_err, double t_go,
                                  const CostConfig& cfg);

enum class ControllerVariant { Proposed, FixedTemperature, NoAdaptation };

/// Sampling-controller hyper-parameters.
struct ControllerConfig {
  int samples = 1000;                   // N
  int horizon = 3;                      // T
  Eigen::Vector2d sigma{20.0, 20.0};    // exploration std-dev per axis, m/s^2
  double lambda_star = 1.0;             // base temperature
  // Coefficient of the u' Sigma^-1 du coupling term. At the configured a_max
  // and sigma this term is orders of magnitude larger than the LOS tracking
  // cost, so it is disabled by default and exposed for study.
  double control_penalty = 0.0;
  double a_max = 200.0;
  double dt = 0.005;
  double sigma_floor = 1e-6;            // degenerate-cost guard for the temperature
  ControllerVariant variant = ControllerVariant::Proposed;
  double fixed_lambda = 0.001;          // used by FixedTemperature
  int workers = 1;                      // rollout threads; any value is bit-equivalent
};

/// State cost of one predicted step against the given reference rates
/// (pass zero rates for the unshaped form).
double running_cost(double theta_L, double phi_L, double theta_L_dot, double phi_L_dot,
                    const Eigen::Vector2d& desired_rates, const CostConfig& cfg);

double terminal_cost(double theta_L, double phi_L, double theta_L_dot, double phi_L_dot,
                     const Eigen::Vector2d& desired_rates, const CostConfig& cfg);

/// Model used by the rollouts: predicts the LOS angular acceleration from raw
/// features. The production implementation wraps the trained network; tests
/// substitute analytic models.
class DynamicsPredictor {
 public:
  virtual ~DynamicsPredictor() = default;
  /// Batch form: rows of `raw_inputs` are unnormalized feature vectors,
  /// returns one (theta_L_ddot, phi_L_ddot) row per input row.
  virtual Eigen::MatrixXd q_ddot_batch(const Eigen::MatrixXd& raw_inputs) const = 0;
};

/// Network-backed predictor.
class NetworkPredictor final : public DynamicsPredictor {
 public:
  NetworkPredictor(const NetworkParams& params, const Normalization& norm)
      : params_(&params), norm_(&norm) {}
  Eigen::MatrixXd q_ddot_batch(const Eigen::MatrixXd& raw_inputs) const override;

 private:
  const NetworkParams* params_;
  const Normalization* norm_;
};

/// Per-sample total trajectory costs for the noise batch, starting from the
/// observed state. Perturbed controls are saturated before entering the
/// model. Samples are processed in fixed-size blocks whose boundaries do not
/// depend on the worker count, so results are bit-identical for any number
/// of workers.
Eigen::VectorXd rollout_costs(const DynamicsPredictor& predictor, const Observation& obs,
                              const ControlPlan& plan, const NoiseBatch& noise,
                              const CostConfig& cost_cfg, const ControllerConfig& ctrl_cfg);

/// Adaptive softmax temperature: lambda_star times the population standard
/// deviation of the min-shifted costs, floored for degenerate batches.
double adaptive_temperature(const Eigen::VectorXd& costs_shifted, double lambda_star,
                            double sigma_floor = 1e-6);

struct WeightResult {
  Eigen::VectorXd weights;
  double lambda = 0.0;
  double min_cost = 0.0;
  double mean_cost = 0.0;
  double effective_samples = 0.0;  // 1 / sum(w^2)
};

/// Min-shift, temperature, exponential weighting, normalization.
/// `fixed_lambda` < 0 selects the adaptive temperature.
WeightResult importance_weights(const Eigen::VectorXd& costs, double lambda_star,
                                double sigma_floor = 1e-6, double fixed_lambda = -1.0);

/// u_t += sum_n w_n du_n,t followed by per-axis saturation.
void update_plan(ControlPlan& plan, const NoiseBatch& noise, const Eigen::VectorXd& weights,
                 double a_max);

/// Pop u_0 for execution; shift the remaining commands forward and hold the
/// last one.
ControlCommand shift_plan(ControlPlan& plan);

struct CycleDiagnostics {
  double lambda = 0.0;
  double min_cost = 0.0;
  double mean_cost = 0.0;
  double effective_samples = 0.0;
  bool adapted = false;
};

struct CycleResult {
  ControlCommand command;
  NetworkParams params_prime;  // the model the rollouts used this cycle
  CycleDiagnostics diagnostics;
};

/// One full control cycle: adapt the model on the experience window (variant
/// permitting), sample noise, roll out costs, weight, update the plan, emit
/// u_0 and shift. Deterministic given (seed, cycle).
CycleResult control_cycle(const Observation& obs, const ModelBundle& prior,
                          const ExperienceBuffer& buffer, ControlPlan& plan,
                          const ControllerConfig& ctrl_cfg, const CostConfig& cost_cfg,
                          const AdaptationConfig& adapt_cfg, std::uint64_t seed,
                          std::uint64_t cycle);

}  // namespace guidance
