#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "guidance/common.hpp"

namespace guidance {

/// Fully connected network: affine layers, ReLU on hidden layers, linear
/// output. Weight matrices are (fan_out x fan_in).
struct NetworkParams {
  std::vector<int> layer_dims;  // e.g. {11, 200, 200, 2}
  std::vector<Eigen::MatrixXd> weights;
  std::vector<Eigen::VectorXd> biases;

  int input_dim() const { return layer_dims.front(); }
  int output_dim() const { return layer_dims.back(); }
  std::size_t layer_count() const { return weights.size(); }
};

/// Zero-initialized parameters for the given layout.
NetworkParams make_network(const std::vector<int>& layer_dims);

/// He-style uniform fan-in initialization, deterministic given the seed.
NetworkParams init_network(const std::vector<int>& layer_dims, std::uint64_t seed);

/// Per-feature affine scaling. Scale is floored away from zero so constant
/// features do not blow up.
struct Normalizer {
  Eigen::VectorXd mean;
  Eigen::VectorXd scale;

  Eigen::VectorXd normalize(const Eigen::VectorXd& x) const {
    return (x - mean).cwiseQuotient(scale);
  }
  Eigen::VectorXd denormalize(const Eigen::VectorXd& y) const {
    return y.cwiseProduct(scale) + mean;
  }
  int dim() const { return static_cast<int>(mean.size()); }
};

/// Fit per-feature mean and scale = max(std, scale_floor) over dataset rows.
Normalizer fit_normalizer(const Eigen::MatrixXd& rows, double scale_floor = 1e-3);

/// Input and target scalers travel together with the trained weights.
struct Normalization {
  Normalizer input;
  Normalizer target;
};

/// Adam accumulators shaped like the network.
struct AdamState {
  std::vector<Eigen::MatrixXd> m_w, v_w;
  std::vector<Eigen::VectorXd> m_b, v_b;
  std::int64_t step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double learning_rate = 1e-3;
};

AdamState make_adam(const NetworkParams& params, double learning_rate = 1e-3);

/// Gradient container shaped like the network.
struct Gradient {
  std::vector<Eigen::MatrixXd> w;
  std::vector<Eigen::VectorXd> b;
};

/// Single-sample forward pass (normalized input).
Eigen::VectorXd forward(const NetworkParams& params, const Eigen::VectorXd& input);

/// Batched forward pass; rows of `inputs` are samples (normalized).
Eigen::MatrixXd forward_batch(const NetworkParams& params, const Eigen::MatrixXd& inputs);

/// MAE over the batch and output coordinates, with the full parameter
/// gradient by reverse accumulation. sign(0) = 0 at the loss layer and the
/// ReLU subgradient at 0 is 0. Rows of inputs/targets are samples.
std::pair<double, Gradient> mae_loss_and_gradient(const NetworkParams& params,
                                                  const Eigen::MatrixXd& inputs,
                                                  const Eigen::MatrixXd& targets);

/// One Adam update (bias-corrected). Mutates params and adam in place.
void adam_step(NetworkParams& params, AdamState& adam, const Gradient& gradient);

/// One-step extended-state prediction: the network output (denormalized) is
/// the LOS angular acceleration; the observable pair advances by explicit
/// Euler. `raw_input` is the unnormalized feature vector, including controls.
struct Prediction {
  Eigen::Vector2d q_next;
  Eigen::Vector2d q_dot_next;
  Eigen::Vector2d q_ddot;
};

Prediction predict_next(const NetworkParams& params, const Normalization& norm,
                        const Eigen::Vector2d& q, const Eigen::Vector2d& q_dot,
                        const Eigen::VectorXd& raw_input, double dt);

/// Trained model bundle: weights, scalers and optimizer state, persisted as a
/// single self-describing binary file.
struct ModelBundle {
  NetworkParams params;
  Normalization norm;
  AdamState adam;
};

void save_params(const std::string& path, const ModelBundle& bundle);
ModelBundle load_params(const std::string& path);

/// Offline training hyper-parameters.
struct TrainConfig {
  std::vector<int> hidden_dims = {200, 200};
  double learning_rate = 1e-3;
  int batch_size = 512;
  int max_epochs = 300;
  int patience = 20;
  double validation_fraction = 0.1;
  std::uint64_t seed = 0;
};

}  // namespace guidance
