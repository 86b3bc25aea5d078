#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <deque>
#include <vector>

#include "guidance/neural.hpp"
#include "guidance/pipeline.hpp"

namespace guidance {

/// Ring buffer of the most recent transitions used by the online update.
/// Targets are stored in the units the network is trained on (LOS angular
/// acceleration, i.e. per-step rate delta divided by dt).
class ExperienceBuffer {
 public:
  explicit ExperienceBuffer(std::size_t capacity) : capacity_(capacity ? capacity : 1) {}

  /// Append one transition: raw input features at step m and the observed
  /// rate delta across the step.
  void record(const Eigen::VectorXd& raw_input, const Eigen::Vector2d& q_dot_prev,
              const Eigen::Vector2d& q_dot_next, double dt);

  std::size_t size() const { return inputs_.size(); }
  std::size_t capacity() const { return capacity_; }
  bool empty() const { return inputs_.empty(); }
  void clear() {
    inputs_.clear();
    targets_.clear();
  }

  /// Window contents as matrices, rows time-ordered oldest first.
  Eigen::MatrixXd raw_inputs() const;
  Eigen::MatrixXd raw_targets() const;

 private:
  std::size_t capacity_;
  std::deque<Eigen::VectorXd> inputs_;
  std::deque<Eigen::Vector2d> targets_;
};

/// Online adaptation hyper-parameters.
struct AdaptationConfig {
  double alpha = 0.001;     // learning rate of the online gradient step
  std::size_t window = 16;  // M, transitions kept in the buffer
  int steps_per_cycle = 1;
};

/// One control cycle's model refit: plain gradient descent on the window MAE,
/// always restarted from the meta-trained prior. The prior is not modified.
NetworkParams adapt(const NetworkParams& params_star, const Normalization& norm,
                    const ExperienceBuffer& buffer, const AdaptationConfig& cfg);

/// Per-epoch training trace.
struct TrainHistory {
  std::vector<double> train_mae;
  std::vector<double> validation_mae;
  int best_epoch = -1;
};

/// Offline training of the dynamics model on a preprocessed dataset:
/// Adam on MAE with shuffled mini-batches, early stopping on the validation
/// MAE plateau. The validation split is by whole trajectories. Returns the
/// trained bundle (best-validation snapshot) and optionally the loss trace.
ModelBundle meta_train(const Dataset& dataset, const Normalization& norm, const TrainConfig& cfg,
                       TrainHistory* history = nullptr);

}  // namespace guidance
