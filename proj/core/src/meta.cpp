#include "guidance/meta.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "guidance/rng.hpp"

namespace guidance {

void ExperienceBuffer::record(const Eigen::VectorXd& raw_input, const Eigen::Vector2d& q_dot_prev,
                              const Eigen::Vector2d& q_dot_next, double dt) {
  if (dt <= 0.0) throw ConfigError("ExperienceBuffer::record: dt must be positive");
  inputs_.push_back(raw_input);
  targets_.push_back((q_dot_next - q_dot_prev) / dt);
  while (inputs_.size() > capacity_) {
    inputs_.pop_front();
    targets_.pop_front();
  }
}

Eigen::MatrixXd ExperienceBuffer::raw_inputs() const {
  Eigen::MatrixXd X(static_cast<Eigen::Index>(inputs_.size()),
                    inputs_.empty() ? 0 : inputs_.front().size());
  for (std::size_t i = 0; i < inputs_.size(); ++i) {
    X.row(static_cast<Eigen::Index>(i)) = inputs_[i].transpose();
  }
  return X;
}

Eigen::MatrixXd ExperienceBuffer::raw_targets() const {
  Eigen::MatrixXd Y(static_cast<Eigen::Index>(targets_.size()), 2);
  for (std::size_t i = 0; i < targets_.size(); ++i) {
    Y.row(static_cast<Eigen::Index>(i)) = targets_[i].transpose();
  }
  return Y;
}

NetworkParams adapt(const NetworkParams& params_star, const Normalization& norm,
                    const ExperienceBuffer& buffer, const AdaptationConfig& cfg) {
  if (buffer.empty()) throw EmptyBuffer("adapt: experience buffer is empty");

  const Eigen::MatrixXd raw_x = buffer.raw_inputs();
  const Eigen::MatrixXd raw_y = buffer.raw_targets();
  Eigen::MatrixXd X(raw_x.rows(), raw_x.cols());
  Eigen::MatrixXd Y(raw_y.rows(), raw_y.cols());
  for (Eigen::Index i = 0; i < raw_x.rows(); ++i) {
    X.row(i) = norm.input.normalize(raw_x.row(i).transpose()).transpose();
    Y.row(i) = norm.target.normalize(raw_y.row(i).transpose()).transpose();
  }

  NetworkParams params = params_star;
  for (int s = 0; s < cfg.steps_per_cycle; ++s) {
    const auto [loss, grad] = mae_loss_and_gradient(params, X, Y);
    (void)loss;
    for (std::size_t l = 0; l < params.weights.size(); ++l) {
      params.weights[l] -= cfg.alpha * grad.w[l];
      params.biases[l] -= cfg.alpha * grad.b[l];
    }
  }
  return params;
}

ModelBundle meta_train(const Dataset& dataset, const Normalization& norm, const TrainConfig& cfg,
                       TrainHistory* history) {
  if (dataset.records.empty()) throw EmptyDataset("meta_train: empty dataset");
  if (!dataset.preprocessed) throw EmptyDataset("meta_train: dataset must be preprocessed");

  // Split by whole trajectories so validation transitions are unseen.
  const std::size_t n_traj = dataset.trajectory_count();
  std::vector<std::size_t> traj_ids(n_traj);
  std::iota(traj_ids.begin(), traj_ids.end(), 0);
  Rng split_rng(derive_seed(cfg.seed, stream::kBatchShuffle, 0xA11));
  for (std::size_t i = n_traj; i > 1; --i) {  // Fisher-Yates
    const std::size_t j = static_cast<std::size_t>(split_rng.next_u64() % i);
    std::swap(traj_ids[i - 1], traj_ids[j]);
  }
  std::size_t n_val_traj = static_cast<std::size_t>(
      std::floor(cfg.validation_fraction * static_cast<double>(n_traj)));
  if (n_val_traj == 0 && n_traj > 1 && cfg.validation_fraction > 0.0) n_val_traj = 1;

  std::vector<Eigen::Index> train_rows, val_rows;
  for (std::size_t k = 0; k < n_traj; ++k) {
    const bool is_val = std::find(traj_ids.begin(), traj_ids.begin() + n_val_traj, k) !=
                        traj_ids.begin() + n_val_traj;
    const auto [first, last] = dataset.trajectory_range(k);
    for (std::int64_t i = first; i < last; ++i) {
      (is_val ? val_rows : train_rows).push_back(static_cast<Eigen::Index>(i));
    }
  }
  if (train_rows.empty()) throw EmptyDataset("meta_train: no training rows after split");

  const TrainingMatrices all = to_training_matrices(dataset, norm);
  auto gather = [&all](const std::vector<Eigen::Index>& rows) {
    TrainingMatrices m;
    m.inputs.resize(static_cast<Eigen::Index>(rows.size()), all.inputs.cols());
    m.targets.resize(static_cast<Eigen::Index>(rows.size()), all.targets.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      m.inputs.row(static_cast<Eigen::Index>(i)) = all.inputs.row(rows[i]);
      m.targets.row(static_cast<Eigen::Index>(i)) = all.targets.row(rows[i]);
    }
    return m;
  };
  TrainingMatrices train = gather(train_rows);
  const TrainingMatrices val = gather(val_rows);

  std::vector<int> dims;
  dims.push_back(feat::kInputDim);
  for (int h : cfg.hidden_dims) dims.push_back(h);
  dims.push_back(feat::kTargetDim);

  ModelBundle bundle;
  bundle.params = init_network(dims, cfg.seed);
  bundle.norm = norm;
  bundle.adam = make_adam(bundle.params, cfg.learning_rate);

  NetworkParams best_params = bundle.params;
  double best_val = std::numeric_limits<double>::infinity();
  int best_epoch = -1;
  int stale_epochs = 0;

  const Eigen::Index n_train = train.inputs.rows();
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n_train));
  std::iota(order.begin(), order.end(), 0);
  Rng shuffle_rng(derive_seed(cfg.seed, stream::kBatchShuffle, 1));

  Eigen::MatrixXd bx, by;
  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(shuffle_rng.next_u64() % i);
      std::swap(order[i - 1], order[j]);
    }

    double epoch_loss = 0.0;
    Eigen::Index done = 0;
    while (done < n_train) {
      const Eigen::Index b = std::min<Eigen::Index>(cfg.batch_size, n_train - done);
      bx.resize(b, train.inputs.cols());
      by.resize(b, train.targets.cols());
      for (Eigen::Index i = 0; i < b; ++i) {
        bx.row(i) = train.inputs.row(order[static_cast<std::size_t>(done + i)]);
        by.row(i) = train.targets.row(order[static_cast<std::size_t>(done + i)]);
      }
      const auto [loss, grad] = mae_loss_and_gradient(bundle.params, bx, by);
      adam_step(bundle.params, bundle.adam, grad);
      epoch_loss += loss * static_cast<double>(b);
      done += b;
    }
    epoch_loss /= static_cast<double>(n_train);

    double val_mae = epoch_loss;
    if (val.inputs.rows() > 0) {
      const Eigen::MatrixXd pred = forward_batch(bundle.params, val.inputs);
      val_mae = (pred - val.targets).cwiseAbs().sum() /
                static_cast<double>(pred.rows() * pred.cols());
    }
    if (history) {
      history->train_mae.push_back(epoch_loss);
      history->validation_mae.push_back(val_mae);
    }

    if (val_mae < best_val - 1e-12) {
      best_val = val_mae;
      best_params = bundle.params;
      best_epoch = epoch;
      stale_epochs = 0;
    } else if (++stale_epochs >= cfg.patience) {
      break;
    }
  }

  bundle.params = std::move(best_params);
  if (history) history->best_epoch = best_epoch;
  return bundle;
}

}  // namespace guidance
