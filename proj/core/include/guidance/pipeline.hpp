#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "guidance/features.hpp"
#include "guidance/neural.hpp"
#include "guidance/scenario.hpp"

namespace guidance {

/// One logged step of a collection trajectory. After preprocessing, `target`
/// holds the per-step delta of the observed LOS rates (rad/s); raw collected
/// rows carry a zero target until then.
struct TransitionRecord {
  double t = 0.0;
  Eigen::VectorXd features;  // feat::kInputDim raw (unnormalized) values
  Eigen::Vector2d target = Eigen::Vector2d::Zero();
};

/// Ordered records with trajectory boundaries. `trajectory_starts` holds the
/// index of the first record of each trajectory.
struct Dataset {
  std::vector<TransitionRecord> records;
  std::vector<std::int64_t> trajectory_starts;
  std::uint64_t seed = 0;
  std::uint64_t config_hash = 0;
  double dt = 0.005;
  bool preprocessed = false;

  std::size_t size() const { return records.size(); }
  std::size_t trajectory_count() const { return trajectory_starts.size(); }
  /// Half-open record range [first, last) of trajectory k.
  std::pair<std::int64_t, std::int64_t> trajectory_range(std::size_t k) const {
    const std::int64_t first = trajectory_starts[k];
    const std::int64_t last = (k + 1 < trajectory_starts.size())
                                  ? trajectory_starts[k + 1]
                                  : static_cast<std::int64_t>(records.size());
    return {first, last};
  }
};

/// Roll randomized engagements with zero-mean Gaussian controls and record
/// observed features. The actuator fault is disabled during collection (the
/// training data describes the nominal plant). Deterministic given the seed;
/// trajectories that hit a geometric singularity are discarded and recounted.
Dataset collect(const ScenarioConfig& scenario, const CollectConfig& collect_cfg,
                int n_trajectories, std::uint64_t seed);

/// Finite-difference consecutive observed LOS rates into per-step delta
/// targets (dropping the final record of each trajectory), add Gaussian
/// augmentation noise to the state features (never to targets or controls),
/// and fit the input/target normalizers on the result. `noise_sigma` is
/// relative to each feature's fitted scale. The target normalizer is fitted
/// on delta/dt, the quantity the network is trained to output.
std::pair<Dataset, Normalization> preprocess(const Dataset& dataset, double noise_sigma,
                                             double scale_floor = 1e-3);

/// Columnar binary with a text header; bit-exact round trip.
void save_dataset(const std::string& path, const Dataset& dataset);
Dataset load_dataset(const std::string& path);

/// Plain comma-separated export for inspection; one row per record.
void export_dataset_csv(const std::string& path, const Dataset& dataset);

/// Assemble normalized training matrices (inputs and q-double-dot targets)
/// from a preprocessed dataset.
struct TrainingMatrices {
  Eigen::MatrixXd inputs;   // n x kInputDim, normalized
  Eigen::MatrixXd targets;  // n x kTargetDim, normalized
};
TrainingMatrices to_training_matrices(const Dataset& dataset, const Normalization& norm);

}  // namespace guidance
