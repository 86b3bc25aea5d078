#include "guidance/pipeline.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

namespace guidance {

namespace {

std::uint64_t hash_config(const ScenarioConfig& s, const CollectConfig& c) {
  // Order-sensitive FNV-1a over the numeric fields that shape the data.
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&h](double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof bits);
    for (int i = 0; i < 8; ++i) {
      h ^= (bits >> (8 * i)) & 0xFF;
      h *= 1099511628211ull;
    }
  };
  for (const ScalarOrRange& r :
       {s.R0, s.theta_L0, s.phi_L0, s.theta_m0, s.phi_m0, s.theta_t0, s.phi_t0, s.V_M0}) {
    mix(r.lo);
    mix(r.hi);
  }
  mix(s.V_T);
  mix(s.maneuver.amplitude_y);
  mix(s.maneuver.amplitude_z);
  mix(s.maneuver.angular_frequency);
  mix(s.speed.thrust_accel);
  mix(s.speed.T_B);
  mix(s.speed.drag_coeff_parasite);
  mix(s.speed.drag_coeff_induced);
  mix(s.dt);
  mix(s.t_max);
  mix(c.control_sigma);
  return h;
}

}  // namespace

Dataset collect(const ScenarioConfig& scenario, const CollectConfig& collect_cfg,
                int n_trajectories, std::uint64_t seed) {
  if (n_trajectories < 1) throw ConfigError("collect: n_trajectories must be >= 1");

  ScenarioConfig cfg = scenario;
  cfg.fault = ActuatorFault{1.0, 0.0, 0.0};  // nominal plant only
  if (collect_cfg.override_initials) {
    cfg.R0 = collect_cfg.R0;
    cfg.theta_L0 = collect_cfg.theta_L0;
    cfg.phi_L0 = collect_cfg.phi_L0;
    cfg.theta_m0 = collect_cfg.theta_m0;
    cfg.phi_m0 = collect_cfg.phi_m0;
    cfg.theta_t0 = collect_cfg.theta_t0;
    cfg.phi_t0 = collect_cfg.phi_t0;
    cfg.V_M0 = collect_cfg.V_M0;
  }

  Dataset ds;
  ds.seed = seed;
  ds.config_hash = hash_config(scenario, collect_cfg);
  ds.dt = cfg.dt;

  int collected = 0;
  std::uint64_t attempt = 0;
  while (collected < n_trajectories) {
    const std::uint64_t traj_tag = attempt++;
    Rng init_rng(derive_seed(seed, stream::kCollectInit, traj_tag));
    Rng ctrl_rng(derive_seed(seed, stream::kCollectControl, traj_tag));

    EngagementState state = sample_initial_state(cfg, init_rng);
    TerminalMonitor monitor({cfg.terminal.r_hit, cfg.terminal.r_ceiling, cfg.t_max,
                             cfg.terminal.consecutive_increases});

    std::vector<TransitionRecord> rows;
    bool discarded = false;
    for (std::int64_t i = 0;; ++i) {
      ControlCommand u{ctrl_rng.normal(0.0, collect_cfg.control_sigma),
                       ctrl_rng.normal(0.0, collect_cfg.control_sigma)};
      u = saturate(u, cfg.a_max);

      Observation obs;
      EngagementState next;
      try {
        obs = observe(state, cfg.noise, derive_seed(seed, stream::kObservation, traj_tag,
                                                    static_cast<std::uint64_t>(i)));
        next = step(state, u, cfg.fault, cfg.maneuver, cfg.speed, cfg.dt, cfg.a_max);
      } catch (const SingularGeometry&) {
        discarded = true;  // rare random-control degeneracies; retry with next tag
        break;
      }

      TransitionRecord rec;
      rec.t = obs.t;
      rec.features = make_model_input(obs, u);
      rows.push_back(std::move(rec));

      state = next;
      const TerminalResult term = monitor.update(state);
      if (term.kind != TerminalKind::Continue) {
        // Record the final observation so the last transition has a successor.
        try {
          const Observation last = observe(
              state, cfg.noise,
              derive_seed(seed, stream::kObservation, traj_tag, static_cast<std::uint64_t>(i + 1)));
          TransitionRecord tail;
          tail.t = last.t;
          tail.features = make_model_input(last, ControlCommand{});
          rows.push_back(std::move(tail));
        } catch (const SingularGeometry&) {
          // Keep what we have; the trailing transition is simply lost.
        }
        break;
      }
    }

    if (discarded || rows.size() < 2) continue;
    ds.trajectory_starts.push_back(static_cast<std::int64_t>(ds.records.size()));
    for (auto& r : rows) ds.records.push_back(std::move(r));
    ++collected;
  }
  return ds;
}

std::pair<Dataset, Normalization> preprocess(const Dataset& dataset, double noise_sigma,
                                             double scale_floor) {
  if (dataset.records.empty()) throw EmptyDataset("preprocess: empty dataset");

  Dataset out;
  out.seed = dataset.seed;
  out.config_hash = dataset.config_hash;
  out.dt = dataset.dt;
  out.preprocessed = true;

  // Difference the observed LOS rates within each trajectory.
  for (std::size_t k = 0; k < dataset.trajectory_count(); ++k) {
    const auto [first, last] = dataset.trajectory_range(k);
    if (last - first < 2) continue;
    out.trajectory_starts.push_back(static_cast<std::int64_t>(out.records.size()));
    for (std::int64_t i = first; i + 1 < last; ++i) {
      const TransitionRecord& cur = dataset.records[static_cast<std::size_t>(i)];
      const TransitionRecord& nxt = dataset.records[static_cast<std::size_t>(i + 1)];
      TransitionRecord rec = cur;
      rec.target(0) = nxt.features(feat::kThetaLdot) - cur.features(feat::kThetaLdot);
      rec.target(1) = nxt.features(feat::kPhiLdot) - cur.features(feat::kPhiLdot);
      out.records.push_back(std::move(rec));
    }
  }
  if (out.records.empty()) throw EmptyDataset("preprocess: no usable transitions");

  const Eigen::Index n = static_cast<Eigen::Index>(out.records.size());

  // Augmentation noise on the state features only, sized relative to each
  // feature's spread (fitted before corruption).
  if (noise_sigma > 0.0) {
    Eigen::MatrixXd clean(n, feat::kInputDim);
    for (Eigen::Index i = 0; i < n; ++i) clean.row(i) = out.records[i].features.transpose();
    const Normalizer pre = fit_normalizer(clean, scale_floor);
    Rng rng(derive_seed(dataset.seed, stream::kAugmentation));
    for (Eigen::Index i = 0; i < n; ++i) {
      for (int j = 0; j < feat::kAy; ++j) {  // state features only, not controls
        out.records[i].features(j) += rng.normal(0.0, noise_sigma * pre.scale(j));
      }
    }
  }

  Eigen::MatrixXd X(n, feat::kInputDim);
  Eigen::MatrixXd Y(n, feat::kTargetDim);
  for (Eigen::Index i = 0; i < n; ++i) {
    X.row(i) = out.records[i].features.transpose();
    Y.row(i) = (out.records[i].target / out.dt).transpose();
  }

  Normalization norm;
  norm.input = fit_normalizer(X, scale_floor);
  norm.target = fit_normalizer(Y, scale_floor);
  return {std::move(out), std::move(norm)};
}

TrainingMatrices to_training_matrices(const Dataset& dataset, const Normalization& norm) {
  if (!dataset.preprocessed) throw EmptyDataset("to_training_matrices: dataset not preprocessed");
  const Eigen::Index n = static_cast<Eigen::Index>(dataset.records.size());
  TrainingMatrices tm;
  tm.inputs.resize(n, feat::kInputDim);
  tm.targets.resize(n, feat::kTargetDim);
  for (Eigen::Index i = 0; i < n; ++i) {
    tm.inputs.row(i) = norm.input.normalize(dataset.records[i].features).transpose();
    tm.targets.row(i) =
        norm.target.normalize(dataset.records[i].target / dataset.dt).transpose();
  }
  return tm;
}

namespace {

constexpr std::uint32_t kDatasetVersion = 1;
const char* kDatasetMagic = "GDDATA";

}  // namespace

void save_dataset(const std::string& path, const Dataset& ds) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw CorruptFile("cannot open for writing: " + path);

  // Text header, then packed little-endian float64 columns.
  os << kDatasetMagic << " v" << kDatasetVersion << "\n";
  os << "records " << ds.records.size() << "\n";
  os << "trajectories " << ds.trajectory_starts.size() << "\n";
  os << "seed " << ds.seed << "\n";
  os << "config_hash " << ds.config_hash << "\n";
  os << "preprocessed " << (ds.preprocessed ? 1 : 0) << "\n";
  os << "columns t,R,R_dot,theta_L,phi_L,theta_L_dot,phi_L_dot,V_M,theta_m,phi_m,a_ym,a_zm,"
        "d_theta_L_dot,d_phi_L_dot\n";
  os << "units s,m,m/s,rad,rad,rad/s,rad/s,m/s,rad,rad,m/s2,m/s2,rad/s,rad/s\n";
  os.write(reinterpret_cast<const char*>(&ds.dt), sizeof ds.dt);
  for (std::int64_t idx : ds.trajectory_starts) {
    os.write(reinterpret_cast<const char*>(&idx), sizeof idx);
  }
  for (const TransitionRecord& r : ds.records) {
    os.write(reinterpret_cast<const char*>(&r.t), sizeof r.t);
    for (int j = 0; j < feat::kInputDim; ++j) {
      const double v = r.features(j);
      os.write(reinterpret_cast<const char*>(&v), sizeof v);
    }
    for (int j = 0; j < feat::kTargetDim; ++j) {
      const double v = r.target(j);
      os.write(reinterpret_cast<const char*>(&v), sizeof v);
    }
  }
  if (!os) throw CorruptFile("write failure: " + path);
}

Dataset load_dataset(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw CorruptFile("cannot open: " + path);

  std::string line;
  if (!std::getline(is, line)) throw CorruptFile("missing header: " + path);
  {
    std::istringstream hdr(line);
    std::string magic, version;
    hdr >> magic >> version;
    if (magic != kDatasetMagic) throw VersionMismatch("bad magic in " + path);
    if (version != "v" + std::to_string(kDatasetVersion)) {
      throw VersionMismatch("unsupported dataset version in " + path);
    }
  }

  Dataset ds;
  std::size_t n_records = 0, n_traj = 0;
  for (int i = 0; i < 7; ++i) {
    if (!std::getline(is, line)) throw CorruptFile("truncated header: " + path);
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "records") {
      ls >> n_records;
    } else if (key == "trajectories") {
      ls >> n_traj;
    } else if (key == "seed") {
      ls >> ds.seed;
    } else if (key == "config_hash") {
      ls >> ds.config_hash;
    } else if (key == "preprocessed") {
      int v = 0;
      ls >> v;
      ds.preprocessed = v != 0;
    }
    // "columns"/"units" lines are documentation; skipped here.
  }

  auto read_raw = [&is, &path](void* p, std::size_t n) {
    is.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (!is) throw CorruptFile("unexpected end of file: " + path);
  };

  read_raw(&ds.dt, sizeof ds.dt);
  ds.trajectory_starts.resize(n_traj);
  for (auto& idx : ds.trajectory_starts) read_raw(&idx, sizeof idx);
  ds.records.resize(n_records);
  for (TransitionRecord& r : ds.records) {
    read_raw(&r.t, sizeof r.t);
    r.features.resize(feat::kInputDim);
    for (int j = 0; j < feat::kInputDim; ++j) read_raw(&r.features(j), sizeof(double));
    for (int j = 0; j < feat::kTargetDim; ++j) read_raw(&r.target(j), sizeof(double));
  }
  is.peek();
  if (!is.eof()) throw CorruptFile("trailing bytes in " + path);
  return ds;
}

void export_dataset_csv(const std::string& path, const Dataset& ds) {
  std::ofstream os(path);
  if (!os) throw CorruptFile("cannot open for writing: " + path);
  os << "trajectory,t,R,R_dot,theta_L,phi_L,theta_L_dot,phi_L_dot,V_M,theta_m,phi_m,a_ym,a_zm,"
        "d_theta_L_dot,d_phi_L_dot\n";
  os.precision(17);
  std::size_t traj = 0;
  for (std::size_t i = 0; i < ds.records.size(); ++i) {
    while (traj + 1 < ds.trajectory_starts.size() &&
           static_cast<std::int64_t>(i) >= ds.trajectory_starts[traj + 1]) {
      ++traj;
    }
    const TransitionRecord& r = ds.records[i];
    os << traj << ',' << r.t;
    for (int j = 0; j < feat::kInputDim; ++j) os << ',' << r.features(j);
    os << ',' << r.target(0) << ',' << r.target(1) << '\n';
  }
  if (!os) throw CorruptFile("write failure: " + path);
}

}  // namespace guidance
