#include "guidance/runner.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <thread>

#include "guidance/features.hpp"
#include "guidance/rng.hpp"

namespace guidance {

namespace {

ScenarioConfig draw_scenario(const EngagementConfig& config, std::uint64_t seed) {
  ScenarioConfig s = config.scenario;
  Rng rng(derive_seed(seed, stream::kScenarioDraw));
  s.R0 = s.R0.sample(rng);
  s.theta_L0 = s.theta_L0.sample(rng);
  s.phi_L0 = s.phi_L0.sample(rng);
  s.theta_m0 = s.theta_m0.sample(rng);
  s.phi_m0 = s.phi_m0.sample(rng);
  s.theta_t0 = s.theta_t0.sample(rng);
  s.phi_t0 = s.phi_t0.sample(rng);
  s.V_M0 = s.V_M0.sample(rng);
  return s;
}

double median_of(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

RunReport run_engagement(const EngagementConfig& config, const ModelBundle& prior,
                         std::uint64_t seed) {
  const ScenarioConfig scn = draw_scenario(config, seed);

  RunReport report;
  report.seed = seed;
  report.variant = config.controller.variant;
  report.theta_LD = scn.theta_LD;
  report.phi_LD = scn.phi_LD;

  CostConfig cost = config.cost;
  cost.theta_LD = scn.theta_LD;
  cost.phi_LD = scn.phi_LD;

  Rng init_rng(derive_seed(seed, stream::kScenarioDraw, 1));
  EngagementState state = sample_initial_state(scn, init_rng);

  TerminalMonitor monitor(
      {scn.terminal.r_hit, scn.terminal.r_ceiling, scn.t_max, scn.terminal.consecutive_increases});
  monitor.update(state);

  ControlPlan plan(config.controller.horizon);
  ExperienceBuffer buffer(config.adaptation.window);

  bool have_prev = false;
  Eigen::VectorXd prev_features;
  Eigen::Vector2d prev_rates = Eigen::Vector2d::Zero();

  TerminalResult term;
  for (std::uint64_t cycle = 0;; ++cycle) {
    Observation obs;
    try {
      obs = observe(state, scn.noise, derive_seed(seed, stream::kObservation, cycle));
    } catch (const SingularGeometry&) {
      term.kind = TerminalKind::Diverged;
      term.t = state.t;
      break;
    }

    const Eigen::Vector2d rates(obs.theta_L_dot, obs.phi_L_dot);
    if (have_prev) {
      buffer.record(prev_features, prev_rates, rates, scn.dt);
    }

    CycleResult cyc = control_cycle(obs, prior, buffer, plan, config.controller, cost,
                                    config.adaptation, seed, cycle);
    if (cyc.diagnostics.adapted) ++report.adapt_calls;

    const ControlCommand actual =
        apply_fault(cyc.command, scn.fault, state.t, scn.a_max);

    CycleLog row;
    row.t = state.t;
    row.R = state.R;
    row.theta_L = state.theta_L;
    row.phi_L = state.phi_L;
    row.theta_L_dot = obs.theta_L_dot;
    row.phi_L_dot = obs.phi_L_dot;
    row.theta_m = state.theta_m;
    row.phi_m = state.phi_m;
    row.V_M = state.V_M;
    row.u_ym = cyc.command.a_ym;
    row.u_zm = cyc.command.a_zm;
    row.act_ym = actual.a_ym;
    row.act_zm = actual.a_zm;
    row.lambda = cyc.diagnostics.lambda;
    row.min_cost = cyc.diagnostics.min_cost;
    row.mean_cost = cyc.diagnostics.mean_cost;
    row.effective_samples = cyc.diagnostics.effective_samples;
    report.log.push_back(row);

    prev_features = make_model_input(obs, cyc.command);
    prev_rates = rates;
    have_prev = true;

    try {
      state = step(state, cyc.command, scn.fault, scn.maneuver, scn.speed, scn.dt, scn.a_max);
    } catch (const SingularGeometry&) {
      // The integrator cannot cross the range singularity; a collapse this
      // close to the target is the endgame flyby, resolved analytically from
      // the last valid state.
      if (state.R < 50.0) {
        term = refine_flyby(state);
      } else {
        term.kind = TerminalKind::Diverged;
        term.t = state.t;
      }
      break;
    }

    term = monitor.update(state);
    if (term.kind != TerminalKind::Continue) {
      CycleLog tail;
      tail.t = state.t;
      tail.R = state.R;
      tail.theta_L = state.theta_L;
      tail.phi_L = state.phi_L;
      tail.theta_m = state.theta_m;
      tail.phi_m = state.phi_m;
      tail.V_M = state.V_M;
      report.log.push_back(tail);
      break;
    }
  }

  report.outcome = term.kind;
  report.miss_distance = term.miss_distance;
  report.theta_LT = term.theta_LT;
  report.phi_LT = term.phi_LT;
  report.impact_time = term.t;
  return report;
}

MonteCarloResult run_monte_carlo(const EngagementConfig& config, int n_runs,
                                 const ModelBundle& prior, std::uint64_t seed) {
  if (n_runs < 1) throw ConfigError("run_monte_carlo: n_runs must be >= 1");

  MonteCarloResult result;
  result.runs.resize(static_cast<std::size_t>(n_runs));
  result.failures.assign(static_cast<std::size_t>(n_runs), "");

  const int budget = std::max(1, config.controller.workers);
  const int outer = std::min(budget, n_runs);
  EngagementConfig run_cfg = config;
  run_cfg.controller.workers = std::max(1, budget / outer);

  std::mutex next_mutex;
  int next_run = 0;
  auto worker = [&]() {
    for (;;) {
      int idx;
      {
        std::lock_guard<std::mutex> lock(next_mutex);
        if (next_run >= n_runs) return;
        idx = next_run++;
      }
      const std::uint64_t run_seed =
          derive_seed(seed, stream::kMonteCarlo, static_cast<std::uint64_t>(idx));
      try {
        result.runs[static_cast<std::size_t>(idx)] = run_engagement(run_cfg, prior, run_seed);
      } catch (const std::exception& e) {
        result.failures[static_cast<std::size_t>(idx)] = e.what();
        result.runs[static_cast<std::size_t>(idx)].outcome = TerminalKind::Diverged;
        result.runs[static_cast<std::size_t>(idx)].seed = run_seed;
      }
    }
  };

  if (outer == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int i = 0; i < outer; ++i) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  std::vector<double> misses, angle_errors;
  for (const RunReport& r : result.runs) {
    if (r.hit(config.hit_threshold)) ++result.hits;
    misses.push_back(r.miss_distance);
    if (r.outcome == TerminalKind::Hit) {
      angle_errors.push_back(std::max(std::abs(r.theta_LT - r.theta_LD),
                                      std::abs(r.phi_LT - r.phi_LD)));
    }
  }
  result.hit_rate = static_cast<double>(result.hits) / static_cast<double>(n_runs);
  result.median_miss = median_of(misses);
  result.median_angle_error = median_of(angle_errors);
  return result;
}

std::vector<ComparisonRow> compare_variants(const EngagementConfig& config,
                                            const std::vector<ControllerVariant>& variants,
                                            const std::vector<std::uint64_t>& seeds,
                                            const ModelBundle& prior,
                                            std::vector<RunReport>* all_reports) {
  std::vector<ComparisonRow> rows;
  for (ControllerVariant v : variants) {
    EngagementConfig cfg = config;
    cfg.controller.variant = v;
    ComparisonRow row;
    row.variant = v;
    std::vector<double> misses;
    for (std::uint64_t s : seeds) {
      RunReport r = run_engagement(cfg, prior, s);
      row.runs += 1;
      if (r.hit(config.hit_threshold)) row.hits += 1;
      row.mean_miss += r.miss_distance;
      misses.push_back(r.miss_distance);
      row.mean_theta_err += std::abs(r.theta_LT - r.theta_LD);
      row.mean_phi_err += std::abs(r.phi_LT - r.phi_LD);
      row.mean_impact_time += r.impact_time;
      if (all_reports) all_reports->push_back(std::move(r));
    }
    if (row.runs > 0) {
      row.mean_miss /= row.runs;
      row.mean_theta_err /= row.runs;
      row.mean_phi_err /= row.runs;
      row.mean_impact_time /= row.runs;
      row.median_miss = median_of(misses);
    }
    rows.push_back(row);
  }
  return rows;
}

namespace {

void write_histogram_csv(const std::string& path, const std::vector<double>& values, int bins) {
  std::ofstream os(path);
  if (!os) throw CorruptFile("cannot open for writing: " + path);
  os << "bin_lo,bin_hi,count\n";
  if (values.empty()) return;
  os.precision(17);
  const auto [mn_it, mx_it] = std::minmax_element(values.begin(), values.end());
  double lo = *mn_it, hi = *mx_it;
  if (lo == hi) hi = lo + 1.0;  // single-valued data: one bin wide enough
  const double width = (hi - lo) / bins;
  std::vector<int> counts(static_cast<std::size_t>(bins), 0);
  for (double v : values) {
    int b = static_cast<int>((v - lo) / width);
    b = std::clamp(b, 0, bins - 1);
    counts[static_cast<std::size_t>(b)] += 1;
  }
  for (int b = 0; b < bins; ++b) {
    os << lo + b * width << ',' << lo + (b + 1) * width << ',' << counts[static_cast<std::size_t>(b)]
       << '\n';
  }
}

const char* outcome_name(TerminalKind k) {
  switch (k) {
    case TerminalKind::Continue: return "continue";
    case TerminalKind::Hit: return "hit";
    case TerminalKind::Diverged: return "diverged";
  }
  return "?";
}

}  // namespace

std::vector<std::string> emit_outputs(const std::vector<RunReport>& reports,
                                      const std::string& out_dir) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  std::vector<std::string> written;

  for (std::size_t i = 0; i < reports.size(); ++i) {
    const RunReport& r = reports[i];
    const std::string path =
        (fs::path(out_dir) / ("run_" + std::to_string(i) + "_" + std::to_string(r.seed) + ".csv"))
            .string();
    std::ofstream os(path);
    if (!os) throw CorruptFile("cannot open for writing: " + path);
    os << "t,R,theta_L,phi_L,theta_L_dot,phi_L_dot,theta_m,phi_m,V_M,u_ym,u_zm,act_ym,act_zm,"
          "lambda,min_cost,mean_cost,effective_samples\n";
    os.precision(17);
    for (const CycleLog& c : r.log) {
      os << c.t << ',' << c.R << ',' << c.theta_L << ',' << c.phi_L << ',' << c.theta_L_dot << ','
         << c.phi_L_dot << ',' << c.theta_m << ',' << c.phi_m << ',' << c.V_M << ',' << c.u_ym
         << ',' << c.u_zm << ',' << c.act_ym << ',' << c.act_zm << ',' << c.lambda << ','
         << c.min_cost << ',' << c.mean_cost << ',' << c.effective_samples << '\n';
    }
    if (!os) throw CorruptFile("write failure: " + path);
    written.push_back(path);
  }

  {
    const std::string path = (fs::path(out_dir) / "batch_summary.csv").string();
    std::ofstream os(path);
    if (!os) throw CorruptFile("cannot open for writing: " + path);
    os << "run,seed,variant,outcome,miss_distance,theta_LT,phi_LT,theta_err,phi_err,impact_time,"
          "adapt_calls\n";
    os.precision(17);
    for (std::size_t i = 0; i < reports.size(); ++i) {
      const RunReport& r = reports[i];
      os << i << ',' << r.seed << ',' << variant_name(r.variant) << ',' << outcome_name(r.outcome)
         << ',' << r.miss_distance << ',' << r.theta_LT << ',' << r.phi_LT << ','
         << r.theta_LT - r.theta_LD << ',' << r.phi_LT - r.phi_LD << ',' << r.impact_time << ','
         << r.adapt_calls << '\n';
    }
    written.push_back(path);
  }

  std::vector<double> misses, thetas, phis;
  for (const RunReport& r : reports) {
    if (r.outcome == TerminalKind::Hit) {
      misses.push_back(r.miss_distance);
      thetas.push_back(r.theta_LT);
      phis.push_back(r.phi_LT);
    }
  }
  const int bins = 20;
  for (const auto& [name, data] :
       std::initializer_list<std::pair<const char*, const std::vector<double>*>>{
           {"hist_miss.csv", &misses}, {"hist_theta_LT.csv", &thetas}, {"hist_phi_LT.csv", &phis}}) {
    const std::string path = (fs::path(out_dir) / name).string();
    write_histogram_csv(path, *data, bins);
    written.push_back(path);
  }

  {
    const std::string path = (fs::path(out_dir) / "data_dictionary.csv").string();
    std::ofstream os(path);
    os << "file,column,unit,description\n"
          "run_*.csv,t,s,time since launch\n"
          "run_*.csv,R,m,interceptor-target range\n"
          "run_*.csv,theta_L,rad,LOS elevation\n"
          "run_*.csv,phi_L,rad,LOS azimuth\n"
          "run_*.csv,theta_L_dot,rad/s,measured LOS elevation rate\n"
          "run_*.csv,phi_L_dot,rad/s,measured LOS azimuth rate\n"
          "run_*.csv,theta_m,rad,interceptor heading elevation (LOS frame)\n"
          "run_*.csv,phi_m,rad,interceptor heading azimuth (LOS frame)\n"
          "run_*.csv,V_M,m/s,interceptor speed\n"
          "run_*.csv,u_ym,m/s2,commanded lateral acceleration\n"
          "run_*.csv,u_zm,m/s2,commanded normal acceleration\n"
          "run_*.csv,act_ym,m/s2,actuator lateral output after fault and saturation\n"
          "run_*.csv,act_zm,m/s2,actuator normal output after fault and saturation\n"
          "run_*.csv,lambda,-,softmax temperature used this cycle\n"
          "run_*.csv,min_cost,-,minimum sampled trajectory cost\n"
          "run_*.csv,mean_cost,-,mean sampled trajectory cost\n"
          "run_*.csv,effective_samples,-,importance-sampling effective sample size\n"
          "batch_summary.csv,miss_distance,m,interpolated closest approach\n"
          "batch_summary.csv,theta_LT,rad,LOS elevation at closest approach\n"
          "batch_summary.csv,phi_LT,rad,LOS azimuth at closest approach\n"
          "batch_summary.csv,impact_time,s,time of closest approach\n"
          "hist_*.csv,bin_lo/bin_hi,varies,histogram bin edges\n"
          "hist_*.csv,count,-,runs in bin\n";
    written.push_back(path);
  }
  return written;
}

namespace {
constexpr char kReportMagic[8] = {'G', 'D', 'R', 'E', 'P', 'R', 'T', '\0'};
constexpr std::uint32_t kReportVersion = 1;
}  // namespace

void save_report(const std::string& path, const RunReport& report) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw CorruptFile("cannot open for writing: " + path);
  os.write(kReportMagic, sizeof kReportMagic);
  const std::uint32_t version = kReportVersion;
  os.write(reinterpret_cast<const char*>(&version), sizeof version);

  auto w_f64 = [&os](double v) { os.write(reinterpret_cast<const char*>(&v), sizeof v); };
  auto w_i64 = [&os](std::int64_t v) { os.write(reinterpret_cast<const char*>(&v), sizeof v); };

  const std::int64_t outcome = static_cast<std::int64_t>(report.outcome);
  const std::int64_t variant = static_cast<std::int64_t>(report.variant);
  w_i64(outcome);
  w_i64(variant);
  w_f64(report.miss_distance);
  w_f64(report.theta_LT);
  w_f64(report.phi_LT);
  w_f64(report.impact_time);
  w_f64(report.theta_LD);
  w_f64(report.phi_LD);
  os.write(reinterpret_cast<const char*>(&report.seed), sizeof report.seed);
  w_i64(report.adapt_calls);
  w_i64(static_cast<std::int64_t>(report.log.size()));
  for (const CycleLog& c : report.log) {
    os.write(reinterpret_cast<const char*>(&c), sizeof c);
  }
  if (!os) throw CorruptFile("write failure: " + path);
}

RunReport load_report(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw CorruptFile("cannot open: " + path);
  auto rd = [&is, &path](void* p, std::size_t n) {
    is.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (!is) throw CorruptFile("unexpected end of file: " + path);
  };

  char magic[8];
  rd(magic, sizeof magic);
  if (std::memcmp(magic, kReportMagic, sizeof kReportMagic) != 0) {
    throw VersionMismatch("bad magic in " + path);
  }
  std::uint32_t version;
  rd(&version, sizeof version);
  if (version != kReportVersion) {
    throw VersionMismatch("unsupported report version in " + path);
  }

  RunReport r;
  std::int64_t outcome, variant, rows;
  rd(&outcome, sizeof outcome);
  rd(&variant, sizeof variant);
  r.outcome = static_cast<TerminalKind>(outcome);
  r.variant = static_cast<ControllerVariant>(variant);
  rd(&r.miss_distance, sizeof(double));
  rd(&r.theta_LT, sizeof(double));
  rd(&r.phi_LT, sizeof(double));
  rd(&r.impact_time, sizeof(double));
  rd(&r.theta_LD, sizeof(double));
  rd(&r.phi_LD, sizeof(double));
  rd(&r.seed, sizeof r.seed);
  rd(&r.adapt_calls, sizeof r.adapt_calls);
  rd(&rows, sizeof rows);
  if (rows < 0 || rows > (1ll << 32)) throw CorruptFile("implausible row count in " + path);
  r.log.resize(static_cast<std::size_t>(rows));
  for (CycleLog& c : r.log) rd(&c, sizeof c);
  is.peek();
  if (!is.eof()) throw CorruptFile("trailing bytes in " + path);
  return r;
}

}  // namespace guidance
