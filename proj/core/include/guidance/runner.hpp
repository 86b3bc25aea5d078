#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "guidance/config.hpp"
#include "guidance/mppi.hpp"

namespace guidance {

/// One control cycle's log row, aligned on the dt grid.
struct CycleLog {
  double t = 0.0;
  double R = 0.0;
  double theta_L = 0.0, phi_L = 0.0;
  double theta_L_dot = 0.0, phi_L_dot = 0.0;
  double theta_m = 0.0, phi_m = 0.0;
  double V_M = 0.0;
  double u_ym = 0.0, u_zm = 0.0;      // commanded accelerations
  double act_ym = 0.0, act_zm = 0.0;  // actuator output (fault + saturation)
  double lambda = 0.0;
  double min_cost = 0.0, mean_cost = 0.0;
  double effective_samples = 0.0;
};

/// Full record of one engagement.
struct RunReport {
  TerminalKind outcome = TerminalKind::Diverged;
  double miss_distance = 0.0;
  double theta_LT = 0.0, phi_LT = 0.0;  // LOS angles at closest approach
  double impact_time = 0.0;
  double theta_LD = 0.0, phi_LD = 0.0;  // desired, for error columns
  std::uint64_t seed = 0;
  ControllerVariant variant = ControllerVariant::Proposed;
  std::int64_t adapt_calls = 0;
  std::vector<CycleLog> log;

  bool hit(double threshold) const {
    return outcome == TerminalKind::Hit && miss_distance < threshold;
  }
};

/// Closed loop at the configured dt: observe, control, actuate (with fault),
/// integrate, until the terminal monitor fires. Ranged initial conditions are
/// drawn from the seed. Divergence is reported in the outcome, not thrown.
RunReport run_engagement(const EngagementConfig& config, const ModelBundle& prior,
                         std::uint64_t seed);

struct MonteCarloResult {
  std::vector<RunReport> runs;
  std::vector<std::string> failures;  // per-run error messages, same indexing as seeds
  int hits = 0;
  double hit_rate = 0.0;
  double median_miss = 0.0;
  double median_angle_error = 0.0;  // max of the two LOS errors, per run
};

/// Independent seeded engagements with ranged fields redrawn per run.
/// Runs execute concurrently under the configured worker budget; results are
/// independent of the schedule.
MonteCarloResult run_monte_carlo(const EngagementConfig& config, int n_runs,
                                 const ModelBundle& prior, std::uint64_t seed);

struct ComparisonRow {
  ControllerVariant variant;
  int runs = 0;
  int hits = 0;
  double mean_miss = 0.0;
  double median_miss = 0.0;
  double mean_theta_err = 0.0;
  double mean_phi_err = 0.0;
  double mean_impact_time = 0.0;
};

/// Run each variant over the same seeds and configs; one summary row each.
std::vector<ComparisonRow> compare_variants(const EngagementConfig& config,
                                            const std::vector<ControllerVariant>& variants,
                                            const std::vector<std::uint64_t>& seeds,
                                            const ModelBundle& prior,
                                            std::vector<RunReport>* all_reports = nullptr);

/// Write per-run time-series CSVs, a batch summary CSV, histogram CSVs and a
/// data dictionary into out_dir. Returns the paths written. Re-emitting over
/// the same directory is idempotent.
std::vector<std::string> emit_outputs(const std::vector<RunReport>& reports,
                                      const std::string& out_dir);

/// Binary report persistence; bit-exact round trip.
void save_report(const std::string& path, const RunReport& report);
RunReport load_report(const std::string& path);

}  // namespace guidance
