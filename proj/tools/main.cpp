// Command-line front end: collect -> train -> run / montecarlo / compare,
// each stage resumable from the files the previous one wrote.

#include <CLI11.hpp>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "guidance/config.hpp"
#include "guidance/meta.hpp"
#include "guidance/pipeline.hpp"
#include "guidance/runner.hpp"

namespace fs = std::filesystem;
using namespace guidance;

namespace {

void print_summary(const RunReport& r) {
  std::cout << "outcome=" << (r.outcome == TerminalKind::Hit ? "hit" : "diverged")
            << " miss=" << r.miss_distance << " m"
            << " theta_LT=" << r.theta_LT << " rad"
            << " phi_LT=" << r.phi_LT << " rad"
            << " impact_time=" << r.impact_time << " s"
            << " adapt_calls=" << r.adapt_calls << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Meta-adaptive sampling MPC guidance simulator"};
  app.require_subcommand(1);

  std::string config_path, weights_path, data_path, out_path, variant_name_arg, csv_path;
  std::uint64_t seed = 0;
  int runs = 0;
  int trajectories = 0;
  bool full_scale = false;
  std::vector<std::string> report_paths;

  auto* collect_cmd = app.add_subcommand("collect", "Roll randomized engagements into a dataset");
  collect_cmd->add_option("--config", config_path, "config file")->required();
  collect_cmd->add_option("--seed", seed, "random seed");
  collect_cmd->add_option("--out", out_path, "output dataset file")->required();
  collect_cmd->add_option("--trajectories", trajectories, "override [collect] trajectories");
  collect_cmd->add_option("--csv", csv_path, "also export the dataset as CSV");

  auto* train_cmd = app.add_subcommand("train", "Preprocess a dataset and train the model");
  train_cmd->add_option("--config", config_path, "config file")->required();
  train_cmd->add_option("--seed", seed, "random seed");
  train_cmd->add_option("--data", data_path, "collected dataset file")->required();
  train_cmd->add_option("--out", out_path, "output weight file")->required();

  auto* run_cmd = app.add_subcommand("run", "Run one closed-loop engagement");
  run_cmd->add_option("--config", config_path, "config file")->required();
  run_cmd->add_option("--weights", weights_path, "trained weight file")->required();
  run_cmd->add_option("--seed", seed, "random seed");
  run_cmd->add_option("--out", out_path, "output directory")->required();
  run_cmd->add_option("--variant", variant_name_arg, "proposed|fixed_temperature|no_adaptation");

  auto* mc_cmd = app.add_subcommand("montecarlo", "Run a batch of seeded engagements");
  mc_cmd->add_option("--config", config_path, "config file")->required();
  mc_cmd->add_option("--weights", weights_path, "trained weight file")->required();
  mc_cmd->add_option("--seed", seed, "random seed");
  mc_cmd->add_option("--runs", runs, "number of engagements (default from config)");
  mc_cmd->add_option("--out", out_path, "output directory")->required();
  mc_cmd->add_option("--variant", variant_name_arg, "controller variant");
  mc_cmd->add_flag("--full-scale", full_scale, "use the full-scale run count from the config");

  auto* compare_cmd = app.add_subcommand("compare", "Run all controller variants on shared seeds");
  compare_cmd->add_option("--config", config_path, "config file")->required();
  compare_cmd->add_option("--weights", weights_path, "trained weight file")->required();
  compare_cmd->add_option("--seed", seed, "random seed");
  compare_cmd->add_option("--runs", runs, "seeds per variant (default 5)");
  compare_cmd->add_option("--out", out_path, "output directory")->required();

  auto* emit_cmd = app.add_subcommand("emit", "Re-emit CSV artifacts from saved reports");
  emit_cmd->add_option("--out", out_path, "output directory")->required();
  emit_cmd->add_option("reports", report_paths, "saved .report files")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (collect_cmd->parsed()) {
      const EngagementConfig cfg = load_config(config_path);
      const int n = trajectories > 0 ? trajectories : cfg.collect.n_trajectories;
      std::cout << "collecting " << n << " trajectories...\n";
      const Dataset ds = collect(cfg.scenario, cfg.collect, n, seed);
      save_dataset(out_path, ds);
      std::cout << "wrote " << ds.records.size() << " records (" << ds.trajectory_count()
                << " trajectories) to " << out_path << "\n";
      if (!csv_path.empty()) {
        export_dataset_csv(csv_path, ds);
        std::cout << "wrote " << csv_path << "\n";
      }
    } else if (train_cmd->parsed()) {
      EngagementConfig cfg = load_config(config_path);
      cfg.train.seed = seed;
      const Dataset raw = load_dataset(data_path);
      std::cout << "preprocessing " << raw.records.size() << " records...\n";
      const auto [ds, norm] = preprocess(raw, cfg.augmentation_sigma);
      TrainHistory history;
      std::cout << "training...\n";
      const ModelBundle bundle = meta_train(ds, norm, cfg.train, &history);
      save_params(out_path, bundle);
      std::cout << "epochs=" << history.train_mae.size() << " best_epoch=" << history.best_epoch
                << " best_val_mae="
                << (history.best_epoch >= 0
                        ? history.validation_mae[static_cast<std::size_t>(history.best_epoch)]
                        : -1.0)
                << "\nwrote " << out_path << "\n";
    } else if (run_cmd->parsed()) {
      EngagementConfig cfg = load_config(config_path);
      if (!variant_name_arg.empty()) cfg.controller.variant = variant_from_name(variant_name_arg);
      const ModelBundle bundle = load_params(weights_path);
      const RunReport report = run_engagement(cfg, bundle, seed);
      print_summary(report);
      fs::create_directories(out_path);
      save_report((fs::path(out_path) / "run_0.report").string(), report);
      for (const std::string& p : emit_outputs({report}, out_path)) {
        std::cout << "wrote " << p << "\n";
      }
    } else if (mc_cmd->parsed()) {
      EngagementConfig cfg = load_config(config_path);
      if (!variant_name_arg.empty()) cfg.controller.variant = variant_from_name(variant_name_arg);
      const ModelBundle bundle = load_params(weights_path);
      int n = runs > 0 ? runs : cfg.monte_carlo_runs;
      if (full_scale) n = cfg.full_scale_runs;
      std::cout << "running " << n << " engagements...\n";
      const MonteCarloResult mc = run_monte_carlo(cfg, n, bundle, seed);
      std::cout << "hit_rate=" << mc.hit_rate << " (" << mc.hits << "/" << n << ")"
                << " median_miss=" << mc.median_miss << " m"
                << " median_angle_error=" << mc.median_angle_error << " rad\n";
      for (std::size_t i = 0; i < mc.failures.size(); ++i) {
        if (!mc.failures[i].empty()) {
          std::cout << "run " << i << " failed: " << mc.failures[i] << "\n";
        }
      }
      fs::create_directories(out_path);
      for (std::size_t i = 0; i < mc.runs.size(); ++i) {
        save_report((fs::path(out_path) / ("run_" + std::to_string(i) + ".report")).string(),
                    mc.runs[i]);
      }
      for (const std::string& p : emit_outputs(mc.runs, out_path)) {
        std::cout << "wrote " << p << "\n";
      }
    } else if (compare_cmd->parsed()) {
      const EngagementConfig cfg = load_config(config_path);
      const ModelBundle bundle = load_params(weights_path);
      const int n = runs > 0 ? runs : 5;
      std::vector<std::uint64_t> seeds;
      for (int i = 0; i < n; ++i) {
        seeds.push_back(derive_seed(seed, stream::kMonteCarlo, static_cast<std::uint64_t>(i)));
      }
      std::vector<RunReport> reports;
      const std::vector<ComparisonRow> rows = compare_variants(
          cfg,
          {ControllerVariant::Proposed, ControllerVariant::FixedTemperature,
           ControllerVariant::NoAdaptation},
          seeds, bundle, &reports);
      fs::create_directories(out_path);
      const std::string table_path = (fs::path(out_path) / "comparison.csv").string();
      {
        std::ofstream os(table_path);
        os << "variant,runs,hits,mean_miss,median_miss,mean_theta_err,mean_phi_err,"
              "mean_impact_time\n";
        os.precision(17);
        for (const ComparisonRow& row : rows) {
          os << variant_name(row.variant) << ',' << row.runs << ',' << row.hits << ','
             << row.mean_miss << ',' << row.median_miss << ',' << row.mean_theta_err << ','
             << row.mean_phi_err << ',' << row.mean_impact_time << '\n';
        }
      }
      std::cout << "wrote " << table_path << "\n";
      for (const std::string& p : emit_outputs(reports, out_path)) {
        std::cout << "wrote " << p << "\n";
      }
    } else if (emit_cmd->parsed()) {
      std::vector<RunReport> reports;
      for (const std::string& p : report_paths) reports.push_back(load_report(p));
      for (const std::string& p : emit_outputs(reports, out_path)) {
        std::cout << "wrote " << p << "\n";
      }
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
