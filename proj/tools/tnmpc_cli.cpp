// Batch front end: closed-loop runs, log re-evaluation and oracle self-checks.

#include "selftest.hpp"

#include "tnmpc/config.hpp"
#include "tnmpc/errors.hpp"
#include "tnmpc/harness.hpp"

#include <CLI11.hpp>

#include <exception>
#include <iostream>
#include <optional>

int main(int argc, char** argv) {
  CLI::App app{"Tractor-trailer NMPC/NMHE experiment runner"};
  app.require_subcommand(1);

  std::string config_path, out_dir, schedule;
  std::optional<long> seed;
  std::optional<double> duration;
  auto* run = app.add_subcommand("run", "closed-loop experiment");
  run->add_option("--config", config_path, "key = value config file")->required();
  run->add_option("--out", out_dir, "output directory")->required();
  run->add_option("--seed", seed, "sensor noise seed");
  run->add_option("--duration", duration, "experiment length [s]");
  run->add_option("--dropout-schedule", schedule, "CSV of GPS dropout times (header t_s)");

  std::string log_path;
  auto* metrics = app.add_subcommand("metrics", "aggregate an existing log");
  metrics->add_option("--log", log_path, "log.csv from a run")->required();
  double transient = 10.0;
  metrics->add_option("--transient", transient, "seconds excluded from segment means");

  auto* selftest = app.add_subcommand("selftest", "run the oracle suites");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) {
      tnmpc::KeyValueConfig kv = tnmpc::KeyValueConfig::load(config_path);
      kv.set("run.out", out_dir);
      if (seed) kv.set("run.seed", std::to_string(*seed));
      if (duration) kv.set("run.duration", std::to_string(*duration));
      if (!schedule.empty()) kv.set("sensor.dropout_schedule", schedule);
      const auto cfg = tnmpc::ExperimentConfig::from_kv(kv);
      const auto report = tnmpc::run_experiment(cfg);
      tnmpc::print_report(report, std::cout);
      return 0;
    }
    if (*metrics) {
      auto log = tnmpc::read_log_csv(log_path);
      if (log.empty()) throw tnmpc::ConfigError(log_path + ": no rows");
      tnmpc::MetricsOptions opts;
      opts.transient_s = transient;
      tnmpc::print_report(tnmpc::aggregate_metrics(log, opts), std::cout);
      return 0;
    }
    if (*selftest) {
      bool ok = true;
      for (const auto& r : oracle::run_selftest()) {
        oracle::print_check(r, std::cout);
        ok = ok && r.pass;
      }
      return ok ? 0 : 1;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
