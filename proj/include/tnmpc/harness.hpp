#pragma once

/**
 * @file
 * @brief Closed-loop experiment runner: sensors -> NMHE -> NMPC -> plant at a fixed rate.
 *
 * Per cycle k:
 *   sense -> NMHE add_sample + estimate -> NMPC feedback (QP prepared last cycle)
 *   -> plant_step -> NMPC prepare (cycle k+1) -> NMHE arrival update + prepare.
 */

#include "tnmpc/config.hpp"
#include "tnmpc/nmhe.hpp"
#include "tnmpc/nmpc.hpp"
#include "tnmpc/plant_sim.hpp"
#include "tnmpc/reference_path.hpp"

#include <iosfwd>
#include <string>
#include <vector>

namespace tnmpc {

struct TrackConfig {
  double straight_len = 30.0;
  double radius = 10.0;
  double spacing = 0.05;
  double start_station = 6.0;  ///< tractor rear-axle station at t = 0
  /// Replace the figure-8 by a single straight of this length (0 = figure-8).
  double straight_only_length = 0.0;
};

struct ExperimentConfig {
  TrackConfig track;
  VehicleGeometry geom;
  OcpConfig ocp;
  double lookahead = 1.6;
  MheConfig mhe;
  SensorConfig sensor;
  PlantConfig plant;
  SlipSchedule slip_schedule{SlipParams{0.9, 0.9, 0.9}};
  double initial_speed = 1.0;
  double duration_s = 175.0;
  double transient_s = 10.0;  ///< excluded from segment error means
  std::string output_dir;     ///< empty: no files written
  bool record_timing = true;  ///< false writes zero timing columns (byte-reproducible logs)
  bool parallel = false;      ///< NMPC prepare and NMHE update run concurrently

  /// Propagates shared settings (geometry, sampling period) into the sub-configs.
  void finalize();
  void validate() const;

  static ExperimentConfig from_kv(const KeyValueConfig& kv);
};

/// One row of the per-cycle log.
struct CycleRecord {
  double t = 0.0;
  VehicleState true_pose;
  double true_beta = 0.0, true_v = 0.0;
  SlipParams true_slip;
  EstVec est = EstVec::Zero();
  Control cmd, act;
  bool gps_masked = false;
  double err_tractor = 0.0, err_trailer = 0.0;
  SegmentTag seg_tag = SegmentTag::kStraight;
  double t_nmpc_prep_ms = 0.0, t_nmpc_fb_ms = 0.0, t_mhe_prep_ms = 0.0, t_mhe_est_ms = 0.0;
};

struct ErrorStats {
  double mean = 0.0;
  double max = 0.0;
  long count = 0;
};

struct TimingStats {
  double min = 0.0, avg = 0.0, max = 0.0;
};

struct MetricsReport {
  long cycles = 0;
  ErrorStats tractor_straight, tractor_curve, trailer_straight, trailer_curve;
  long dropout_count = 0;
  TimingStats nmpc_prep, nmpc_feedback, nmpc_overall;
  TimingStats mhe_prep, mhe_estimation, mhe_overall;
  TimingStats combined;
  long control_violations = 0;   ///< commands outside the input bounds
  long slip_violations = 0;      ///< slip estimates outside [slip_min, slip_max]
  long actuator_violations = 0;  ///< actuator angles past limit + allowance
  long degraded_cycles = 0;
};

struct ExperimentResult {
  std::vector<CycleRecord> log;
  MetricsReport report;
};

/// Runs the closed loop; writes `log.csv`, `metrics.txt`, `metrics.json` and `path.csv` into
/// cfg.output_dir when set.
ExperimentResult simulate(const ExperimentConfig& cfg);
MetricsReport run_experiment(const ExperimentConfig& cfg);

Path build_track(const TrackConfig& cfg);

struct MetricsOptions {
  double transient_s = 10.0;
  ControlVec u_max = ControlVec(deg2rad(35.0), deg2rad(25.0));
  double slip_min = 0.25, slip_max = 1.0;
  ControlVec actuator_limit = ControlVec(deg2rad(36.0), deg2rad(26.0));
};

/// Re-projects the true positions onto `path` (filling err_* and seg_tag) and aggregates.
MetricsReport compute_metrics(std::vector<CycleRecord>& log, const Path& path,
                              const MetricsOptions& opts = {});
/// Aggregates the error/tag/timing columns already present in `log`.
MetricsReport aggregate_metrics(const std::vector<CycleRecord>& log,
                                const MetricsOptions& opts = {});

/// Exact column order of the log CSV.
const std::vector<std::string>& log_columns();
void write_log_csv(const std::vector<CycleRecord>& log, const std::string& file);
void write_log_csv(const std::vector<CycleRecord>& log, std::ostream& out);
std::vector<CycleRecord> read_log_csv(const std::string& file);

void print_report(const MetricsReport& r, std::ostream& out);
void write_metrics_json(const MetricsReport& r, const std::string& file);

}  // namespace tnmpc
