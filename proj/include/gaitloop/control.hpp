// SPDX-License-Identifier: Apache-2.0
//
// Delay-compensating control loop: delayed sensor delivery, periodic
// prediction of the plantar force s frames ahead, swing-onset detection on
// the predicted stream, and motor commands issued t_dr before the predicted
// onset.
//
// The simulator works on the trial's frame grid, with every delay rounded up
// to whole frames. At a tick at frame k the
// newest delivered frame is d = k - ceil(t_dm * rate); the prediction from
// the window ending at d refers to frame d + s and becomes usable at
// k / rate + t_dc.
#pragma once

#include "gaitloop/core.hpp"
#include "gaitloop/neural.hpp"
#include "gaitloop/phase.hpp"

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

namespace gaitloop::control {

struct DelayConfig {
  double t_dm_s = 0.05;   ///< measurement / transport
  double t_dc_s = 0.024;  ///< prediction compute
  double t_dr_s = 0.05;   ///< actuator response

  double total_s() const { return t_dm_s + t_dc_s + t_dr_s; }
  void validate() const;
};

/// Reads `key = value` lines (t_dm_s, t_dc_s, t_dr_s; '#' starts a comment)
/// over the defaults.
DelayConfig load_delay_config(const std::filesystem::path& path);

/// Throws ConfigError("prediction horizon must exceed total delay ...") unless
/// s / rate_hz > t_d.
void check_horizon(std::size_t s, int rate_hz, const DelayConfig& delays);

struct MotorCommand {
  Foot foot = Foot::Left;
  double issue_time_s = 0.0;
  double actuation_time_s = 0.0;
  double duration_s = 0.1;
  bool late = false;
  double event_time_s = 0.0;  ///< predicted swing onset the command serves
  EventContext context = EventContext::Walking;
};

/// issue = max(now, event - t_dr), late iff clamped. Throws ConfigError when
/// the event lies before `now_s`.
MotorCommand schedule_command(double event_time_s, double now_s, const DelayConfig& delays, Foot foot = Foot::Left,
                              double duration_s = 0.1);

/// Source of plantar force predictions for the loop.
class Predictor {
 public:
  virtual ~Predictor() = default;
  virtual std::size_t window() const = 0;
  virtual std::size_t horizon() const = 0;
  /// `window` holds raw IMU rows ending at `newest_frame`; returns the force
  /// expected at newest_frame + horizon().
  virtual PlantarFrame predict(const Matrix& window, std::int64_t newest_frame) = 0;
};

class ModelPredictor final : public Predictor {
 public:
  explicit ModelPredictor(const neural::Model& model) : model_(model) {}
  std::size_t window() const override { return static_cast<std::size_t>(model_.meta.n); }
  std::size_t horizon() const override { return static_cast<std::size_t>(model_.meta.s); }
  PlantarFrame predict(const Matrix& window, std::int64_t newest_frame) override;

 private:
  const neural::Model& model_;
};

/// Returns the recorded plantar force s frames ahead (perfect predictor).
class OraclePredictor final : public Predictor {
 public:
  OraclePredictor(const GaitTrial& trial, std::size_t n, std::size_t s) : trial_(trial), n_(n), s_(s) {}
  std::size_t window() const override { return n_; }
  std::size_t horizon() const override { return s_; }
  PlantarFrame predict(const Matrix& window, std::int64_t newest_frame) override;

 private:
  const GaitTrial& trial_;
  std::size_t n_, s_;
};

struct LoopConfig {
  DelayConfig delays;
  int loop_hz = 20;
  phase::PhaseConfig phase;
  double command_duration_s = 0.1;
  double max_match_s = 0.5;

  void validate(int rate_hz) const;
};

/// One controller tick.
struct TickRecord {
  std::int64_t frame = 0;            ///< tick frame k
  std::int64_t delivered_frame = 0;  ///< newest frame visible to the controller
  double raw_time_s = 0.0;           ///< sample time of delivered_frame
  double delivery_time_s = 0.0;      ///< raw_time_s + t_dm
  double usable_time_s = 0.0;        ///< k / rate + t_dc
  std::int64_t target_frame = 0;     ///< delivered_frame + s
  PlantarFrame prediction;
};

struct TimingSummary {
  std::size_t walking_count = 0;
  double walking_mean_abs_s = 0.0;
  double walking_max_abs_s = 0.0;
  std::size_t starting_count = 0;
  double starting_mean_abs_s = 0.0;
  double starting_max_abs_s = 0.0;
};

struct LoopTrace {
  std::string trial_id;
  int rate_hz = 100;
  std::size_t n = 0;
  std::size_t s = 0;
  LoopConfig config;
  DelayConfig effective_delays;  ///< config.delays rounded up to whole frames
  std::vector<TickRecord> ticks;
  std::vector<AssistEvent> predicted_events;  ///< onsets detected on the predicted stream
  std::vector<MotorCommand> commands;
  std::vector<AssistEvent> truth_events;
  std::size_t late_count = 0;
  std::size_t rejected_count = 0;
  phase::TimingComparison comparison;  ///< actuations (a) vs truth (b)
  TimingSummary summary;

  /// Actuation onsets as events, for comparison against the truth.
  std::vector<AssistEvent> actuation_events() const;
};

/// Deterministic simulation of the loop on a recorded trial. Truth events come
/// from trial.event_truth, or from the measured plantar force when absent.
LoopTrace run_closed_loop(const GaitTrial& trial, Predictor& predictor, const LoopConfig& config);

/// Convenience wrapper: checks model meta against the trial first.
LoopTrace run_closed_loop(const GaitTrial& trial, const neural::Model& model, const LoopConfig& config);

TimingSummary summarize_timing(const phase::TimingComparison& cmp);

/// Per-tick CSV.
std::string trace_csv(const LoopTrace& trace, const SensorLayout& layout);
/// Event CSV: kind,foot,frame,time_s,context,issue_time_s,late
std::string events_csv(const LoopTrace& trace);
/// Summary JSON (mean/max |dt| walking and starting, late count, counts).
std::string summary_json(const LoopTrace& trace);

struct LatencyRow {
  std::size_t n = 0;
  std::size_t calls = 0;
  double mean_s = 0.0;
  double stddev_s = 0.0;  ///< across repetitions of the per-call mean
  double cv = 0.0;
};

/// Times forward() on random windows for each n. Each n runs `repetitions`
/// batches of `calls / repetitions` calls.
std::vector<LatencyRow> measure_inference_latency(const neural::ModelShape& shape, const std::vector<std::size_t>& ns,
                                                  std::size_t calls = 1000, std::size_t repetitions = 5,
                                                  std::uint64_t seed = 1);
/// CSV: n,calls,mean_s,stddev_s,cv
std::string latency_csv(const std::vector<LatencyRow>& rows);

struct RealtimeOptions {
  std::size_t queue_capacity = 256;
  double speed = 1.0;          ///< replay speed factor (1 = true rate)
  bool measure_compute = true; ///< use measured forward() time as t_dc
};

struct RealtimeResult {
  LoopTrace trace;
  double wall_time_s = 0.0;
  double trial_time_s = 0.0;
  std::size_t frames_consumed = 0;
  std::size_t frames_dropped = 0;
  std::vector<double> compute_latency_s;
};

/// Replays the trial at its sample rate: a producer thread delivers frames
/// t_dm after their sample time into a bounded queue and never blocks (frames
/// are dropped when the queue is full); the calling thread consumes them and
/// runs prediction, detection and scheduling against the wall clock.
RealtimeResult run_realtime(const GaitTrial& trial, Predictor& predictor, const LoopConfig& config,
                            const RealtimeOptions& options = {});

}  // namespace gaitloop::control
