// SPDX-License-Identifier: Apache-2.0
//
// Deterministic parametric walking-trial generator: IMU + plantar force +
// ground-truth phase labels and swing-onset events.
//
// Each foot alternates stance and swing. Stance forces follow a heel peak,
// an equalized plateau and a toe peak, built from raised-cosine ramps that
// cross the 50 N contact level exactly at the labeled phase boundaries. IMU
// channels are smooth functions of the same gait state evaluated `imu_lead_s`
// ahead, so past IMU determines near-future plantar force.
#pragma once

#include "gaitloop/core.hpp"
#include "gaitloop/ingest.hpp"

#include <cstdint>
#include <filesystem>
#include <vector>

namespace gaitloop::syngait {

struct GaitPlan {
  std::vector<int> bout_steps;  ///< swings per walking bout; empty = standing only
  Foot start_leg = Foot::Left;
  double pause_s = 1.2;         ///< standing between bouts (landing to next push-off)
  double pause_jitter_s = 0.0;  ///< extra uniform [0, jitter) added per pause
  double lead_in_s = 1.5;
  double lead_out_s = 1.5;
  double step_period_s = 1.1;  ///< gait cycle of one foot
  double double_support_fraction = 0.2;
  double period_jitter = 0.1;  ///< per-step relative period jitter (uniform +-)
  double imu_lead_s = 0.25;
  double body_weight_N = 700.0;
  double noise_std_imu = 0.05;  ///< relative to each channel's noiseless RMS
  double noise_std_plantar = 5.0;
  std::uint64_t rng_seed = 1;
  int rate_hz = 100;
  SensorLayout layout;

  void validate() const;
};

/// One swing interval of one foot.
struct SwingInterval {
  Foot foot = Foot::Left;
  double toe_off_s = 0.0;
  double landing_s = 0.0;
  double period_s = 0.0;
  int bout = 0;
};

/// Swing schedule for the whole trial plus the trial end time.
struct Timeline {
  std::vector<SwingInterval> swings;
  double end_s = 0.0;
};

Timeline build_timeline(const GaitPlan& plan);

/// Noiseless plantar cells of one foot (heel, mid, toe) and its raw phase
/// label (no standing overlay) at time `t`.
struct FootSample {
  double heel = 0, mid = 0, toe = 0;
  GaitPhase raw = GaitPhase::Support;
};
FootSample foot_sample(const GaitPlan& plan, const Timeline& tl, Foot foot, double t);

GaitTrial generate_trial(const GaitPlan& plan);

struct CorpusOptions {
  int subjects = 9;
  int trials_per_subject = 10;
  std::uint64_t seed = 2024;
  double noise_std_imu = 0.05;
  double noise_std_plantar = 5.0;
  int rate_hz = 100;
};

/// Plans for every trial in the corpus (no I/O).
struct PlannedTrial {
  ingest::ManifestEntry entry;
  GaitPlan plan;
};
std::vector<PlannedTrial> plan_corpus(const CorpusOptions& options);

/// Writes TrialFiles under `out_dir/<subject>/` and `out_dir/manifest.json`.
ingest::CorpusManifest generate_corpus(const CorpusOptions& options, const std::filesystem::path& out_dir);

}  // namespace gaitloop::syngait
