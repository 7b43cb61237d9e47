// SPDX-License-Identifier: Apache-2.0
//
// Force prediction error, (n, s) sweeps and assistance timing statistics.
#pragma once

#include "gaitloop/core.hpp"
#include "gaitloop/neural.hpp"
#include "gaitloop/phase.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

namespace gaitloop::metrics {

struct SubjectError {
  std::string subject_id;
  double body_weight_N = 0.0;
  std::size_t frames = 0;  ///< evaluated anchors
  double mae_N = 0.0;
  double mae_pct_bw = 0.0;
  double rmse_N = 0.0;
  std::vector<double> cell_mae_N;
};

struct ErrorReport {
  std::vector<SubjectError> subjects;  ///< in order of first appearance
  std::size_t frames = 0;
  double mae_N = 0.0;       ///< over every cell of every frame
  double mae_pct_bw = 0.0;  ///< frame-weighted mean of per-subject percentages
  double mae_pct_mean_bw = 0.0;  ///< mae_N relative to the mean subject body weight
  double rmse_N = 0.0;
  std::vector<double> cell_mae_N;
};

/// Predictions for the given anchors of one trial, one row per anchor.
using PredictFn = std::function<Matrix(const GaitTrial& trial, const std::vector<std::size_t>& anchors)>;

/// Stride-1 error over every anchor t with t >= n-1 and t+s < T.
ErrorReport prediction_error(const std::vector<const GaitTrial*>& trials, std::size_t n, std::size_t s,
                             const PredictFn& predict);

/// Same with a trained model; throws ConfigError on meta mismatch.
ErrorReport prediction_error(const neural::Model& model, const std::vector<const GaitTrial*>& trials);

/// Merges reports of disjoint trial sets (e.g. one per subject model).
ErrorReport merge_reports(const std::vector<ErrorReport>& parts);

/// CSV: subject,body_weight_N,frames,mae_N,mae_pct_bw,rmse_N,mae_<cell>...
std::string error_csv(const ErrorReport& report, const SensorLayout& layout);
std::string error_json(const ErrorReport& report);

struct SubjectData {
  std::string subject_id;
  std::vector<const GaitTrial*> train;
  std::vector<const GaitTrial*> test;
};

/// Grid points of the sweep: n in {1,5,10,20,50,100} at s=20 and
/// s in {1,10,20,50,100,150,200} at n=20.
std::vector<std::pair<std::size_t, std::size_t>> default_sweep_points();
/// Every (n, s) combination of the two axes.
std::vector<std::pair<std::size_t, std::size_t>> full_sweep_grid();

struct SweepConfig {
  std::vector<std::pair<std::size_t, std::size_t>> points = default_sweep_points();
  neural::TrainConfig train;  ///< epochs defaults to 30 below
  std::uint64_t seed = 1;

  SweepConfig() { train.epochs = 30; }
};

struct SweepCell {
  std::size_t n = 0;
  std::size_t s = 0;
  bool present = false;
  std::size_t subjects = 0;
  double mae_N = 0.0;
  double mae_pct_bw = 0.0;
  double mae_pct_mean_bw = 0.0;
};

struct SweepResult {
  int epochs = 0;
  std::vector<SweepCell> cells;

  const SweepCell* find(std::size_t n, std::size_t s) const;
};

/// Seed for one (n, s, subject) training run.
std::uint64_t derive_seed(std::uint64_t master, std::size_t n, std::size_t s, const std::string& subject);

/// Trains one model per point and subject, evaluates on the test trials.
/// A point where no subject yields training pairs and test anchors is absent.
/// `progress` (optional) is called after every finished cell.
SweepResult run_sweep(const std::vector<SubjectData>& subjects, const SweepConfig& config,
                      const std::function<void(const SweepCell&)>& progress = {});

/// CSV: n,s,present,subjects,mae_N,mae_pct_bw,mae_pct_mean_bw,epochs
std::string sweep_csv(const SweepResult& result);

struct TimingStats {
  std::size_t count = 0;
  double mean_abs_s = 0.0;
  double max_abs_s = 0.0;
  double min_abs_s = 0.0;
  double q25_abs_s = 0.0;
  double median_abs_s = 0.0;
  double q75_abs_s = 0.0;
};

struct TimingReport {
  TimingStats walking;
  TimingStats starting;
  std::size_t unmatched_a = 0;
  std::size_t unmatched_b = 0;
  std::vector<phase::MatchedPair> pairs;
};

/// Linear-interpolated quantile of sorted values, q in [0, 1].
double quantile(const std::vector<double>& sorted, double q);

TimingReport timing_report(const std::vector<phase::TimingComparison>& comparisons);

/// CSV: context,count,mean_abs_s,max_abs_s,min_abs_s,q25_abs_s,median_abs_s,q75_abs_s
std::string timing_csv(const TimingReport& report);
/// CSV of every matched pair: context,foot,dt_s,abs_dt_s
std::string timing_pairs_csv(const TimingReport& report);
std::string timing_json(const TimingReport& report);

/// gnuplot scripts reading the CSVs above from the same directory.
std::string sweep_gnuplot(const std::string& csv_name);
std::string subject_gnuplot(const std::string& csv_name);
std::string timing_gnuplot(const std::string& pairs_csv_name);

}  // namespace gaitloop::metrics
