// SPDX-License-Identifier: Apache-2.0
#include "gaitloop/core.hpp"

#include "gaitloop/errors.hpp"

#include <cmath>

namespace gaitloop {

std::string_view to_string(Foot f) { return f == Foot::Left ? "left" : "right"; }

std::string_view to_string(GaitPhase p) {
  switch (p) {
    case GaitPhase::HeelStrike: return "heel_strike";
    case GaitPhase::Support: return "support";
    case GaitPhase::ToeOff: return "toe_off";
    case GaitPhase::Swing: return "swing";
    case GaitPhase::Standing: return "standing";
  }
  return "?";
}

std::string_view to_string(EventSource s) {
  switch (s) {
    case EventSource::Measured: return "measured";
    case EventSource::Predicted: return "predicted";
    case EventSource::Truth: return "truth";
  }
  return "?";
}

std::string_view to_string(EventContext c) { return c == EventContext::Walking ? "walking" : "starting"; }

std::string_view to_string(TrialKind k) {
  switch (k) {
    case TrialKind::Patterned: return "patterned";
    case TrialKind::Random: return "random";
    case TrialKind::Unknown: return "unknown";
  }
  return "?";
}

TrialKind trial_kind_from_string(std::string_view s) {
  if (s == "patterned") return TrialKind::Patterned;
  if (s == "random") return TrialKind::Random;
  return TrialKind::Unknown;
}

std::vector<std::string> SensorLayout::imu_columns() const {
  static constexpr std::array<const char*, 6> kAxes{"ax", "ay", "az", "gx", "gy", "gz"};
  std::vector<std::string> cols;
  for (int i = 1; i <= imu_count; ++i)
    for (const char* axis : kAxes) cols.push_back("imu" + std::to_string(i) + "_" + axis);
  return cols;
}

std::vector<std::string> SensorLayout::plantar_columns() const {
  std::vector<std::string> cols;
  for (Foot f : kFeet) {
    const std::string prefix = f == Foot::Left ? "plantar_l_" : "plantar_r_";
    if (cells_per_foot == 3) {
      for (const char* c : {"heel", "mid", "toe"}) cols.push_back(prefix + c);
    } else {
      for (int j = 0; j < cells_per_foot; ++j) cols.push_back(prefix + "c" + std::to_string(j));
    }
  }
  return cols;
}

void SensorLayout::validate() const {
  if (imu_count < 1) throw ConfigError("imu_count must be >= 1");
  if (cells_per_foot < 2) throw ConfigError("cells_per_foot must be >= 2 (heel and toe)");
}

SampleClock::SampleClock(int rate_hz) : rate_hz_(rate_hz) {
  if (rate_hz <= 0) throw ConfigError("sample rate must be positive, got " + std::to_string(rate_hz));
}

std::int64_t SampleClock::frames_ceil(double seconds) const {
  // Tolerate representation error so that 0.05 s at 100 Hz is 5 frames, not 6.
  return static_cast<std::int64_t>(std::ceil(seconds * rate_hz_ - 1e-9));
}

std::int64_t SampleClock::frames_round(double seconds) const {
  return static_cast<std::int64_t>(std::llround(seconds * rate_hz_));
}

void GaitTrial::validate() const {
  layout.validate();
  if (imu.cols() != layout.imu_dim())
    throw DataError("imu has " + std::to_string(imu.cols()) + " columns, layout expects " +
                    std::to_string(layout.imu_dim()));
  if (plantar.cols() != layout.plantar_dim())
    throw DataError("plantar has " + std::to_string(plantar.cols()) + " columns, layout expects " +
                    std::to_string(layout.plantar_dim()));
  if (imu.rows() != plantar.rows()) throw DataError("imu and plantar lengths differ");
  if (!(body_weight_N > 0.0)) throw DataError("body weight must be positive");
  if (!imu.allFinite()) throw DataError("imu contains non-finite values");
  if (!plantar.allFinite()) throw DataError("plantar contains non-finite values");
  if (plantar.size() > 0 && plantar.minCoeff() < 0.0) throw DataError("plantar contains negative forces");
  if (phase_truth && phase_truth->size() != length()) throw DataError("phase_truth length differs from trial");
}

SlidingWindow::SlidingWindow(std::size_t capacity, int frame_dim) : capacity_(capacity), dim_(frame_dim) {
  if (capacity == 0) throw ConfigError("window capacity must be >= 1");
  if (frame_dim <= 0) throw ConfigError("frame dimension must be positive");
}

void SlidingWindow::push(const Eigen::Ref<const Vector>& frame) {
  if (frame.size() != dim_)
    throw DimensionError("frame has " + std::to_string(frame.size()) + " values, window expects " +
                         std::to_string(dim_));
  if (frames_.size() == capacity_) frames_.pop_front();
  frames_.emplace_back(frame);
}

Matrix SlidingWindow::to_matrix() const {
  if (!full())
    throw ConfigError("insufficient history: window holds " + std::to_string(frames_.size()) + " of " +
                      std::to_string(capacity_) + " frames");
  Matrix m(static_cast<Eigen::Index>(capacity_), dim_);
  for (std::size_t r = 0; r < capacity_; ++r) m.row(static_cast<Eigen::Index>(r)) = frames_[r].transpose();
  return m;
}

Matrix frames_to_matrix(const SlidingWindow& w) { return w.to_matrix(); }

Matrix window_rows(const Matrix& m, std::size_t newest, std::size_t n) {
  if (n == 0 || newest + 1 < n || newest >= static_cast<std::size_t>(m.rows()))
    throw ConfigError("window rows out of range");
  return m.middleRows(static_cast<Eigen::Index>(newest + 1 - n), static_cast<Eigen::Index>(n));
}

}  // namespace gaitloop
