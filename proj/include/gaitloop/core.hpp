// SPDX-License-Identifier: Apache-2.0
//
// Shared domain types: sensor layout, the fixed-rate time base, gait trials
// and the sliding history window fed to the predictor.
#pragma once

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <deque>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace gaitloop {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// One IMU sample: [a_1, w_1, ..., a_m, w_m], 6m values.
using ImuFrame = Vector;
/// One plantar sample: [heel_l, mid_l, toe_l, heel_r, mid_r, toe_r] for k = 3.
using PlantarFrame = Vector;

enum class Foot : int { Left = 0, Right = 1 };
inline constexpr std::array<Foot, 2> kFeet{Foot::Left, Foot::Right};

inline Foot other(Foot f) { return f == Foot::Left ? Foot::Right : Foot::Left; }
std::string_view to_string(Foot f);

/// Number of IMUs (m) and plantar cells per foot (k). Reference: m = 2, k = 3.
struct SensorLayout {
  int imu_count = 2;
  int cells_per_foot = 3;

  int imu_dim() const { return 6 * imu_count; }
  int plantar_dim() const { return 2 * cells_per_foot; }

  // Heel is the first cell of a foot, toe the last; everything between is mid.
  int heel(Foot f) const { return static_cast<int>(f) * cells_per_foot; }
  int toe(Foot f) const { return static_cast<int>(f) * cells_per_foot + cells_per_foot - 1; }
  int cell(Foot f, int j) const { return static_cast<int>(f) * cells_per_foot + j; }

  std::vector<std::string> imu_columns() const;
  std::vector<std::string> plantar_columns() const;

  void validate() const;
  bool operator==(const SensorLayout&) const = default;
};

/// Integer-rate time base. Time is always derived from a frame index.
class SampleClock {
 public:
  explicit SampleClock(int rate_hz = 100);

  int rate_hz() const { return rate_hz_; }
  double period_s() const { return 1.0 / rate_hz_; }
  double time_of(std::int64_t frame) const { return static_cast<double>(frame) / rate_hz_; }
  /// Whole frames covering `seconds`, rounded up.
  std::int64_t frames_ceil(double seconds) const;
  /// Nearest frame to `seconds`.
  std::int64_t frames_round(double seconds) const;

  bool operator==(const SampleClock&) const = default;

 private:
  int rate_hz_;
};

enum class GaitPhase : std::uint8_t { HeelStrike = 0, Support = 1, ToeOff = 2, Swing = 3, Standing = 4 };
std::string_view to_string(GaitPhase p);

/// Phase of each foot for one frame, indexed by Foot.
using FootPhases = std::array<GaitPhase, 2>;

enum class EventSource : std::uint8_t { Measured, Predicted, Truth };
enum class EventContext : std::uint8_t { Walking, Starting };
std::string_view to_string(EventSource s);
std::string_view to_string(EventContext c);

/// Swing onset of one foot (toe force dropping through the toe threshold).
struct AssistEvent {
  Foot foot = Foot::Left;
  std::int64_t frame = 0;
  double time_s = 0.0;
  EventSource source = EventSource::Measured;
  EventContext context = EventContext::Walking;

  bool operator==(const AssistEvent&) const = default;
};

enum class TrialKind : std::uint8_t { Patterned, Random, Unknown };
std::string_view to_string(TrialKind k);
TrialKind trial_kind_from_string(std::string_view s);

/// Synchronized, uniformly sampled IMU + plantar recording.
struct GaitTrial {
  SampleClock clock{100};
  /// Frame index of row 0 on `clock`.
  std::int64_t first_frame = 0;
  SensorLayout layout;
  Matrix imu;      ///< rows x 6m
  Matrix plantar;  ///< rows x 2k
  std::string subject_id;
  double body_weight_N = 0.0;
  TrialKind kind = TrialKind::Unknown;
  std::optional<std::vector<FootPhases>> phase_truth;
  std::optional<std::vector<AssistEvent>> event_truth;

  std::size_t length() const { return static_cast<std::size_t>(imu.rows()); }
  double time_s(std::size_t row) const { return clock.time_of(first_frame + static_cast<std::int64_t>(row)); }
  double duration_s() const { return length() > 0 ? time_s(length() - 1) - time_s(0) : 0.0; }

  /// Throws DataError if any structural invariant is violated.
  void validate() const;
};

/// Fixed-capacity FIFO of the most recent IMU frames.
class SlidingWindow {
 public:
  SlidingWindow(std::size_t capacity, int frame_dim);

  /// Appends `frame`, evicting the oldest when at capacity.
  void push(const Eigen::Ref<const Vector>& frame);
  void clear() { frames_.clear(); }

  std::size_t capacity() const { return capacity_; }
  int frame_dim() const { return dim_; }
  std::size_t size() const { return frames_.size(); }
  bool full() const { return frames_.size() == capacity_; }
  const Vector& frame(std::size_t i) const { return frames_.at(i); }

  /// n x dim matrix; row n-1 is the newest frame. Requires a full window.
  Matrix to_matrix() const;

 private:
  std::size_t capacity_;
  int dim_;
  std::deque<Vector> frames_;
};

/// Same as `w.to_matrix()`.
Matrix frames_to_matrix(const SlidingWindow& w);

/// Rows [newest - n + 1, newest] of `m`.
Matrix window_rows(const Matrix& m, std::size_t newest, std::size_t n);

}  // namespace gaitloop
