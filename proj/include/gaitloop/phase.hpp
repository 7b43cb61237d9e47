// SPDX-License-Identifier: Apache-2.0
//
// Walking phase classification and assistance-timing detection from plantar
// force sequences. The same code runs on measured, predicted and synthetic
// ground-truth force streams.
#pragma once

#include "gaitloop/core.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

namespace gaitloop::phase {

struct PhaseConfig {
  double toe_threshold_N = 50.0;
  double hysteresis_N = 10.0;
  double refractory_s = 0.3;
  double standing_min_s = 0.5;
  double heel_threshold_N = 50.0;

  void validate() const;
};

/// Streaming classifier state. Value type; copy it to snapshot.
struct PhaseState {
  struct FootState {
    GaitPhase raw = GaitPhase::Support;  ///< label before the standing overlay
    double prev_heel = 0.0;
  };
  std::array<FootState, 2> feet{};
  bool has_prev = false;
  /// Frame of the most recent raw-label change on either foot; empty = never.
  std::optional<std::int64_t> last_transition;
  std::int64_t frame = 0;
  FootPhases labels{GaitPhase::Standing, GaitPhase::Standing};
};

/// Classifies one plantar frame given the previous state.
///
/// Per foot: Swing when every cell is at or below the toe threshold (leaving
/// Swing needs a cell above threshold + hysteresis); HeelStrike when the heel
/// is above its threshold and rising while the toe is at or below threshold;
/// ToeOff when the toe is above threshold and the heel at or below; Support
/// otherwise. Both feet read Standing when neither swings and no raw label
/// changed for `standing_min_s`.
PhaseState classify_phase(const PlantarFrame& frame, std::int64_t frame_index, const PhaseState& prev,
                          const SensorLayout& layout, const PhaseConfig& config, const SampleClock& clock);

std::vector<FootPhases> classify_sequence(const Matrix& plantar, const SensorLayout& layout,
                                          const PhaseConfig& config, const SampleClock& clock);

/// Streaming swing-onset detector (toe force falling through the threshold).
class AssistEventDetector {
 public:
  AssistEventDetector(const SensorLayout& layout, const PhaseConfig& config, const SampleClock& clock,
                      EventSource source);

  /// Feeds the force frame for `frame_index` (strictly increasing, gaps allowed).
  std::vector<AssistEvent> push(const PlantarFrame& frame, std::int64_t frame_index);

  const PhaseState& phase_state() const { return phase_; }

 private:
  struct FootTrack {
    bool armed = false;
    std::optional<std::int64_t> last_event;
    bool standing_seen = true;  // a trial starts from rest
  };

  SensorLayout layout_;
  PhaseConfig config_;
  SampleClock clock_;
  EventSource source_;
  std::int64_t refractory_frames_;
  std::int64_t standing_min_frames_;
  PhaseState phase_;
  std::optional<std::int64_t> standing_since_;
  std::array<FootTrack, 2> feet_{};
};

std::vector<AssistEvent> detect_assist_events(const Matrix& plantar, const SensorLayout& layout,
                                              const PhaseConfig& config, const SampleClock& clock,
                                              EventSource source, std::int64_t first_frame = 0);

/// Swing onsets read off a label sequence (non-Swing -> Swing), with the same
/// walking/starting context rule as the detector.
std::vector<AssistEvent> events_from_labels(const std::vector<FootPhases>& labels, const SampleClock& clock,
                                            const PhaseConfig& config, EventSource source,
                                            std::int64_t first_frame = 0);

struct MatchedPair {
  Foot foot = Foot::Left;
  std::size_t index_a = 0;
  std::size_t index_b = 0;
  double dt_s = 0.0;  ///< t_a - t_b
  EventContext context = EventContext::Walking;
};

struct TimingComparison {
  std::vector<MatchedPair> matches;
  std::size_t unmatched_a = 0;
  std::size_t unmatched_b = 0;
};

/// Matches events per foot within `max_match_s`, maximizing the number of
/// matches and then minimizing total |dt|. Context comes from `b` (reference).
TimingComparison timing_difference(const std::vector<AssistEvent>& a, const std::vector<AssistEvent>& b,
                                   double max_match_s = 0.5);

}  // namespace gaitloop::phase
