// SPDX-License-Identifier: Apache-2.0
#include "gaitloop/phase.hpp"

#include "gaitloop/errors.hpp"

#include <algorithm>
#include <cmath>

namespace gaitloop::phase {

void PhaseConfig::validate() const {
  if (!(toe_threshold_N > 0.0) || !(heel_threshold_N > 0.0)) throw ConfigError("phase thresholds must be positive");
  if (!(hysteresis_N >= 0.0)) throw ConfigError("hysteresis must be non-negative");
  if (!(refractory_s > 0.0)) throw ConfigError("refractory period must be positive");
  if (!(standing_min_s >= 0.0)) throw ConfigError("standing_min_s must be non-negative");
}

PhaseState classify_phase(const PlantarFrame& frame, std::int64_t frame_index, const PhaseState& prev,
                          const SensorLayout& layout, const PhaseConfig& config, const SampleClock& clock) {
  if (frame.size() != layout.plantar_dim())
    throw DimensionError("plantar frame has " + std::to_string(frame.size()) + " values, expected " +
                         std::to_string(layout.plantar_dim()));
  PhaseState s = prev;
  s.frame = frame_index;
  bool changed = false;
  for (Foot f : kFeet) {
    const auto fi = static_cast<std::size_t>(f);
    const double heel = frame[layout.heel(f)];
    const double toe = frame[layout.toe(f)];
    const double peak = frame.segment(layout.cell(f, 0), layout.cells_per_foot).maxCoeff();

    const bool was_swing = prev.has_prev && prev.feet[fi].raw == GaitPhase::Swing;
    const double swing_level = was_swing ? config.toe_threshold_N + config.hysteresis_N : config.toe_threshold_N;

    GaitPhase raw;
    if (peak <= swing_level) {
      raw = GaitPhase::Swing;
    } else {
      const bool rising = prev.has_prev && heel > prev.feet[fi].prev_heel;
      if (heel > config.heel_threshold_N && rising && toe <= config.toe_threshold_N)
        raw = GaitPhase::HeelStrike;
      else if (toe > config.toe_threshold_N && heel <= config.heel_threshold_N)
        raw = GaitPhase::ToeOff;
      else
        raw = GaitPhase::Support;
    }
    if (prev.has_prev && raw != prev.feet[fi].raw) changed = true;
    s.feet[fi].raw = raw;
    s.feet[fi].prev_heel = heel;
  }
  if (changed) s.last_transition = frame_index;
  s.has_prev = true;

  const std::int64_t standing_frames = clock.frames_ceil(config.standing_min_s);
  const bool loaded = s.feet[0].raw != GaitPhase::Swing && s.feet[1].raw != GaitPhase::Swing;
  const bool quiet = !s.last_transition || frame_index - *s.last_transition >= standing_frames;
  if (loaded && quiet)
    s.labels = {GaitPhase::Standing, GaitPhase::Standing};
  else
    s.labels = {s.feet[0].raw, s.feet[1].raw};
  return s;
}

std::vector<FootPhases> classify_sequence(const Matrix& plantar, const SensorLayout& layout,
                                          const PhaseConfig& config, const SampleClock& clock) {
  config.validate();
  std::vector<FootPhases> out;
  out.reserve(static_cast<std::size_t>(plantar.rows()));
  PhaseState state;
  for (Eigen::Index r = 0; r < plantar.rows(); ++r) {
    state = classify_phase(plantar.row(r).transpose(), r, state, layout, config, clock);
    out.push_back(state.labels);
  }
  return out;
}

AssistEventDetector::AssistEventDetector(const SensorLayout& layout, const PhaseConfig& config,
                                         const SampleClock& clock, EventSource source)
    : layout_(layout),
      config_(config),
      clock_(clock),
      source_(source),
      refractory_frames_(clock.frames_ceil(config.refractory_s)),
      standing_min_frames_(clock.frames_ceil(config.standing_min_s)) {
  config_.validate();
}

std::vector<AssistEvent> AssistEventDetector::push(const PlantarFrame& frame, std::int64_t frame_index) {
  phase_ = classify_phase(frame, frame_index, phase_, layout_, config_, clock_);

  if (phase_.labels[0] == GaitPhase::Standing) {
    if (!standing_since_) standing_since_ = frame_index;
    if (frame_index - *standing_since_ + 1 >= standing_min_frames_)
      for (auto& t : feet_) t.standing_seen = true;
  } else {
    standing_since_.reset();
  }

  std::vector<AssistEvent> events;
  for (Foot f : kFeet) {
    auto& track = feet_[static_cast<std::size_t>(f)];
    const double toe = frame[layout_.toe(f)];
    if (toe > config_.toe_threshold_N + config_.hysteresis_N) {
      track.armed = true;
    } else if (track.armed && toe <= config_.toe_threshold_N) {
      track.armed = false;
      if (!track.last_event || frame_index - *track.last_event >= refractory_frames_) {
        AssistEvent e;
        e.foot = f;
        e.frame = frame_index;
        e.time_s = clock_.time_of(frame_index);
        e.source = source_;
        e.context = track.standing_seen ? EventContext::Starting : EventContext::Walking;
        track.standing_seen = false;
        track.last_event = frame_index;
        events.push_back(e);
      }
    }
  }
  return events;
}

std::vector<AssistEvent> detect_assist_events(const Matrix& plantar, const SensorLayout& layout,
                                              const PhaseConfig& config, const SampleClock& clock,
                                              EventSource source, std::int64_t first_frame) {
  AssistEventDetector det(layout, config, clock, source);
  std::vector<AssistEvent> out;
  for (Eigen::Index r = 0; r < plantar.rows(); ++r) {
    auto ev = det.push(plantar.row(r).transpose(), first_frame + r);
    out.insert(out.end(), ev.begin(), ev.end());
  }
  return out;
}

std::vector<AssistEvent> events_from_labels(const std::vector<FootPhases>& labels, const SampleClock& clock,
                                            const PhaseConfig& config, EventSource source,
                                            std::int64_t first_frame) {
  const std::int64_t standing_min_frames = clock.frames_ceil(config.standing_min_s);
  std::array<bool, 2> standing_seen{true, true};
  std::int64_t standing_run = 0;
  std::vector<AssistEvent> out;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i][0] == GaitPhase::Standing) {
      if (++standing_run >= standing_min_frames) standing_seen = {true, true};
    } else {
      standing_run = 0;
    }
    if (i == 0) continue;
    for (Foot f : kFeet) {
      const auto fi = static_cast<std::size_t>(f);
      if (labels[i][fi] == GaitPhase::Swing && labels[i - 1][fi] != GaitPhase::Swing) {
        AssistEvent e;
        e.foot = f;
        e.frame = first_frame + static_cast<std::int64_t>(i);
        e.time_s = clock.time_of(e.frame);
        e.source = source;
        e.context = standing_seen[fi] ? EventContext::Starting : EventContext::Walking;
        standing_seen[fi] = false;
        out.push_back(e);
      }
    }
  }
  return out;
}

namespace {

// Optimal non-crossing matching of two sorted time lists: most matches first,
// then least total |dt|. Uncrossing never breaks the window or raises cost,
// so restricting to non-crossing matchings loses nothing.
std::vector<std::pair<std::size_t, std::size_t>> match_sorted(const std::vector<double>& a,
                                                              const std::vector<double>& b, double max_dt) {
  const std::size_t na = a.size(), nb = b.size();
  struct Cell {
    std::size_t matches = 0;
    double cost = 0.0;
    std::uint8_t move = 0;  // 0 skip a, 1 skip b, 2 match
  };
  auto better = [](std::size_t m1, double c1, std::size_t m2, double c2) {
    return m1 != m2 ? m1 > m2 : c1 < c2;
  };
  std::vector<Cell> dp((na + 1) * (nb + 1));
  auto at = [&](std::size_t i, std::size_t j) -> Cell& { return dp[i * (nb + 1) + j]; };
  for (std::size_t i = 0; i <= na; ++i) {
    for (std::size_t j = 0; j <= nb; ++j) {
      if (i == 0 && j == 0) continue;
      Cell best;
      bool have = false;
      if (i > 0) {
        const Cell& c = at(i - 1, j);
        best = {c.matches, c.cost, 0};
        have = true;
      }
      if (j > 0) {
        const Cell& c = at(i, j - 1);
        if (!have || better(c.matches, c.cost, best.matches, best.cost)) best = {c.matches, c.cost, 1};
        have = true;
      }
      if (i > 0 && j > 0) {
        const double d = std::abs(a[i - 1] - b[j - 1]);
        if (d <= max_dt) {
          const Cell& c = at(i - 1, j - 1);
          if (better(c.matches + 1, c.cost + d, best.matches, best.cost)) best = {c.matches + 1, c.cost + d, 2};
        }
      }
      at(i, j) = best;
    }
  }
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  std::size_t i = na, j = nb;
  while (i > 0 || j > 0) {
    const Cell& c = at(i, j);
    if (c.move == 2) {
      pairs.emplace_back(i - 1, j - 1);
      --i;
      --j;
    } else if (c.move == 1) {
      --j;
    } else {
      --i;
    }
  }
  std::reverse(pairs.begin(), pairs.end());
  return pairs;
}

}  // namespace

TimingComparison timing_difference(const std::vector<AssistEvent>& a, const std::vector<AssistEvent>& b,
                                   double max_match_s) {
  TimingComparison out;
  for (Foot f : kFeet) {
    std::vector<std::size_t> ia, ib;
    std::vector<double> ta, tb;
    for (std::size_t i = 0; i < a.size(); ++i)
      if (a[i].foot == f) {
        ia.push_back(i);
        ta.push_back(a[i].time_s);
      }
    for (std::size_t i = 0; i < b.size(); ++i)
      if (b[i].foot == f) {
        ib.push_back(i);
        tb.push_back(b[i].time_s);
      }
    if (!std::is_sorted(ta.begin(), ta.end()) || !std::is_sorted(tb.begin(), tb.end()))
      throw ConfigError("timing_difference: event lists must be sorted by time");
    const auto pairs = match_sorted(ta, tb, max_match_s);
    for (auto [pa, pb] : pairs) {
      MatchedPair m;
      m.foot = f;
      m.index_a = ia[pa];
      m.index_b = ib[pb];
      m.dt_s = ta[pa] - tb[pb];
      m.context = b[ib[pb]].context;
      out.matches.push_back(m);
    }
    out.unmatched_a += ta.size() - pairs.size();
    out.unmatched_b += tb.size() - pairs.size();
  }
  std::stable_sort(out.matches.begin(), out.matches.end(),
            [&](const MatchedPair& x, const MatchedPair& y) { return b[x.index_b].time_s < b[y.index_b].time_s; });
  return out;
}

}  // namespace gaitloop::phase
