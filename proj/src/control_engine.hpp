// SPDX-License-Identifier: Apache-2.0
//
// Tick handling shared by the simulated and the real-time loop.
#pragma once

#include "gaitloop/control.hpp"

#include <functional>

namespace gaitloop::control::detail {

class LoopEngine {
 public:
  LoopEngine(const GaitTrial& trial, Predictor& predictor, const LoopConfig& config);

  std::int64_t step_frames() const { return step_; }
  std::int64_t delivery_frames() const { return dm_; }
  /// Delays rounded up to whole frames; these drive the simulation.
  const DelayConfig& effective_delays() const { return eff_; }

  /// Whether a tick whose newest delivered row is `d` is part of the run.
  bool tick_row(std::int64_t d) const;

  /// Runs one tick on `window` (newest row `d`). `usable_time` is read right
  /// after the prediction and gives the time its result can be acted on.
  void tick(const Matrix& window, std::int64_t d, const std::function<double()>& usable_time);

  LoopTrace finish();

 private:
  const GaitTrial& trial_;
  Predictor& predictor_;
  LoopConfig config_;
  std::int64_t step_;
  std::int64_t dm_;
  DelayConfig eff_;
  phase::AssistEventDetector detector_;
  LoopTrace trace_;
};

}  // namespace gaitloop::control::detail
