// SPDX-License-Identifier: Apache-2.0
#include "control_engine.hpp"
#include "gaitloop/bounded_queue.hpp"
#include "gaitloop/control.hpp"
#include "gaitloop/errors.hpp"

#include <atomic>
#include <chrono>
#include <thread>

namespace gaitloop::control {
namespace {

struct FrameMsg {
  std::int64_t row = 0;
  ImuFrame imu;
};

using Clock = std::chrono::steady_clock;

}  // namespace

RealtimeResult run_realtime(const GaitTrial& trial, Predictor& predictor, const LoopConfig& config,
                            const RealtimeOptions& options) {
  if (!(options.speed > 0.0)) throw ConfigError("replay speed must be positive");
  if (options.queue_capacity < 1) throw ConfigError("queue capacity must be at least 1");
  detail::LoopEngine engine(trial, predictor, config);
  const auto T = static_cast<std::int64_t>(trial.length());
  const double t0 = trial.time_s(0);

  BoundedQueue<FrameMsg> queue(options.queue_capacity);
  std::atomic<bool> done{false};
  std::atomic<std::size_t> dropped{0};
  const auto start = Clock::now();
  auto wall_at = [&](double trial_time) {
    return start + std::chrono::duration_cast<Clock::duration>(std::chrono::duration<double>((trial_time - t0) / options.speed));
  };
  auto trial_now = [&] { return t0 + std::chrono::duration<double>(Clock::now() - start).count() * options.speed; };

  std::thread producer([&] {
    for (std::int64_t r = 0; r < T; ++r) {
      std::this_thread::sleep_until(wall_at(trial.time_s(static_cast<std::size_t>(r)) + engine.effective_delays().t_dm_s));
      if (!queue.try_push({r, trial.imu.row(r).transpose()})) dropped.fetch_add(1);
    }
    done.store(true);
  });

  RealtimeResult result;
  SlidingWindow window(predictor.window(), trial.layout.imu_dim());
  std::int64_t last_row = -1;
  try {
    while (true) {
      auto msg = queue.pop_for(std::chrono::milliseconds(20));
      if (!msg) {
        if (done.load() && queue.size() == 0) break;
        continue;
      }
      // A dropped frame leaves a hole; never build a window across it.
      if (msg->row != last_row + 1) window.clear();
      last_row = msg->row;
      window.push(msg->imu);
      ++result.frames_consumed;
      if (!window.full() || !engine.tick_row(msg->row)) continue;
      const double tick_time = trial.time_s(static_cast<std::size_t>(msg->row)) + engine.effective_delays().t_dm_s;
      const auto c0 = Clock::now();
      const Matrix w = window.to_matrix();
      engine.tick(w, msg->row, [&] {
        result.compute_latency_s.push_back(std::chrono::duration<double>(Clock::now() - c0).count());
        return options.measure_compute ? trial_now() : tick_time + engine.effective_delays().t_dc_s;
      });
    }
  } catch (...) {
    producer.join();
    throw;
  }
  producer.join();
  result.wall_time_s = std::chrono::duration<double>(Clock::now() - start).count();
  result.trial_time_s = trial.duration_s();
  result.frames_dropped = dropped.load();
  result.trace = engine.finish();
  return result;
}

}  // namespace gaitloop::control
