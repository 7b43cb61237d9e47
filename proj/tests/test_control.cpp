// SPDX-License-Identifier: Apache-2.0
#include "gaitloop/bounded_queue.hpp"
#include "gaitloop/control.hpp"
#include "gaitloop/csv.hpp"
#include "gaitloop/errors.hpp"
#include "gaitloop/syngait.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <random>
#include <thread>

using namespace gaitloop;
using namespace gaitloop::control;

namespace {

GaitTrial walk(std::uint64_t seed, std::vector<int> bouts = {3, 6, 2, 8}) {
  syngait::GaitPlan p;
  p.bout_steps = std::move(bouts);
  p.pause_jitter_s = 0.8;
  p.rng_seed = seed;
  return syngait::generate_trial(p);
}

LoopConfig zero_delay(int loop_hz) {
  LoopConfig c;
  c.delays = {0.0, 0.0, 0.0};
  c.loop_hz = loop_hz;
  return c;
}

}  // namespace

TEST_CASE("command scheduled t_dr ahead of the event") {
  const DelayConfig d{0.05, 0.024, 0.05};
  const auto c = schedule_command(10.0, 9.5, d);
  CHECK(c.issue_time_s == doctest::Approx(9.95));
  CHECK(c.actuation_time_s == doctest::Approx(10.0));
  CHECK_FALSE(c.late);
  CHECK(c.duration_s == 0.1);
}

TEST_CASE("command clamped to now is late") {
  const DelayConfig d{0.05, 0.024, 0.05};
  const auto c = schedule_command(10.0, 9.99, d, Foot::Right);
  CHECK(c.issue_time_s == doctest::Approx(9.99));
  CHECK(c.actuation_time_s == doctest::Approx(10.04));
  CHECK(c.late);
  CHECK(c.foot == Foot::Right);
}

TEST_CASE("event in the past is rejected") {
  CHECK_THROWS_AS(schedule_command(9.0, 9.5, DelayConfig{}), ConfigError);
}

TEST_CASE("horizon must exceed the total delay") {
  CHECK_THROWS_WITH_AS(check_horizon(10, 100, DelayConfig{}), doctest::Contains("prediction horizon must exceed total delay"),
                       ConfigError);
  CHECK_NOTHROW(check_horizon(13, 100, DelayConfig{}));
  CHECK_THROWS_AS(check_horizon(50, 100, DelayConfig{-0.1, 0, 0}), ConfigError);

  // 13 frames clear the raw total (0.124 s) but not the frame-rounded one (0.13 s).
  const GaitTrial t = walk(1, {2});
  OraclePredictor p13(t, 20, 13);
  CHECK_THROWS_WITH_AS(run_closed_loop(t, p13, LoopConfig{}), doctest::Contains("prediction horizon"), ConfigError);
  OraclePredictor p10(t, 20, 10);
  CHECK_THROWS_AS(run_closed_loop(t, p10, LoopConfig{}), ConfigError);
}

TEST_CASE("loop rate must divide the sample rate") {
  const GaitTrial t = walk(1, {2});
  OraclePredictor p(t, 20, 20);
  LoopConfig c;
  c.loop_hz = 30;
  CHECK_THROWS_WITH_AS(run_closed_loop(t, p, c), doctest::Contains("loop rate"), ConfigError);
}

TEST_CASE("zero delays at the sample rate actuate exactly on truth") {
  for (std::uint64_t seed = 1; seed <= 4; ++seed) {
    const GaitTrial t = walk(seed);
    OraclePredictor p(t, 20, 20);
    const auto tr = run_closed_loop(t, p, zero_delay(100));
    CHECK(tr.late_count == 0);
    CHECK(tr.rejected_count == 0);
    REQUIRE(tr.comparison.matches.size() == t.event_truth->size());
    CHECK(tr.comparison.unmatched_a == 0);
    for (const auto& m : tr.comparison.matches) CHECK(std::abs(m.dt_s) <= 1e-9);
  }
}

TEST_CASE("oracle at the sample rate lands within one frame") {
  const GaitTrial t = walk(7);
  OraclePredictor p(t, 20, 20);
  LoopConfig c;
  c.loop_hz = 100;
  const auto tr = run_closed_loop(t, p, c);
  CHECK(tr.late_count == 0);
  REQUIRE(tr.comparison.matches.size() == t.event_truth->size());
  for (const auto& m : tr.comparison.matches) CHECK(std::abs(m.dt_s) <= 0.01 + 1e-9);
  CHECK(tr.summary.walking_mean_abs_s <= 0.01);
}

TEST_CASE("oracle is never late and stays within a loop period plus a frame") {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> u(0.0, 0.06);
  const int loops[] = {10, 20, 25, 50, 100};
  std::size_t runs = 0;
  while (runs < 30) {
    LoopConfig c;
    c.delays = {u(rng), u(rng), u(rng)};
    c.loop_hz = loops[runs % 5];
    const std::size_t s = 20 + runs % 7;
    const GaitTrial t = walk(100 + runs);
    OraclePredictor p(t, 1 + runs % 30, s);
    LoopTrace tr;
    try {
      tr = run_closed_loop(t, p, c);
    } catch (const ConfigError&) {
      continue;  // rounded delays exceed this horizon
    }
    ++runs;
    const double bound = 1.0 / c.loop_hz + 0.01 + 1e-9;
    CHECK(tr.late_count == 0);
    CHECK(tr.rejected_count == 0);
    CHECK(tr.comparison.matches.size() == t.event_truth->size());
    for (const auto& m : tr.comparison.matches) CHECK(std::abs(m.dt_s) <= bound);
  }
}

TEST_CASE("trace times follow the delay arithmetic") {
  const GaitTrial t = walk(3);
  OraclePredictor p(t, 20, 25);
  LoopConfig c;
  c.delays = {0.043, 0.011, 0.07};
  const auto tr = run_closed_loop(t, p, c);
  CHECK(tr.effective_delays.t_dm_s == doctest::Approx(0.05));
  CHECK(tr.effective_delays.t_dc_s == doctest::Approx(0.02));
  CHECK(tr.effective_delays.t_dr_s == doctest::Approx(0.07));
  REQUIRE(tr.ticks.size() > 100);
  for (std::size_t i = 0; i < tr.ticks.size(); ++i) {
    const auto& r = tr.ticks[i];
    CHECK(r.delivery_time_s - r.raw_time_s == doctest::Approx(tr.effective_delays.t_dm_s));
    CHECK(r.usable_time_s == doctest::Approx(r.frame / 100.0 + tr.effective_delays.t_dc_s));
    CHECK(r.target_frame == r.delivered_frame + 25);
    CHECK(r.frame % 5 == 0);
    if (i > 0) CHECK(r.frame - tr.ticks[i - 1].frame == 5);
  }
  for (const auto& cmd : tr.commands) {
    CHECK(cmd.actuation_time_s - cmd.issue_time_s == doctest::Approx(tr.effective_delays.t_dr_s));
    CHECK(cmd.actuation_time_s > cmd.issue_time_s);
  }
}

TEST_CASE("commands for one foot are at least a refractory period apart") {
  const GaitTrial t = walk(5);
  OraclePredictor p(t, 20, 20);
  const auto tr = run_closed_loop(t, p, LoopConfig{});
  for (Foot f : kFeet) {
    double last = -1e9;
    for (const auto& c : tr.commands)
      if (c.foot == f) {
        CHECK(c.actuation_time_s - last >= 0.3 - 1e-9);
        last = c.actuation_time_s;
      }
  }
}

TEST_CASE("model-driven loop is deterministic") {
  neural::ModelMeta meta;
  neural::Model m(neural::ModelShape{}, meta);
  neural::init_params(m, 5);
  m.norm.output_offset = Vector::Constant(6, 100.0);
  m.norm.output_scale = Vector::Constant(6, 80.0);
  const GaitTrial t = walk(9);
  const auto a = run_closed_loop(t, m, LoopConfig{});
  const auto b = run_closed_loop(t, m, LoopConfig{});
  CHECK(trace_csv(a, t.layout) == trace_csv(b, t.layout));
  CHECK(events_csv(a) == events_csv(b));
  CHECK(summary_json(a) == summary_json(b));
  m.meta.rate_hz = 200;
  CHECK_THROWS_WITH_AS(run_closed_loop(t, m, LoopConfig{}), doctest::Contains("incompatible"), ConfigError);
}

TEST_CASE("truth falls back to measured events without labels") {
  GaitTrial t = walk(11);
  const auto labelled = *t.event_truth;
  t.event_truth.reset();
  OraclePredictor p(t, 20, 20);
  const auto tr = run_closed_loop(t, p, LoopConfig{});
  REQUIRE(tr.truth_events.size() == labelled.size());
  for (std::size_t i = 0; i < labelled.size(); ++i) CHECK(std::abs(tr.truth_events[i].frame - labelled[i].frame) <= 2);
}

TEST_CASE("exports have the documented columns") {
  const GaitTrial t = walk(2, {4});
  OraclePredictor p(t, 20, 20);
  const auto tr = run_closed_loop(t, p, LoopConfig{});
  const std::string trace = trace_csv(tr, t.layout);
  CHECK(trace.rfind("frame,delivered_frame,raw_time_s,delivery_time_s,usable_time_s,target_frame,pred_plantar_l_heel", 0) == 0);
  CHECK(static_cast<std::size_t>(std::count(trace.begin(), trace.end(), '\n')) == tr.ticks.size() + 1);
  const std::string ev = events_csv(tr);
  CHECK(ev.rfind("kind,foot,frame,time_s,context,issue_time_s,late\n", 0) == 0);
  CHECK(ev.find("actuation,") != std::string::npos);
  const std::string js = summary_json(tr);
  CHECK(js.find("\"late_count\": 0") != std::string::npos);
  CHECK(js.find("\"walking\"") != std::string::npos);
}

TEST_CASE("delay file parsing") {
  const auto dir = std::filesystem::temp_directory_path() / "gaitloop_delays";
  std::filesystem::create_directories(dir);
  csv::write_atomic(dir / "ok.cfg", "# bench rig\nt_dm_s = 0.04\n\nt_dr_s=0.03  # motor\n");
  const auto d = load_delay_config(dir / "ok.cfg");
  CHECK(d.t_dm_s == 0.04);
  CHECK(d.t_dc_s == 0.024);
  CHECK(d.t_dr_s == 0.03);
  csv::write_atomic(dir / "bad.cfg", "t_dm_s = fast\n");
  CHECK_THROWS_WITH_AS(load_delay_config(dir / "bad.cfg"), doctest::Contains(":1:"), ConfigError);
  csv::write_atomic(dir / "key.cfg", "t_xx_s = 1\n");
  CHECK_THROWS_WITH_AS(load_delay_config(dir / "key.cfg"), doctest::Contains("unknown key"), ConfigError);
  csv::write_atomic(dir / "neg.cfg", "t_dr_s = -1\n");
  CHECK_THROWS_AS(load_delay_config(dir / "neg.cfg"), ConfigError);
}

TEST_CASE("inference latency grows with the window and is stable") {
  const auto rows = measure_inference_latency(neural::ModelShape{}, {1, 10, 20, 30, 40}, 1000, 5);
  REQUIRE(rows.size() == 5);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    MESSAGE("n=" << rows[i].n << " mean=" << rows[i].mean_s << " cv=" << rows[i].cv);
    CHECK(rows[i].calls == 1000);
    CHECK(rows[i].cv < 0.5);
    if (i > 0) CHECK(rows[i].mean_s >= rows[i - 1].mean_s);
  }
  CHECK(rows[2].mean_s < 0.010);
  const auto csv = latency_csv(rows);
  CHECK(csv.rfind("n,calls,mean_s,stddev_s,cv\n", 0) == 0);
  CHECK_THROWS_AS(measure_inference_latency(neural::ModelShape{}, {20}, 2, 5), ConfigError);
}

TEST_CASE("bounded queue is FIFO, bounded and never blocks the producer") {
  BoundedQueue<int> q(3);
  CHECK(q.try_push(1));
  CHECK(q.try_push(2));
  CHECK(q.try_push(3));
  CHECK_FALSE(q.try_push(4));
  CHECK(q.size() == 3);
  CHECK(q.pop_for(std::chrono::milliseconds(1)) == 1);
  CHECK(q.pop_for(std::chrono::milliseconds(1)) == 2);
  CHECK(q.pop_for(std::chrono::milliseconds(1)) == 3);
  CHECK_FALSE(q.pop_for(std::chrono::milliseconds(5)).has_value());

  BoundedQueue<int> big(10000);
  std::thread prod([&] {
    for (int i = 0; i < 5000; ++i) REQUIRE(big.try_push(i));
  });
  int expect = 0;
  while (expect < 5000) {
    auto v = big.pop_for(std::chrono::milliseconds(100));
    REQUIRE(v.has_value());
    CHECK(*v == expect++);
  }
  prod.join();
}

TEST_CASE("real-time replay runs at the sample rate") {
  syngait::GaitPlan p;
  p.bout_steps = {2, 3, 4, 5, 6, 7, 8};
  p.pause_jitter_s = 0.6;
  const GaitTrial t = syngait::generate_trial(p);
  REQUIRE(t.duration_s() > 25.0);
  OraclePredictor oracle(t, 20, 20);
  RealtimeOptions o;
  o.measure_compute = false;
  const auto r = run_realtime(t, oracle, LoopConfig{}, o);
  MESSAGE("trial " << r.trial_time_s << " s replayed in " << r.wall_time_s << " s");
  CHECK(r.wall_time_s == doctest::Approx(r.trial_time_s).epsilon(0.02));
  CHECK(r.frames_dropped == 0);
  CHECK(r.frames_consumed == t.length());
  CHECK(r.trace.late_count == 0);
  CHECK(r.compute_latency_s.size() == r.trace.ticks.size());

  // With fixed compute time the replay reproduces the simulated trace.
  OraclePredictor again(t, 20, 20);
  const auto sim = run_closed_loop(t, again, LoopConfig{});
  CHECK(events_csv(r.trace) == events_csv(sim));
}
