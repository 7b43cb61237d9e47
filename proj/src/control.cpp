// SPDX-License-Identifier: Apache-2.0
#include "gaitloop/control.hpp"

#include "control_engine.hpp"
#include "gaitloop/csv.hpp"
#include "gaitloop/errors.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <random>
#include <sstream>

namespace gaitloop::control {

void DelayConfig::validate() const {
  for (double v : {t_dm_s, t_dc_s, t_dr_s})
    if (!(v >= 0.0) || !std::isfinite(v)) throw ConfigError("delays must be finite and non-negative");
}

DelayConfig load_delay_config(const std::filesystem::path& path) {
  DelayConfig d;
  std::istringstream in(csv::read_file(path));
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const auto eq = line.find('=');
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      const auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string{} : s.substr(b, e - b + 1);
    };
    if (trim(line).empty()) continue;
    if (eq == std::string::npos)
      throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    double value = 0.0;
    if (!csv::parse_double(trim(line.substr(eq + 1)), value))
      throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": value of " + key + " is not a number");
    if (key == "t_dm_s" || key == "tdm") d.t_dm_s = value;
    else if (key == "t_dc_s" || key == "tdc") d.t_dc_s = value;
    else if (key == "t_dr_s" || key == "tdr") d.t_dr_s = value;
    else throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": unknown key " + key);
  }
  d.validate();
  return d;
}

void check_horizon(std::size_t s, int rate_hz, const DelayConfig& delays) {
  delays.validate();
  const double horizon = static_cast<double>(s) / rate_hz;
  if (!(horizon > delays.total_s())) {
    std::ostringstream msg;
    msg << "prediction horizon must exceed total delay: s/rate = " << horizon << " s, t_d = " << delays.total_s()
        << " s";
    throw ConfigError(msg.str());
  }
}

MotorCommand schedule_command(double event_time_s, double now_s, const DelayConfig& delays, Foot foot,
                              double duration_s) {
  if (event_time_s < now_s) {
    std::ostringstream msg;
    msg << "event at " << event_time_s << " s is already in the past (now " << now_s << " s)";
    throw ConfigError(msg.str());
  }
  MotorCommand c;
  c.foot = foot;
  c.event_time_s = event_time_s;
  c.duration_s = duration_s;
  const double wanted = event_time_s - delays.t_dr_s;
  c.late = wanted < now_s;
  c.issue_time_s = c.late ? now_s : wanted;
  c.actuation_time_s = c.issue_time_s + delays.t_dr_s;
  return c;
}

PlantarFrame ModelPredictor::predict(const Matrix& window, std::int64_t) { return neural::forward(model_, window); }

PlantarFrame OraclePredictor::predict(const Matrix&, std::int64_t newest_frame) {
  const std::int64_t row = newest_frame - trial_.first_frame + static_cast<std::int64_t>(s_);
  if (row < 0 || row >= static_cast<std::int64_t>(trial_.length()))
    throw ConfigError("oracle asked for frame " + std::to_string(newest_frame + static_cast<std::int64_t>(s_)) +
                      " outside the trial");
  return trial_.plantar.row(row).transpose();
}

void LoopConfig::validate(int rate_hz) const {
  delays.validate();
  phase.validate();
  if (loop_hz < 1 || loop_hz > rate_hz || rate_hz % loop_hz != 0)
    throw ConfigError("loop rate " + std::to_string(loop_hz) + " Hz must divide the sample rate " +
                      std::to_string(rate_hz) + " Hz");
  if (!(command_duration_s > 0.0)) throw ConfigError("command duration must be positive");
  if (!(max_match_s > 0.0)) throw ConfigError("max_match_s must be positive");
}

std::vector<AssistEvent> LoopTrace::actuation_events() const {
  std::vector<AssistEvent> out;
  const SampleClock clock(rate_hz);
  for (const auto& c : commands)
    out.push_back({c.foot, clock.frames_round(c.actuation_time_s), c.actuation_time_s, EventSource::Predicted,
                   c.context});
  return out;
}

TimingSummary summarize_timing(const phase::TimingComparison& cmp) {
  TimingSummary s;
  for (const auto& m : cmp.matches) {
    const double a = std::abs(m.dt_s);
    if (m.context == EventContext::Walking) {
      ++s.walking_count;
      s.walking_mean_abs_s += a;
      s.walking_max_abs_s = std::max(s.walking_max_abs_s, a);
    } else {
      ++s.starting_count;
      s.starting_mean_abs_s += a;
      s.starting_max_abs_s = std::max(s.starting_max_abs_s, a);
    }
  }
  if (s.walking_count) s.walking_mean_abs_s /= static_cast<double>(s.walking_count);
  if (s.starting_count) s.starting_mean_abs_s /= static_cast<double>(s.starting_count);
  return s;
}

namespace detail {

LoopEngine::LoopEngine(const GaitTrial& trial, Predictor& predictor, const LoopConfig& config)
    : trial_(trial),
      predictor_(predictor),
      config_(config),
      step_(0),
      dm_(0),
      detector_(trial.layout, config.phase, trial.clock, EventSource::Predicted) {
  const int rate = trial.clock.rate_hz();
  config.validate(rate);
  if (predictor.window() < 1) throw ConfigError("window length must be at least 1");
  check_horizon(predictor.horizon(), rate, config.delays);
  step_ = rate / config.loop_hz;
  dm_ = trial.clock.frames_ceil(config.delays.t_dm_s);
  auto quantize = [&](double t) { return trial.clock.time_of(trial.clock.frames_ceil(t)); };
  eff_ = {quantize(config.delays.t_dm_s), quantize(config.delays.t_dc_s), quantize(config.delays.t_dr_s)};
  // Rounding up can push the total past the horizon even when the raw delays fit.
  check_horizon(predictor.horizon(), rate, eff_);
  trace_.trial_id = trial.subject_id;
  trace_.rate_hz = rate;
  trace_.n = predictor.window();
  trace_.s = predictor.horizon();
  trace_.config = config;
  trace_.effective_delays = eff_;
}

bool LoopEngine::tick_row(std::int64_t d) const {
  const auto n = static_cast<std::int64_t>(trace_.n);
  const auto s = static_cast<std::int64_t>(trace_.s);
  return (d + dm_) % step_ == 0 && d >= n - 1 && d + s < static_cast<std::int64_t>(trial_.length());
}

void LoopEngine::tick(const Matrix& window, std::int64_t d, const std::function<double()>& usable_time) {
  const std::int64_t newest = trial_.first_frame + d;
  TickRecord rec;
  rec.frame = trial_.first_frame + d + dm_;
  rec.delivered_frame = newest;
  rec.raw_time_s = trial_.clock.time_of(newest);
  rec.delivery_time_s = rec.raw_time_s + eff_.t_dm_s;
  rec.target_frame = newest + static_cast<std::int64_t>(trace_.s);
  rec.prediction = predictor_.predict(window, newest);
  if (rec.prediction.size() != trial_.layout.plantar_dim())
    throw DimensionError("predictor returned " + std::to_string(rec.prediction.size()) + " values");
  const double now_s = usable_time();
  rec.usable_time_s = now_s;
  for (const auto& ev : detector_.push(rec.prediction, rec.target_frame)) {
    trace_.predicted_events.push_back(ev);
    if (ev.time_s < now_s) {
      ++trace_.rejected_count;
      continue;
    }
    MotorCommand cmd = schedule_command(ev.time_s, now_s, eff_, ev.foot, config_.command_duration_s);
    cmd.context = ev.context;
    if (cmd.late) ++trace_.late_count;
    trace_.commands.push_back(cmd);
  }
  trace_.ticks.push_back(std::move(rec));
}

LoopTrace LoopEngine::finish() {
  if (trial_.event_truth)
    trace_.truth_events = *trial_.event_truth;
  else
    trace_.truth_events = phase::detect_assist_events(trial_.plantar, trial_.layout, config_.phase, trial_.clock,
                                                      EventSource::Measured, trial_.first_frame);
  trace_.comparison = phase::timing_difference(trace_.actuation_events(), trace_.truth_events, config_.max_match_s);
  trace_.summary = summarize_timing(trace_.comparison);
  return std::move(trace_);
}

}  // namespace detail

LoopTrace run_closed_loop(const GaitTrial& trial, Predictor& predictor, const LoopConfig& config) {
  detail::LoopEngine engine(trial, predictor, config);
  const auto T = static_cast<std::int64_t>(trial.length());
  SlidingWindow window(predictor.window(), trial.layout.imu_dim());
  for (std::int64_t d = 0; d < T; ++d) {
    window.push(trial.imu.row(d).transpose());
    if (!engine.tick_row(d)) continue;
    const double tick_time = trial.clock.time_of(trial.first_frame + d + engine.delivery_frames());
    engine.tick(window.to_matrix(), d, [&] { return tick_time + engine.effective_delays().t_dc_s; });
  }
  return engine.finish();
}

LoopTrace run_closed_loop(const GaitTrial& trial, const neural::Model& model, const LoopConfig& config) {
  model.check_compatible(static_cast<std::size_t>(model.meta.n), static_cast<std::size_t>(model.meta.s), trial.layout,
                         trial.clock.rate_hz());
  ModelPredictor p(model);
  return run_closed_loop(trial, p, config);
}

std::string trace_csv(const LoopTrace& trace, const SensorLayout& layout) {
  std::string out = "frame,delivered_frame,raw_time_s,delivery_time_s,usable_time_s,target_frame";
  for (const auto& c : layout.plantar_columns()) out += ",pred_" + c;
  out += "\n";
  for (const auto& r : trace.ticks) {
    out += std::to_string(r.frame) + "," + std::to_string(r.delivered_frame) + "," + csv::format(r.raw_time_s) + "," +
           csv::format(r.delivery_time_s) + "," + csv::format(r.usable_time_s) + "," + std::to_string(r.target_frame);
    for (Eigen::Index i = 0; i < r.prediction.size(); ++i) out += "," + csv::format(r.prediction[i]);
    out += "\n";
  }
  return out;
}

std::string events_csv(const LoopTrace& trace) {
  std::string out = "kind,foot,frame,time_s,context,issue_time_s,late\n";
  auto ev = [&](std::string_view kind, const AssistEvent& e) {
    out += std::string(kind) + "," + std::string(to_string(e.foot)) + "," + std::to_string(e.frame) + "," +
           csv::format(e.time_s) + "," + std::string(to_string(e.context)) + ",,\n";
  };
  for (const auto& e : trace.truth_events) ev("truth", e);
  for (const auto& e : trace.predicted_events) ev("predicted", e);
  const SampleClock clock(trace.rate_hz);
  for (const auto& c : trace.commands)
    out += std::string("actuation,") + std::string(to_string(c.foot)) + "," +
           std::to_string(clock.frames_round(c.actuation_time_s)) + "," + csv::format(c.actuation_time_s) + "," +
           std::string(to_string(c.context)) + "," + csv::format(c.issue_time_s) + "," + (c.late ? "1" : "0") + "\n";
  return out;
}

std::string summary_json(const LoopTrace& trace) {
  nlohmann::ordered_json j;
  const auto& s = trace.summary;
  j["trial"] = trace.trial_id;
  j["rate_hz"] = trace.rate_hz;
  j["n"] = trace.n;
  j["s"] = trace.s;
  j["loop_hz"] = trace.config.loop_hz;
  j["t_dm_s"] = trace.config.delays.t_dm_s;
  j["t_dc_s"] = trace.config.delays.t_dc_s;
  j["t_dr_s"] = trace.config.delays.t_dr_s;
  j["effective_delays_s"] = {{"t_dm", trace.effective_delays.t_dm_s},
                             {"t_dc", trace.effective_delays.t_dc_s},
                             {"t_dr", trace.effective_delays.t_dr_s}};
  j["walking"] = {{"count", s.walking_count}, {"mean_abs_dt_s", s.walking_mean_abs_s}, {"max_abs_dt_s", s.walking_max_abs_s}};
  j["starting"] = {
      {"count", s.starting_count}, {"mean_abs_dt_s", s.starting_mean_abs_s}, {"max_abs_dt_s", s.starting_max_abs_s}};
  j["late_count"] = trace.late_count;
  j["rejected_count"] = trace.rejected_count;
  j["commands"] = trace.commands.size();
  j["truth_events"] = trace.truth_events.size();
  j["unmatched_actuations"] = trace.comparison.unmatched_a;
  j["unmatched_truth"] = trace.comparison.unmatched_b;
  return j.dump(2) + "\n";
}

namespace {
volatile double g_sink = 0.0;
}  // namespace

std::vector<LatencyRow> measure_inference_latency(const neural::ModelShape& shape, const std::vector<std::size_t>& ns,
                                                  std::size_t calls, std::size_t repetitions, std::uint64_t seed) {
  if (repetitions < 1 || calls < repetitions) throw ConfigError("need at least one call per repetition");
  std::vector<LatencyRow> rows;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss;
  const std::size_t per_rep = calls / repetitions;
  for (std::size_t n : ns) {
    if (n < 1) throw ConfigError("window length must be at least 1");
    neural::ModelMeta meta;
    meta.n = static_cast<int>(n);
    neural::Model model(shape, meta);
    neural::init_params(model, rng());
    std::vector<Matrix> windows(8, Matrix(static_cast<Eigen::Index>(n), shape.input));
    for (auto& w : windows)
      for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = gauss(rng);
    double sink = 0.0;
    for (std::size_t i = 0; i < 20; ++i) sink += neural::forward(model, windows[i % windows.size()])[0];
    std::vector<double> means;
    for (std::size_t r = 0; r < repetitions; ++r) {
      const auto t0 = std::chrono::steady_clock::now();
      for (std::size_t i = 0; i < per_rep; ++i) sink += neural::forward(model, windows[i % windows.size()])[0];
      means.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() /
                      static_cast<double>(per_rep));
    }
    LatencyRow row;
    row.n = n;
    row.calls = per_rep * repetitions;
    for (double m : means) row.mean_s += m;
    row.mean_s /= static_cast<double>(means.size());
    for (double m : means) row.stddev_s += (m - row.mean_s) * (m - row.mean_s);
    row.stddev_s = std::sqrt(row.stddev_s / static_cast<double>(means.size()));
    row.cv = row.mean_s > 0.0 ? row.stddev_s / row.mean_s : 0.0;
    rows.push_back(row);
    g_sink = sink;
  }
  return rows;
}

std::string latency_csv(const std::vector<LatencyRow>& rows) {
  std::string out = "n,calls,mean_s,stddev_s,cv\n";
  for (const auto& r : rows)
    out += std::to_string(r.n) + "," + std::to_string(r.calls) + "," + csv::format(r.mean_s) + "," +
           csv::format(r.stddev_s) + "," + csv::format(r.cv) + "\n";
  return out;
}

}  // namespace gaitloop::control
