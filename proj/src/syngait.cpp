// SPDX-License-Identifier: Apache-2.0
#include "gaitloop/syngait.hpp"

#include "gaitloop/errors.hpp"
#include "gaitloop/phase.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

namespace gaitloop::syngait {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kGravity = 9.81;
// Force level the stance waveform crosses at phase boundaries; matches the
// default heel/toe thresholds of the phase classifier.
constexpr double kContactN = 50.0;
constexpr double kToeReleaseN = kContactN + 10.0;
constexpr double kToeDuringHeelN = 0.8 * kContactN;
constexpr double kBlendS = 0.25;

double smooth(double x) {
  x = std::clamp(x, 0.0, 1.0);
  return 0.5 * (1.0 - std::cos(kPi * x));
}
double ramp(double a, double b, double x) { return a + (b - a) * smooth(x); }

std::mt19937_64 make_rng(std::uint64_t seed, std::uint32_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), stream};
  return std::mt19937_64(seq);
}

struct Levels {
  double plateau, standing, heel_contact, heel_peak, toe_peak;
  explicit Levels(double w)
      : plateau(w / 3.0),
        standing(w / 6.0),
        heel_contact(std::max(0.15 * w, kContactN + 30.0)),
        heel_peak(0.55 * w),
        toe_peak(0.5 * w) {}
};

// Gait state of one leg at one instant.
struct LegState {
  bool swing = false;
  double v = 0.0;       // swing progress
  double u = 0.45;      // stance coordinate (0 contact, 0.45 equalized, 1 toe-off)
  double level = 0.0;   // plateau level
  double load = 0.0;    // (level - standing) / (plateau - standing)
  bool middle = false;  // extended stance between bouts
  double since_contact = -1.0;
};

class FootModel {
 public:
  FootModel(const GaitPlan& plan, const Timeline& tl, Foot foot) : plan_(plan), levels_(plan.body_weight_N) {
    for (const auto& s : tl.swings)
      if (s.foot == foot) swings_.push_back(s);
    stance_frac_ = 0.5 + plan.double_support_fraction / 2.0;
  }

  LegState state(double t) const {
    LegState st;
    const auto it = std::upper_bound(swings_.begin(), swings_.end(), t,
                                     [](double x, const SwingInterval& s) { return x < s.toe_off_s; });
    const auto i = static_cast<std::size_t>(it - swings_.begin());
    if (i > 0 && t < swings_[i - 1].landing_s) {
      const auto& s = swings_[i - 1];
      st.swing = true;
      st.v = (t - s.toe_off_s) / (s.landing_s - s.toe_off_s);
      return st;
    }
    const SwingInterval* prev = i > 0 ? &swings_[i - 1] : nullptr;
    const SwingInterval* next = i < swings_.size() ? &swings_[i] : nullptr;
    st.level = levels_.plateau;
    st.load = 1.0;
    if (prev) st.since_contact = t - prev->landing_s;

    if (prev && next && prev->bout == next->bout) {
      st.u = (t - prev->landing_s) / (next->toe_off_s - prev->landing_s);
      return st;
    }
    const double in_len = prev ? 0.45 * stance_frac_ * prev->period_s : 0.0;
    const double out_len = next ? 0.55 * stance_frac_ * next->period_s : 0.0;
    if (prev && t < prev->landing_s + in_len) {
      st.u = 0.45 * (t - prev->landing_s) / in_len;
      return st;
    }
    if (next && t >= next->toe_off_s - out_len) {
      st.u = 0.45 + 0.55 * (t - (next->toe_off_s - out_len)) / out_len;
      return st;
    }
    // Extended stance: relax to the standing distribution and back.
    st.middle = true;
    st.u = 0.45;
    const double ms = prev ? prev->landing_s + in_len : -1e300;
    const double me = next ? next->toe_off_s - out_len : 1e300;
    const double blend = (prev && next) ? std::min(kBlendS, 0.5 * (me - ms)) : kBlendS;
    double level = levels_.standing;
    if (prev && t - ms < blend) level = ramp(levels_.plateau, levels_.standing, (t - ms) / blend);
    if (next && me - t < blend) level = ramp(levels_.standing, levels_.plateau, (t - (me - blend)) / blend);
    st.level = level;
    st.load = (level - levels_.standing) / (levels_.plateau - levels_.standing);
    return st;
  }

  FootSample plantar(double t) const {
    const LegState st = state(t);
    FootSample out;
    if (st.swing) {
      out.raw = GaitPhase::Swing;
      return out;
    }
    const double u = st.u;
    const double L = st.level;
    const auto& lv = levels_;
    if (u < 0.3)
      out.heel = ramp(lv.heel_contact, lv.heel_peak, u / 0.3);
    else if (u < 0.45)
      out.heel = ramp(lv.heel_peak, L, (u - 0.3) / 0.15);
    else if (u < 0.6)
      out.heel = ramp(L, kContactN, (u - 0.45) / 0.15);
    else if (u < 0.7)
      out.heel = ramp(kContactN, 0.0, (u - 0.6) / 0.1);

    if (u < 0.3)
      out.mid = ramp(0.0, L, u / 0.3);
    else if (u < 0.6)
      out.mid = L;
    else
      out.mid = ramp(L, 0.0, (u - 0.6) / 0.4);

    if (u < 0.3)
      out.toe = kToeDuringHeelN * smooth(u / 0.3);
    else if (u < 0.45)
      out.toe = ramp(kToeDuringHeelN, L, (u - 0.3) / 0.15);
    else if (u < 0.6)
      out.toe = L;
    else if (u < 0.85)
      out.toe = ramp(L, lv.toe_peak, (u - 0.6) / 0.25);
    else
      out.toe = ramp(lv.toe_peak, kToeReleaseN, (u - 0.85) / 0.15);

    if (st.middle)
      out.raw = GaitPhase::Support;
    else if (u < 0.3)
      out.raw = GaitPhase::HeelStrike;
    else if (u < 0.6)
      out.raw = GaitPhase::Support;
    else
      out.raw = GaitPhase::ToeOff;
    return out;
  }

  // Shank kinematics [ax, ay, az, gx, gy, gz] at time t.
  std::array<double, 6> kinematics(double t) const {
    const LegState st = state(t);
    constexpr double kSwingGyro = 5.0, kStanceGyro = 1.5;
    std::array<double, 6> k{0.0, 0.0, kGravity, 0.0, 0.0, 0.0};
    if (st.swing) {
      const double v = st.v;
      const double c = std::cos(0.5 * kPi * v);
      k[0] = 4.0 * std::sin(2 * kPi * v);
      k[1] = 0.5 * std::sin(2 * kPi * v);
      k[2] = kGravity + 3.0 * std::sin(kPi * v);
      k[3] = 0.6 * std::sin(kPi * v);
      k[4] = 0.4 + 0.3 * std::sin(2 * kPi * v);
      k[5] = kSwingGyro * std::sin(kPi * v) - kStanceGyro * c * c;
      return k;
    }
    const double u = st.u;
    k[4] = 0.4 * st.load;
    if (!st.middle) {
      if (u < 0.45) {
        k[5] = -0.5 * kStanceGyro * std::sin(kPi * u / 0.45);
      } else {
        const double x = (u - 0.45) / 0.55;
        k[5] = -kStanceGyro * smooth(x);
        k[0] = -0.8 * std::sin(kPi * x);
      }
    }
    if (st.since_contact >= 0.0 && st.since_contact < 0.25) {
      const double tau = st.since_contact;
      const double kernel = std::exp(-tau / 0.03) * std::sin(2 * kPi * 15.0 * tau);
      k[0] += 6.0 * kernel;
      k[2] += 10.0 * kernel;
    }
    return k;
  }

 private:
  const GaitPlan& plan_;
  Levels levels_;
  double stance_frac_;
  std::vector<SwingInterval> swings_;
};

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b, std::uint64_t c) {
  std::seed_seq seq{static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(a >> 32),
                    static_cast<std::uint32_t>(b), static_cast<std::uint32_t>(c)};
  std::array<std::uint32_t, 2> out{};
  seq.generate(out.begin(), out.end());
  return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

}  // namespace

void GaitPlan::validate() const {
  layout.validate();
  if (layout.cells_per_foot != 3) throw ConfigError("generator supports 3 plantar cells per foot");
  if (!(step_period_s > 0)) throw ConfigError("step_period_s must be positive");
  if (!(double_support_fraction > 0 && double_support_fraction < 0.5))
    throw ConfigError("double_support_fraction must be in (0, 0.5)");
  if (!(noise_std_imu >= 0) || !(noise_std_plantar >= 0)) throw ConfigError("noise std must be non-negative");
  if (!(period_jitter >= 0 && period_jitter < 0.5)) throw ConfigError("period_jitter must be in [0, 0.5)");
  if (!(pause_s >= 0.5)) throw ConfigError("pause_s must be at least 0.5 s");
  if (!(pause_jitter_s >= 0)) throw ConfigError("pause_jitter_s must be non-negative");
  if (!(lead_in_s >= 0) || !(lead_out_s >= 0)) throw ConfigError("lead-in/out must be non-negative");
  if (!(imu_lead_s >= 0)) throw ConfigError("imu_lead_s must be non-negative");
  if (!(body_weight_N >= 400.0)) throw ConfigError("body_weight_N must be at least 400 N");
  if (rate_hz <= 0) throw ConfigError("rate_hz must be positive");
  for (int n : bout_steps)
    if (n < 1) throw ConfigError("every bout needs at least one step");
}

Timeline build_timeline(const GaitPlan& plan) {
  plan.validate();
  auto rng = make_rng(plan.rng_seed, 1);
  std::uniform_real_distribution<double> jitter(-plan.period_jitter, plan.period_jitter);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double stance_frac = 0.5 + plan.double_support_fraction / 2.0;
  const double swing_frac = 0.5 - plan.double_support_fraction / 2.0;

  Timeline tl;
  double t = plan.lead_in_s;
  double last_landing = plan.lead_in_s;
  for (std::size_t b = 0; b < plan.bout_steps.size(); ++b) {
    if (b > 0) t = last_landing + plan.pause_s + plan.pause_jitter_s * unit(rng);
    double period = plan.step_period_s * (1.0 + jitter(rng));
    double toe_off = t + 0.55 * stance_frac * period;
    Foot foot = plan.start_leg;
    for (int k = 0; k < plan.bout_steps[b]; ++k) {
      if (k > 0) period = plan.step_period_s * (1.0 + jitter(rng));
      const double swing = swing_frac * period;
      tl.swings.push_back({foot, toe_off, toe_off + swing, period, static_cast<int>(b)});
      last_landing = toe_off + swing;
      toe_off = last_landing + 0.5 * plan.double_support_fraction * period;
      foot = other(foot);
    }
  }
  tl.end_s = last_landing + plan.lead_out_s;
  return tl;
}

FootSample foot_sample(const GaitPlan& plan, const Timeline& tl, Foot foot, double t) {
  return FootModel(plan, tl, foot).plantar(t);
}

GaitTrial generate_trial(const GaitPlan& plan) {
  const Timeline tl = build_timeline(plan);
  const SampleClock clock(plan.rate_hz);
  const auto T = static_cast<Eigen::Index>(std::floor(tl.end_s * plan.rate_hz + 1e-9)) + 1;
  const SensorLayout& layout = plan.layout;
  const std::array<FootModel, 2> feet{FootModel(plan, tl, Foot::Left), FootModel(plan, tl, Foot::Right)};

  GaitTrial trial;
  trial.clock = clock;
  trial.layout = layout;
  trial.body_weight_N = plan.body_weight_N;
  trial.subject_id = "synthetic";
  trial.imu.resize(T, layout.imu_dim());
  trial.plantar.resize(T, layout.plantar_dim());
  std::vector<FootPhases> raw(static_cast<std::size_t>(T));

  for (Eigen::Index f = 0; f < T; ++f) {
    const double t = clock.time_of(f);
    for (Foot foot : kFeet) {
      const auto s = feet[static_cast<std::size_t>(foot)].plantar(t);
      trial.plantar(f, layout.cell(foot, 0)) = s.heel;
      trial.plantar(f, layout.cell(foot, 1)) = s.mid;
      trial.plantar(f, layout.cell(foot, 2)) = s.toe;
      raw[static_cast<std::size_t>(f)][static_cast<std::size_t>(foot)] = s.raw;
    }
    for (int i = 0; i < layout.imu_count; ++i) {
      // Sensor i sits on the left shank for even i, right shank for odd i.
      const FootModel& leg = feet[static_cast<std::size_t>(i % 2)];
      const double gain = 1.0 + 0.1 * (i / 2);
      const auto k = leg.kinematics(t + plan.imu_lead_s);
      for (int c = 0; c < 6; ++c) trial.imu(f, 6 * i + c) = gain * k[static_cast<std::size_t>(c)];
    }
  }

  // Standing overlay, same rule the classifier applies.
  const phase::PhaseConfig pc;
  const std::int64_t standing_frames = clock.frames_ceil(pc.standing_min_s);
  std::vector<FootPhases> labels(raw.size());
  std::optional<std::int64_t> last_change;
  for (std::size_t f = 0; f < raw.size(); ++f) {
    if (f > 0 && raw[f] != raw[f - 1]) last_change = static_cast<std::int64_t>(f);
    const bool loaded = raw[f][0] != GaitPhase::Swing && raw[f][1] != GaitPhase::Swing;
    const bool quiet = !last_change || static_cast<std::int64_t>(f) - *last_change >= standing_frames;
    labels[f] = (loaded && quiet) ? FootPhases{GaitPhase::Standing, GaitPhase::Standing} : raw[f];
  }

  auto rng = make_rng(plan.rng_seed, 2);
  std::normal_distribution<double> gauss(0.0, 1.0);
  if (plan.noise_std_imu > 0) {
    const Vector rms = (trial.imu.array().square().colwise().mean()).sqrt().transpose();
    for (Eigen::Index f = 0; f < T; ++f)
      for (Eigen::Index c = 0; c < trial.imu.cols(); ++c) trial.imu(f, c) += plan.noise_std_imu * rms[c] * gauss(rng);
  }
  if (plan.noise_std_plantar > 0) {
    for (Eigen::Index f = 0; f < T; ++f)
      for (Eigen::Index c = 0; c < trial.plantar.cols(); ++c)
        trial.plantar(f, c) = std::max(0.0, trial.plantar(f, c) + plan.noise_std_plantar * gauss(rng));
  }

  trial.event_truth = phase::events_from_labels(labels, clock, pc, EventSource::Truth);
  trial.phase_truth = std::move(labels);
  trial.validate();
  return trial;
}

std::vector<PlannedTrial> plan_corpus(const CorpusOptions& o) {
  if (o.subjects < 1) throw ConfigError("corpus needs at least one subject");
  if (o.trials_per_subject < 1) throw ConfigError("corpus needs at least one trial per subject");
  std::vector<PlannedTrial> out;
  const int n_random = o.trials_per_subject / 5;
  for (int s = 0; s < o.subjects; ++s) {
    auto subject_rng = make_rng(mix_seed(o.seed, 1000 + static_cast<std::uint64_t>(s), 0), 3);
    const double mass_kg = std::uniform_real_distribution<double>(60.0, 85.0)(subject_rng);
    const double weight = mass_kg * kGravity;
    char sid[16];
    std::snprintf(sid, sizeof(sid), "s%02d", s + 1);
    for (int j = 0; j < o.trials_per_subject; ++j) {
      GaitPlan plan;
      plan.body_weight_N = weight;
      plan.noise_std_imu = o.noise_std_imu;
      plan.noise_std_plantar = o.noise_std_plantar;
      plan.rate_hz = o.rate_hz;
      plan.rng_seed = mix_seed(o.seed, static_cast<std::uint64_t>(s), static_cast<std::uint64_t>(j));
      plan.start_leg = j % 2 == 0 ? Foot::Left : Foot::Right;
      const bool random = j >= o.trials_per_subject - n_random;
      auto trial_rng = make_rng(plan.rng_seed, 4);
      if (random) {
        plan.pause_s = 1.0;
        plan.pause_jitter_s = 2.0;
        std::uniform_int_distribution<int> steps(2, 8);
        double est = plan.lead_in_s + plan.lead_out_s;
        while (est < 28.0) {
          const int n = steps(trial_rng);
          plan.bout_steps.push_back(n);
          est += 0.5 * plan.step_period_s * n + 0.4 + plan.pause_s + 0.5 * plan.pause_jitter_s;
        }
      } else {
        plan.pause_s = 1.2;
        plan.pause_jitter_s = 0.6;
        for (int n = 2; n <= 8; ++n) plan.bout_steps.push_back(n);
      }
      PlannedTrial pt;
      char tid[16];
      std::snprintf(tid, sizeof(tid), "t%02d", j + 1);
      pt.entry.id = std::string(sid) + "_" + tid;
      pt.entry.path = std::string(sid) + "/" + tid + ".csv";
      pt.entry.subject_id = sid;
      pt.entry.body_weight_N = weight;
      pt.entry.kind = random ? TrialKind::Random : TrialKind::Patterned;
      pt.entry.native_rate_hz = o.rate_hz;
      pt.plan = std::move(plan);
      out.push_back(std::move(pt));
    }
  }
  return out;
}

ingest::CorpusManifest generate_corpus(const CorpusOptions& o, const std::filesystem::path& out_dir) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec || !std::filesystem::is_directory(out_dir))
    throw IoError("cannot create output directory " + out_dir.string() + (ec ? ": " + ec.message() : ""));

  ingest::CorpusManifest manifest;
  manifest.rate_hz = o.rate_hz;
  manifest.seed = o.seed;
  for (const auto& pt : plan_corpus(o)) {
    GaitTrial trial = generate_trial(pt.plan);
    trial.subject_id = pt.entry.subject_id;
    trial.kind = pt.entry.kind;
    ingest::write_trial(trial, out_dir / pt.entry.path);
    manifest.trials.push_back(pt.entry);
  }
  ingest::save_manifest(manifest, out_dir / "manifest.json");
  return manifest;
}

}  // namespace gaitloop::syngait
