// SPDX-License-Identifier: Apache-2.0
#include "gaitloop/ingest.hpp"

#include "gaitloop/csv.hpp"
#include "gaitloop/errors.hpp"
#include "gaitloop/phase.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

namespace gaitloop::ingest {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string cell_error(std::size_t line, const std::string& column, const std::string& what) {
  return "row " + std::to_string(line) + ", column '" + column + "': " + what;
}

bool valid_phase_code(double v) { return v >= 0 && v <= 4 && v == std::floor(v); }

// Linear interpolation of `values` (rows at times `t`) onto `grid`.
Matrix interpolate_rows(const std::vector<double>& t, const Matrix& values, const std::vector<double>& grid) {
  Matrix out(static_cast<Eigen::Index>(grid.size()), values.cols());
  std::size_t k = 0;
  for (std::size_t g = 0; g < grid.size(); ++g) {
    const double x = grid[g];
    while (k + 2 < t.size() && t[k + 1] <= x) ++k;
    const double w = std::clamp((x - t[k]) / (t[k + 1] - t[k]), 0.0, 1.0);
    out.row(static_cast<Eigen::Index>(g)) =
        (1.0 - w) * values.row(static_cast<Eigen::Index>(k)) + w * values.row(static_cast<Eigen::Index>(k + 1));
  }
  return out;
}

}  // namespace

GaitTrial load_trial(const fs::path& path, const SensorLayout& layout) {
  layout.validate();
  std::ifstream in(path);
  if (!in) throw IoError("cannot open trial file " + path.string());

  std::string line;
  if (!std::getline(in, line)) throw DataError(path.string() + ": empty file");
  const auto header_fields = csv::split(line);
  std::vector<std::string> header(header_fields.begin(), header_fields.end());

  std::vector<std::string> expected{"time_s"};
  for (auto& c : layout.imu_columns()) expected.push_back(c);
  for (auto& c : layout.plantar_columns()) expected.push_back(c);
  const std::size_t base_cols = expected.size();
  bool has_phase = false;
  if (header.size() == base_cols + 2) {
    expected.push_back("phase_l");
    expected.push_back("phase_r");
    has_phase = true;
  }
  if (header != expected) {
    for (std::size_t i = 0; i < std::max(header.size(), expected.size()); ++i) {
      const std::string got = i < header.size() ? header[i] : "<missing>";
      const std::string want = i < expected.size() ? expected[i] : "<none>";
      if (got != want)
        throw DataError(path.string() + ": malformed header at column " + std::to_string(i + 1) + ": expected '" +
                        want + "', found '" + got + "'");
    }
  }

  const int d_imu = layout.imu_dim();
  const int d_pl = layout.plantar_dim();
  std::vector<double> times;
  std::vector<double> flat;
  std::vector<FootPhases> phases;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto fields = csv::split(line);
    if (fields.size() != expected.size())
      throw DataError(path.string() + ": row " + std::to_string(line_no) + " has " + std::to_string(fields.size()) +
                      " fields, expected " + std::to_string(expected.size()));
    std::vector<double> row(fields.size());
    for (std::size_t c = 0; c < fields.size(); ++c) {
      if (!csv::parse_double(fields[c], row[c]) || !std::isfinite(row[c]))
        throw DataError(path.string() + ": " + cell_error(line_no, expected[c], "not a finite number"));
    }
    if (!times.empty() && !(row[0] > times.back()))
      throw DataError(path.string() + ": " + cell_error(line_no, "time_s", "time is not strictly increasing"));
    for (int c = 0; c < d_pl; ++c) {
      const std::size_t col = 1 + static_cast<std::size_t>(d_imu + c);
      if (row[col] < 0.0) throw DataError(path.string() + ": " + cell_error(line_no, expected[col], "negative force"));
    }
    times.push_back(row[0]);
    flat.insert(flat.end(), row.begin() + 1, row.begin() + static_cast<std::ptrdiff_t>(base_cols));
    if (has_phase) {
      FootPhases p{};
      for (int f = 0; f < 2; ++f) {
        const double v = row[base_cols + static_cast<std::size_t>(f)];
        if (!valid_phase_code(v))
          throw DataError(path.string() + ": " + cell_error(line_no, expected[base_cols + f], "invalid phase code"));
        p[static_cast<std::size_t>(f)] = static_cast<GaitPhase>(static_cast<int>(v));
      }
      phases.push_back(p);
    }
  }
  if (times.empty()) throw DataError(path.string() + ": no data rows");

  const auto T = static_cast<Eigen::Index>(times.size());
  const int width = d_imu + d_pl;
  Eigen::Map<const Matrix> all(flat.data(), T, width);

  // Infer the native rate from the median sample interval.
  int rate = 100;
  bool uniform = true;
  if (times.size() >= 2) {
    std::vector<double> dts(times.size() - 1);
    for (std::size_t i = 1; i < times.size(); ++i) dts[i - 1] = times[i] - times[i - 1];
    std::vector<double> sorted = dts;
    std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(sorted.size() / 2), sorted.end());
    const double med = sorted[sorted.size() / 2];
    rate = std::max(1, static_cast<int>(std::lround(1.0 / med)));
    const double period = 1.0 / rate;
    for (std::size_t i = 0; i < times.size(); ++i) {
      const double expected_t = times[0] + static_cast<double>(i) * period;
      if (std::abs(times[i] - expected_t) > 1e-6 * std::max(1.0, std::abs(times[i]))) {
        uniform = false;
        break;
      }
    }
  }

  GaitTrial trial;
  trial.clock = SampleClock(rate);
  trial.layout = layout;
  trial.body_weight_N = 1.0;
  trial.subject_id = path.stem().string();
  trial.first_frame = trial.clock.frames_round(times[0]);

  if (uniform) {
    trial.imu = all.leftCols(d_imu);
    trial.plantar = all.rightCols(d_pl);
    if (has_phase) trial.phase_truth = std::move(phases);
  } else {
    const std::int64_t f0 = trial.clock.frames_ceil(times.front());
    const auto f1 = static_cast<std::int64_t>(std::floor(times.back() * rate + 1e-9));
    std::vector<double> grid;
    for (std::int64_t f = f0; f <= f1; ++f) grid.push_back(trial.clock.time_of(f));
    if (grid.empty()) throw DataError(path.string() + ": time span shorter than one sample period");
    const Matrix full = interpolate_rows(times, all, grid);
    trial.first_frame = f0;
    trial.imu = full.leftCols(d_imu);
    trial.plantar = full.rightCols(d_pl);
    if (has_phase) {
      std::vector<FootPhases> resampled;
      std::size_t k = 0;
      for (double g : grid) {
        while (k + 1 < times.size() && std::abs(times[k + 1] - g) <= std::abs(times[k] - g)) ++k;
        resampled.push_back(phases[k]);
      }
      trial.phase_truth = std::move(resampled);
    }
  }
  if (trial.phase_truth)
    trial.event_truth = phase::events_from_labels(*trial.phase_truth, trial.clock, phase::PhaseConfig{},
                                                  EventSource::Truth, trial.first_frame);
  trial.validate();
  return trial;
}

std::string trial_to_csv(const GaitTrial& trial) {
  trial.validate();
  std::string out;
  std::vector<std::string> header{"time_s"};
  for (auto& c : trial.layout.imu_columns()) header.push_back(c);
  for (auto& c : trial.layout.plantar_columns()) header.push_back(c);
  const bool phases = trial.phase_truth.has_value();
  if (phases) {
    header.emplace_back("phase_l");
    header.emplace_back("phase_r");
  }
  out += csv::join(header);
  out += '\n';
  for (std::size_t r = 0; r < trial.length(); ++r) {
    const auto ri = static_cast<Eigen::Index>(r);
    out += csv::format(trial.time_s(r));
    for (Eigen::Index c = 0; c < trial.imu.cols(); ++c) {
      out += ',';
      out += csv::format(trial.imu(ri, c));
    }
    for (Eigen::Index c = 0; c < trial.plantar.cols(); ++c) {
      out += ',';
      out += csv::format(trial.plantar(ri, c));
    }
    if (phases) {
      for (auto p : (*trial.phase_truth)[r]) {
        out += ',';
        out += std::to_string(static_cast<int>(p));
      }
    }
    out += '\n';
  }
  return out;
}

void write_trial(const GaitTrial& trial, const fs::path& path) { csv::write_atomic(path, trial_to_csv(trial)); }

GaitTrial resample(const GaitTrial& trial, int target_hz) {
  if (target_hz <= 0) throw ConfigError("target rate must be positive");
  if (trial.length() < 2) throw DataError("resample needs at least two samples");
  const std::int64_t rate = trial.clock.rate_hz();
  const std::int64_t tgt = target_hz;
  const std::int64_t first = trial.first_frame;
  const std::int64_t last = first + static_cast<std::int64_t>(trial.length()) - 1;

  // Target frame j sits at source position (j*rate - first*tgt) / tgt, kept as
  // an exact rational so that resampling at the native rate is the identity.
  auto floor_div = [](std::int64_t a, std::int64_t b) { return a >= 0 ? a / b : -((-a + b - 1) / b); };
  const std::int64_t j0 = -floor_div(-first * tgt, rate);  // ceil(first * tgt / rate)
  const std::int64_t j1 = floor_div(last * tgt, rate);
  const auto count = static_cast<std::size_t>(std::max<std::int64_t>(0, j1 - j0 + 1));

  GaitTrial out = trial;
  out.clock = SampleClock(target_hz);
  out.first_frame = j0;
  out.imu.resize(static_cast<Eigen::Index>(count), trial.imu.cols());
  out.plantar.resize(static_cast<Eigen::Index>(count), trial.plantar.cols());
  std::vector<FootPhases> phases;
  const auto T = static_cast<std::int64_t>(trial.length());
  for (std::size_t g = 0; g < count; ++g) {
    const std::int64_t j = j0 + static_cast<std::int64_t>(g);
    const std::int64_t num = j * rate - first * tgt;  // source position * tgt, >= 0
    std::int64_t i = num / tgt;
    std::int64_t rem = num % tgt;
    if (i >= T - 1) {
      i = T - 2;
      rem = tgt;
    }
    const double w = static_cast<double>(rem) / static_cast<double>(tgt);
    const auto gi = static_cast<Eigen::Index>(g);
    const auto ii = static_cast<Eigen::Index>(i);
    if (rem == 0) {
      out.imu.row(gi) = trial.imu.row(ii);
      out.plantar.row(gi) = trial.plantar.row(ii);
    } else {
      out.imu.row(gi) = (1.0 - w) * trial.imu.row(ii) + w * trial.imu.row(ii + 1);
      out.plantar.row(gi) = (1.0 - w) * trial.plantar.row(ii) + w * trial.plantar.row(ii + 1);
    }
    if (trial.phase_truth) {
      const std::int64_t nearest = std::min<std::int64_t>(T - 1, (2 * num + tgt) / (2 * tgt));
      phases.push_back((*trial.phase_truth)[static_cast<std::size_t>(nearest)]);
    }
  }
  if (trial.phase_truth) out.phase_truth = std::move(phases);
  if (trial.event_truth) {
    std::vector<AssistEvent> ev;
    for (AssistEvent e : *trial.event_truth) {
      e.frame = out.clock.frames_round(e.time_s);
      e.time_s = out.clock.time_of(e.frame);
      ev.push_back(e);
    }
    out.event_truth = std::move(ev);
  }
  return out;
}

std::vector<std::size_t> pair_anchors(std::size_t T, std::size_t n, std::size_t s, std::size_t stride) {
  if (n == 0) throw ConfigError("window length n must be >= 1");
  if (stride == 0) throw ConfigError("stride must be >= 1");
  std::vector<std::size_t> anchors;
  if (T < n + s) return anchors;
  for (std::size_t t = n - 1; t + s < T; t += stride) anchors.push_back(t);
  return anchors;
}

std::vector<WindowPair> make_pairs(const GaitTrial& trial, std::size_t n, std::size_t s, std::size_t stride) {
  std::vector<WindowPair> pairs;
  for (std::size_t t : pair_anchors(trial.length(), n, s, stride)) {
    WindowPair p;
    p.input = window_rows(trial.imu, t, n);
    p.target = trial.plantar.row(static_cast<Eigen::Index>(t + s)).transpose();
    p.anchor = t;
    pairs.push_back(std::move(p));
  }
  return pairs;
}

std::vector<std::string> CorpusManifest::subjects() const {
  std::vector<std::string> out;
  for (const auto& t : trials)
    if (std::find(out.begin(), out.end(), t.subject_id) == out.end()) out.push_back(t.subject_id);
  return out;
}

std::vector<ManifestEntry> CorpusManifest::trials_of(const std::string& subject) const {
  std::vector<ManifestEntry> out;
  for (const auto& t : trials)
    if (t.subject_id == subject) out.push_back(t);
  return out;
}

const ManifestEntry& CorpusManifest::find(const std::string& trial_id) const {
  for (const auto& t : trials)
    if (t.id == trial_id) return t;
  throw ConfigError("trial '" + trial_id + "' not in manifest");
}

CorpusManifest load_manifest(const fs::path& path) {
  json j;
  try {
    j = json::parse(csv::read_file(path));
  } catch (const json::exception& e) {
    throw DataError(path.string() + ": invalid manifest JSON: " + e.what());
  }
  try {
    CorpusManifest m;
    m.format_version = j.at("format_version").get<int>();
    if (m.format_version != 1)
      throw DataError(path.string() + ": unsupported manifest version " + std::to_string(m.format_version));
    m.rate_hz = j.at("rate_hz").get<int>();
    m.layout.imu_count = j.at("imu_count").get<int>();
    m.layout.cells_per_foot = j.at("cells_per_foot").get<int>();
    m.seed = j.value("seed", std::uint64_t{0});
    for (const auto& t : j.at("trials")) {
      ManifestEntry e;
      e.id = t.at("id").get<std::string>();
      e.path = t.at("path").get<std::string>();
      e.subject_id = t.at("subject").get<std::string>();
      e.body_weight_N = t.at("body_weight_N").get<double>();
      e.kind = trial_kind_from_string(t.at("kind").get<std::string>());
      e.native_rate_hz = t.value("native_rate_hz", m.rate_hz);
      if (!(e.body_weight_N > 0)) throw DataError(path.string() + ": trial " + e.id + " has non-positive body weight");
      m.trials.push_back(std::move(e));
    }
    m.layout.validate();
    return m;
  } catch (const json::exception& e) {
    throw DataError(path.string() + ": malformed manifest: " + e.what());
  }
}

std::string manifest_to_json(const CorpusManifest& m) {
  json j;
  j["format_version"] = m.format_version;
  j["rate_hz"] = m.rate_hz;
  j["imu_count"] = m.layout.imu_count;
  j["cells_per_foot"] = m.layout.cells_per_foot;
  j["seed"] = m.seed;
  j["trials"] = json::array();
  for (const auto& t : m.trials) {
    j["trials"].push_back({{"id", t.id},
                           {"path", t.path},
                           {"subject", t.subject_id},
                           {"body_weight_N", t.body_weight_N},
                           {"kind", std::string(to_string(t.kind))},
                           {"native_rate_hz", t.native_rate_hz}});
  }
  return j.dump(2) + "\n";
}

void save_manifest(const CorpusManifest& m, const fs::path& path) { csv::write_atomic(path, manifest_to_json(m)); }

GaitTrial load_corpus_trial(const CorpusManifest& manifest, const fs::path& manifest_dir, const ManifestEntry& entry) {
  GaitTrial t = load_trial(manifest_dir / entry.path, manifest.layout);
  t.subject_id = entry.subject_id;
  t.body_weight_N = entry.body_weight_N;
  t.kind = entry.kind;
  if (t.clock.rate_hz() != manifest.rate_hz) t = resample(t, manifest.rate_hz);
  return t;
}

DatasetSplit split_corpus(const std::vector<ManifestEntry>& trials, std::uint64_t seed) {
  std::map<std::string, std::vector<const ManifestEntry*>> by_subject;
  for (const auto& t : trials) by_subject[t.subject_id].push_back(&t);

  DatasetSplit split;
  for (const auto& [subject, list] : by_subject) {
    if (list.size() < 3)
      throw ConfigError("subject '" + subject + "' has " + std::to_string(list.size()) +
                        " trials; at least 3 are required for a train/test split");
    std::uint64_t h = 1469598103934665603ull;
    for (char c : subject) h = (h ^ static_cast<unsigned char>(c)) * 1099511628211ull;
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(h), static_cast<std::uint32_t>(h >> 32)};
    std::mt19937_64 rng(seq);

    const std::size_t n_test =
        list.size() == 10 ? 2 : std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(0.2 * list.size())));
    std::vector<const ManifestEntry*> patterned, random, other;
    for (const auto* t : list) {
      if (t->kind == TrialKind::Patterned)
        patterned.push_back(t);
      else if (t->kind == TrialKind::Random)
        random.push_back(t);
      else
        other.push_back(t);
    }
    std::vector<const ManifestEntry*> test;
    auto take = [&](std::vector<const ManifestEntry*>& pool) {
      std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
      const std::size_t k = pick(rng);
      test.push_back(pool[k]);
      pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(k));
    };
    if (n_test >= 2 && !patterned.empty() && !random.empty()) {
      take(patterned);
      take(random);
    }
    std::vector<const ManifestEntry*> rest;
    for (auto* v : {&patterned, &random, &other}) rest.insert(rest.end(), v->begin(), v->end());
    std::sort(rest.begin(), rest.end(), [](auto* a, auto* b) { return a->id < b->id; });
    while (test.size() < n_test) take(rest);

    for (const auto* t : list) {
      const bool in_test = std::find(test.begin(), test.end(), t) != test.end();
      (in_test ? split.test : split.train).push_back(t->id);
    }
  }
  return split;
}

ChannelStats imu_channel_stats(const std::vector<const GaitTrial*>& trials) {
  if (trials.empty()) throw ConfigError("channel statistics need at least one trial");
  const Eigen::Index d = trials.front()->imu.cols();
  Vector sum = Vector::Zero(d), sq = Vector::Zero(d);
  double count = 0;
  for (const auto* t : trials) {
    if (t->imu.cols() != d) throw DimensionError("trials disagree on IMU dimension");
    sum += t->imu.colwise().sum().transpose();
    count += static_cast<double>(t->imu.rows());
  }
  if (count == 0) throw ConfigError("channel statistics need at least one sample");
  const Vector mean = sum / count;
  for (const auto* t : trials) sq += (t->imu.rowwise() - mean.transpose()).array().square().colwise().sum().matrix().transpose();
  ChannelStats s;
  s.mean = mean;
  s.stddev = (sq / count).array().sqrt();
  for (Eigen::Index c = 0; c < d; ++c)
    if (!(s.stddev[c] > 1e-12)) s.stddev[c] = 1.0;  // constant channel: leave unscaled
  return s;
}

}  // namespace gaitloop::ingest
