// SPDX-License-Identifier: Apache-2.0
#include "gaitloop/csv.hpp"
#include "gaitloop/errors.hpp"
#include "gaitloop/ingest.hpp"
#include "gaitloop/syngait.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <random>

using namespace gaitloop;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("gaitloop_ingest_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string header(bool phases = false) {
  SensorLayout l;
  std::vector<std::string> cols{"time_s"};
  for (auto& c : l.imu_columns()) cols.push_back(c);
  for (auto& c : l.plantar_columns()) cols.push_back(c);
  if (phases) {
    cols.push_back("phase_l");
    cols.push_back("phase_r");
  }
  return csv::join(cols) + "\n";
}

std::string row(double t, double imu, double plantar) {
  std::string r = csv::format(t);
  for (int i = 0; i < 12; ++i) r += "," + csv::format(imu + i);
  for (int i = 0; i < 6; ++i) r += "," + csv::format(plantar);
  return r + "\n";
}

GaitTrial make_trial(int rate, const Matrix& imu, const Matrix& plantar) {
  GaitTrial t;
  t.clock = SampleClock(rate);
  t.imu = imu;
  t.plantar = plantar;
  t.body_weight_N = 700;
  return t;
}

std::vector<ingest::ManifestEntry> entries(const std::string& subject, int patterned, int random) {
  std::vector<ingest::ManifestEntry> v;
  for (int i = 0; i < patterned + random; ++i) {
    ingest::ManifestEntry e;
    e.id = subject + "_t" + std::to_string(i);
    e.subject_id = subject;
    e.body_weight_N = 700;
    e.kind = i < patterned ? TrialKind::Patterned : TrialKind::Random;
    v.push_back(e);
  }
  return v;
}

}  // namespace

TEST_CASE("three-row file loads as a three-frame trial") {
  const auto dir = scratch("three");
  csv::write_atomic(dir / "t.csv", header() + row(0.0, 1, 10) + row(0.01, 2, 20) + row(0.02, 3, 30));
  const GaitTrial t = ingest::load_trial(dir / "t.csv");
  CHECK(t.length() == 3);
  CHECK(t.clock.rate_hz() == 100);
  CHECK(t.imu(2, 0) == 3.0);
  CHECK(t.plantar(1, 5) == 20.0);
  CHECK_FALSE(t.phase_truth.has_value());
}

TEST_CASE("negative force is reported with its row and column") {
  const auto dir = scratch("neg");
  std::string bad = row(0.01, 2, 20);
  bad.replace(bad.rfind(",20"), 3, ",-1");
  csv::write_atomic(dir / "t.csv", header() + row(0.0, 1, 10) + bad);
  CHECK_THROWS_WITH_AS(ingest::load_trial(dir / "t.csv"), doctest::Contains("row 3, column 'plantar_r_toe'"),
                       DataError);
}

TEST_CASE("malformed files are rejected with descriptive errors") {
  const auto dir = scratch("bad");
  SUBCASE("header") {
    std::string h = header();
    h.replace(h.find("imu1_gx"), 7, "imu1_qq");
    csv::write_atomic(dir / "t.csv", h + row(0.0, 1, 10));
    CHECK_THROWS_WITH_AS(ingest::load_trial(dir / "t.csv"), doctest::Contains("imu1_gx"), DataError);
  }
  SUBCASE("non-monotone time") {
    csv::write_atomic(dir / "t.csv", header() + row(0.01, 1, 10) + row(0.01, 1, 10));
    CHECK_THROWS_WITH_AS(ingest::load_trial(dir / "t.csv"), doctest::Contains("time_s"), DataError);
  }
  SUBCASE("nan") {
    std::string r = row(0.01, 1, 10);
    r.replace(r.find(",1,"), 3, ",nan,");
    csv::write_atomic(dir / "t.csv", header() + row(0.0, 1, 10) + r);
    CHECK_THROWS_WITH_AS(ingest::load_trial(dir / "t.csv"), doctest::Contains("imu1_ax"), DataError);
  }
  SUBCASE("missing file") { CHECK_THROWS_AS(ingest::load_trial(dir / "nope.csv"), IoError); }
}

TEST_CASE("generated trial round-trips through a file") {
  syngait::GaitPlan plan;
  plan.bout_steps = {4};
  plan.rng_seed = 9;
  const GaitTrial t = syngait::generate_trial(plan);
  const auto dir = scratch("roundtrip");
  ingest::write_trial(t, dir / "t.csv");
  const GaitTrial back = ingest::load_trial(dir / "t.csv");
  REQUIRE(back.length() == t.length());
  CHECK((back.imu - t.imu).cwiseAbs().maxCoeff() <= 1e-9);
  CHECK((back.plantar - t.plantar).cwiseAbs().maxCoeff() <= 1e-9);
  REQUIRE(back.phase_truth.has_value());
  CHECK(*back.phase_truth == *t.phase_truth);
  REQUIRE(back.event_truth.has_value());
  CHECK(back.event_truth->size() == t.event_truth->size());
}

TEST_CASE("irregular timestamps are resampled onto the inferred grid") {
  const auto dir = scratch("irregular");
  csv::write_atomic(dir / "t.csv", header() + row(0.0, 0, 0) + row(0.0104, 1, 10) + row(0.0204, 2, 20) +
                                       row(0.0304, 3, 30) + row(0.04, 4, 40));
  const GaitTrial t = ingest::load_trial(dir / "t.csv");
  CHECK(t.clock.rate_hz() == 100);
  REQUIRE(t.length() == 5);
  // Grid point 0.01 lies between 0.0 and 0.0104.
  CHECK(t.imu(1, 0) == doctest::Approx(0.01 / 0.0104).epsilon(1e-12));
  CHECK(t.plantar(4, 0) == doctest::Approx(40.0));
}

TEST_CASE("resampling a constant trial keeps the constant") {
  const GaitTrial t = make_trial(200, Matrix::Constant(401, 12, 3.25), Matrix::Constant(401, 6, 120.0));
  const GaitTrial r = ingest::resample(t, 100);
  CHECK(r.length() == 201);
  CHECK(r.clock.rate_hz() == 100);
  CHECK((r.imu.array() == 3.25).all());
  CHECK((r.plantar.array() == 120.0).all());
}

TEST_CASE("upsampling a ramp puts new samples exactly halfway") {
  Matrix imu(51, 12);
  for (int i = 0; i < 51; ++i) imu.row(i).setConstant(i / 50.0);
  const GaitTrial t = make_trial(50, imu, Matrix::Zero(51, 6));
  const GaitTrial r = ingest::resample(t, 100);
  REQUIRE(r.length() == 101);
  for (int j = 0; j < 101; ++j) CHECK(r.imu(j, 4) == doctest::Approx(j / 100.0).epsilon(1e-14));
}

TEST_CASE("downsampled sine equals the piecewise-linear interpolant at grid times") {
  const int T = 400;
  Matrix imu(T, 12);
  std::vector<double> times(T);
  for (int i = 0; i < T; ++i) {
    times[static_cast<std::size_t>(i)] = i / 200.0;
    for (int c = 0; c < 12; ++c) imu(i, c) = std::sin(2.0 * M_PI * (1.0 + c) * i / 200.0);
  }
  GaitTrial t = make_trial(200, imu, Matrix::Zero(T, 6));
  t.first_frame = 3;
  const GaitTrial r = ingest::resample(t, 100);
  for (std::size_t g = 0; g < r.length(); ++g) {
    const double x = r.time_s(g) - t.time_s(0);
    // Independent interpolant: locate the bracketing pair by scanning.
    std::size_t k = 0;
    while (k + 1 < times.size() - 1 && times[k + 1] <= x) ++k;
    const double w = (x - times[k]) / (times[k + 1] - times[k]);
    for (int c = 0; c < 12; ++c) {
      const double want = (1 - w) * imu(static_cast<Eigen::Index>(k), c) + w * imu(static_cast<Eigen::Index>(k + 1), c);
      REQUIRE(r.imu(static_cast<Eigen::Index>(g), c) == doctest::Approx(want).epsilon(1e-12));
    }
  }
}

TEST_CASE("resampling at the native rate is the identity") {
  syngait::GaitPlan plan;
  plan.bout_steps = {3};
  const GaitTrial t = syngait::generate_trial(plan);
  const GaitTrial r = ingest::resample(t, 100);
  CHECK(r.imu == t.imu);
  CHECK(r.plantar == t.plantar);
  CHECK(*r.phase_truth == *t.phase_truth);
  CHECK_THROWS_AS(ingest::resample(make_trial(100, Matrix::Zero(1, 12), Matrix::Zero(1, 6)), 50), DataError);
}

TEST_CASE("pair anchors at the documented boundaries") {
  const auto a = ingest::pair_anchors(100, 20, 20, 5);
  REQUIRE(a.size() == 13);
  CHECK(a.front() == 19);
  CHECK(a.back() == 79);
  CHECK(ingest::pair_anchors(40, 20, 20, 5) == std::vector<std::size_t>{19});
  CHECK(ingest::pair_anchors(39, 20, 20, 5).empty());
}

TEST_CASE("make_pairs equals brute-force enumeration") {
  std::mt19937_64 rng(17);
  std::uniform_int_distribution<std::size_t> Td(1, 150), nd(1, 40), sd(0, 60), strd(1, 9);
  for (int inst = 0; inst < 200; ++inst) {
    const std::size_t T = Td(rng), n = nd(rng), s = sd(rng), stride = strd(rng);
    Matrix imu(static_cast<Eigen::Index>(T), 12), pl(static_cast<Eigen::Index>(T), 6);
    for (Eigen::Index i = 0; i < imu.rows(); ++i) {
      imu.row(i).setConstant(static_cast<double>(i));
      pl.row(i).setConstant(static_cast<double>(i) * 2);
    }
    const auto pairs = ingest::make_pairs(make_trial(100, imu, pl), n, s, stride);
    std::vector<std::pair<std::size_t, std::size_t>> want;
    for (std::size_t t = 0; t < T; ++t)
      for (std::size_t u = 0; u < T; ++u)
        if (u == t + s && t + 1 >= n && (t + 1 - n) % stride == 0) want.emplace_back(t, u);
    REQUIRE(pairs.size() == want.size());
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      CHECK(pairs[i].anchor == want[i].first);
      CHECK(pairs[i].input.rows() == static_cast<Eigen::Index>(n));
      CHECK(pairs[i].input(0, 0) == static_cast<double>(want[i].first + 1 - n));
      CHECK(pairs[i].input(static_cast<Eigen::Index>(n) - 1, 0) == static_cast<double>(want[i].first));
      CHECK(pairs[i].target[0] == static_cast<double>(want[i].second) * 2);
    }
    if (!want.empty())
      CHECK(pairs.size() == (T - n - s) / stride + 1);
  }
}

TEST_CASE("pair inputs match the streaming window") {
  syngait::GaitPlan plan;
  plan.bout_steps = {2};
  const GaitTrial t = syngait::generate_trial(plan);
  const auto pairs = ingest::make_pairs(t, 20, 20, 5);
  SlidingWindow w(20, 12);
  std::size_t next = 0;
  for (std::size_t r = 0; r < t.length() && next < pairs.size(); ++r) {
    w.push(t.imu.row(static_cast<Eigen::Index>(r)).transpose());
    if (r == pairs[next].anchor) {
      CHECK(frames_to_matrix(w) == pairs[next].input);
      ++next;
    }
  }
  CHECK(next == pairs.size());
}

TEST_CASE("ten-trial subject puts one patterned and one random trial in test") {
  const auto e = entries("s01", 8, 2);
  const auto split = ingest::split_corpus(e, 4);
  REQUIRE(split.test.size() == 2);
  CHECK(split.train.size() == 8);
  int patterned = 0, random = 0;
  for (const auto& id : split.test) {
    for (const auto& x : e)
      if (x.id == id) (x.kind == TrialKind::Patterned ? patterned : random)++;
  }
  CHECK(patterned == 1);
  CHECK(random == 1);
  const auto again = ingest::split_corpus(e, 4);
  CHECK(again.test == split.test);
  CHECK(again.train == split.train);
}

TEST_CASE("split is proportional, disjoint and complete") {
  auto e = entries("a", 4, 1);
  const auto b = entries("b", 7, 0);
  e.insert(e.end(), b.begin(), b.end());
  const auto split = ingest::split_corpus(e, 1);
  std::size_t a_test = 0, b_test = 0;
  for (const auto& id : split.test) (id[0] == 'a' ? a_test : b_test)++;
  CHECK(a_test == 1);
  CHECK(b_test == 1);
  CHECK(split.train.size() + split.test.size() == e.size());
  for (const auto& id : split.test) CHECK(std::find(split.train.begin(), split.train.end(), id) == split.train.end());
}

TEST_CASE("split refuses subjects with fewer than three trials") {
  CHECK_THROWS_WITH_AS(ingest::split_corpus(entries("s07", 2, 0), 1), doctest::Contains("s07"), ConfigError);
}

TEST_CASE("manifest round-trips through JSON") {
  ingest::CorpusManifest m;
  m.seed = 99;
  m.trials = entries("s02", 2, 1);
  m.trials[0].path = "s02/t01.csv";
  m.trials[1].native_rate_hz = 1000;
  const auto dir = scratch("manifest");
  ingest::save_manifest(m, dir / "manifest.json");
  const auto back = ingest::load_manifest(dir / "manifest.json");
  CHECK(back.seed == 99);
  REQUIRE(back.trials.size() == 3);
  CHECK(back.trials[0].path == "s02/t01.csv");
  CHECK(back.trials[1].native_rate_hz == 1000);
  CHECK(back.trials[2].kind == TrialKind::Random);
  CHECK(back.subjects() == std::vector<std::string>{"s02"});
}

TEST_CASE("channel statistics use the population standard deviation") {
  Matrix imu(4, 12);
  for (int i = 0; i < 4; ++i) imu.row(i).setConstant(i);
  imu.col(5).setConstant(2.0);
  const GaitTrial t = make_trial(100, imu, Matrix::Zero(4, 6));
  const auto st = ingest::imu_channel_stats({&t});
  CHECK(st.mean[0] == doctest::Approx(1.5));
  CHECK(st.stddev[0] == doctest::Approx(std::sqrt(1.25)));
  CHECK(st.stddev[5] == 1.0);
}
