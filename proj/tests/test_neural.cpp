// SPDX-License-Identifier: Apache-2.0
#include "gaitloop/errors.hpp"
#include "gaitloop/ingest.hpp"
#include "gaitloop/neural.hpp"
#include "gaitloop/syngait.hpp"

#include <doctest.h>

#include <cmath>
#include <cstring>
#include <random>

using namespace gaitloop;
using namespace gaitloop::neural;

namespace {

double sig(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Independent LSTM cell written straight from the gate equations, one scalar
// at a time, with weights read from the flat parameter vector by index.
LstmState reference_step(const Model& m, const Vector& x, const Vector& h, const Vector& c) {
  const int H = m.shape().hidden, d = m.shape().input;
  const auto& L = m.layout();
  const Vector& p = m.params();
  auto W = [&](int r, int col) { return p[static_cast<Eigen::Index>(L.W.offset + static_cast<std::size_t>(col * 4 * H + r))]; };
  auto U = [&](int r, int col) { return p[static_cast<Eigen::Index>(L.U.offset + static_cast<std::size_t>(col * 4 * H + r))]; };
  auto b = [&](int r) { return p[static_cast<Eigen::Index>(L.b.offset + static_cast<std::size_t>(r))]; };
  LstmState out{Vector(H), Vector(H)};
  for (int k = 0; k < H; ++k) {
    double pre[4];
    for (int g = 0; g < 4; ++g) {
      double s = b(g * H + k);
      for (int j = 0; j < d; ++j) s += W(g * H + k, j) * x[j];
      for (int j = 0; j < H; ++j) s += U(g * H + k, j) * h[j];
      pre[g] = s;
    }
    const double ig = sig(pre[0]), fg = sig(pre[1]), gg = std::tanh(pre[2]), og = sig(pre[3]);
    out.c[k] = fg * c[k] + ig * gg;
    out.h[k] = og * std::tanh(out.c[k]);
  }
  return out;
}

Vector random_vector(int n, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> g(0.0, scale);
  return Vector::NullaryExpr(n, [&] { return g(rng); });
}

Model random_model(ModelShape shape, std::uint64_t seed, int n = 20, double scale = 0.5) {
  ModelMeta meta;
  meta.n = n;
  Model m(shape, meta);
  std::mt19937_64 rng(seed);
  m.params() = random_vector(static_cast<int>(m.params().size()), rng, scale);
  m.norm.input_mean = random_vector(shape.input, rng);
  m.norm.input_std = random_vector(shape.input, rng).cwiseAbs().array() + 0.5;
  m.norm.output_scale = random_vector(shape.output, rng).cwiseAbs().array() + 0.5;
  m.norm.output_offset = random_vector(shape.output, rng);
  return m;
}

std::vector<ingest::WindowPair> random_pairs(std::size_t count, int n, const ModelShape& shape, std::uint64_t seed,
                                             double target_scale = 1.0) {
  std::mt19937_64 rng(seed);
  std::vector<ingest::WindowPair> out(count);
  std::normal_distribution<double> g;
  for (auto& p : out) {
    p.input.resize(n, shape.input);
    for (Eigen::Index i = 0; i < p.input.size(); ++i) p.input.data()[i] = g(rng);
    p.target = random_vector(shape.output, rng, target_scale);
  }
  return out;
}

std::vector<const ingest::WindowPair*> ptrs(const std::vector<ingest::WindowPair>& v) {
  std::vector<const ingest::WindowPair*> out;
  for (const auto& p : v) out.push_back(&p);
  return out;
}

GaitTrial noise_trial(std::size_t T, double plantar, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  GaitTrial t;
  t.imu = Matrix::NullaryExpr(static_cast<Eigen::Index>(T), 12, [&] { return g(rng); });
  t.plantar = Matrix::Constant(static_cast<Eigen::Index>(T), 6, plantar);
  t.body_weight_N = 700;
  return t;
}

}  // namespace

TEST_CASE("parameter layout matches the stated tensor shapes") {
  const ParamLayout L(ModelShape{});
  CHECK(L.W.rows == 128);
  CHECK(L.W.cols == 12);
  CHECK(L.U.rows == 128);
  CHECK(L.U.cols == 32);
  CHECK(L.b.size() == 128);
  CHECK(L.W1.rows == 16);
  CHECK(L.W1.cols == 32);
  CHECK(L.W2.rows == 6);
  CHECK(L.W2.cols == 16);
  CHECK(L.total == 128 * 12 + 128 * 32 + 128 + 16 * 32 + 16 + 6 * 16 + 6);
  CHECK(L.b2.offset + L.b2.size() == L.total);
}

TEST_CASE("zero parameters keep the LSTM state at zero") {
  Model m(ModelShape{}, ModelMeta{});
  m.params().setZero();
  std::mt19937_64 rng(1);
  const auto s = lstm_step(m, random_vector(12, rng), Vector::Zero(32), Vector::Zero(32));
  CHECK(s.h.isZero(0.0));
  CHECK(s.c.isZero(0.0));
  CHECK_THROWS_AS(lstm_step(m, Vector::Zero(5), Vector::Zero(32), Vector::Zero(32)), DimensionError);
}

TEST_CASE("saturated forget gate carries the cell state through") {
  Model m = random_model(ModelShape{}, 4);
  m.tensor(m.layout().b).middleRows(32, 32).setConstant(50.0);
  std::mt19937_64 rng(2);
  const Vector x = random_vector(12, rng), h = random_vector(32, rng), c = random_vector(32, rng);
  const auto s = lstm_step(m, x, h, c);
  const auto& L = m.layout();
  const Vector z = m.tensor(L.W) * x + m.tensor(L.U) * h + m.tensor(L.b);
  for (int k = 0; k < 32; ++k) {
    const double ig = sig(z[k]), gg = std::tanh(z[64 + k]);
    CHECK(s.c[k] == doctest::Approx(c[k] + ig * gg).epsilon(1e-12));
  }
}

TEST_CASE("lstm step matches a scalar re-implementation") {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const Model m = random_model(ModelShape{}, seed);
    std::mt19937_64 rng(seed + 100);
    const Vector x = random_vector(12, rng), h = random_vector(32, rng), c = random_vector(32, rng);
    const auto got = lstm_step(m, x, h, c);
    const auto want = reference_step(m, x, h, c);
    CHECK((got.h - want.h).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK((got.c - want.c).cwiseAbs().maxCoeff() <= 1e-12);
  }
}

TEST_CASE("zero-weight model outputs the clamped output bias") {
  Model m(ModelShape{}, ModelMeta{});
  m.params().setZero();
  Vector b2(6);
  b2 << 3.0, -2.0, 0.0, 7.5, -0.1, 1.0;
  m.tensor(m.layout().b2) = b2;
  std::mt19937_64 rng(3);
  Matrix w = Matrix::NullaryExpr(20, 12, [&] { return std::normal_distribution<double>()(rng); });
  CHECK(forward(m, w) == b2.cwiseMax(0.0));
  CHECK(forward_raw(m, w) == b2);
}

TEST_CASE("single-frame window equals one step plus the head") {
  const Model m = random_model(ModelShape{}, 8, 1);
  std::mt19937_64 rng(9);
  const Matrix w = random_vector(12, rng).transpose();
  const Vector x = (w.row(0).transpose() - m.norm.input_mean).cwiseQuotient(m.norm.input_std);
  const auto st = lstm_step(m, x, Vector::Zero(32), Vector::Zero(32));
  const auto& L = m.layout();
  const Vector a1 = (m.tensor(L.W1) * st.h + m.tensor(L.b1)).cwiseMax(0.0);
  const Vector y = m.norm.output_scale.cwiseProduct(m.tensor(L.W2) * a1 + m.tensor(L.b2)) + m.norm.output_offset;
  CHECK(forward_raw(m, w) == y);
  CHECK(forward(m, w) == y.cwiseMax(0.0));
}

TEST_CASE("forward is pure and rejects bad shapes") {
  const Model m = random_model(ModelShape{}, 5);
  std::mt19937_64 rng(1);
  const Matrix a = Matrix::NullaryExpr(20, 12, [&] { return std::normal_distribution<double>()(rng); });
  const Matrix b = Matrix::NullaryExpr(20, 12, [&] { return std::normal_distribution<double>()(rng); });
  const Vector ya = forward(m, a);
  forward(m, b);
  CHECK(forward(m, a) == ya);
  CHECK_THROWS_AS(forward(m, Matrix::Zero(20, 11)), DimensionError);
  CHECK_THROWS_AS(forward(m, Matrix::Zero(0, 12)), DimensionError);
}

TEST_CASE("loss examples") {
  Model m(ModelShape{}, ModelMeta{});
  m.params().setZero();
  ingest::WindowPair p;
  p.input = Matrix::Zero(4, 12);
  p.target = Vector::Zero(6);
  std::vector<const ingest::WindowPair*> batch{&p};
  CHECK(loss(m, batch) == 0.0);
  p.target[0] = -1.0;
  CHECK(loss(m, batch) == doctest::Approx(1.0 / 6.0));
  CHECK_THROWS_AS(loss(m, {}), ConfigError);
}

TEST_CASE("loss equals element-wise accumulation and ignores the clamp") {
  const ModelShape shape{};
  const Model m = random_model(shape, 21, 7, 0.3);
  const auto pairs = random_pairs(37, 7, shape, 22, 5.0);
  double sum = 0.0;
  for (const auto& p : pairs) {
    const Vector y = forward_raw(m, p.input);
    for (int k = 0; k < 6; ++k) sum += (y[k] - p.target[k]) * (y[k] - p.target[k]);
  }
  CHECK(loss(m, ptrs(pairs)) == doctest::Approx(sum / (37.0 * 6.0)).epsilon(1e-12));
}

TEST_CASE("analytic gradient agrees with central finite differences") {
  const ModelShape shape{2, 4, 3, 6};
  const double h = 1e-5;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    Model m = random_model(shape, seed, 3, 0.8);
    const auto pairs = random_pairs(5, 3, shape, seed + 50);
    const auto batch = ptrs(pairs);
    const Vector g = backward(m, batch);
    const Vector gs = serial::loss_and_gradient(m, batch).grad;
    double worst = 0.0;
    for (Eigen::Index i = 0; i < m.params().size(); ++i) {
      const double keep = m.params()[i];
      m.params()[i] = keep + h;
      const double up = loss(m, batch);
      m.params()[i] = keep - h;
      const double dn = loss(m, batch);
      m.params()[i] = keep;
      const double fd = (up - dn) / (2 * h);
      // Floor keeps roundoff on near-zero coordinates from dominating.
      const double rel = std::abs(fd - g[i]) / std::max(1e-6, std::abs(fd) + std::abs(g[i]));
      worst = std::max(worst, rel);
      CHECK(g[i] == doctest::Approx(gs[i]).epsilon(1e-10));
    }
    CHECK(worst < 1e-4);
  }
}

TEST_CASE("perfect fit has zero gradient") {
  const ModelShape shape{};
  const Model m = random_model(shape, 31, 5);
  auto pairs = random_pairs(9, 5, shape, 32);
  for (auto& p : pairs) p.target = forward_raw(m, p.input);
  const auto lg = loss_and_gradient(m, ptrs(pairs));
  CHECK(lg.loss <= 1e-24);
  CHECK(lg.grad.cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("duplicating a batch leaves the mean gradient unchanged") {
  const ModelShape shape{};
  const Model m = random_model(shape, 41, 6);
  const auto pairs = random_pairs(23, 6, shape, 42);
  auto single = ptrs(pairs);
  auto doubled = single;
  doubled.insert(doubled.end(), single.begin(), single.end());
  const auto a = loss_and_gradient(m, single);
  const auto b = loss_and_gradient(m, doubled);
  CHECK(b.loss == doctest::Approx(a.loss).epsilon(1e-13));
  CHECK((a.grad - b.grad).cwiseAbs().maxCoeff() <= 1e-12 * (1.0 + a.grad.cwiseAbs().maxCoeff()));
}

TEST_CASE("batched kernels agree with the serial reference") {
  const ModelShape shape{};
  const Model m = random_model(shape, 51, 20, 0.3);
  for (std::size_t count : {1u, 15u, 16u, 17u, 70u}) {
    const auto pairs = random_pairs(count, 20, shape, 52 + count, 50.0);
    const auto batch = ptrs(pairs);
    const auto a = loss_and_gradient(m, batch);
    const auto b = serial::loss_and_gradient(m, batch);
    CHECK(a.loss == doctest::Approx(b.loss).epsilon(1e-12));
    CHECK((a.grad - b.grad).cwiseAbs().maxCoeff() <= 1e-10 * (1.0 + b.grad.cwiseAbs().maxCoeff()));
    std::vector<const Matrix*> windows;
    for (const auto& p : pairs) windows.push_back(&p.input);
    const Matrix pa = predict_many(m, windows), pb = serial::predict_many(m, windows);
    CHECK((pa - pb).cwiseAbs().maxCoeff() <= 1e-10);
    CHECK((pa.row(0).transpose() - forward(m, pairs[0].input)).cwiseAbs().maxCoeff() <= 1e-10);
    CHECK((serial::forward_raw(m, pairs[0].input) - forward_raw(m, pairs[0].input)).cwiseAbs().maxCoeff() <= 1e-10);
  }
  ingest::WindowPair odd;
  odd.input = Matrix::Zero(5, 12);
  odd.target = Vector::Zero(6);
  const auto pairs = random_pairs(2, 20, shape, 1);
  std::vector<const ingest::WindowPair*> mixed{&pairs[0], &odd};
  CHECK_THROWS_AS(loss_and_gradient(m, mixed), DimensionError);
}

TEST_CASE("rescaling a raw channel with its statistics leaves predictions unchanged") {
  Model m = random_model(ModelShape{}, 61);
  std::mt19937_64 rng(62);
  Matrix w = Matrix::NullaryExpr(20, 12, [&] { return std::normal_distribution<double>()(rng); });
  const Vector before = forward_raw(m, w);
  for (int ch : {0, 5, 11}) {
    const double c = 3.7 + ch;
    w.col(ch) *= c;
    m.norm.input_mean[ch] *= c;
    m.norm.input_std[ch] *= c;
  }
  CHECK((forward_raw(m, w) - before).cwiseAbs().maxCoeff() <= 1e-10);
}

TEST_CASE("adam update follows the bias-corrected rule") {
  TrainConfig c;
  Vector p = Vector::Constant(3, 1.0);
  Vector g(3);
  g << 0.5, -2.0, 0.0;
  AdamState st;
  adam_update(p, g, st, c);
  // First step: m_hat = g, v_hat = g^2, so each non-zero coordinate moves by lr.
  CHECK(p[0] == doctest::Approx(1.0 - 1e-3).epsilon(1e-9));
  CHECK(p[1] == doctest::Approx(1.0 + 1e-3).epsilon(1e-9));
  CHECK(p[2] == 1.0);
  CHECK(st.step == 1);
}

TEST_CASE("train config validation") {
  TrainConfig c;
  CHECK_NOTHROW(c.validate());
  c.patience = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = {};
  c.learning_rate = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  CHECK_THROWS_AS(train({}, 20, 20, TrainConfig{}), ConfigError);
}

TEST_CASE("constant target is learned") {
  const GaitTrial t = noise_trial(1500, 120.0, 71);
  TrainConfig c;
  c.epochs = 50;
  c.stride = 1;
  c.rng_seed = 3;
  const auto r = train({&t}, 10, 5, c);
  CHECK(r.log.back().epoch <= 50);
  double best = 1e300;
  for (const auto& e : r.log) best = std::min(best, e.val_mse);
  MESSAGE("constant task best val mse " << best << " at epoch " << r.best_epoch);
  CHECK(best < 1e-3);
  CHECK(forward(r.model, t.imu.topRows(10))[2] == doctest::Approx(120.0).epsilon(1e-3));
}

TEST_CASE("training is deterministic under a seed and loss falls early") {
  syngait::GaitPlan p;
  p.bout_steps = {2, 3, 4};
  p.noise_std_imu = 0;
  p.noise_std_plantar = 0;
  const GaitTrial a = syngait::generate_trial(p);
  p.rng_seed = 2;
  p.bout_steps = {5, 6};
  const GaitTrial b = syngait::generate_trial(p);
  TrainConfig c;
  c.epochs = 5;
  c.patience = 10;
  c.rng_seed = 11;
  const auto r1 = train({&a, &b}, 20, 20, c, "s99");
  const auto r2 = train({&a, &b}, 20, 20, c, "s99");
  CHECK(r1.model.params() == r2.model.params());
  CHECK(r1.model.meta.subject_id == "s99");
  CHECK(r1.model.meta.n == 20);
  REQUIRE(r1.log.size() == 5);
  int rises = 0;
  for (std::size_t i = 1; i < r1.log.size(); ++i) rises += r1.log[i].train_mse > r1.log[i - 1].train_mse;
  CHECK(rises <= 1);
  CHECK(r1.log.back().train_mse < r1.log.front().train_mse);
  const auto csv = training_log_csv(r1.log);
  CHECK(csv.rfind("epoch,train_mse,val_mse,wall_time_s\n", 0) == 0);

  // Row order matters to a trained network.
  const Matrix w = a.imu.middleRows(300, 20);
  const Matrix rev = w.colwise().reverse();
  CHECK((forward_raw(r1.model, w) - forward_raw(r1.model, rev)).cwiseAbs().maxCoeff() > 1e-6);

  c.rng_seed = 12;
  CHECK(train({&a, &b}, 20, 20, c).model.params() != r1.model.params());
}

TEST_CASE("model files round-trip bit-exactly") {
  Model m = random_model(ModelShape{}, 81);
  m.meta.subject_id = "s03";
  m.meta.s = 25;
  const auto path = std::filesystem::temp_directory_path() / "gaitloop_model_rt.model";
  save_model(m, path);
  const Model back = load_model(path);
  CHECK(back.params() == m.params());
  CHECK(back.meta == m.meta);
  CHECK(back.shape() == m.shape());
  CHECK(back.norm.input_std == m.norm.input_std);
  CHECK(back.norm.output_offset == m.norm.output_offset);
  std::mt19937_64 rng(82);
  for (int i = 0; i < 100; ++i) {
    const Matrix w = Matrix::NullaryExpr(20, 12, [&] { return std::normal_distribution<double>()(rng); });
    const Vector a = forward(m, w), b = forward(back, w);
    REQUIRE(std::memcmp(a.data(), b.data(), sizeof(double) * 6) == 0);
  }
  CHECK(serialize_model(back) == serialize_model(m));
}

TEST_CASE("damaged model files are rejected") {
  const Model m = random_model(ModelShape{}, 91);
  const std::string bytes = serialize_model(m);
  std::string bad = bytes;
  bad[0] = 'X';
  CHECK_THROWS_WITH_AS(deserialize_model(bad), doctest::Contains("magic"), IoError);
  CHECK_THROWS_AS(deserialize_model(bytes.substr(0, bytes.size() - 8)), IoError);
  CHECK_THROWS_AS(deserialize_model(bytes.substr(0, 10)), IoError);
  std::string ver = bytes;
  ver[8] = 9;
  CHECK_THROWS_WITH_AS(deserialize_model(ver), doctest::Contains("version"), IoError);
  CHECK_THROWS_AS(load_model("/nonexistent/x.model"), IoError);
}

TEST_CASE("model meta must match the inference configuration") {
  Model m = random_model(ModelShape{}, 95);
  m.meta.n = 20;
  m.meta.s = 20;
  CHECK_NOTHROW(m.check_compatible(20, 20, SensorLayout{}, 100));
  CHECK_THROWS_WITH_AS(m.check_compatible(10, 20, SensorLayout{}, 100), doctest::Contains("incompatible"),
                       ConfigError);
  SensorLayout three;
  three.imu_count = 3;
  CHECK_THROWS_AS(m.check_compatible(20, 20, three, 100), ConfigError);
  CHECK_THROWS_AS(m.check_compatible(20, 20, SensorLayout{}, 200), ConfigError);
}
