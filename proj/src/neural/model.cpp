// SPDX-License-Identifier: Apache-2.0
#include "gaitloop/errors.hpp"
#include "gaitloop/neural.hpp"

#include <cmath>
#include <random>

namespace gaitloop::neural {

ParamLayout::ParamLayout(const ModelShape& s) {
  if (s.input < 1 || s.hidden < 1 || s.head_hidden < 1 || s.output < 1)
    throw ConfigError("model dimensions must be positive");
  std::size_t off = 0;
  auto place = [&](Slot& slot, int rows, int cols) {
    slot = {off, rows, cols};
    off += slot.size();
  };
  place(W, 4 * s.hidden, s.input);
  place(U, 4 * s.hidden, s.hidden);
  place(b, 4 * s.hidden, 1);
  place(W1, s.head_hidden, s.hidden);
  place(b1, s.head_hidden, 1);
  place(W2, s.output, s.head_hidden);
  place(b2, s.output, 1);
  total = off;
}

std::vector<std::pair<std::string, ParamLayout::Slot>> ParamLayout::named() const {
  return {{"lstm.W", W}, {"lstm.U", U}, {"lstm.b", b}, {"head.W1", W1},
          {"head.b1", b1}, {"head.W2", W2}, {"head.b2", b2}};
}

Model::Model(const ModelShape& shape, const ModelMeta& meta_in)
    : meta(meta_in), shape_(shape), layout_(shape), params_(Vector::Zero(static_cast<Eigen::Index>(layout_.total))) {
  norm.input_mean = Vector::Zero(shape.input);
  norm.input_std = Vector::Ones(shape.input);
  norm.output_scale = Vector::Ones(shape.output);
  norm.output_offset = Vector::Zero(shape.output);
}

ConstMatrixMap Model::tensor(const ParamLayout::Slot& slot) const {
  return ConstMatrixMap(params_.data() + slot.offset, slot.rows, slot.cols);
}

MatrixMap Model::tensor(const ParamLayout::Slot& slot) {
  return MatrixMap(params_.data() + slot.offset, slot.rows, slot.cols);
}

void Model::check_compatible(std::size_t n, std::size_t s, const SensorLayout& layout, int rate_hz) const {
  std::string why;
  if (static_cast<int>(n) != meta.n) why += " n=" + std::to_string(n) + " (model " + std::to_string(meta.n) + ")";
  if (static_cast<int>(s) != meta.s) why += " s=" + std::to_string(s) + " (model " + std::to_string(meta.s) + ")";
  if (layout.imu_count != meta.imu_count)
    why += " m=" + std::to_string(layout.imu_count) + " (model " + std::to_string(meta.imu_count) + ")";
  if (layout.cells_per_foot != meta.cells_per_foot)
    why += " k=" + std::to_string(layout.cells_per_foot) + " (model " + std::to_string(meta.cells_per_foot) + ")";
  if (rate_hz != meta.rate_hz)
    why += " rate=" + std::to_string(rate_hz) + " (model " + std::to_string(meta.rate_hz) + ")";
  if (shape_.input != layout.imu_dim() || shape_.output != layout.plantar_dim())
    why += " tensor shapes do not match the sensor layout";
  if (!why.empty()) throw ConfigError("model incompatible with inference configuration:" + why);
}

void init_params(Model& model, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const auto& L = model.layout();
  auto fill = [&](const ParamLayout::Slot& slot, int fan_in) {
    const double r = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> dist(-r, r);
    auto t = model.tensor(slot);
    for (Eigen::Index j = 0; j < t.cols(); ++j)
      for (Eigen::Index i = 0; i < t.rows(); ++i) t(i, j) = dist(rng);
  };
  const int H = model.shape().hidden;
  fill(L.W, model.shape().input + H);
  fill(L.U, model.shape().input + H);
  fill(L.W1, H);
  fill(L.W2, model.shape().head_hidden);
  model.tensor(L.b).setZero();
  model.tensor(L.b).middleRows(H, H).setOnes();
  model.tensor(L.b1).setZero();
  model.tensor(L.b2).setZero();
}

namespace {
inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
}  // namespace

LstmState lstm_step(const Model& model, const Eigen::Ref<const Vector>& x, const Vector& h_prev,
                    const Vector& c_prev) {
  const int H = model.shape().hidden;
  if (x.size() != model.shape().input || h_prev.size() != H || c_prev.size() != H)
    throw DimensionError("lstm_step: shape mismatch");
  const auto& L = model.layout();
  const Vector z = model.tensor(L.W) * x + model.tensor(L.U) * h_prev + model.tensor(L.b);
  LstmState out;
  out.c.resize(H);
  out.h.resize(H);
  for (int k = 0; k < H; ++k) {
    const double i = sigmoid(z[k]);
    const double f = sigmoid(z[H + k]);
    const double g = std::tanh(z[2 * H + k]);
    const double o = sigmoid(z[3 * H + k]);
    out.c[k] = f * c_prev[k] + i * g;
    out.h[k] = o * std::tanh(out.c[k]);
  }
  return out;
}

Vector forward_raw(const Model& model, const Eigen::Ref<const Matrix>& window) {
  const auto& sh = model.shape();
  if (window.cols() != sh.input)
    throw DimensionError("window has " + std::to_string(window.cols()) + " channels, model expects " +
                         std::to_string(sh.input));
  if (window.rows() < 1) throw DimensionError("empty window");
  const auto& L = model.layout();
  LstmState st{Vector::Zero(sh.hidden), Vector::Zero(sh.hidden)};
  Vector x(sh.input);
  for (Eigen::Index r = 0; r < window.rows(); ++r) {
    x = (window.row(r).transpose() - model.norm.input_mean).cwiseQuotient(model.norm.input_std);
    st = lstm_step(model, x, st.h, st.c);
  }
  const Vector a1 = (model.tensor(L.W1) * st.h + model.tensor(L.b1)).cwiseMax(0.0);
  const Vector z2 = model.tensor(L.W2) * a1 + model.tensor(L.b2);
  return model.norm.output_scale.cwiseProduct(z2) + model.norm.output_offset;
}

Vector forward(const Model& model, const Eigen::Ref<const Matrix>& window) {
  return forward_raw(model, window).cwiseMax(0.0);
}

double loss(const Model& model, Batch batch) { return loss_and_gradient(model, batch).loss; }

Vector backward(const Model& model, Batch batch) { return loss_and_gradient(model, batch).grad; }

}  // namespace gaitloop::neural
