// SPDX-License-Identifier: Apache-2.0
//
// Batched kernels. A chunk of windows is laid out column-wise so each LSTM
// step is a pair of small GEMMs; chunks run in parallel and partial sums are
// added in chunk order.
#include "gaitloop/errors.hpp"
#include "gaitloop/neural.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <exception>
#include <vector>

namespace gaitloop::neural {
namespace {

constexpr std::size_t kChunk = 16;

using Mat = Eigen::MatrixXd;

struct ChunkForward {
  Eigen::Index C = 0;  // windows in the chunk
  Eigen::Index n = 0;  // steps
  Mat X;               // input x (n*C), step-major column blocks
  Mat I, F, G, O, Cs, TC, Hs;
  Mat A1, R1, Y;
};

Mat sigmoid(const Mat& z) { return (1.0 + (-z.array()).exp()).inverse().matrix(); }

// `rows(w)` returns the raw n x d window of item w.
template <class RowsOf>
void forward_chunk(const Model& model, Eigen::Index C, Eigen::Index n, RowsOf rows_of, ChunkForward& f) {
  const auto& sh = model.shape();
  const auto& L = model.layout();
  const Eigen::Index H = sh.hidden;
  f.C = C;
  f.n = n;
  f.X.resize(sh.input, n * C);
  const Eigen::ArrayXd inv_std = model.norm.input_std.array().inverse();
  for (Eigen::Index w = 0; w < C; ++w) {
    const Matrix& win = rows_of(w);
    for (Eigen::Index t = 0; t < n; ++t)
      f.X.col(t * C + w) = ((win.row(t).transpose() - model.norm.input_mean).array() * inv_std).matrix();
  }
  const auto W = model.tensor(L.W);
  const auto U = model.tensor(L.U);
  const auto b = model.tensor(L.b);
  Mat Z = W * f.X;
  Z.colwise() += b.col(0);
  for (Mat* m : {&f.I, &f.F, &f.G, &f.O, &f.Cs, &f.TC, &f.Hs}) m->resize(H, n * C);
  for (Eigen::Index t = 0; t < n; ++t) {
    auto zt = Z.middleCols(t * C, C);
    if (t > 0) zt.noalias() += U * f.Hs.middleCols((t - 1) * C, C);
    f.I.middleCols(t * C, C) = sigmoid(zt.topRows(H));
    f.F.middleCols(t * C, C) = sigmoid(zt.middleRows(H, H));
    f.G.middleCols(t * C, C) = zt.middleRows(2 * H, H).array().tanh().matrix();
    f.O.middleCols(t * C, C) = sigmoid(zt.bottomRows(H));
    if (t > 0)
      f.Cs.middleCols(t * C, C) = (f.F.middleCols(t * C, C).array() * f.Cs.middleCols((t - 1) * C, C).array() +
                                   f.I.middleCols(t * C, C).array() * f.G.middleCols(t * C, C).array())
                                      .matrix();
    else
      f.Cs.middleCols(0, C) = (f.I.middleCols(0, C).array() * f.G.middleCols(0, C).array()).matrix();
    f.TC.middleCols(t * C, C) = f.Cs.middleCols(t * C, C).array().tanh().matrix();
    f.Hs.middleCols(t * C, C) = (f.O.middleCols(t * C, C).array() * f.TC.middleCols(t * C, C).array()).matrix();
  }
  f.A1 = model.tensor(L.W1) * f.Hs.middleCols((n - 1) * C, C);
  f.A1.colwise() += model.tensor(L.b1).col(0);
  f.R1 = f.A1.cwiseMax(0.0);
  f.Y = model.tensor(L.W2) * f.R1;
  f.Y.colwise() += model.tensor(L.b2).col(0);
  f.Y = (f.Y.array().colwise() * model.norm.output_scale.array()).colwise() + model.norm.output_offset.array();
}

void chunk_gradient(const Model& model, Batch items, double denom, LossGrad& out) {
  const auto& sh = model.shape();
  const auto& L = model.layout();
  const Eigen::Index H = sh.hidden;
  const auto C = static_cast<Eigen::Index>(items.size());
  const auto n = items[0]->input.rows();
  ChunkForward f;
  forward_chunk(model, C, n, [&](Eigen::Index w) -> const Matrix& { return items[static_cast<std::size_t>(w)]->input; }, f);

  Mat T(sh.output, C);
  for (Eigen::Index w = 0; w < C; ++w) T.col(w) = items[static_cast<std::size_t>(w)]->target;
  const Mat E = f.Y - T;
  out.loss = E.squaredNorm() / denom;

  Model g(sh, model.meta);
  const Mat dZ2 = ((2.0 / denom) * E).array().colwise() * model.norm.output_scale.array();
  g.tensor(L.W2).noalias() = dZ2 * f.R1.transpose();
  g.tensor(L.b2) = dZ2.rowwise().sum();
  const Mat dA1 = ((model.tensor(L.W2).transpose() * dZ2).array() * (f.A1.array() > 0.0).cast<double>()).matrix();
  const auto h_last = f.Hs.middleCols((n - 1) * C, C);
  g.tensor(L.W1).noalias() = dA1 * h_last.transpose();
  g.tensor(L.b1) = dA1.rowwise().sum();

  Mat dH = model.tensor(L.W1).transpose() * dA1;
  Mat dC = Mat::Zero(H, C);
  Mat dZ(4 * H, n * C);
  const auto U = model.tensor(L.U);
  for (Eigen::Index t = n; t-- > 0;) {
    const auto cols = [&](const Mat& m) { return m.middleCols(t * C, C).array(); };
    const auto i = cols(f.I), fg = cols(f.F), gg = cols(f.G), o = cols(f.O), tc = cols(f.TC);
    dC.array() += dH.array() * o * (1.0 - tc.square());
    auto dz = dZ.middleCols(t * C, C);
    dz.topRows(H) = (dC.array() * gg * i * (1.0 - i)).matrix();
    if (t > 0)
      dz.middleRows(H, H) = (dC.array() * f.Cs.middleCols((t - 1) * C, C).array() * fg * (1.0 - fg)).matrix();
    else
      dz.middleRows(H, H).setZero();
    dz.middleRows(2 * H, H) = (dC.array() * i * (1.0 - gg.square())).matrix();
    dz.bottomRows(H) = (dH.array() * tc * o * (1.0 - o)).matrix();
    dC.array() *= fg;
    if (t > 0) dH.noalias() = U.transpose() * dz;
  }
  g.tensor(L.W).noalias() = dZ * f.X.transpose();
  g.tensor(L.b) = dZ.rowwise().sum();
  if (n > 1) g.tensor(L.U).noalias() = dZ.rightCols((n - 1) * C) * f.Hs.leftCols((n - 1) * C).transpose();
  out.grad = std::move(g.params());
}

void check_batch(const Model& model, Batch batch) {
  if (batch.empty()) throw ConfigError("empty batch");
  const auto n = batch[0]->input.rows();
  if (n < 1) throw DimensionError("empty window");
  for (const auto* item : batch) {
    if (item->input.cols() != model.shape().input)
      throw DimensionError("window has " + std::to_string(item->input.cols()) + " channels, model expects " +
                           std::to_string(model.shape().input));
    if (item->input.rows() != n) throw DimensionError("windows in a batch must share the same length");
    if (item->target.size() != model.shape().output) throw DimensionError("target size does not match model output");
  }
}

}  // namespace

LossGrad loss_and_gradient(const Model& model, Batch batch) {
  check_batch(model, batch);
  const double denom = static_cast<double>(batch.size()) * model.shape().output;
  const std::size_t chunks = (batch.size() + kChunk - 1) / kChunk;
  std::vector<LossGrad> partial(chunks);
#pragma omp parallel for schedule(static)
  for (std::size_t k = 0; k < chunks; ++k) {
    const std::size_t lo = k * kChunk;
    const std::size_t len = std::min(kChunk, batch.size() - lo);
    chunk_gradient(model, batch.subspan(lo, len), denom, partial[k]);
  }
  LossGrad out = std::move(partial[0]);
  for (std::size_t k = 1; k < chunks; ++k) {
    out.loss += partial[k].loss;
    out.grad += partial[k].grad;
  }
  return out;
}

Matrix predict_many(const Model& model, std::span<const Matrix* const> windows) {
  const auto& sh = model.shape();
  Matrix out(static_cast<Eigen::Index>(windows.size()), sh.output);
  if (windows.empty()) return out;
  const auto n = windows[0]->rows();
  if (n < 1) throw DimensionError("empty window");
  for (const auto* w : windows) {
    if (w->cols() != sh.input)
      throw DimensionError("window has " + std::to_string(w->cols()) + " channels, model expects " +
                           std::to_string(sh.input));
    if (w->rows() != n) throw DimensionError("windows must share the same length");
  }
  const std::size_t chunks = (windows.size() + kChunk - 1) / kChunk;
#pragma omp parallel for schedule(static)
  for (std::size_t k = 0; k < chunks; ++k) {
    const std::size_t lo = k * kChunk;
    const auto len = static_cast<Eigen::Index>(std::min(kChunk, windows.size() - lo));
    ChunkForward f;
    forward_chunk(model, len, n, [&](Eigen::Index w) -> const Matrix& { return *windows[lo + static_cast<std::size_t>(w)]; }, f);
    out.middleRows(static_cast<Eigen::Index>(lo), len) = f.Y.cwiseMax(0.0).transpose();
  }
  return out;
}

}  // namespace gaitloop::neural
