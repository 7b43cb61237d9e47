// SPDX-License-Identifier: Apache-2.0
//
// Reference kernels: one window at a time, explicit loops, no batching.
#include "gaitloop/errors.hpp"
#include "gaitloop/neural.hpp"

#include <cmath>
#include <vector>

namespace gaitloop::neural::serial {
namespace {

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

struct StepCache {
  Vector x, i, f, g, o, c, tc, h;
};

struct ItemCache {
  std::vector<StepCache> steps;
  Vector a1, r1, y;
};

void forward_item(const Model& model, const Matrix& window, ItemCache& cache) {
  const auto& sh = model.shape();
  const auto& L = model.layout();
  const int H = sh.hidden;
  const auto W = model.tensor(L.W);
  const auto U = model.tensor(L.U);
  const auto b = model.tensor(L.b);
  const auto n = static_cast<std::size_t>(window.rows());
  cache.steps.assign(n, {});
  Vector h_prev = Vector::Zero(H), c_prev = Vector::Zero(H);
  for (std::size_t t = 0; t < n; ++t) {
    StepCache& st = cache.steps[t];
    st.x.resize(sh.input);
    for (int j = 0; j < sh.input; ++j)
      st.x[j] = (window(static_cast<Eigen::Index>(t), j) - model.norm.input_mean[j]) / model.norm.input_std[j];
    st.i.resize(H); st.f.resize(H); st.g.resize(H); st.o.resize(H);
    st.c.resize(H); st.tc.resize(H); st.h.resize(H);
    for (int k = 0; k < 4 * H; ++k) {
      double z = b(k, 0);
      for (int j = 0; j < sh.input; ++j) z += W(k, j) * st.x[j];
      for (int j = 0; j < H; ++j) z += U(k, j) * h_prev[j];
      const int gate = k / H, u = k % H;
      switch (gate) {
        case 0: st.i[u] = sigmoid(z); break;
        case 1: st.f[u] = sigmoid(z); break;
        case 2: st.g[u] = std::tanh(z); break;
        default: st.o[u] = sigmoid(z); break;
      }
    }
    for (int u = 0; u < H; ++u) {
      st.c[u] = st.f[u] * c_prev[u] + st.i[u] * st.g[u];
      st.tc[u] = std::tanh(st.c[u]);
      st.h[u] = st.o[u] * st.tc[u];
    }
    h_prev = st.h;
    c_prev = st.c;
  }
  const auto W1 = model.tensor(L.W1);
  const auto b1 = model.tensor(L.b1);
  const auto W2 = model.tensor(L.W2);
  const auto b2 = model.tensor(L.b2);
  cache.a1.resize(sh.head_hidden);
  cache.r1.resize(sh.head_hidden);
  for (int a = 0; a < sh.head_hidden; ++a) {
    double z = b1(a, 0);
    for (int u = 0; u < H; ++u) z += W1(a, u) * h_prev[u];
    cache.a1[a] = z;
    cache.r1[a] = z > 0.0 ? z : 0.0;
  }
  cache.y.resize(sh.output);
  for (int q = 0; q < sh.output; ++q) {
    double z = b2(q, 0);
    for (int a = 0; a < sh.head_hidden; ++a) z += W2(q, a) * cache.r1[a];
    cache.y[q] = model.norm.output_scale[q] * z + model.norm.output_offset[q];
  }
}

void check_window(const Model& model, const Matrix& window) {
  if (window.cols() != model.shape().input)
    throw DimensionError("window has " + std::to_string(window.cols()) + " channels, model expects " +
                         std::to_string(model.shape().input));
  if (window.rows() < 1) throw DimensionError("empty window");
}

}  // namespace

Vector forward_raw(const Model& model, const Matrix& window) {
  check_window(model, window);
  ItemCache cache;
  forward_item(model, window, cache);
  return cache.y;
}

Matrix predict_many(const Model& model, std::span<const Matrix* const> windows) {
  Matrix out(static_cast<Eigen::Index>(windows.size()), model.shape().output);
  for (std::size_t w = 0; w < windows.size(); ++w)
    out.row(static_cast<Eigen::Index>(w)) = forward_raw(model, *windows[w]).cwiseMax(0.0).transpose();
  return out;
}

LossGrad loss_and_gradient(const Model& model, Batch batch) {
  if (batch.empty()) throw ConfigError("empty batch");
  const auto& sh = model.shape();
  const auto& L = model.layout();
  const int H = sh.hidden;
  const auto U = model.tensor(L.U);
  const auto W1 = model.tensor(L.W1);
  const auto W2 = model.tensor(L.W2);

  LossGrad out;
  Model grad_view(sh, model.meta);
  auto gW = grad_view.tensor(L.W);
  auto gU = grad_view.tensor(L.U);
  auto gb = grad_view.tensor(L.b);
  auto gW1 = grad_view.tensor(L.W1);
  auto gb1 = grad_view.tensor(L.b1);
  auto gW2 = grad_view.tensor(L.W2);
  auto gb2 = grad_view.tensor(L.b2);

  const double denom = static_cast<double>(batch.size()) * sh.output;
  ItemCache cache;
  Vector dz(4 * H), dh(H), dc(H), dh_prev(H);
  for (const auto* item : batch) {
    check_window(model, item->input);
    if (item->target.size() != sh.output) throw DimensionError("target size does not match model output");
    forward_item(model, item->input, cache);

    Vector dr1 = Vector::Zero(sh.head_hidden);
    for (int q = 0; q < sh.output; ++q) {
      const double e = cache.y[q] - item->target[q];
      out.loss += e * e / denom;
      const double dz2 = 2.0 * e / denom * model.norm.output_scale[q];
      gb2(q, 0) += dz2;
      for (int a = 0; a < sh.head_hidden; ++a) {
        gW2(q, a) += dz2 * cache.r1[a];
        dr1[a] += W2(q, a) * dz2;
      }
    }
    const std::size_t n = cache.steps.size();
    dh.setZero();
    for (int a = 0; a < sh.head_hidden; ++a) {
      const double da = cache.a1[a] > 0.0 ? dr1[a] : 0.0;
      gb1(a, 0) += da;
      for (int u = 0; u < H; ++u) {
        gW1(a, u) += da * cache.steps[n - 1].h[u];
        dh[u] += W1(a, u) * da;
      }
    }
    dc.setZero();
    for (std::size_t t = n; t-- > 0;) {
      const StepCache& st = cache.steps[t];
      for (int u = 0; u < H; ++u) {
        const double c_prev = t > 0 ? cache.steps[t - 1].c[u] : 0.0;
        const double do_ = dh[u] * st.tc[u];
        dc[u] += dh[u] * st.o[u] * (1.0 - st.tc[u] * st.tc[u]);
        const double di = dc[u] * st.g[u];
        const double dg = dc[u] * st.i[u];
        const double df = dc[u] * c_prev;
        dz[u] = di * st.i[u] * (1.0 - st.i[u]);
        dz[H + u] = df * st.f[u] * (1.0 - st.f[u]);
        dz[2 * H + u] = dg * (1.0 - st.g[u] * st.g[u]);
        dz[3 * H + u] = do_ * st.o[u] * (1.0 - st.o[u]);
        dc[u] *= st.f[u];
      }
      dh_prev.setZero();
      for (int k = 0; k < 4 * H; ++k) {
        gb(k, 0) += dz[k];
        for (int j = 0; j < sh.input; ++j) gW(k, j) += dz[k] * st.x[j];
        if (t > 0) {
          const Vector& hp = cache.steps[t - 1].h;
          for (int j = 0; j < H; ++j) gU(k, j) += dz[k] * hp[j];
        }
        for (int j = 0; j < H; ++j) dh_prev[j] += U(k, j) * dz[k];
      }
      dh = dh_prev;
    }
  }
  out.grad = grad_view.params();
  return out;
}

}  // namespace gaitloop::neural::serial
