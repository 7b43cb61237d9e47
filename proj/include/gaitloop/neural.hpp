// SPDX-License-Identifier: Apache-2.0
//
// Plantar force predictor: an LSTM over n standardized IMU frames whose last
// hidden state feeds a fully connected head (hidden -> 16 ReLU -> 2k linear).
//
// All trainable tensors live in one flat vector; ParamLayout gives the
// offset of each tensor. Gate blocks of W, U and b are stacked in the order
// input, forget, candidate, output.
#pragma once

#include "gaitloop/core.hpp"
#include "gaitloop/ingest.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace gaitloop::neural {

inline constexpr int kFormatVersion = 1;

struct ModelShape {
  int input = 12;        ///< 6m
  int hidden = 32;       ///< LSTM state size
  int head_hidden = 16;  ///< FC hidden layer
  int output = 6;        ///< 2k

  bool operator==(const ModelShape&) const = default;
};

struct ParamLayout {
  struct Slot {
    std::size_t offset = 0;
    int rows = 0;
    int cols = 0;
    std::size_t size() const { return static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols); }
  };
  Slot W, U, b, W1, b1, W2, b2;
  std::size_t total = 0;

  explicit ParamLayout(const ModelShape& shape);
  std::vector<std::pair<std::string, Slot>> named() const;
};

struct ModelMeta {
  int n = 20;
  int s = 20;
  int rate_hz = 100;
  int imu_count = 2;
  int cells_per_foot = 3;
  std::string subject_id;
  int format_version = kFormatVersion;

  bool operator==(const ModelMeta&) const = default;
};

/// Fixed affine maps around the network: inputs are standardized with
/// (mean, std); the last linear layer's output z maps to Newtons as
/// scale * z + offset. Identity by default.
struct Normalization {
  Vector input_mean;
  Vector input_std;
  Vector output_scale;
  Vector output_offset;
};

using ConstMatrixMap = Eigen::Map<const Eigen::MatrixXd>;
using MatrixMap = Eigen::Map<Eigen::MatrixXd>;

class Model {
 public:
  Model(const ModelShape& shape, const ModelMeta& meta);

  const ModelShape& shape() const { return shape_; }
  const ParamLayout& layout() const { return layout_; }

  Vector& params() { return params_; }
  const Vector& params() const { return params_; }

  ConstMatrixMap tensor(const ParamLayout::Slot& slot) const;
  MatrixMap tensor(const ParamLayout::Slot& slot);

  ModelMeta meta;
  Normalization norm;

  /// Throws ConfigError when the model cannot serve windows of this shape.
  void check_compatible(std::size_t n, std::size_t s, const SensorLayout& layout, int rate_hz) const;

 private:
  ModelShape shape_;
  ParamLayout layout_;
  Vector params_;
};

/// Uniform +-1/sqrt(fan_in) weights, zero biases, forget-gate bias +1.
void init_params(Model& model, std::uint64_t seed);

struct LstmState {
  Vector h;
  Vector c;
};

/// One LSTM step on an already standardized input.
LstmState lstm_step(const Model& model, const Eigen::Ref<const Vector>& x, const Vector& h_prev,
                    const Vector& c_prev);

/// Network output before the non-negativity clamp; `window` holds raw IMU rows.
Vector forward_raw(const Model& model, const Eigen::Ref<const Matrix>& window);

/// Predicted plantar force for frame t+s, clamped at 0 N.
Vector forward(const Model& model, const Eigen::Ref<const Matrix>& window);

using Batch = std::span<const ingest::WindowPair* const>;

/// Mean squared error over every output of every batch item (unclamped).
double loss(const Model& model, Batch batch);

/// Gradient of `loss` with respect to every parameter (flat, ParamLayout order).
Vector backward(const Model& model, Batch batch);

struct LossGrad {
  double loss = 0.0;
  Vector grad;
};

/// Batched BPTT. Items are processed in fixed-size chunks in parallel and
/// reduced in chunk order, so the result does not depend on thread count.
LossGrad loss_and_gradient(const Model& model, Batch batch);

/// Clamped predictions for many windows, parallel over windows.
Matrix predict_many(const Model& model, std::span<const Matrix* const> windows);

namespace serial {
/// Per-item, plain-loop reference implementations kept for testing and
/// benchmarking the batched kernels.
LossGrad loss_and_gradient(const Model& model, Batch batch);
Vector forward_raw(const Model& model, const Matrix& window);
Matrix predict_many(const Model& model, std::span<const Matrix* const> windows);
}  // namespace serial

struct TrainConfig {
  double learning_rate = 1e-3;
  std::size_t batch_size = 64;
  int epochs = 100;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  int patience = 10;
  std::uint64_t rng_seed = 1;
  std::size_t stride = 5;
  double validation_fraction = 0.1;
  int hidden = 32;
  int head_hidden = 16;

  void validate() const;
};

struct EpochLog {
  int epoch = 0;
  double train_mse = 0.0;
  double val_mse = 0.0;
  double wall_time_s = 0.0;
};

struct TrainResult {
  Model model;
  std::vector<EpochLog> log;
  int best_epoch = 0;
};

/// Adam over shuffled mini-batches; returns the parameters with the lowest
/// validation MSE. Throws NumericError if the loss becomes non-finite.
TrainResult train(const std::vector<const GaitTrial*>& trials, std::size_t n, std::size_t s,
                  const TrainConfig& config, const std::string& subject_id = {});

/// CSV: epoch,train_mse,val_mse,wall_time_s
std::string training_log_csv(const std::vector<EpochLog>& log);

struct AdamState {
  Vector m;
  Vector v;
  long step = 0;
};
void adam_update(Vector& params, const Vector& grad, AdamState& state, const TrainConfig& config);

std::string serialize_model(const Model& model);
Model deserialize_model(std::string_view bytes);
void save_model(const Model& model, const std::filesystem::path& path);
Model load_model(const std::filesystem::path& path);

}  // namespace gaitloop::neural
