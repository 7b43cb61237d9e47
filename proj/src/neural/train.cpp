// SPDX-License-Identifier: Apache-2.0
#include "gaitloop/csv.hpp"
#include "gaitloop/errors.hpp"
#include "gaitloop/neural.hpp"

#include <algorithm>
#include <chrono>
#include <iterator>
#include <limits>
#include <cmath>
#include <numeric>
#include <random>

namespace gaitloop::neural {

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw ConfigError("learning_rate must be positive");
  if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
  if (epochs < 1) throw ConfigError("epochs must be at least 1");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("Adam betas must be in [0, 1)");
  if (!(epsilon > 0.0)) throw ConfigError("epsilon must be positive");
  if (patience < 1) throw ConfigError("patience must be at least 1");
  if (stride < 1) throw ConfigError("stride must be at least 1");
  if (!(validation_fraction >= 0.0 && validation_fraction < 1.0))
    throw ConfigError("validation_fraction must be in [0, 1)");
  if (hidden < 1 || head_hidden < 1) throw ConfigError("layer sizes must be positive");
}

void adam_update(Vector& params, const Vector& grad, AdamState& state, const TrainConfig& config) {
  if (state.m.size() != params.size()) {
    state.m = Vector::Zero(params.size());
    state.v = Vector::Zero(params.size());
    state.step = 0;
  }
  ++state.step;
  state.m = config.beta1 * state.m + (1.0 - config.beta1) * grad;
  state.v = config.beta2 * state.v + (1.0 - config.beta2) * grad.cwiseAbs2();
  const double c1 = 1.0 - std::pow(config.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(config.beta2, static_cast<double>(state.step));
  params.array() -= config.learning_rate * (state.m.array() / c1) / ((state.v.array() / c2).sqrt() + config.epsilon);
}

namespace {

double batched_loss(const Model& model, const std::vector<const ingest::WindowPair*>& items, std::size_t batch) {
  double total = 0.0;
  for (std::size_t lo = 0; lo < items.size(); lo += batch) {
    const std::size_t len = std::min(batch, items.size() - lo);
    total += loss_and_gradient(model, Batch(items).subspan(lo, len)).loss * static_cast<double>(len);
  }
  return total / static_cast<double>(items.size());
}

}  // namespace

TrainResult train(const std::vector<const GaitTrial*>& trials, std::size_t n, std::size_t s,
                  const TrainConfig& config, const std::string& subject_id) {
  config.validate();
  if (trials.empty()) throw ConfigError("no training trials");
  if (n < 1) throw ConfigError("window length n must be at least 1");
  if (s < 1) throw ConfigError("horizon s must be at least 1");
  const GaitTrial& first = *trials.front();
  for (const auto* t : trials) {
    if (!(t->layout == first.layout)) throw ConfigError("training trials use different sensor layouts");
    if (!(t->clock == first.clock)) throw ConfigError("training trials use different sample rates");
  }

  std::vector<ingest::WindowPair> pairs;
  for (const auto* t : trials) {
    auto p = ingest::make_pairs(*t, n, s, config.stride);
    std::move(p.begin(), p.end(), std::back_inserter(pairs));
  }
  if (pairs.size() < 2)
    throw ConfigError("too few training pairs for n=" + std::to_string(n) + ", s=" + std::to_string(s));

  std::mt19937_64 rng(config.rng_seed);
  std::vector<std::size_t> order(pairs.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  std::size_t n_val = static_cast<std::size_t>(std::lround(config.validation_fraction * static_cast<double>(pairs.size())));
  if (config.validation_fraction > 0.0) n_val = std::clamp<std::size_t>(n_val, 1, pairs.size() - 1);
  std::vector<const ingest::WindowPair*> val, fit;
  for (std::size_t i = 0; i < order.size(); ++i) (i < n_val ? val : fit).push_back(&pairs[order[i]]);
  std::sort(val.begin(), val.end());

  const SensorLayout& layout = first.layout;
  ModelShape shape{layout.imu_dim(), config.hidden, config.head_hidden, layout.plantar_dim()};
  ModelMeta meta;
  meta.n = static_cast<int>(n);
  meta.s = static_cast<int>(s);
  meta.rate_hz = first.clock.rate_hz();
  meta.imu_count = layout.imu_count;
  meta.cells_per_foot = layout.cells_per_foot;
  meta.subject_id = subject_id.empty() ? first.subject_id : subject_id;
  Model model(shape, meta);

  const ingest::ChannelStats stats = ingest::imu_channel_stats(trials);
  model.norm.input_mean = stats.mean;
  model.norm.input_std = stats.stddev;
  Vector tmean = Vector::Zero(shape.output), tsq = Vector::Zero(shape.output);
  for (const auto* p : fit) {
    tmean += p->target;
    tsq += p->target.cwiseAbs2();
  }
  tmean /= static_cast<double>(fit.size());
  tsq /= static_cast<double>(fit.size());
  model.norm.output_offset = tmean;
  model.norm.output_scale = (tsq - tmean.cwiseAbs2()).cwiseMax(0.0).cwiseSqrt().cwiseMax(1.0);

  init_params(model, rng());

  TrainResult result{model, {}, 0};
  double best = std::numeric_limits<double>::infinity();
  int since_best = 0;
  AdamState adam;
  const auto start = std::chrono::steady_clock::now();
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    std::shuffle(fit.begin(), fit.end(), rng);
    double sum = 0.0;
    for (std::size_t lo = 0; lo < fit.size(); lo += config.batch_size) {
      const std::size_t len = std::min(config.batch_size, fit.size() - lo);
      LossGrad lg = loss_and_gradient(model, Batch(fit).subspan(lo, len));
      if (!std::isfinite(lg.loss) || !lg.grad.allFinite())
        throw NumericError("non-finite loss or gradient at epoch " + std::to_string(epoch));
      sum += lg.loss * static_cast<double>(len);
      adam_update(model.params(), lg.grad, adam, config);
    }
    if (!model.params().allFinite()) throw NumericError("non-finite parameters at epoch " + std::to_string(epoch));
    EpochLog row;
    row.epoch = epoch;
    row.train_mse = sum / static_cast<double>(fit.size());
    row.val_mse = val.empty() ? row.train_mse : batched_loss(model, val, 256);
    row.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (!std::isfinite(row.val_mse)) throw NumericError("non-finite validation loss at epoch " + std::to_string(epoch));
    result.log.push_back(row);
    if (row.val_mse < best) {
      best = row.val_mse;
      result.model = model;
      result.best_epoch = epoch;
      since_best = 0;
    } else if (++since_best >= config.patience) {
      break;
    }
  }
  return result;
}

std::string training_log_csv(const std::vector<EpochLog>& log) {
  std::string out = "epoch,train_mse,val_mse,wall_time_s\n";
  for (const auto& r : log)
    out += std::to_string(r.epoch) + "," + csv::format(r.train_mse) + "," + csv::format(r.val_mse) + "," +
           csv::format(r.wall_time_s) + "\n";
  return out;
}

}  // namespace gaitloop::neural
