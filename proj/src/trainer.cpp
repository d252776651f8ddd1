#include "taylorglo/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>
#include <stdexcept>

namespace taylorglo {

double CrossEntropyLoss::value(std::span<const double> x, std::span<const double> y) const {
  return cross_entropy_loss(x, y);
}

void CrossEntropyLoss::grad_y(std::span<const double> x, std::span<const double> y,
                              std::span<double> out) const {
  cross_entropy_grad(x, y, out);
}

TaylorLoss::TaylorLoss(TermTable table, std::vector<double> theta)
    : table_(std::move(table)), theta_(std::move(theta)) {
  if (theta_.size() != table_.param_count())
    throw std::invalid_argument("theta length does not match the Taylor term table");
}

double TaylorLoss::value(std::span<const double> x, std::span<const double> y) const {
  return taylor_loss(table_, theta_, x, y);
}

void TaylorLoss::grad_y(std::span<const double> x, std::span<const double> y,
                        std::span<double> out) const {
  taylor_grad_y(table_, theta_, x, y, out);
}

namespace {

Eigen::MatrixXd gather(const Dataset& data, std::span<const std::size_t> examples) {
  const auto& f = data.features();
  Eigen::MatrixXd batch(f.rows(), static_cast<Eigen::Index>(examples.size()));
  for (std::size_t b = 0; b < examples.size(); ++b)
    batch.col(static_cast<Eigen::Index>(b)) = f.col(static_cast<Eigen::Index>(examples[b]));
  return batch;
}

bool grads_finite(const std::vector<Layer>& grads) {
  for (const auto& g : grads)
    if (!g.weights.allFinite() || !g.biases.allFinite()) return false;
  return true;
}

}  // namespace

double batch_loss_and_grad(const MlpModel& model, const Dataset& data,
                           std::span<const std::size_t> examples, const Loss& loss,
                           std::vector<Layer>& grads) {
  if (examples.empty()) throw std::invalid_argument("empty batch");
  if (data.input_dim() != static_cast<std::size_t>(model.dims().front()) ||
      data.n_classes() != model.n_classes())
    throw std::invalid_argument("model and dataset dimensions differ");

  std::vector<Eigen::MatrixXd> acts;
  model.forward(gather(data, examples), acts);
  const Eigen::MatrixXd& probs = acts.back();
  const auto n_classes = static_cast<std::size_t>(probs.rows());
  const double inv_batch = 1.0 / static_cast<double>(examples.size());

  Eigen::MatrixXd grad_logits(probs.rows(), probs.cols());
  std::vector<double> target(n_classes, 0.0);
  std::vector<double> g(n_classes);
  double total = 0.0;
  for (std::size_t b = 0; b < examples.size(); ++b) {
    const int label = data.labels()[examples[b]];
    target[static_cast<std::size_t>(label)] = 1.0;
    std::span<const double> y(probs.col(static_cast<Eigen::Index>(b)).data(), n_classes);
    total += loss.value(target, y);
    loss.grad_y(target, y, g);
    // Softmax Jacobian: dL/dz_j = y_j * (g_j - sum_k g_k y_k).
    double gy = 0.0;
    for (std::size_t k = 0; k < n_classes; ++k) gy += g[k] * y[k];
    for (std::size_t j = 0; j < n_classes; ++j)
      grad_logits(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(b)) = y[j] * (g[j] - gy) * inv_batch;
    target[static_cast<std::size_t>(label)] = 0.0;
  }
  model.backward(acts, std::move(grad_logits), grads);
  return total * inv_batch;
}

double batch_loss(const MlpModel& model, const Dataset& data,
                  std::span<const std::size_t> examples, const Loss& loss) {
  if (examples.empty()) throw std::invalid_argument("empty batch");
  const Eigen::MatrixXd probs = model.forward(gather(data, examples));
  const auto n_classes = static_cast<std::size_t>(probs.rows());
  std::vector<double> target(n_classes, 0.0);
  double total = 0.0;
  for (std::size_t b = 0; b < examples.size(); ++b) {
    const auto label = static_cast<std::size_t>(data.labels()[examples[b]]);
    target[label] = 1.0;
    total += loss.value(target, {probs.col(static_cast<Eigen::Index>(b)).data(), n_classes});
    target[label] = 0.0;
  }
  return total / static_cast<double>(examples.size());
}

EvalOutcome train_sgd(MlpModel& model, const Dataset& data, const Loss& loss,
                      const TrainConfig& config, const CheckpointHook& hook) {
  if (config.steps < 1) throw std::invalid_argument("steps must be >= 1");
  if (config.batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (!(config.learning_rate > 0.0)) throw std::invalid_argument("learning_rate must be > 0");
  if (config.eval_interval < 0) throw std::invalid_argument("eval_interval must be >= 0");
  const auto& train = data.indices(Split::Train);
  if (train.empty()) throw std::invalid_argument("training split is empty");

  std::mt19937_64 rng(config.seed);
  std::vector<std::size_t> order(train);
  std::shuffle(order.begin(), order.end(), rng);
  const std::size_t batch = std::min<std::size_t>(static_cast<std::size_t>(config.batch_size), order.size());
  std::size_t cursor = 0;

  EvalOutcome outcome;
  double last_checkpoint = 0.0;
  bool have_checkpoint = false;
  std::vector<Layer> grads;

  for (int step = 1; step <= config.steps; ++step) {
    if (cursor + batch > order.size()) {
      std::shuffle(order.begin(), order.end(), rng);
      cursor = 0;
    }
    std::span<const std::size_t> examples(order.data() + cursor, batch);
    cursor += batch;

    const double value = batch_loss_and_grad(model, data, examples, loss, grads);
    if (!std::isfinite(value) || !grads_finite(grads)) {
      outcome.diverged = true;
      break;
    }
    auto& layers = model.layers();
    for (std::size_t l = 0; l < layers.size(); ++l) {
      layers[l].weights.noalias() -= config.learning_rate * grads[l].weights;
      layers[l].biases.noalias() -= config.learning_rate * grads[l].biases;
    }
    outcome.steps_completed = step;
    if (!model.all_finite()) {
      outcome.diverged = true;
      break;
    }

    if (config.eval_interval > 0 && step % config.eval_interval == 0) {
      last_checkpoint = accuracy(model, data, Split::Validation);
      have_checkpoint = true;
      if (hook && !hook(step, last_checkpoint)) {
        outcome.aborted = true;
        break;
      }
    }
  }

  if (outcome.diverged)
    outcome.accuracy = have_checkpoint ? last_checkpoint : 0.0;
  else if (have_checkpoint && config.eval_interval > 0 &&
           outcome.steps_completed % config.eval_interval == 0)
    outcome.accuracy = last_checkpoint;
  else
    outcome.accuracy = accuracy(model, data, Split::Validation);
  return outcome;
}

int argmax_lowest(std::span<const double> v) {
  int best = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[static_cast<std::size_t>(best)]) best = static_cast<int>(i);
  return best;
}

double accuracy(const MlpModel& model, const Dataset& data, std::span<const std::size_t> examples) {
  if (examples.empty()) throw std::invalid_argument("accuracy on an empty split");
  constexpr std::size_t kChunk = 1024;
  std::size_t correct = 0;
  for (std::size_t start = 0; start < examples.size(); start += kChunk) {
    const auto chunk = examples.subspan(start, std::min(kChunk, examples.size() - start));
    const Eigen::MatrixXd probs = model.forward(gather(data, chunk));
    const auto n_classes = static_cast<std::size_t>(probs.rows());
    for (std::size_t b = 0; b < chunk.size(); ++b) {
      const int pred = argmax_lowest({probs.col(static_cast<Eigen::Index>(b)).data(), n_classes});
      if (pred == data.labels()[chunk[b]]) ++correct;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(examples.size());
}

double accuracy(const MlpModel& model, const Dataset& data, Split split) {
  return accuracy(model, data, std::span<const std::size_t>(data.indices(split)));
}

std::vector<double> basin_direction(const MlpModel& model, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> dir;
  dir.reserve(model.param_count());
  for (const auto& layer : model.layers()) {
    const std::size_t begin = dir.size();
    const auto n = static_cast<std::size_t>(layer.weights.size() + layer.biases.size());
    double dnorm = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      dir.push_back(normal(rng));
      dnorm += dir.back() * dir.back();
    }
    dnorm = std::sqrt(dnorm);
    const double wnorm = std::sqrt(layer.weights.squaredNorm() + layer.biases.squaredNorm());
    const double scale = dnorm > 0.0 ? wnorm / dnorm : 0.0;
    for (std::size_t i = begin; i < dir.size(); ++i) dir[i] *= scale;
  }
  return dir;
}

BasinGrid basin_slice(const MlpModel& model, std::span<const double> d1,
                      std::span<const double> d2, int grid, double extent,
                      const Dataset& data, Split split) {
  if (grid < 3 || grid % 2 == 0) throw std::invalid_argument("basin grid must be odd and >= 3");
  const std::vector<double> base = model.flat_params();
  if (d1.size() != base.size() || d2.size() != base.size())
    throw std::invalid_argument("basin direction shape does not match the model");

  BasinGrid out;
  const int half = grid / 2;
  for (int i = -half; i <= half; ++i) {
    const double c = i == 0 ? 0.0 : extent * i / half;
    out.u.push_back(c);
    out.v.push_back(c);
  }

  MlpModel probe = model;
  std::vector<double> w(base.size());
  out.accuracy.assign(static_cast<std::size_t>(grid), std::vector<double>(static_cast<std::size_t>(grid)));
  for (std::size_t i = 0; i < out.u.size(); ++i) {
    for (std::size_t j = 0; j < out.v.size(); ++j) {
      if (out.u[i] == 0.0 && out.v[j] == 0.0) {
        out.accuracy[i][j] = accuracy(model, data, split);
        continue;
      }
      for (std::size_t p = 0; p < base.size(); ++p) w[p] = base[p] + out.u[i] * d1[p] + out.v[j] * d2[p];
      probe.set_flat_params(w);
      out.accuracy[i][j] = accuracy(probe, data, split);
    }
  }
  return out;
}

void write_basin_csv(std::ostream& os, const BasinGrid& grid) {
  char buf[32];
  os << "u\\v";
  for (double v : grid.v) {
    std::snprintf(buf, sizeof buf, ",%.9g", v);
    os << buf;
  }
  os << '\n';
  for (std::size_t i = 0; i < grid.u.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.9g", grid.u[i]);
    os << buf;
    for (double a : grid.accuracy[i]) {
      std::snprintf(buf, sizeof buf, ",%.9g", a);
      os << buf;
    }
    os << '\n';
  }
}

}  // namespace taylorglo
