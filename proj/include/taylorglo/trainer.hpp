#pragma once

#include "taylorglo/dataset.hpp"
#include "taylorglo/mlp.hpp"
#include "taylorglo/taylor.hpp"

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace taylorglo {

/// A classification loss seen from one example: x is the one-hot target, y
/// the softmax output. Training consumes only the value and dLoss/dy.
class Loss {
public:
  virtual ~Loss() = default;
  virtual double value(std::span<const double> x, std::span<const double> y) const = 0;
  virtual void grad_y(std::span<const double> x, std::span<const double> y,
                      std::span<double> out) const = 0;
  virtual std::string name() const = 0;
};

class CrossEntropyLoss final : public Loss {
public:
  double value(std::span<const double> x, std::span<const double> y) const override;
  void grad_y(std::span<const double> x, std::span<const double> y, std::span<double> out) const override;
  std::string name() const override { return "crossentropy"; }
};

class TaylorLoss final : public Loss {
public:
  TaylorLoss(TermTable table, std::vector<double> theta);
  double value(std::span<const double> x, std::span<const double> y) const override;
  void grad_y(std::span<const double> x, std::span<const double> y, std::span<double> out) const override;
  std::string name() const override { return "taylor"; }

  const TermTable& table() const { return table_; }
  const std::vector<double>& theta() const { return theta_; }

private:
  TermTable table_;
  std::vector<double> theta_;
};

struct TrainConfig {
  int steps = 2000;
  int batch_size = 100;
  double learning_rate = 0.01;
  std::uint64_t seed = 0;  // minibatch order
  int eval_interval = 0;   // steps between validation checkpoints; 0 disables
};

struct EvalOutcome {
  double accuracy = 0.0;  // validation accuracy
  bool diverged = false;
  bool aborted = false;  // stopped by the checkpoint hook
  int steps_completed = 0;
};

/// Called after every `eval_interval` steps with the validation accuracy at
/// that point. Returning false stops training.
using CheckpointHook = std::function<bool(int step, double validation_accuracy)>;

/// Minibatch SGD on the mean per-example loss. The loss gradient with respect
/// to the softmax output is pulled back through the softmax Jacobian and then
/// through the hidden layers. A non-finite loss, gradient, or weight ends
/// training with `diverged` set; accuracy is then the last checkpoint value
/// (0 if there was none).
EvalOutcome train_sgd(MlpModel& model, const Dataset& data, const Loss& loss,
                      const TrainConfig& config, const CheckpointHook& hook = {});

/// Mean loss and parameter gradients for the given examples. Exposed for
/// gradient checks.
double batch_loss_and_grad(const MlpModel& model, const Dataset& data,
                           std::span<const std::size_t> examples, const Loss& loss,
                           std::vector<Layer>& grads);
double batch_loss(const MlpModel& model, const Dataset& data,
                  std::span<const std::size_t> examples, const Loss& loss);

/// Fraction of argmax predictions equal to the label; ties go to the lowest
/// class index.
double accuracy(const MlpModel& model, const Dataset& data, Split split);
double accuracy(const MlpModel& model, const Dataset& data, std::span<const std::size_t> examples);

int argmax_lowest(std::span<const double> v);

/// Gaussian direction in flattened parameter space, rescaled per layer so each
/// layer's block has the same norm as that layer's parameters.
std::vector<double> basin_direction(const MlpModel& model, std::mt19937_64& rng);

struct BasinGrid {
  std::vector<double> u;  // row coordinates
  std::vector<double> v;  // column coordinates
  std::vector<std::vector<double>> accuracy;  // accuracy[i][j] at (u[i], v[j])
};

/// Accuracy of W + u*d1 + v*d2 over a grid x grid lattice on
/// [-extent, extent]^2. grid must be odd so the origin is a lattice point.
BasinGrid basin_slice(const MlpModel& model, std::span<const double> d1,
                      std::span<const double> d2, int grid, double extent,
                      const Dataset& data, Split split);

void write_basin_csv(std::ostream& os, const BasinGrid& grid);

}  // namespace taylorglo
