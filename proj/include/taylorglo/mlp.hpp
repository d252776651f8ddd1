#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <vector>

namespace taylorglo {

struct Layer {
  Eigen::MatrixXd weights;  // out x in
  Eigen::VectorXd biases;
};

/// Feed-forward classifier: ReLU hidden layers and a softmax output layer.
/// Batches are matrices with one example per column.
class MlpModel {
public:
  MlpModel() = default;
  /// He-normal weights, zero biases. dims = {input, hidden..., n_classes}.
  MlpModel(const std::vector<int>& dims, std::uint64_t seed);

  std::vector<int> dims() const;
  int n_classes() const { return static_cast<int>(layers_.back().weights.rows()); }
  std::uint64_t seed() const { return seed_; }

  std::vector<Layer>& layers() { return layers_; }
  const std::vector<Layer>& layers() const { return layers_; }

  /// Class probabilities, n_classes x batch.
  Eigen::MatrixXd forward(const Eigen::MatrixXd& inputs) const;

  /// Forward pass that keeps every layer's post-activation output for
  /// backprop: activations[0] is the input, activations.back() the softmax.
  void forward(const Eigen::MatrixXd& inputs, std::vector<Eigen::MatrixXd>& activations) const;

  /// Given dLoss/dLogits (n_classes x batch) and the cached activations,
  /// fills per-layer weight and bias gradients.
  void backward(const std::vector<Eigen::MatrixXd>& activations, Eigen::MatrixXd grad_logits,
                std::vector<Layer>& grads) const;

  std::size_t param_count() const;
  /// Layer by layer: weights (column-major), then biases.
  std::vector<double> flat_params() const;
  void set_flat_params(const std::vector<double>& params);

  bool all_finite() const;

  void save(const std::filesystem::path& path) const;
  static MlpModel load(const std::filesystem::path& path);

  friend bool operator==(const MlpModel& a, const MlpModel& b);

private:
  std::vector<Layer> layers_;
  std::uint64_t seed_ = 0;
};

/// Column-wise softmax with max subtraction.
Eigen::MatrixXd softmax_columns(const Eigen::MatrixXd& logits);

}  // namespace taylorglo
