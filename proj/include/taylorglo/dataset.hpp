#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace taylorglo {

enum class Split { Train, Validation, Test };

Split parse_split(const std::string& name);
const char* split_name(Split split);

/// Labeled examples with fixed train/validation/test index sets.
///
/// Feature storage is one column per example and is shared between copies,
/// so restricting the training split (see `with_train_fraction`) is cheap.
class Dataset {
public:
  Dataset(Eigen::MatrixXd features, std::vector<int> labels, int n_classes,
          std::vector<std::size_t> train, std::vector<std::size_t> validation,
          std::vector<std::size_t> test);

  const Eigen::MatrixXd& features() const { return *features_; }
  const std::vector<int>& labels() const { return *labels_; }
  int n_classes() const { return n_classes_; }
  std::size_t input_dim() const { return static_cast<std::size_t>(features_->rows()); }
  std::size_t size() const { return labels_->size(); }

  const std::vector<std::size_t>& indices(Split split) const;

  /// Keeps the first floor(fraction * |train|) training examples. Throws if
  /// that leaves the training split empty.
  Dataset with_train_fraction(double fraction) const;
  /// Keeps at most `limit` training examples.
  Dataset with_train_limit(std::size_t limit) const;

private:
  std::shared_ptr<const Eigen::MatrixXd> features_;
  std::shared_ptr<const std::vector<int>> labels_;
  int n_classes_;
  std::vector<std::size_t> train_, validation_, test_;
};

class IdxError : public std::runtime_error {
public:
  enum class Kind { Io, BadMagic, Truncated, CountMismatch };
  IdxError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

private:
  Kind kind_;
};

inline constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;

/// Reads an IDX image/label file pair. Pixels are scaled to [0, 1]. The first
/// 11/12 of the examples form the training split and the rest validation
/// (55,000 / 5,000 for the MNIST training file); the test split is empty.
Dataset load_idx(const std::filesystem::path& images_path,
                 const std::filesystem::path& labels_path);

/// Loads the standard four MNIST files from `dir`; the t10k pair becomes the
/// test split. `train_limit` of 0 keeps every training example.
Dataset load_mnist(const std::filesystem::path& dir, std::size_t train_limit = 0);

/// Isotropic unit-variance Gaussian blobs. Class means sit on scaled basis
/// vectors so every pair of means is exactly `separation` apart; requires
/// input_dim >= n_classes. Examples are shuffled and split 60/20/20.
Dataset synthetic_dataset(std::uint64_t seed, int n_classes, int input_dim, int n_per_class,
                          double separation);

}  // namespace taylorglo
