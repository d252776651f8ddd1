#include "taylorglo/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numeric>
#include <random>

namespace taylorglo {

namespace {

std::vector<unsigned char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IdxError(IdxError::Kind::Io, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t read_be32(const std::vector<unsigned char>& buf, std::size_t offset,
                        const std::filesystem::path& path) {
  if (offset + 4 > buf.size())
    throw IdxError(IdxError::Kind::Truncated, path.string() + ": truncated header");
  return (std::uint32_t{buf[offset]} << 24) | (std::uint32_t{buf[offset + 1]} << 16) |
         (std::uint32_t{buf[offset + 2]} << 8) | std::uint32_t{buf[offset + 3]};
}

void expect_magic(std::uint32_t got, std::uint32_t want, const std::filesystem::path& path) {
  if (got != want) {
    char msg[96];
    std::snprintf(msg, sizeof msg, ": bad magic 0x%08x (expected 0x%08x)", got, want);
    throw IdxError(IdxError::Kind::BadMagic, path.string() + msg);
  }
}

}  // namespace

Split parse_split(const std::string& name) {
  if (name == "train") return Split::Train;
  if (name == "validation" || name == "val") return Split::Validation;
  if (name == "test") return Split::Test;
  throw std::invalid_argument("unknown split '" + name + "'");
}

const char* split_name(Split split) {
  switch (split) {
    case Split::Train: return "train";
    case Split::Validation: return "validation";
    case Split::Test: return "test";
  }
  return "?";
}

Dataset::Dataset(Eigen::MatrixXd features, std::vector<int> labels, int n_classes,
                 std::vector<std::size_t> train, std::vector<std::size_t> validation,
                 std::vector<std::size_t> test)
    : features_(std::make_shared<const Eigen::MatrixXd>(std::move(features))),
      labels_(std::make_shared<const std::vector<int>>(std::move(labels))),
      n_classes_(n_classes),
      train_(std::move(train)),
      validation_(std::move(validation)),
      test_(std::move(test)) {
  if (n_classes_ < 2) throw std::invalid_argument("dataset needs at least two classes");
  if (static_cast<std::size_t>(features_->cols()) != labels_->size())
    throw std::invalid_argument("feature and label counts differ");
  for (int l : *labels_)
    if (l < 0 || l >= n_classes_) throw std::invalid_argument("label out of range");
  std::vector<char> seen(labels_->size(), 0);
  for (const auto* split : {&train_, &validation_, &test_})
    for (std::size_t i : *split) {
      if (i >= seen.size()) throw std::invalid_argument("split index out of range");
      if (seen[i]) throw std::invalid_argument("splits overlap");
      seen[i] = 1;
    }
}

const std::vector<std::size_t>& Dataset::indices(Split split) const {
  switch (split) {
    case Split::Train: return train_;
    case Split::Validation: return validation_;
    case Split::Test: return test_;
  }
  return train_;
}

Dataset Dataset::with_train_fraction(double fraction) const {
  if (!(fraction > 0.0 && fraction <= 1.0))
    throw std::invalid_argument("train fraction must be in (0, 1]");
  const auto keep = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(train_.size())));
  if (keep == 0) throw std::invalid_argument("train fraction leaves no training examples");
  return with_train_limit(keep);
}

Dataset Dataset::with_train_limit(std::size_t limit) const {
  Dataset d = *this;
  if (limit < d.train_.size()) d.train_.resize(limit);
  return d;
}

Dataset load_idx(const std::filesystem::path& images_path,
                 const std::filesystem::path& labels_path) {
  const auto img = read_file(images_path);
  expect_magic(read_be32(img, 0, images_path), kIdxImagesMagic, images_path);
  const std::size_t n = read_be32(img, 4, images_path);
  const std::size_t rows = read_be32(img, 8, images_path);
  const std::size_t cols = read_be32(img, 12, images_path);
  const std::size_t pixels = rows * cols;
  if (img.size() < 16 + n * pixels)
    throw IdxError(IdxError::Kind::Truncated, images_path.string() + ": truncated pixel data");

  const auto lab = read_file(labels_path);
  expect_magic(read_be32(lab, 0, labels_path), kIdxLabelsMagic, labels_path);
  const std::size_t n_labels = read_be32(lab, 4, labels_path);
  if (lab.size() < 8 + n_labels)
    throw IdxError(IdxError::Kind::Truncated, labels_path.string() + ": truncated label data");
  if (n_labels != n)
    throw IdxError(IdxError::Kind::CountMismatch,
                   "image count " + std::to_string(n) + " != label count " + std::to_string(n_labels));

  Eigen::MatrixXd features(static_cast<Eigen::Index>(pixels), static_cast<Eigen::Index>(n));
  std::vector<int> labels(n);
  int max_label = 0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t p = 0; p < pixels; ++p)
      features(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(i)) = img[16 + i * pixels + p] / 255.0;
    labels[i] = lab[8 + i];
    max_label = std::max(max_label, labels[i]);
  }

  const std::size_t n_train = n * 11 / 12;
  std::vector<std::size_t> train(n_train), val(n - n_train);
  std::iota(train.begin(), train.end(), std::size_t{0});
  std::iota(val.begin(), val.end(), n_train);
  return Dataset(std::move(features), std::move(labels), std::max(10, max_label + 1),
                 std::move(train), std::move(val), {});
}

Dataset load_mnist(const std::filesystem::path& dir, std::size_t train_limit) {
  Dataset tr = load_idx(dir / "train-images-idx3-ubyte", dir / "train-labels-idx1-ubyte");
  Dataset te = load_idx(dir / "t10k-images-idx3-ubyte", dir / "t10k-labels-idx1-ubyte");
  if (tr.input_dim() != te.input_dim()) throw std::runtime_error("MNIST train/test image sizes differ");

  const auto n_tr = static_cast<Eigen::Index>(tr.size());
  const auto n_te = static_cast<Eigen::Index>(te.size());
  Eigen::MatrixXd features(tr.features().rows(), n_tr + n_te);
  features.leftCols(n_tr) = tr.features();
  features.rightCols(n_te) = te.features();
  std::vector<int> labels = tr.labels();
  labels.insert(labels.end(), te.labels().begin(), te.labels().end());

  std::vector<std::size_t> train = tr.indices(Split::Train);
  if (train_limit > 0 && train_limit < train.size()) train.resize(train_limit);
  std::vector<std::size_t> test(te.size());
  std::iota(test.begin(), test.end(), tr.size());
  return Dataset(std::move(features), std::move(labels), std::max(tr.n_classes(), te.n_classes()),
                 std::move(train), tr.indices(Split::Validation), std::move(test));
}

Dataset synthetic_dataset(std::uint64_t seed, int n_classes, int input_dim, int n_per_class,
                          double separation) {
  if (n_classes < 2) throw std::invalid_argument("synthetic dataset needs n_classes >= 2");
  if (input_dim < n_classes) throw std::invalid_argument("synthetic dataset needs input_dim >= n_classes");
  if (n_per_class < 1) throw std::invalid_argument("n_per_class must be >= 1");
  if (!(separation >= 0.0)) throw std::invalid_argument("separation must be >= 0");

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const double offset = separation / std::sqrt(2.0);
  const std::size_t n = static_cast<std::size_t>(n_classes) * static_cast<std::size_t>(n_per_class);

  Eigen::MatrixXd features(input_dim, static_cast<Eigen::Index>(n));
  std::vector<int> labels(n);
  for (std::size_t i = 0; i < n; ++i) {
    const int c = static_cast<int>(i % static_cast<std::size_t>(n_classes));
    labels[i] = c;
    for (int d = 0; d < input_dim; ++d)
      features(d, static_cast<Eigen::Index>(i)) = normal(rng) + (d == c ? offset : 0.0);
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);
  const std::size_t n_train = n * 6 / 10;
  const std::size_t n_val = n * 2 / 10;
  std::vector<std::size_t> train(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  std::vector<std::size_t> val(order.begin() + static_cast<std::ptrdiff_t>(n_train),
                               order.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
  std::vector<std::size_t> test(order.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), order.end());
  return Dataset(std::move(features), std::move(labels), n_classes, std::move(train),
                 std::move(val), std::move(test));
}

}  // namespace taylorglo
