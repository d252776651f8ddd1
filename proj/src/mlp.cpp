#include "taylorglo/mlp.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <random>
#include <stdexcept>

namespace taylorglo {

namespace {

constexpr char kModelMagic[8] = {'T', 'G', 'L', 'O', 'M', 'L', 'P', '1'};

template <typename T>
void write_pod(std::ofstream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T read_pod(std::ifstream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!in) throw std::runtime_error("model checkpoint truncated");
  return v;
}

}  // namespace

MlpModel::MlpModel(const std::vector<int>& dims, std::uint64_t seed) : seed_(seed) {
  if (dims.size() < 2) throw std::invalid_argument("MLP needs at least input and output widths");
  for (int d : dims)
    if (d < 1) throw std::invalid_argument("MLP layer widths must be positive");
  std::mt19937_64 rng(seed);
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / dims[l]));
    Layer layer;
    layer.weights.resize(dims[l + 1], dims[l]);
    for (Eigen::Index j = 0; j < layer.weights.cols(); ++j)
      for (Eigen::Index i = 0; i < layer.weights.rows(); ++i) layer.weights(i, j) = normal(rng);
    layer.biases = Eigen::VectorXd::Zero(dims[l + 1]);
    layers_.push_back(std::move(layer));
  }
}

std::vector<int> MlpModel::dims() const {
  std::vector<int> d;
  if (layers_.empty()) return d;
  d.push_back(static_cast<int>(layers_.front().weights.cols()));
  for (const auto& l : layers_) d.push_back(static_cast<int>(l.weights.rows()));
  return d;
}

Eigen::MatrixXd softmax_columns(const Eigen::MatrixXd& logits) {
  Eigen::MatrixXd p(logits.rows(), logits.cols());
  for (Eigen::Index c = 0; c < logits.cols(); ++c) {
    const double m = logits.col(c).maxCoeff();
    p.col(c) = (logits.col(c).array() - m).exp();
    p.col(c) /= p.col(c).sum();
  }
  return p;
}

void MlpModel::forward(const Eigen::MatrixXd& inputs, std::vector<Eigen::MatrixXd>& activations) const {
  if (layers_.empty()) throw std::logic_error("forward on an empty model");
  if (inputs.rows() != layers_.front().weights.cols())
    throw std::invalid_argument("input width does not match the model");
  activations.resize(layers_.size() + 1);
  activations[0] = inputs;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    Eigen::MatrixXd z = layers_[l].weights * activations[l];
    z.colwise() += layers_[l].biases;
    if (l + 1 < layers_.size())
      activations[l + 1] = z.cwiseMax(0.0);
    else
      activations[l + 1] = softmax_columns(z);
  }
}

Eigen::MatrixXd MlpModel::forward(const Eigen::MatrixXd& inputs) const {
  std::vector<Eigen::MatrixXd> acts;
  forward(inputs, acts);
  return std::move(acts.back());
}

void MlpModel::backward(const std::vector<Eigen::MatrixXd>& activations, Eigen::MatrixXd grad_logits,
                        std::vector<Layer>& grads) const {
  grads.resize(layers_.size());
  Eigen::MatrixXd delta = std::move(grad_logits);
  for (std::size_t l = layers_.size(); l-- > 0;) {
    grads[l].weights.noalias() = delta * activations[l].transpose();
    grads[l].biases = delta.rowwise().sum();
    if (l == 0) break;
    Eigen::MatrixXd back = layers_[l].weights.transpose() * delta;
    // ReLU derivative from the post-activation output.
    delta = (activations[l].array() > 0.0).select(back, 0.0);
  }
}

std::size_t MlpModel::param_count() const {
  std::size_t n = 0;
  for (const auto& l : layers_) n += static_cast<std::size_t>(l.weights.size() + l.biases.size());
  return n;
}

std::vector<double> MlpModel::flat_params() const {
  std::vector<double> out;
  out.reserve(param_count());
  for (const auto& l : layers_) {
    out.insert(out.end(), l.weights.data(), l.weights.data() + l.weights.size());
    out.insert(out.end(), l.biases.data(), l.biases.data() + l.biases.size());
  }
  return out;
}

void MlpModel::set_flat_params(const std::vector<double>& params) {
  if (params.size() != param_count()) throw std::invalid_argument("flat parameter length mismatch");
  std::size_t off = 0;
  for (auto& l : layers_) {
    std::memcpy(l.weights.data(), params.data() + off, sizeof(double) * static_cast<std::size_t>(l.weights.size()));
    off += static_cast<std::size_t>(l.weights.size());
    std::memcpy(l.biases.data(), params.data() + off, sizeof(double) * static_cast<std::size_t>(l.biases.size()));
    off += static_cast<std::size_t>(l.biases.size());
  }
}

bool MlpModel::all_finite() const {
  for (const auto& l : layers_)
    if (!l.weights.allFinite() || !l.biases.allFinite()) return false;
  return true;
}

void MlpModel::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(kModelMagic, sizeof kModelMagic);
  write_pod(out, seed_);
  const auto d = dims();
  write_pod(out, static_cast<std::uint32_t>(d.size()));
  for (int w : d) write_pod(out, static_cast<std::uint32_t>(w));
  const auto p = flat_params();
  out.write(reinterpret_cast<const char*>(p.data()), static_cast<std::streamsize>(p.size() * sizeof(double)));
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

MlpModel MlpModel::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  char magic[sizeof kModelMagic];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kModelMagic, sizeof magic) != 0)
    throw std::runtime_error(path.string() + " is not a model checkpoint");
  const auto seed = read_pod<std::uint64_t>(in);
  const auto n = read_pod<std::uint32_t>(in);
  if (n < 2 || n > 64) throw std::runtime_error("model checkpoint has implausible depth");
  std::vector<int> d;
  for (std::uint32_t i = 0; i < n; ++i) d.push_back(static_cast<int>(read_pod<std::uint32_t>(in)));
  MlpModel m(d, seed);
  std::vector<double> p(m.param_count());
  in.read(reinterpret_cast<char*>(p.data()), static_cast<std::streamsize>(p.size() * sizeof(double)));
  if (!in) throw std::runtime_error("model checkpoint truncated");
  m.set_flat_params(p);
  return m;
}

bool operator==(const MlpModel& a, const MlpModel& b) {
  if (a.dims() != b.dims()) return false;
  // Bitwise comparison; NaN payloads count as equal only if identical.
  const auto pa = a.flat_params();
  const auto pb = b.flat_params();
  return std::memcmp(pa.data(), pb.data(), pa.size() * sizeof(double)) == 0;
}

}  // namespace taylorglo
