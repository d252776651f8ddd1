#include "taylorglo/cmaes.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace taylorglo {

namespace {

constexpr double kEigenFloor = 1e-20;
constexpr int kTolFunWindow = 10;

std::vector<double> to_std(const Vector& v) { return {v.data(), v.data() + v.size()}; }

Vector from_std(const std::vector<double>& v) {
  return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace

CmaesState cma_init(const CmaesConfig& config) {
  if (config.dim < 1) throw std::invalid_argument("cma: dim must be >= 1");
  if (config.lambda < 4) throw std::invalid_argument("cma: lambda must be >= 4");
  if (!(config.sigma0 > 0) || !std::isfinite(config.sigma0))
    throw std::invalid_argument("cma: sigma0 must be positive");
  if (!config.mean0.empty() && static_cast<int>(config.mean0.size()) != config.dim)
    throw std::invalid_argument("cma: mean0 length differs from dim");

  CmaesState s;
  const int n = config.dim;
  const double nd = n;
  s.dim = n;
  s.lambda = config.lambda;
  s.mu = config.lambda / 2;

  s.weights.resize(s.mu);
  for (int i = 0; i < s.mu; ++i) s.weights[i] = std::log(s.mu + 0.5) - std::log(i + 1.0);
  s.weights /= s.weights.sum();
  s.mu_eff = 1.0 / s.weights.squaredNorm();

  const double me = s.mu_eff;
  s.c_sigma = (me + 2.0) / (nd + me + 5.0);
  s.d_sigma = 1.0 + 2.0 * std::max(0.0, std::sqrt((me - 1.0) / (nd + 1.0)) - 1.0) + s.c_sigma;
  s.c_c = (4.0 + me / nd) / (nd + 4.0 + 2.0 * me / nd);
  s.c_1 = 2.0 / ((nd + 1.3) * (nd + 1.3) + me);
  s.c_mu = std::min(1.0 - s.c_1, 2.0 * (me - 2.0 + 1.0 / me) / ((nd + 2.0) * (nd + 2.0) + me));
  s.chi_n = std::sqrt(nd) * (1.0 - 1.0 / (4.0 * nd) + 1.0 / (21.0 * nd * nd));

  s.mean = config.mean0.empty() ? Vector::Zero(n) : from_std(config.mean0);
  s.covariance = Matrix::Identity(n, n);
  s.sigma = config.sigma0;
  s.path_sigma = Vector::Zero(n);
  s.path_c = Vector::Zero(n);
  s.eigen_basis = Matrix::Identity(n, n);
  s.eigen_scale = Vector::Ones(n);
  s.eigen_generation = 0;
  return s;
}

void cma_update_eigen(CmaesState& s) {
  if (s.eigen_generation == s.generation) return;
  Eigen::SelfAdjointEigenSolver<Matrix> es(s.covariance);
  if (es.info() != Eigen::Success || !es.eigenvalues().allFinite())
    throw std::runtime_error("cma: covariance eigendecomposition failed");
  s.eigen_basis = es.eigenvectors();
  s.eigen_scale = es.eigenvalues().cwiseMax(kEigenFloor).cwiseSqrt();
  s.eigen_generation = s.generation;
}

std::vector<Vector> cma_ask(CmaesState& s, Rng& rng) {
  cma_update_eigen(s);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<Vector> pop;
  pop.reserve(static_cast<std::size_t>(s.lambda));
  for (int k = 0; k < s.lambda; ++k) {
    Vector z(s.dim);
    for (int i = 0; i < s.dim; ++i) z[i] = normal(rng);
    pop.push_back(s.mean + s.sigma * (s.eigen_basis * s.eigen_scale.cwiseProduct(z)));
  }
  return pop;
}

void cma_tell(CmaesState& s, const std::vector<Vector>& candidates,
              const std::vector<double>& objective_values) {
  if (static_cast<int>(candidates.size()) != s.lambda ||
      objective_values.size() != candidates.size())
    throw std::invalid_argument("cma_tell: expected exactly lambda candidates and values");
  for (const auto& c : candidates)
    if (c.size() != s.dim) throw std::invalid_argument("cma_tell: candidate dimension mismatch");
  for (double f : objective_values)
    if (!std::isfinite(f)) throw std::invalid_argument("cma_tell: non-finite objective value");

  cma_update_eigen(s);

  std::vector<std::size_t> order(candidates.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return objective_values[a] < objective_values[b];
  });

  const int n = s.dim;
  const Vector old_mean = s.mean;
  Vector new_mean = Vector::Zero(n);
  for (int i = 0; i < s.mu; ++i) new_mean += s.weights[i] * candidates[order[static_cast<std::size_t>(i)]];
  s.mean = new_mean;

  const Vector y_w = (s.mean - old_mean) / s.sigma;
  // C^{-1/2} y_w = B D^{-1} B^T y_w
  const Vector c_inv_sqrt_y =
      s.eigen_basis * (s.eigen_basis.transpose() * y_w).cwiseQuotient(s.eigen_scale);

  s.path_sigma = (1.0 - s.c_sigma) * s.path_sigma +
                 std::sqrt(s.c_sigma * (2.0 - s.c_sigma) * s.mu_eff) * c_inv_sqrt_y;

  const double ps_norm = s.path_sigma.norm();
  const double decay = 1.0 - std::pow(1.0 - s.c_sigma, 2.0 * (s.generation + 1));
  const bool h_sigma = ps_norm / std::sqrt(decay) / s.chi_n < 1.4 + 2.0 / (n + 1.0);

  s.path_c = (1.0 - s.c_c) * s.path_c;
  if (h_sigma) s.path_c += std::sqrt(s.c_c * (2.0 - s.c_c) * s.mu_eff) * y_w;

  Matrix rank_mu = Matrix::Zero(n, n);
  for (int i = 0; i < s.mu; ++i) {
    const Vector yi = (candidates[order[static_cast<std::size_t>(i)]] - old_mean) / s.sigma;
    rank_mu.noalias() += s.weights[i] * (yi * yi.transpose());
  }
  const double delta_h = h_sigma ? 0.0 : s.c_c * (2.0 - s.c_c);
  s.covariance = (1.0 - s.c_1 - s.c_mu) * s.covariance +
                 s.c_1 * (s.path_c * s.path_c.transpose() + delta_h * s.covariance) +
                 s.c_mu * rank_mu;
  s.covariance = 0.5 * (s.covariance + s.covariance.transpose()).eval();

  s.sigma *= std::exp((s.c_sigma / s.d_sigma) * (ps_norm / s.chi_n - 1.0));

  const std::size_t top = order.front();
  if (!s.best_x || objective_values[top] < s.best_f) {
    s.best_x = candidates[top];
    s.best_f = objective_values[top];
  }
  s.best_history.push_back(s.best_f);
  ++s.generation;
}

std::pair<Vector, double> cma_best(const CmaesState& s) {
  if (!s.best_x) throw std::logic_error("cma_best: no generation has been told yet");
  return {*s.best_x, s.best_f};
}

bool cma_converged(const CmaesState& s, double tol_fun, double tol_x) {
  if (!s.best_x) throw std::logic_error("cma_converged: no generation has been told yet");
  Eigen::SelfAdjointEigenSolver<Matrix> es(s.covariance, Eigen::EigenvaluesOnly);
  const double max_ev = std::max(es.eigenvalues().maxCoeff(), kEigenFloor);
  if (s.sigma * std::sqrt(max_ev) < tol_x) return true;
  const auto& h = s.best_history;
  if (static_cast<int>(h.size()) > kTolFunWindow) {
    const double earlier = h[h.size() - 1 - kTolFunWindow];
    if (earlier - h.back() < tol_fun) return true;
  }
  return false;
}

nlohmann::json cma_to_json(const CmaesState& s, const Rng& rng) {
  nlohmann::json j;
  j["dim"] = s.dim;
  j["lambda"] = s.lambda;
  j["mean"] = to_std(s.mean);
  std::vector<double> cov(s.covariance.data(), s.covariance.data() + s.covariance.size());
  j["covariance"] = cov;
  j["sigma"] = s.sigma;
  j["path_sigma"] = to_std(s.path_sigma);
  j["path_c"] = to_std(s.path_c);
  j["generation"] = s.generation;
  j["best_history"] = s.best_history;
  if (s.best_x) {
    j["best_x"] = to_std(*s.best_x);
    j["best_f"] = s.best_f;
  }
  std::ostringstream os;
  os << rng;
  j["rng"] = os.str();
  return j;
}

void cma_from_json(const nlohmann::json& j, CmaesState& s, Rng& rng) {
  CmaesConfig cfg;
  cfg.dim = j.at("dim").get<int>();
  cfg.lambda = j.at("lambda").get<int>();
  cfg.sigma0 = j.at("sigma").get<double>();
  s = cma_init(cfg);
  s.mean = from_std(j.at("mean").get<std::vector<double>>());
  const auto cov = j.at("covariance").get<std::vector<double>>();
  if (static_cast<int>(cov.size()) != cfg.dim * cfg.dim || s.mean.size() != cfg.dim)
    throw std::runtime_error("cma checkpoint: inconsistent dimensions");
  s.covariance = Eigen::Map<const Matrix>(cov.data(), cfg.dim, cfg.dim);
  s.path_sigma = from_std(j.at("path_sigma").get<std::vector<double>>());
  s.path_c = from_std(j.at("path_c").get<std::vector<double>>());
  s.generation = j.at("generation").get<int>();
  s.best_history = j.at("best_history").get<std::vector<double>>();
  if (j.contains("best_x")) {
    s.best_x = from_std(j.at("best_x").get<std::vector<double>>());
    s.best_f = j.at("best_f").get<double>();
  }
  s.eigen_generation = -1;
  std::istringstream is(j.at("rng").get<std::string>());
  is >> rng;
  if (!is) throw std::runtime_error("cma checkpoint: bad rng state");
}

}  // namespace taylorglo
