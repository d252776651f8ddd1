#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

namespace taylorglo {

using Rng = std::mt19937_64;
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

struct CmaesConfig {
  int dim = 1;
  int lambda = 4;
  double sigma0 = 1.0;
  std::vector<double> mean0;  // empty means the zero vector
  std::uint64_t seed = 0;
  int max_generations = 100;
};

/// (mu/mu_w, lambda) CMA-ES, minimizing. Strategy constants follow Hansen's
/// tutorial defaults with positive weights only.
struct CmaesState {
  int dim = 0;
  int lambda = 0;
  int mu = 0;
  Vector weights;
  double mu_eff = 0;
  double c_sigma = 0, d_sigma = 0, c_c = 0, c_1 = 0, c_mu = 0, chi_n = 0;

  Vector mean;
  Matrix covariance;
  double sigma = 0;
  Vector path_sigma;
  Vector path_c;
  int generation = 0;

  // Eigendecomposition of `covariance`: C = B diag(D^2) B^T.
  Matrix eigen_basis;
  Vector eigen_scale;  // D, square roots of the eigenvalues
  int eigen_generation = -1;  // generation the cache was built at

  std::optional<Vector> best_x;
  double best_f = 0;
  std::vector<double> best_history;  // best-so-far after each tell
};

CmaesState cma_init(const CmaesConfig& config);

/// Samples lambda candidates. Throws std::runtime_error if the covariance
/// cannot be decomposed.
std::vector<Vector> cma_ask(CmaesState& state, Rng& rng);

/// Ranks candidates by ascending objective and updates the distribution.
void cma_tell(CmaesState& state, const std::vector<Vector>& candidates,
              const std::vector<double>& objective_values);

std::pair<Vector, double> cma_best(const CmaesState& state);

/// Converged when sigma * sqrt(max eigenvalue) < tol_x, or the best objective
/// improved by less than tol_fun over the last 10 generations.
bool cma_converged(const CmaesState& state, double tol_fun, double tol_x);

/// Refreshes the eigendecomposition if the covariance changed since the last
/// call.
void cma_update_eigen(CmaesState& state);

// Checkpointing. The rng state is stored alongside so a resumed run draws the
// same samples as an uninterrupted one.
nlohmann::json cma_to_json(const CmaesState& state, const Rng& rng);
void cma_from_json(const nlohmann::json& j, CmaesState& state, Rng& rng);

}  // namespace taylorglo
