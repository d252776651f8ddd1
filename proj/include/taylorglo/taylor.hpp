#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <vector>

namespace taylorglo {

/// Exponent tuple indexing one monomial of a multivariate polynomial.
class MultiIndex {
public:
  MultiIndex() = default;
  explicit MultiIndex(std::vector<int> exponents);

  std::size_t size() const { return exponents_.size(); }
  int operator[](std::size_t i) const { return exponents_[i]; }
  const std::vector<int>& exponents() const { return exponents_; }

  int order() const;
  /// Product of the component factorials; always >= 1.
  double factorial() const;

  friend bool operator==(const MultiIndex&, const MultiIndex&) = default;

private:
  std::vector<int> exponents_;
};

struct Term {
  MultiIndex index;
  std::size_t coeff_slot = 0;
  double recip_factorial = 1.0;
};

/// The monomial terms of a k-th order Taylor-parameterized loss.
///
/// Parameter layout: slots [0, n_vars) hold the expansion center, followed by
/// one coefficient per term in table order. Terms are ordered
/// lexicographically by exponent tuple, which for the bivariate (x, y) case
/// gives 1, y, y^2, ..., x, xy, ..., the same order as the written-out
/// third-order expansion.
class TermTable {
public:
  TermTable(int n_vars, int order, bool trimmed, int y_var, std::vector<Term> terms);

  int n_vars() const { return n_vars_; }
  int order() const { return order_; }
  bool trimmed() const { return trimmed_; }
  int y_var() const { return y_var_; }
  const std::vector<Term>& terms() const { return terms_; }
  std::size_t param_count() const { return static_cast<std::size_t>(n_vars_) + terms_.size(); }

private:
  int n_vars_;
  int order_;
  bool trimmed_;
  int y_var_;
  std::vector<Term> terms_;
};

std::size_t param_count(int n_vars, int k);

/// Every multi-index of n_vars entries with order <= k, graded lexicographic.
std::vector<MultiIndex> enumerate_multi_indices(int n_vars, int k);

/// With trim set, terms whose y-exponent is zero are dropped since they are
/// constant in the prediction and cannot affect training.
TermTable build_term_table(int n_vars, int k, bool trim, int y_var_index = 1);

/// The standard classification family: f(x, y) with x at index 0, y at 1.
TermTable classification_table(int k = 3, bool trim = true);

/// L(x, y) = -(1/n) * sum_i f(x_i, y_i) with f the Taylor polynomial given by
/// the table and theta. Requires a bivariate table.
double taylor_loss(const TermTable& table, std::span<const double> theta,
                   std::span<const double> x, std::span<const double> y);

/// dL/dy_i for each class.
std::vector<double> taylor_grad_y(const TermTable& table, std::span<const double> theta,
                                  std::span<const double> x, std::span<const double> y);

/// Allocation-free form used in the training loop; `out` must have size n.
void taylor_grad_y(const TermTable& table, std::span<const double> theta,
                   std::span<const double> x, std::span<const double> y,
                   std::span<double> out);

/// Per-class polynomial f(x, y) (no sign, no 1/n).
double taylor_inner(const TermTable& table, std::span<const double> theta, double x, double y);

inline constexpr double kCrossEntropyEpsilon = 1e-12;

double cross_entropy_loss(std::span<const double> x, std::span<const double> y);
std::vector<double> cross_entropy_grad(std::span<const double> x, std::span<const double> y);
void cross_entropy_grad(std::span<const double> x, std::span<const double> y, std::span<double> out);

struct CurveSample {
  double y0;
  double shifted_loss;
};

struct LossCurve {
  std::vector<CurveSample> samples;
};

/// Loss of a two-class problem whose correct class is 0, as a function of the
/// predicted probability y0 of that class, shifted so the loss at y0 = 1 is 0.
/// Samples y0 = i / resolution for i = 1..resolution.
LossCurve binary_modality_curve(const TermTable& table, std::span<const double> theta,
                                int resolution);

void write_curve_csv(std::ostream& os, const LossCurve& curve);
void write_curve_svg(std::ostream& os, const LossCurve& curve);

}  // namespace taylorglo
