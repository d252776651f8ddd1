#include "taylorglo/taylor.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <stdexcept>
#include <string>

namespace taylorglo {

namespace {

double int_pow(double base, int exp) {
  double r = 1.0;  // 0^0 == 1
  for (int i = 0; i < exp; ++i) r *= base;
  return r;
}

void check_inputs(const TermTable& table, std::span<const double> theta,
                  std::span<const double> x, std::span<const double> y) {
  if (table.n_vars() != 2)
    throw std::invalid_argument("loss evaluation needs a bivariate term table");
  if (theta.size() != table.param_count())
    throw std::invalid_argument("theta has " + std::to_string(theta.size()) +
                                " entries, table expects " + std::to_string(table.param_count()));
  if (x.size() != y.size()) throw std::invalid_argument("x and y differ in length");
  if (x.empty()) throw std::invalid_argument("empty probability vectors");
}

void recurse_fixed_order(int n_vars, int pos, int remaining, std::vector<int>& cur,
                         std::vector<MultiIndex>& out) {
  if (pos == n_vars - 1) {
    cur[pos] = remaining;
    out.emplace_back(cur);
    return;
  }
  for (int e = remaining; e >= 0; --e) {
    cur[pos] = e;
    recurse_fixed_order(n_vars, pos + 1, remaining - e, cur, out);
  }
}

}  // namespace

MultiIndex::MultiIndex(std::vector<int> exponents) : exponents_(std::move(exponents)) {
  for (int e : exponents_)
    if (e < 0) throw std::invalid_argument("multi-index exponents must be non-negative");
}

int MultiIndex::order() const {
  int s = 0;
  for (int e : exponents_) s += e;
  return s;
}

double MultiIndex::factorial() const {
  double f = 1.0;
  for (int e : exponents_)
    for (int i = 2; i <= e; ++i) f *= i;
  return f;
}

TermTable::TermTable(int n_vars, int order, bool trimmed, int y_var, std::vector<Term> terms)
    : n_vars_(n_vars), order_(order), trimmed_(trimmed), y_var_(y_var), terms_(std::move(terms)) {}

std::size_t param_count(int n_vars, int k) {
  if (n_vars < 1) throw std::invalid_argument("n_vars must be >= 1");
  if (k < 0) throw std::invalid_argument("k must be >= 0");
  // C(n+k, k) built incrementally; every partial product is an integer.
  std::size_t c = 1;
  for (int i = 1; i <= k; ++i) c = c * static_cast<std::size_t>(n_vars + i) / static_cast<std::size_t>(i);
  return static_cast<std::size_t>(n_vars) + c;
}

std::vector<MultiIndex> enumerate_multi_indices(int n_vars, int k) {
  if (n_vars < 1) throw std::invalid_argument("n_vars must be >= 1");
  if (k < 0) throw std::invalid_argument("k must be >= 0");
  std::vector<MultiIndex> out;
  std::vector<int> cur(static_cast<std::size_t>(n_vars), 0);
  for (int order = 0; order <= k; ++order) recurse_fixed_order(n_vars, 0, order, cur, out);
  return out;
}

TermTable build_term_table(int n_vars, int k, bool trim, int y_var_index) {
  if (y_var_index < 0 || y_var_index >= n_vars)
    throw std::invalid_argument("y_var_index out of range");
  auto indices = enumerate_multi_indices(n_vars, k);
  std::sort(indices.begin(), indices.end(), [](const MultiIndex& a, const MultiIndex& b) {
    return a.exponents() < b.exponents();
  });

  std::vector<Term> terms;
  std::size_t slot = static_cast<std::size_t>(n_vars);
  for (auto& idx : indices) {
    if (trim && idx[static_cast<std::size_t>(y_var_index)] == 0) continue;
    double rf = 1.0 / idx.factorial();
    terms.push_back(Term{std::move(idx), slot++, rf});
  }
  return TermTable(n_vars, k, trim, y_var_index, std::move(terms));
}

TermTable classification_table(int k, bool trim) { return build_term_table(2, k, trim, 1); }

double taylor_inner(const TermTable& table, std::span<const double> theta, double x, double y) {
  const int yv = table.y_var();
  const int xv = 1 - yv;
  const double dx = x - theta[static_cast<std::size_t>(xv)];
  const double dy = y - theta[static_cast<std::size_t>(yv)];
  double f = 0.0;
  for (const auto& t : table.terms()) {
    const int ex = t.index[static_cast<std::size_t>(xv)];
    const int ey = t.index[static_cast<std::size_t>(yv)];
    f += theta[t.coeff_slot] * t.recip_factorial * int_pow(dx, ex) * int_pow(dy, ey);
  }
  return f;
}

double taylor_loss(const TermTable& table, std::span<const double> theta,
                   std::span<const double> x, std::span<const double> y) {
  check_inputs(table, theta, x, y);
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += taylor_inner(table, theta, x[i], y[i]);
  return -s / static_cast<double>(x.size());
}

void taylor_grad_y(const TermTable& table, std::span<const double> theta,
                   std::span<const double> x, std::span<const double> y, std::span<double> out) {
  check_inputs(table, theta, x, y);
  if (out.size() != x.size()) throw std::invalid_argument("gradient buffer has wrong length");
  const int yv = table.y_var();
  const int xv = 1 - yv;
  const double scale = -1.0 / static_cast<double>(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - theta[static_cast<std::size_t>(xv)];
    const double dy = y[i] - theta[static_cast<std::size_t>(yv)];
    double g = 0.0;
    for (const auto& t : table.terms()) {
      const int ey = t.index[static_cast<std::size_t>(yv)];
      if (ey == 0) continue;  // constant in y
      const int ex = t.index[static_cast<std::size_t>(xv)];
      g += theta[t.coeff_slot] * t.recip_factorial * ey * int_pow(dx, ex) * int_pow(dy, ey - 1);
    }
    out[i] = scale * g;
  }
}

std::vector<double> taylor_grad_y(const TermTable& table, std::span<const double> theta,
                                  std::span<const double> x, std::span<const double> y) {
  std::vector<double> g(x.size());
  taylor_grad_y(table, theta, x, y, g);
  return g;
}

double cross_entropy_loss(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw std::invalid_argument("x and y differ in length");
  if (x.empty()) throw std::invalid_argument("empty probability vectors");
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double yc = std::clamp(y[i], kCrossEntropyEpsilon, 1.0 - kCrossEntropyEpsilon);
    s += x[i] * std::log(yc);
  }
  return -s / static_cast<double>(x.size());
}

void cross_entropy_grad(std::span<const double> x, std::span<const double> y, std::span<double> out) {
  if (x.size() != y.size() || out.size() != x.size())
    throw std::invalid_argument("x and y differ in length");
  const double n = static_cast<double>(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double yc = std::clamp(y[i], kCrossEntropyEpsilon, 1.0 - kCrossEntropyEpsilon);
    out[i] = -x[i] / (yc * n);
  }
}

std::vector<double> cross_entropy_grad(std::span<const double> x, std::span<const double> y) {
  std::vector<double> g(x.size());
  cross_entropy_grad(x, y, g);
  return g;
}

LossCurve binary_modality_curve(const TermTable& table, std::span<const double> theta,
                                int resolution) {
  if (resolution < 2) throw std::invalid_argument("resolution must be >= 2");
  const std::array<double, 2> x{1.0, 0.0};
  auto loss_at = [&](double y0) {
    const std::array<double, 2> y{y0, 1.0 - y0};
    return taylor_loss(table, theta, x, y);
  };
  const double anchor = loss_at(1.0);
  LossCurve curve;
  curve.samples.reserve(static_cast<std::size_t>(resolution));
  for (int i = 1; i <= resolution; ++i) {
    const double y0 = static_cast<double>(i) / resolution;
    curve.samples.push_back({y0, loss_at(y0) - anchor});
  }
  return curve;
}

void write_curve_csv(std::ostream& os, const LossCurve& curve) {
  os << "y0,shifted_loss\n";
  char buf[64];
  for (const auto& s : curve.samples) {
    std::snprintf(buf, sizeof buf, "%.9g,%.9g\n", s.y0, s.shifted_loss);
    os << buf;
  }
}

void write_curve_svg(std::ostream& os, const LossCurve& curve) {
  constexpr double W = 480, H = 320, pad = 40;
  double lo = 0.0, hi = 0.0;
  for (const auto& s : curve.samples) {
    lo = std::min(lo, s.shifted_loss);
    hi = std::max(hi, s.shifted_loss);
  }
  if (hi - lo < 1e-12) {
    lo -= 1.0;
    hi += 1.0;
  }
  auto px = [&](double y0) { return pad + y0 * (W - 2 * pad); };
  auto py = [&](double v) { return H - pad - (v - lo) / (hi - lo) * (H - 2 * pad); };

  char buf[96];
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  std::snprintf(buf, sizeof buf, "<line x1=\"%g\" y1=\"%g\" x2=\"%g\" y2=\"%g\" stroke=\"#999\"/>\n",
                px(0), py(0), px(1), py(0));
  os << buf;
  os << "<polyline fill=\"none\" stroke=\"#c0392b\" stroke-width=\"1.5\" points=\"";
  for (const auto& s : curve.samples) {
    std::snprintf(buf, sizeof buf, "%.3f,%.3f ", px(s.y0), py(s.shifted_loss));
    os << buf;
  }
  os << "\"/>\n";
  std::snprintf(buf, sizeof buf, "<text x=\"%g\" y=\"%g\" font-size=\"12\">y0</text>\n", W / 2, H - 8);
  os << buf;
  os << "</svg>\n";
}

}  // namespace taylorglo
