#include "taylorglo/stats.hpp"

#include <boost/math/special_functions/beta.hpp>

#include <cmath>
#include <stdexcept>

namespace taylorglo {

namespace {

struct WelchStat {
  double t;
  double dof;
};

WelchStat welch_statistic(std::span<const double> a, std::span<const double> b) {
  if (a.size() < 2 || b.size() < 2)
    throw std::invalid_argument("Welch test needs at least two values per sample");
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  const double sa = sample_stddev(a);
  const double sb = sample_stddev(b);
  const double va = sa * sa / na;
  const double vb = sb * sb / nb;
  if (va + vb == 0.0) throw std::invalid_argument("Welch test on samples with zero variance");
  const double t = (mean(a) - mean(b)) / std::sqrt(va + vb);
  const double dof = (va + vb) * (va + vb) / (va * va / (na - 1.0) + vb * vb / (nb - 1.0));
  return {t, dof};
}

// Upper tail of Student's t: P(T >= t) = I_{v/(v+t^2)}(v/2, 1/2) / 2 for t >= 0.
double student_upper_tail(double t, double dof) {
  if (t == 0.0) return 0.5;
  const double half_tail = 0.5 * boost::math::ibeta(0.5 * dof, 0.5, dof / (dof + t * t));
  return t > 0.0 ? half_tail : 1.0 - half_tail;
}

}  // namespace

double mean(std::span<const double> xs) {
  if (xs.empty()) return 0.0;
  double s = 0.0;
  for (double x : xs) s += x;
  return s / static_cast<double>(xs.size());
}

double sample_stddev(std::span<const double> xs) {
  if (xs.size() < 2) return 0.0;
  const double m = mean(xs);
  double ss = 0.0;
  for (double x : xs) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(xs.size() - 1));
}

double welch_one_tailed_p(std::span<const double> a, std::span<const double> b) {
  const auto w = welch_statistic(a, b);
  return student_upper_tail(w.t, w.dof);
}

ComparisonReport compare_samples(std::string name_a, std::vector<double> a,
                                 std::string name_b, std::vector<double> b) {
  const auto w = welch_statistic(a, b);
  ComparisonReport r;
  r.t = w.t;
  r.dof = w.dof;
  r.p_value = student_upper_tail(w.t, w.dof);
  r.a = {std::move(name_a), std::move(a), 0.0, 0.0};
  r.b = {std::move(name_b), std::move(b), 0.0, 0.0};
  for (ArmReport* arm : {&r.a, &r.b}) {
    arm->mean = mean(arm->accuracies);
    arm->stddev = sample_stddev(arm->accuracies);
  }
  return r;
}

nlohmann::json to_json(const ComparisonReport& r) {
  auto arm = [](const ArmReport& a) {
    return nlohmann::json{{"name", a.name}, {"accuracies", a.accuracies}, {"mean", a.mean},
                          {"stddev", a.stddev}, {"n", a.accuracies.size()}};
  };
  return nlohmann::json{{"a", arm(r.a)},
                        {"b", arm(r.b)},
                        {"t", r.t},
                        {"dof", r.dof},
                        {"alternative", "mean(a) > mean(b)"},
                        {"p_value", r.p_value}};
}

}  // namespace taylorglo
