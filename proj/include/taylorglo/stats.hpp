#pragma once

#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace taylorglo {

double mean(std::span<const double> xs);
/// Sample standard deviation (n - 1 denominator); 0 for fewer than 2 values.
double sample_stddev(std::span<const double> xs);

/// One-tailed Welch's t-test of H1: mean(a) > mean(b). Returns P(T >= t)
/// with Welch-Satterthwaite degrees of freedom. Throws std::invalid_argument
/// if either sample has fewer than 2 values or both have zero variance.
double welch_one_tailed_p(std::span<const double> a, std::span<const double> b);

struct ArmReport {
  std::string name;
  std::vector<double> accuracies;
  double mean = 0.0;
  double stddev = 0.0;
};

struct ComparisonReport {
  ArmReport a;
  ArmReport b;
  double t = 0.0;
  double dof = 0.0;
  double p_value = 0.5;
};

ComparisonReport compare_samples(std::string name_a, std::vector<double> a,
                                 std::string name_b, std::vector<double> b);

nlohmann::json to_json(const ComparisonReport& report);

}  // namespace taylorglo
