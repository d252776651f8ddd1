#include "oracles.hpp"
#include "taylorglo/stats.hpp"

#include <doctest.h>

using namespace taylorglo;

TEST_CASE("mean and sample standard deviation") {
  const std::vector<double> xs{2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0};
  CHECK(mean(xs) == doctest::Approx(5.0));
  CHECK(sample_stddev(xs) == doctest::Approx(std::sqrt(32.0 / 7.0)));
  CHECK(sample_stddev(std::vector<double>{3.0}) == 0.0);
}

TEST_CASE("welch p-values match the precomputed fixtures") {
  for (const auto& fx : oracle::welch_fixtures()) {
    const double p = welch_one_tailed_p(fx.a, fx.b);
    CHECK(std::abs(p - fx.p) <= 1e-9);
  }
}

TEST_CASE("identical samples give exactly one half") {
  const std::vector<double> a{0.91, 0.93, 0.92, 0.95};
  CHECK(welch_one_tailed_p(a, a) == 0.5);
  CHECK(compare_samples("a", a, "b", a).p_value == 0.5);
}

TEST_CASE("swapping the arms mirrors the p-value") {
  const auto& fx = oracle::welch_fixtures().front();
  const double forward = welch_one_tailed_p(fx.a, fx.b);
  const double backward = welch_one_tailed_p(fx.b, fx.a);
  CHECK(backward > 0.999);
  CHECK(forward + backward == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("degenerate samples are rejected") {
  const std::vector<double> one{0.9};
  const std::vector<double> two{0.9, 0.8};
  const std::vector<double> flat{0.5, 0.5, 0.5};
  CHECK_THROWS_AS(welch_one_tailed_p(one, two), std::invalid_argument);
  CHECK_THROWS_AS(welch_one_tailed_p(flat, flat), std::invalid_argument);
}

TEST_CASE("report json carries both arms") {
  const auto r = compare_samples("ce", {0.90, 0.92, 0.91}, "tg", {0.93, 0.94, 0.95});
  const auto j = to_json(r);
  CHECK(j.at("a").at("name") == "ce");
  CHECK(j.at("b").at("name") == "tg");
  CHECK(j.at("alternative") == "mean(a) > mean(b)");
  CHECK(j.at("p_value").get<double>() > 0.9);
  CHECK(j.at("a").at("mean").get<double>() == doctest::Approx(0.91));
}
