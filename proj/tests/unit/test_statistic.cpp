#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>
#include <vector>

#include "sjds/estimator.hpp"
#include "sjds/statistic.hpp"

using namespace sjds;

namespace {

double g_at_data(const Statistic& s, const RowMatrix& data) {
  const auto f = compute_features(s, data);
  const auto mu = moment_mean(f);
  REQUIRE(s.in_domain(mu.values));
  return s.g(mu.values);
}

RowMatrix column(std::vector<double> v) {
  const auto n = v.size();
  return RowMatrix(n, 1, std::move(v));
}

bool rel_close(double a, double b, double tol) {
  if (a == b) return true;
  return std::abs(a - b) <= tol * std::max(std::abs(a), std::abs(b));
}

}  // namespace

TEST_CASE("mean", "[statistic]") {
  const auto s = stat_mean(0);
  CHECK(s.q() == 1);
  CHECK(g_at_data(s, column({1, 2, 3})) == 2.0);
  CHECK(s.name() == "mean:0");

  std::mt19937_64 rng(20);
  std::normal_distribution<double> d(4.0, 1.0);
  RowMatrix data(40, 1);
  for (auto& v : data.data()) v = d(rng);
  const auto r = jackknife_subsample(s, compute_features(s, data));
  CHECK(rel_close(r.theta_jds, r.theta_hat, 1e-12));
}

TEST_CASE("variance and standard deviation", "[statistic]") {
  CHECK(g_at_data(stat_variance(0), column({1, 2, 3})) == Catch::Approx(2.0 / 3.0).epsilon(1e-14));
  CHECK(g_at_data(stat_sd(0), column({1, 2, 3})) == Catch::Approx(std::sqrt(2.0 / 3.0)).epsilon(1e-14));

  CHECK(g_at_data(stat_variance(0), column({5, 5, 5})) == 0.0);
  const auto sd = stat_sd(0);
  CHECK_THROWS_AS(jackknife_subsample(sd, compute_features(sd, column({5, 5, 5}))), DomainError);

  // Two-pass variance oracle.
  std::mt19937_64 rng(21);
  std::normal_distribution<double> d(0.5, 1.5);
  std::vector<double> x(20);
  for (auto& v : x) v = d(rng);
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= 20.0;
  double ss = 0.0;
  for (double v : x) ss += (v - mean) * (v - mean);
  CHECK(std::abs(g_at_data(stat_variance(0), column(x)) - ss / 20.0) <= 1e-12);
}

TEST_CASE("kurtosis", "[statistic]") {
  std::vector<double> two_point;
  for (int i = 0; i < 50; ++i) {
    two_point.push_back(-1.0);
    two_point.push_back(1.0);
  }
  CHECK(g_at_data(stat_kurtosis(0), column(two_point)) == Catch::Approx(1.0).epsilon(1e-14));

  // Raw kurtosis of a Gaussian is 3. Tolerance 5/sqrt(n).
  const std::size_t n = 200000;
  std::mt19937_64 rng(20240917);
  std::normal_distribution<double> d(0.0, 1.0);
  std::vector<double> x(n);
  for (auto& v : x) v = d(rng);
  const double k = g_at_data(stat_kurtosis(0), column(x));
  INFO("kurtosis = " << k);
  CHECK(std::abs(k - 3.0) <= 5.0 / std::sqrt(static_cast<double>(n)));
}

TEST_CASE("correlation", "[statistic]") {
  const auto s = stat_correlation(0, 1);
  CHECK(s.q() == 5);
  CHECK(s.name() == "corr:0,1");

  // y = x gives exactly 1.
  RowMatrix dup(10, 2);
  for (std::size_t i = 0; i < 10; ++i) dup(i, 0) = dup(i, 1) = std::sin(static_cast<double>(i));
  CHECK(g_at_data(s, dup) == Catch::Approx(1.0).epsilon(1e-15));

  // Textbook Pearson r oracle.
  std::mt19937_64 rng(22);
  std::normal_distribution<double> d(0.0, 1.0);
  RowMatrix data(30, 2);
  for (std::size_t i = 0; i < 30; ++i) {
    data(i, 0) = d(rng);
    data(i, 1) = 0.6 * data(i, 0) + d(rng);
  }
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < 30; ++i) {
    mx += data(i, 0);
    my += data(i, 1);
  }
  mx /= 30;
  my /= 30;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < 30; ++i) {
    sxy += (data(i, 0) - mx) * (data(i, 1) - my);
    sxx += (data(i, 0) - mx) * (data(i, 0) - mx);
    syy += (data(i, 1) - my) * (data(i, 1) - my);
  }
  CHECK(std::abs(g_at_data(s, data) - sxy / std::sqrt(sxx * syy)) <= 1e-12);
}

TEST_CASE("g at population moments returns the analytic parameter", "[statistic][property]") {
  // N(mu=1, sigma=2): raw moments 1, 5, 13, 73.
  const std::vector<double> normal_moments{1.0, 5.0, 13.0, 73.0};
  CHECK(stat_mean(0).g(normal_moments) == 1.0);
  CHECK(stat_variance(0).g(normal_moments) == 4.0);
  CHECK(stat_sd(0).g(normal_moments) == 2.0);
  CHECK(stat_kurtosis(0).g(normal_moments) == 3.0);

  // Mean-zero bivariate normal with sigma11 = 25, sigma12 = 10, sigma22 = 5.
  const std::vector<double> bvn{0.0, 0.0, 25.0, 5.0, 10.0};
  CHECK(stat_correlation(0, 1).g(bvn) == Catch::Approx(2.0 / std::sqrt(5.0)).epsilon(1e-15));
  CHECK(2.0 / std::sqrt(5.0) == Catch::Approx(0.8944272).margin(1e-7));
}

TEST_CASE("correlation and kurtosis are invariant to positive affine maps", "[statistic][property]") {
  std::mt19937_64 rng(23);
  std::normal_distribution<double> d(0.0, 1.0);
  std::uniform_real_distribution<double> scale(0.2, 5.0), shift(-3.0, 3.0);
  for (int t = 0; t < 100; ++t) {
    const std::size_t n = 10 + rng() % 90;
    RowMatrix data(n, 2);
    for (std::size_t i = 0; i < n; ++i) {
      data(i, 0) = d(rng);
      data(i, 1) = 0.5 * data(i, 0) + d(rng);
    }
    RowMatrix moved = data;
    const double a1 = scale(rng), b1 = shift(rng), a2 = scale(rng), b2 = shift(rng);
    for (std::size_t i = 0; i < n; ++i) {
      moved(i, 0) = a1 * data(i, 0) + b1;
      moved(i, 1) = a2 * data(i, 1) + b2;
    }
    REQUIRE(std::abs(g_at_data(stat_correlation(0, 1), data) - g_at_data(stat_correlation(0, 1), moved)) <= 1e-10);
    REQUIRE(std::abs(g_at_data(stat_kurtosis(0), data) - g_at_data(stat_kurtosis(0), moved)) <= 1e-10);
  }
}

TEST_CASE("parse_statistic", "[statistic][parse]") {
  const auto c = parse_statistic("corr:0,1");
  CHECK(c.kind() == StatKind::correlation);
  CHECK(c.columns() == std::vector<std::size_t>{0, 1});

  CHECK_THROWS_WITH(parse_statistic("corr:0,0"), Catch::Matchers::ContainsSubstring("columns must differ"));

  const auto sd = parse_statistic("sd:2", 5);
  CHECK(sd.kind() == StatKind::sd);
  CHECK(sd.columns() == std::vector<std::size_t>{2});

  CHECK(parse_statistic("kurt:3").name() == "kurt:3");
  CHECK(parse_statistic("mean").name() == "mean:0");
  CHECK_THROWS_WITH(parse_statistic("median:0"), Catch::Matchers::ContainsSubstring("unknown statistic"));
  CHECK_THROWS_AS(parse_statistic("corr:0,"), ArgumentError);
  CHECK_THROWS_AS(parse_statistic("corr:a,b"), ArgumentError);
  CHECK_THROWS_AS(parse_statistic("mean:0,1"), ArgumentError);
  CHECK_THROWS_AS(parse_statistic("corr:1"), ArgumentError);
  CHECK_THROWS_AS(parse_statistic("sd:7", 5), RangeError);
}

TEST_CASE("downdate jackknife matches the naive oracle for every catalog statistic", "[statistic][oracle]") {
  std::mt19937_64 rng(24);
  std::normal_distribution<double> d(0.0, 1.0);
  const std::vector<Statistic> catalog{stat_mean(0), stat_variance(0), stat_sd(1), stat_kurtosis(0),
                                       stat_correlation(0, 1)};
  for (int t = 0; t < 200; ++t) {
    const auto& s = catalog[t % catalog.size()];
    // sd, kurt and corr need n >= 3 so every leave-one-out set has spread.
    const std::size_t min_n = (s.kind() == StatKind::mean || s.kind() == StatKind::variance) ? 2 : 3;
    const std::size_t n = min_n + rng() % (31 - min_n);
    RowMatrix data(n, 2);
    for (std::size_t i = 0; i < n; ++i) {
      data(i, 0) = 1.5 * d(rng) + 0.5;
      data(i, 1) = 0.7 * data(i, 0) + d(rng);
    }
    const auto f = compute_features(s, data);
    const auto a = jackknife_subsample(s, f);
    const auto b = jackknife_subsample_naive(s, f);
    INFO(s.name() << " n=" << n);
    REQUIRE(rel_close(a.theta_hat, b.theta_hat, 1e-10));
    REQUIRE(rel_close(a.theta_jds, b.theta_jds, 1e-10));
    REQUIRE(rel_close(a.ss, b.ss, 1e-10));
  }
}
