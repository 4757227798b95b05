#include <catch2/catch_amalgamated.hpp>

#include "bohm/stats.hpp"

using namespace bohm;
using Catch::Approx;

TEST_CASE("uniform01 uses the top 53 bits") {
  stats::Rng a(7), b(7);
  const double u = stats::uniform01(a);
  CHECK(u == static_cast<double>(b() >> 11) * 0x1.0p-53);
  CHECK(u >= 0.0);
  CHECK(u < 1.0);
}

TEST_CASE("alias table reproduces its weights") {
  const std::vector<double> w = {1.0, 0.0, 3.0, 6.0};
  const stats::AliasTable t(w);
  stats::Rng rng(12345);
  std::vector<int> counts(4, 0);
  const int n = 200000;
  for (int i = 0; i < n; ++i) ++counts[t.sample(rng)];
  CHECK(counts[1] == 0);
  for (std::size_t i = 0; i < 4; ++i) {
    const double p = w[i] / 10.0;
    CHECK(std::abs(counts[i] - n * p) <= 4.0 * std::sqrt(n * p * (1.0 - p)) + 1e-9);
  }
  CHECK_THROWS_AS(stats::AliasTable(std::vector<double>{0.0, 0.0}), Error);
  CHECK_THROWS_AS(stats::AliasTable(std::vector<double>{1.0, -1.0}), Error);
}

TEST_CASE("Kolmogorov distribution quantiles") {
  CHECK(stats::kolmogorov_quantile(0.01) == Approx(1.6276).margin(1e-4));
  CHECK(stats::kolmogorov_quantile(0.05) == Approx(1.3581).margin(1e-4));
  CHECK(stats::kolmogorov_survival(1.3581) == Approx(0.05).margin(1e-4));
  CHECK(stats::ks_critical(0.01, 10000) == Approx(0.016276).margin(1e-6));
}

TEST_CASE("KS statistic of a small sample") {
  // F(x) = x on [0,1]; samples 0.1, 0.5, 0.9 give D = max(0.1, 1/3-0.1, 0.5-1/3, 2/3-0.5, 0.9-2/3, 1-0.9)
  const std::vector<double> xs = {0.1, 0.5, 0.9};
  const double d = stats::ks_statistic(xs, [](double x) { return x; });
  CHECK(d == Approx(0.9 - 2.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("chi-square tail values") {
  CHECK(stats::chi2_quantile(0.95, 1.0) == Approx(3.841459).epsilon(1e-6));
  CHECK(stats::chi2_quantile(0.99, 15.0) == Approx(30.577914).epsilon(1e-6));
  CHECK(stats::chi2_survival(3.841459, 1.0) == Approx(0.05).epsilon(1e-5));
}

TEST_CASE("Pearson correlation") {
  const std::vector<double> a = {1.0, 2.0, 3.0, 4.0};
  const std::vector<double> b = {2.0, 4.0, 6.0, 8.0};
  const std::vector<double> c = {4.0, 3.0, 2.0, 1.0};
  const std::vector<double> k = {5.0, 5.0, 5.0, 5.0};
  CHECK(stats::correlation(a, b) == Approx(1.0));
  CHECK(stats::correlation(a, c) == Approx(-1.0));
  CHECK(stats::correlation(a, k) == 0.0);
}

TEST_CASE("mix64 is a fixed bijection-style scrambler") {
  CHECK(stats::mix64(0) == 0xe220a8397b1dcdafULL);
  CHECK(stats::mix64(1) != stats::mix64(2));
}
