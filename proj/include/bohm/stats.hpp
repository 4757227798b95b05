#pragma once

#include <boost/math/distributions/chi_squared.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <span>
#include <vector>

#include "bohm/error.hpp"

namespace bohm::stats {

/// 64-bit Mersenne twister; all randomness in the library flows from one of these.
using Rng = std::mt19937_64;

/// Uniform double in [0, 1) built from the top 53 bits, identical on every platform.
inline double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

/// Walker/Vose alias table over nonnegative weights.
class AliasTable {
 public:
  AliasTable() = default;

  explicit AliasTable(std::span<const double> weights) {
    const std::size_t n = weights.size();
    require(n > 0, Errc::invalid_argument, "alias table needs at least one weight");
    double total = 0.0;
    for (double w : weights) {
      require(w >= 0.0 && std::isfinite(w), Errc::invalid_argument, "alias weights must be finite and >= 0");
      total += w;
    }
    require(total > 0.0, Errc::invalid_argument, "alias weights sum to zero");
    prob_.assign(n, 0.0);
    alias_.assign(n, 0);
    std::vector<double> scaled(n);
    std::vector<std::size_t> small, large;
    for (std::size_t i = 0; i < n; ++i) {
      scaled[i] = weights[i] * static_cast<double>(n) / total;
      (scaled[i] < 1.0 ? small : large).push_back(i);
    }
    while (!small.empty() && !large.empty()) {
      const std::size_t s = small.back();
      small.pop_back();
      const std::size_t l = large.back();
      prob_[s] = scaled[s];
      alias_[s] = l;
      scaled[l] = (scaled[l] + scaled[s]) - 1.0;
      if (scaled[l] < 1.0) {
        large.pop_back();
        small.push_back(l);
      }
    }
    for (auto i : large) prob_[i] = 1.0;
    // leftovers in `small` are rounding residue of weight ~1
    for (auto i : small) prob_[i] = weights[i] > 0.0 ? 1.0 : 0.0;
  }

  [[nodiscard]] std::size_t size() const { return prob_.size(); }

  std::size_t sample(Rng& rng) const {
    const double u = uniform01(rng) * static_cast<double>(prob_.size());
    auto i = static_cast<std::size_t>(u);
    if (i >= prob_.size()) i = prob_.size() - 1;
    const double frac = u - static_cast<double>(i);
    return frac < prob_[i] ? i : alias_[i];
  }

 private:
  std::vector<double> prob_;
  std::vector<std::size_t> alias_;
};

/// Survival function of the Kolmogorov distribution, P(K > lambda).
inline double kolmogorov_survival(double lambda) {
  if (lambda <= 0.0) return 1.0;
  if (lambda < 0.2) return 1.0;  // series converges poorly; the value is 1 to double precision
  double sum = 0.0;
  for (int j = 1; j <= 200; ++j) {
    const double term = std::exp(-2.0 * j * j * lambda * lambda);
    sum += (j % 2 == 1 ? 1.0 : -1.0) * term;
    if (term < 1e-18) break;
  }
  return std::clamp(2.0 * sum, 0.0, 1.0);
}

/// lambda with P(K > lambda) = alpha (1.6276 for alpha = 0.01).
inline double kolmogorov_quantile(double alpha) {
  require(alpha > 0.0 && alpha < 1.0, Errc::invalid_argument, "alpha must lie in (0, 1)");
  double lo = 0.2, hi = 5.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    (kolmogorov_survival(mid) > alpha ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

/// Asymptotic one-sample KS critical value c(alpha) / sqrt(n).
inline double ks_critical(double alpha, std::size_t n) {
  return kolmogorov_quantile(alpha) / std::sqrt(static_cast<double>(n));
}

/// sup_x |F_n(x) - F(x)| for sorted samples against a continuous CDF.
template <class Cdf>
double ks_statistic(std::span<const double> sorted, Cdf&& cdf) {
  require(!sorted.empty(), Errc::invalid_argument, "KS statistic of an empty sample");
  const auto n = static_cast<double>(sorted.size());
  double d = 0.0;
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    const double f = cdf(sorted[i]);
    d = std::max({d, f - static_cast<double>(i) / n, static_cast<double>(i + 1) / n - f});
  }
  return d;
}

inline double chi2_quantile(double p, double dof) {
  boost::math::chi_squared dist(dof);
  return boost::math::quantile(dist, p);
}

inline double chi2_survival(double x, double dof) {
  boost::math::chi_squared dist(dof);
  return boost::math::cdf(boost::math::complement(dist, x));
}

/// Pearson correlation; 0 when either input is constant.
inline double correlation(std::span<const double> a, std::span<const double> b) {
  require(a.size() == b.size() && !a.empty(), Errc::invalid_argument, "correlation needs equal non-empty inputs");
  const auto n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  if (saa == 0.0 || sbb == 0.0) return 0.0;
  return sab / std::sqrt(saa * sbb);
}

/// SplitMix64 finalizer; used to derive independent seeds and hash-based selectors.
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace bohm::stats
