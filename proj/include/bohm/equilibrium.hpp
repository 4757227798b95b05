#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "bohm/error.hpp"
#include "bohm/grid.hpp"
#include "bohm/guidance.hpp"
#include "bohm/propagator.hpp"
#include "bohm/stats.hpp"
#include "bohm/subsystem.hpp"
#include "bohm/wavefunction.hpp"

namespace bohm {

struct SampleSet {
  std::vector<Configuration> points;
  double time = 0.0;
  std::string provenance;

  [[nodiscard]] std::size_t size() const { return points.size(); }
};

/// M independent draws from rho: a cell is chosen with probability rho * dV
/// (alias method), then the point is placed uniformly inside that cell.
inline SampleSet sample(const Density& rho, std::size_t count, std::uint64_t seed) {
  require(count >= 1, Errc::invalid_argument, "sample size must be >= 1");
  require(rho.normalized() || std::abs(rho.mass() - 1.0) <= 1e-10, Errc::not_normalized,
          "sampling density is not normalized");
  const Grid& g = rho.grid();
  stats::AliasTable table(rho.values());
  stats::Rng rng(seed);
  SampleSet out;
  out.points.reserve(count);
  for (std::size_t m = 0; m < count; ++m) {
    const std::size_t cell = table.sample(rng);
    Configuration q = g.node(cell);
    for (std::size_t k = 0; k < g.dims(); ++k) {
      const auto& a = g.axis(k);
      q[k] = a.wrap(q[k] + (stats::uniform01(rng) - 0.5) * a.spacing());
    }
    out.points.push_back(q);
  }
  out.provenance = "cell-jitter sample, seed " + std::to_string(seed);
  return out;
}

/// Ensemble whose configurations are the given samples.
inline EnsembleState make_ensemble(const SampleSet& s, std::uint64_t seed) {
  EnsembleState e;
  e.configs = s.points;
  e.time = s.time;
  e.seed = seed;
  e.capped.assign(s.size(), 0);
  return e;
}

/// Normalized histogram of the samples on `bins`.
inline Density empirical_distribution(const SampleSet& s, const Grid& bins) {
  require(!s.points.empty(), Errc::invalid_argument, "empty sample set");
  std::vector<double> counts(bins.size(), 0.0);
  for (const auto& q : s.points) {
    require(q.size() == bins.dims(), Errc::out_of_domain, "sample dimension differs from the bin grid");
    const auto cell = bins.cell_of(q);
    require(cell >= 0, Errc::out_of_domain, "sample lies outside the bin grid");
    counts[static_cast<std::size_t>(cell)] += 1.0;
  }
  const double scale = 1.0 / (static_cast<double>(s.size()) * bins.cell_volume());
  for (auto& c : counts) c *= scale;
  return Density(bins, std::move(counts)).normalized_copy();
}

enum class TestKind { ks, chi_square, coarse_grain_sup };

inline std::string to_string(TestKind k) {
  switch (k) {
    case TestKind::ks: return "ks";
    case TestKind::chi_square: return "chi_square";
    case TestKind::coarse_grain_sup: return "coarse_grain_sup";
  }
  return "unknown";
}

/// Test functions are arrays over the reference density's cells.
using TestFunction = std::vector<double>;

/// Indicators of `bins_per_axis` equal-mass slabs of each axis marginal of rho.
inline std::vector<TestFunction> equal_mass_indicators(const Density& rho, std::size_t bins_per_axis = 16) {
  const Grid& g = rho.grid();
  std::vector<TestFunction> out;
  for (std::size_t k = 0; k < g.dims(); ++k) {
    const std::size_t keep[] = {k};
    const Density m = marginal(rho.normalized_copy(), keep);
    const double dx = g.axis(k).spacing();
    // slab label of every index along axis k
    std::vector<std::size_t> slab(g.extent(k));
    double acc = 0.0;
    for (std::size_t j = 0; j < slab.size(); ++j) {
      const double mid = acc + 0.5 * m[j] * dx;
      slab[j] = std::min(bins_per_axis - 1, static_cast<std::size_t>(mid * static_cast<double>(bins_per_axis)));
      acc += m[j] * dx;
    }
    for (std::size_t b = 0; b < bins_per_axis; ++b) {
      TestFunction f(g.size(), 0.0);
      bool any = false;
      for (std::size_t i = 0; i < g.size(); ++i)
        if (slab[g.index_along(i, k)] == b) {
          f[i] = 1.0;
          any = true;
        }
      if (any) out.push_back(std::move(f));
    }
  }
  return out;
}

struct TestSpec {
  TestKind kind = TestKind::ks;
  std::vector<TestFunction> functions;  // used by coarse_grain_sup
  double epsilon = 0.02;                // coarse_grain_sup tolerance
  double alpha = 0.01;                  // significance for ks / chi_square

  static TestSpec ks(double alpha = 0.01) { return TestSpec{TestKind::ks, {}, 0.02, alpha}; }
  static TestSpec chi_square(double alpha = 0.01) { return TestSpec{TestKind::chi_square, {}, 0.02, alpha}; }
  static TestSpec coarse_grain(const Density& rho, double epsilon, std::size_t bins_per_axis = 16) {
    return TestSpec{TestKind::coarse_grain_sup, equal_mass_indicators(rho, bins_per_axis), epsilon, 0.01};
  }
};

struct TestReport {
  std::string name;
  double statistic = 0.0;
  double threshold = 0.0;
  bool passed = false;
  double delta = 0.0;  // probability that a sample drawn from the reference fails
  std::size_t sample_size = 0;
};

/// sup over the family of |integral (rho_emp - rho_qe) f|.
inline double agreement_norm(const Density& emp, const Density& qe, const TestSpec& spec) {
  require(emp.grid() == qe.grid(), Errc::binning_mismatch, "densities use different binning");
  const double dv = qe.grid().cell_volume();
  double sup = 0.0;
  for (const auto& f : spec.functions) {
    require(f.size() == qe.size(), Errc::binning_mismatch, "test function does not match the binning");
    double s = 0.0;
    for (std::size_t i = 0; i < f.size(); ++i) s += (emp[i] - qe[i]) * f[i];
    sup = std::max(sup, std::abs(s * dv));
  }
  return sup;
}

namespace detail {

/// Piecewise-linear CDF of a 1D density whose mass is uniform within each cell.
class CellCdf {
 public:
  explicit CellCdf(const Density& rho) : axis_(rho.grid().axis(0)) {
    const double dx = axis_.spacing();
    edges_.assign(rho.size() + 1, 0.0);
    for (std::size_t j = 0; j < rho.size(); ++j) edges_[j + 1] = edges_[j] + rho[j] * dx;
    const double total = edges_.back();
    for (auto& e : edges_) e /= total;
    dens_.resize(rho.size());
    for (std::size_t j = 0; j < rho.size(); ++j) dens_[j] = (edges_[j + 1] - edges_[j]) / dx;
  }

  double operator()(double x) const {
    const double lo = axis_.cell_lo();
    const double u = (x - lo) / axis_.spacing();
    if (u <= 0.0) return 0.0;
    const auto j = static_cast<std::size_t>(u);
    if (j >= dens_.size()) return 1.0;
    return std::min(1.0, edges_[j] + dens_[j] * (x - (lo + static_cast<double>(j) * axis_.spacing())));
  }

 private:
  AxisSpec axis_;
  std::vector<double> edges_;
  std::vector<double> dens_;
};

inline TestReport ks_test(const SampleSet& s, const Density& qe, double alpha) {
  const Grid& g = qe.grid();
  const std::size_t d = g.dims();
  // Sidak-adjusted level when several marginals are tested at once
  const double level = d == 1 ? alpha : 1.0 - std::pow(1.0 - alpha, 1.0 / static_cast<double>(d));
  double stat = 0.0;
  for (std::size_t k = 0; k < d; ++k) {
    const std::size_t keep[] = {k};
    const Density m = d == 1 ? qe : marginal(qe, keep);
    std::vector<double> xs;
    xs.reserve(s.size());
    for (const auto& q : s.points) xs.push_back(g.axis(k).wrap(q[k]));
    std::sort(xs.begin(), xs.end());
    stat = std::max(stat, stats::ks_statistic(xs, CellCdf(m)));
  }
  TestReport r;
  r.name = "ks";
  r.statistic = stat;
  r.threshold = stats::ks_critical(level, s.size());
  r.passed = stat <= r.threshold;
  r.delta = alpha;
  r.sample_size = s.size();
  return r;
}

inline TestReport chi_square_test(const SampleSet& s, const Density& qe, double alpha) {
  const Grid& g = qe.grid();
  const double n = static_cast<double>(s.size());
  std::vector<double> observed(g.size(), 0.0);
  std::size_t outside = 0;
  for (const auto& q : s.points) {
    const auto c = g.cell_of(q);
    if (c < 0)
      ++outside;
    else
      observed[static_cast<std::size_t>(c)] += 1.0;
  }
  // merge consecutive cells until each group expects at least 5 counts
  std::vector<double> exp_groups, obs_groups;
  double e_acc = 0.0, o_acc = 0.0;
  const double dv = g.cell_volume();
  for (std::size_t i = 0; i < g.size(); ++i) {
    e_acc += n * qe[i] * dv;
    o_acc += observed[i];
    if (e_acc >= 5.0) {
      exp_groups.push_back(e_acc);
      obs_groups.push_back(o_acc);
      e_acc = o_acc = 0.0;
    }
  }
  if (!exp_groups.empty()) {
    exp_groups.back() += e_acc;
    obs_groups.back() += o_acc;
  }
  double stat = 0.0;
  for (std::size_t i = 0; i < exp_groups.size(); ++i)
    stat += (obs_groups[i] - exp_groups[i]) * (obs_groups[i] - exp_groups[i]) / exp_groups[i];
  if (outside > 0) stat = std::numeric_limits<double>::infinity();
  const double dof = std::max<double>(1.0, static_cast<double>(exp_groups.size()) - 1.0);
  TestReport r;
  r.name = "chi_square";
  r.statistic = stat;
  r.threshold = stats::chi2_quantile(1.0 - alpha, dof);
  r.passed = stat <= r.threshold;
  r.delta = alpha;
  r.sample_size = s.size();
  return r;
}

inline TestReport coarse_grain_test(const SampleSet& s, const Density& qe, const TestSpec& spec) {
  require(!spec.functions.empty(), Errc::invalid_argument, "coarse_grain_sup needs at least one test function");
  const Grid& g = qe.grid();
  const double n = static_cast<double>(s.size());
  std::vector<double> emp(g.size(), 0.0);
  for (const auto& q : s.points) {
    const auto c = g.cell_of(q);
    if (c >= 0) emp[static_cast<std::size_t>(c)] += 1.0 / (n * g.cell_volume());
  }
  const Density emp_density(g, std::move(emp));
  TestReport r;
  r.name = "coarse_grain_sup";
  r.statistic = agreement_norm(emp_density, qe, spec);
  r.threshold = spec.epsilon;
  r.passed = r.statistic <= r.threshold;
  // Hoeffding bound per function, union over the family
  double delta = 0.0;
  for (const auto& f : spec.functions) {
    const auto [lo, hi] = std::minmax_element(f.begin(), f.end());
    const double range = std::max(*hi - *lo, 1e-300);
    delta += 2.0 * std::exp(-2.0 * n * spec.epsilon * spec.epsilon / (range * range));
  }
  r.delta = std::min(1.0, delta);
  r.sample_size = s.size();
  return r;
}

}  // namespace detail

/// Statistical test of the hypothesis that the samples follow rho_qe.
inline TestReport run_test(const SampleSet& s, const Density& qe, const TestSpec& spec) {
  require(!s.points.empty(), Errc::invalid_argument, "empty sample set");
  require(s.points.front().size() == qe.grid().dims(), Errc::binning_mismatch,
          "sample dimension differs from the reference density");
  const Density ref = qe.normalized() ? qe : qe.normalized_copy();
  switch (spec.kind) {
    case TestKind::ks: return detail::ks_test(s, ref, spec.alpha);
    case TestKind::chi_square: return detail::chi_square_test(s, ref, spec.alpha);
    case TestKind::coarse_grain_sup: return detail::coarse_grain_test(s, ref, spec);
  }
  fail(Errc::invalid_argument, "unknown test kind");
}

/// Samples restricted to the listed axes.
inline SampleSet project(const SampleSet& s, std::span<const std::size_t> axes) {
  SampleSet out;
  out.time = s.time;
  out.provenance = s.provenance;
  out.points.reserve(s.size());
  for (const auto& q : s.points) out.points.push_back(q.select(axes));
  return out;
}

/// Uncapped members of an ensemble as a sample set.
inline SampleSet uncapped_samples(const EnsembleState& e) {
  SampleSet out;
  out.time = e.time;
  for (std::size_t i = 0; i < e.size(); ++i)
    if (e.capped.empty() || !e.capped[i]) out.points.push_back(e.configs[i]);
  return out;
}

enum class Candidate { psi2, psi4 };

inline Density candidate_density(const WaveFunction& psi, Candidate c) {
  return power_density(psi, c == Candidate::psi2 ? 2 : 4);
}

struct EquivarianceOptions {
  double velocity_scale = 1.0;
  Candidate candidate = Candidate::psi2;
  TestSpec test = TestSpec::ks(0.01);
  unsigned threads = 1;
};

struct EquivarianceResult {
  TestReport report;
  WaveFunction psi_t;
  EnsembleState ensemble;
  std::size_t capped = 0;  // members excluded from the test
};

/// Draws the ensemble from candidate(psi0), transports it with
/// velocity_scale * v^psi up to time t and tests it against candidate(psi_t).
inline EquivarianceResult equivariance_check(const WaveFunction& psi0, const Hamiltonian& h,
                                             const PropagatorConfig& cfg, std::size_t count, double t,
                                             std::uint64_t seed, const EquivarianceOptions& opt = {}) {
  const Propagator prop(psi0.grid(), h, cfg);
  SampleSet s0 = sample(candidate_density(psi0, opt.candidate), count, seed);
  s0.time = psi0.time();
  TransportOptions topt;
  topt.velocity_scale = opt.velocity_scale;
  topt.threads = opt.threads;
  TransportResult tr = transport(psi0, make_ensemble(s0, seed), prop, t, topt);
  EquivarianceResult res;
  res.capped = tr.ensemble.capped_count();
  res.report = run_test(uncapped_samples(tr.ensemble), candidate_density(tr.psi, opt.candidate), opt.test);
  res.report.name = "equivariance_" + res.report.name;
  res.psi_t = std::move(tr.psi);
  res.ensemble = std::move(tr.ensemble);
  return res;
}

struct ConditionalBinResult {
  std::size_t bin = 0;
  Configuration center;
  std::size_t count = 0;
  TestReport report;
};

struct ConditionalCheckResult {
  std::vector<ConditionalBinResult> bins;  // populated bins only
  TestReport pooled;
  std::size_t underpopulated = 0;   // occupied bins below the minimum count
  double coverage = 0.0;            // fraction of members that fell in tested bins
  std::vector<double> bin_widths;   // per environment axis
};

/// Groups members by environment bin and tests each bin's x-components against
/// |conditional wf at the bin centre|^2. The pooled test maps every x through its
/// bin's conditional CDF along the first x-axis and tests the result for
/// uniformity.
inline ConditionalCheckResult conditional_probability_check(const WaveFunction& psi, const EnsembleState& e,
                                                            const SubsystemSplit& split, const Grid& y_bins,
                                                            double alpha = 0.01, std::size_t min_count = 50) {
  split.validate(psi.grid().dims());
  require(y_bins.dims() == split.y_axes.size(), Errc::binning_mismatch, "bin grid must span the environment axes");
  ConditionalCheckResult res;
  for (std::size_t k = 0; k < y_bins.dims(); ++k) res.bin_widths.push_back(y_bins.axis(k).spacing());

  std::vector<std::vector<std::size_t>> members(y_bins.size());
  for (std::size_t i = 0; i < e.size(); ++i) {
    if (!e.capped.empty() && e.capped[i]) continue;
    const auto c = y_bins.cell_of(e.configs[i].select(split.y_axes));
    if (c >= 0) members[static_cast<std::size_t>(c)].push_back(i);
  }
  std::vector<double> pit;
  std::size_t tested = 0;
  for (std::size_t b = 0; b < y_bins.size(); ++b) {
    if (members[b].empty()) continue;
    if (members[b].size() < min_count) {
      ++res.underpopulated;
      continue;
    }
    const Configuration center = y_bins.node(b);
    WaveFunction cond;
    try {
      cond = conditional_wavefunction(psi, split, center);
    } catch (const Error& err) {
      if (err.code() != Errc::null_slice) throw;
      ++res.underpopulated;
      continue;
    }
    const Density ref = density(cond);
    SampleSet xs;
    for (auto i : members[b]) xs.points.push_back(e.configs[i].select(split.x_axes));
    ConditionalBinResult br;
    br.bin = b;
    br.center = center;
    br.count = members[b].size();
    br.report = run_test(xs, ref, TestSpec::ks(alpha));
    br.report.name = "conditional_bin_" + std::to_string(b);
    res.bins.push_back(br);
    tested += members[b].size();

    const std::size_t first[] = {0};
    const detail::CellCdf cdf(ref.grid().dims() == 1 ? ref : marginal(ref, first));
    for (const auto& q : xs.points) pit.push_back(cdf(q[0]));
  }
  res.coverage = e.size() > 0 ? static_cast<double>(tested) / static_cast<double>(e.size()) : 0.0;
  if (!pit.empty()) {
    std::sort(pit.begin(), pit.end());
    res.pooled.name = "conditional_pooled_ks";
    res.pooled.statistic = stats::ks_statistic(pit, [](double u) { return std::clamp(u, 0.0, 1.0); });
    res.pooled.threshold = stats::ks_critical(alpha, pit.size());
    res.pooled.passed = res.pooled.statistic <= res.pooled.threshold;
    res.pooled.delta = alpha;
    res.pooled.sample_size = pit.size();
  }
  return res;
}

/// sup |d rho/dt + div J| at the middle snapshot, with d/dt by centred
/// differences over the neighbouring snapshots.
inline double continuity_residual(const WaveFunction& before, const WaveFunction& mid, const WaveFunction& after,
                                  const Hamiltonian& h) {
  require(before.grid() == mid.grid() && mid.grid() == after.grid(), Errc::grid_mismatch,
          "continuity residual needs snapshots on one grid");
  const double dt2 = after.time() - before.time();
  require(dt2 > 0.0, Errc::snapshot_gap, "snapshots must increase in time");
  const Grid& g = mid.grid();
  const auto j = probability_current(mid, h);
  std::vector<double> div(g.size(), 0.0);
  for (std::size_t k = 0; k < g.dims(); ++k) {
    std::vector<Complex> jk(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) jk[i] = Complex(j[k][i], 0.0);
    const auto [d_re, d_im] = gradient_parts(WaveFunction(g, std::move(jk)), k);
    for (std::size_t i = 0; i < g.size(); ++i) div[i] += d_re[i];
  }
  double worst = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double drho = (std::norm(after[i]) - std::norm(before[i])) / dt2;
    worst = std::max(worst, std::abs(drho + div[i]));
  }
  return worst;
}

}  // namespace bohm
