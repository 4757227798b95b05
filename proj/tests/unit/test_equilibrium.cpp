#include <catch2/catch_amalgamated.hpp>

#include "bohm/equilibrium.hpp"
#include "oracles.hpp"

using namespace bohm;
using Catch::Approx;

namespace {

Grid periodic_line(std::size_t n, double lo, double hi) { return Grid({AxisSpec{n, lo, hi, Boundary::periodic}}); }

Density gaussian_density(const Grid& g, double s) {
  std::vector<double> v(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double x = g.node(i)[0];
    v[i] = std::exp(-x * x / (2.0 * s * s));
  }
  return Density(g, v).normalized_copy();
}

Density squared(const Density& rho) {
  std::vector<double> v(rho.values().begin(), rho.values().end());
  for (auto& x : v) x *= x;
  return Density(rho.grid(), v).normalized_copy();
}

WaveFunction two_packets(const Grid& g) {
  const oracle::FreeGaussian a{0.5, -2.0, 0.0}, b{1.5, 2.5, 0.0};
  return normalize(WaveFunction::from_function(
      g, [&](const Configuration& q) { return a.amplitude(q[0], 0.0) + 0.8 * b.amplitude(q[0], 0.0); }));
}

}  // namespace

TEST_CASE("sampling a single-cell density stays in that cell") {
  const Grid g = periodic_line(10, 0.0, 10.0);
  std::vector<double> v(10, 0.0);
  v[6] = 1.0;
  const SampleSet s = sample(Density(g, v, true), 500, 3);
  for (const auto& q : s.points) CHECK(g.cell_of(q) == 6);
}

TEST_CASE("uniform sampling passes KS") {
  const Grid g = periodic_line(50, 0.0, 1.0);
  const std::size_t m = 10000;
  const SampleSet s = sample(Density(g, std::vector<double>(50, 1.0), true), m, 11);
  std::vector<double> xs;
  for (const auto& q : s.points) xs.push_back(q[0]);
  std::sort(xs.begin(), xs.end());
  CHECK(stats::ks_statistic(xs, [](double x) { return x; }) < 1.63 / std::sqrt(double(m)));
}

TEST_CASE("two equal spikes split evenly") {
  const Grid g = periodic_line(20, 0.0, 20.0);
  std::vector<double> v(20, 0.0);
  v[3] = v[15] = 0.5;
  const std::size_t m = 10000;
  const SampleSet s = sample(Density(g, v, true), m, 99);
  std::size_t first = 0;
  for (const auto& q : s.points) first += g.cell_of(q) == 3;
  CHECK(std::abs(double(first) / m - 0.5) <= 3.0 * 0.5 / std::sqrt(double(m)));
}

TEST_CASE("sampling requires a normalized density") {
  const Grid g = periodic_line(4, 0.0, 4.0);
  try {
    sample(Density(g, {1.0, 1.0, 1.0, 1.0}), 10, 1);
    FAIL("expected NotNormalized");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::not_normalized);
  }
}

TEST_CASE("sampling is deterministic in the seed") {
  const Grid g = periodic_line(32, -4.0, 4.0);
  const Density rho = gaussian_density(g, 1.0);
  CHECK(sample(rho, 100, 5).points == sample(rho, 100, 5).points);
  CHECK(sample(rho, 100, 5).points != sample(rho, 100, 6).points);
}

TEST_CASE("empirical distribution examples") {
  const Grid bins = periodic_line(4, 0.0, 4.0);
  SampleSet one;
  one.points = {Configuration{2.2}};
  const Density d1 = empirical_distribution(one, bins);
  CHECK(d1[2] == Approx(1.0));
  CHECK(d1.mass() == Approx(1.0));

  SampleSet centres;
  for (int r = 0; r < 3; ++r)
    for (std::size_t j = 0; j < 4; ++j) centres.points.push_back(Configuration{bins.axis(0).node(j)});
  const Density du = empirical_distribution(centres, bins);
  for (std::size_t j = 0; j < 4; ++j) CHECK(du[j] == Approx(0.25));

  const Grid box({AxisSpec{4, 0.0, 5.0, Boundary::box}});
  SampleSet outside;
  outside.points = {Configuration{0.1}};
  try {
    empirical_distribution(outside, box);
    FAIL("expected OutOfDomain");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::out_of_domain);
  }
}

TEST_CASE("Gaussian histogram converges within the DKW band") {
  // DKW at alpha = 0.01: sup |F_emp - F| <= sqrt(ln(2/0.01) / (2M)) = 0.0163 < 0.02
  const Grid fine = periodic_line(512, -6.0, 6.0);
  const Grid bins = periodic_line(64, -6.0, 6.0);
  const std::size_t m = 10000;
  const SampleSet s = sample(gaussian_density(fine, 1.0), m, 2024);
  const Density emp = empirical_distribution(s, bins);
  double fe = 0.0, worst = 0.0;
  for (std::size_t j = 0; j < 64; ++j) {
    fe += emp[j] * bins.cell_volume();
    const double edge = bins.axis(0).node(j) + 0.5 * bins.axis(0).spacing();
    worst = std::max(worst, std::abs(fe - oracle::normal_cdf(edge)));
  }
  CHECK(worst < 0.02);
}

TEST_CASE("agreement norm examples") {
  const Grid g = periodic_line(10, 0.0, 1.0);
  const Density a(g, std::vector<double>(10, 1.0), true);
  std::vector<double> bv(10, 1.0);
  for (int j = 0; j < 5; ++j) bv[j] = 1.2;
  for (int j = 5; j < 10; ++j) bv[j] = 0.8;
  const Density b(g, bv, true);

  TestSpec same;
  same.kind = TestKind::coarse_grain_sup;
  same.functions = {std::vector<double>(10, 1.0)};
  CHECK(agreement_norm(a, a, same) == 0.0);
  CHECK(agreement_norm(a, b, same) == Approx(0.0).margin(1e-15));

  TestSpec half = same;
  std::vector<double> ind(10, 0.0);
  for (int j = 0; j < 5; ++j) ind[j] = 1.0;
  half.functions = {ind};
  CHECK(agreement_norm(a, b, half) == Approx(0.1).epsilon(1e-12));

  const Density other(periodic_line(5, 0.0, 1.0), std::vector<double>(5, 1.0), true);
  try {
    agreement_norm(a, other, half);
    FAIL("expected BinningMismatch");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::binning_mismatch);
  }
}

TEST_CASE("equal-mass indicators split the mass evenly") {
  const Grid g = periodic_line(1024, -6.0, 6.0);
  const Density rho = gaussian_density(g, 1.0);
  const auto fs = equal_mass_indicators(rho, 16);
  CHECK(fs.size() == 16);
  for (const auto& f : fs) {
    double m = 0.0;
    for (std::size_t i = 0; i < f.size(); ++i) m += f[i] * rho[i] * g.cell_volume();
    CHECK(m == Approx(1.0 / 16.0).margin(0.004));
  }
}

TEST_CASE("run_test accepts self-consistent samples and rejects squared densities") {
  const Grid g = periodic_line(256, -8.0, 8.0);
  const Density rho = gaussian_density(g, 1.3);
  const std::size_t m = 10000;
  const SampleSet good = sample(rho, m, 77);
  const SampleSet bad = sample(squared(rho), m, 78);
  for (const TestSpec& spec : {TestSpec::ks(), TestSpec::chi_square(), TestSpec::coarse_grain(rho, 0.02)}) {
    const TestReport ok = run_test(good, rho, spec);
    const TestReport no = run_test(bad, rho, spec);
    CHECK(ok.passed);
    CHECK(ok.passed == (ok.statistic <= ok.threshold));
    CHECK(ok.sample_size == m);
    CHECK_FALSE(no.passed);
  }
}

TEST_CASE("KS false-failure rate matches alpha over 200 seeds") {
  const Grid g = periodic_line(128, -6.0, 6.0);
  const Density rho = gaussian_density(g, 1.0);
  const double alpha = 0.05;
  const int reps = 200;
  int ks_fail = 0, chi_fail = 0;
  for (int r = 0; r < reps; ++r) {
    const SampleSet s = sample(rho, 2000, 1000 + r);
    ks_fail += !run_test(s, rho, TestSpec::ks(alpha)).passed;
    chi_fail += !run_test(s, rho, TestSpec::chi_square(alpha)).passed;
  }
  const double sigma = std::sqrt(reps * alpha * (1.0 - alpha));
  CHECK(std::abs(ks_fail - reps * alpha) <= 3.0 * sigma);
  CHECK(std::abs(chi_fail - reps * alpha) <= 3.0 * sigma);
}

TEST_CASE("coarse-grain pass rate respects the reliability bound") {
  const Grid g = periodic_line(128, -6.0, 6.0);
  const Density rho = gaussian_density(g, 1.0);
  const TestSpec spec = TestSpec::coarse_grain(rho, 0.02);
  const int reps = 200;
  int passes = 0;
  double delta = 0.0;
  for (int r = 0; r < reps; ++r) {
    const TestReport rep = run_test(sample(rho, 10000, 5000 + r), rho, spec);
    passes += rep.passed;
    delta = rep.delta;
  }
  CHECK(delta < 1.0);
  CHECK(double(passes) / reps >= 1.0 - delta);
}

TEST_CASE("equivariance of |psi|^2 for the free Gaussian") {
  const Grid g = periodic_line(1024, -20.0, 20.0);
  const oracle::FreeGaussian fg;
  const double t = fg.time_for_width(2.0);
  const auto h = Hamiltonian::free(g, {1.0});
  const PropagatorConfig cfg{Method::split_fourier, 0.02, 1};
  const auto res = equivariance_check(fg.on(g), h, cfg, 10000, t, 42);
  CHECK(res.report.passed);
  CHECK(res.report.statistic < 0.0214);
  CHECK(res.capped == 0);

  EquivarianceOptions fast;
  fast.velocity_scale = 2.0;
  CHECK_FALSE(equivariance_check(fg.on(g), h, cfg, 10000, t, 42, fast).report.passed);

  // every power of a Gaussian is carried along by the linear flow x -> x sigma(t)/sigma0
  EquivarianceOptions quartic;
  quartic.candidate = Candidate::psi4;
  CHECK(equivariance_check(fg.on(g), h, cfg, 10000, t, 42, quartic).report.passed);
}

TEST_CASE("|psi|^4 is not equivariant for a two-packet state") {
  const Grid g = periodic_line(512, -20.0, 20.0);
  const auto h = Hamiltonian::free(g, {1.0});
  const PropagatorConfig cfg{Method::split_fourier, 0.02, 1};
  EquivarianceOptions quartic;
  quartic.candidate = Candidate::psi4;
  CHECK_FALSE(equivariance_check(two_packets(g), h, cfg, 10000, 2.0, 7, quartic).report.passed);
  CHECK(equivariance_check(two_packets(g), h, cfg, 10000, 2.0, 7).report.passed);
}

TEST_CASE("conditional probability check on a product state") {
  const Grid g({AxisSpec{64, -8.0, 8.0}, AxisSpec{64, -8.0, 8.0}});
  const oracle::FreeGaussian a{1.0, 0.5, 0.7}, b{1.2, -0.5, -0.3};
  const WaveFunction psi = normalize(WaveFunction::from_function(
      g, [&](const Configuration& q) { return a.amplitude(q[0], 0.0) * b.amplitude(q[1], 0.0); }));
  const auto split = SubsystemSplit::of(2, {0});
  const Grid ybins({AxisSpec{8, -8.0, 8.0}});

  // time 0: sample and condition immediately
  SampleSet s0 = sample(density(psi), 10000, 8);
  const auto now = conditional_probability_check(psi, make_ensemble(s0, 8), split, ybins);
  CHECK(now.pooled.passed);
  for (const auto& b : now.bins) CHECK(b.report.passed);
  CHECK(now.coverage > 0.99);
  CHECK(now.bin_widths == std::vector<double>{2.0});

  // after free evolution the state is still a product
  const Propagator prop(g, Hamiltonian::free(g, {1.0, 1.0}), {Method::split_fourier, 0.02, 1});
  const auto tr = transport(psi, make_ensemble(s0, 8), prop, 1.0);
  const auto later = conditional_probability_check(tr.psi, tr.ensemble, split, ybins);
  CHECK(later.pooled.passed);
  std::size_t failures = 0;
  for (const auto& b : later.bins) failures += !b.report.passed;
  CHECK(failures == 0);

  // within a populated bin, f(X) and g(Y) are uncorrelated
  for (const auto& b : later.bins) {
    std::vector<double> fx, gy;
    for (const auto& q : tr.ensemble.configs)
      if (ybins.cell_of(Configuration{q[1]}) == static_cast<std::ptrdiff_t>(b.bin)) {
        fx.push_back(std::tanh(q[0]));
        gy.push_back(std::cos(q[1]));
      }
    CHECK(std::abs(stats::correlation(fx, gy)) < 4.0 / std::sqrt(double(fx.size())));
  }
}

TEST_CASE("continuity residual is small for a resolved evolution") {
  const Grid g = periodic_line(512, -20.0, 20.0);
  const auto h = Hamiltonian::free(g, {1.0});
  const auto snaps = evolve(two_packets(g), h, {Method::split_fourier, 1e-3, 1}, 0.502);
  const double r = continuity_residual(snaps[500], snaps[501], snaps[502], h);
  CHECK(r < 1e-3);
}
