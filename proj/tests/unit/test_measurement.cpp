#include <catch2/catch_amalgamated.hpp>

#include "bohm/measurement.hpp"
#include "oracles.hpp"

using namespace bohm;
using Catch::Approx;

namespace {

const Grid kSys({AxisSpec{128, -10.0, 10.0}});
const Grid kPtr({AxisSpec{256, -32.0, 32.0}});
constexpr double kSysMass = 10.0;
constexpr double kPtrMass = 1.0;

WaveFunction packet(const Grid& g, double s, double x0) { return normalize(oracle::FreeGaussian{s, x0}.on(g)); }

PointerModel model(double lambda, std::function<double(const Configuration&)> a) {
  PointerModel m;
  m.system_axes = {0};
  m.pointer_axis = 1;
  m.coupling = lambda;
  m.t_on = 0.0;
  m.t_off = 1.0;
  m.settle = 1.5;
  m.measured = std::move(a);
  m.pointer_init = packet(kPtr, 1.0, 0.0);
  return m;
}

double sign_like(const Configuration& x) { return std::tanh(x[0] / 0.05); }

WaveFunction superposition(double c1, double c2) {
  const WaveFunction p1 = packet(kSys, 0.4, 3.0), p2 = packet(kSys, 0.4, -3.0);
  std::vector<Complex> a(kSys.size());
  for (std::size_t i = 0; i < a.size(); ++i) a[i] = c1 * p1[i] + c2 * p2[i];
  return normalize(WaveFunction(kSys, a));
}

const PropagatorConfig kCfg{Method::split_fourier, 0.01, 1};

Hamiltonian free_composite(const Grid& g) { return Hamiltonian::free(g, {kSysMass, kPtrMass}); }

}  // namespace

TEST_CASE("single branch: the pointer is translated rigidly") {
  const double lambda = 2.0, a = 1.0;
  const PointerModel m = model(lambda, [](const Configuration&) { return 1.0; });
  const WaveFunction psi0 = measurement_state(packet(kSys, 1.0, 0.0), m);
  const SampleSet s = sample(density(psi0), 2000, 5);
  const auto res = run_measurement(psi0, m, free_composite(psi0.grid()), kCfg, make_ensemble(s, 5));
  REQUIRE(res.branches.size() == 1);
  CHECK(res.branches[0].weight == Approx(1.0).margin(1e-8));
  CHECK(res.unassigned == 0);
  // constant force -lambda A over the window, then free flight
  const double tau = m.t_off - m.t_on;
  const double shift = -lambda * a * tau * (0.5 * tau + m.settle) / kPtrMass;
  const std::size_t keep[] = {1};
  const Density py = marginal(density(res.final_state), keep);
  double mean = 0.0;
  for (std::size_t j = 0; j < py.size(); ++j) mean += py.grid().node(j)[0] * py[j] * py.grid().cell_volume();
  CHECK(mean == Approx(shift).margin(1e-6));
  // every member moved by the same amount, up to its share of the spreading
  double ens_mean = 0.0, ens_mean0 = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    ens_mean += res.ensemble.configs[i][1] / double(s.size());
    ens_mean0 += s.points[i][1] / double(s.size());
  }
  CHECK(ens_mean - ens_mean0 == Approx(shift).margin(0.1));
}

TEST_CASE("two-branch measurement reproduces the Born weights") {
  const double c1 = 0.8, c2 = 0.6;
  const PointerModel m = model(6.0, sign_like);
  const WaveFunction sys = superposition(c1, c2);
  const WaveFunction psi0 = measurement_state(sys, m);
  const std::size_t count = 10000;
  const SampleSet s = sample(density(psi0), count, 2718);
  const auto res = run_measurement(psi0, m, free_composite(psi0.grid()), kCfg, make_ensemble(s, 2718));
  REQUIRE(res.branches.size() == 2);
  CHECK(res.unassigned == 0);
  CHECK(res.ensemble.capped_count() == 0);

  // branch 0 sits at negative pointer readings, i.e. A = +1, the packet at x = +3
  const WaveFunction p1 = packet(kSys, 0.4, 3.0), p2 = packet(kSys, 0.4, -3.0);
  const double w1 = c1 * c1 / (c1 * c1 + c2 * c2 + 2.0 * c1 * c2 * inner_product(p1, p2).real());
  CHECK(res.branches[0].weight == Approx(w1).margin(1e-8));
  CHECK(res.branches[0].weight + res.branches[1].weight == Approx(1.0).margin(1e-8));
  const double sigma = std::sqrt(w1 * (1.0 - w1) / double(count));
  CHECK(std::abs(res.branches[0].frequency - w1) <= 3.0 * sigma);
  double wsum = 0.0;
  for (double w : res.records.front().weights) wsum += w;
  CHECK(wsum == Approx(1.0).margin(1e-8));

  // within each branch the system follows |psi_alpha|^2, and psi_alpha is the
  // freely evolved packet
  const auto h_sys = Hamiltonian::free(kSys, {kSysMass});
  const WaveFunction p1_t = evolve(p1, h_sys, kCfg, m.readout_time()).back();
  const WaveFunction p2_t = evolve(p2, h_sys, kCfg, m.readout_time()).back();
  CHECK(fidelity(res.branches[0].psi, p1_t) >= 1.0 - 1e-6);
  CHECK(fidelity(res.branches[1].psi, p2_t) >= 1.0 - 1e-6);
  for (int b = 0; b < 2; ++b) {
    const TestReport rep = run_test(branch_samples(res, b), density(res.branches[b].psi), TestSpec::ks(0.01));
    CHECK(rep.passed);
  }
  // the readout barely depends on the settling margin once branches separate
  if (!std::isnan(res.margin_sensitivity)) CHECK(res.margin_sensitivity < 0.01);
}

TEST_CASE("collapsed state is measured again with the same outcome") {
  const PointerModel m = model(6.0, sign_like);
  const WaveFunction psi0 = measurement_state(superposition(0.8, 0.6), m);
  const SampleSet s = sample(density(psi0), 2000, 31);
  const auto first = run_measurement(psi0, m, free_composite(psi0.grid()), kCfg, make_ensemble(s, 31));
  const auto& rec = first.records.front();
  const auto split = m.split(2);
  const WaveFunction collapsed = collapse_and_continue(first.final_state, split, Configuration{rec.pointer_reading});
  CHECK(fidelity(collapsed, first.branches[static_cast<std::size_t>(rec.branch_id)].psi) > 1.0 - 1e-10);

  WaveFunction again_sys = collapsed;
  again_sys.set_time(0.0);
  const WaveFunction psi1 = measurement_state(again_sys, m);
  const SampleSet s1 = sample(density(psi1), 2000, 32);
  const auto second = run_measurement(psi1, m, free_composite(psi1.grid()), kCfg, make_ensemble(s1, 32));
  // one branch, reading the same side of the dial
  REQUIRE(second.branches.size() == 1);
  const double side_first = rec.pointer_reading;
  std::size_t same = 0;
  for (const auto& r : second.records) same += (r.pointer_reading > 0.0) == (side_first > 0.0);
  const double eps = 1.0 - second.branches[0].weight;
  CHECK(double(same) / 2000.0 >= 1.0 - 3.0 * std::sqrt(std::max(eps, 0.0) / 2000.0));
}

TEST_CASE("weak coupling leaves overlapping pointer branches") {
  PointerModel m = model(0.3, sign_like);
  m.settle = 0.2;
  const WaveFunction psi0 = measurement_state(superposition(0.8, 0.6), m);
  const SampleSet s = sample(density(psi0), 200, 1);
  try {
    run_measurement(psi0, m, free_composite(psi0.grid()), kCfg, make_ensemble(s, 1));
    FAIL("expected BranchOverlap");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::branch_overlap);
  }
}

TEST_CASE("collapse of product and entangled states") {
  const Grid g({AxisSpec{64, -8.0, 8.0}, AxisSpec{64, -8.0, 8.0}});
  const WaveFunction a = normalize(oracle::FreeGaussian{1.0, 0.5, 0.8}.on(Grid({g.axis(0)})));
  const WaveFunction b = normalize(oracle::FreeGaussian{1.3, -0.5, -0.2}.on(Grid({g.axis(1)})));
  const WaveFunction prod = product_compose(std::vector<WaveFunction>{a, b});
  const auto split = SubsystemSplit::of(2, {0});
  const WaveFunction f = collapse_and_continue(prod, split, {0.2});
  CHECK(fidelity(f, a) > 1.0 - 1e-10);

  // the collapsed factor evolved alone tracks the conditional wf of the joint evolution
  const PropagatorConfig cfg{Method::split_fourier, 0.01, 1};
  const auto h = Hamiltonian::free(g, {1.0, 1.0});
  const WaveFunction joint = evolve(prod, h, cfg, 1.0).back();
  const WaveFunction alone = evolve(f, Hamiltonian::free(Grid({g.axis(0)}), {1.0}), cfg, 1.0).back();
  const WaveFunction ybar = evolve(b, Hamiltonian::free(Grid({g.axis(1)}), {1.0}), cfg, 1.0).back();
  (void)ybar;
  CHECK(fidelity(alone, conditional_wavefunction(joint, split, {0.2})) > 1.0 - 1e-6);

  const WaveFunction ent = normalize(WaveFunction::from_function(g, [](const Configuration& q) {
    const double d = q[0] - q[1], s = q[0] + q[1];
    return std::exp(-d * d / 2.0 - s * s / 8.0);
  }));
  try {
    collapse_and_continue(ent, split, {0.5});
    FAIL("expected NotEffective");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::not_effective);
  }
}

TEST_CASE("two-slit screen statistics and trajectories") {
  TwoSlitGeometry geo;
  const auto res = two_slit_scenario(geo, 10000, 1801);
  CHECK(res.report.passed);
  CHECK(res.crossings == 0);
  CHECK(res.trajectories.size() == geo.recorded);
  // mirror symmetry of the histogram within 3 sigma per bin pair
  const std::size_t n = res.counts.size();
  std::size_t outliers = 0;
  for (std::size_t j = 0; j < n / 2; ++j) {
    const double a = res.counts[j], b = res.counts[n - 1 - j];
    if (std::abs(a - b) > 3.0 * std::sqrt(a + b) + 1e-9) ++outliers;
  }
  // 3-sigma bands: a couple of bins may stray by chance; more would be asymmetry
  CHECK(outliers <= 2);
  // every arrival above the axis started above it
  for (std::size_t r = 0; r < res.trajectories.size(); ++r)
    CHECK((res.trajectories[r].points.back()[0] > 0.0) == (res.started_above[r] == 1));
}
