#include <catch2/catch_amalgamated.hpp>

#include <map>

#include "bohm/multitime.hpp"

using namespace bohm;
using Catch::Approx;

namespace {

constexpr std::size_t kRuns = 10000;

const SequentialPlan& recorded_plan() {
  static const SequentialPlan p = sequential_plan();
  return p;
}

/// One shared run of the recorded plan, with Psi kept just after the first record.
const PlanResult& recorded_result() {
  static const PlanResult r = [] {
    PlanOptions opt;
    opt.probe_times = {1.5};
    const auto& p = recorded_plan();
    return run_plan(p.universe, p.plan, kRuns, 20240611, opt);
  }();
  return r;
}

}  // namespace

TEST_CASE("a deterministic trigger reduces to equal-time statistics") {
  SequentialPlan p = sequential_plan();
  p.plan.rules.resize(1);
  p.plan.rules[0].trigger = [](const TriggerView&) { return false; };
  p.plan.rules[0].deadline = 0.5;
  p.plan.rules[0].record.reset();
  p.universe.t_final = 0.5;
  const PlanResult r = run_plan(p.universe, p.plan, 2000, 3);
  REQUIRE(r.complete_runs() == 2000);
  SampleSet xs;
  for (const auto& run : r.runs) {
    CHECK(run.records[0].trigger_time == Approx(0.5));
    xs.points.push_back(run.records[0].x);
  }
  CHECK(run_test(xs, density(p.plan.rules[0].prepared), TestSpec::ks(0.01)).passed);
}

TEST_CASE("two recorded experiments give independent outcomes") {
  const auto& res = recorded_result();
  const auto& plan = recorded_plan().plan;
  CHECK(res.flagged == 0);
  CHECK(res.incomplete == 0);
  // triggers are random and ordered within each run
  std::vector<double> t1;
  for (const auto& run : res.runs) {
    REQUIRE(run.records.size() == 2);
    CHECK(run.records[0].trigger_time <= run.records[1].trigger_time);
    CHECK(run.records[0].fidelity >= 1.0 - 1e-4);
    t1.push_back(run.records[0].trigger_time);
  }
  std::sort(t1.begin(), t1.end());
  CHECK(std::unique(t1.begin(), t1.end()) - t1.begin() > 10);

  const IndependenceReport rep = independence_report(res, plan);
  for (const auto& m : rep.marginals) CHECK(m.passed);
  CHECK(rep.correlation_threshold == Approx(0.04));
  CHECK(rep.max_abs_correlation < rep.correlation_threshold);
  for (const auto& j : rep.joint) CHECK(j.passed);
  CHECK(rep.passed());
}

TEST_CASE("the second trigger depends on the first record") {
  // runs whose first outcome is large read early off the record
  const auto& res = recorded_result();
  std::vector<double> x1, t2;
  for (const auto& run : res.runs) {
    x1.push_back(run.records[0].x[0]);
    t2.push_back(run.records[1].trigger_time);
  }
  CHECK(stats::correlation(x1, t2) < -0.2);
  // which is fine: outcome 2 still does not know about outcome 1
  const auto audit = trigger_audit(res, 0, 1);
  CHECK(std::abs(audit.correlation) < audit.threshold);
}

TEST_CASE("random-system conditional formula within trigger-time bins") {
  const auto& res = recorded_result();
  for (std::size_t rule = 0; rule < 2; ++rule) {
    const auto reps = random_system_check(res, recorded_plan().plan, rule, 4);
    CHECK(reps.size() >= 2);
    for (const auto& r : reps) CHECK(r.passed);
  }
}

TEST_CASE("an unrecorded re-examination of a ground state repeats the outcome") {
  SequentialPlanGeometry geo;
  geo.record_outcomes = false;
  const SequentialPlan p = sequential_plan(geo);
  const PlanResult r = run_plan(p.universe, p.plan, 2000, 99);
  REQUIRE(r.complete_runs() == 2000);
  double worst = 0.0;
  for (const auto& run : r.runs) worst = std::max(worst, std::abs(run.records[1].x[0] - run.records[0].x[0]));
  CHECK(worst <= 1e-12);
  // hence the pair fails every independence check
  const auto rep = independence_report(r, p.plan);
  CHECK(rep.max_abs_correlation > 0.99);
  CHECK_FALSE(rep.passed());
}

TEST_CASE("conditioning on a later wave function biases the earlier outcome") {
  const auto& res = recorded_result();
  const auto& plan = recorded_plan().plan;
  REQUIRE(res.probes.size() == 1);
  // the happy experimenter keeps the runs whose system wave function after the
  // record leans to positive x
  const PlanResult happy = filter_by_later_wavefunction(res, 0, {0}, [](const WaveFunction& w) {
    double m = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) m += w.grid().node(i)[0] * std::norm(w[i]) * w.grid().cell_volume();
    return m > 0.0;
  });
  REQUIRE(happy.runs.size() > 1000);
  SampleSet xs;
  for (const auto& run : happy.runs) xs.points.push_back(run.records[0].x);
  CHECK_FALSE(run_test(xs, density(plan.rules[0].prepared), TestSpec::ks(0.01)).passed);
}

TEST_CASE("relativizing to an event before all triggers changes nothing") {
  const auto& res = recorded_result();
  const auto& plan = recorded_plan().plan;
  const double start = SequentialPlanGeometry{}.clock_start;
  const Relativized rel = relativize(res, [start](const Configuration& env0) { return env0[1] > start; });
  CHECK(rel.kept_fraction == Approx(0.5).margin(0.03));
  CHECK(rel.effective_sample_size == Approx(double(rel.result.runs.size())));
  const auto rep = independence_report(rel.result, plan);
  for (const auto& m : rep.marginals) CHECK(m.passed);
  CHECK(rep.max_abs_correlation < rep.correlation_threshold);
}

TEST_CASE("selections on the environment leave the outcome law intact") {
  const auto& res = recorded_result();
  const auto& plan = recorded_plan().plan;
  const TestReport all = selection_invariance_test(res, plan, 1, make_selector("all"));
  SampleSet xs;
  for (const auto& run : res.runs) xs.points.push_back(run.records[1].x);
  const TestReport plain = run_test(xs, density(plan.rules[1].prepared), TestSpec::ks(0.01));
  CHECK(all.statistic == plain.statistic);
  for (const auto& name : {"hash50", "y_positive", "y_band", "y_alternating", "y_radius"}) {
    const TestReport t = selection_invariance_test(res, plan, 1, make_selector(name, {}));
    INFO(name);
    CHECK(t.passed);
  }
  try {
    selection_invariance_test(res, plan, 1, make_selector("y_band", {100.0, 101.0}));
    FAIL("expected EmptySelection");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::empty_selection);
  }
  CHECK_THROWS_AS(make_selector("nope"), Error);
}

TEST_CASE("equal-time selection against the conditional wave function") {
  // entangled two-branch state: selecting on Y changes the system's wave
  // function, and the test follows it
  const Grid g({AxisSpec{32, -8.0, 8.0}, AxisSpec{64, -16.0, 16.0}});
  const WaveFunction psi = normalize(WaveFunction::from_function(g, [](const Configuration& q) {
    const double a = std::exp(-(q[0] - 2.0) * (q[0] - 2.0) / 2.0 - (q[1] - 6.0) * (q[1] - 6.0) / 4.0);
    const double b = std::exp(-(q[0] + 2.0) * (q[0] + 2.0) / 8.0 - (q[1] + 6.0) * (q[1] + 6.0) / 4.0);
    return 0.8 * a + 0.6 * b;
  }));
  const SampleSet s = sample(density(psi), kRuns, 77);
  const auto split = SubsystemSplit::of(2, {0});
  const std::map<std::string, std::vector<double>> params = {{"y_band", {4.0, 8.0}}, {"y_radius", {7.0}}};
  for (const auto& name : selector_names()) {
    INFO(name);
    const auto it = params.find(name);
    const auto sel = make_selector(name, it == params.end() ? std::vector<double>{} : it->second);
    CHECK(selection_invariance_test(psi, split, s.points, sel, 0.01).passed);
  }
  // the test has power: a selection that looks at X fails
  std::vector<std::uint8_t> keep(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) keep[i] = s.points[i][0] > 0.0 ? 1 : 0;
  CHECK_FALSE(detail::selected_pit_test(psi, split, s.points, keep, 0.01, "x_positive").passed);
}

TEST_CASE("plan errors") {
  const auto& p = recorded_plan();
  SequentialPlan small = p;
  small.universe.t_final = 0.3;
  small.plan.rules[0].deadline = 0.1;
  small.plan.rules[0].record.reset();
  small.plan.rules[1].trigger = [](const TriggerView& v) { return v.time >= 0.2; };
  small.plan.rules[1].deadline = 0.2;
  small.plan.rules[1].record.reset();
  const PlanResult r = run_plan(small.universe, small.plan, 100, 5);
  try {
    independence_report(r, small.plan);
    FAIL("expected InsufficientRuns");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::insufficient_runs);
  }

  // a mismatched preparation flags every run
  SequentialPlan bad = small;
  const AxisSpec sys = bad.plan.rules[0].prepared.grid().axis(0);
  bad.plan.rules[0].prepared = normalize(WaveFunction::from_function(Grid({sys}), [&](const Configuration& q) {
    return Complex(std::sin(2.0 * 3.14159265358979323846 * (q[0] - sys.min) / sys.length()), 0.0);
  }));
  const PlanResult f = run_plan(bad.universe, bad.plan, 100, 5);
  CHECK(f.flagged == 100);
  CHECK(f.complete_runs() == 0);

  // a record window may not open before its rule's deadline
  SequentialPlan early = p;
  early.plan.rules[0].record->t_on = 0.5;
  CHECK_THROWS_AS(run_plan(early.universe, early.plan, 10, 1), Error);
}

TEST_CASE("plan outcomes do not depend on the thread count") {
  SequentialPlan small = recorded_plan();
  small.universe.t_final = 1.2;
  small.plan.rules.resize(1);
  small.plan.rules[0].record.reset();
  PlanOptions one, four;
  four.threads = 4;
  const PlanResult a = run_plan(small.universe, small.plan, 300, 8, one);
  const PlanResult b = run_plan(small.universe, small.plan, 300, 8, four);
  for (std::size_t m = 0; m < 300; ++m) {
    REQUIRE(a.runs[m].records.size() == b.runs[m].records.size());
    for (std::size_t k = 0; k < a.runs[m].records.size(); ++k) {
      CHECK(a.runs[m].records[k].x == b.runs[m].records[k].x);
      CHECK(a.runs[m].records[k].trigger_time == b.runs[m].records[k].trigger_time);
    }
  }
}
