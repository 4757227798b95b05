#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "bohm/equilibrium.hpp"
#include "bohm/guidance.hpp"
#include "bohm/interp.hpp"
#include "bohm/parallel.hpp"
#include "bohm/propagator.hpp"
#include "bohm/stats.hpp"
#include "bohm/subsystem.hpp"

namespace bohm {

/// What a trigger may look at: the environment coordinates of one run at every
/// snapshot so far (last entry is now) and the snapshot time. Never the system.
struct TriggerView {
  double time = 0.0;
  std::span<const Configuration> history;

  [[nodiscard]] const Configuration& now() const { return history.back(); }
  [[nodiscard]] const Configuration& initial() const { return history.front(); }
};

/// Writes an outcome into a register axis: V = coupling * measured(q) * r on
/// [t_on, t_off).
struct RecordCoupling {
  std::size_t register_axis = 0;
  double coupling = 1.0;
  double t_on = 0.0;
  double t_off = 0.0;
  std::function<double(const Configuration& q)> measured;
};

struct RandomSystemRule {
  std::string label;
  std::function<bool(const TriggerView&)> trigger;
  // fires at the first snapshot at or after this time if the trigger has not
  double deadline = std::numeric_limits<double>::infinity();
  // system axes, chosen from the environment at trigger time
  std::function<std::vector<std::size_t>(const Configuration& env)> target;
  WaveFunction prepared;
  std::function<double(const Configuration& x)> outcome;
  std::optional<RecordCoupling> record;
};

struct ExperimentPlan {
  std::vector<std::size_t> environment_axes;
  std::vector<RandomSystemRule> rules;

  void validate(std::size_t dims) const {
    require(!environment_axes.empty(), Errc::empty_axis_set, "plan needs environment axes");
    for (auto k : environment_axes) require(k < dims, Errc::invalid_argument, "environment axis out of range");
    require(!rules.empty(), Errc::invalid_argument, "plan has no rules");
    for (const auto& r : rules) {
      require(static_cast<bool>(r.trigger) && static_cast<bool>(r.target), Errc::invalid_argument,
              "rule " + r.label + " lacks a trigger or target");
      if (!r.record) continue;
      const auto& rc = *r.record;
      require(std::find(environment_axes.begin(), environment_axes.end(), rc.register_axis) != environment_axes.end(),
              Errc::invalid_argument, "rule " + r.label + " records into a non-environment axis");
      require(rc.t_off > rc.t_on && rc.t_on >= r.deadline - 1e-12, Errc::invalid_argument,
              "rule " + r.label + " must fire before its record window opens");
      require(static_cast<bool>(rc.measured), Errc::invalid_argument, "rule " + r.label + " records nothing");
    }
  }
};

struct Universe {
  WaveFunction psi0;
  Hamiltonian h;
  PropagatorConfig cfg;
  double t_final = 0.0;
};

struct OutcomeRecord {
  std::size_t run_id = 0;
  std::string rule;
  std::size_t rule_index = 0;
  double trigger_time = 0.0;
  Configuration x;    // system coordinates at the trigger
  Configuration env;  // environment coordinates at the trigger
  double z = 0.0;
  int branch_id = -1;
  double fidelity = 0.0;
};

struct RunOutcome {
  std::vector<OutcomeRecord> records;
  bool flagged = false;  // a preparation check failed

  [[nodiscard]] bool complete(std::size_t rules) const { return !flagged && records.size() == rules; }
};

struct PlanOptions {
  unsigned threads = 1;
  double fidelity_tolerance = 1e-4;
  std::vector<double> probe_times;  // keep Psi and every run's configuration here
  std::vector<std::size_t> record;  // runs whose trajectories are kept
};

struct Probe {
  double time = 0.0;
  WaveFunction psi;
  std::vector<Configuration> configs;
};

struct PlanResult {
  std::vector<RunOutcome> runs;
  std::vector<Configuration> initial_env;
  std::size_t flagged = 0;
  std::size_t incomplete = 0;
  std::vector<Probe> probes;
  std::vector<Trajectory> trajectories;
  WaveFunction final_state;
  std::size_t rules = 0;

  [[nodiscard]] std::size_t complete_runs() const {
    return static_cast<std::size_t>(
        std::count_if(runs.begin(), runs.end(), [&](const RunOutcome& r) { return r.complete(rules); }));
  }
};

/// H plus every record coupling of the plan.
inline Hamiltonian plan_hamiltonian(const Grid& grid, const Hamiltonian& h, const ExperimentPlan& plan) {
  struct Window {
    double on, off;
    std::vector<double> field;
  };
  auto windows = std::make_shared<std::vector<Window>>();
  for (const auto& r : plan.rules) {
    if (!r.record) continue;
    const auto& rc = *r.record;
    Window w{rc.t_on, rc.t_off, std::vector<double>(grid.size())};
    for (std::size_t i = 0; i < grid.size(); ++i) {
      const Configuration q = grid.node(i);
      w.field[i] = rc.coupling * rc.measured(q) * q[rc.register_axis];
    }
    windows->push_back(std::move(w));
  }
  Hamiltonian out = h;
  if (windows->empty()) return out;
  PotentialCallback prior = h.time_dependent;
  out.time_dependent = [windows, prior](double t, const Grid& g, std::span<double> v) {
    if (prior) prior(t, g, v);
    for (const auto& w : *windows) {
      if (t < w.on || t >= w.off) continue;
      for (std::size_t i = 0; i < v.size(); ++i) v[i] += w.field[i];
    }
  };
  return out;
}

namespace detail {

/// Conditional slices for one split, with the offset tables built once.
class Slicer {
 public:
  Slicer(const Grid& grid, SubsystemSplit split)
      : split_(std::move(split)),
        xgrid_(grid.subgrid(split_.x_axes)),
        ygrid_(grid.subgrid(split_.y_axes)),
        xoff_(subgrid_offsets(grid, split_.x_axes)),
        yoff_(subgrid_offsets(grid, split_.y_axes)) {}

  [[nodiscard]] const SubsystemSplit& split() const { return split_; }

  /// Normalized Psi(., y); nullopt where the slice carries < 1e-14 of |Psi|^2.
  [[nodiscard]] std::optional<WaveFunction> conditional(const WaveFunction& psi, double total,
                                                        const Configuration& y) const {
    const Stencil st = make_stencil(ygrid_, y.coords(), WallMode::zero);
    std::vector<Complex> out(xoff_.size());
    const auto field = psi.amplitudes();
    for (std::size_t c = 0; c < st.count; ++c) {
      if (st.cells[c] == Stencil::kNoCell || st.weights[c] == 0.0) continue;
      const std::size_t base = yoff_[st.cells[c]];
      const double w = st.weights[c];
      for (std::size_t i = 0; i < xoff_.size(); ++i) out[i] += w * field[base + xoff_[i]];
    }
    WaveFunction s(xgrid_, std::move(out), psi.time());
    if (!(s.norm2() / total >= 1e-14)) return std::nullopt;
    return normalize(s);
  }

 private:
  SubsystemSplit split_;
  Grid xgrid_, ygrid_;
  std::vector<std::size_t> xoff_, yoff_;
};

/// CDF of the first coordinate under |psi|^2.
inline CellCdf first_axis_cdf(const Density& rho) {
  if (rho.grid().dims() == 1) return CellCdf(rho);
  const std::size_t first[] = {0};
  return CellCdf(marginal(rho, first));
}

inline TestReport uniform_ks(std::vector<double> u, double alpha, std::string name) {
  TestReport r;
  r.name = std::move(name);
  r.sample_size = u.size();
  r.delta = alpha;
  if (u.empty()) return r;
  std::sort(u.begin(), u.end());
  r.statistic = stats::ks_statistic(u, [](double v) { return std::clamp(v, 0.0, 1.0); });
  r.threshold = stats::ks_critical(alpha, u.size());
  r.passed = r.statistic <= r.threshold;
  return r;
}

}  // namespace detail

/// Runs the plan once per sampled initial configuration. Psi is shared by every
/// run; the runs differ only in Q0, so one propagation carries them all.
inline PlanResult run_plan(const Universe& u, const ExperimentPlan& plan, std::size_t runs, std::uint64_t seed,
                           const PlanOptions& opt = {}) {
  const Grid& g = u.psi0.grid();
  plan.validate(g.dims());
  require(runs >= 1, Errc::invalid_argument, "need at least one run");
  const std::size_t nrules = plan.rules.size();

  const SampleSet s = sample(density(normalize(u.psi0)), runs, seed);
  EnsembleState e = make_ensemble(s, seed);
  e.time = u.psi0.time();
  const Propagator prop(g, plan_hamiltonian(g, u.h, plan), u.cfg);

  PlanResult res;
  res.rules = nrules;
  res.runs.resize(runs);
  res.initial_env.resize(runs);
  std::vector<std::vector<Configuration>> history(runs);
  std::vector<std::size_t> next(runs, 0);
  for (std::size_t m = 0; m < runs; ++m) res.initial_env[m] = e.configs[m].select(plan.environment_axes);

  std::map<std::vector<std::size_t>, std::unique_ptr<detail::Slicer>> slicers;
  std::vector<bool> probe_done(opt.probe_times.size(), false);

  TransportOptions topt;
  topt.threads = opt.threads;
  topt.record = opt.record;
  const double cadence = u.cfg.dt * static_cast<double>(u.cfg.steps_per_snapshot);

  struct Event {
    std::size_t run, rule;
    std::vector<std::size_t> target;
  };
  auto tr = transport(u.psi0, std::move(e), prop, u.t_final, topt, [&](const WaveFunction& psi, const EnsembleState& ens) {
    const double t = ens.time;
    for (std::size_t p = 0; p < opt.probe_times.size(); ++p) {
      if (probe_done[p] || t < opt.probe_times[p] - 1e-9 * cadence) continue;
      res.probes.push_back({t, psi, ens.configs});
      probe_done[p] = true;
    }

    // triggers are cheap predicates on Y; evaluate them in run order
    std::vector<Event> events;
    for (std::size_t m = 0; m < runs; ++m) {
      if (next[m] >= nrules || res.runs[m].flagged) continue;
      history[m].push_back(ens.configs[m].select(plan.environment_axes));
      const TriggerView view{t, history[m]};
      while (next[m] < nrules) {
        const auto& rule = plan.rules[next[m]];
        if (!(t >= rule.deadline - 1e-9 * cadence) && !rule.trigger(view)) break;
        events.push_back({m, next[m], rule.target(view.now())});
        ++next[m];
      }
      if (next[m] >= nrules) std::vector<Configuration>().swap(history[m]);
    }
    if (events.empty()) return;

    // environment supports for branch labels, one per distinct target
    std::map<std::vector<std::size_t>, std::pair<Grid, std::vector<std::int64_t>>> labels;
    for (const auto& ev : events) {
      if (!slicers.count(ev.target)) slicers.emplace(ev.target, std::make_unique<detail::Slicer>(g, SubsystemSplit::of(g.dims(), ev.target)));
      if (labels.count(ev.target)) continue;
      const auto& split = slicers.at(ev.target)->split();
      const Density ym = environment_marginal(psi, split);
      std::vector<std::int64_t> lab(ym.size(), -1);
      const auto comps = support_components(ym, 1e-10);
      for (std::size_t c = 0; c < comps.size(); ++c)
        for (auto cell : comps[c].cells) lab[cell] = static_cast<std::int64_t>(c);
      labels.emplace(ev.target, std::make_pair(ym.grid(), std::move(lab)));
    }

    const double total = psi.norm2();
    std::vector<OutcomeRecord> made(events.size());
    std::vector<std::uint8_t> ok(events.size(), 0);
    parallel_for(events.size(), opt.threads, [&](std::size_t i) {
      const Event& ev = events[i];
      const auto& rule = plan.rules[ev.rule];
      const detail::Slicer& sl = *slicers.at(ev.target);
      const Configuration& q = ens.configs[ev.run];
      OutcomeRecord rec;
      rec.run_id = ev.run;
      rec.rule = rule.label;
      rec.rule_index = ev.rule;
      rec.trigger_time = t;
      rec.x = q.select(sl.split().x_axes);
      rec.env = q.select(plan.environment_axes);
      rec.z = rule.outcome ? rule.outcome(rec.x) : rec.x[0];
      const Configuration y = q.select(sl.split().y_axes);
      const auto& [ygrid, lab] = labels.at(ev.target);
      const auto cell = ygrid.cell_of(y);
      if (cell >= 0) rec.branch_id = static_cast<int>(lab[static_cast<std::size_t>(cell)]);
      const auto cond = sl.conditional(psi, total, y);
      if (cond && cond->grid() == rule.prepared.grid()) rec.fidelity = fidelity(*cond, rule.prepared);
      ok[i] = rec.fidelity >= 1.0 - opt.fidelity_tolerance;
      made[i] = std::move(rec);
    });
    for (std::size_t i = 0; i < events.size(); ++i) {
      auto& run = res.runs[events[i].run];
      if (run.flagged) continue;
      if (!ok[i]) {
        // PreparationFailed: the run is flagged and leaves the analysis
        run.flagged = true;
        ++res.flagged;
        std::vector<Configuration>().swap(history[events[i].run]);
        continue;
      }
      run.records.push_back(std::move(made[i]));
    }
  });
  for (const auto& r : res.runs)
    if (!r.flagged && r.records.size() < nrules) ++res.incomplete;
  res.final_state = std::move(tr.psi);
  res.trajectories = std::move(tr.trajectories);
  return res;
}

struct ScoreCorrelation {
  std::size_t rule_a = 0, rule_b = 0;
  std::string score_a, score_b;
  double value = 0.0;
};

struct IndependenceReport {
  std::vector<TestReport> marginals;
  std::vector<ScoreCorrelation> correlations;
  double max_abs_correlation = 0.0;
  double correlation_threshold = 0.0;
  std::vector<TestReport> joint;
  std::size_t runs = 0;

  [[nodiscard]] bool passed() const {
    if (max_abs_correlation >= correlation_threshold) return false;
    for (const auto& r : marginals)
      if (!r.passed) return false;
    for (const auto& r : joint)
      if (!r.passed) return false;
    return true;
  }
};

/// Independence of the outcomes of distinct rules across complete runs:
/// marginal KS per rule against |prepared|^2, correlations of bounded scores
/// of the PIT values, and a chi-square of the joint PIT histogram against the
/// product law.
inline IndependenceReport independence_report(const PlanResult& res, const ExperimentPlan& plan, double alpha = 0.01,
                                              std::size_t bins = 5) {
  const std::size_t nrules = plan.rules.size();
  require(nrules >= 2, Errc::insufficient_runs, "independence needs at least two rules");
  std::vector<std::size_t> use;
  for (std::size_t m = 0; m < res.runs.size(); ++m)
    if (res.runs[m].complete(nrules)) use.push_back(m);
  require(use.size() >= 500, Errc::insufficient_runs,
          "independence needs >= 500 complete runs, have " + std::to_string(use.size()));

  IndependenceReport rep;
  rep.runs = use.size();
  std::vector<std::vector<double>> pit(nrules);
  for (std::size_t r = 0; r < nrules; ++r) {
    const Density rho = density(plan.rules[r].prepared);
    const detail::CellCdf cdf = detail::first_axis_cdf(rho);
    SampleSet xs;
    for (auto m : use) {
      const auto& rec = res.runs[m].records[r];
      xs.points.push_back(rec.x);
      pit[r].push_back(cdf(rec.x[0]));
    }
    TestReport t = run_test(xs, rho, TestSpec::ks(alpha));
    t.name = "marginal_" + plan.rules[r].label;
    rep.marginals.push_back(std::move(t));
  }

  using Score = std::pair<std::string, double (*)(double)>;
  const Score scores[] = {
      {"pit", [](double u) { return u; }},
      {"upper_half", [](double u) { return u > 0.5 ? 1.0 : 0.0; }},
      {"cos", [](double u) { return std::cos(2.0 * 3.14159265358979323846 * u); }},
  };
  rep.correlation_threshold = 4.0 / std::sqrt(static_cast<double>(use.size()));
  for (std::size_t a = 0; a < nrules; ++a) {
    for (std::size_t b = a + 1; b < nrules; ++b) {
      for (const auto& sa : scores) {
        for (const auto& sb : scores) {
          std::vector<double> va, vb;
          for (std::size_t i = 0; i < use.size(); ++i) {
            va.push_back(sa.second(pit[a][i]));
            vb.push_back(sb.second(pit[b][i]));
          }
          const double c = stats::correlation(va, vb);
          rep.correlations.push_back({a, b, sa.first, sb.first, c});
          rep.max_abs_correlation = std::max(rep.max_abs_correlation, std::abs(c));
        }
      }
      std::vector<double> counts(bins * bins, 0.0);
      for (std::size_t i = 0; i < use.size(); ++i) {
        const auto ia = std::min(bins - 1, static_cast<std::size_t>(pit[a][i] * static_cast<double>(bins)));
        const auto ib = std::min(bins - 1, static_cast<std::size_t>(pit[b][i] * static_cast<double>(bins)));
        counts[ia * bins + ib] += 1.0;
      }
      const double expected = static_cast<double>(use.size()) / static_cast<double>(bins * bins);
      double chi2 = 0.0;
      for (double c : counts) chi2 += (c - expected) * (c - expected) / expected;
      TestReport t;
      t.name = "joint_" + plan.rules[a].label + "_" + plan.rules[b].label;
      t.statistic = chi2;
      t.threshold = stats::chi2_quantile(1.0 - alpha, static_cast<double>(bins * bins - 1));
      t.passed = chi2 <= t.threshold;
      t.delta = alpha;
      t.sample_size = use.size();
      rep.joint.push_back(std::move(t));
    }
  }
  return rep;
}

/// X at trigger against |prepared|^2 within trigger-time bins of equal count.
inline std::vector<TestReport> random_system_check(const PlanResult& res, const ExperimentPlan& plan,
                                                   std::size_t rule, std::size_t time_bins = 4, double alpha = 0.01,
                                                   std::size_t min_count = 50) {
  require(rule < plan.rules.size(), Errc::invalid_argument, "rule index out of range");
  std::vector<const OutcomeRecord*> recs;
  for (const auto& run : res.runs) {
    if (run.flagged) continue;
    for (const auto& r : run.records)
      if (r.rule_index == rule) recs.push_back(&r);
  }
  std::stable_sort(recs.begin(), recs.end(),
                   [](const OutcomeRecord* a, const OutcomeRecord* b) { return a->trigger_time < b->trigger_time; });
  std::vector<TestReport> out;
  const Density rho = density(plan.rules[rule].prepared);
  const std::size_t nb = std::max<std::size_t>(1, time_bins);
  std::size_t lo = 0;
  for (std::size_t b = 0; b < nb && lo < recs.size(); ++b) {
    std::size_t hi = (b + 1) * recs.size() / nb;
    // keep equal trigger times in one bin
    while (hi < recs.size() && hi > 0 && recs[hi]->trigger_time == recs[hi - 1]->trigger_time) ++hi;
    if (hi - lo >= min_count) {
      SampleSet xs;
      for (std::size_t i = lo; i < hi; ++i) xs.points.push_back(recs[i]->x);
      TestReport t = run_test(xs, rho, TestSpec::ks(alpha));
      t.name = plan.rules[rule].label + "_time_bin_" + std::to_string(b);
      out.push_back(std::move(t));
    }
    lo = hi;
  }
  return out;
}

struct Relativized {
  PlanResult result;
  double effective_sample_size = 0.0;
  double kept_fraction = 0.0;
};

/// Conditions on an environment event fixed before any trigger (here: a
/// predicate on the initial environment) by dropping the runs outside it.
inline Relativized relativize(const PlanResult& res, const std::function<bool(const Configuration& env0)>& event) {
  Relativized out;
  out.result = res;
  out.result.runs.clear();
  out.result.initial_env.clear();
  out.result.probes.clear();
  out.result.flagged = out.result.incomplete = 0;
  for (std::size_t m = 0; m < res.runs.size(); ++m) {
    if (!event(res.initial_env[m])) continue;
    out.result.runs.push_back(res.runs[m]);
    out.result.initial_env.push_back(res.initial_env[m]);
    if (res.runs[m].flagged) ++out.result.flagged;
    else if (res.runs[m].records.size() < res.rules) ++out.result.incomplete;
  }
  // 0/1 weights: (sum w)^2 / sum w^2 is the kept count
  out.effective_sample_size = static_cast<double>(out.result.runs.size());
  out.kept_fraction = res.runs.empty() ? 0.0 : out.effective_sample_size / static_cast<double>(res.runs.size());
  return out;
}

/// The selection the rules forbid: keep the runs whose conditional wave
/// function of `system_axes` at a later probe satisfies `keep`. The kept
/// outcomes are no longer |psi|^2-distributed.
inline PlanResult filter_by_later_wavefunction(const PlanResult& res, std::size_t probe,
                                               const std::vector<std::size_t>& system_axes,
                                               const std::function<bool(const WaveFunction&)>& keep) {
  require(probe < res.probes.size(), Errc::invalid_argument, "probe index out of range");
  const Probe& p = res.probes[probe];
  const detail::Slicer sl(p.psi.grid(), SubsystemSplit::of(p.psi.grid().dims(), system_axes));
  const double total = p.psi.norm2();
  PlanResult out = res;
  out.runs.clear();
  out.initial_env.clear();
  out.probes.clear();
  out.flagged = out.incomplete = 0;
  for (std::size_t m = 0; m < res.runs.size(); ++m) {
    const auto cond = sl.conditional(p.psi, total, p.configs[m].select(sl.split().y_axes));
    if (!cond || !keep(*cond)) continue;
    out.runs.push_back(res.runs[m]);
    out.initial_env.push_back(res.initial_env[m]);
    if (res.runs[m].flagged) ++out.flagged;
    else if (res.runs[m].records.size() < res.rules) ++out.incomplete;
  }
  return out;
}

struct TriggerAudit {
  double correlation = 0.0;  // early outcome vs later rule firing
  double threshold = 0.0;
  std::size_t runs = 0;
};

/// Footnote audit: does whether a later rule fires depend on an earlier outcome?
inline TriggerAudit trigger_audit(const PlanResult& res, std::size_t early, std::size_t later) {
  std::vector<double> z, fired;
  for (const auto& run : res.runs) {
    if (run.flagged) continue;
    const OutcomeRecord* e = nullptr;
    bool l = false;
    for (const auto& r : run.records) {
      if (r.rule_index == early) e = &r;
      if (r.rule_index == later) l = true;
    }
    if (!e) continue;
    z.push_back(e->z);
    fired.push_back(l ? 1.0 : 0.0);
  }
  TriggerAudit a;
  a.runs = z.size();
  if (!z.empty()) {
    a.correlation = stats::correlation(z, fired);
    a.threshold = 4.0 / std::sqrt(static_cast<double>(z.size()));
  }
  return a;
}

// ---- selection invariance ----

/// A selector sees only environment coordinates.
using YSelector = std::function<bool(std::span<const double> y)>;

struct NamedSelector {
  std::string name;
  YSelector keep;
};

inline std::vector<std::string> selector_names() {
  return {"all", "hash50", "y_positive", "y_band", "y_alternating", "y_radius"};
}

/// Registry selectors. Optional parameters: y_positive {threshold},
/// y_band {lo, hi}, y_alternating {width}, y_radius {r}.
inline NamedSelector make_selector(std::string_view name, std::vector<double> p = {}) {
  const auto param = [&](std::size_t i, double d) { return i < p.size() ? p[i] : d; };
  const std::string n(name);
  if (name == "all") return {n, [](std::span<const double>) { return true; }};
  if (name == "hash50")
    return {n, [](std::span<const double> y) {
              std::uint64_t h = 0x9e3779b97f4a7c15ULL;
              for (double v : y) h = stats::mix64(h ^ std::bit_cast<std::uint64_t>(v));
              return (h >> 63) == 0;
            }};
  if (name == "y_positive") {
    const double c = param(0, 0.0);
    return {n, [c](std::span<const double> y) { return y[0] > c; }};
  }
  if (name == "y_band") {
    const double lo = param(0, -1.0), hi = param(1, 1.0);
    return {n, [lo, hi](std::span<const double> y) { return y[0] >= lo && y[0] < hi; }};
  }
  if (name == "y_alternating") {
    const double w = param(0, 0.5);
    require(w > 0.0, Errc::invalid_argument, "y_alternating width must be > 0");
    return {n, [w](std::span<const double> y) { return static_cast<std::int64_t>(std::floor(y[0] / w)) % 2 == 0; }};
  }
  if (name == "y_radius") {
    const double r = param(0, 1.0);
    return {n, [r](std::span<const double> y) {
              double s = 0.0;
              for (double v : y) s += v * v;
              return s < r * r;
            }};
  }
  throw Error(Errc::invalid_argument, "unknown selector '" + n + "'");
}

namespace detail {

/// PIT of each kept member's system coordinate under its own conditional wave
/// function, then KS against uniform. With a product state this is the plain
/// KS test against |psi|^2.
inline TestReport selected_pit_test(const WaveFunction& psi, const SubsystemSplit& split,
                                    std::span<const Configuration> configs, const std::vector<std::uint8_t>& keep,
                                    double alpha, const std::string& name, unsigned threads = 1) {
  std::size_t kept = static_cast<std::size_t>(std::count(keep.begin(), keep.end(), std::uint8_t{1}));
  require(kept > 0, Errc::empty_selection, "selector '" + name + "' kept no members");
  const Slicer sl(psi.grid(), split);
  const double total = psi.norm2();
  std::vector<double> u(configs.size(), -1.0);
  parallel_for(configs.size(), threads, [&](std::size_t i) {
    if (!keep[i]) return;
    const auto cond = sl.conditional(psi, total, configs[i].select(split.y_axes));
    if (!cond) return;
    u[i] = first_axis_cdf(density(*cond))(configs[i][split.x_axes[0]]);
  });
  std::vector<double> pit;
  for (double v : u)
    if (v >= 0.0) pit.push_back(v);
  require(!pit.empty(), Errc::empty_selection, "selector '" + name + "' kept no member with a defined wave function");
  return uniform_ks(std::move(pit), alpha, "selection_" + name);
}

}  // namespace detail

/// Equal-time selection test: members chosen by their environment coordinates
/// only, system coordinate tested against the conditional wave function.
inline TestReport selection_invariance_test(const WaveFunction& psi, const SubsystemSplit& split,
                                            std::span<const Configuration> configs, const NamedSelector& sel,
                                            double alpha = 0.01, unsigned threads = 1) {
  split.validate(psi.grid().dims());
  std::vector<std::uint8_t> keep(configs.size(), 0);
  for (std::size_t i = 0; i < configs.size(); ++i) {
    const Configuration y = configs[i].select(split.y_axes);
    keep[i] = sel.keep(y.coords()) ? 1 : 0;
  }
  return detail::selected_pit_test(psi, split, configs, keep, alpha, sel.name, threads);
}

/// Record-based selection test for one rule, environment taken at the trigger.
inline TestReport selection_invariance_test(const PlanResult& res, const ExperimentPlan& plan, std::size_t rule,
                                            const NamedSelector& sel, double alpha = 0.01) {
  require(rule < plan.rules.size(), Errc::invalid_argument, "rule index out of range");
  SampleSet xs;
  for (const auto& run : res.runs) {
    if (run.flagged) continue;
    for (const auto& r : run.records)
      if (r.rule_index == rule && sel.keep(r.env.coords())) xs.points.push_back(r.x);
  }
  require(!xs.points.empty(), Errc::empty_selection, "selector '" + sel.name + "' kept no records");
  TestReport t = run_test(xs, density(plan.rules[rule].prepared), TestSpec::ks(alpha));
  t.name = "selection_" + sel.name;
  return t;
}

// ---- the sequential two-experiment universe ----

/// Axes: two systems in box ground states, then two registers. The second
/// register starts as a moving packet and serves as the first rule's clock;
/// the second rule waits on the first register's record.
struct SequentialPlanGeometry {
  std::size_t system_points = 12;
  double system_half_width = 4.0;
  std::size_t register_points = 48;
  double register_half_width = 8.0;
  double register_width = 0.7;
  double clock_start = -4.0;
  double clock_momentum = 2.5;
  double coupling = 2.0;
  double dt = 0.01;
  double first_threshold = -2.5;  // clock position that fires rule 1
  double first_deadline = 1.0;
  double record_duration = 0.5;
  double second_threshold = -0.3;  // record position that fires rule 2
  double second_deadline = 2.0;
  bool record_outcomes = true;  // false: the unrecorded re-examination control
};

struct SequentialPlan {
  Universe universe;
  ExperimentPlan plan;
};

inline WaveFunction box_ground_state(const AxisSpec& a) {
  const double len = a.max - a.min;
  return normalize(WaveFunction::from_function(Grid({a}), [&](const Configuration& q) {
    return Complex(std::sin(3.14159265358979323846 * (q[0] - a.min) / len), 0.0);
  }));
}

inline SequentialPlan sequential_plan(const SequentialPlanGeometry& geo = {}) {
  const AxisSpec sys{geo.system_points, -geo.system_half_width, geo.system_half_width, Boundary::box};
  const AxisSpec reg{geo.register_points, -geo.register_half_width, geo.register_half_width, Boundary::box};
  const Grid g({sys, sys, reg, reg});
  const WaveFunction ground = box_ground_state(sys);
  const double w = geo.register_width;
  const WaveFunction record = normalize(WaveFunction::from_function(Grid({reg}), [&](const Configuration& q) {
    return Complex(std::exp(-q[0] * q[0] / (4.0 * w * w)), 0.0);
  }));
  const WaveFunction clock = normalize(WaveFunction::from_function(Grid({reg}), [&](const Configuration& q) {
    const double d = q[0] - geo.clock_start;
    return std::exp(-d * d / (4.0 * w * w)) * std::polar(1.0, geo.clock_momentum * q[0]);
  }));

  SequentialPlan out;
  out.universe.psi0 = product_compose(std::vector<WaveFunction>{ground, ground, record, clock});
  out.universe.h = Hamiltonian::free(g, {1.0, 1.0, 1.0, 1.0});
  out.universe.cfg = PropagatorConfig{Method::crank_nicolson, geo.dt, 1};
  out.universe.t_final = geo.second_deadline + geo.record_duration;

  auto& plan = out.plan;
  plan.environment_axes = {2, 3};
  RandomSystemRule first;
  first.label = "first";
  const double th1 = geo.first_threshold;
  first.trigger = [th1](const TriggerView& v) { return v.now()[1] >= th1; };
  first.deadline = geo.first_deadline;
  first.target = [](const Configuration&) { return std::vector<std::size_t>{0}; };
  first.prepared = ground;
  first.outcome = [](const Configuration& x) { return x[0]; };
  RandomSystemRule second;
  second.label = "second";
  const double th2 = geo.second_threshold, after = geo.first_deadline + geo.record_duration;
  second.trigger = [th2, after](const TriggerView& v) { return v.time >= after && v.now()[0] <= th2; };
  second.deadline = geo.second_deadline;
  second.prepared = ground;
  second.outcome = [](const Configuration& x) { return x[0]; };
  if (geo.record_outcomes) {
    first.record = RecordCoupling{2, geo.coupling, geo.first_deadline, geo.first_deadline + geo.record_duration,
                                  [](const Configuration& q) { return q[0]; }};
    second.target = [](const Configuration&) { return std::vector<std::size_t>{1}; };
    second.record = RecordCoupling{3, geo.coupling, geo.second_deadline, geo.second_deadline + geo.record_duration,
                                   [](const Configuration& q) { return q[1]; }};
  } else {
    // the same system looked at again, nothing written down in between
    second.target = [](const Configuration&) { return std::vector<std::size_t>{0}; };
    second.trigger = [after](const TriggerView& v) { return v.time >= after; };
    out.universe.t_final = geo.second_deadline;
  }
  plan.rules = {std::move(first), std::move(second)};
  return out;
}

}  // namespace bohm
