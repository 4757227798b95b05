#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <string>
#include <vector>

#include "bohm/equilibrium.hpp"
#include "bohm/error.hpp"
#include "bohm/grid.hpp"
#include "bohm/guidance.hpp"
#include "bohm/propagator.hpp"
#include "bohm/subsystem.hpp"
#include "bohm/wavefunction.hpp"

namespace bohm {

/// Von Neumann pointer coupled to a system observable A(x) through
/// V_int(x, y, t) = lambda A(x) y for t in [t_on, t_off). The pointer picks up
/// momentum -lambda A (t_off - t_on), which the settling flight turns into a
/// displacement. The composite grid holds the system axes first and the pointer
/// on the last axis.
struct PointerModel {
  std::vector<std::size_t> system_axes;
  std::size_t pointer_axis = 0;
  double coupling = 1.0;
  double t_on = 0.0;
  double t_off = 1.0;
  double settle = 1.0;  // free flight after t_off before the reading is taken
  std::function<double(const Configuration&)> measured;  // A on system coordinates
  WaveFunction pointer_init;

  [[nodiscard]] double readout_time() const { return t_off + settle; }

  void validate(const Grid& composite) const {
    require(t_off > t_on, Errc::invalid_argument, "coupling window must have t_off > t_on");
    require(settle >= 0.0, Errc::invalid_argument, "settling time must be >= 0");
    require(static_cast<bool>(measured), Errc::invalid_argument, "measured function missing");
    require(pointer_init.grid().dims() == 1, Errc::invalid_argument, "pointer must be one axis");
    require(pointer_axis + 1 == composite.dims() && system_axes.size() == pointer_axis, Errc::invalid_argument,
            "composite must hold the system axes followed by the pointer axis");
    for (std::size_t k = 0; k < system_axes.size(); ++k)
      require(system_axes[k] == k, Errc::invalid_argument, "system axes must be 0..n-1");
    require(composite.axis(pointer_axis) == pointer_init.grid().axis(0), Errc::grid_mismatch,
            "pointer axis differs from the pointer wave function grid");
  }

  [[nodiscard]] SubsystemSplit split(std::size_t dims) const { return SubsystemSplit::of(dims, system_axes); }
};

/// psi_sys (x) phi_0 on the composite grid.
inline WaveFunction measurement_state(const WaveFunction& psi_sys, const PointerModel& model) {
  const WaveFunction out = product_compose(std::vector<WaveFunction>{psi_sys, model.pointer_init});
  model.validate(out.grid());
  return out;
}

/// H_free plus the windowed coupling as a time-dependent term.
inline Hamiltonian coupled_hamiltonian(const Grid& composite, const Hamiltonian& h_free, const PointerModel& model) {
  model.validate(composite);
  auto field = std::make_shared<std::vector<double>>(composite.size());
  const std::size_t nsys = model.system_axes.size();
  for (std::size_t i = 0; i < composite.size(); ++i) {
    const Configuration q = composite.node(i);
    Configuration x(nsys);
    for (std::size_t k = 0; k < nsys; ++k) x[k] = q[k];
    (*field)[i] = model.coupling * model.measured(x) * q[model.pointer_axis];
  }
  Hamiltonian h = h_free;
  const double on = model.t_on, off = model.t_off;
  PotentialCallback prior = h_free.time_dependent;
  h.time_dependent = [field, on, off, prior](double t, const Grid& g, std::span<double> v) {
    if (prior) prior(t, g, v);
    if (t < on || t >= off) return;
    for (std::size_t i = 0; i < v.size(); ++i) v[i] += (*field)[i];
  };
  return h;
}

struct MeasurementRecord {
  std::size_t member = 0;
  int branch_id = -1;  // -1 when the pointer sits outside every branch support
  double pointer_reading = 0.0;
  Configuration system_config;
  std::vector<double> weights;  // all branch weights, shared by every record
};

struct BranchSummary {
  int id = 0;
  double weight = 0.0;     // |Psi|^2 mass of the branch
  std::size_t count = 0;   // members reading this branch
  double frequency = 0.0;  // count / M
  double support_gap = 0.0;
  WaveFunction psi;        // effective wave function of the system in this branch
};

struct MeasurementResult {
  WaveFunction final_state;
  EnsembleState ensemble;
  std::vector<MeasurementRecord> records;
  std::vector<BranchSummary> branches;
  std::size_t unassigned = 0;
  /// Largest change of a branch frequency between the readout at t_off + settle
  /// and an earlier readout at t_off + settle/2; NaN when the branches were not
  /// yet separated then.
  double margin_sensitivity = std::numeric_limits<double>::quiet_NaN();
  std::vector<Trajectory> trajectories;
};

struct MeasurementOptions {
  EffectiveThresholds thresholds;
  unsigned threads = 1;
  std::vector<std::size_t> record;  // members whose trajectories are kept
};

namespace detail {

/// Branch index of every member by the pointer-support component it sits in.
inline std::vector<int> assign_branches(const std::vector<SupportComponent>& comps, const Grid& ygrid,
                                        const EnsembleState& e, std::size_t pointer_axis) {
  std::vector<int> owner(ygrid.size(), -1);
  for (std::size_t c = 0; c < comps.size(); ++c)
    for (auto cell : comps[c].cells) owner[cell] = static_cast<int>(c);
  std::vector<int> out(e.size(), -1);
  for (std::size_t i = 0; i < e.size(); ++i) {
    const auto cell = ygrid.cell_of(Configuration{e.configs[i][pointer_axis]});
    if (cell >= 0) out[i] = owner[static_cast<std::size_t>(cell)];
  }
  return out;
}

inline std::vector<double> frequencies(const std::vector<int>& branch, std::size_t n_branches) {
  std::vector<double> f(n_branches, 0.0);
  for (int b : branch)
    if (b >= 0) f[static_cast<std::size_t>(b)] += 1.0;
  for (auto& x : f) x /= static_cast<double>(branch.size());
  return f;
}

}  // namespace detail

/// Evolves the composite through the coupling window and the settling flight,
/// then reads every member's pointer and attaches it to the branch whose pointer
/// support contains it. Each branch must carry an effective wave function for
/// the system; otherwise the pointer packets overlap and BranchOverlap is thrown.
inline MeasurementResult run_measurement(const WaveFunction& psi0, const PointerModel& model, const Hamiltonian& h_free,
                                         const PropagatorConfig& cfg, const EnsembleState& ensemble,
                                         const MeasurementOptions& opt = {}) {
  const Grid& g = psi0.grid();
  model.validate(g);
  const SubsystemSplit split = model.split(g.dims());
  const Propagator prop(g, coupled_hamiltonian(g, h_free, model), cfg);

  const double t_mid = model.t_off + 0.5 * model.settle;
  std::vector<double> early;
  std::size_t early_components = 0;
  TransportOptions topt;
  topt.threads = opt.threads;
  topt.record = opt.record;
  bool early_done = model.settle <= 0.0;
  TransportResult tr = transport(psi0, ensemble, prop, model.readout_time(), topt,
                                 [&](const WaveFunction& snap, const EnsembleState& e) {
                                   if (early_done || snap.time() < t_mid - 1e-9 * std::max(1.0, t_mid)) return;
                                   early_done = true;
                                   const Density ym = environment_marginal(snap, split);
                                   const auto comps = support_components(ym, opt.thresholds.support_eps);
                                   early_components = comps.size();
                                   early = detail::frequencies(
                                       detail::assign_branches(comps, ym.grid(), e, model.pointer_axis), comps.size());
                                 });

  MeasurementResult res;
  const Density ym = environment_marginal(tr.psi, split);
  const auto comps = support_components(ym, opt.thresholds.support_eps);
  const auto branch = detail::assign_branches(comps, ym.grid(), tr.ensemble, model.pointer_axis);

  std::vector<double> weights;
  for (std::size_t c = 0; c < comps.size(); ++c) {
    // representative Y: the mass median of the component
    double total = 0.0, acc = 0.0;
    for (auto cell : comps[c].cells) total += ym[cell];
    std::size_t rep_cell = comps[c].cells.front();
    for (auto cell : comps[c].cells) {
      acc += ym[cell];
      rep_cell = cell;
      if (acc >= 0.5 * total) break;
    }
    const auto det = detect_effective_wavefunction(tr.psi, split, ym.grid().node(rep_cell), opt.thresholds);
    require(det.status == EffectiveWfReport::Status::effective, Errc::branch_overlap,
            "pointer branch " + std::to_string(c) + " does not carry an effective wave function (min fidelity " +
                std::to_string(det.min_fidelity) + ")");
    BranchSummary b;
    b.id = static_cast<int>(c);
    b.weight = comps[c].weight;
    b.support_gap = comps[c].gap;
    b.psi = *det.psi;
    res.branches.push_back(std::move(b));
    weights.push_back(comps[c].weight);
  }
  const auto freq = detail::frequencies(branch, comps.size());
  for (std::size_t c = 0; c < comps.size(); ++c) {
    res.branches[c].frequency = freq[c];
    res.branches[c].count = static_cast<std::size_t>(
        std::count(branch.begin(), branch.end(), static_cast<int>(c)));
  }
  if (early_components == comps.size() && !early.empty()) {
    res.margin_sensitivity = 0.0;
    for (std::size_t c = 0; c < comps.size(); ++c)
      res.margin_sensitivity = std::max(res.margin_sensitivity, std::abs(early[c] - freq[c]));
  }

  const std::size_t nsys = model.system_axes.size();
  res.records.reserve(tr.ensemble.size());
  for (std::size_t i = 0; i < tr.ensemble.size(); ++i) {
    MeasurementRecord r;
    r.member = i;
    r.branch_id = branch[i];
    r.pointer_reading = tr.ensemble.configs[i][model.pointer_axis];
    r.system_config = tr.ensemble.configs[i].select(std::span<const std::size_t>(model.system_axes.data(), nsys));
    r.weights = weights;
    if (branch[i] < 0) ++res.unassigned;
    res.records.push_back(std::move(r));
  }
  res.final_state = std::move(tr.psi);
  res.ensemble = std::move(tr.ensemble);
  res.trajectories = std::move(tr.trajectories);
  return res;
}

/// System configurations of the members that read branch `id`.
inline SampleSet branch_samples(const MeasurementResult& res, int id) {
  SampleSet s;
  s.time = res.ensemble.time;
  for (const auto& r : res.records)
    if (r.branch_id == id && (res.ensemble.capped.empty() || !res.ensemble.capped[r.member]))
      s.points.push_back(r.system_config);
  s.provenance = "branch " + std::to_string(id) + " system coordinates";
  return s;
}

/// The effective wave function at Y, for independent evolution of the system.
/// Valid while the branch supports stay disjoint.
inline WaveFunction collapse_and_continue(const WaveFunction& psi, const SubsystemSplit& split, const Configuration& y,
                                          const EffectiveThresholds& th = {}) {
  const auto rep = detect_effective_wavefunction(psi, split, y, th);
  require(rep.status == EffectiveWfReport::Status::effective, Errc::not_effective,
          "no effective wave function at this environment configuration");
  return *rep.psi;
}

/// Two packets with a common forward momentum, displaced transversely.
/// Axis 0 is transverse (x), axis 1 forward (z); the grid is periodic.
struct TwoSlitGeometry {
  AxisSpec transverse{256, -32.0, 32.0, Boundary::periodic};
  AxisSpec forward{64, -16.0, 16.0, Boundary::periodic};
  double slit_offset = 2.0;  // packets at x = +-slit_offset
  double slit_width = 0.5;   // transverse packet width
  double forward_width = 1.0;
  double forward_momentum = 2.0;
  double mass = 1.0;
  double hbar = 1.0;
  double screen_time = 4.0;
  double dt = 0.01;
  std::size_t recorded = 200;  // trajectories kept, evenly spaced member indices
};

struct TwoSlitResult {
  WaveFunction screen_state;
  Density expected;   // transverse marginal of |psi|^2 at the screen
  Density histogram;  // empirical transverse distribution on the same bins
  std::vector<double> counts;
  TestReport report;
  std::vector<Trajectory> trajectories;
  std::vector<int> started_above;  // per recorded trajectory
  std::size_t crossings = 0;       // recorded trajectories whose side of x = 0 changed
  EnsembleState ensemble;
};

inline WaveFunction two_slit_initial(const TwoSlitGeometry& geo) {
  const Grid g({geo.transverse, geo.forward});
  auto packet = [&](double x, double c) {
    return std::exp(-(x - c) * (x - c) / (4.0 * geo.slit_width * geo.slit_width));
  };
  return normalize(WaveFunction::from_function(g, [&](const Configuration& q) {
    const double fwd = std::exp(-q[1] * q[1] / (4.0 * geo.forward_width * geo.forward_width));
    return Complex(packet(q[0], geo.slit_offset) + packet(q[0], -geo.slit_offset), 0.0) * fwd *
           std::polar(1.0, geo.forward_momentum * q[1]);
  }));
}

inline TwoSlitResult two_slit_scenario(const TwoSlitGeometry& geo, std::size_t count, std::uint64_t seed,
                                       unsigned threads = 1, double alpha = 0.01) {
  const WaveFunction psi0 = two_slit_initial(geo);
  const Grid& g = psi0.grid();
  const Propagator prop(g, Hamiltonian::free(g, {geo.mass, geo.mass}, geo.hbar), {Method::split_fourier, geo.dt, 1});
  SampleSet s0 = sample(density(psi0), count, seed);
  TransportOptions opt;
  opt.threads = threads;
  const std::size_t nrec = std::min(geo.recorded, count);
  for (std::size_t r = 0; r < nrec; ++r) opt.record.push_back(r * count / nrec);
  TransportResult tr = transport(psi0, make_ensemble(s0, seed), prop, geo.screen_time, opt);

  TwoSlitResult res;
  const std::size_t transverse[] = {0};
  res.expected = marginal(density(tr.psi), transverse);
  const SampleSet screen = project(uncapped_samples(tr.ensemble), transverse);
  res.histogram = empirical_distribution(screen, res.expected.grid());
  res.counts.assign(res.expected.size(), 0.0);
  for (const auto& q : screen.points) res.counts[static_cast<std::size_t>(res.expected.grid().cell_of(q))] += 1.0;
  res.report = run_test(screen, res.expected, TestSpec::ks(alpha));
  res.report.name = "screen_ks";
  for (const auto& t : tr.trajectories) {
    const bool above = t.points.front()[0] > 0.0;
    res.started_above.push_back(above ? 1 : 0);
    bool crossed = false;
    for (const auto& p : t.points) crossed = crossed || ((p[0] > 0.0) != above);
    res.crossings += crossed ? 1 : 0;
  }
  res.trajectories = std::move(tr.trajectories);
  res.screen_state = std::move(tr.psi);
  res.ensemble = std::move(tr.ensemble);
  return res;
}

/// Two-branch position-sign measurement: packets at +-separation on the system
/// axis with amplitudes c_plus (x > 0) and c_minus, a sign-like observable
/// A(x) = tanh(x / sharpness) and a Gaussian pointer at rest.
struct PointerGeometry {
  AxisSpec system{128, -10.0, 10.0, Boundary::periodic};
  AxisSpec pointer{256, -32.0, 32.0, Boundary::periodic};
  double c_plus = 0.8;
  double c_minus = 0.6;
  double separation = 3.0;
  double packet_width = 0.4;
  double pointer_width = 1.0;
  double sharpness = 0.05;
  double coupling = 6.0;
  double t_on = 0.0;
  double t_off = 1.0;
  double settle = 1.5;
  double system_mass = 10.0;
  double pointer_mass = 1.0;
  double hbar = 1.0;
  double dt = 0.01;
};

struct PointerSetup {
  WaveFunction psi0;
  PointerModel model;
  Hamiltonian h_free;
  PropagatorConfig cfg;
  WaveFunction plus, minus;  // the two normalized system packets
  double weight_plus = 0.0;  // |c_plus psi_plus|^2 over the normalized superposition
};

inline PointerSetup pointer_setup(const PointerGeometry& geo) {
  const Grid sys({geo.system});
  auto packet = [&](const Grid& g, double s, double c) {
    return normalize(WaveFunction::from_function(g, [&](const Configuration& q) {
      return std::exp(-(q[0] - c) * (q[0] - c) / (4.0 * s * s));
    }));
  };
  PointerSetup out;
  out.plus = packet(sys, geo.packet_width, geo.separation);
  out.minus = packet(sys, geo.packet_width, -geo.separation);
  std::vector<Complex> a(sys.size());
  for (std::size_t i = 0; i < a.size(); ++i) a[i] = geo.c_plus * out.plus[i] + geo.c_minus * out.minus[i];
  const WaveFunction raw(sys, std::move(a));
  out.weight_plus = geo.c_plus * geo.c_plus / raw.norm2();
  out.model.system_axes = {0};
  out.model.pointer_axis = 1;
  out.model.coupling = geo.coupling;
  out.model.t_on = geo.t_on;
  out.model.t_off = geo.t_off;
  out.model.settle = geo.settle;
  const double sharp = geo.sharpness;
  out.model.measured = [sharp](const Configuration& x) { return std::tanh(x[0] / sharp); };
  out.model.pointer_init = packet(Grid({geo.pointer}), geo.pointer_width, 0.0);
  out.psi0 = measurement_state(normalize(raw), out.model);
  out.h_free = Hamiltonian::free(out.psi0.grid(), {geo.system_mass, geo.pointer_mass}, geo.hbar);
  out.cfg = PropagatorConfig{Method::split_fourier, geo.dt, 1};
  return out;
}

}  // namespace bohm
