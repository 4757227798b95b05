#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "bohm/error.hpp"
#include "bohm/fft.hpp"
#include "bohm/grid.hpp"
#include "bohm/interp.hpp"
#include "bohm/io.hpp"
#include "bohm/parallel.hpp"
#include "bohm/propagator.hpp"
#include "bohm/wavefunction.hpp"

namespace bohm {

/// Treatment of nodes of psi, where Im(grad psi / psi) is singular.
struct Regularization {
  double epsilon_rel = 1e-12;  // cells with |psi|^2 < epsilon_rel * max|psi|^2 are capped
  double vmax = 1e6;           // speed cap applied on capped cells

  /// epsilon = 1e-12 max|psi|^2, vmax = 10 * grid diameter / dt.
  static Regularization defaults(const Grid& grid, double dt) {
    return Regularization{1e-12, 10.0 * grid.diameter() / dt};
  }
};

struct VelocityField {
  Grid grid;
  std::vector<std::vector<double>> components;  // one array per axis
  Regularization reg;
  double epsilon = 0.0;               // absolute density threshold used
  std::vector<std::uint8_t> capped;   // 1 where |psi|^2 < epsilon
  std::size_t capped_count = 0;

  [[nodiscard]] bool is_capped(std::size_t cell) const { return capped[cell] != 0; }
};

/// Real and imaginary parts of d psi / dq_axis, each differentiated as a real
/// function: spectrally on periodic axes (Nyquist bin dropped), by centred
/// differences against zero walls on box axes.
inline std::pair<std::vector<double>, std::vector<double>> gradient_parts(const WaveFunction& psi, std::size_t axis) {
  const Grid& g = psi.grid();
  const AxisSpec& a = g.axis(axis);
  const std::size_t n = g.size();
  std::vector<double> d_re(n), d_im(n);
  if (a.boundary == Boundary::periodic) {
    auto spectral = [&](auto part, std::vector<double>& out) {
      std::vector<Complex> buf(n);
      bool nonzero = false;
      for (std::size_t i = 0; i < n; ++i) {
        buf[i] = Complex(part(psi[i]), 0.0);
        nonzero = nonzero || buf[i].real() != 0.0;
      }
      if (!nonzero) {
        std::fill(out.begin(), out.end(), 0.0);
        return;
      }
      fft::transform_axis(g, axis, buf, fft::Direction::forward);
      const double inv_n = 1.0 / static_cast<double>(a.points);
      for (std::size_t i = 0; i < n; ++i)
        buf[i] *= Complex(0.0, fft::derivative_wavenumber(a, g.index_along(i, axis)) * inv_n);
      fft::transform_axis(g, axis, buf, fft::Direction::backward);
      for (std::size_t i = 0; i < n; ++i) out[i] = buf[i].real();
    };
    spectral([](Complex c) { return c.real(); }, d_re);
    spectral([](Complex c) { return c.imag(); }, d_im);
  } else {
    const std::size_t s = g.stride(axis);
    const double inv = 1.0 / (2.0 * a.spacing());
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t j = g.index_along(i, axis);
      const Complex left = j > 0 ? psi[i - s] : Complex{};
      const Complex right = j + 1 < a.points ? psi[i + s] : Complex{};
      d_re[i] = (right.real() - left.real()) * inv;
      d_im[i] = (right.imag() - left.imag()) * inv;
    }
  }
  return {std::move(d_re), std::move(d_im)};
}

/// J_k = (hbar / m_k) Im(psi* d_k psi).
inline std::vector<std::vector<double>> probability_current(const WaveFunction& psi, const Hamiltonian& h) {
  const Grid& g = psi.grid();
  h.validate(g);
  std::vector<std::vector<double>> j(g.dims(), std::vector<double>(g.size()));
  for (std::size_t k = 0; k < g.dims(); ++k) {
    const auto [d_re, d_im] = gradient_parts(psi, k);
    const double c = h.hbar / h.masses[k];
    for (std::size_t i = 0; i < g.size(); ++i)
      j[k][i] = c * (psi[i].real() * d_im[i] - psi[i].imag() * d_re[i]);
  }
  return j;
}

/// v_k = (hbar / m_k) Im(d_k psi / psi), clamped to |v_k| <= vmax where
/// |psi|^2 falls below epsilon (and set to 0 where psi vanishes exactly).
inline VelocityField velocity_field(const WaveFunction& psi, const Hamiltonian& h, const Regularization& reg) {
  const Grid& g = psi.grid();
  h.validate(g);
  VelocityField vf;
  vf.grid = g;
  vf.reg = reg;
  double peak = 0.0;
  for (const auto& c : psi.amplitudes()) peak = std::max(peak, std::norm(c));
  vf.epsilon = reg.epsilon_rel * peak;
  vf.capped.assign(g.size(), 0);
  for (std::size_t i = 0; i < g.size(); ++i)
    if (std::norm(psi[i]) < vf.epsilon) vf.capped[i] = 1;
  vf.capped_count = static_cast<std::size_t>(std::count(vf.capped.begin(), vf.capped.end(), 1));

  vf.components.assign(g.dims(), std::vector<double>(g.size()));
  for (std::size_t k = 0; k < g.dims(); ++k) {
    const auto [d_re, d_im] = gradient_parts(psi, k);
    const double c = h.hbar / h.masses[k];
    auto& v = vf.components[k];
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double rho = std::norm(psi[i]);
      if (rho == 0.0) {
        v[i] = 0.0;
        continue;
      }
      v[i] = c * (psi[i].real() * d_im[i] - psi[i].imag() * d_re[i]) / rho;
      if (vf.capped[i]) v[i] = std::clamp(v[i], -reg.vmax, reg.vmax);
    }
  }
  return vf;
}

struct Trajectory {
  std::vector<double> times;
  std::vector<Configuration> points;
};

/// Ensemble of configurations transported by the guiding field. `capped` marks
/// members whose integration touched a regularized cell.
struct EnsembleState {
  std::vector<Configuration> configs;
  double time = 0.0;
  std::uint64_t seed = 0;
  std::vector<std::uint8_t> capped;
  std::shared_ptr<const WaveFunction> wavefunction;

  [[nodiscard]] std::size_t size() const { return configs.size(); }
  [[nodiscard]] std::size_t capped_count() const {
    return static_cast<std::size_t>(std::count(capped.begin(), capped.end(), 1));
  }
};

namespace detail {

/// Reflects box coordinates back inside the cell region and wraps periodic ones.
inline void confine(const Grid& g, Configuration& q) {
  for (std::size_t k = 0; k < g.dims(); ++k) {
    const auto& a = g.axis(k);
    if (a.boundary == Boundary::periodic) {
      q[k] = a.wrap(q[k]);
    } else {
      const double lo = a.cell_lo();
      const double hi = a.cell_hi();
      if (q[k] < lo) q[k] = 2.0 * lo - q[k];
      if (q[k] > hi) q[k] = 2.0 * hi - q[k];
      q[k] = std::clamp(q[k], lo, hi);
    }
  }
}

/// v at point q, blending two fields with weight s on `b`; flags capped corners.
inline Configuration blended_velocity(const VelocityField& a, const VelocityField& b, double s,
                                      const Configuration& q, double scale, bool& capped) {
  const Grid& g = a.grid;
  const Stencil st = make_stencil(g, q.coords(), WallMode::hold);
  Configuration v(g.dims());
  for (std::size_t c = 0; c < st.count; ++c) {
    if (st.weights[c] == 0.0) continue;
    const std::size_t cell = st.cells[c];
    if ((s < 1.0 && a.is_capped(cell)) || (s > 0.0 && b.is_capped(cell))) capped = true;
  }
  for (std::size_t k = 0; k < g.dims(); ++k) {
    const double va = s < 1.0 ? apply<double>(st, a.components[k]) : 0.0;
    const double vb = s > 0.0 ? apply<double>(st, b.components[k]) : 0.0;
    v[k] = scale * ((1.0 - s) * va + s * vb);
  }
  return v;
}

inline Configuration axpy(const Configuration& q, double h, const Configuration& v) {
  Configuration out = q;
  for (std::size_t k = 0; k < q.size(); ++k) out[k] += h * v[k];
  return out;
}

}  // namespace detail

/// One RK4 step of a single configuration between fields at t and t + dt.
inline Configuration rk4_step(const VelocityField& va, const VelocityField& vb, const Configuration& q, double dt,
                              double scale, bool& capped) {
  using detail::axpy;
  using detail::blended_velocity;
  const Configuration k1 = blended_velocity(va, vb, 0.0, q, scale, capped);
  const Configuration k2 = blended_velocity(va, vb, 0.5, axpy(q, 0.5 * dt, k1), scale, capped);
  const Configuration k3 = blended_velocity(va, vb, 0.5, axpy(q, 0.5 * dt, k2), scale, capped);
  const Configuration k4 = blended_velocity(va, vb, 1.0, axpy(q, dt, k3), scale, capped);
  Configuration out = q;
  for (std::size_t k = 0; k < q.size(); ++k) out[k] += dt / 6.0 * (k1[k] + 2.0 * k2[k] + 2.0 * k3[k] + k4[k]);
  detail::confine(va.grid, out);
  return out;
}

/// Transports an ensemble across one interval given the fields at both ends.
inline void advance_ensemble_in_place(EnsembleState& e, const VelocityField& va, const VelocityField& vb, double dt,
                                      double scale = 1.0, unsigned threads = 1) {
  if (e.capped.size() != e.configs.size()) e.capped.assign(e.configs.size(), 0);
  parallel_for(e.configs.size(), threads, [&](std::size_t i) {
    bool capped = false;
    e.configs[i] = rk4_step(va, vb, e.configs[i], dt, scale, capped);
    if (capped) e.capped[i] = 1;
  });
  e.time += dt;
}

/// One RK4 step of every member between psi_a (at e.time) and psi_b.
inline EnsembleState advance_ensemble(const EnsembleState& e, const WaveFunction& psi_a, const WaveFunction& psi_b,
                                      const Hamiltonian& h, const Regularization& reg, unsigned threads = 1,
                                      double scale = 1.0) {
  const double dt = psi_b.time() - psi_a.time();
  require(dt > 0.0, Errc::snapshot_gap, "wave function pair must be increasing in time");
  require(std::abs(e.time - psi_a.time()) <= 1e-9 * std::max(1.0, std::abs(dt)), Errc::snapshot_gap,
          "ensemble time does not match the first wave function");
  EnsembleState out = e;
  advance_ensemble_in_place(out, velocity_field(psi_a, h, reg), velocity_field(psi_b, h, reg), dt, scale, threads);
  out.time = psi_b.time();
  out.wavefunction = std::make_shared<const WaveFunction>(psi_b);
  return out;
}

/// Streams wave-function snapshots into ensemble motion, keeping only the most
/// recent velocity field.
class EnsembleIntegrator {
 public:
  EnsembleIntegrator(Hamiltonian h, Regularization reg, double velocity_scale = 1.0, unsigned threads = 1)
      : h_(std::move(h)), reg_(reg), scale_(velocity_scale), threads_(threads) {}

  void start(const WaveFunction& psi, EnsembleState& e) {
    require(std::abs(e.time - psi.time()) <= 1e-9 * std::max(1.0, std::abs(psi.time())), Errc::snapshot_gap,
            "ensemble does not start at the first snapshot time");
    prev_ = velocity_field(psi, h_, reg_);
    t_prev_ = psi.time();
    e.time = psi.time();
    if (e.capped.size() != e.configs.size()) e.capped.assign(e.configs.size(), 0);
  }

  void advance(const WaveFunction& psi, EnsembleState& e) {
    VelocityField next = velocity_field(psi, h_, reg_);
    const double dt = psi.time() - t_prev_;
    require(dt > 0.0, Errc::snapshot_gap, "snapshots must increase in time");
    advance_ensemble_in_place(e, prev_, next, dt, scale_, threads_);
    e.time = psi.time();
    prev_ = std::move(next);
    t_prev_ = psi.time();
  }

  [[nodiscard]] const VelocityField& current_field() const { return prev_; }

 private:
  Hamiltonian h_;
  Regularization reg_;
  double scale_;
  unsigned threads_;
  VelocityField prev_;
  double t_prev_ = 0.0;
};

struct IntegrateOptions {
  std::vector<std::size_t> record;  // members whose full trajectories are kept
  double velocity_scale = 1.0;
  unsigned threads = 1;
};

struct IntegrationResult {
  EnsembleState final_state;
  std::vector<Trajectory> trajectories;  // parallel to IntegrateOptions::record
};

/// Carries e0 through every snapshot interval. Snapshots must start at e0.time
/// and be uniformly spaced.
inline IntegrationResult integrate(const EnsembleState& e0, std::span<const WaveFunction> snapshots,
                                   const Hamiltonian& h, const Regularization& reg, const IntegrateOptions& opt = {}) {
  require(!snapshots.empty(), Errc::snapshot_gap, "no snapshots");
  require(std::abs(snapshots.front().time() - e0.time) <= 1e-12 * std::max(1.0, std::abs(e0.time)),
          Errc::snapshot_gap, "first snapshot is not at the ensemble time");
  if (snapshots.size() > 2) {
    const double dt0 = snapshots[1].time() - snapshots[0].time();
    for (std::size_t i = 2; i < snapshots.size(); ++i) {
      const double dt = snapshots[i].time() - snapshots[i - 1].time();
      require(std::abs(dt - dt0) <= 1e-9 * std::abs(dt0), Errc::snapshot_gap, "snapshot spacing is not uniform");
    }
  }
  for (auto m : opt.record) require(m < e0.size(), Errc::invalid_argument, "recorded member out of range");

  IntegrationResult res;
  res.final_state = e0;
  EnsembleState& e = res.final_state;
  res.trajectories.resize(opt.record.size());
  auto capture = [&] {
    for (std::size_t r = 0; r < opt.record.size(); ++r) {
      res.trajectories[r].times.push_back(e.time);
      res.trajectories[r].points.push_back(e.configs[opt.record[r]]);
    }
  };
  EnsembleIntegrator integ(h, reg, opt.velocity_scale, opt.threads);
  integ.start(snapshots.front(), e);
  capture();
  for (std::size_t i = 1; i < snapshots.size(); ++i) {
    integ.advance(snapshots[i], e);
    capture();
  }
  e.wavefunction = std::make_shared<const WaveFunction>(snapshots.back());
  return res;
}

struct TransportOptions {
  double velocity_scale = 1.0;
  unsigned threads = 1;
  std::optional<Regularization> reg;  // defaults to Regularization::defaults for the snapshot spacing
  std::vector<std::size_t> record;    // members whose trajectories are kept
};

struct TransportResult {
  WaveFunction psi;
  EnsembleState ensemble;
  std::vector<Trajectory> trajectories;  // parallel to TransportOptions::record
};

/// Propagates psi to t_final and carries the ensemble along at the snapshot
/// cadence. `on_snapshot(psi, ensemble)` sees every snapshot after the ensemble
/// has reached it.
template <class OnSnapshot>
TransportResult transport(const WaveFunction& psi0, EnsembleState e, const Propagator& prop, double t_final,
                          const TransportOptions& opt, OnSnapshot&& on_snapshot) {
  const double cadence = prop.config().dt * static_cast<double>(prop.config().steps_per_snapshot);
  const Regularization reg = opt.reg.value_or(Regularization::defaults(psi0.grid(), cadence));
  for (auto m : opt.record) require(m < e.size(), Errc::invalid_argument, "recorded member out of range");
  TransportResult res;
  res.trajectories.resize(opt.record.size());
  EnsembleIntegrator integ(prop.hamiltonian(), reg, opt.velocity_scale, opt.threads);
  bool first = true;
  res.psi = propagate(psi0, prop, t_final, [&](const WaveFunction& snap) {
    if (first) {
      integ.start(snap, e);
      first = false;
    } else {
      integ.advance(snap, e);
    }
    for (std::size_t r = 0; r < opt.record.size(); ++r) {
      res.trajectories[r].times.push_back(e.time);
      res.trajectories[r].points.push_back(e.configs[opt.record[r]]);
    }
    on_snapshot(snap, static_cast<const EnsembleState&>(e));
  });
  e.wavefunction = std::make_shared<const WaveFunction>(res.psi);
  res.ensemble = std::move(e);
  return res;
}

inline TransportResult transport(const WaveFunction& psi0, EnsembleState e, const Propagator& prop, double t_final,
                                 const TransportOptions& opt = {}) {
  return transport(psi0, std::move(e), prop, t_final, opt, [](const WaveFunction&, const EnsembleState&) {});
}

/// CSV with header "time,axis0,axis1,..." and 17-significant-digit values.
inline void write_trajectory_csv(std::ostream& os, const Trajectory& traj) {
  const std::size_t d = traj.points.empty() ? 0 : traj.points.front().size();
  os << "time";
  for (std::size_t k = 0; k < d; ++k) os << ",axis" << k;
  os << '\n';
  for (std::size_t i = 0; i < traj.times.size(); ++i) {
    os << io::format_real(traj.times[i]);
    for (std::size_t k = 0; k < d; ++k) os << ',' << io::format_real(traj.points[i][k]);
    os << '\n';
  }
}

}  // namespace bohm
