#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <functional>
#include <limits>
#include <span>
#include <utility>
#include <vector>

#include "bohm/error.hpp"
#include "bohm/fft.hpp"
#include "bohm/grid.hpp"
#include "bohm/wavefunction.hpp"

namespace bohm {

/// Adds a time-dependent contribution into `potential` (one value per cell).
using PotentialCallback = std::function<void(double t, const Grid& grid, std::span<double> potential)>;

/// H = sum_k -hbar^2/(2 m_k) d^2/dq_k^2 + V(q) [+ V_t(q)].
struct Hamiltonian {
  std::vector<double> masses;
  std::vector<double> potential;  // empty means V == 0
  double hbar = 1.0;
  PotentialCallback time_dependent;  // evaluated once per step at the step midpoint

  static Hamiltonian free(const Grid& grid, std::vector<double> masses, double hbar = 1.0) {
    Hamiltonian h;
    h.masses = std::move(masses);
    h.hbar = hbar;
    h.validate(grid);
    return h;
  }

  static Hamiltonian with_potential(const Grid& grid, std::vector<double> masses, std::vector<double> v,
                                    double hbar = 1.0) {
    Hamiltonian h;
    h.masses = std::move(masses);
    h.potential = std::move(v);
    h.hbar = hbar;
    h.validate(grid);
    return h;
  }

  void validate(const Grid& grid) const {
    require(masses.size() == grid.dims(), Errc::invalid_argument, "need one mass per axis");
    for (double m : masses) require(m > 0.0 && std::isfinite(m), Errc::invalid_argument, "masses must be > 0");
    require(hbar > 0.0 && std::isfinite(hbar), Errc::invalid_argument, "hbar must be > 0");
    require(potential.empty() || potential.size() == grid.size(), Errc::grid_mismatch,
            "potential size does not match grid");
    for (double v : potential) require(std::isfinite(v), Errc::invalid_argument, "potential must be finite");
  }

  /// Static plus time-dependent potential at time t.
  [[nodiscard]] std::vector<double> potential_at(const Grid& grid, double t) const {
    std::vector<double> v = potential.empty() ? std::vector<double>(grid.size(), 0.0) : potential;
    if (time_dependent) time_dependent(t, grid, v);
    return v;
  }
};

enum class Method { split_fourier, crank_nicolson };

struct PropagatorConfig {
  Method method = Method::split_fourier;
  double dt = 1e-3;
  std::size_t steps_per_snapshot = 1;
};

/// Time step heuristic: 0.1 * min_k m_k dx_k^2 / hbar.
inline double suggest_dt(const Grid& grid, const Hamiltonian& h) {
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < grid.dims(); ++k) {
    const double dx = grid.axis(k).spacing();
    best = std::min(best, 0.1 * h.masses[k] * dx * dx / h.hbar);
  }
  return best;
}

/// V(q) = sum_{i<j} pair(|q_i - q_j|), where each entry of `particles` lists
/// the grid axes holding one particle's coordinates. Periodic axes use the
/// minimum-image separation.
template <class PairFn>
std::vector<double> build_pair_potential(const Grid& grid, PairFn&& pair,
                                         const std::vector<std::vector<std::size_t>>& particles) {
  require(!particles.empty(), Errc::inconsistent_particle_dims, "no particles given");
  const std::size_t d = particles.front().size();
  std::vector<int> seen(grid.dims(), 0);
  for (const auto& p : particles) {
    require(p.size() == d && d > 0, Errc::inconsistent_particle_dims, "particles must have equal dimension");
    for (auto k : p) {
      require(k < grid.dims(), Errc::inconsistent_particle_dims, "particle axis out of range");
      require(seen[k]++ == 0, Errc::inconsistent_particle_dims, "axis assigned to two particles");
    }
  }
  require(std::all_of(seen.begin(), seen.end(), [](int s) { return s == 1; }), Errc::inconsistent_particle_dims,
          "particles must partition the grid axes");
  for (std::size_t c = 0; c < d; ++c)
    for (const auto& p : particles)
      require(grid.axis(p[c]) == grid.axis(particles.front()[c]), Errc::inconsistent_particle_dims,
              "matching particle axes must share the same spec");

  std::vector<double> v(grid.size(), 0.0);
  for (std::size_t cell = 0; cell < grid.size(); ++cell) {
    const Configuration q = grid.node(cell);
    double sum = 0.0;
    for (std::size_t i = 0; i < particles.size(); ++i) {
      for (std::size_t j = i + 1; j < particles.size(); ++j) {
        double r2 = 0.0;
        for (std::size_t c = 0; c < d; ++c) {
          const auto& axis = grid.axis(particles[i][c]);
          double dq = q[particles[i][c]] - q[particles[j][c]];
          if (axis.boundary == Boundary::periodic) dq -= axis.length() * std::round(dq / axis.length());
          r2 += dq * dq;
        }
        sum += pair(std::sqrt(r2));
      }
    }
    v[cell] = sum;
  }
  return v;
}

/// Advances wave functions on a fixed grid with a fixed Hamiltonian.
///
/// split_fourier: Strang splitting exp(-iV dt/2h) F^-1 exp(-i T(k) dt/h) F exp(-iV dt/2h),
/// periodic grids only. crank_nicolson: the same potential half-kicks around a
/// product of per-axis Cayley factors (1 + iT_k dt/2h)^-1 (1 - iT_k dt/2h) with
/// homogeneous Dirichlet walls, box grids only. Both are exactly unitary.
/// Holds per-dt caches, so one instance must not be stepped from two threads.
class Propagator {
 public:
  Propagator(Grid grid, Hamiltonian h, PropagatorConfig cfg)
      : grid_(std::move(grid)), h_(std::move(h)), cfg_(cfg) {
    h_.validate(grid_);
    require(cfg_.dt > 0.0 && std::isfinite(cfg_.dt), Errc::invalid_argument, "dt must be > 0");
    require(cfg_.steps_per_snapshot >= 1, Errc::invalid_argument, "steps_per_snapshot must be >= 1");
    if (cfg_.method == Method::split_fourier)
      require(grid_.all(Boundary::periodic), Errc::method_grid_mismatch, "split_fourier needs an all-periodic grid");
    else
      require(grid_.all(Boundary::box), Errc::method_grid_mismatch, "crank_nicolson needs an all-box grid");
    if (!h_.time_dependent) static_potential_ = h_.potential_at(grid_, 0.0);
  }

  [[nodiscard]] const Grid& grid() const { return grid_; }
  [[nodiscard]] const Hamiltonian& hamiltonian() const { return h_; }
  [[nodiscard]] const PropagatorConfig& config() const { return cfg_; }

  /// One step of length dt (cfg.dt when omitted).
  void step_in_place(WaveFunction& psi, double dt = 0.0) const {
    require(psi.grid() == grid_, Errc::grid_mismatch, "wave function grid differs from propagator grid");
    if (dt <= 0.0) dt = cfg_.dt;
    const double t = psi.time();
    auto amp = psi.amplitudes();
    if (h_.time_dependent) {
      const std::vector<double> v = h_.potential_at(grid_, t + 0.5 * dt);
      half_kick(amp, v, dt);
      kinetic(amp, dt);
      half_kick(amp, v, dt);
    } else {
      if (dt != kick_dt_) {
        kick_phase_.resize(grid_.size());
        for (std::size_t i = 0; i < grid_.size(); ++i)
          kick_phase_[i] = std::polar(1.0, -0.5 * dt / h_.hbar * static_potential_[i]);
        kick_dt_ = dt;
      }
      for (std::size_t i = 0; i < amp.size(); ++i) amp[i] *= kick_phase_[i];
      kinetic(amp, dt);
      for (std::size_t i = 0; i < amp.size(); ++i) amp[i] *= kick_phase_[i];
    }
    psi.set_time(t + dt);
  }

  [[nodiscard]] WaveFunction step(const WaveFunction& psi, double dt = 0.0) const {
    WaveFunction out = psi;
    step_in_place(out, dt);
    return out;
  }

 private:
  void kinetic(std::span<Complex> amp, double dt) const {
    if (cfg_.method == Method::split_fourier)
      kinetic_spectral(amp, dt);
    else
      kinetic_cayley(amp, dt);
  }

  void half_kick(std::span<Complex> amp, const std::vector<double>& v, double dt) const {
    const double c = -0.5 * dt / h_.hbar;
    for (std::size_t i = 0; i < amp.size(); ++i)
      if (v[i] != 0.0) amp[i] *= std::polar(1.0, c * v[i]);
  }

  void kinetic_spectral(std::span<Complex> amp, double dt) const {
    if (dt != phase_dt_) {
      kinetic_phase_.resize(grid_.size());
      for (std::size_t i = 0; i < grid_.size(); ++i) {
        double energy = 0.0;
        for (std::size_t k = 0; k < grid_.dims(); ++k) {
          const double kk = fft::wavenumber(grid_.axis(k), grid_.index_along(i, k));
          energy += h_.hbar * h_.hbar * kk * kk / (2.0 * h_.masses[k]);
        }
        kinetic_phase_[i] = std::polar(1.0 / static_cast<double>(grid_.size()), -energy * dt / h_.hbar);
      }
      phase_dt_ = dt;
    }
    fft::transform(grid_, amp, fft::Direction::forward);
    for (std::size_t i = 0; i < amp.size(); ++i) amp[i] *= kinetic_phase_[i];
    fft::transform(grid_, amp, fft::Direction::backward);
  }

  void kinetic_cayley(std::span<Complex> amp, double dt) const {
    std::vector<Complex> rhs;
    std::vector<Complex> cprime;
    for (std::size_t k = 0; k < grid_.dims(); ++k) {
      const std::size_t n = grid_.extent(k);
      const double dx = grid_.axis(k).spacing();
      const Complex beta(0.0, h_.hbar * dt / (4.0 * h_.masses[k] * dx * dx));
      const Complex diag = 1.0 + 2.0 * beta;
      // Thomas factorization of the constant tridiagonal (-beta, 1 + 2 beta, -beta).
      cprime.assign(n, Complex{});
      std::vector<Complex> denom(n);
      denom[0] = diag;
      cprime[0] = -beta / denom[0];
      for (std::size_t j = 1; j < n; ++j) {
        denom[j] = diag + beta * cprime[j - 1];
        cprime[j] = -beta / denom[j];
      }
      rhs.resize(n);
      const std::size_t inner = grid_.stride(k);
      const std::size_t outer = grid_.size() / (n * inner);
      for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t in = 0; in < inner; ++in) {
          const std::size_t base = o * n * inner + in;
          auto at = [&](std::size_t j) -> Complex& { return amp[base + j * inner]; };
          for (std::size_t j = 0; j < n; ++j) {
            const Complex left = j > 0 ? at(j - 1) : Complex{};
            const Complex right = j + 1 < n ? at(j + 1) : Complex{};
            rhs[j] = (1.0 - 2.0 * beta) * at(j) + beta * (left + right);
          }
          // forward sweep, then back substitution
          rhs[0] /= denom[0];
          for (std::size_t j = 1; j < n; ++j) rhs[j] = (rhs[j] + beta * rhs[j - 1]) / denom[j];
          for (std::size_t j = n - 1; j-- > 0;) rhs[j] -= cprime[j] * rhs[j + 1];
          for (std::size_t j = 0; j < n; ++j) at(j) = rhs[j];
        }
      }
    }
  }

  Grid grid_;
  Hamiltonian h_;
  PropagatorConfig cfg_;
  std::vector<double> static_potential_;
  mutable std::vector<Complex> kick_phase_;
  mutable double kick_dt_ = -1.0;
  mutable std::vector<Complex> kinetic_phase_;
  mutable double phase_dt_ = -1.0;
};

/// One propagation step; pure.
inline WaveFunction step(const WaveFunction& psi, const Hamiltonian& h, const PropagatorConfig& cfg) {
  return Propagator(psi.grid(), h, cfg).step(psi);
}

/// Steps psi to t_final, calling on_snapshot(psi) at the start, after every
/// cfg.steps_per_snapshot steps, and at t_final. When the interval is not a
/// whole number of steps the last step is shortened to land on t_final.
/// Returns the final state.
template <class OnSnapshot>
WaveFunction propagate(const WaveFunction& psi, const Propagator& prop, double t_final, OnSnapshot&& on_snapshot) {
  const PropagatorConfig& cfg = prop.config();
  const double t0 = psi.time();
  require(t_final >= t0, Errc::invalid_argument, "t_final precedes the wave function time");
  const double span = t_final - t0;
  auto whole = static_cast<std::size_t>(std::floor(span / cfg.dt));
  double remainder = span - static_cast<double>(whole) * cfg.dt;
  if (std::abs(remainder - cfg.dt) <= 1e-9 * cfg.dt) {
    // span/dt sits a rounding error below an integer
    ++whole;
    remainder = 0.0;
  } else if (remainder <= 1e-9 * cfg.dt) {
    remainder = 0.0;
  }
  WaveFunction cur = psi;
  on_snapshot(static_cast<const WaveFunction&>(cur));
  for (std::size_t s = 1; s <= whole; ++s) {
    prop.step_in_place(cur);
    cur.set_time(t0 + static_cast<double>(s) * cfg.dt);
    if (s % cfg.steps_per_snapshot == 0) on_snapshot(static_cast<const WaveFunction&>(cur));
  }
  if (remainder > 0.0) {
    prop.step_in_place(cur, remainder);
    cur.set_time(t_final);
    on_snapshot(static_cast<const WaveFunction&>(cur));
  } else if (whole % cfg.steps_per_snapshot != 0) {
    on_snapshot(static_cast<const WaveFunction&>(cur));
  }
  return cur;
}

/// Snapshot sequence from psi.time() to t_final (see propagate for cadence).
inline std::vector<WaveFunction> evolve(const WaveFunction& psi, const Hamiltonian& h, const PropagatorConfig& cfg,
                                        double t_final) {
  Propagator prop(psi.grid(), h, cfg);
  std::vector<WaveFunction> out;
  propagate(psi, prop, t_final, [&](const WaveFunction& snap) { out.push_back(snap); });
  return out;
}

/// <psi|H|psi> / <psi|psi> at time t; spectral kinetic term on periodic axes,
/// second differences with Dirichlet walls on box axes.
inline double energy(const WaveFunction& psi, const Hamiltonian& h, double t = 0.0) {
  const Grid& g = psi.grid();
  h.validate(g);
  const double n2 = psi.norm2();
  require(n2 > 0.0, Errc::zero_norm, "energy of a zero wave function");
  double kinetic = 0.0;
  for (std::size_t k = 0; k < g.dims(); ++k) {
    const auto& axis = g.axis(k);
    std::vector<Complex> lap(psi.amplitudes().begin(), psi.amplitudes().end());
    if (axis.boundary == Boundary::periodic) {
      fft::transform_axis(g, k, lap, fft::Direction::forward);
      for (std::size_t i = 0; i < lap.size(); ++i) {
        const double kk = fft::wavenumber(axis, g.index_along(i, k));
        lap[i] *= kk * kk / static_cast<double>(axis.points);
      }
      fft::transform_axis(g, k, lap, fft::Direction::backward);
    } else {
      const double dx2 = axis.spacing() * axis.spacing();
      const std::size_t s = g.stride(k);
      for (std::size_t i = 0; i < lap.size(); ++i) {
        const std::size_t j = g.index_along(i, k);
        const Complex left = j > 0 ? psi[i - s] : Complex{};
        const Complex right = j + 1 < axis.points ? psi[i + s] : Complex{};
        lap[i] = (2.0 * psi[i] - left - right) / dx2;
      }
    }
    Complex s{};
    for (std::size_t i = 0; i < lap.size(); ++i) s += std::conj(psi[i]) * lap[i];
    kinetic += h.hbar * h.hbar / (2.0 * h.masses[k]) * s.real() * g.cell_volume();
  }
  const std::vector<double> v = h.potential_at(g, t);
  double pot = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) pot += v[i] * std::norm(psi[i]);
  pot *= g.cell_volume();
  return (kinetic + pot) / n2;
}

}  // namespace bohm
