#pragma once

#include <cmath>
#include <complex>
#include <functional>
#include <span>
#include <utility>
#include <vector>

#include "bohm/error.hpp"
#include "bohm/grid.hpp"

namespace bohm {

using Complex = std::complex<double>;

/// Complex amplitudes on a grid at a given time.
class WaveFunction {
 public:
  WaveFunction() = default;

  WaveFunction(Grid grid, std::vector<Complex> amplitudes, double time = 0.0)
      : grid_(std::move(grid)), amp_(std::move(amplitudes)), time_(time) {
    require(amp_.size() == grid_.size(), Errc::grid_mismatch, "amplitude count does not match grid size");
    for (const auto& a : amp_)
      require(std::isfinite(a.real()) && std::isfinite(a.imag()), Errc::invalid_argument,
              "wave function has a non-finite amplitude");
  }

  template <class F>
  static WaveFunction from_function(const Grid& grid, F&& f, double time = 0.0) {
    std::vector<Complex> amp(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) amp[i] = Complex(f(grid.node(i)));
    return WaveFunction(grid, std::move(amp), time);
  }

  [[nodiscard]] const Grid& grid() const { return grid_; }
  [[nodiscard]] double time() const { return time_; }
  void set_time(double t) { time_ = t; }

  [[nodiscard]] std::span<const Complex> amplitudes() const { return amp_; }
  [[nodiscard]] std::span<Complex> amplitudes() { return amp_; }
  [[nodiscard]] std::size_t size() const { return amp_.size(); }
  Complex operator[](std::size_t i) const { return amp_[i]; }
  Complex& operator[](std::size_t i) { return amp_[i]; }

  [[nodiscard]] double norm2() const {
    double s = 0.0;
    for (const auto& a : amp_) s += std::norm(a);
    return s * grid_.cell_volume();
  }

  [[nodiscard]] WaveFunction conjugate() const {
    WaveFunction out = *this;
    for (auto& a : out.amp_) a = std::conj(a);
    return out;
  }

  [[nodiscard]] WaveFunction scaled(Complex c) const {
    WaveFunction out = *this;
    for (auto& a : out.amp_) a *= c;
    return out;
  }

 private:
  Grid grid_;
  std::vector<Complex> amp_;
  double time_ = 0.0;
};

/// Nonnegative density on a grid, integrated with the grid's cell volume.
class Density {
 public:
  Density() = default;

  Density(Grid grid, std::vector<double> values, bool normalized = false)
      : grid_(std::move(grid)), values_(std::move(values)), normalized_(normalized) {
    require(values_.size() == grid_.size(), Errc::grid_mismatch, "density size does not match grid size");
    for (double v : values_)
      require(std::isfinite(v) && v >= 0.0, Errc::invalid_argument, "density values must be finite and >= 0");
    if (normalized_)
      require(std::abs(mass() - 1.0) <= 1e-12, Errc::not_normalized, "density flagged normalized but mass != 1");
  }

  [[nodiscard]] const Grid& grid() const { return grid_; }
  [[nodiscard]] std::span<const double> values() const { return values_; }
  [[nodiscard]] std::size_t size() const { return values_.size(); }
  double operator[](std::size_t i) const { return values_[i]; }
  [[nodiscard]] bool normalized() const { return normalized_; }

  [[nodiscard]] double mass() const {
    double s = 0.0;
    for (double v : values_) s += v;
    return s * grid_.cell_volume();
  }

  /// Copy rescaled to unit mass.
  [[nodiscard]] Density normalized_copy() const {
    const double m = mass();
    require(m > 0.0 && std::isfinite(m), Errc::zero_norm, "density has zero mass");
    std::vector<double> v(values_);
    for (auto& x : v) x /= m;
    return Density(grid_, std::move(v), true);
  }

 private:
  Grid grid_;
  std::vector<double> values_;
  bool normalized_ = false;
};

inline WaveFunction normalize(const WaveFunction& psi) {
  const double n2 = psi.norm2();
  require(n2 > 0.0 && std::isfinite(n2), Errc::zero_norm, "wave function has zero or non-finite norm");
  return psi.scaled(Complex(1.0 / std::sqrt(n2), 0.0));
}

/// |psi|^2 of a wave function; the result is renormalized against rounding.
inline Density density(const WaveFunction& psi) {
  std::vector<double> v(psi.size());
  double s = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    v[i] = std::norm(psi[i]);
    s += v[i];
  }
  s *= psi.grid().cell_volume();
  require(s > 0.0 && std::isfinite(s), Errc::zero_norm, "wave function has zero norm");
  require(std::abs(s - 1.0) < 1e-6, Errc::not_normalized, "density() expects a normalized wave function");
  for (auto& x : v) x /= s;
  return Density(psi.grid(), std::move(v), true);
}

/// |psi|^p normalized to unit mass (p = 2 gives the quantum-equilibrium density).
inline Density power_density(const WaveFunction& psi, int power) {
  std::vector<double> v(psi.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = std::pow(std::abs(psi[i]), power);
  return Density(psi.grid(), std::move(v)).normalized_copy();
}

/// Integrates out every axis not in `keep` (kept axes retain the order given).
inline Density marginal(const Density& rho, std::span<const std::size_t> keep) {
  require(!keep.empty(), Errc::empty_axis_set, "marginal needs at least one kept axis");
  const Grid& g = rho.grid();
  for (auto k : keep) require(k < g.dims(), Errc::invalid_argument, "kept axis out of range");
  Grid out_grid = g.subgrid(keep);
  double dropped_volume = 1.0;
  for (auto k : complement_axes(g.dims(), keep)) dropped_volume *= g.axis(k).spacing();

  std::vector<double> out(out_grid.size(), 0.0);
  for (std::size_t i = 0; i < g.size(); ++i) {
    std::size_t j = 0;
    for (std::size_t a = 0; a < keep.size(); ++a) j += g.index_along(i, keep[a]) * out_grid.stride(a);
    out[j] += rho[i];
  }
  for (auto& x : out) x *= dropped_volume;
  if (rho.normalized()) {
    // re-sum in the output order so the flag's 1e-12 invariant holds after reordering
    double s = 0.0;
    for (double x : out) s += x;
    s *= out_grid.cell_volume();
    for (auto& x : out) x /= s;
  }
  return Density(std::move(out_grid), std::move(out), rho.normalized());
}

inline Complex inner_product(const WaveFunction& psi, const WaveFunction& phi) {
  require(psi.grid() == phi.grid(), Errc::grid_mismatch, "inner product of wave functions on different grids");
  Complex s{};
  for (std::size_t i = 0; i < psi.size(); ++i) s += std::conj(psi[i]) * phi[i];
  return s * psi.grid().cell_volume();
}

/// |<psi, phi>|^2 / (|psi|^2 |phi|^2), in [0, 1].
inline double fidelity(const WaveFunction& psi, const WaveFunction& phi) {
  const double a = psi.norm2();
  const double b = phi.norm2();
  require(a > 0.0 && b > 0.0, Errc::zero_norm, "fidelity of a zero wave function");
  return std::min(1.0, std::norm(inner_product(psi, phi)) / (a * b));
}

}  // namespace bohm
