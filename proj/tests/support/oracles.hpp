#pragma once

// Closed-form reference solutions used as test oracles.

#include <cmath>
#include <complex>
#include <numbers>

#include "bohm/grid.hpp"
#include "bohm/wavefunction.hpp"

namespace oracle {

using Complex = std::complex<double>;
constexpr double kPi = std::numbers::pi;

/// Free Gaussian packet of initial width s0 centred at x0 with mean momentum
/// hbar*k0. psi(x,t) = (2 pi s0^2)^(-1/4) (1 + i tau)^(-1/2)
///   exp(-(x - x0 - u t)^2 / (4 s0^2 (1 + i tau)) + i k0 (x - x0) - i u k0 t / 2),
/// with tau = hbar t / (2 m s0^2) and u = hbar k0 / m.
struct FreeGaussian {
  double s0 = 1.0;
  double x0 = 0.0;
  double k0 = 0.0;
  double mass = 1.0;
  double hbar = 1.0;

  [[nodiscard]] double tau(double t) const { return hbar * t / (2.0 * mass * s0 * s0); }
  [[nodiscard]] double width(double t) const { return s0 * std::sqrt(1.0 + tau(t) * tau(t)); }
  [[nodiscard]] double centre(double t) const { return x0 + hbar * k0 / mass * t; }

  /// Time at which the width has grown by `factor`.
  [[nodiscard]] double time_for_width(double factor) const {
    return std::sqrt(factor * factor - 1.0) * 2.0 * mass * s0 * s0 / hbar;
  }

  [[nodiscard]] Complex amplitude(double x, double t) const {
    const Complex one_it(1.0, tau(t));
    const double u = hbar * k0 / mass;
    const double d = x - x0 - u * t;
    const Complex expo = -d * d / (4.0 * s0 * s0 * one_it) + Complex(0.0, k0 * (x - x0) - 0.5 * u * k0 * t);
    return std::pow(2.0 * kPi * s0 * s0, -0.25) / std::sqrt(one_it) * std::exp(expo);
  }

  [[nodiscard]] double density(double x, double t) const {
    const double s = width(t);
    const double d = x - centre(t);
    return std::exp(-d * d / (2.0 * s * s)) / (std::sqrt(2.0 * kPi) * s);
  }

  [[nodiscard]] double cdf(double x, double t) const {
    return 0.5 * std::erfc(-(x - centre(t)) / (std::sqrt(2.0) * width(t)));
  }

  /// Guiding velocity for k0 = 0: x tau tau' / (1 + tau^2) with tau' = hbar / (2 m s0^2).
  [[nodiscard]] double velocity(double x, double t) const {
    const double rate = hbar / (2.0 * mass * s0 * s0);
    const double tt = tau(t);
    return (x - centre(t)) * rate * tt / (1.0 + tt * tt) + hbar * k0 / mass;
  }

  /// Bohmian trajectory through x at t = 0.
  [[nodiscard]] double trajectory(double x, double t) const {
    return centre(t) + (x - x0) * width(t) / s0;
  }

  [[nodiscard]] bohm::WaveFunction on(const bohm::Grid& g, double t = 0.0) const {
    return bohm::WaveFunction::from_function(
        g, [&](const bohm::Configuration& q) { return amplitude(q[0], t); }, t);
  }
};

/// Coherent state of V = m w^2 x^2 / 2 displaced to a at t = 0: a Gaussian of
/// fixed width sqrt(hbar / (2 m w)) whose centre moves as a cos(w t).
struct CoherentState {
  double omega = 1.0;
  double a = 1.0;
  double mass = 1.0;
  double hbar = 1.0;

  [[nodiscard]] double width() const { return std::sqrt(hbar / (2.0 * mass * omega)); }
  [[nodiscard]] double centre(double t) const { return a * std::cos(omega * t); }

  [[nodiscard]] Complex amplitude0(double x) const {
    const double s = width();
    return std::pow(2.0 * kPi * s * s, -0.25) * std::exp(-(x - a) * (x - a) / (4.0 * s * s));
  }

  [[nodiscard]] double density(double x, double t) const {
    const double s = width();
    const double d = x - centre(t);
    return std::exp(-d * d / (2.0 * s * s)) / (std::sqrt(2.0 * kPi) * s);
  }
};

/// n-th eigenvector of the Dirichlet second-difference operator on a box axis,
/// sampled at the nodes; it is an exact eigenvector of the discrete kinetic term.
inline double box_mode(const bohm::AxisSpec& axis, int n, double x) {
  return std::sin(n * kPi * (x - axis.min) / axis.length());
}

/// Discrete kinetic energy hbar^2 lambda / (2 m) of box_mode n.
inline double box_mode_energy(const bohm::AxisSpec& axis, int n, double mass, double hbar) {
  const double h = axis.spacing();
  const double lambda = (2.0 - 2.0 * std::cos(n * kPi * h / axis.length())) / (h * h);
  return hbar * hbar * lambda / (2.0 * mass);
}

/// Standard normal CDF.
inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

}  // namespace oracle
