#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <span>

#include "bohm/grid.hpp"

namespace bohm {

/// How a box axis is treated between its outermost node and the wall.
enum class WallMode {
  hold,  // constant continuation of the outermost node value (velocity fields)
  zero,  // linear decay to zero at the wall (wave functions with Dirichlet walls)
};

/// Corner indices and weights for multilinear interpolation at a point.
/// A corner index of kNoCell stands for the wall, where the field is zero.
struct Stencil {
  static constexpr std::size_t kNoCell = static_cast<std::size_t>(-1);
  std::array<std::size_t, std::size_t{1} << kMaxDims> cells{};
  std::array<double, std::size_t{1} << kMaxDims> weights{};
  std::size_t count = 0;
};

namespace detail {

struct AxisBracket {
  std::ptrdiff_t lo;  // -1 stands for the lower wall
  std::ptrdiff_t hi;  // == points stands for the upper wall
  double w_hi;
};

inline AxisBracket bracket(const AxisSpec& axis, double x, WallMode mode) {
  const auto n = static_cast<std::ptrdiff_t>(axis.points);
  if (axis.boundary == Boundary::periodic) {
    const double u = axis.to_node_units(axis.wrap(x));
    const double f = std::floor(u);
    auto lo = static_cast<std::ptrdiff_t>(f);
    const double w = u - f;
    lo = ((lo % n) + n) % n;
    return {lo, (lo + 1) % n, w};
  }
  const double u = axis.to_node_units(x);
  if (mode == WallMode::hold) {
    if (u <= 0.0) return {0, 0, 0.0};
    if (u >= static_cast<double>(n - 1)) return {n - 1, n - 1, 0.0};
  } else {
    if (u <= -1.0 || u >= static_cast<double>(n)) return {-1, -1, 0.0};
  }
  const double f = std::floor(u);
  const auto lo = static_cast<std::ptrdiff_t>(f);
  return {lo, lo + 1, u - f};
}

}  // namespace detail

/// Multilinear stencil for point q on `grid`; the axes of q map one-to-one onto
/// the grid axes.
inline Stencil make_stencil(const Grid& grid, std::span<const double> q, WallMode mode) {
  const std::size_t d = grid.dims();
  std::array<detail::AxisBracket, kMaxDims> br{};
  for (std::size_t k = 0; k < d; ++k) br[k] = detail::bracket(grid.axis(k), q[k], mode);
  Stencil s;
  s.count = std::size_t{1} << d;
  for (std::size_t c = 0; c < s.count; ++c) {
    double w = 1.0;
    std::size_t flat = 0;
    bool wall = false;
    for (std::size_t k = 0; k < d; ++k) {
      const bool upper = (c >> k) & 1U;
      const auto idx = upper ? br[k].hi : br[k].lo;
      w *= upper ? br[k].w_hi : 1.0 - br[k].w_hi;
      if (idx < 0 || idx >= static_cast<std::ptrdiff_t>(grid.extent(k)))
        wall = true;
      else
        flat += static_cast<std::size_t>(idx) * grid.stride(k);
    }
    s.cells[c] = wall ? Stencil::kNoCell : flat;
    s.weights[c] = wall ? 0.0 : w;
  }
  return s;
}

template <class T>
T apply(const Stencil& s, std::span<const T> field) {
  T acc{};
  for (std::size_t c = 0; c < s.count; ++c)
    if (s.cells[c] != Stencil::kNoCell && s.weights[c] != 0.0) acc += s.weights[c] * field[s.cells[c]];
  return acc;
}

}  // namespace bohm
