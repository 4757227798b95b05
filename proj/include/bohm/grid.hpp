#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "bohm/error.hpp"

namespace bohm {

inline constexpr std::size_t kMaxDims = 4;

enum class Boundary : std::uint8_t { periodic = 0, box = 1 };

/// One axis of a rectangular configuration-space grid.
///
/// Periodic axes carry cell-centred nodes x_j = min + (j + 1/2) h with
/// h = (max - min) / points, so the cells tile [min, max) exactly.
/// Box axes carry interior nodes x_j = min + (j + 1) h with
/// h = (max - min) / (points + 1); the wave function vanishes on the walls
/// at min and max.
struct AxisSpec {
  std::size_t points = 2;
  double min = 0.0;
  double max = 1.0;
  Boundary boundary = Boundary::periodic;

  [[nodiscard]] double length() const { return max - min; }

  [[nodiscard]] double spacing() const {
    return boundary == Boundary::periodic ? length() / static_cast<double>(points)
                                          : length() / static_cast<double>(points + 1);
  }

  [[nodiscard]] double node(std::size_t j) const {
    const double h = spacing();
    return boundary == Boundary::periodic ? min + (static_cast<double>(j) + 0.5) * h
                                          : min + (static_cast<double>(j) + 1.0) * h;
  }

  /// Fractional node coordinate u with node(j) at u == j.
  [[nodiscard]] double to_node_units(double x) const {
    const double offset = boundary == Boundary::periodic ? 0.5 : 1.0;
    return (x - min) / spacing() - offset;
  }

  /// Lower and upper edge of the region covered by the cells.
  [[nodiscard]] double cell_lo() const { return node(0) - 0.5 * spacing(); }
  [[nodiscard]] double cell_hi() const { return node(points - 1) + 0.5 * spacing(); }

  /// Maps x into [min, max) on periodic axes; box coordinates are returned as-is.
  [[nodiscard]] double wrap(double x) const {
    if (boundary != Boundary::periodic) return x;
    const double len = length();
    double r = std::fmod(x - min, len);
    if (r < 0.0) r += len;
    if (r >= len) r = 0.0;
    return min + r;
  }

  /// Index of the cell containing x, or -1 when x lies outside the cells.
  [[nodiscard]] std::ptrdiff_t cell_of(double x) const {
    const double h = spacing();
    const double u = (wrap(x) - cell_lo()) / h;
    if (!(u >= 0.0)) return -1;
    auto j = static_cast<std::ptrdiff_t>(std::floor(u));
    const auto n = static_cast<std::ptrdiff_t>(points);
    if (boundary == Boundary::periodic) return ((j % n) + n) % n;
    if (j == n && x <= cell_hi()) j = n - 1;
    return j < n ? j : -1;
  }

  friend bool operator==(const AxisSpec&, const AxisSpec&) = default;
};

/// A point of configuration space with one coordinate per grid axis.
class Configuration {
 public:
  Configuration() = default;
  explicit Configuration(std::size_t dims) : size_(static_cast<std::uint8_t>(dims)) {
    require(dims <= kMaxDims, Errc::invalid_argument, "configuration dimension exceeds 4");
  }
  Configuration(std::initializer_list<double> values) : Configuration(values.size()) {
    std::copy(values.begin(), values.end(), coords_.begin());
  }
  explicit Configuration(std::span<const double> values) : Configuration(values.size()) {
    std::copy(values.begin(), values.end(), coords_.begin());
  }

  [[nodiscard]] std::size_t size() const { return size_; }
  double& operator[](std::size_t k) { return coords_[k]; }
  double operator[](std::size_t k) const { return coords_[k]; }
  [[nodiscard]] std::span<const double> coords() const { return {coords_.data(), size_}; }
  [[nodiscard]] std::span<double> coords() { return {coords_.data(), size_}; }

  /// Coordinates restricted to the given axes, in the order given.
  [[nodiscard]] Configuration select(std::span<const std::size_t> axes) const {
    Configuration out(axes.size());
    for (std::size_t i = 0; i < axes.size(); ++i) out[i] = coords_[axes[i]];
    return out;
  }

  friend bool operator==(const Configuration& a, const Configuration& b) {
    return a.size_ == b.size_ && std::equal(a.coords_.begin(), a.coords_.begin() + a.size_, b.coords_.begin());
  }

 private:
  std::array<double, kMaxDims> coords_{};
  std::uint8_t size_ = 0;
};

/// Rectangular tensor-product grid, stored row-major (last axis fastest).
class Grid {
 public:
  Grid() = default;

  explicit Grid(std::vector<AxisSpec> axes) : axes_(std::move(axes)) {
    require(!axes_.empty(), Errc::invalid_grid, "grid needs at least one axis");
    require(axes_.size() <= kMaxDims, Errc::invalid_grid, "grid dimension exceeds 4");
    for (std::size_t k = 0; k < axes_.size(); ++k) {
      const auto& a = axes_[k];
      require(a.points >= 2, Errc::invalid_grid, "axis " + std::to_string(k) + " needs at least 2 points");
      require(std::isfinite(a.min) && std::isfinite(a.max) && a.max > a.min, Errc::invalid_grid,
              "axis " + std::to_string(k) + " needs max > min");
    }
    strides_.assign(axes_.size(), 1);
    for (std::size_t k = axes_.size() - 1; k > 0; --k) strides_[k - 1] = strides_[k] * axes_[k].points;
    size_ = strides_[0] * axes_[0].points;
  }

  Grid(std::initializer_list<AxisSpec> axes) : Grid(std::vector<AxisSpec>(axes)) {}

  [[nodiscard]] std::size_t dims() const { return axes_.size(); }
  [[nodiscard]] std::size_t size() const { return size_; }
  [[nodiscard]] const AxisSpec& axis(std::size_t k) const { return axes_[k]; }
  [[nodiscard]] const std::vector<AxisSpec>& axes() const { return axes_; }
  [[nodiscard]] std::size_t stride(std::size_t k) const { return strides_[k]; }
  [[nodiscard]] std::size_t extent(std::size_t k) const { return axes_[k].points; }

  [[nodiscard]] double cell_volume() const {
    double v = 1.0;
    for (const auto& a : axes_) v *= a.spacing();
    return v;
  }

  [[nodiscard]] bool all(Boundary b) const {
    return std::all_of(axes_.begin(), axes_.end(), [b](const AxisSpec& a) { return a.boundary == b; });
  }

  /// Euclidean diagonal of the domain.
  [[nodiscard]] double diameter() const {
    double s = 0.0;
    for (const auto& a : axes_) s += a.length() * a.length();
    return std::sqrt(s);
  }

  [[nodiscard]] std::size_t index_along(std::size_t flat, std::size_t k) const {
    return (flat / strides_[k]) % axes_[k].points;
  }

  [[nodiscard]] Configuration node(std::size_t flat) const {
    Configuration q(dims());
    for (std::size_t k = 0; k < dims(); ++k) q[k] = axes_[k].node(index_along(flat, k));
    return q;
  }

  /// Flat index of the cell containing q, or -1 if q is outside the cells.
  [[nodiscard]] std::ptrdiff_t cell_of(const Configuration& q) const {
    std::ptrdiff_t flat = 0;
    for (std::size_t k = 0; k < dims(); ++k) {
      const auto j = axes_[k].cell_of(q[k]);
      if (j < 0) return -1;
      flat += j * static_cast<std::ptrdiff_t>(strides_[k]);
    }
    return flat;
  }

  /// Grid spanned by the listed axes, in the order listed.
  [[nodiscard]] Grid subgrid(std::span<const std::size_t> keep) const {
    require(!keep.empty(), Errc::empty_axis_set, "axis subset is empty");
    std::vector<AxisSpec> out;
    for (auto k : keep) {
      require(k < dims(), Errc::invalid_argument, "axis index out of range");
      out.push_back(axes_[k]);
    }
    return Grid(std::move(out));
  }

  friend bool operator==(const Grid& a, const Grid& b) { return a.axes_ == b.axes_; }

 private:
  std::vector<AxisSpec> axes_;
  std::vector<std::size_t> strides_;
  std::size_t size_ = 0;
};

/// Axes of a grid of dimension `dims` not listed in `axes`, ascending.
inline std::vector<std::size_t> complement_axes(std::size_t dims, std::span<const std::size_t> axes) {
  std::vector<std::size_t> out;
  for (std::size_t k = 0; k < dims; ++k)
    if (std::find(axes.begin(), axes.end(), k) == axes.end()) out.push_back(k);
  return out;
}

}  // namespace bohm
