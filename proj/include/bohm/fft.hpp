#pragma once

#include <fftw3.h>

#include <complex>
#include <cstddef>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <tuple>
#include <vector>

#include "bohm/grid.hpp"

namespace bohm::fft {

// FFTW planning is not thread-safe; execution with the new-array interface is.
// Plans are built once per (shape, axis, direction) with FFTW_ESTIMATE, which is
// deterministic, and cached for the life of the process.

enum class Direction { forward = FFTW_FORWARD, backward = FFTW_BACKWARD };

namespace detail {

struct PlanDeleter {
  void operator()(fftw_plan_s* p) const { fftw_destroy_plan(p); }
};
using PlanPtr = std::unique_ptr<fftw_plan_s, PlanDeleter>;

// axis == -1 means the full multi-dimensional transform.
using Key = std::tuple<std::vector<std::size_t>, int, int>;

inline std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

inline std::map<Key, PlanPtr>& plan_cache() {
  static std::map<Key, PlanPtr> cache;
  return cache;
}

inline fftw_plan make_plan(const std::vector<std::size_t>& shape, int axis, Direction dir) {
  std::size_t total = 1;
  for (auto n : shape) total *= n;
  std::vector<std::complex<double>> scratch(total);
  auto* buf = reinterpret_cast<fftw_complex*>(scratch.data());
  const unsigned flags = FFTW_ESTIMATE | FFTW_UNALIGNED;
  if (axis < 0) {
    std::vector<int> n(shape.begin(), shape.end());
    return fftw_plan_dft(static_cast<int>(n.size()), n.data(), buf, buf, static_cast<int>(dir), flags);
  }
  const auto k = static_cast<std::size_t>(axis);
  std::size_t inner = 1;
  for (std::size_t j = k + 1; j < shape.size(); ++j) inner *= shape[j];
  std::size_t outer = 1;
  for (std::size_t j = 0; j < k; ++j) outer *= shape[j];
  fftw_iodim dim{static_cast<int>(shape[k]), static_cast<int>(inner), static_cast<int>(inner)};
  fftw_iodim loops[2] = {
      {static_cast<int>(outer), static_cast<int>(shape[k] * inner), static_cast<int>(shape[k] * inner)},
      {static_cast<int>(inner), 1, 1},
  };
  return fftw_plan_guru_dft(1, &dim, 2, loops, buf, buf, static_cast<int>(dir), flags);
}

inline fftw_plan plan_for(const Grid& grid, int axis, Direction dir) {
  std::vector<std::size_t> shape;
  for (std::size_t k = 0; k < grid.dims(); ++k) shape.push_back(grid.extent(k));
  Key key{shape, axis, static_cast<int>(dir)};
  std::lock_guard lock(planner_mutex());
  auto& cache = plan_cache();
  auto it = cache.find(key);
  if (it == cache.end()) it = cache.emplace(key, PlanPtr(make_plan(shape, axis, dir))).first;
  return it->second.get();
}

}  // namespace detail

/// Unnormalized in-place transform of the whole array.
inline void transform(const Grid& grid, std::span<std::complex<double>> data, Direction dir) {
  auto* p = reinterpret_cast<fftw_complex*>(data.data());
  fftw_execute_dft(detail::plan_for(grid, -1, dir), p, p);
}

/// Unnormalized in-place transform along one axis.
inline void transform_axis(const Grid& grid, std::size_t axis, std::span<std::complex<double>> data, Direction dir) {
  auto* p = reinterpret_cast<fftw_complex*>(data.data());
  fftw_execute_dft(detail::plan_for(grid, static_cast<int>(axis), dir), p, p);
}

/// Angular wavenumber of FFT bin j on a periodic axis; the Nyquist bin of an
/// even-length axis maps to -pi/h.
inline double wavenumber(const AxisSpec& axis, std::size_t j) {
  const auto n = static_cast<std::ptrdiff_t>(axis.points);
  auto m = static_cast<std::ptrdiff_t>(j);
  if (2 * m >= n) m -= n;
  return 2.0 * 3.14159265358979323846 * static_cast<double>(m) / axis.length();
}

/// Wavenumber used for first derivatives: the Nyquist bin is zeroed so the
/// derivative of a real function stays real.
inline double derivative_wavenumber(const AxisSpec& axis, std::size_t j) {
  if (axis.points % 2 == 0 && 2 * j == axis.points) return 0.0;
  return wavenumber(axis, j);
}

}  // namespace bohm::fft
