#pragma once

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "bohm/error.hpp"
#include "bohm/wavefunction.hpp"

namespace bohm::io {

// Binary snapshot layout, all multi-byte fields little-endian:
//   "BSIM1"                       5 bytes
//   D                             uint32
//   per axis: points (uint64), min (float64), max (float64), boundary (uint8: 0 periodic, 1 box)
//   amplitudes                    row-major (re, im) float64 pairs
inline constexpr char kMagic[5] = {'B', 'S', 'I', 'M', '1'};

namespace detail {

template <class T>
void put_le(std::ostream& os, T value) {
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  os.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <class T>
T get_le(std::istream& is) {
  unsigned char bytes[sizeof(T)];
  is.read(reinterpret_cast<char*>(bytes), sizeof(T));
  require(static_cast<bool>(is), Errc::io, "truncated snapshot");
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  T value;
  std::memcpy(&value, bytes, sizeof(T));
  return value;
}

}  // namespace detail

inline void write_snapshot(std::ostream& os, const WaveFunction& psi) {
  os.write(kMagic, sizeof(kMagic));
  const Grid& g = psi.grid();
  detail::put_le<std::uint32_t>(os, static_cast<std::uint32_t>(g.dims()));
  for (const auto& a : g.axes()) {
    detail::put_le<std::uint64_t>(os, a.points);
    detail::put_le<double>(os, a.min);
    detail::put_le<double>(os, a.max);
    detail::put_le<std::uint8_t>(os, static_cast<std::uint8_t>(a.boundary));
  }
  for (const auto& c : psi.amplitudes()) {
    detail::put_le<double>(os, c.real());
    detail::put_le<double>(os, c.imag());
  }
  require(static_cast<bool>(os), Errc::io, "failed writing snapshot");
}

inline WaveFunction read_snapshot(std::istream& is) {
  char magic[sizeof(kMagic)];
  is.read(magic, sizeof(magic));
  require(static_cast<bool>(is) && std::memcmp(magic, kMagic, sizeof(kMagic)) == 0, Errc::io,
          "snapshot magic mismatch");
  const auto dims = detail::get_le<std::uint32_t>(is);
  require(dims >= 1 && dims <= kMaxDims, Errc::io, "snapshot dimension out of range");
  std::vector<AxisSpec> axes(dims);
  for (auto& a : axes) {
    a.points = detail::get_le<std::uint64_t>(is);
    a.min = detail::get_le<double>(is);
    a.max = detail::get_le<double>(is);
    const auto b = detail::get_le<std::uint8_t>(is);
    require(b <= 1, Errc::io, "unknown boundary tag");
    a.boundary = static_cast<Boundary>(b);
  }
  Grid grid(std::move(axes));
  std::vector<Complex> amp(grid.size());
  for (auto& c : amp) {
    const double re = detail::get_le<double>(is);
    const double im = detail::get_le<double>(is);
    c = Complex(re, im);
  }
  return WaveFunction(std::move(grid), std::move(amp));
}

inline void save_snapshot(const std::string& path, const WaveFunction& psi) {
  std::ofstream os(path, std::ios::binary);
  require(static_cast<bool>(os), Errc::io, "cannot open " + path);
  write_snapshot(os, psi);
}

inline WaveFunction load_snapshot(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  require(static_cast<bool>(is), Errc::io, "cannot open " + path);
  return read_snapshot(is);
}

/// 17 significant digits, enough to round-trip any double.
inline std::string format_real(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

}  // namespace bohm::io
