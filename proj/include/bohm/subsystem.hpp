#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <vector>

#include "bohm/error.hpp"
#include "bohm/grid.hpp"
#include "bohm/guidance.hpp"
#include "bohm/interp.hpp"
#include "bohm/propagator.hpp"
#include "bohm/wavefunction.hpp"

namespace bohm {

/// Partition of the grid axes into a subsystem (x) and its environment (y).
struct SubsystemSplit {
  std::vector<std::size_t> x_axes;
  std::vector<std::size_t> y_axes;

  /// x = the listed axes, y = the rest in ascending order.
  static SubsystemSplit of(std::size_t dims, std::vector<std::size_t> x_axes) {
    SubsystemSplit s;
    s.y_axes = complement_axes(dims, x_axes);
    s.x_axes = std::move(x_axes);
    s.validate(dims);
    return s;
  }

  void validate(std::size_t dims) const {
    require(!x_axes.empty() && !y_axes.empty(), Errc::invalid_argument, "both sides of a split must be non-empty");
    std::vector<int> seen(dims, 0);
    for (auto k : x_axes) {
      require(k < dims, Errc::invalid_argument, "split axis out of range");
      ++seen[k];
    }
    for (auto k : y_axes) {
      require(k < dims, Errc::invalid_argument, "split axis out of range");
      ++seen[k];
    }
    require(std::all_of(seen.begin(), seen.end(), [](int s) { return s == 1; }), Errc::invalid_argument,
            "split axes must be disjoint and exhaustive");
  }
};

/// Full-grid flat offsets of every cell of grid.subgrid(axes), in the subgrid's
/// row-major order.
inline std::vector<std::size_t> subgrid_offsets(const Grid& grid, std::span<const std::size_t> axes) {
  const Grid sub = grid.subgrid(axes);
  std::vector<std::size_t> out(sub.size());
  for (std::size_t i = 0; i < sub.size(); ++i) {
    std::size_t flat = 0;
    for (std::size_t a = 0; a < axes.size(); ++a) flat += sub.index_along(i, a) * grid.stride(axes[a]);
    out[i] = flat;
  }
  return out;
}

namespace detail {

/// Psi(x, Y) over the x-cells, Y entering by multilinear interpolation across
/// the y-axes (zero at box walls).
inline std::vector<Complex> slice(std::span<const Complex> field, const Grid& grid, const SubsystemSplit& split,
                                  const Configuration& y) {
  require(y.size() == split.y_axes.size(), Errc::invalid_argument, "environment configuration has wrong dimension");
  const Grid ygrid = grid.subgrid(split.y_axes);
  const auto xoff = subgrid_offsets(grid, split.x_axes);
  const auto yoff = subgrid_offsets(grid, split.y_axes);
  const Stencil st = make_stencil(ygrid, y.coords(), WallMode::zero);
  std::vector<Complex> out(xoff.size());
  for (std::size_t c = 0; c < st.count; ++c) {
    if (st.cells[c] == Stencil::kNoCell || st.weights[c] == 0.0) continue;
    const std::size_t base = yoff[st.cells[c]];
    const double w = st.weights[c];
    for (std::size_t i = 0; i < xoff.size(); ++i) out[i] += w * field[base + xoff[i]];
  }
  return out;
}

}  // namespace detail

/// Unnormalized slice Psi(., Y) on the x-grid; throws NullSlice when its squared
/// norm, relative to |Psi|^2, is below 1e-14.
inline WaveFunction conditional_slice(const WaveFunction& psi, const SubsystemSplit& split, const Configuration& y) {
  split.validate(psi.grid().dims());
  const Grid xgrid = psi.grid().subgrid(split.x_axes);
  WaveFunction out(xgrid, detail::slice(psi.amplitudes(), psi.grid(), split, y), psi.time());
  const double total = psi.norm2();
  require(total > 0.0, Errc::zero_norm, "universal wave function has zero norm");
  require(out.norm2() / total >= 1e-14, Errc::null_slice, "conditional wave function undefined at this Y");
  return out;
}

/// psi(x) = Psi(x, Y), normalized.
inline WaveFunction conditional_wavefunction(const WaveFunction& psi, const SubsystemSplit& split,
                                             const Configuration& y) {
  return normalize(conditional_slice(psi, split, y));
}

/// Connected region of the thresholded environment marginal.
struct SupportComponent {
  std::vector<std::size_t> cells;  // y-grid flat indices, ascending
  double weight = 0.0;             // marginal mass of the component
  double gap = 0.0;                // smallest marginal density on cells bordering the component
};

/// Components of {marginal > eps} under face adjacency (periodic axes wrap),
/// ordered by their lowest cell index.
inline std::vector<SupportComponent> support_components(const Density& marginal, double eps) {
  const Grid& g = marginal.grid();
  const std::size_t n = g.size();
  std::vector<std::int64_t> label(n, -1);
  std::vector<SupportComponent> comps;
  std::vector<std::size_t> stack;
  auto neighbours = [&](std::size_t i, auto&& visit) {
    for (std::size_t k = 0; k < g.dims(); ++k) {
      const std::size_t j = g.index_along(i, k);
      const std::size_t ext = g.extent(k);
      const std::size_t s = g.stride(k);
      const bool periodic = g.axis(k).boundary == Boundary::periodic;
      if (j > 0)
        visit(i - s);
      else if (periodic)
        visit(i + (ext - 1) * s);
      if (j + 1 < ext)
        visit(i + s);
      else if (periodic)
        visit(i - (ext - 1) * s);
    }
  };
  for (std::size_t start = 0; start < n; ++start) {
    if (label[start] >= 0 || !(marginal[start] > eps)) continue;
    SupportComponent comp;
    const auto id = static_cast<std::int64_t>(comps.size());
    label[start] = id;
    stack.push_back(start);
    while (!stack.empty()) {
      const std::size_t i = stack.back();
      stack.pop_back();
      comp.cells.push_back(i);
      neighbours(i, [&](std::size_t j) {
        if (label[j] < 0 && marginal[j] > eps) {
          label[j] = id;
          stack.push_back(j);
        }
      });
    }
    std::sort(comp.cells.begin(), comp.cells.end());
    double mass = 0.0;
    double gap = std::numeric_limits<double>::infinity();
    for (auto i : comp.cells) {
      mass += marginal[i];
      neighbours(i, [&](std::size_t j) {
        if (label[j] != id) gap = std::min(gap, marginal[j]);
      });
    }
    comp.weight = mass * g.cell_volume();
    comp.gap = std::isfinite(gap) ? gap : 0.0;
    comps.push_back(std::move(comp));
  }
  return comps;
}

/// Environment marginal of |Psi|^2.
inline Density environment_marginal(const WaveFunction& psi, const SubsystemSplit& split) {
  return marginal(density(normalize(psi)), split.y_axes);
}

struct EffectiveThresholds {
  double support_eps = 1e-10;
  double fidelity_delta = 1e-6;
  std::size_t samples = 8;
};

struct EffectiveWfReport {
  enum class Status { effective, conditional_only, undefined };
  Status status = Status::undefined;
  std::optional<WaveFunction> psi;  // effective wf, or the conditional wf when conditional_only
  double branch_weight = 0.0;
  double support_gap = 0.0;
  int branch_id = -1;
  double min_fidelity = 0.0;  // smallest pairwise fidelity among sampled slices
};

/// Decides whether the x-system has an effective wave function at environment Y:
/// the component of the thresholded environment marginal containing Y must carry
/// (up to phase) a single conditional wave function.
inline EffectiveWfReport detect_effective_wavefunction(const WaveFunction& psi, const SubsystemSplit& split,
                                                       const Configuration& y, const EffectiveThresholds& th = {}) {
  split.validate(psi.grid().dims());
  EffectiveWfReport rep;
  WaveFunction cond;
  try {
    cond = conditional_wavefunction(psi, split, y);
  } catch (const Error& e) {
    if (e.code() != Errc::null_slice) throw;
    return rep;
  }
  const Density ymarg = environment_marginal(psi, split);
  const Grid& yg = ymarg.grid();
  const auto comps = support_components(ymarg, th.support_eps);

  std::ptrdiff_t ycell = yg.cell_of(y);
  if (ycell < 0) {
    // between a box wall and the outermost node: use the nearest cell
    Configuration c = y;
    for (std::size_t k = 0; k < yg.dims(); ++k) c[k] = std::clamp(c[k], yg.axis(k).cell_lo(), yg.axis(k).cell_hi());
    ycell = yg.cell_of(c);
  }
  rep.status = EffectiveWfReport::Status::conditional_only;
  rep.psi = cond;
  for (std::size_t id = 0; id < comps.size(); ++id) {
    const auto& cells = comps[id].cells;
    if (ycell < 0 || !std::binary_search(cells.begin(), cells.end(), static_cast<std::size_t>(ycell))) continue;
    rep.branch_id = static_cast<int>(id);
    rep.branch_weight = std::clamp(comps[id].weight, 0.0, 1.0);
    rep.support_gap = comps[id].gap;

    // sample cells at the (k + 1/2)/K quantiles of the component's marginal mass
    const std::size_t k_samples = std::max<std::size_t>(1, std::min(th.samples, cells.size()));
    std::vector<std::size_t> picks;
    double total = 0.0;
    for (auto c : cells) total += ymarg[c];
    double acc = 0.0;
    std::size_t next = 0;
    for (auto c : cells) {
      acc += ymarg[c];
      while (next < k_samples && acc >= (static_cast<double>(next) + 0.5) / static_cast<double>(k_samples) * total) {
        if (picks.empty() || picks.back() != c) picks.push_back(c);
        ++next;
      }
    }
    std::vector<WaveFunction> slices;
    for (auto c : picks) {
      try {
        slices.push_back(conditional_wavefunction(psi, split, yg.node(c)));
      } catch (const Error& e) {
        if (e.code() != Errc::null_slice) throw;
      }
    }
    if (slices.empty()) return rep;
    double min_fid = 1.0;
    for (std::size_t a = 0; a < slices.size(); ++a)
      for (std::size_t b = a + 1; b < slices.size(); ++b) min_fid = std::min(min_fid, fidelity(slices[a], slices[b]));
    min_fid = std::min(min_fid, fidelity(slices.front(), cond));
    rep.min_fidelity = min_fid;
    if (min_fid < 1.0 - th.fidelity_delta) return rep;

    // average with each slice's phase aligned to the first
    std::vector<Complex> avg(slices.front().size());
    for (const auto& s : slices) {
      const Complex ov = inner_product(slices.front(), s);
      const Complex gauge = std::abs(ov) > 0.0 ? std::conj(ov) / std::abs(ov) : Complex(1.0, 0.0);
      for (std::size_t i = 0; i < avg.size(); ++i) avg[i] += gauge * s[i];
    }
    rep.psi = normalize(WaveFunction(slices.front().grid(), std::move(avg), psi.time()));
    rep.status = EffectiveWfReport::Status::effective;
    return rep;
  }
  return rep;
}

/// Product of factors placed on the given target axes (groups must tile the
/// target axes 0..D-1 without overlap), normalized.
inline WaveFunction product_compose(std::span<const WaveFunction> parts,
                                    const std::vector<std::vector<std::size_t>>& axis_groups) {
  require(!parts.empty(), Errc::invalid_argument, "no factors");
  require(parts.size() == axis_groups.size(), Errc::invalid_argument, "one axis group per factor");
  std::size_t dims = 0;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    require(axis_groups[p].size() == parts[p].grid().dims(), Errc::invalid_argument,
            "axis group size must match the factor's dimension");
    dims += axis_groups[p].size();
  }
  require(dims <= kMaxDims, Errc::invalid_grid, "composite dimension exceeds 4");
  std::vector<AxisSpec> axes(dims);
  std::vector<int> seen(dims, 0);
  for (std::size_t p = 0; p < parts.size(); ++p) {
    for (std::size_t a = 0; a < axis_groups[p].size(); ++a) {
      const auto k = axis_groups[p][a];
      require(k < dims, Errc::axis_overlap, "axis groups do not tile the target grid");
      require(seen[k]++ == 0, Errc::axis_overlap, "axis assigned to two factors");
      axes[k] = parts[p].grid().axis(a);
    }
  }
  Grid grid(std::move(axes));
  std::vector<std::vector<std::size_t>> offsets;
  for (const auto& grp : axis_groups) offsets.push_back(subgrid_offsets(grid, grp));
  std::vector<Complex> amp(grid.size(), Complex(1.0, 0.0));
  for (std::size_t p = 0; p < parts.size(); ++p) {
    const auto rest = complement_axes(dims, axis_groups[p]);
    const auto rest_off = rest.empty() ? std::vector<std::size_t>{0} : subgrid_offsets(grid, rest);
    for (std::size_t i = 0; i < offsets[p].size(); ++i)
      for (auto r : rest_off) amp[offsets[p][i] + r] *= parts[p][i];
  }
  return normalize(WaveFunction(std::move(grid), std::move(amp), parts.front().time()));
}

/// Factors placed on consecutive axes in the order given.
inline WaveFunction product_compose(std::span<const WaveFunction> parts) {
  std::vector<std::vector<std::size_t>> groups;
  std::size_t next = 0;
  for (const auto& p : parts) {
    std::vector<std::size_t> g(p.grid().dims());
    std::iota(g.begin(), g.end(), next);
    next += g.size();
    groups.push_back(std::move(g));
  }
  return product_compose(parts, groups);
}

/// Masses of the x-axes, for building the subsystem Hamiltonian.
inline Hamiltonian subsystem_hamiltonian(const Hamiltonian& h, const SubsystemSplit& split,
                                         std::vector<double> potential = {}) {
  Hamiltonian out;
  for (auto k : split.x_axes) out.masses.push_back(h.masses[k]);
  out.hbar = h.hbar;
  out.potential = std::move(potential);
  return out;
}

/// max over x-cells of |v_x(full Psi at (x, Y)) - v(conditional psi)(x)|, over
/// cells where the conditional density is at least epsilon. The full-space
/// field at off-node Y is formed from the same y-interpolation as the slice.
inline double conditional_velocity_consistency(const WaveFunction& psi, const Hamiltonian& h,
                                               const SubsystemSplit& split, const Configuration& y,
                                               const Regularization& reg = {}) {
  split.validate(psi.grid().dims());
  h.validate(psi.grid());
  const WaveFunction cond = conditional_wavefunction(psi, split, y);
  const Hamiltonian hx = subsystem_hamiltonian(h, split);
  const VelocityField vx = velocity_field(cond, hx, reg);
  const std::vector<Complex> s = detail::slice(psi.amplitudes(), psi.grid(), split, y);

  double worst = 0.0;
  for (std::size_t a = 0; a < split.x_axes.size(); ++a) {
    const std::size_t k = split.x_axes[a];
    const auto [d_re, d_im] = gradient_parts(psi, k);
    std::vector<Complex> d(d_re.size());
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = Complex(d_re[i], d_im[i]);
    const std::vector<Complex> ds = detail::slice(d, psi.grid(), split, y);
    const double c = h.hbar / h.masses[k];
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (vx.is_capped(i) || std::norm(s[i]) == 0.0) continue;
      const double v_full = c * (s[i].real() * ds[i].imag() - s[i].imag() * ds[i].real()) / std::norm(s[i]);
      worst = std::max(worst, std::abs(v_full - vx.components[a][i]));
    }
  }
  return worst;
}

}  // namespace bohm
