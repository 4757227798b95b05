#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace bohm {

enum class Errc {
  invalid_argument,
  invalid_grid,
  zero_norm,
  empty_axis_set,
  grid_mismatch,
  inconsistent_particle_dims,
  method_grid_mismatch,
  snapshot_gap,
  null_slice,
  axis_overlap,
  not_normalized,
  out_of_domain,
  binning_mismatch,
  branch_overlap,
  not_effective,
  preparation_failed,
  insufficient_runs,
  empty_selection,
  io,
  config,
};

constexpr std::string_view to_string(Errc code) {
  switch (code) {
    case Errc::invalid_argument: return "InvalidArgument";
    case Errc::invalid_grid: return "InvalidGrid";
    case Errc::zero_norm: return "ZeroNorm";
    case Errc::empty_axis_set: return "EmptyAxisSet";
    case Errc::grid_mismatch: return "GridMismatch";
    case Errc::inconsistent_particle_dims: return "InconsistentParticleDims";
    case Errc::method_grid_mismatch: return "MethodGridMismatch";
    case Errc::snapshot_gap: return "SnapshotGap";
    case Errc::null_slice: return "NullSlice";
    case Errc::axis_overlap: return "AxisOverlap";
    case Errc::not_normalized: return "NotNormalized";
    case Errc::out_of_domain: return "OutOfDomain";
    case Errc::binning_mismatch: return "BinningMismatch";
    case Errc::branch_overlap: return "BranchOverlap";
    case Errc::not_effective: return "NotEffective";
    case Errc::preparation_failed: return "PreparationFailed";
    case Errc::insufficient_runs: return "InsufficientRuns";
    case Errc::empty_selection: return "EmptySelection";
    case Errc::io: return "Io";
    case Errc::config: return "Config";
  }
  return "Unknown";
}

/// Every failure in the library is reported as an Error carrying one of the
/// codes above; the message names the offending input.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  [[nodiscard]] Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& what) { throw Error(code, what); }

inline void require(bool condition, Errc code, const std::string& what) {
  if (!condition) fail(code, what);
}

}  // namespace bohm
