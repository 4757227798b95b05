#pragma once

#include <yaml-cpp/yaml.h>

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "bohm/error.hpp"
#include "bohm/grid.hpp"
#include "bohm/propagator.hpp"

namespace bohm::app {

inline const std::vector<std::string>& scenario_names() {
  static const std::vector<std::string> names = {"free_gaussian",      "harmonic_coherent",  "two_slit",
                                                 "pointer_measurement", "nonequilibrium_box", "nonequilibrium_psi4"};
  return names;
}

inline constexpr std::string_view kPlanPrefix = "multitime_plan:";

/// Shortest decimal that reads back to the same double.
inline std::string shortest(double x) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, r.ptr);
}

/// Reads a mapping of scenario parameters and remembers every value used,
/// defaults included, in lookup order.
class Params {
 public:
  Params() = default;
  Params(YAML::Node node, std::string where) : node_(std::move(node)), where_(std::move(where)) {
    require(!node_ || node_.IsNull() || node_.IsMap(), Errc::config, where_ + " must be a mapping");
  }

  double real(const std::string& key, double def) {
    const double v = get<double>(key, def);
    used_.emplace_back(key, shortest(v));
    return v;
  }

  std::size_t count(const std::string& key, std::size_t def) {
    const auto v = get<long long>(key, static_cast<long long>(def));
    require(v >= 0, Errc::config, field(key) + " must be >= 0");
    used_.emplace_back(key, std::to_string(v));
    return static_cast<std::size_t>(v);
  }

  bool flag(const std::string& key, bool def) {
    const bool v = get<bool>(key, def);
    used_.emplace_back(key, v ? "true" : "false");
    return v;
  }

  std::string text(const std::string& key, const std::string& def) {
    auto v = get<std::string>(key, def);
    used_.emplace_back(key, v);
    return v;
  }

  [[nodiscard]] const std::vector<std::pair<std::string, std::string>>& used() const { return used_; }
  [[nodiscard]] std::string field(const std::string& key) const { return where_ + "." + key; }

 private:
  template <class T>
  T get(const std::string& key, T def) const {
    if (!node_ || !node_.IsMap() || !node_[key]) return def;
    try {
      return node_[key].as<T>();
    } catch (const YAML::Exception&) {
      fail(Errc::config, "field '" + field(key) + "' has the wrong type");
    }
  }

  YAML::Node node_;
  std::string where_;
  std::vector<std::pair<std::string, std::string>> used_;
};

struct ScenarioConfig {
  std::string scenario;              // registry key, or multitime_plan:<file>
  std::filesystem::path plan_file;   // resolved against the config's directory
  std::vector<AxisSpec> axes;
  Method method = Method::split_fourier;
  double dt = 0.01;
  std::size_t steps_per_snapshot = 1;
  std::vector<double> masses;
  double hbar = 1.0;
  std::size_t ensemble = 0;
  std::uint64_t seed = 0;
  double alpha = 0.01;
  double epsilon = 0.02;
  std::optional<std::size_t> recorded;  // trajectories kept; scenarios supply a default
  YAML::Node state;
  std::string output;

  [[nodiscard]] bool is_plan() const { return scenario.rfind(kPlanPrefix, 0) == 0; }
  [[nodiscard]] Grid grid() const { return Grid(axes); }
  [[nodiscard]] PropagatorConfig propagator() const { return {method, dt, steps_per_snapshot}; }
};

namespace detail {

template <class T>
T scalar(const YAML::Node& n, const std::string& name) {
  try {
    return n.as<T>();
  } catch (const YAML::Exception&) {
    fail(Errc::config, "field '" + name + "' has the wrong type");
  }
}

inline YAML::Node need(const YAML::Node& parent, const std::string& key, const std::string& name) {
  const YAML::Node n = parent[key];
  require(static_cast<bool>(n) && !n.IsNull(), Errc::config, "missing field '" + name + "'");
  return n;
}

}  // namespace detail

/// Parses and validates a scenario document. Every failure is an Errc::config
/// error naming the field.
inline ScenarioConfig parse_config(const YAML::Node& root, const std::filesystem::path& base_dir = {}) {
  using detail::need;
  using detail::scalar;
  require(root.IsMap(), Errc::config, "config must be a mapping");
  ScenarioConfig c;
  c.scenario = scalar<std::string>(need(root, "scenario", "scenario"), "scenario");
  if (c.is_plan()) {
    const std::string file = c.scenario.substr(kPlanPrefix.size());
    require(!file.empty(), Errc::config, "field 'scenario' names no plan file");
    c.plan_file = std::filesystem::path(file).is_absolute() ? std::filesystem::path(file) : base_dir / file;
    require(std::filesystem::exists(c.plan_file), Errc::config,
            "field 'scenario': plan file " + c.plan_file.string() + " does not exist");
  } else {
    const auto& names = scenario_names();
    require(std::find(names.begin(), names.end(), c.scenario) != names.end(), Errc::config,
            "field 'scenario': unknown scenario '" + c.scenario + "'");
  }

  const YAML::Node grid = need(root, "grid", "grid");
  const YAML::Node axes = need(grid, "axes", "grid.axes");
  require(axes.IsSequence() && axes.size() >= 1 && axes.size() <= kMaxDims, Errc::config,
          "field 'grid.axes' must list 1 to 4 axes");
  for (std::size_t k = 0; k < axes.size(); ++k) {
    const std::string at = "grid.axes[" + std::to_string(k) + "]";
    const YAML::Node a = axes[k];
    AxisSpec s;
    const auto pts = scalar<long long>(need(a, "points", at + ".points"), at + ".points");
    require(pts >= 2, Errc::config, "field '" + at + ".points' must be >= 2");
    s.points = static_cast<std::size_t>(pts);
    s.min = scalar<double>(need(a, "min", at + ".min"), at + ".min");
    s.max = scalar<double>(need(a, "max", at + ".max"), at + ".max");
    require(s.min < s.max, Errc::config, "field '" + at + "': min must be < max");
    const std::string b = a["boundary"] ? scalar<std::string>(a["boundary"], at + ".boundary") : "periodic";
    require(b == "periodic" || b == "box", Errc::config, "field '" + at + ".boundary' must be periodic or box");
    s.boundary = b == "box" ? Boundary::box : Boundary::periodic;
    c.axes.push_back(s);
  }
  const bool all_box = std::all_of(c.axes.begin(), c.axes.end(), [](const AxisSpec& a) { return a.boundary == Boundary::box; });

  const YAML::Node prop = root["propagator"];
  c.method = all_box ? Method::crank_nicolson : Method::split_fourier;
  if (prop && prop["method"]) {
    const auto m = scalar<std::string>(prop["method"], "propagator.method");
    require(m == "split_fourier" || m == "crank_nicolson", Errc::config,
            "field 'propagator.method' must be split_fourier or crank_nicolson");
    c.method = m == "crank_nicolson" ? Method::crank_nicolson : Method::split_fourier;
  }
  if (prop && prop["dt"]) c.dt = scalar<double>(prop["dt"], "propagator.dt");
  require(c.dt > 0.0, Errc::config, "field 'propagator.dt' must be > 0");
  if (prop && prop["steps_per_snapshot"]) {
    const auto s = scalar<long long>(prop["steps_per_snapshot"], "propagator.steps_per_snapshot");
    require(s >= 1, Errc::config, "field 'propagator.steps_per_snapshot' must be >= 1");
    c.steps_per_snapshot = static_cast<std::size_t>(s);
  }

  const YAML::Node ham = root["hamiltonian"];
  c.masses.assign(c.axes.size(), 1.0);
  if (ham && ham["masses"]) {
    const YAML::Node m = ham["masses"];
    require(m.IsSequence() && m.size() == c.axes.size(), Errc::config,
            "field 'hamiltonian.masses' needs one entry per axis");
    for (std::size_t k = 0; k < m.size(); ++k) {
      c.masses[k] = scalar<double>(m[k], "hamiltonian.masses");
      require(c.masses[k] > 0.0, Errc::config, "field 'hamiltonian.masses' must be > 0");
    }
  }
  if (ham && ham["hbar"]) c.hbar = scalar<double>(ham["hbar"], "hamiltonian.hbar");
  require(c.hbar > 0.0, Errc::config, "field 'hamiltonian.hbar' must be > 0");

  const auto m = scalar<long long>(need(root, "ensemble", "ensemble"), "ensemble");
  require(m >= 1, Errc::config, "field 'ensemble' must be >= 1");
  c.ensemble = static_cast<std::size_t>(m);
  const YAML::Node seed = need(root, "seed", "seed");
  c.seed = scalar<std::uint64_t>(seed, "seed");

  if (const YAML::Node th = root["thresholds"]) {
    if (th["alpha"]) c.alpha = scalar<double>(th["alpha"], "thresholds.alpha");
    if (th["epsilon"]) c.epsilon = scalar<double>(th["epsilon"], "thresholds.epsilon");
  }
  require(c.alpha > 0.0 && c.alpha < 1.0, Errc::config, "field 'thresholds.alpha' must lie in (0, 1)");
  require(c.epsilon > 0.0, Errc::config, "field 'thresholds.epsilon' must be > 0");
  if (root["recorded"]) {
    const auto r = scalar<long long>(root["recorded"], "recorded");
    require(r >= 0, Errc::config, "field 'recorded' must be >= 0");
    c.recorded = static_cast<std::size_t>(r);
  }
  c.state = root["state"] ? root["state"] : YAML::Node(YAML::NodeType::Map);
  if (root["output"]) c.output = scalar<std::string>(root["output"], "output");
  return c;
}

inline ScenarioConfig load_config(const std::filesystem::path& path) {
  YAML::Node root;
  try {
    root = YAML::LoadFile(path.string());
  } catch (const YAML::BadFile&) {
    fail(Errc::config, "cannot read config " + path.string());
  } catch (const YAML::Exception& e) {
    fail(Errc::config, "config " + path.string() + " does not parse: " + e.what());
  }
  return parse_config(root, path.parent_path());
}

/// The configuration as run, every default filled in. Thread count is left out:
/// it never changes results, and outputs must not depend on it.
inline std::string resolved_yaml(const ScenarioConfig& c, const std::vector<std::pair<std::string, std::string>>& state) {
  YAML::Emitter out;
  out << YAML::BeginMap;
  out << YAML::Key << "scenario" << YAML::Value << c.scenario;
  out << YAML::Key << "seed" << YAML::Value << c.seed;
  out << YAML::Key << "ensemble" << YAML::Value << c.ensemble;
  out << YAML::Key << "grid" << YAML::Value << YAML::BeginMap << YAML::Key << "axes" << YAML::Value << YAML::BeginSeq;
  for (const auto& a : c.axes) {
    out << YAML::Flow << YAML::BeginMap;
    out << YAML::Key << "points" << YAML::Value << a.points;
    out << YAML::Key << "min" << YAML::Value << shortest(a.min);
    out << YAML::Key << "max" << YAML::Value << shortest(a.max);
    out << YAML::Key << "boundary" << YAML::Value << (a.boundary == Boundary::box ? "box" : "periodic");
    out << YAML::EndMap;
  }
  out << YAML::EndSeq << YAML::EndMap;
  out << YAML::Key << "propagator" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "method" << YAML::Value
      << (c.method == Method::crank_nicolson ? "crank_nicolson" : "split_fourier");
  out << YAML::Key << "dt" << YAML::Value << shortest(c.dt);
  out << YAML::Key << "steps_per_snapshot" << YAML::Value << c.steps_per_snapshot;
  out << YAML::EndMap;
  out << YAML::Key << "hamiltonian" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "masses" << YAML::Value << YAML::Flow << YAML::BeginSeq;
  for (double m : c.masses) out << shortest(m);
  out << YAML::EndSeq;
  out << YAML::Key << "hbar" << YAML::Value << shortest(c.hbar);
  out << YAML::EndMap;
  out << YAML::Key << "thresholds" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "alpha" << YAML::Value << shortest(c.alpha);
  out << YAML::Key << "epsilon" << YAML::Value << shortest(c.epsilon);
  out << YAML::EndMap;
  out << YAML::Key << "recorded" << YAML::Value << c.recorded.value_or(0);
  out << YAML::Key << "state" << YAML::Value << YAML::BeginMap;
  for (const auto& [k, v] : state) out << YAML::Key << k << YAML::Value << v;
  out << YAML::EndMap;
  out << YAML::EndMap;
  return std::string(out.c_str()) + "\n";
}

}  // namespace bohm::app
