#include <CLI11.hpp>

#include <iostream>

#include "bohm/app/scenarios.hpp"

namespace {

std::string default_output(const bohm::app::ScenarioConfig& c) {
  if (!c.output.empty()) return c.output;
  return "out/" + (c.is_plan() ? std::string("multitime_plan") : c.scenario);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bohmian ensemble simulator"};
  app.require_subcommand(1);

  std::string config_path, out_dir, verify_dir;
  unsigned threads = 1;
  auto* run = app.add_subcommand("run", "run a scenario config and write its output directory");
  run->add_option("config", config_path, "scenario YAML")->required();
  run->add_option("--threads", threads, "worker threads (results do not depend on it)")->check(CLI::Range(1u, 256u));
  run->add_option("--output", out_dir, "output directory (default: the config's output, else out/<scenario>)");

  auto* verify = app.add_subcommand("verify", "check a run directory against its manifest");
  verify->add_option("dir", verify_dir, "run directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  if (*verify) {
    const auto r = bohm::app::verify_outputs(verify_dir);
    (r.code == 2 ? std::cerr : std::cout) << "verify: " << r.message << "\n";
    return r.code;
  }

  try {
    const auto cfg = bohm::app::load_config(config_path);
    const std::string dir = out_dir.empty() ? default_output(cfg) : out_dir;
    const int rc = bohm::app::run_scenario(cfg, threads, dir);
    std::cout << bohm::app::read_file(std::filesystem::path(dir) / bohm::app::kSummary);
    return rc;
  } catch (const bohm::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
