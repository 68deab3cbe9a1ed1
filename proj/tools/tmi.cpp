#include <cstdio>
#include <string>

#include <CLI11.hpp>

#include "tmi/runner.hpp"

int main(int argc, char** argv) {
  CLI::App app{"temporal-mode interferometry simulator"};
  app.require_subcommand(1);
  auto* run = app.add_subcommand("run", "execute the job described by a config file");
  std::string config;
  tmi::RunOptions opt;
  std::string out;
  run->add_option("config", config, "experiment config")->required();
  run->add_option("--jobs", opt.jobs, "worker threads for sweeps")->check(CLI::PositiveNumber);
  run->add_option("--out", out, "output directory");
  run->add_option("--grid-scale", opt.grid_scale, "multiply n_samples and the step count")
      ->check(CLI::PositiveNumber);
  app.set_version_flag("--version", std::string(tmi::kVersion));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }
  if (!out.empty()) opt.out_dir = out;

  try {
    const tmi::ExperimentConfig cfg = tmi::load_config(config);
    const tmi::RunManifest man = tmi::run(cfg, opt);
    std::printf("%s: %zu files in %s (%.1f s)\n", man.job.c_str(), man.files.size(),
                man.directory.c_str(), man.wall_seconds);
    return 0;
  } catch (const tmi::Error& e) {
    std::fprintf(stderr, "tmi: %s\n", e.what());
    return tmi::exit_code(e.code());
  } catch (const std::exception& e) {
    std::fprintf(stderr, "tmi: %s\n", e.what());
    return 3;
  }
}
