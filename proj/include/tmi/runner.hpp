#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "tmi/config.hpp"

namespace tmi {

inline constexpr std::string_view kVersion = "0.1.0";

struct RunOptions {
  int jobs = 1;
  std::optional<std::string> out_dir;  // beats TMI_OUTPUT_DIR, which beats the config
  int grid_scale = 1;
};

struct FileRecord {
  std::string name;
  std::string sha256;
  std::uintmax_t bytes = 0;
};

struct Diagnostics {
  std::optional<double> step_doubling_delta;  // max |G(1 substep) - G(2 substeps)| / max |G|
  std::optional<double> unitarity_residual;   // max |sigma - 1| of the stage-1 operator
  std::optional<double> basis_residual;       // 1 - captured output energy
};

struct RunManifest {
  std::string config_sha256;
  std::string version{kVersion};
  std::string job;
  std::string directory;
  Index n_samples = 0;
  double span = 0, dt = 0, dz = 0;
  Index n_steps = 0;
  int grid_scale = 1;
  double wall_seconds = 0;
  Diagnostics diagnostics;
  std::vector<FileRecord> files;
};

std::string resolve_output_dir(const ExperimentConfig& cfg, const RunOptions& opt);
std::string sha256_hex(std::string_view data);

// Executes the configured job and writes its files plus manifest.json.
RunManifest run(const ExperimentConfig& cfg, const RunOptions& opt = {});

}  // namespace tmi
