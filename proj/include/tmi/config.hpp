#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "tmi/cascade.hpp"

namespace tmi {

enum class JobType { SingleStage, GreenExtract, Cascade, ZetaSweep, NSweep, ThetaScan, ChirpCheck };

std::string_view name(JobType t);

struct GridBlock {
  double span = 2;
  Index n_samples = 4096;
};

struct StageBlock {
  Mixing mixing = Mixing::ThreeWave;
  double zeta = 200;                     // TWM: tau_p = 1/zeta unless tau_p is given
  std::optional<double> tau_p, tau_q;    // FWM default: 1/(2*collision_ratio)
  double collision_ratio = 5;
  std::optional<double> gamma;           // fixed coupling; otherwise calibrated to target_ce
  std::optional<double> target_ce;       // default 0.5[1 - cos(pi/N)]
  Channel gvm_partner = Channel::S;
  int dispersion_sign = +1;
  bool chirp = true;                     // FWM pre-chirp on/off
  double chirp_eps_p = 2, chirp_eps_q = 0;
  std::optional<double> kappa_p, kappa_q;
  Index basis_size = 20;

  double pump_width() const;
  double pump_width_q() const;
};

struct CascadeBlock {
  int stages = 2;
  Configuration configuration = Configuration::RC;
  double theta = 0;
  bool r_input_modes = true;  // extract composite r-input columns too
  double theta_min = 0;
  double theta_max = 6.283185307179586;
  int theta_steps = 32;  // endpoint excluded
};

struct ScanBlock {
  std::vector<double> zeta_values{10, 25, 50, 100, 200};
  std::vector<int> n_values{2, 3, 4, 6, 8, 10};
  std::vector<double> gamma_values;  // single-stage scan; empty: no scan
  std::vector<std::pair<double, double>> chirp_pairs{{1, 0}, {2, 0}, {0.5, 0.5}};
};

struct OutputBlock {
  std::string directory = "tmi_out";
  bool json = true, csv = true;
  bool export_full_matrices = false;
};

struct ExperimentConfig {
  JobType job = JobType::Cascade;
  GridBlock grid;
  bool grid_given = false;
  StageBlock stage;
  CascadeBlock cascade;
  ScanBlock scan;
  OutputBlock output;
  std::string source;  // verbatim text, hashed into the manifest

  TimeGrid time_grid(int grid_scale = 1) const;
  double resolved_target_ce() const;
};

ExperimentConfig parse_config(std::string_view text);
ExperimentConfig load_config(const std::string& path);

// One unit of work as the runner schedules it.
struct JobUnit {
  std::string label;
  double theta = 0;
  double zeta = 0;
  int n_stages = 0;
  Configuration configuration = Configuration::RC;
  std::optional<double> gamma;
  std::optional<std::pair<double, double>> chirp;
};

std::vector<JobUnit> enumerate_jobs(const ExperimentConfig& cfg);

}  // namespace tmi
