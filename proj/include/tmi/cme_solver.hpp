#pragma once

#include <functional>
#include <vector>

#include "tmi/stage.hpp"

namespace tmi {

struct PropagationOptions {
  int coupling_substeps = 1;   // RK4 substeps per advection step
  bool check_conservation = true;
  Index chunk_columns = 128;   // batch width for multi-column propagation
};

struct StageOutput {
  Envelope r, s;
  Envelope pump_p, pump_q;  // pumps at z = l (pump_q empty for TWM)
};

// Single pair of signals through one stage.
StageOutput propagate(const StageParams& st, const Envelope& input_r, const Envelope& input_s,
                      const PropagationOptions& opt = {});

// Column batch: r and s are n x K, overwritten with the z = l fields.
void propagate_columns(const StageParams& st, Eigen::MatrixXcd& r, Eigen::MatrixXcd& s,
                       const PropagationOptions& opt = {});

struct EnergySnapshot {
  double z;
  double energy_r, energy_s;
};

// n_snapshots >= 2 evenly spaced positions from z = 0 to z = l (rounded to whole steps).
std::vector<EnergySnapshot> snapshot_propagate(const StageParams& st, const Envelope& input_r,
                                               const Envelope& input_s, int n_snapshots,
                                               StageOutput* final_state = nullptr,
                                               const PropagationOptions& opt = {});

inline constexpr double kLeakTolerance = 1e-8;
inline constexpr double kConservationTolerance = 1e-5;

}  // namespace tmi
