#pragma once

#include <optional>
#include <utility>
#include <vector>

#include "tmi/cascade.hpp"
#include "tmi/chirp.hpp"

namespace tmi {

// Two-stage RC four-wave-mixing interferometer with equal Gaussian pumps.
// Default grid keeps the standard dt but doubles the span: higher HG orders at width 0.1
// need more than the 0.75 of headroom a span-2 grid leaves around the launch centres.
struct FwmCascadeBase {
  TimeGrid grid = TimeGrid::centered(4.0, 8192);
  double collision_ratio = 5;  // T_w / (tau_p + tau_q)
  ExtractionOptions extraction;
  std::optional<std::pair<double, double>> kappa;  // explicit gamma*l|A|^2 coefficients

  double tau() const { return 1 / (2 * collision_ratio); }
};

struct ChirpCheckRow {
  std::optional<std::pair<double, double>> epsilon;  // empty: no pre-chirp
  double gamma = 0;
  double selectivity = 0, rho1_sq = 0, rho2_sq = 0;
  // Peak-to-peak phase (rad) over the intensity FWHM of each first composite mode.
  double flat_r_in = 0, flat_r_out = 0, flat_s_in = 0, flat_s_out = 0;
  CascadeReport report;
};

ChirpCheckRow run_fwm_cascade(const FwmCascadeBase& base,
                              std::optional<std::pair<double, double>> epsilon,
                              std::optional<double> gamma = {});

std::vector<ChirpCheckRow> chirp_family_check(const FwmCascadeBase& base,
                                              const std::vector<std::pair<double, double>>& pairs,
                                              int jobs = 1);

double phase_flatness(const Envelope& mode);

}  // namespace tmi
