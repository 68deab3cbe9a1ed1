#pragma once

#include <optional>

#include "tmi/timegrid.hpp"

namespace tmi {

struct ChirpParams {
  double epsilon_p = 0;
  double epsilon_q = 0;
  int stage_index = 1;
  double gamma_bar = 0;  // gamma / (beta_r - beta_s), signed
  double gamma_l = 0;
  // Coefficient of the gamma*l*|A|^2 term; defaults to epsilon - [stage_index == 2].
  std::optional<double> kappa_p, kappa_q;

  double coefficient_p() const { return kappa_p.value_or(epsilon_p - (stage_index == 2 ? 1.0 : 0.0)); }
  double coefficient_q() const { return kappa_q.value_or(epsilon_q - (stage_index == 2 ? 1.0 : 0.0)); }
};

struct ChirpProfiles {
  Eigen::VectorXd alpha_p, alpha_q;  // radians, on the pump grid
  // Slopes of the pure linear-in-t terms (rad per walk-off unit), i.e. carrier shifts.
  double freq_shift_p = 0, freq_shift_q = 0;
};

// Each pump's profile is evaluated in its own centred coordinate, with the
// partner pump's intensity translated onto the same centre. The pumps are
// expected at their launch positions, colliding symmetrically over the stage.
ChirpProfiles prechirp_profiles(const ChirpParams& params, const Envelope& pump_p,
                                const Envelope& pump_q);

// Fraction of sum_d O(d), O(d) = sum_t |P(t)|^2 |Q(t-d)|^2, lying outside
// displacements d in [d_lo, d_hi] (samples).
double collision_outside_fraction(const Envelope& pump_p, const Envelope& pump_q, Index d_lo,
                                  Index d_hi);

inline constexpr double kCollisionTolerance = 1e-6;

}  // namespace tmi
