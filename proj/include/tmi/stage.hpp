#pragma once

#include <optional>

#include "tmi/timegrid.hpp"

namespace tmi {

enum class Mixing { ThreeWave, FourWave };
enum class Channel { R, S };

// Pre-chirp recipe evaluated at launch from the stage's current gamma.
// kappa_p/kappa_q override the coefficient of the gamma*l*|A|^2 term, which
// otherwise defaults to epsilon - [stage_index == 2].
struct ChirpRecipe {
  double epsilon_p = 0;
  double epsilon_q = 0;
  int stage_index = 1;
  std::optional<double> kappa_p, kappa_q;
};

struct StageParams {
  TimeGrid grid;
  Mixing mixing = Mixing::ThreeWave;
  double beta_p = -0.5, beta_q = 0.5, beta_r = 0.5, beta_s = -0.5;
  double gamma = 0;
  double length = 1;
  int dispersion_sign = +1;
  Channel pump_partner = Channel::S;  // channel GVM-matched to pump p
  Envelope pump_p, pump_q;            // at stage-input positions; pump_q unused for TWM
  Eigen::VectorXd pump_chirp_p, pump_chirp_q;  // explicit phase profiles, empty = none
  std::optional<ChirpRecipe> chirp;
  bool require_complete_collision = false;
  bool allow_nonstandard_gvm = false;

  int delta_F() const { return mixing == Mixing::FourWave ? 1 : 0; }
  double gamma_bar() const { return gamma / (beta_r - beta_s); }
};

// Slowness of a channel, signed so that a field advances by beta*z in time.
double slowness(const StageParams& st, Channel c);
double pump_slowness_p(const StageParams& st);
double pump_slowness_q(const StageParams& st);

// Time at which a channel with slowness beta should start so it crosses t = 0 mid-stage.
inline double launch_center(double beta, double length) { return -beta * length / 2; }

double step_length(const StageParams& st);          // dz
Index step_count(const StageParams& st);            // N_z
int step_shift(const StageParams& st, double beta);  // samples per step

void validate(const StageParams& st);

StageParams make_twm_stage(const TimeGrid& grid, double tau_p, double gamma, int dispersion_sign = +1,
                           Channel pump_partner = Channel::S);
StageParams make_fwm_stage(const TimeGrid& grid, double tau_p, double tau_q, double gamma,
                           int dispersion_sign = +1, std::optional<ChirpRecipe> chirp = {});
StageParams with_gamma(StageParams st, double gamma);

// Pumps as they enter the medium: magnitude unchanged, pre-chirp phase applied.
struct LaunchedPumps {
  Envelope p, q;
  Eigen::VectorXd phase_p, phase_q;  // total applied phase (explicit + recipe)
  double freq_shift_p = 0, freq_shift_q = 0;
};
LaunchedPumps launch_pumps(const StageParams& st);

// Fraction of the pump-pump collision integral falling outside [0, l].
double collision_incompleteness(const StageParams& st);

// RMS-based Gaussian width of |A|^2 (exact tau for Gaussian pulses) and centroid.
double pulse_width(const Envelope& e);
double pulse_center(const Envelope& e);

}  // namespace tmi
