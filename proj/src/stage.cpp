#include "tmi/stage.hpp"

#include <cmath>

#include "tmi/chirp.hpp"

namespace tmi {

double slowness(const StageParams& st, Channel c) { return c == Channel::R ? st.beta_r : st.beta_s; }
double pump_slowness_p(const StageParams& st) { return st.beta_p; }
double pump_slowness_q(const StageParams& st) { return st.beta_q; }

static double max_slowness(const StageParams& st) {
  double m = std::max(std::abs(st.beta_r), std::abs(st.beta_s));
  m = std::max(m, std::abs(st.beta_p));
  if (st.mixing == Mixing::FourWave) m = std::max(m, std::abs(st.beta_q));
  return m;
}

double step_length(const StageParams& st) { return st.grid.dt() / max_slowness(st); }

Index step_count(const StageParams& st) {
  return static_cast<Index>(std::llround(st.length / step_length(st)));
}

int step_shift(const StageParams& st, double beta) {
  return static_cast<int>(std::lround(beta * step_length(st) / st.grid.dt()));
}

void validate(const StageParams& st) {
  if (!(st.gamma >= 0)) throw Error(Errc::InvalidArgument, "gamma must be non-negative");
  if (!(st.length > 0)) throw Error(Errc::InvalidArgument, "stage length must be positive");
  if (st.dispersion_sign != 1 && st.dispersion_sign != -1)
    throw Error(Errc::InvalidArgument, "dispersion_sign must be +1 or -1");
  if (std::abs(std::abs(st.beta_r - st.beta_s) - 1) > 1e-12)
    throw Error(Errc::InvalidArgument, "|beta_r - beta_s| must be 1 in walk-off units");
  if ((st.beta_r - st.beta_s) * st.dispersion_sign < 0)
    throw Error(Errc::InvalidArgument, "dispersion_sign disagrees with beta_r - beta_s");
  if (!st.allow_nonstandard_gvm) {
    const bool ok = st.mixing == Mixing::FourWave
                        ? (st.beta_p == st.beta_s && st.beta_q == st.beta_r)
                        : (st.beta_p == slowness(st, st.pump_partner));
    if (!ok) throw Error(Errc::InvalidArgument, "pump slownesses break the GVM-matching convention");
  }
  const double dz = step_length(st);
  const double steps = st.length / dz;
  if (std::abs(steps - std::round(steps)) > 1e-9 * steps)
    throw Error(Errc::InvalidArgument, "stage length is not a whole number of steps");
  for (double b : {st.beta_p, st.beta_q, st.beta_r, st.beta_s}) {
    const double sh = b * dz / st.grid.dt();
    if (std::abs(sh - std::round(sh)) > 1e-9)
      throw Error(Errc::InvalidArgument, "slowness does not give an integer shift per step");
  }
  if (!(st.pump_p.grid() == st.grid)) throw Error(Errc::GridMismatch, "pump p grid");
  if (st.mixing == Mixing::FourWave && !(st.pump_q.grid() == st.grid))
    throw Error(Errc::GridMismatch, "pump q grid");
  for (const auto* v : {&st.pump_chirp_p, &st.pump_chirp_q})
    if (v->size() != 0 && v->size() != st.grid.size())
      throw Error(Errc::GridMismatch, "chirp profile length");
}

StageParams make_twm_stage(const TimeGrid& grid, double tau_p, double gamma, int sign,
                           Channel partner) {
  StageParams st;
  st.grid = grid;
  st.mixing = Mixing::ThreeWave;
  st.dispersion_sign = sign;
  st.beta_r = 0.5 * sign;
  st.beta_s = -0.5 * sign;
  st.pump_partner = partner;
  st.beta_p = partner == Channel::S ? st.beta_s : st.beta_r;
  st.beta_q = partner == Channel::S ? st.beta_r : st.beta_s;
  st.gamma = gamma;
  st.pump_p = make_gaussian(grid, launch_center(st.beta_p, st.length), tau_p);
  validate(st);
  return st;
}

StageParams make_fwm_stage(const TimeGrid& grid, double tau_p, double tau_q, double gamma, int sign,
                           std::optional<ChirpRecipe> chirp) {
  StageParams st;
  st.grid = grid;
  st.mixing = Mixing::FourWave;
  st.dispersion_sign = sign;
  st.beta_r = 0.5 * sign;
  st.beta_s = -0.5 * sign;
  st.beta_p = st.beta_s;
  st.beta_q = st.beta_r;
  st.gamma = gamma;
  st.pump_p = make_gaussian(grid, launch_center(st.beta_p, st.length), tau_p);
  st.pump_q = make_gaussian(grid, launch_center(st.beta_q, st.length), tau_q);
  st.chirp = chirp;
  st.require_complete_collision = true;
  validate(st);
  return st;
}

StageParams with_gamma(StageParams st, double gamma) {
  st.gamma = gamma;
  return st;
}

LaunchedPumps launch_pumps(const StageParams& st) {
  const Index n = st.grid.size();
  LaunchedPumps lp;
  lp.p = st.pump_p;
  lp.phase_p = st.pump_chirp_p.size() ? st.pump_chirp_p : Eigen::VectorXd::Zero(n);
  if (st.mixing == Mixing::FourWave) {
    lp.q = st.pump_q;
    lp.phase_q = st.pump_chirp_q.size() ? st.pump_chirp_q : Eigen::VectorXd::Zero(n);
    if (st.chirp) {
      ChirpParams cp;
      cp.epsilon_p = st.chirp->epsilon_p;
      cp.epsilon_q = st.chirp->epsilon_q;
      cp.stage_index = st.chirp->stage_index;
      cp.kappa_p = st.chirp->kappa_p;
      cp.kappa_q = st.chirp->kappa_q;
      cp.gamma_bar = st.gamma_bar();
      cp.gamma_l = st.gamma * st.length;
      const ChirpProfiles prof = prechirp_profiles(cp, st.pump_p, st.pump_q);
      lp.phase_p += prof.alpha_p;
      lp.phase_q += prof.alpha_q;
      lp.freq_shift_p = prof.freq_shift_p;
      lp.freq_shift_q = prof.freq_shift_q;
    }
    for (Index k = 0; k < n; ++k) lp.q(k) *= std::polar(1.0, lp.phase_q(k));
  }
  for (Index k = 0; k < n; ++k) lp.p(k) *= std::polar(1.0, lp.phase_p(k));
  return lp;
}

double collision_incompleteness(const StageParams& st) {
  if (st.mixing != Mixing::FourWave) return 0;
  const Index N = step_count(st);
  const Index rel = Index(step_shift(st, st.beta_q) - step_shift(st, st.beta_p)) * N;
  return collision_outside_fraction(st.pump_p, st.pump_q, std::min<Index>(0, rel),
                                    std::max<Index>(0, rel));
}

double pulse_center(const Envelope& e) {
  const Eigen::VectorXd I = e.samples().cwiseAbs2();
  const double tot = I.sum();
  if (tot <= 0) return 0;
  return e.grid().times().dot(I) / tot;
}

double pulse_width(const Envelope& e) {
  const Eigen::VectorXd I = e.samples().cwiseAbs2();
  const double tot = I.sum();
  if (tot <= 0) return 0;
  const double c = pulse_center(e);
  const Eigen::VectorXd t = e.grid().times().array() - c;
  return std::sqrt(2 * t.cwiseAbs2().dot(I) / tot);
}

}  // namespace tmi
