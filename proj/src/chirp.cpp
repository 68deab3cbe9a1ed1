#include "tmi/chirp.hpp"

#include <algorithm>

namespace tmi {

namespace {

struct Support {
  Index lo = 0, hi = -1;  // inclusive
};

Support support_of(const Eigen::VectorXd& intensity, double rel = 1e-30) {
  const double thr = rel * intensity.maxCoeff();
  Support s;
  Index k = 0;
  while (k < intensity.size() && !(intensity(k) > thr)) ++k;
  s.lo = k;
  k = intensity.size() - 1;
  while (k >= 0 && !(intensity(k) > thr)) --k;
  s.hi = k;
  return s;
}

Index peak_index(const Eigen::VectorXd& intensity) {
  Index k;
  intensity.maxCoeff(&k);
  return k;
}

}  // namespace

double collision_outside_fraction(const Envelope& pump_p, const Envelope& pump_q, Index d_lo,
                                  Index d_hi) {
  require_same_grid(pump_p.grid(), pump_q.grid());
  const Eigen::VectorXd P = pump_p.samples().cwiseAbs2();
  const Eigen::VectorXd Q = pump_q.samples().cwiseAbs2();
  const Support sp = support_of(P), sq = support_of(Q);
  if (sp.hi < sp.lo || sq.hi < sq.lo) return 0;
  if (d_lo > d_hi) std::swap(d_lo, d_hi);
  double inside = 0, total = 0;
  // O(d) = sum_t P(t) Q(t - d); nonzero for t - d inside the q support.
  for (Index d = sp.lo - sq.hi; d <= sp.hi - sq.lo; ++d) {
    const Index t0 = std::max(sp.lo, sq.lo + d), t1 = std::min(sp.hi, sq.hi + d);
    double o = 0;
    for (Index t = t0; t <= t1; ++t) o += P(t) * Q(t - d);
    total += o;
    if (d >= d_lo && d <= d_hi) inside += o;
  }
  return total > 0 ? (total - inside) / total : 0;
}

ChirpProfiles prechirp_profiles(const ChirpParams& params, const Envelope& pump_p,
                                const Envelope& pump_q) {
  require_same_grid(pump_p.grid(), pump_q.grid());
  const TimeGrid& g = pump_p.grid();
  const Index n = g.size();
  const double dt = g.dt();
  const Eigen::VectorXd P = pump_p.samples().cwiseAbs2();
  const Eigen::VectorXd Q = pump_q.samples().cwiseAbs2();
  const Index cp = peak_index(P), cq = peak_index(Q);

  // The formula assumes the whole collision happens inside the stage.
  const Index d0 = cq - cp;
  if (collision_outside_fraction(pump_p, pump_q, std::min<Index>(0, -2 * d0),
                                 std::max<Index>(0, -2 * d0)) > kCollisionTolerance)
    throw Error(Errc::CollisionIncomplete, "pump supports overlap at the stage boundaries");

  auto at = [n](const Eigen::VectorXd& v, Index k) { return (k >= 0 && k < n) ? v(k) : 0.0; };

  const double gb = params.gamma_bar, gl = params.gamma_l;
  const double P0 = P(cp), Q0 = Q(cq);
  ChirpProfiles out;
  out.alpha_p.resize(n);
  out.alpha_q.resize(n);
  out.freq_shift_p = 1.5 * gb * Q0;
  out.freq_shift_q = -1.5 * gb * P0;

  // p profile in p-centred time; the partner intensity is translated onto p's centre.
  double run = 0;
  for (Index k = 0; k < n; ++k) {
    const double u = double(k - cp) * dt;
    run += (at(Q, k - cp + cq) - P(k)) * dt;
    out.alpha_p(k) = -2 * gb * run - 1.5 * gb * P(k) * u + out.freq_shift_p * u +
                     params.coefficient_p() * gl * P(k);
  }
  run = 0;
  for (Index k = 0; k < n; ++k) {
    const double u = double(k - cq) * dt;
    run += (Q(k) - at(P, k - cq + cp)) * dt;
    out.alpha_q(k) = -2 * gb * run + 1.5 * gb * Q(k) * u + out.freq_shift_q * u +
                     params.coefficient_q() * gl * Q(k);
  }
  return out;
}

}  // namespace tmi
