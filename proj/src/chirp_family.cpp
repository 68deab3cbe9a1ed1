#include "tmi/chirp_family.hpp"

#include <cmath>
#include <numbers>

namespace tmi {

double phase_flatness(const Envelope& mode) {
  const Eigen::VectorXd I = mode.samples().cwiseAbs2();
  Index peak;
  const double top = I.maxCoeff(&peak);
  if (top <= 0) return 0;
  Index lo = peak, hi = peak;
  while (lo > 0 && I(lo - 1) >= 0.5 * top) --lo;
  while (hi + 1 < I.size() && I(hi + 1) >= 0.5 * top) ++hi;
  double ph = std::arg(mode(lo)), mn = ph, mx = ph;
  for (Index k = lo + 1; k <= hi; ++k) {
    double step = std::arg(mode(k)) - std::arg(mode(k - 1));
    step -= 2 * std::numbers::pi * std::round(step / (2 * std::numbers::pi));
    ph += step;
    mn = std::min(mn, ph);
    mx = std::max(mx, ph);
  }
  return mx - mn;
}

ChirpCheckRow run_fwm_cascade(const FwmCascadeBase& base,
                              std::optional<std::pair<double, double>> epsilon,
                              std::optional<double> gamma) {
  const double tau = base.tau();
  CascadeTemplate tpl{fwm_factory(base.grid, tau, tau, epsilon, base.kappa), 2, Configuration::RC,
                      0.0};
  ChirpCheckRow row;
  row.epsilon = epsilon;
  if (gamma) {
    row.gamma = *gamma;
  } else {
    CalibrationOptions copt;
    copt.extraction = base.extraction;
    row.gamma = calibrate_cascade(tpl, copt).gamma;
  }
  CascadeOptions co;
  co.extraction = base.extraction;
  co.composite_r_inputs = true;
  co.stage_analysis = true;
  row.report = run_cascade(build_cascade(tpl, row.gamma), co);
  const SchmidtData& sd = row.report.schmidt;
  row.selectivity = sd.selectivity;
  row.rho1_sq = sd.rho(0) * sd.rho(0);
  row.rho2_sq = sd.rho.size() > 1 ? sd.rho(1) * sd.rho(1) : 0;
  row.flat_s_in = phase_flatness(sd.modes_s_in.front());
  row.flat_r_out = phase_flatness(sd.modes_r_out.front());
  row.flat_s_out = phase_flatness(sd.modes_s_out.front());
  if (sd.has_r_modes()) row.flat_r_in = phase_flatness(sd.modes_r_in.front());
  return row;
}

std::vector<ChirpCheckRow> chirp_family_check(const FwmCascadeBase& base,
                                              const std::vector<std::pair<double, double>>& pairs,
                                              int jobs) {
  std::vector<ChirpCheckRow> rows(pairs.size());
  parallel_for(pairs.size(), jobs, [&](std::size_t k) { rows[k] = run_fwm_cascade(base, pairs[k]); });
  return rows;
}

}  // namespace tmi
