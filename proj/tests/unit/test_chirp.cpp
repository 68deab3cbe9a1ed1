#include <doctest.h>

#include <cmath>
#include <numbers>

#include "tmi/chirp_family.hpp"

using namespace tmi;

namespace {

struct Pumps {
  TimeGrid g = TimeGrid::centered(2.0, 1024);
  double tau = 0.1;
  Envelope p = make_gaussian(g, 0.25, tau);
  Envelope q = make_gaussian(g, -0.25, tau);
};

double intensity(double t, double c, double tau) {
  return std::exp(-(t - c) * (t - c) / (tau * tau)) / (std::sqrt(std::numbers::pi) * tau);
}

}  // namespace

TEST_CASE("identical co-centred pumps leave only the local terms") {
  Pumps pp;
  ChirpParams cp;
  cp.epsilon_p = 0.7;
  cp.gamma_bar = 0.4;
  cp.gamma_l = 0.9;
  const ChirpProfiles pr = prechirp_profiles(cp, pp.p, pp.q);
  const Index c = pp.g.nearest(0.25);
  const double P0 = intensity(0.25, 0.25, pp.tau);
  double worst = 0;
  for (Index k = 0; k < pp.g.size(); ++k) {
    const double u = (k - c) * pp.g.dt(), P = intensity(u, 0, pp.tau);
    const double expect = -1.5 * 0.4 * P * u + 1.5 * 0.4 * P0 * u + 0.7 * 0.9 * P;
    worst = std::max(worst, std::abs(pr.alpha_p(k) - expect));
  }
  CHECK(worst < 1e-9);
}

TEST_CASE("value at the pump centre") {
  Pumps pp;
  ChirpParams cp;
  cp.epsilon_p = 1;
  cp.gamma_bar = 0.85;
  cp.gamma_l = 0.85;
  const ChirpProfiles pr = prechirp_profiles(cp, pp.p, pp.q);
  const double expect = 1 * 0.85 / std::sqrt(std::numbers::pi * pp.tau * pp.tau);
  CHECK(std::abs(pr.alpha_p(pp.g.nearest(0.25)) - expect) < 1e-9);
  CHECK(std::abs(pr.alpha_q(pp.g.nearest(-0.25))) < 1e-9);
}

TEST_CASE("second-stage coefficients") {
  ChirpParams cp;
  cp.epsilon_p = 2;
  cp.epsilon_q = 0;
  cp.stage_index = 2;
  CHECK(cp.coefficient_p() == 1.0);
  CHECK(cp.coefficient_q() == -1.0);
  Pumps pp;
  cp.gamma_bar = -0.6;
  cp.gamma_l = 0.6;
  ChirpParams zero = cp;
  zero.kappa_p = 0.0;
  zero.kappa_q = 0.0;
  const ChirpProfiles a = prechirp_profiles(cp, pp.p, pp.q), b = prechirp_profiles(zero, pp.p, pp.q);
  const Eigen::VectorXd P = pp.p.samples().cwiseAbs2(), Q = pp.q.samples().cwiseAbs2();
  CHECK(((a.alpha_p - b.alpha_p) - 1.0 * 0.6 * P).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(((a.alpha_q - b.alpha_q) + 1.0 * 0.6 * Q).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("frequency shifts flip between reversed stages") {
  const TimeGrid g = TimeGrid::centered(2.0, 1024);
  ChirpRecipe r1{2, 0, 1, {}, {}}, r2{2, 0, 2, {}, {}};
  const StageParams s1 = make_fwm_stage(g, 0.1, 0.1, 0.8, +1, r1);
  const StageParams s2 = make_fwm_stage(g, 0.1, 0.1, 0.8, -1, r2);
  const LaunchedPumps a = launch_pumps(s1), b = launch_pumps(s2);
  CHECK(a.freq_shift_p != 0.0);
  CHECK(a.freq_shift_p == doctest::Approx(-b.freq_shift_p));
  CHECK(a.freq_shift_q == doctest::Approx(-b.freq_shift_q));
  CHECK(std::abs(energy(a.p) - energy(s1.pump_p)) < 1e-12);
  CHECK(std::abs(energy(a.q) - energy(s1.pump_q)) < 1e-12);
  CHECK(a.phase_p.allFinite());
}

TEST_CASE("profiles vanish without chirp or coupling") {
  Pumps pp;
  ChirpParams cp;
  cp.gamma_bar = 0;
  cp.gamma_l = 0.5;
  const ChirpProfiles pr = prechirp_profiles(cp, pp.p, pp.q);
  CHECK(pr.alpha_p.cwiseAbs().maxCoeff() == 0.0);
  CHECK(pr.alpha_q.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("collision completeness") {
  Pumps pp;
  const Index rel = 2 * (pp.g.nearest(-0.25) - pp.g.nearest(0.25));
  CHECK(collision_outside_fraction(pp.p, pp.q, 0, -rel) < kCollisionTolerance);
  const TimeGrid g = TimeGrid::centered(8.0, 4096);
  const Envelope p = make_gaussian(g, 0.25, 0.3), q = make_gaussian(g, -0.25, 0.3);
  ChirpParams cp;
  cp.gamma_bar = 0.5;
  CHECK_THROWS_WITH_AS(prechirp_profiles(cp, p, q), doctest::Contains("CollisionIncomplete"), Error);
}

TEST_CASE("phase flatness measure") {
  const TimeGrid g = TimeGrid::centered(2.0, 1024);
  Envelope e = make_gaussian(g, 0.0, 0.1);
  CHECK(phase_flatness(e) < 1e-12);
  // quadratic phase 50 t^2 over a FWHM of 2 sqrt(ln 2) tau in intensity
  for (Index k = 0; k < g.size(); ++k) e.samples()(k) *= std::polar(1.0, 50 * g.time(k) * g.time(k));
  const double half = std::sqrt(std::log(2.0)) * 0.1;
  CHECK(phase_flatness(e) == doctest::Approx(50 * half * half).epsilon(0.03));
}
