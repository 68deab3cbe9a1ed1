#include <doctest.h>

#include <cmath>
#include <numbers>

#include <unsupported/Eigen/FFT>

#include "tmi/timegrid.hpp"

using namespace tmi;

namespace {

// Composite Simpson rule, independent of the grid machinery.
template <typename F>
double simpson(F f, double a, double b, int m) {
  const double h = (b - a) / m;
  double s = f(a) + f(b);
  for (int k = 1; k < m; ++k) s += (k % 2 ? 4 : 2) * f(a + k * h);
  return s * h / 3;
}

double gauss(double t, double c, double tau) {
  return std::pow(std::numbers::pi * tau * tau, -0.25) * std::exp(-(t - c) * (t - c) / (2 * tau * tau));
}

}  // namespace

TEST_CASE("grid geometry") {
  const TimeGrid g = TimeGrid::centered(2.0, 4096);
  CHECK(g.t_min() == -1.0);
  CHECK(g.dt() == doctest::Approx(2.0 / 4096).epsilon(1e-15));
  CHECK(g.time(2048) == doctest::Approx(0.0));
  CHECK(g.nearest(g.time(17)) == 17);
  CHECK_THROWS_AS(TimeGrid(-1.0, 1.0, 1000), Error);
  CHECK_THROWS_AS(TimeGrid(1.0, -1.0, 1024), Error);
  CHECK_THROWS_AS(TimeGrid(-1.0, 1.0, 1), Error);
}

TEST_CASE("gaussian normalization and peak") {
  const TimeGrid g = TimeGrid::centered(2.0, 4096);
  const Envelope a = make_gaussian(g, 0.0, 0.05);
  CHECK(std::abs(energy(a) - 1) < 1e-10);
  CHECK(std::abs(a(2048).real() - std::pow(std::numbers::pi * 0.0025, -0.25)) < 1e-12);
}

TEST_CASE("gaussian overlap against quadrature") {
  const TimeGrid g = TimeGrid::centered(2.0, 4096);
  const double tau = 0.05;
  const Envelope a = make_gaussian(g, 0.0, tau);
  const Envelope b = make_gaussian(g, tau, tau);
  const double quad = simpson([&](double t) { return gauss(t, 0, tau) * gauss(t, tau, tau); }, -1, 1, 200000);
  CHECK(std::abs(quad - std::exp(-0.25)) < 1e-9);
  CHECK(std::abs(std::abs(inner_product(a, b)) - quad) < 1e-6);
}

TEST_CASE("gaussian preconditions") {
  const TimeGrid g = TimeGrid::centered(2.0, 1024);
  CHECK_THROWS_WITH_AS(make_gaussian(g, 0.0, 4 * g.dt()), doctest::Contains("UnresolvedPulse"), Error);
  CHECK_NOTHROW(make_gaussian(g, 0.0, 4.5 * g.dt()));
  try {
    make_gaussian(g, 0.9, 0.05);
    FAIL("expected ClippedSupport");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::ClippedSupport);
  }
}

TEST_CASE("hermite-gauss family") {
  const TimeGrid g = TimeGrid::centered(2.0, 4096);
  const double tau = 0.04, c = g.time(2100);
  const Envelope h0 = make_hermite_gauss(g, 0, tau, c);
  const Envelope ga = make_gaussian(g, c, tau);
  CHECK((h0.samples() - ga.samples()).cwiseAbs().maxCoeff() < 1e-12);

  const Eigen::MatrixXcd B = hermite_gauss_basis(g, 11, tau, c);
  const Eigen::MatrixXcd gram = B.adjoint() * B * g.dt();
  CHECK((gram - Eigen::MatrixXcd::Identity(11, 11)).cwiseAbs().maxCoeff() < 1e-8);

  const Envelope h1 = make_hermite_gauss(g, 1, tau, c);
  CHECK(std::abs(h1(2100)) < 1e-12);
  CHECK(std::abs(inner_product(h0, make_hermite_gauss(g, 2, tau, c))) < 1e-8);

  // Closed-form H_2 as an oracle for the recurrence.
  const Envelope h2 = make_hermite_gauss(g, 2, tau, c);
  double err = 0;
  for (Index k = 0; k < g.size(); ++k) {
    const double x = (g.time(k) - c) / tau;
    const double ref = (4 * x * x - 2) / std::sqrt(8.0) * gauss(g.time(k), c, tau);
    err = std::max(err, std::abs(h2(k).real() - ref));
  }
  CHECK(err < 1e-10);
}

TEST_CASE("inner product conventions") {
  const TimeGrid g = TimeGrid::centered(2.0, 1024);
  const Envelope f = 0.7 * make_gaussian(g, 0.1, 0.05);
  CHECK(std::abs(inner_product(f, f) - cplx(energy(f))) < 1e-14);
  const Envelope fi = cplx(0, 1) * f;
  CHECK(std::abs(inner_product(fi, f) - cplx(0, -energy(f))) < 1e-14);
  const Envelope other = make_gaussian(TimeGrid::centered(2.0, 2048), 0.0, 0.05);
  CHECK_THROWS_AS(inner_product(f, other), Error);
}

TEST_CASE("shift") {
  const TimeGrid g = TimeGrid::centered(2.0, 1024);
  const Envelope e = make_gaussian(g, 0.0, 0.05);
  CHECK(shift(e, 0).samples() == e.samples());
  const Envelope s = shift(e, 37);
  CHECK(std::abs(energy(s) - energy(e)) < 1e-12);
  // only the far tail that left the grid is lost
  CHECK((shift(s, -37).samples() - e.samples()).cwiseAbs().maxCoeff() < 1e-60);
  CHECK(s(512 + 37) == e(512));
  CHECK_THROWS_WITH_AS(shift(e, 480), doctest::Contains("EnergyLeak"), Error);
}

TEST_CASE("parseval") {
  const TimeGrid g = TimeGrid::centered(2.0, 1024);
  const Envelope e = make_hermite_gauss(g, 3, 0.06, 0.1) + cplx(0.3, 0.2) * make_gaussian(g, -0.2, 0.05);
  Eigen::FFT<double> fft;
  std::vector<cplx> in(e.samples().data(), e.samples().data() + e.size()), out;
  fft.fwd(out, in);
  double spec = 0;
  for (const auto& v : out) spec += std::norm(v);
  spec *= g.dt() / double(g.size());
  CHECK(std::abs(spec - energy(e)) < 1e-10);
}
