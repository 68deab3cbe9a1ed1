#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <complex>
#include <numbers>
#include <string>

#include "tmi/error.hpp"

namespace tmi {

using Eigen::Index;

// Uniform sample grid t_k = t_min + k*dt, k = 0..n-1, dt = (t_max - t_min)/n.
// Times are in walk-off units.
template <typename Real>
class BasicTimeGrid {
 public:
  BasicTimeGrid() = default;
  BasicTimeGrid(Real t_min, Real t_max, Index n_samples)
      : t_min_(t_min), t_max_(t_max), n_(n_samples) {
    if (!(t_max > t_min))
      throw Error(Errc::InvalidArgument, "time grid needs t_max > t_min");
    if (n_samples < 2 || (n_samples & (n_samples - 1)) != 0)
      throw Error(Errc::InvalidArgument,
                  "n_samples must be a power of two >= 2, got " + std::to_string(n_samples));
    dt_ = (t_max - t_min) / Real(n_samples);
  }

  // Grid of `span` walk-off windows centred on t = 0.
  static BasicTimeGrid centered(Real span, Index n_samples) {
    return BasicTimeGrid(-span / 2, span / 2, n_samples);
  }

  Real t_min() const { return t_min_; }
  Real t_max() const { return t_max_; }
  Real span() const { return t_max_ - t_min_; }
  Index size() const { return n_; }
  Real dt() const { return dt_; }
  Real time(Index k) const { return t_min_ + dt_ * Real(k); }
  Index nearest(Real t) const { return static_cast<Index>(std::llround((t - t_min_) / dt_)); }

  Eigen::Matrix<Real, Eigen::Dynamic, 1> times() const {
    Eigen::Matrix<Real, Eigen::Dynamic, 1> t(n_);
    for (Index k = 0; k < n_; ++k) t(k) = time(k);
    return t;
  }

  bool operator==(const BasicTimeGrid& o) const {
    return t_min_ == o.t_min_ && t_max_ == o.t_max_ && n_ == o.n_;
  }

 private:
  Real t_min_ = -1, t_max_ = 1;
  Index n_ = 2;
  Real dt_ = 1;
};

template <typename Real>
void require_same_grid(const BasicTimeGrid<Real>& a, const BasicTimeGrid<Real>& b) {
  if (!(a == b)) throw Error(Errc::GridMismatch, "envelopes live on different grids");
}

// Complex field envelope; energy = sum |A|^2 dt.
template <typename Real>
class BasicEnvelope {
 public:
  using Scalar = std::complex<Real>;
  using Samples = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  BasicEnvelope() = default;
  explicit BasicEnvelope(const BasicTimeGrid<Real>& grid)
      : grid_(grid), samples_(Samples::Zero(grid.size())) {}
  BasicEnvelope(const BasicTimeGrid<Real>& grid, Samples samples)
      : grid_(grid), samples_(std::move(samples)) {
    if (samples_.size() != grid_.size())
      throw Error(Errc::InvalidArgument, "sample count does not match grid");
  }

  const BasicTimeGrid<Real>& grid() const { return grid_; }
  const Samples& samples() const { return samples_; }
  Samples& samples() { return samples_; }
  Index size() const { return samples_.size(); }
  Scalar operator()(Index k) const { return samples_(k); }
  Scalar& operator()(Index k) { return samples_(k); }

  BasicEnvelope& operator*=(Scalar c) { samples_ *= c; return *this; }
  BasicEnvelope& operator+=(const BasicEnvelope& o) {
    require_same_grid(grid_, o.grid_);
    samples_ += o.samples_;
    return *this;
  }
  BasicEnvelope& operator-=(const BasicEnvelope& o) {
    require_same_grid(grid_, o.grid_);
    samples_ -= o.samples_;
    return *this;
  }

 private:
  BasicTimeGrid<Real> grid_;
  Samples samples_;
};

template <typename Real>
BasicEnvelope<Real> operator*(std::complex<Real> c, BasicEnvelope<Real> e) { return e *= c; }
template <typename Real>
BasicEnvelope<Real> operator*(Real c, BasicEnvelope<Real> e) { return e *= std::complex<Real>(c); }
template <typename Real>
BasicEnvelope<Real> operator+(BasicEnvelope<Real> a, const BasicEnvelope<Real>& b) { return a += b; }
template <typename Real>
BasicEnvelope<Real> operator-(BasicEnvelope<Real> a, const BasicEnvelope<Real>& b) { return a -= b; }

using TimeGrid = BasicTimeGrid<double>;
using Envelope = BasicEnvelope<double>;
using cplx = std::complex<double>;

template <typename Real>
std::complex<Real> inner_product(const BasicEnvelope<Real>& a, const BasicEnvelope<Real>& b) {
  require_same_grid(a.grid(), b.grid());
  return a.samples().dot(b.samples()) * a.grid().dt();  // dot() conjugates the left side
}

template <typename Real>
Real energy(const BasicEnvelope<Real>& e) {
  return e.samples().squaredNorm() * e.grid().dt();
}

template <typename Real>
BasicEnvelope<Real> normalized(BasicEnvelope<Real> e) {
  const Real en = energy(e);
  if (en > 0) e *= std::complex<Real>(1 / std::sqrt(en));
  return e;
}

// Boundary amplitude relative to peak must not exceed this.
inline constexpr double kClipTolerance = 1e-8;

namespace detail {
template <typename Real, typename Vec>
void check_support(const Vec& s, Real peak, const char* what) {
  const Real edge = std::max(std::abs(s(0)), std::abs(s(s.size() - 1)));
  if (edge > Real(kClipTolerance) * peak)
    throw Error(Errc::ClippedSupport, std::string(what) + " does not fit inside the grid");
}
}  // namespace detail

// A(t) = (pi tau^2)^(-1/4) exp(-(t-c)^2 / (2 tau^2)), unit energy.
template <typename Real>
BasicEnvelope<Real> make_gaussian(const BasicTimeGrid<Real>& grid, Real center, Real tau) {
  if (!(tau > 4 * grid.dt()))
    throw Error(Errc::UnresolvedPulse, "pulse width " + std::to_string(double(tau)) +
                                           " is not above 4 samples");
  const Real peak = std::pow(std::numbers::pi_v<Real> * tau * tau, Real(-0.25));
  typename BasicEnvelope<Real>::Samples s(grid.size());
  for (Index k = 0; k < grid.size(); ++k) {
    const Real x = (grid.time(k) - center) / tau;
    s(k) = peak * std::exp(-x * x / 2);
  }
  detail::check_support(s, peak, "gaussian");
  return BasicEnvelope<Real>(grid, std::move(s));
}

// Columns 0..count-1 are the orthonormal Hermite-Gauss functions of width tau
// (stable three-term recurrence on the normalized functions).
template <typename Real>
Eigen::Matrix<std::complex<Real>, Eigen::Dynamic, Eigen::Dynamic> hermite_gauss_basis(
    const BasicTimeGrid<Real>& grid, Index count, Real tau, Real center) {
  using Mat = Eigen::Matrix<std::complex<Real>, Eigen::Dynamic, Eigen::Dynamic>;
  if (count < 1) throw Error(Errc::InvalidArgument, "basis needs at least one function");
  if (!(tau > 0)) throw Error(Errc::InvalidArgument, "basis width must be positive");
  const Index n = grid.size();
  Mat b(n, count);
  const Real norm0 = std::pow(std::numbers::pi_v<Real> * tau * tau, Real(-0.25));
  for (Index k = 0; k < n; ++k) {
    const Real x = (grid.time(k) - center) / tau;
    Real prev = 0, cur = norm0 * std::exp(-x * x / 2);
    b(k, 0) = cur;
    for (Index m = 1; m < count; ++m) {
      const Real next = std::sqrt(Real(2) / Real(m)) * x * cur -
                        std::sqrt(Real(m - 1) / Real(m)) * prev;
      prev = cur;
      cur = next;
      b(k, m) = cur;
    }
  }
  for (Index m = 0; m < count; ++m)
    detail::check_support(b.col(m), b.col(m).cwiseAbs().maxCoeff(), "hermite-gauss function");
  return b;
}

template <typename Real>
BasicEnvelope<Real> make_hermite_gauss(const BasicTimeGrid<Real>& grid, Index order, Real tau,
                                       Real center) {
  if (order < 0) throw Error(Errc::InvalidArgument, "negative hermite-gauss order");
  auto b = hermite_gauss_basis(grid, order + 1, tau, center);
  return BasicEnvelope<Real>(grid, b.col(order));
}

// Move samples by k positions (k > 0 moves toward later time); zero inflow.
template <typename Real>
BasicEnvelope<Real> shift(const BasicEnvelope<Real>& e, Index k) {
  const Index n = e.size();
  if (k <= -n || k >= n) throw Error(Errc::InvalidArgument, "shift exceeds grid length");
  BasicEnvelope<Real> out(e.grid());
  const Index lo = std::max<Index>(0, -k), hi = std::min<Index>(n, n - k);
  out.samples().segment(lo + k, hi - lo) = e.samples().segment(lo, hi - lo);
  const Real total = e.samples().squaredNorm();
  const Real kept = out.samples().squaredNorm();
  if (total > 0 && (total - kept) > Real(kClipTolerance) * total)
    throw Error(Errc::EnergyLeak, "shift by " + std::to_string(k) + " clips the envelope");
  return out;
}

}  // namespace tmi
