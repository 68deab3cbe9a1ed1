#include "tmi/basis.hpp"

#include <cmath>

namespace tmi {

Basis Basis::hermite_gauss(const TimeGrid& grid, Index count, double width, double center,
                           const Eigen::VectorXd& phase) {
  Basis b;
  b.kind_ = BasisKind::HermiteGauss;
  b.grid_ = grid;
  b.count_ = count;
  b.width_ = width;
  b.center_ = center;
  b.fn_ = hermite_gauss_basis(grid, count, width, center);
  if (phase.size()) {
    if (phase.size() != grid.size()) throw Error(Errc::GridMismatch, "basis phase length");
    for (Index k = 0; k < grid.size(); ++k) b.fn_.row(k) *= std::polar(1.0, phase(k));
  }
  return b;
}

Basis Basis::samples(const TimeGrid& grid, Index begin, Index count) {
  if (begin < 0 || count < 0 || begin + count > grid.size())
    throw Error(Errc::InvalidArgument, "sample window outside the grid");
  Basis b;
  b.kind_ = BasisKind::Samples;
  b.grid_ = grid;
  b.count_ = count;
  b.begin_ = begin;
  b.center_ = grid.time(begin) + 0.5 * grid.dt() * double(count);
  b.width_ = grid.dt() * double(count);
  return b;
}

Eigen::MatrixXcd Basis::functions(Index first, Index count) const {
  if (kind_ == BasisKind::HermiteGauss) return fn_.middleCols(first, count);
  Eigen::MatrixXcd f = Eigen::MatrixXcd::Zero(grid_.size(), count);
  const double a = 1 / std::sqrt(grid_.dt());
  for (Index j = 0; j < count; ++j) f(begin_ + first + j, j) = a;
  return f;
}

Eigen::MatrixXcd Basis::project(const Eigen::MatrixXcd& fields) const {
  if (kind_ == BasisKind::HermiteGauss) return fn_.adjoint() * fields * grid_.dt();
  return fields.middleRows(begin_, count_) * std::sqrt(grid_.dt());
}

Eigen::VectorXcd Basis::project(const Envelope& e) const {
  require_same_grid(grid_, e.grid());
  return project(Eigen::MatrixXcd(e.samples()));
}

Envelope Basis::synthesize(const Eigen::VectorXcd& coeffs) const {
  if (coeffs.size() != count_) throw Error(Errc::InvalidArgument, "coefficient count");
  Envelope e(grid_);
  if (kind_ == BasisKind::HermiteGauss) {
    e.samples() = fn_ * coeffs;
  } else {
    e.samples().segment(begin_, count_) = coeffs / std::sqrt(grid_.dt());
  }
  return e;
}

}  // namespace tmi
