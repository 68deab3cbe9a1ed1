#pragma once

#include "tmi/timegrid.hpp"

namespace tmi {

enum class BasisKind { HermiteGauss, Samples };

// Orthonormal set of test functions on a grid. Coefficients of a field f are
// c = B^H f dt. A Samples basis is the set of normalized single-sample pulses
// over a contiguous window (c_k = sqrt(dt) f(begin + k)).
class Basis {
 public:
  Basis() = default;

  // Optional `phase` (length n) multiplies every function by exp(i*phase).
  static Basis hermite_gauss(const TimeGrid& grid, Index count, double width, double center,
                             const Eigen::VectorXd& phase = {});
  static Basis samples(const TimeGrid& grid, Index begin, Index count);

  BasisKind kind() const { return kind_; }
  const TimeGrid& grid() const { return grid_; }
  Index size() const { return count_; }
  Index window_begin() const { return begin_; }  // Samples basis only
  double width() const { return width_; }
  double center() const { return center_; }

  // n x count block of sampled functions (columns first .. first+count-1).
  Eigen::MatrixXcd functions(Index first, Index count) const;
  // Coefficients of the columns of `fields` (n x K).
  Eigen::MatrixXcd project(const Eigen::MatrixXcd& fields) const;
  Eigen::VectorXcd project(const Envelope& e) const;
  Envelope synthesize(const Eigen::VectorXcd& coeffs) const;

 private:
  BasisKind kind_ = BasisKind::Samples;
  TimeGrid grid_;
  Index count_ = 0, begin_ = 0;
  double width_ = 0, center_ = 0;
  Eigen::MatrixXcd fn_;  // HermiteGauss only
};

}  // namespace tmi
