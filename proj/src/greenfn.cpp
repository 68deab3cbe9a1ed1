#include "tmi/greenfn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace tmi {

namespace {

struct Window {
  Index lo = 0, hi = -1;  // inclusive
  Index size() const { return hi - lo + 1; }
};

Window amplitude_support(const Envelope& e, double rel = 1e-14) {
  const Eigen::VectorXd a = e.samples().cwiseAbs();
  const double thr = rel * a.maxCoeff();
  Window w;
  while (w.lo < a.size() && !(a(w.lo) > thr)) ++w.lo;
  w.hi = a.size() - 1;
  while (w.hi >= 0 && !(a(w.hi) > thr)) --w.hi;
  return w;
}

Window hull(Window a, Window b) { return {std::min(a.lo, b.lo), std::max(a.hi, b.hi)}; }

Window clip(Window w, Index lo, Index hi) { return {std::max(w.lo, lo), std::min(w.hi, hi)}; }

// Where a pump-matched channel's test functions and its pump live at launch.
Window matched_window(const TimeGrid& g, const Envelope& pump, double width, double center,
                      Index K) {
  const double ext = (std::sqrt(2.0 * double(K) + 1) + 6) * width;
  const Window hg{g.nearest(center - ext), g.nearest(center + ext)};
  return hull(amplitude_support(pump), hg);
}

}  // namespace

Eigen::MatrixXcd GreenOperator::block() const {
  if (!has_r_inputs() || !has_s_inputs())
    throw Error(Errc::InvalidArgument, "block operator needs both input channels");
  Eigen::MatrixXcd B(rr.rows() + sr.rows(), rr.cols() + rs.cols());
  B << rr, rs, sr, ss;
  return B;
}

StageBases stage_bases(const StageParams& st, const ExtractionOptions& opt) {
  validate(st);
  if (opt.basis_size < 1) throw Error(Errc::InvalidArgument, "basis_size must be positive");
  const TimeGrid& g = st.grid;
  const Index n = g.size(), N = step_count(st);
  const LaunchedPumps lp = launch_pumps(st);
  const bool fwm = st.mixing == Mixing::FourWave;
  const Index K = opt.basis_size;

  StageBases out;
  for (Channel c : {Channel::R, Channel::S}) {
    const int dc = step_shift(st, slowness(st, c));
    const Window valid{std::max<Index>(0, -N * dc), std::min<Index>(n - 1, n - 1 - N * dc)};
    const bool matched = fwm || c == st.pump_partner;
    Window win;
    Basis in;
    if (matched) {
      // FWM: s rides with p, r rides with q.
      const Envelope& pump = (fwm && c == Channel::R) ? lp.q : lp.p;
      const Eigen::VectorXd& phase = (fwm && c == Channel::R) ? lp.phase_q : lp.phase_p;
      const double width = opt.basis_width.value_or(pulse_width(pump));
      const double center = pulse_center(pump);
      win = clip(matched_window(g, pump, width, center, K), valid.lo, valid.hi);
      if (opt.pump_matched == InputBasis::HermiteGauss)
        in = Basis::hermite_gauss(g, K, width, center, Eigen::VectorXd(-phase));
    } else {
      // Cross channel: every start time whose path meets the pump inside the stage.
      const int dp = step_shift(st, st.beta_p);
      const Window sp = amplitude_support(lp.p);
      const Index slip = Index(dp - dc) * N;
      win = clip(Window{sp.lo + std::min<Index>(0, slip), sp.hi + std::max<Index>(0, slip)},
                 valid.lo, valid.hi);
      if (opt.cross_channel == InputBasis::HermiteGauss) {
        const double center = 0.5 * (g.time(sp.lo) + g.time(sp.hi) + double(slip) * g.dt());
        in = Basis::hermite_gauss(g, K, opt.cross_width, center);
      }
    }
    const bool use_samples = matched ? opt.pump_matched == InputBasis::Samples
                                     : opt.cross_channel == InputBasis::Samples;
    if (use_samples) in = Basis::samples(g, win.lo, win.size());
    const Index margin = 2;
    const Window ow = clip(Window{win.lo + N * dc - margin, win.hi + N * dc + margin}, 0, n - 1);
    const Basis outb = Basis::samples(g, ow.lo, ow.size());
    if (c == Channel::R) {
      out.in_r = in;
      out.out_r = outb;
    } else {
      out.in_s = in;
      out.out_s = outb;
    }
  }
  return out;
}

GreenOperator extract_operator(const ColumnMap& map, const StageBases& bases,
                               const ExtractionOptions& opt) {
  GreenOperator G;
  G.grid = bases.in_s.grid();
  G.in_r = bases.in_r;
  G.in_s = bases.in_s;
  G.out_r = bases.out_r;
  G.out_s = bases.out_s;
  const Index n = G.grid.size();
  const double dt = G.grid.dt();
  const Index chunk = std::max<Index>(1, opt.chunk_columns);

  for (Channel c : {Channel::R, Channel::S}) {
    if ((c == Channel::R && !opt.r_inputs) || (c == Channel::S && !opt.s_inputs)) continue;
    const Basis& in = c == Channel::R ? G.in_r : G.in_s;
    const Index K = in.size();
    Eigen::MatrixXcd& to_r = c == Channel::R ? G.rr : G.rs;
    Eigen::MatrixXcd& to_s = c == Channel::R ? G.sr : G.ss;
    to_r.resize(G.out_r.size(), K);
    to_s.resize(G.out_s.size(), K);
    for (Index c0 = 0; c0 < K; c0 += chunk) {
      const Index m = std::min(chunk, K - c0);
      Eigen::MatrixXcd R = Eigen::MatrixXcd::Zero(n, m), S = Eigen::MatrixXcd::Zero(n, m);
      (c == Channel::R ? R : S) = in.functions(c0, m);
      map(R, S);
      to_r.middleCols(c0, m) = G.out_r.project(R);
      to_s.middleCols(c0, m) = G.out_s.project(S);
      const Eigen::RowVectorXd total =
          (R.colwise().squaredNorm() + S.colwise().squaredNorm()) * dt;
      const Eigen::RowVectorXd kept = to_r.middleCols(c0, m).colwise().squaredNorm() +
                                      to_s.middleCols(c0, m).colwise().squaredNorm();
      for (Index j = 0; j < m; ++j)
        if (total(j) > 0) G.min_captured = std::min(G.min_captured, kept(j) / total(j));
    }
  }
  if (G.min_captured < 1 - opt.completeness_tol)
    throw Error(Errc::BasisIncomplete, "output basis captures only " +
                                           std::to_string(G.min_captured) + " of a column");
  return G;
}

GreenOperator extract_green(const StageParams& st, const ExtractionOptions& opt) {
  const StageBases bases = stage_bases(st, opt);
  PropagationOptions popt = opt.propagation;
  ColumnMap map = [&](Eigen::MatrixXcd& r, Eigen::MatrixXcd& s) { propagate_columns(st, r, s, popt); };
  return extract_operator(map, bases, opt);
}

GreenOperator extract_green(const StageParams& st, Index basis_size, double basis_width) {
  if (basis_size < 8) throw Error(Errc::InvalidArgument, "basis_size must be at least 8");
  ExtractionOptions opt;
  opt.basis_size = basis_size;
  opt.basis_width = basis_width;
  return extract_green(st, opt);
}

double selectivity(const Eigen::VectorXd& rho) {
  constexpr double slack = 1e-9;
  double sum = 0, first = 0;
  for (Index j = 0; j < rho.size(); ++j) {
    if (!(rho(j) >= -slack && rho(j) <= 1 + slack))
      throw Error(Errc::InvalidCoefficient, "Schmidt coefficient outside [0, 1]");
    const double r = std::clamp(rho(j), 0.0, 1.0);
    sum += r * r;
    first = std::max(first, r);
  }
  if (sum == 0) return 0;
  return first * first * first * first / sum;
}

SchmidtData schmidt(const GreenOperator& G, const SchmidtOptions& opt) {
  if (!G.has_s_inputs()) throw Error(Errc::InvalidArgument, "Schmidt analysis needs s-input columns");
  SchmidtData sd;
  Eigen::BDCSVD<Eigen::MatrixXcd> svd(G.rs, Eigen::ComputeThinU | Eigen::ComputeThinV);
  sd.rho = svd.singularValues();
  Eigen::MatrixXcd U = svd.matrixU(), V = svd.matrixV();
  const Index m = sd.rho.size();

  // Largest sample of each input mode real-positive; outputs rotate along.
  for (Index k = 0; k < m; ++k) {
    const Envelope phi = G.in_s.synthesize(V.col(k));
    Index imax;
    phi.samples().cwiseAbs().maxCoeff(&imax);
    const cplx v = phi(imax);
    if (std::abs(v) == 0) continue;
    const cplx rot = std::conj(v) / std::abs(v);
    V.col(k) *= rot;
    U.col(k) *= rot;
  }

  Eigen::BDCSVD<Eigen::MatrixXcd> tsvd(G.ss, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Eigen::VectorXd tp = tsvd.singularValues();
  const Eigen::MatrixXcd& Vt = tsvd.matrixV();
  const Eigen::MatrixXcd& Ut = tsvd.matrixU();

  sd.tau.resize(m);
  sd.pairing.resize(m);
  Eigen::MatrixXcd Phi(G.ss.rows(), m);
  for (Index k = 0; k < m; ++k) {
    const Eigen::VectorXd ov = (Vt.adjoint() * V.col(k)).cwiseAbs2();
    Index best;
    ov.maxCoeff(&best);
    const double r2 = 1 - tp(best) * tp(best);
    double in_cluster = 0;
    for (Index j = 0; j < tp.size(); ++j) {
      const double rj = 1 - tp(j) * tp(j);
      if (std::abs(rj - r2) <= std::max(1e-7, 0.05 * std::abs(r2))) in_cluster += ov(j);
    }
    sd.pairing(k) = std::sqrt(std::min(1.0, in_cluster));
    sd.tau(k) = tp(best);
    Eigen::VectorXcd f = G.ss * V.col(k);
    const double fn = f.norm();
    Phi.col(k) = fn > 1e-300 ? Eigen::VectorXcd(f / fn) : Eigen::VectorXcd(Ut.col(best));
  }

  sd.coef_s_in = V;
  sd.coef_r_out = U;
  sd.coef_s_out = Phi;
  if (G.has_r_inputs()) {
    Eigen::MatrixXcd Psi_in(G.rr.cols(), m);
    sd.bs_pairing.resize(m);
    for (Index k = 0; k < m; ++k) {
      const double rk = sd.rho(k), tk = sd.tau(k);
      // G_sr psi = -rho Phi and G_rr psi = tau Psi fix psi from either side.
      Eigen::VectorXcd psi = rk >= tk ? Eigen::VectorXcd(-(G.sr.adjoint() * Phi.col(k)))
                                      : Eigen::VectorXcd(G.rr.adjoint() * U.col(k));
      const double pn = psi.norm();
      if (pn > 0) psi /= pn;
      Psi_in.col(k) = psi;
      if (rk > 1e-6) {
        Eigen::VectorXcd phi2 = -(G.sr * psi);
        const double qn = phi2.norm();
        sd.bs_pairing(k) = qn > 0 ? std::abs(Phi.col(k).dot(phi2)) / qn : 0;
      } else {
        sd.bs_pairing(k) = std::numeric_limits<double>::quiet_NaN();
      }
    }
    sd.coef_r_in = Psi_in;
  }

  for (Index k = 0; k < m; ++k) {
    const bool keep = std::abs(sd.rho(k) * sd.rho(k) + sd.tau(k) * sd.tau(k) - 1) <= opt.retain_tol;
    if (!keep) continue;
    ++sd.retained;
    if (sd.pairing(k) < 1 - opt.pairing_tol)
      throw Error(Errc::PairingFailure, "mode " + std::to_string(k + 1) + " pairs with overlap " +
                                            std::to_string(sd.pairing(k)));
  }

  const Index keep = std::min(m, opt.max_modes);
  for (Index k = 0; k < keep; ++k) {
    sd.modes_s_in.push_back(G.in_s.synthesize(V.col(k)));
    sd.modes_r_out.push_back(G.out_r.synthesize(U.col(k)));
    sd.modes_s_out.push_back(G.out_s.synthesize(Phi.col(k)));
    if (G.has_r_inputs()) sd.modes_r_in.push_back(G.in_r.synthesize(sd.coef_r_in.col(k)));
  }
  sd.selectivity = selectivity(sd.rho);
  for (Index k = 2; k < m; ++k) sd.tail_mass += sd.rho(k) * sd.rho(k);
  return sd;
}

ModeExpansion expand_in_modes(const Envelope& field, const std::vector<Envelope>& modes) {
  ModeExpansion ex;
  ex.coefficients.resize(Index(modes.size()));
  double captured = 0;
  for (std::size_t k = 0; k < modes.size(); ++k) {
    ex.coefficients(Index(k)) = inner_product(modes[k], field);
    captured += std::norm(ex.coefficients(Index(k)));
  }
  ex.residual = energy(field) - captured;
  return ex;
}

Eigen::VectorXd operator_singular_values(const GreenOperator& G) {
  Eigen::MatrixXcd A;
  if (G.has_r_inputs() && G.has_s_inputs()) {
    A = G.block();
  } else if (G.has_s_inputs()) {
    A.resize(G.rs.rows() + G.ss.rows(), G.rs.cols());
    A << G.rs, G.ss;
  } else {
    A.resize(G.rr.rows() + G.sr.rows(), G.rr.cols());
    A << G.rr, G.sr;
  }
  Eigen::BDCSVD<Eigen::MatrixXcd> svd(A);
  return svd.singularValues();
}

double unitarity_residual(const GreenOperator& G) {
  const Eigen::VectorXd s = operator_singular_values(G);
  return (s.array() - 1).abs().maxCoeff();
}

double odd_order_fraction(const Envelope& mode, double width, double center, Index orders) {
  const Eigen::MatrixXcd B = hermite_gauss_basis(mode.grid(), orders, width, center);
  const Eigen::VectorXcd c = B.adjoint() * mode.samples() * mode.grid().dt();
  double odd = 0, all = 0;
  for (Index k = 0; k < c.size(); ++k) {
    all += std::norm(c(k));
    if (k % 2) odd += std::norm(c(k));
  }
  return all > 0 ? odd / all : 0;
}

}  // namespace tmi
