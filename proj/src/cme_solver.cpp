#include "tmi/cme_solver.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "tmi/chirp.hpp"

namespace tmi {

namespace {

using M2 = Eigen::Matrix2cd;
constexpr cplx I1{0, 1};
constexpr double kSupportRel = 1e-14;  // pump amplitude below this (relative) is treated as zero

struct Track {
  int d = 0;      // samples per step
  Index off = 0;  // storage index = i - k*d + off
  Index at(Index i, Index k) const { return i - k * d + off; }
};

struct Interval {
  Index lo = 0, hi = -1;  // inclusive
};

Interval support(const Envelope& e) {
  const Eigen::VectorXd a = e.samples().cwiseAbs();
  const double thr = kSupportRel * a.maxCoeff();
  Interval s;
  while (s.lo < a.size() && !(a(s.lo) > thr)) ++s.lo;
  s.hi = a.size() - 1;
  while (s.hi >= 0 && !(a(s.hi) > thr)) --s.hi;
  return s;
}

M2 rk4_matrix(const M2& L1, const M2& L2, const M2& L3, const M2& L4, double h) {
  const M2 Id = M2::Identity();
  const M2 A1 = L1;
  const M2 A2 = L2 * (Id + (h / 2) * A1);
  const M2 A3 = L3 * (Id + (h / 2) * A2);
  const M2 A4 = L4 * (Id + h * A3);
  return Id + (h / 6) * (A1 + 2 * A2 + 2 * A3 + A4);
}

M2 twm_generator(cplx p, double g) {
  M2 L;
  L << 0, I1 * g * p, I1 * g * std::conj(p), 0;
  return L;
}

M2 fwm_generator(cplx p, cplx q, double g) {
  const cplx x = I1 * g * (std::norm(p) + std::norm(q));
  M2 L;
  L << x, I1 * g * p * std::conj(q), I1 * g * std::conj(p) * q, x;
  return L;
}

// One RK4 step of the local system. |p| and |q| are constant under self/cross-phase
// modulation, so the pumps rotate by an exact phase and RK4 only handles the signals.
M2 fwm_step(cplx& p, cplx& q, double g, double h) {
  const double P = std::norm(p), Q = std::norm(q);
  const double wp = 0.5 * g * (P + 2 * Q), wq = 0.5 * g * (2 * P + Q);
  const cplx ph = p * std::polar(1.0, wp * h / 2), qh = q * std::polar(1.0, wq * h / 2);
  const cplx pf = p * std::polar(1.0, wp * h), qf = q * std::polar(1.0, wq * h);
  const M2 Lh = fwm_generator(ph, qh, g);
  const M2 M = rk4_matrix(fwm_generator(p, q, g), Lh, Lh, fwm_generator(pf, qf, g), h);
  p = pf;
  q = qf;
  return M;
}

void apply(const M2& M, cplx* r, cplx* s, Index K) {
  const cplx m00 = M(0, 0), m01 = M(0, 1), m10 = M(1, 0), m11 = M(1, 1);
  for (Index c = 0; c < K; ++c) {
    const cplx a = r[c], b = s[c];
    r[c] = m00 * a + m01 * b;
    s[c] = m10 * a + m11 * b;
  }
}

class Engine {
 public:
  Engine(const StageParams& st, const PropagationOptions& opt) : st_(st), opt_(opt) {
    validate(st);
    if (st.require_complete_collision) {
      const double f = collision_incompleteness(st);
      if (f > kCollisionTolerance)
        throw Error(Errc::CollisionIncomplete,
                    "pump collision is not complete inside the stage (outside fraction " +
                        std::to_string(f) + ")");
    }
    n_ = st.grid.size();
    N_ = step_count(st);
    h_ = step_length(st) / opt.coupling_substeps;  // per substep
    auto track = [&](double beta) {
      Track t;
      t.d = step_shift(st, beta);
      t.off = t.d > 0 ? N_ * t.d : 0;
      max_d_ = std::max<Index>(max_d_, std::abs(t.d));
      return t;
    };
    tr_ = track(st.beta_r);
    ts_ = track(st.beta_s);
    tp_ = track(st.beta_p);
    tq_ = track(st.beta_q);
    L_ = n_ + N_ * max_d_;
    pumps_ = launch_pumps(st);
    sp_ = support(pumps_.p);
    fwm_ = st.mixing == Mixing::FourWave;
    if (fwm_) sq_ = support(pumps_.q);
    if (!fwm_ && st.gamma != 0) {
      // Pump is static in its own frame, so the step map depends only on position in that frame.
      const Index m = std::max<Index>(0, sp_.hi - sp_.lo + 1);
      twm_full_.reserve(m);
      twm_half_.reserve(m);
      for (Index j = sp_.lo; j <= sp_.hi; ++j) {
        const M2 L = twm_generator(pumps_.p(j), st.gamma);
        twm_full_.push_back(substeps(rk4_matrix(L, L, L, L, h_)));
        twm_half_.push_back(substeps(rk4_matrix(L, L, L, L, h_ / 2)));
      }
    }
  }

  Index length() const { return L_; }
  Index steps() const { return N_; }

  // Runs columns [c0, c0+K) of (r, s) in place.
  void run_chunk(Eigen::MatrixXcd& r, Eigen::MatrixXcd& s, Index c0, Index K,
                 const std::vector<Index>* snap_steps, std::vector<EnergySnapshot>* snaps,
                 StageOutput* pumps_out) {
    Eigen::MatrixXcd R = Eigen::MatrixXcd::Zero(K, L_), S = Eigen::MatrixXcd::Zero(K, L_);
    for (Index i = 0; i < n_; ++i) {
      R.col(tr_.at(i, 0)) = r.row(i).segment(c0, K).transpose();
      S.col(ts_.at(i, 0)) = s.row(i).segment(c0, K).transpose();
    }
    Eigen::VectorXd e_in = (R.cwiseAbs2().rowwise().sum() + S.cwiseAbs2().rowwise().sum());

    Eigen::VectorXcd Pb, Qb;
    if (fwm_) {
      Pb = Eigen::VectorXcd::Zero(L_);
      Qb = Eigen::VectorXcd::Zero(L_);
      for (Index i = 0; i < n_; ++i) {
        Pb(tp_.at(i, 0)) = pumps_.p(i);
        Qb(tq_.at(i, 0)) = pumps_.q(i);
      }
    }

    std::size_t next_snap = 0;
    auto record = [&](Index k) {
      while (snap_steps && next_snap < snap_steps->size() && (*snap_steps)[next_snap] == k) {
        double er = 0, es = 0;
        for (Index i = 0; i < n_; ++i) {
          er += std::norm(R(0, tr_.at(i, k)));
          es += std::norm(S(0, ts_.at(i, k)));
        }
        snaps->push_back({double(k) * step_length(st_), er * st_.grid.dt(), es * st_.grid.dt()});
        ++next_snap;
      }
    };

    // Symmetric splitting: the coupling acts at every shift configuration k = 0..N with
    // weight 1/2 at the ends, i.e. the trapezoid rule along the characteristics.
    record(0);
    for (Index k = 0; k <= N_; ++k) {
      if (k == 0 || k == N_) {
        interact(k, true, R, S, Pb, Qb, K);
      } else if (snap_steps && next_snap < snap_steps->size() && (*snap_steps)[next_snap] == k) {
        interact(k, true, R, S, Pb, Qb, K);
        record(k);
        interact(k, true, R, S, Pb, Qb, K);
        continue;
      } else {
        interact(k, false, R, S, Pb, Qb, K);
      }
      if (k == N_) record(k);
    }

    // Everything not inside the final physical window has left the grid.
    Eigen::VectorXd e_out = Eigen::VectorXd::Zero(K), e_kept = Eigen::VectorXd::Zero(K);
    e_out = R.cwiseAbs2().rowwise().sum() + S.cwiseAbs2().rowwise().sum();
    for (Index i = 0; i < n_; ++i) {
      const Index jr = tr_.at(i, N_), js = ts_.at(i, N_);
      e_kept += R.col(jr).cwiseAbs2() + S.col(js).cwiseAbs2();
      r.row(i).segment(c0, K) = R.col(jr).transpose();
      s.row(i).segment(c0, K) = S.col(js).transpose();
    }
    for (Index c = 0; c < K; ++c) {
      if (e_in(c) <= 0) continue;
      if (opt_.check_conservation && std::abs(e_out(c) - e_in(c)) > kConservationTolerance * e_in(c))
        throw Error(Errc::ConservationViolation,
                    "signal energy drift " + std::to_string((e_out(c) - e_in(c)) / e_in(c)));
      if (e_out(c) - e_kept(c) > kLeakTolerance * e_in(c))
        throw Error(Errc::EnergyLeak, "signal leaves the time grid during propagation");
    }

    if (pumps_out) {
      pumps_out->pump_p = Envelope(st_.grid);
      if (fwm_) {
        pumps_out->pump_q = Envelope(st_.grid);
        for (Index i = 0; i < n_; ++i) {
          pumps_out->pump_p(i) = Pb(tp_.at(i, N_));
          pumps_out->pump_q(i) = Qb(tq_.at(i, N_));
        }
      } else {
        for (Index i = 0; i < n_; ++i) {
          const Index j = i - N_ * tp_.d;
          pumps_out->pump_p(i) = (j >= 0 && j < n_) ? pumps_.p(j) : cplx(0);
        }
      }
    }
  }

 private:
  M2 substeps(const M2& Ms) const {
    M2 M = M2::Identity();
    for (int m = 0; m < opt_.coupling_substeps; ++m) M = Ms * M;
    return M;
  }

  // Local coupling at shift configuration k over a full or half step.
  void interact(Index k, bool half, Eigen::MatrixXcd& R, Eigen::MatrixXcd& S, Eigen::VectorXcd& Pb,
                Eigen::VectorXcd& Qb, Index K) {
    const double g = st_.gamma;
    if (g == 0) return;
    if (!fwm_) {
      const auto& maps = half ? twm_half_ : twm_full_;
      const Index lo = std::max<Index>(0, sp_.lo + k * tp_.d);
      const Index hi = std::min<Index>(n_ - 1, sp_.hi + k * tp_.d);
      for (Index i = lo; i <= hi; ++i)
        apply(maps[i - k * tp_.d - sp_.lo], R.col(tr_.at(i, k)).data(), S.col(ts_.at(i, k)).data(), K);
      return;
    }
    const double h = half ? h_ / 2 : h_;
    Interval a{std::max<Index>(0, sp_.lo + k * tp_.d), std::min<Index>(n_ - 1, sp_.hi + k * tp_.d)};
    Interval b{std::max<Index>(0, sq_.lo + k * tq_.d), std::min<Index>(n_ - 1, sq_.hi + k * tq_.d)};
    if (a.lo > b.lo) std::swap(a, b);
    auto visit = [&](Index lo, Index hi) {
      for (Index i = lo; i <= hi; ++i) {
        cplx& p = Pb(tp_.at(i, k));
        cplx& q = Qb(tq_.at(i, k));
        M2 M = fwm_step(p, q, g, h);
        for (int m = 1; m < opt_.coupling_substeps; ++m) M = fwm_step(p, q, g, h) * M;
        apply(M, R.col(tr_.at(i, k)).data(), S.col(ts_.at(i, k)).data(), K);
      }
    };
    if (a.hi < a.lo || b.hi < b.lo) {
      visit(a.lo, a.hi);
      visit(b.lo, b.hi);
    } else if (b.lo <= a.hi + 1) {
      visit(a.lo, std::max(a.hi, b.hi));
    } else {
      visit(a.lo, a.hi);
      visit(b.lo, b.hi);
    }
  }

  const StageParams& st_;
  PropagationOptions opt_;
  Index n_ = 0, N_ = 0, L_ = 0, max_d_ = 0;
  double h_ = 0;
  Track tr_, ts_, tp_, tq_;
  LaunchedPumps pumps_;
  Interval sp_, sq_;
  bool fwm_ = false;
  std::vector<M2> twm_full_, twm_half_;  // indexed by position in the pump frame
};

void check_inputs(const StageParams& st, const Envelope& r, const Envelope& s) {
  require_same_grid(st.grid, r.grid());
  require_same_grid(st.grid, s.grid());
}

}  // namespace

void propagate_columns(const StageParams& st, Eigen::MatrixXcd& r, Eigen::MatrixXcd& s,
                       const PropagationOptions& opt) {
  if (r.rows() != st.grid.size() || s.rows() != st.grid.size() || r.cols() != s.cols())
    throw Error(Errc::GridMismatch, "column batch does not match the stage grid");
  Engine eng(st, opt);
  const Index chunk = std::max<Index>(1, opt.chunk_columns);
  for (Index c0 = 0; c0 < r.cols(); c0 += chunk)
    eng.run_chunk(r, s, c0, std::min(chunk, r.cols() - c0), nullptr, nullptr, nullptr);
}

StageOutput propagate(const StageParams& st, const Envelope& input_r, const Envelope& input_s,
                      const PropagationOptions& opt) {
  check_inputs(st, input_r, input_s);
  Engine eng(st, opt);
  Eigen::MatrixXcd r = input_r.samples(), s = input_s.samples();
  StageOutput out;
  eng.run_chunk(r, s, 0, 1, nullptr, nullptr, &out);
  out.r = Envelope(st.grid, r.col(0));
  out.s = Envelope(st.grid, s.col(0));
  return out;
}

std::vector<EnergySnapshot> snapshot_propagate(const StageParams& st, const Envelope& input_r,
                                               const Envelope& input_s, int n_snapshots,
                                               StageOutput* final_state,
                                               const PropagationOptions& opt) {
  check_inputs(st, input_r, input_s);
  if (n_snapshots < 2) throw Error(Errc::InvalidArgument, "need at least two snapshots");
  Engine eng(st, opt);
  std::vector<Index> steps;
  for (int j = 0; j < n_snapshots; ++j)
    steps.push_back(static_cast<Index>(std::llround(double(j) * eng.steps() / (n_snapshots - 1))));
  Eigen::MatrixXcd r = input_r.samples(), s = input_s.samples();
  std::vector<EnergySnapshot> snaps;
  StageOutput out;
  eng.run_chunk(r, s, 0, 1, &steps, &snaps, &out);
  if (final_state) {
    out.r = Envelope(st.grid, r.col(0));
    out.s = Envelope(st.grid, s.col(0));
    *final_state = std::move(out);
  }
  return snaps;
}

}  // namespace tmi
