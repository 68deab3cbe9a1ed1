#include "tmi/cascade.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <numbers>
#include <string>
#include <thread>

namespace tmi {

namespace {

// Moves rows down by k (toward later time) with zero fill; returns dropped energy.
double shift_rows(Eigen::MatrixXcd& M, Index k) {
  if (k == 0) return 0;
  const Index n = M.rows();
  double dropped = 0;
  if (std::abs(k) >= n) {
    dropped = M.squaredNorm();
    M.setZero();
    return dropped;
  }
  if (k > 0) {
    dropped = M.bottomRows(k).squaredNorm();
    M.bottomRows(n - k) = M.topRows(n - k).eval();
    M.topRows(k).setZero();
  } else {
    dropped = M.topRows(-k).squaredNorm();
    M.topRows(n + k) = M.bottomRows(n + k).eval();
    M.bottomRows(-k).setZero();
  }
  return dropped;
}

void apply_interface(Eigen::MatrixXcd& r, Eigen::MatrixXcd& s, const InterfaceShift& sh,
                     double theta) {
  const double before = r.squaredNorm() + s.squaredNorm();
  r *= std::polar(1.0, theta);
  const double lost = shift_rows(r, sh.r) + shift_rows(s, sh.s);
  if (before > 0 && lost > kLeakTolerance * before)
    throw Error(Errc::EnergyLeak, "inter-stage delay pushes a field off the grid");
}

bool same_stage(const StageParams& a, const StageParams& b) {
  auto same_chirp = [](const std::optional<ChirpRecipe>& x, const std::optional<ChirpRecipe>& y) {
    if (x.has_value() != y.has_value()) return false;
    if (!x) return true;
    return x->epsilon_p == y->epsilon_p && x->epsilon_q == y->epsilon_q &&
           x->stage_index == y->stage_index && x->kappa_p == y->kappa_p && x->kappa_q == y->kappa_q;
  };
  return a.grid == b.grid && a.mixing == b.mixing && a.beta_p == b.beta_p && a.beta_q == b.beta_q &&
         a.beta_r == b.beta_r && a.beta_s == b.beta_s && a.gamma == b.gamma &&
         a.length == b.length && a.pump_p.samples() == b.pump_p.samples() &&
         a.pump_q.samples() == b.pump_q.samples() && a.pump_chirp_p == b.pump_chirp_p &&
         a.pump_chirp_q == b.pump_chirp_q && same_chirp(a.chirp, b.chirp);
}

double golden_max(const std::function<double(double)>& f, double a, double b, double tol) {
  const double g = (std::sqrt(5.0) - 1) / 2;
  double c = b - g * (b - a), d = a + g * (b - a);
  double fc = f(c), fd = f(d);
  while (b - a > tol) {
    if (fc >= fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - g * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + g * (b - a);
      fd = f(d);
    }
  }
  return fc >= fd ? c : d;
}

double composite_rho1_sq(const CascadeSpec& spec, const ExtractionOptions& eopt) {
  ExtractionOptions o = eopt;
  o.r_inputs = false;
  const GreenOperator G = compose_by_propagation(spec, o);
  Eigen::BDCSVD<Eigen::MatrixXcd> svd(G.rs);
  const double r = svd.singularValues().size() ? svd.singularValues()(0) : 0;
  return r * r;
}

}  // namespace

void parallel_for(std::size_t count, int jobs, const std::function<void(std::size_t)>& fn) {
  const std::size_t workers = std::min<std::size_t>(count, std::size_t(std::max(1, jobs)));
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::mutex mu;
  std::exception_ptr first;
  std::size_t first_index = count;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(mu);
          if (i < first_index) {
            first_index = i;
            first = std::current_exception();
          }
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (first) std::rethrow_exception(first);
}

void validate(const CascadeSpec& spec) {
  if (spec.stages.empty()) throw Error(Errc::ConfigMismatch, "cascade has no stages");
  for (std::size_t k = 1; k < spec.stages.size(); ++k) {
    const StageParams& a = spec.stages[k - 1];
    const StageParams& b = spec.stages[k];
    if (!(a.grid == b.grid)) throw Error(Errc::GridMismatch, "cascade stages use different grids");
    const bool alternates = a.dispersion_sign == -b.dispersion_sign;
    if (spec.configuration == Configuration::RC && !alternates)
      throw Error(Errc::ConfigMismatch, "RC cascade needs alternating dispersion signs");
    if (spec.configuration == Configuration::DC && alternates)
      throw Error(Errc::ConfigMismatch, "DC cascade needs a constant dispersion sign");
  }
  if (!spec.dc_delay_samples.empty() && spec.dc_delay_samples.size() + 1 != spec.stages.size())
    throw Error(Errc::ConfigMismatch, "need one DC delay per interface");
}

InterfaceShift interface_shift(const CascadeSpec& spec, std::size_t k) {
  if (spec.configuration == Configuration::RC) return {};
  const StageParams& st = spec.stages.at(k);
  const Index N = step_count(st);
  const Index Dr = N * step_shift(st, st.beta_r), Ds = N * step_shift(st, st.beta_s);
  // Both channels go back to where stage k started them: relative delay D_r - D_s.
  InterfaceShift sh;
  sh.s = -Ds;
  const Index delay = spec.dc_delay_samples.empty() ? Dr - Ds : spec.dc_delay_samples.at(k);
  sh.r = sh.s - delay;
  return sh;
}

GreenOperator compose_by_propagation(const CascadeSpec& spec, const ExtractionOptions& opt) {
  validate(spec);
  const StageBases first = stage_bases(spec.stages.front(), opt);
  const StageBases last = stage_bases(spec.stages.back(), opt);
  StageBases bases{first.in_r, first.in_s, last.out_r, last.out_s};
  ColumnMap map = [&](Eigen::MatrixXcd& r, Eigen::MatrixXcd& s) {
    for (std::size_t k = 0; k < spec.stages.size(); ++k) {
      propagate_columns(spec.stages[k], r, s, opt.propagation);
      if (k + 1 < spec.stages.size()) apply_interface(r, s, interface_shift(spec, k), spec.theta);
    }
  };
  return extract_operator(map, bases, opt);
}

GreenOperator compose_by_products(const CascadeSpec& spec, const ExtractionOptions& opt) {
  validate(spec);
  GreenOperator G = extract_green(spec.stages.front(), opt);
  ExtractionOptions px = opt;
  px.pump_matched = InputBasis::Samples;
  px.cross_channel = InputBasis::Samples;
  px.r_inputs = px.s_inputs = true;

  for (std::size_t k = 1; k < spec.stages.size(); ++k) {
    const GreenOperator H = extract_green(spec.stages[k], px);
    const InterfaceShift sh = interface_shift(spec, k - 1);
    const cplx ph = std::polar(1.0, spec.theta);
    // Sample-window coefficients carry over one-to-one after the delay.
    auto carry = [](const Eigen::MatrixXcd& X, const Basis& from, const Basis& to, Index shift,
                    cplx factor) {
      Eigen::MatrixXcd Y = Eigen::MatrixXcd::Zero(to.size(), X.cols());
      for (Index j = 0; j < to.size(); ++j) {
        const Index src = to.window_begin() + j - shift - from.window_begin();
        if (src >= 0 && src < from.size()) Y.row(j) = factor * X.row(src);
      }
      return Y;
    };
    for (int col = 0; col < 2; ++col) {
      Eigen::MatrixXcd& Xr = col == 0 ? G.rr : G.rs;
      Eigen::MatrixXcd& Xs = col == 0 ? G.sr : G.ss;
      if (Xr.cols() == 0) continue;
      const Eigen::MatrixXcd Yr = carry(Xr, G.out_r, H.in_r, sh.r, ph);
      const Eigen::MatrixXcd Ys = carry(Xs, G.out_s, H.in_s, sh.s, 1.0);
      Xr = H.rr * Yr + H.rs * Ys;
      Xs = H.sr * Yr + H.ss * Ys;
    }
    G.out_r = H.out_r;
    G.out_s = H.out_s;
  }
  return G;
}

OverlapMatrix interface_overlaps(const SchmidtData& s1, const SchmidtData& s2, Index n_modes,
                                 InterfaceShift sh) {
  OverlapMatrix om;
  const Index ms = std::min<Index>(n_modes, std::min(s1.modes_s_out.size(), s2.modes_s_in.size()));
  om.mu.resize(ms, ms);
  for (Index m = 0; m < ms; ++m)
    for (Index k = 0; k < ms; ++k)
      om.mu(m, k) = inner_product(s2.modes_s_in[m], shift(s1.modes_s_out[k], sh.s));
  const Index mr = std::min<Index>(n_modes, std::min(s1.modes_r_out.size(), s2.modes_r_in.size()));
  om.eta.resize(mr, mr);
  for (Index m = 0; m < mr; ++m)
    for (Index k = 0; k < mr; ++k)
      om.eta(m, k) = inner_product(s2.modes_r_in[m], shift(s1.modes_r_out[k], sh.r));
  return om;
}

std::vector<TracePoint> energy_trace(const CascadeSpec& spec, const Envelope& input_s,
                                     int points_per_stage) {
  validate(spec);
  std::vector<TracePoint> trace;
  Envelope r(spec.stages.front().grid), s = input_s;
  for (std::size_t k = 0; k < spec.stages.size(); ++k) {
    const StageParams& st = spec.stages[k];
    StageOutput out;
    const auto snaps = snapshot_propagate(st, r, s, std::max(2, points_per_stage), &out);
    for (std::size_t j = (k == 0 ? 0 : 1); j < snaps.size(); ++j) {
      const double tot = snaps[j].energy_r + snaps[j].energy_s;
      trace.push_back({double(k) * st.length + snaps[j].z, tot > 0 ? snaps[j].energy_r / tot : 0});
    }
    r = out.r;
    s = out.s;
    if (k + 1 < spec.stages.size()) {
      Eigen::MatrixXcd R = r.samples(), S = s.samples();
      apply_interface(R, S, interface_shift(spec, k), spec.theta);
      r = Envelope(st.grid, R.col(0));
      s = Envelope(st.grid, S.col(0));
    }
  }
  return trace;
}

double sinusoid_deviation(const std::vector<TracePoint>& trace, int n_stages, double length) {
  double dev = 0;
  for (const auto& p : trace) {
    const double x = std::sin(std::numbers::pi * p.z / (2 * n_stages * length));
    dev = std::max(dev, std::abs(p.converted_fraction - x * x));
  }
  return dev;
}

CascadeReport run_cascade(const CascadeSpec& spec, const CascadeOptions& opt) {
  validate(spec);
  CascadeReport rep;
  ExtractionOptions eo = opt.extraction;
  eo.r_inputs = opt.composite_r_inputs;
  eo.s_inputs = true;
  rep.composite = compose_by_propagation(spec, eo);
  rep.schmidt = schmidt(rep.composite, opt.schmidt);

  const std::size_t N = spec.stages.size();
  rep.calibration.resize(N);
  for (std::size_t k = 0; k < N; ++k) rep.calibration[k].gamma = spec.stages[k].gamma;

  if (opt.stage_analysis) {
    ExtractionOptions so = opt.extraction;
    so.r_inputs = opt.stage_r_inputs;
    so.s_inputs = true;
    for (std::size_t k = 0; k < N; ++k) {
      std::size_t same = k;
      for (std::size_t j = 0; j < k; ++j)
        if (same_stage(spec.stages[j], spec.stages[k])) {
          same = j;
          break;
        }
      if (same != k) {
        rep.stage_schmidt.push_back(rep.stage_schmidt[same]);
      } else {
        rep.stage_schmidt.push_back(schmidt(extract_green(spec.stages[k], so), opt.schmidt));
      }
      const auto& rho = rep.stage_schmidt.back().rho;
      rep.calibration[k].achieved_ce = rho.size() ? rho(0) * rho(0) : 0;
    }
    for (std::size_t k = 0; k + 1 < N; ++k)
      rep.overlaps.push_back(interface_overlaps(rep.stage_schmidt[k], rep.stage_schmidt[k + 1],
                                                opt.overlap_modes, interface_shift(spec, k)));
    if (N == 2 && rep.overlaps[0].mu.size() && rep.overlaps[0].eta.size())
      rep.theta0 = std::arg(rep.overlaps[0].mu(0, 0) * std::conj(rep.overlaps[0].eta(0, 0)));
  }

  if (opt.trace_points_per_stage > 0 && !rep.schmidt.modes_s_in.empty())
    rep.energy_trace = energy_trace(spec, rep.schmidt.modes_s_in.front(), opt.trace_points_per_stage);
  return rep;
}

double first_stage_ce(const StageParams& st, const ExtractionOptions& eopt) {
  ExtractionOptions o = eopt;
  o.r_inputs = false;
  o.s_inputs = true;
  const GreenOperator G = extract_green(st, o);
  Eigen::BDCSVD<Eigen::MatrixXcd> svd(G.rs);
  const double r = svd.singularValues()(0);
  return r * r;
}

double calibrate_gamma(const StageParams& st, double target, const CalibrationOptions& opt) {
  if (!(target > 0 && target < 1))
    throw Error(Errc::InvalidArgument, "target conversion efficiency must lie in (0, 1)");
  auto ce = [&](double g) { return first_stage_ce(with_gamma(st, g), opt.extraction); };
  double lo = 0, hi = opt.gamma_start, f_prev = 0;
  double f_hi = ce(hi);
  while (f_hi < target) {
    if (f_hi < f_prev)
      throw Error(Errc::NotBracketed, "conversion peaks at " + std::to_string(f_prev) +
                                          " below the target " + std::to_string(target));
    lo = hi;
    f_prev = f_hi;
    hi *= 1.5;
    if (hi > opt.gamma_max)
      throw Error(Errc::NotBracketed, "target conversion not reached below gamma_max");
    f_hi = ce(hi);
  }
  if (std::abs(f_hi - target) <= opt.tolerance) return hi;
  for (int it = 0; it < opt.max_iterations; ++it) {
    const double mid = 0.5 * (lo + hi);
    const double f = ce(mid);
    if (std::abs(f - target) <= opt.tolerance) return mid;
    (f < target ? lo : hi) = mid;
    if (hi - lo <= 1e-14 * hi) return mid;
  }
  throw Error(Errc::NotBracketed, "bisection did not converge");
}

CascadeSpec build_cascade(const CascadeTemplate& tpl, double gamma) {
  if (tpl.n_stages < 1) throw Error(Errc::ConfigMismatch, "cascade needs at least one stage");
  CascadeSpec spec;
  spec.configuration = tpl.configuration;
  spec.theta = tpl.theta;
  for (int k = 1; k <= tpl.n_stages; ++k) {
    const int sign = (tpl.configuration == Configuration::RC && k % 2 == 0) ? -1 : +1;
    spec.stages.push_back(tpl.factory(k, sign, gamma));
  }
  validate(spec);
  return spec;
}

CalibratedCascade calibrate_cascade(const CascadeTemplate& tpl, const CalibrationOptions& opt,
                                    std::optional<bool> polish) {
  CalibratedCascade cc;
  cc.target_ce = multistage_target_ce(tpl.n_stages);
  const StageParams first = tpl.factory(1, +1, 0.0);
  cc.gamma = calibrate_gamma(first, cc.target_ce, opt);
  cc.achieved_ce = first_stage_ce(with_gamma(first, cc.gamma), opt.extraction);
  cc.spec = build_cascade(tpl, cc.gamma);
  if (!polish.value_or(tpl.n_stages > 2)) return cc;
  cc.rho1_sq_before = composite_rho1_sq(cc.spec, opt.extraction);
  auto f = [&](double g) { return composite_rho1_sq(build_cascade(tpl, g), opt.extraction); };
  const double g = golden_max(f, 0.85 * cc.gamma, 1.2 * cc.gamma, 1e-4 * cc.gamma);
  const double fg = f(g);
  if (fg > cc.rho1_sq_before) {
    cc.gamma_polished = g;
    cc.spec = build_cascade(tpl, g);
    cc.rho1_sq_after = fg;
  } else {
    cc.gamma_polished = cc.gamma;
    cc.rho1_sq_after = cc.rho1_sq_before;
  }
  return cc;
}

StageFactory twm_factory(const TimeGrid& grid, double tau_p, Channel partner) {
  return [=](int, int sign, double gamma) { return make_twm_stage(grid, tau_p, gamma, sign, partner); };
}

StageFactory fwm_factory(const TimeGrid& grid, double tau_p, double tau_q,
                         std::optional<std::pair<double, double>> eps,
                         std::optional<std::pair<double, double>> kappa) {
  return [=](int index, int sign, double gamma) {
    std::optional<ChirpRecipe> recipe;
    if (eps) {
      ChirpRecipe r;
      r.epsilon_p = eps->first;
      r.epsilon_q = eps->second;
      r.stage_index = index;
      if (kappa) {
        r.kappa_p = kappa->first;
        r.kappa_q = kappa->second;
      }
      recipe = r;
    }
    return make_fwm_stage(grid, tau_p, tau_q, gamma, sign, recipe);
  };
}

TimeGrid twm_grid_for(double tau_p, const TimeGrid& base) {
  double span = base.span();
  Index n = base.size();
  while (span / double(n) > tau_p / 10) n *= 2;
  // Crossing window and the s test functions must stay on the grid through the stage.
  const double need = std::max(0.75 + 8 * tau_p, 0.25 + 12.5 * tau_p) + 0.02;
  while (span / 2 < need) {
    span *= 2;
    n *= 2;
  }
  return TimeGrid::centered(span, n);
}

std::vector<ZetaPoint> zeta_sweep(const TwmSweepBase& base, const std::vector<double>& zetas,
                                  int jobs) {
  std::vector<ZetaPoint> out(zetas.size());
  parallel_for(zetas.size(), jobs, [&](std::size_t i) {
    ZetaPoint& p = out[i];
    p.zeta = zetas[i];
    if (!(p.zeta > 0)) throw Error(Errc::InvalidArgument, "zeta must be positive");
    const double tau = 1 / p.zeta;
    const TimeGrid grid = twm_grid_for(tau, base.grid);
    p.n_samples = grid.size();
    p.span = grid.span();
    CascadeTemplate tpl{twm_factory(grid, tau, base.partner), base.n_stages, base.configuration,
                        base.theta};
    CalibrationOptions copt;
    copt.extraction = base.extraction;
    const CalibratedCascade cc = calibrate_cascade(tpl, copt);
    p.gamma = cc.gamma_polished.value_or(cc.gamma);
    CascadeOptions co;
    co.extraction = base.extraction;
    co.stage_analysis = false;
    co.trace_points_per_stage = 0;
    const CascadeReport rep = run_cascade(cc.spec, co);
    p.selectivity = rep.schmidt.selectivity;
    p.rho1_sq = rep.schmidt.rho(0) * rep.schmidt.rho(0);
    p.rho2_sq = rep.schmidt.rho.size() > 1 ? rep.schmidt.rho(1) * rep.schmidt.rho(1) : 0;
    ExtractionOptions so = base.extraction;
    so.r_inputs = false;
    const SchmidtData s1 = schmidt(extract_green(cc.spec.stages.front(), so));
    p.odd_fraction = odd_order_fraction(s1.modes_s_in.front(), tau,
                                        pulse_center(cc.spec.stages.front().pump_p));
  });
  return out;
}

std::vector<StageCountPoint> stage_count_sweep(const StageFactory& factory,
                                               const std::vector<int>& n_values, int jobs,
                                               const CalibrationOptions& copt,
                                               const CascadeOptions& opt) {
  std::vector<StageCountPoint> out(n_values.size());
  parallel_for(2 * n_values.size(), jobs, [&](std::size_t job) {
    const std::size_t i = job / 2;
    const bool rc = job % 2 == 0;
    StageCountPoint& p = out[i];
    const int N = n_values[i];
    CascadeTemplate tpl{factory, N, rc ? Configuration::RC : Configuration::DC, 0.0};
    CalibratedCascade cc = calibrate_cascade(tpl, copt);
    CascadeOptions co = opt;
    co.stage_analysis = false;
    const CascadeReport rep = run_cascade(cc.spec, co);
    const double r1 = rep.schmidt.rho(0) * rep.schmidt.rho(0);
    const double dev = sinusoid_deviation(rep.energy_trace, N);
    if (rc) {
      p.n_stages = N;
      p.target_ce = cc.target_ce;
      p.selectivity_rc = rep.schmidt.selectivity;
      p.rho1_sq_rc = r1;
      p.trace_rc = rep.energy_trace;
      p.trace_deviation_rc = dev;
      p.calib_rc = std::move(cc);
    } else {
      p.selectivity_dc = rep.schmidt.selectivity;
      p.rho1_sq_dc = r1;
      p.trace_dc = rep.energy_trace;
      p.trace_deviation_dc = dev;
      p.calib_dc = std::move(cc);
    }
  });
  return out;
}

ThetaScan fit_theta0(std::vector<double> theta, std::vector<double> rho1_sq) {
  ThetaScan ts;
  ts.theta = std::move(theta);
  ts.rho1_sq = std::move(rho1_sq);
  cplx acc = 0;
  for (std::size_t k = 0; k < ts.theta.size(); ++k) acc += ts.rho1_sq[k] * std::polar(1.0, ts.theta[k]);
  ts.theta0 = std::arg(acc);
  for (std::size_t k = 0; k < ts.theta.size(); ++k) {
    const double c = std::cos((ts.theta[k] - ts.theta0) / 2);
    ts.residual = std::max(ts.residual, std::abs(ts.rho1_sq[k] - c * c));
  }
  return ts;
}

ThetaScan theta_scan(const CascadeSpec& spec, const std::vector<double>& thetas,
                     const ExtractionOptions& opt, int jobs) {
  std::vector<double> r1(thetas.size()), sel(thetas.size());
  ExtractionOptions o = opt;
  o.r_inputs = false;
  parallel_for(thetas.size(), jobs, [&](std::size_t k) {
    CascadeSpec s = spec;
    s.theta = thetas[k];
    const SchmidtData sd = schmidt(compose_by_propagation(s, o));
    r1[k] = sd.rho(0) * sd.rho(0);
    sel[k] = sd.selectivity;
  });
  ThetaScan ts = fit_theta0(thetas, r1);
  ts.selectivity = sel;
  return ts;
}

}  // namespace tmi
