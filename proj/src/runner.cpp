#include "tmi/runner.hpp"

#include <openssl/evp.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <numbers>

#include <json.hpp>

#include "tmi/chirp_family.hpp"

namespace tmi {

using json = nlohmann::ordered_json;

std::string sha256_hex(std::string_view data) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (!EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr))
    throw Error(Errc::Io, "sha256 failed");
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int k = 0; k < len; ++k) {
    out += hex[md[k] >> 4];
    out += hex[md[k] & 15];
  }
  return out;
}

std::string resolve_output_dir(const ExperimentConfig& cfg, const RunOptions& opt) {
  if (opt.out_dir) return *opt.out_dir;
  if (const char* env = std::getenv("TMI_OUTPUT_DIR"); env && *env) return env;
  return cfg.output.directory;
}

namespace {

std::string num(double v) {
  if (!std::isfinite(v)) return "nan";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

json jnum(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

json jcplx(cplx z) { return json{{"re", jnum(z.real())}, {"im", jnum(z.imag())}, {"abs", jnum(std::abs(z))}}; }

class Csv {
 public:
  Csv(const std::string& hash, const std::string& figure, const std::vector<std::string>& notes = {}) {
    out_ = "# tmi " + std::string(kVersion) + "\n# config_sha256: " + hash +
           "\n# time in walk-off units\n# figure: " + figure + "\n";
    for (const auto& n : notes) out_ += "# " + n + "\n";
  }
  void columns(const std::vector<std::string>& cols) {
    for (std::size_t k = 0; k < cols.size(); ++k) out_ += (k ? "," : "") + cols[k];
    out_ += "\n";
  }
  void row(const std::vector<double>& v) {
    for (std::size_t k = 0; k < v.size(); ++k) out_ += (k ? "," : "") + num(v[k]);
    out_ += "\n";
  }
  const std::string& str() const { return out_; }

 private:
  std::string out_;
};

using FileList = std::vector<std::pair<std::string, std::string>>;

struct JobResult {
  json summary;
  FileList files;
  std::optional<StageParams> diag_stage;  // first stage of the principal run
};

std::string join(const Eigen::VectorXd& v, Index count) {
  std::string s;
  for (Index k = 0; k < std::min(count, v.size()); ++k) s += (k ? ";" : "") + num(v(k));
  return s;
}

// Rows [lo, hi] where any column rises above 1e-8 of the overall peak.
std::pair<Index, Index> active_rows(const std::vector<const Envelope*>& cols) {
  double peak = 0;
  for (auto* e : cols) peak = std::max(peak, e->samples().cwiseAbs().maxCoeff());
  Index lo = -1, hi = -1;
  if (cols.empty() || peak == 0) return {0, cols.empty() ? -1 : cols.front()->size() - 1};
  const Index n = cols.front()->size();
  for (Index k = 0; k < n; ++k)
    for (auto* e : cols)
      if (std::abs((*e)(k)) > 1e-8 * peak) {
        if (lo < 0) lo = k;
        hi = k;
        break;
      }
  return {lo, hi};
}

// Schmidt modes per port: t, then <port><m>_re/_im/_abs. Ports whose mode does not
// convert (rho^2 < 1e-12) are written as zero on the r side.
std::string modes_csv(const SchmidtData& sd, Index max_modes, const std::string& hash,
                      const std::string& figure, const std::vector<std::string>& extra = {}) {
  const Index M = std::min<Index>(max_modes, Index(sd.modes_s_in.size()));
  std::vector<std::string> notes{"rho_sq: " + join(sd.rho.cwiseAbs2(), M)};
  notes.insert(notes.end(), extra.begin(), extra.end());
  Csv csv(hash, figure, notes);
  struct Port {
    std::string name;
    const std::vector<Envelope>* modes;
    bool converted_side;
  };
  std::vector<Port> ports;
  if (sd.has_r_modes()) ports.push_back({"r_in", &sd.modes_r_in, true});
  ports.push_back({"r_out", &sd.modes_r_out, true});
  ports.push_back({"s_in", &sd.modes_s_in, false});
  ports.push_back({"s_out", &sd.modes_s_out, false});

  std::vector<std::string> cols{"t"};
  std::vector<const Envelope*> env;
  std::vector<bool> zero;
  for (const auto& p : ports)
    for (Index m = 0; m < M; ++m) {
      const std::string c = p.name + std::to_string(m + 1);
      cols.insert(cols.end(), {c + "_re", c + "_im", c + "_abs"});
      env.push_back(&(*p.modes)[m]);
      zero.push_back(p.converted_side && sd.rho(m) * sd.rho(m) < 1e-12);
    }
  csv.columns(cols);
  if (env.empty()) return csv.str();
  const TimeGrid& g = env.front()->grid();
  const auto [lo, hi] = active_rows(env);
  std::vector<double> row;
  for (Index k = lo; k <= hi && lo >= 0; ++k) {
    row.assign(1, g.time(k));
    for (std::size_t c = 0; c < env.size(); ++c) {
      const cplx v = zero[c] ? cplx(0) : (*env[c])(k);
      row.insert(row.end(), {v.real(), v.imag(), std::abs(v)});
    }
    csv.row(row);
  }
  return csv.str();
}

std::string basis_note(const std::string& label, const Basis& b) {
  if (b.kind() == BasisKind::HermiteGauss)
    return label + ": hermite-gauss count " + std::to_string(b.size()) + " width " + num(b.width()) +
           " center " + num(b.center());
  return label + ": samples begin " + std::to_string(b.window_begin()) + " count " +
         std::to_string(b.size());
}

void add_matrices(FileList& files, const GreenOperator& G, const std::string& hash,
                  const std::string& prefix) {
  auto one = [&](const std::string& nm, const Eigen::MatrixXcd& M, const Basis& out, const Basis& in) {
    if (M.size() == 0) return;
    Csv csv(hash, "none", {basis_note("rows", out), basis_note("cols", in)});
    csv.columns({"row", "col", "re", "im"});
    for (Index j = 0; j < M.cols(); ++j)
      for (Index i = 0; i < M.rows(); ++i) csv.row({double(i), double(j), M(i, j).real(), M(i, j).imag()});
    files.emplace_back(prefix + nm + ".csv", csv.str());
  };
  one("g_rr", G.rr, G.out_r, G.in_r);
  one("g_rs", G.rs, G.out_r, G.in_s);
  one("g_sr", G.sr, G.out_s, G.in_r);
  one("g_ss", G.ss, G.out_s, G.in_s);
}

json base_summary(const ExperimentConfig& cfg) {
  json j;
  j["job"] = std::string(name(cfg.job));
  j["selectivity"] = nullptr;
  j["rho_sq"] = json::array();
  j["tau_sq"] = json::array();
  j["mu11"] = nullptr;
  j["eta11"] = nullptr;
  j["gamma_calibrated"] = nullptr;
  j["theta0"] = nullptr;
  return j;
}

void put_schmidt(json& j, const SchmidtData& sd) {
  j["selectivity"] = jnum(sd.selectivity);
  j["rho_sq"] = json::array();
  j["tau_sq"] = json::array();
  for (Index k = 0; k < sd.rho.size(); ++k) j["rho_sq"].push_back(jnum(sd.rho(k) * sd.rho(k)));
  for (Index k = 0; k < sd.tau.size(); ++k) j["tau_sq"].push_back(jnum(sd.tau(k) * sd.tau(k)));
  j["retained_modes"] = sd.retained;
}

ExtractionOptions extraction(const ExperimentConfig& cfg) {
  ExtractionOptions eo;
  eo.basis_size = cfg.stage.basis_size;
  return eo;
}

// Stage factory for the configured mixing, on a grid fitted to the pump width.
struct Setup {
  TimeGrid grid;
  StageFactory factory;
};

Setup setup(const ExperimentConfig& cfg, const JobUnit& u, const TimeGrid& base) {
  const StageBlock& st = cfg.stage;
  const int s0 = st.dispersion_sign;
  if (st.mixing == Mixing::ThreeWave) {
    const double tau = cfg.job == JobType::ZetaSweep ? 1 / u.zeta : st.pump_width();
    const TimeGrid g = twm_grid_for(tau, base);
    const StageFactory f = twm_factory(g, tau, st.gvm_partner);
    return {g, [f, s0](int i, int sign, double gamma) { return f(i, sign * s0, gamma); }};
  }
  std::optional<std::pair<double, double>> kappa;
  if (st.kappa_p || st.kappa_q) kappa = std::pair{st.kappa_p.value_or(0), st.kappa_q.value_or(0)};
  if ((st.kappa_p.has_value()) != (st.kappa_q.has_value()))
    throw Error(Errc::InvalidArgument, "kappa_p and kappa_q must be given together");
  const StageFactory f = fwm_factory(base, st.pump_width(), st.pump_width_q(), u.chirp, kappa);
  return {base, [f, s0](int i, int sign, double gamma) { return f(i, sign * s0, gamma); }};
}

struct Calibrated {
  CascadeSpec spec;
  double gamma = 0;
  bool from_config = false;
  std::optional<double> gamma_polished;
  double target_ce = 0;
};

Calibrated calibrated_spec(const ExperimentConfig& cfg, const CascadeTemplate& tpl,
                           std::optional<double> gamma, const ExtractionOptions& eo) {
  Calibrated c;
  c.target_ce = cfg.stage.target_ce.value_or(multistage_target_ce(tpl.n_stages));
  if (gamma) {
    c.gamma = *gamma;
    c.from_config = true;
    c.spec = build_cascade(tpl, c.gamma);
    return c;
  }
  CalibrationOptions copt;
  copt.extraction = eo;
  if (cfg.stage.target_ce) {
    c.gamma = calibrate_gamma(tpl.factory(1, +1, 0.0), c.target_ce, copt);
    c.spec = build_cascade(tpl, c.gamma);
    return c;
  }
  const CalibratedCascade cc = calibrate_cascade(tpl, copt);
  c.gamma = cc.gamma;
  c.gamma_polished = cc.gamma_polished;
  c.spec = cc.spec;
  return c;
}

void put_gamma(json& j, const Calibrated& c) {
  j["gamma_calibrated"] = c.from_config ? json(nullptr) : jnum(c.gamma);
  j["gamma"] = jnum(c.gamma_polished.value_or(c.gamma));
  j["gamma_polished"] = c.gamma_polished ? jnum(*c.gamma_polished) : json(nullptr);
  j["target_ce"] = jnum(c.target_ce);
}

std::string figure_for_modes(const ExperimentConfig& cfg, bool stage_level) {
  if (cfg.stage.mixing == Mixing::FourWave) return stage_level ? "12" : "13";
  return stage_level ? "5" : "6";
}

std::string chirp_csv(const CascadeSpec& spec, const std::string& hash) {
  Csv csv(hash, "11", {"phases in radians"});
  std::vector<std::string> cols{"t"};
  std::vector<LaunchedPumps> lp;
  std::vector<const Envelope*> env;
  for (std::size_t k = 0; k < spec.stages.size(); ++k) {
    lp.push_back(launch_pumps(spec.stages[k]));
    cols.push_back("stage" + std::to_string(k + 1) + "_alpha_p");
    cols.push_back("stage" + std::to_string(k + 1) + "_alpha_q");
  }
  for (std::size_t k = 0; k < spec.stages.size(); ++k) {
    env.push_back(&spec.stages[k].pump_p);
    env.push_back(&spec.stages[k].pump_q);
  }
  csv.columns(cols);
  const TimeGrid& g = spec.stages.front().grid;
  const auto [lo, hi] = active_rows(env);
  for (Index i = lo; i <= hi && lo >= 0; ++i) {
    std::vector<double> row{g.time(i)};
    for (const auto& l : lp) row.insert(row.end(), {l.phase_p(i), l.phase_q(i)});
    csv.row(row);
  }
  return csv.str();
}

std::string trace_csv(const std::vector<TracePoint>& tr, int n_stages, const std::string& hash) {
  Csv csv(hash, "10", {"z in units of the stage length; stages joined without gaps",
                       "stages: " + std::to_string(n_stages)});
  csv.columns({"z", "converted_fraction", "sinusoid"});
  for (const auto& p : tr) {
    const double s = std::sin(std::numbers::pi * p.z / (2 * n_stages));
    csv.row({p.z, p.converted_fraction, s * s});
  }
  return csv.str();
}

// -- jobs ---------------------------------------------------------------------

JobResult job_single(const ExperimentConfig& cfg, const TimeGrid& base, const RunOptions& opt,
                     const std::string& hash) {
  JobResult res;
  res.summary = base_summary(cfg);
  const auto units = enumerate_jobs(cfg);
  const ExtractionOptions eo = extraction(cfg);
  const Setup su = setup(cfg, units.front(), base);
  CascadeTemplate tpl{su.factory, 1, Configuration::RC, 0.0};

  if (cfg.scan.gamma_values.empty() || cfg.job == JobType::GreenExtract) {
    const Calibrated c = calibrated_spec(cfg, tpl, cfg.stage.gamma, eo);
    const GreenOperator G = extract_green(c.spec.stages.front(), eo);
    const SchmidtData sd = schmidt(G);
    put_schmidt(res.summary, sd);
    put_gamma(res.summary, c);
    res.summary["rs_energy"] = jnum(G.rs.squaredNorm());
    res.summary["min_captured"] = jnum(G.min_captured);
    const std::string fig = cfg.job == JobType::GreenExtract ? "none" : "2";
    res.files.emplace_back("modes.csv", modes_csv(sd, 4, hash, fig));
    if (cfg.job == JobType::GreenExtract) {
      const Eigen::VectorXd sv = operator_singular_values(G);
      Csv csv(hash, "none", {"singular values of the combined operator"});
      csv.columns({"index", "sigma"});
      for (Index k = 0; k < sv.size(); ++k) csv.row({double(k + 1), sv(k)});
      res.files.emplace_back("singular_values.csv", csv.str());
      res.summary["unitarity_residual"] = jnum(unitarity_residual(G));
    }
    if (cfg.output.export_full_matrices) add_matrices(res.files, G, hash, "");
    if (cfg.stage.mixing == Mixing::FourWave) res.files.emplace_back("chirp_profiles.csv", chirp_csv(c.spec, hash));
    res.diag_stage = c.spec.stages.front();
    return res;
  }

  // gamma scan
  const std::size_t m = units.size();
  std::vector<SchmidtData> sds(m);
  ExtractionOptions so = eo;
  so.r_inputs = false;
  parallel_for(m, opt.jobs, [&](std::size_t k) {
    sds[k] = schmidt(extract_green(build_cascade(tpl, *units[k].gamma).stages.front(), so));
  });
  Csv scan(hash, "2");
  scan.columns({"gamma", "selectivity", "rho1_sq", "rho2_sq", "rho3_sq"});
  json rows = json::array();
  double best = -1;
  for (std::size_t k = 0; k < m; ++k) {
    const auto& sd = sds[k];
    auto r2 = [&](Index i) { return i < sd.rho.size() ? sd.rho(i) * sd.rho(i) : 0.0; };
    scan.row({*units[k].gamma, sd.selectivity, r2(0), r2(1), r2(2)});
    rows.push_back(json{{"gamma", jnum(*units[k].gamma)}, {"selectivity", jnum(sd.selectivity)},
                        {"rho1_sq", jnum(r2(0))}, {"rho2_sq", jnum(r2(1))}});
    if (sd.selectivity > best) {
      best = sd.selectivity;
      put_schmidt(res.summary, sd);
    }
  }
  res.summary["max_selectivity"] = jnum(best);
  res.summary["rows"] = rows;
  res.files.emplace_back("gamma_scan.csv", scan.str());

  // first s-input mode at each gamma
  Csv modes(hash, "2");
  std::vector<std::string> cols{"t"};
  std::vector<const Envelope*> env;
  for (std::size_t k = 0; k < m; ++k) {
    const std::string c = "gamma" + std::to_string(k + 1);
    cols.insert(cols.end(), {c + "_re", c + "_im", c + "_abs"});
    env.push_back(&sds[k].modes_s_in.front());
  }
  modes.columns(cols);
  const auto [lo, hi] = active_rows(env);
  for (Index i = lo; i <= hi && lo >= 0; ++i) {
    std::vector<double> row{env.front()->grid().time(i)};
    for (auto* e : env) row.insert(row.end(), {(*e)(i).real(), (*e)(i).imag(), std::abs((*e)(i))});
    modes.row(row);
  }
  res.files.emplace_back("s_input_modes.csv", modes.str());
  res.diag_stage = build_cascade(tpl, *units.front().gamma).stages.front();
  return res;
}

JobResult job_cascade(const ExperimentConfig& cfg, const TimeGrid& base, const std::string& hash) {
  JobResult res;
  res.summary = base_summary(cfg);
  const JobUnit u = enumerate_jobs(cfg).front();
  const ExtractionOptions eo = extraction(cfg);
  const Setup su = setup(cfg, u, base);
  CascadeTemplate tpl{su.factory, u.n_stages, u.configuration, u.theta};
  const Calibrated c = calibrated_spec(cfg, tpl, u.gamma, eo);
  CascadeOptions co;
  co.extraction = eo;
  co.composite_r_inputs = cfg.cascade.r_input_modes;
  const CascadeReport rep = run_cascade(c.spec, co);

  put_schmidt(res.summary, rep.schmidt);
  if (!rep.overlaps.empty()) {
    const auto& ov = rep.overlaps.front();
    if (ov.mu.size()) res.summary["mu11"] = jcplx(ov.mu(0, 0));
    if (ov.eta.size()) res.summary["eta11"] = jcplx(ov.eta(0, 0));
  }
  put_gamma(res.summary, c);
  if (rep.theta0) res.summary["theta0"] = jnum(*rep.theta0);
  res.summary["stages"] = u.n_stages;
  res.summary["configuration"] = u.configuration == Configuration::RC ? "rc" : "dc";
  res.summary["theta"] = jnum(u.theta);
  json ce = json::array();
  for (const auto& s : rep.calibration) ce.push_back(jnum(s.achieved_ce));
  res.summary["stage_ce"] = ce;
  res.summary["trace_deviation"] = jnum(sinusoid_deviation(rep.energy_trace, u.n_stages));

  res.files.emplace_back("modes.csv", modes_csv(rep.schmidt, 4, hash, figure_for_modes(cfg, false)));
  for (std::size_t k = 0; k < rep.stage_schmidt.size(); ++k)
    res.files.emplace_back("stage" + std::to_string(k + 1) + "_modes.csv",
                           modes_csv(rep.stage_schmidt[k], 2, hash, figure_for_modes(cfg, true)));
  if (!rep.energy_trace.empty())
    res.files.emplace_back("trace.csv", trace_csv(rep.energy_trace, u.n_stages, hash));
  if (cfg.stage.mixing == Mixing::FourWave)
    res.files.emplace_back("chirp_profiles.csv", chirp_csv(c.spec, hash));
  if (cfg.output.export_full_matrices) add_matrices(res.files, rep.composite, hash, "");
  res.diag_stage = c.spec.stages.front();
  return res;
}

JobResult job_theta(const ExperimentConfig& cfg, const TimeGrid& base, const RunOptions& opt,
                    const std::string& hash) {
  JobResult res;
  res.summary = base_summary(cfg);
  const auto units = enumerate_jobs(cfg);
  const ExtractionOptions eo = extraction(cfg);
  const Setup su = setup(cfg, units.front(), base);
  CascadeTemplate tpl{su.factory, cfg.cascade.stages, cfg.cascade.configuration, 0.0};
  const Calibrated c = calibrated_spec(cfg, tpl, cfg.stage.gamma, eo);
  std::vector<double> thetas;
  for (const auto& u : units) thetas.push_back(u.theta);
  const ThetaScan ts = theta_scan(c.spec, thetas, eo, opt.jobs);

  put_gamma(res.summary, c);
  res.summary["theta0"] = jnum(ts.theta0);
  res.summary["fit_residual"] = jnum(ts.residual);
  double best = -1;
  for (std::size_t k = 0; k < thetas.size(); ++k) best = std::max(best, ts.selectivity[k]);
  res.summary["selectivity"] = jnum(best);
  json rows = json::array();
  Csv csv(hash, "4", {"theta0: " + num(ts.theta0), "fit_residual: " + num(ts.residual)});
  csv.columns({"theta", "rho1_sq", "selectivity", "fit"});
  for (std::size_t k = 0; k < thetas.size(); ++k) {
    const double f = std::cos((thetas[k] - ts.theta0) / 2);
    csv.row({thetas[k], ts.rho1_sq[k], ts.selectivity[k], f * f});
    rows.push_back(json{{"theta", jnum(thetas[k])}, {"rho1_sq", jnum(ts.rho1_sq[k])},
                        {"selectivity", jnum(ts.selectivity[k])}});
  }
  res.summary["rows"] = rows;
  res.files.emplace_back("theta_scan.csv", csv.str());
  res.diag_stage = c.spec.stages.front();
  return res;
}

JobResult job_zeta(const ExperimentConfig& cfg, const TimeGrid& base, const RunOptions& opt,
                   const std::string& hash) {
  JobResult res;
  res.summary = base_summary(cfg);
  TwmSweepBase sb;
  sb.grid = base;
  sb.configuration = cfg.cascade.configuration;
  sb.partner = cfg.stage.gvm_partner;
  sb.theta = cfg.cascade.theta;
  sb.n_stages = cfg.cascade.stages;
  sb.extraction = extraction(cfg);
  const auto pts = zeta_sweep(sb, cfg.scan.zeta_values, opt.jobs);
  Csv csv(hash, "8");
  csv.columns({"zeta", "selectivity", "rho1_sq", "rho2_sq", "gamma", "n_samples", "span", "odd_fraction"});
  json rows = json::array();
  for (const auto& p : pts) {
    csv.row({p.zeta, p.selectivity, p.rho1_sq, p.rho2_sq, p.gamma, double(p.n_samples), p.span, p.odd_fraction});
    rows.push_back(json{{"zeta", jnum(p.zeta)}, {"selectivity", jnum(p.selectivity)},
                        {"rho1_sq", jnum(p.rho1_sq)}, {"rho2_sq", jnum(p.rho2_sq)},
                        {"gamma", jnum(p.gamma)}, {"n_samples", p.n_samples}});
  }
  res.summary["rows"] = rows;
  res.files.emplace_back("zeta_sweep.csv", csv.str());
  JobUnit u;
  u.zeta = cfg.scan.zeta_values.front();
  const Setup su = setup(cfg, u, base);
  res.diag_stage = su.factory(1, +1, pts.front().gamma);
  return res;
}

JobResult job_nsweep(const ExperimentConfig& cfg, const TimeGrid& base, const RunOptions& opt,
                     const std::string& hash) {
  JobResult res;
  res.summary = base_summary(cfg);
  const Setup su = setup(cfg, enumerate_jobs(cfg).front(), base);
  CalibrationOptions copt;
  copt.extraction = extraction(cfg);
  CascadeOptions co;
  co.extraction = copt.extraction;
  const auto pts = stage_count_sweep(su.factory, cfg.scan.n_values, opt.jobs, copt, co);

  Csv table(hash, "8", {"selectivity versus stage count"});
  table.columns({"n_stages", "target_ce", "gamma_rc", "gamma_dc", "achieved_ce_rc", "achieved_ce_dc",
                 "selectivity_rc", "selectivity_dc", "rho1_sq_rc", "rho1_sq_dc", "trace_deviation_rc",
                 "trace_deviation_dc"});
  Csv traces(hash, "10", {"z in units of the stage length; stages joined without gaps"});
  traces.columns({"n_stages", "dc", "z", "converted_fraction", "sinusoid"});
  json rows = json::array();
  for (const auto& p : pts) {
    const double grc = p.calib_rc.gamma_polished.value_or(p.calib_rc.gamma);
    const double gdc = p.calib_dc.gamma_polished.value_or(p.calib_dc.gamma);
    table.row({double(p.n_stages), p.target_ce, grc, gdc, p.calib_rc.achieved_ce, p.calib_dc.achieved_ce,
               p.selectivity_rc, p.selectivity_dc, p.rho1_sq_rc, p.rho1_sq_dc, p.trace_deviation_rc,
               p.trace_deviation_dc});
    for (int dc = 0; dc < 2; ++dc)
      for (const auto& t : dc ? p.trace_dc : p.trace_rc) {
        const double s = std::sin(std::numbers::pi * t.z / (2 * p.n_stages));
        traces.row({double(p.n_stages), double(dc), t.z, t.converted_fraction, s * s});
      }
    rows.push_back(json{{"n_stages", p.n_stages},
                        {"target_ce", jnum(p.target_ce)},
                        {"gamma_calibrated_rc", jnum(p.calib_rc.gamma)},
                        {"gamma_calibrated_dc", jnum(p.calib_dc.gamma)},
                        {"achieved_ce_rc", jnum(p.calib_rc.achieved_ce)},
                        {"achieved_ce_dc", jnum(p.calib_dc.achieved_ce)},
                        {"selectivity_rc", jnum(p.selectivity_rc)},
                        {"selectivity_dc", jnum(p.selectivity_dc)},
                        {"trace_deviation_rc", jnum(p.trace_deviation_rc)},
                        {"trace_deviation_dc", jnum(p.trace_deviation_dc)}});
  }
  res.summary["rows"] = rows;
  res.files.emplace_back("n_sweep.csv", table.str());
  res.files.emplace_back("n_traces.csv", traces.str());
  res.diag_stage = pts.front().calib_rc.spec.stages.front();
  return res;
}

JobResult job_chirp(const ExperimentConfig& cfg, const TimeGrid& base, const RunOptions& opt,
                    const std::string& hash) {
  JobResult res;
  res.summary = base_summary(cfg);
  const auto units = enumerate_jobs(cfg);
  FwmCascadeBase fb;
  fb.grid = base;
  fb.collision_ratio = cfg.stage.collision_ratio;
  fb.extraction = extraction(cfg);
  if (cfg.stage.kappa_p || cfg.stage.kappa_q)
    fb.kappa = std::pair{cfg.stage.kappa_p.value_or(0), cfg.stage.kappa_q.value_or(0)};
  // One coupling for every pair: the chirp leaves the first-stage efficiency unchanged.
  double gamma;
  if (cfg.stage.gamma) {
    gamma = *cfg.stage.gamma;
  } else {
    CalibrationOptions copt;
    copt.extraction = fb.extraction;
    const double tau = fb.tau();
    gamma = calibrate_gamma(fwm_factory(base, tau, tau, units.front().chirp, fb.kappa)(1, +1, 0.0),
                            cfg.stage.target_ce.value_or(0.5), copt);
    res.summary["gamma_calibrated"] = jnum(gamma);
  }
  std::vector<ChirpCheckRow> rows(units.size());
  parallel_for(units.size(), opt.jobs,
               [&](std::size_t k) { rows[k] = run_fwm_cascade(fb, units[k].chirp, gamma); });

  Csv csv(hash, "12", {"flatness: peak-to-peak phase (rad) over the first mode's intensity FWHM"});
  csv.columns({"eps_p", "eps_q", "gamma", "selectivity", "rho1_sq", "rho2_sq", "flat_r_in", "flat_r_out",
               "flat_s_in", "flat_s_out"});
  json jr = json::array();
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const auto& r = rows[k];
    const auto e = *units[k].chirp;
    csv.row({e.first, e.second, r.gamma, r.selectivity, r.rho1_sq, r.rho2_sq, r.flat_r_in, r.flat_r_out,
             r.flat_s_in, r.flat_s_out});
    jr.push_back(json{{"eps_p", jnum(e.first)}, {"eps_q", jnum(e.second)},
                      {"selectivity", jnum(r.selectivity)}, {"rho1_sq", jnum(r.rho1_sq)},
                      {"rho2_sq", jnum(r.rho2_sq)}, {"flat_r_in", jnum(r.flat_r_in)},
                      {"flat_r_out", jnum(r.flat_r_out)}, {"flat_s_in", jnum(r.flat_s_in)},
                      {"flat_s_out", jnum(r.flat_s_out)}});
    const std::string tag = "pair" + std::to_string(k + 1);
    const std::string note = "eps_p: " + num(e.first) + " eps_q: " + num(e.second);
    res.files.emplace_back(tag + "_modes.csv", modes_csv(r.report.schmidt, 2, hash, "13", {note}));
    for (std::size_t s = 0; s < r.report.stage_schmidt.size(); ++s)
      res.files.emplace_back(tag + "_stage" + std::to_string(s + 1) + "_modes.csv",
                             modes_csv(r.report.stage_schmidt[s], 1, hash, "12", {note}));
  }
  if (!rows.empty()) put_schmidt(res.summary, rows.front().report.schmidt);
  res.summary["rows"] = jr;
  res.files.emplace_back("chirp_check.csv", csv.str());
  const double tau = fb.tau();
  CascadeTemplate tpl{fwm_factory(base, tau, tau, units.front().chirp, fb.kappa), 2, Configuration::RC, 0.0};
  const CascadeSpec spec = build_cascade(tpl, gamma);
  res.files.emplace_back("chirp_profiles.csv", chirp_csv(spec, hash));
  res.diag_stage = spec.stages.front();
  return res;
}

Diagnostics diagnose(const StageParams& st, const ExtractionOptions& eo) {
  Diagnostics d;
  ExtractionOptions a = eo;
  a.r_inputs = a.s_inputs = true;
  const GreenOperator G1 = extract_green(st, a);
  d.unitarity_residual = unitarity_residual(G1);
  d.basis_residual = 1 - G1.min_captured;
  ExtractionOptions b = a;
  b.r_inputs = false;
  b.propagation.coupling_substeps = 2;
  const GreenOperator G2 = extract_green(st, b);
  const double scale = std::max(G1.rs.cwiseAbs().maxCoeff(), G1.ss.cwiseAbs().maxCoeff());
  const double diff = std::max((G1.rs - G2.rs).cwiseAbs().maxCoeff(), (G1.ss - G2.ss).cwiseAbs().maxCoeff());
  d.step_doubling_delta = scale > 0 ? diff / scale : 0;
  return d;
}

void write_file(const std::filesystem::path& p, const std::string& content) {
  std::ofstream f(p, std::ios::binary | std::ios::trunc);
  if (!f) throw Error(Errc::Io, "cannot open " + p.string() + " for writing");
  f.write(content.data(), std::streamsize(content.size()));
  f.close();
  if (!f) throw Error(Errc::Io, "write failed for " + p.string());
}

json opt_num(const std::optional<double>& v) { return v ? jnum(*v) : json(nullptr); }

std::string strip_code(const Error& e) {
  const std::string w = e.what();
  const std::string pre = std::string(name(e.code())) + ": ";
  return w.rfind(pre, 0) == 0 ? w.substr(pre.size()) : w;
}

}  // namespace

RunManifest run(const ExperimentConfig& cfg, const RunOptions& opt) {
  const auto t0 = std::chrono::steady_clock::now();
  RunManifest man;
  man.config_sha256 = sha256_hex(cfg.source);
  man.job = std::string(name(cfg.job));
  man.grid_scale = opt.grid_scale;
  man.directory = resolve_output_dir(cfg, opt);

  const std::filesystem::path dir(man.directory);
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec || !std::filesystem::is_directory(dir))
    throw Error(Errc::Io, "cannot create output directory " + man.directory);

  JobResult res;
  try {
    const TimeGrid base = cfg.time_grid(opt.grid_scale);
    switch (cfg.job) {
      case JobType::SingleStage:
      case JobType::GreenExtract: res = job_single(cfg, base, opt, man.config_sha256); break;
      case JobType::Cascade: res = job_cascade(cfg, base, man.config_sha256); break;
      case JobType::ThetaScan: res = job_theta(cfg, base, opt, man.config_sha256); break;
      case JobType::ZetaSweep: res = job_zeta(cfg, base, opt, man.config_sha256); break;
      case JobType::NSweep: res = job_nsweep(cfg, base, opt, man.config_sha256); break;
      case JobType::ChirpCheck: res = job_chirp(cfg, base, opt, man.config_sha256); break;
    }
    if (res.diag_stage) {
      const StageParams& st = *res.diag_stage;
      man.n_samples = st.grid.size();
      man.span = st.grid.span();
      man.dt = st.grid.dt();
      man.dz = step_length(st);
      man.n_steps = step_count(st);
      man.diagnostics = diagnose(st, extraction(cfg));
    }
  } catch (const Error& e) {
    throw Error(e.code(), "job " + man.job + ": " + strip_code(e));
  }

  if (cfg.output.json) {
    res.summary["version"] = std::string(kVersion);
    res.summary["config_sha256"] = man.config_sha256;
    res.files.emplace(res.files.begin(), "summary.json", res.summary.dump(2) + "\n");
  }
  for (const auto& [fname, content] : res.files) {
    const bool is_csv = fname.size() > 4 && fname.substr(fname.size() - 4) == ".csv";
    if (is_csv && !cfg.output.csv) continue;
    write_file(dir / fname, content);
    man.files.push_back({fname, sha256_hex(content), content.size()});
  }

  man.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  json m;
  m["config_sha256"] = man.config_sha256;
  m["version"] = man.version;
  m["job"] = man.job;
  m["grid"] = json{{"n_samples", man.n_samples}, {"span", jnum(man.span)}, {"dt", jnum(man.dt)},
                   {"dz", jnum(man.dz)}, {"n_steps", man.n_steps}, {"grid_scale", man.grid_scale}};
  m["wall_seconds"] = jnum(man.wall_seconds);
  m["diagnostics"] = json{{"step_doubling_delta", opt_num(man.diagnostics.step_doubling_delta)},
                          {"unitarity_residual", opt_num(man.diagnostics.unitarity_residual)},
                          {"basis_residual", opt_num(man.diagnostics.basis_residual)}};
  json files = json::array();
  for (const auto& f : man.files)
    files.push_back(json{{"name", f.name}, {"sha256", f.sha256}, {"bytes", f.bytes}});
  m["files"] = files;
  write_file(dir / "manifest.json", m.dump(2) + "\n");
  return man;
}

}  // namespace tmi
