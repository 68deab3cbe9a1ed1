#pragma once

#include <cmath>
#include <functional>
#include <optional>
#include <vector>

#include "tmi/greenfn.hpp"

namespace tmi {

enum class Configuration { RC, DC };

struct CascadeSpec {
  std::vector<StageParams> stages;
  Configuration configuration = Configuration::RC;
  double theta = 0;  // applied to r at every interface
  // DC only: relative r-vs-s delay per interface in samples; empty means the full walk-off.
  std::vector<Index> dc_delay_samples;
};

struct OverlapMatrix {
  Eigen::MatrixXcd mu, eta;  // eta is empty if stage r-input modes are unavailable
};

// Per-interface translation of each channel (samples).
struct InterfaceShift {
  Index r = 0, s = 0;
};

struct StageCalibration {
  double gamma = 0;
  double achieved_ce = 0;
};

struct TracePoint {
  double z;
  double converted_fraction;
};

struct CascadeOptions {
  ExtractionOptions extraction;
  bool composite_r_inputs = false;  // also extract the composite's r-input columns
  bool stage_analysis = true;       // per-stage Schmidt data and interface overlaps
  bool stage_r_inputs = true;       // needed for eta
  Index overlap_modes = 4;
  int trace_points_per_stage = 65;  // 0 disables the energy trace
  SchmidtOptions schmidt;
};

struct CascadeReport {
  GreenOperator composite;
  SchmidtData schmidt;
  std::vector<SchmidtData> stage_schmidt;
  std::vector<OverlapMatrix> overlaps;
  std::vector<TracePoint> energy_trace;
  std::vector<StageCalibration> calibration;
  std::optional<double> theta0;  // arg(mu11 eta11^*), two-stage only
};

void validate(const CascadeSpec& spec);
InterfaceShift interface_shift(const CascadeSpec& spec, std::size_t interface_index);

// Composite operator by direct N-stage propagation of the stage-1 input basis.
GreenOperator compose_by_propagation(const CascadeSpec& spec, const ExtractionOptions& opt);
// Composite operator by multiplying sample-basis stage operators through the interfaces.
GreenOperator compose_by_products(const CascadeSpec& spec, const ExtractionOptions& opt);

CascadeReport run_cascade(const CascadeSpec& spec, const CascadeOptions& opt = {});

OverlapMatrix interface_overlaps(const SchmidtData& stage1, const SchmidtData& stage2, Index n_modes,
                                 InterfaceShift shift = {});

struct CalibrationOptions {
  double tolerance = 1e-5;  // |rho1^2 - target|
  double gamma_start = 0.25;
  double gamma_max = 20;
  int max_iterations = 200;
  ExtractionOptions extraction;
};

double calibrate_gamma(const StageParams& st, double target_ce, const CalibrationOptions& opt = {});
double first_stage_ce(const StageParams& st, const ExtractionOptions& opt);

inline double multistage_target_ce(int n_stages) {
  return n_stages == 1 ? 0.5 : 0.5 * (1 - std::cos(3.14159265358979323846 / n_stages));
}

// Builds stage `index` (1-based) with the given dispersion sign and gamma.
using StageFactory = std::function<StageParams(int index, int sign, double gamma)>;

struct CascadeTemplate {
  StageFactory factory;
  int n_stages = 2;
  Configuration configuration = Configuration::RC;
  double theta = 0;
};

CascadeSpec build_cascade(const CascadeTemplate& tpl, double gamma);

struct CalibratedCascade {
  CascadeSpec spec;
  double target_ce = 0;
  double gamma = 0;        // from the first-stage target
  double achieved_ce = 0;  // first-stage rho1^2 at that gamma
  std::optional<double> gamma_polished;
  double rho1_sq_before = 0, rho1_sq_after = 0;  // composite, before/after polish
};

// Polish defaults to n_stages > 2.
CalibratedCascade calibrate_cascade(const CascadeTemplate& tpl, const CalibrationOptions& opt = {},
                                    std::optional<bool> polish = {});

StageFactory twm_factory(const TimeGrid& grid, double tau_p, Channel partner = Channel::S);
StageFactory fwm_factory(const TimeGrid& grid, double tau_p, double tau_q,
                         std::optional<std::pair<double, double>> chirp_eps,
                         std::optional<std::pair<double, double>> kappa = {});

// Grid able to host a TWM cascade with pump width tau_p (>= 10 samples per width).
TimeGrid twm_grid_for(double tau_p, const TimeGrid& base);

struct ZetaPoint {
  double zeta = 0;
  double selectivity = 0, rho1_sq = 0, rho2_sq = 0;
  double gamma = 0;
  Index n_samples = 0;
  double span = 0;
  double odd_fraction = 0;  // odd-order HG content of the stage-1 s-input mode
};

struct TwmSweepBase {
  TimeGrid grid = TimeGrid::centered(2.0, 4096);
  Configuration configuration = Configuration::RC;
  Channel partner = Channel::S;
  double theta = 0;
  int n_stages = 2;
  ExtractionOptions extraction;
};

std::vector<ZetaPoint> zeta_sweep(const TwmSweepBase& base, const std::vector<double>& zetas,
                                  int jobs = 1);

struct StageCountPoint {
  int n_stages = 0;
  double target_ce = 0;
  double selectivity_rc = 0, selectivity_dc = 0;
  double rho1_sq_rc = 0, rho1_sq_dc = 0;
  CalibratedCascade calib_rc, calib_dc;
  std::vector<TracePoint> trace_rc, trace_dc;
  double trace_deviation_rc = 0, trace_deviation_dc = 0;  // max |trace - sin^2(pi z/(2N))|
};

std::vector<StageCountPoint> stage_count_sweep(const StageFactory& factory,
                                               const std::vector<int>& n_values, int jobs = 1,
                                               const CalibrationOptions& copt = {},
                                               const CascadeOptions& opt = {});

std::vector<TracePoint> energy_trace(const CascadeSpec& spec, const Envelope& input_s,
                                     int points_per_stage);
double sinusoid_deviation(const std::vector<TracePoint>& trace, int n_stages, double length = 1);

struct ThetaScan {
  std::vector<double> theta, rho1_sq, selectivity;
  double theta0 = 0;
  double residual = 0;  // max |rho1^2 - cos^2((theta - theta0)/2)|
};

ThetaScan theta_scan(const CascadeSpec& spec, const std::vector<double>& thetas,
                     const ExtractionOptions& opt = {}, int jobs = 1);
ThetaScan fit_theta0(std::vector<double> theta, std::vector<double> rho1_sq);

// Runs fn(i) for i in [0, count) on up to `jobs` threads; rethrows the first failure.
void parallel_for(std::size_t count, int jobs, const std::function<void(std::size_t)>& fn);

}  // namespace tmi
