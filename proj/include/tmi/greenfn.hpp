#pragma once

#include <functional>
#include <optional>
#include <vector>

#include "tmi/basis.hpp"
#include "tmi/cme_solver.hpp"

namespace tmi {

enum class InputBasis { HermiteGauss, Samples };

struct ExtractionOptions {
  Index basis_size = 20;
  std::optional<double> basis_width;        // HG width, pump-matched channels (default: pump width)
  InputBasis pump_matched = InputBasis::HermiteGauss;
  InputBasis cross_channel = InputBasis::Samples;
  double cross_width = 0.35;                // HG width if the cross channel uses HG
  bool r_inputs = true;
  bool s_inputs = true;
  double completeness_tol = 1e-3;
  Index chunk_columns = 128;
  PropagationOptions propagation;
};

// Kernel blocks in basis coordinates: rows index output-basis coefficients,
// columns input-basis coefficients.
struct GreenOperator {
  TimeGrid grid;
  Basis in_r, in_s, out_r, out_s;
  Eigen::MatrixXcd rr, rs, sr, ss;
  double min_captured = 1;  // worst fraction of output energy captured by the output bases

  bool has_r_inputs() const { return rr.cols() > 0; }
  bool has_s_inputs() const { return rs.cols() > 0; }
  Eigen::MatrixXcd block() const;
};

struct StageBases {
  Basis in_r, in_s, out_r, out_s;
};
StageBases stage_bases(const StageParams& st, const ExtractionOptions& opt = {});

// Any linear two-channel map acting on n x K column batches in place.
using ColumnMap = std::function<void(Eigen::MatrixXcd& r, Eigen::MatrixXcd& s)>;

GreenOperator extract_operator(const ColumnMap& map, const StageBases& bases,
                               const ExtractionOptions& opt);
GreenOperator extract_green(const StageParams& st, const ExtractionOptions& opt = {});
GreenOperator extract_green(const StageParams& st, Index basis_size, double basis_width);

struct SchmidtOptions {
  double pairing_tol = 1e-2;
  double retain_tol = 1e-2;
  Index max_modes = 12;  // number of mode envelopes materialized
};

struct SchmidtData {
  Eigen::VectorXd rho, tau;
  // Modes as envelopes (first max_modes) and as basis coordinates (all).
  std::vector<Envelope> modes_r_in, modes_s_in, modes_r_out, modes_s_out;
  Eigen::MatrixXcd coef_r_in, coef_s_in, coef_r_out, coef_s_out;
  Eigen::VectorXd pairing;     // overlap of phi_n with its matched G_ss input subspace
  Eigen::VectorXd bs_pairing;  // |<Phi_n from G_ss, Phi_n via G_sr>|, empty without r inputs
  Index retained = 0;
  double selectivity = 0;
  double tail_mass = 0;  // sum_{j >= 3} rho_j^2

  bool has_r_modes() const { return !modes_r_in.empty(); }
};

SchmidtData schmidt(const GreenOperator& G, const SchmidtOptions& opt = {});

double selectivity(const Eigen::VectorXd& rho);

struct ModeExpansion {
  Eigen::VectorXcd coefficients;
  double residual = 0;
};
ModeExpansion expand_in_modes(const Envelope& field, const std::vector<Envelope>& modes);

// Singular values of the stacked operator over the extracted input columns.
Eigen::VectorXd operator_singular_values(const GreenOperator& G);
double unitarity_residual(const GreenOperator& G);

// Energy fraction of a mode in odd Hermite-Gauss orders (centre/width given).
double odd_order_fraction(const Envelope& mode, double width, double center, Index orders = 40);

}  // namespace tmi
