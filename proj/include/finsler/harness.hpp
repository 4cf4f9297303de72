#pragma once

#include "finsler/eigensolvers.hpp"
#include "finsler/fem.hpp"
#include "finsler/mesh.hpp"
#include "finsler/norms.hpp"

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace finsler {

// Boundary weight specification, evaluated on the actual mesh boundary.
struct BetaSpec {
  enum class Kind { Constant, Affine, Segments };
  Kind kind = Kind::Constant;
  double constant = 1.0;
  double a0 = 1.0, a1 = 0.0, a2 = 0.0;  // a0 + a1 x + a2 y on the boundary
  std::vector<double> segments;

  static BetaSpec constant_value(double c) {
    BetaSpec b; b.kind = Kind::Constant; b.constant = c; return b;
  }
  static BetaSpec affine(double a0, double a1, double a2) {
    BetaSpec b; b.kind = Kind::Affine; b.a0 = a0; b.a1 = a1; b.a2 = a2; return b;
  }
  static BetaSpec per_segment(std::vector<double> values) {
    BetaSpec b; b.kind = Kind::Segments; b.segments = std::move(values); return b;
  }

  bool is_constant() const { return kind == Kind::Constant; }
  std::string describe() const;
};

// Realizes the spec on a mesh; throws if any boundary value is <= 0.
BoundaryWeight realize_beta(const BetaSpec& beta, const Mesh& mesh);

struct CaseSpec {
  DomainSpec domain;
  std::string domain_name;  // for report keys
  double target_h = 0.05;
  NormSpec norm;
  std::string norm_name;
  BetaSpec beta;
  EigenOptions solver;  // tolerance overrides flow through here

  std::string key() const;
};

struct QuantityRecord {
  bool available = false;
  double value = 0.0;
  int iterations = 0;
  double residual = 0.0;
  bool restarts_agree = true;
  std::string error;
};

struct InequalityRecord {
  std::string name;
  double lhs = 0.0;
  double rhs = 0.0;
  double slack = 0.0;  // rhs - lhs
  bool pass = false;
  bool evaluated = false;  // false if an input quantity was unavailable
};

struct SweepRow {
  double beta = 0.0;
  double lambda = 0.0;
  double lambda_over_beta = 0.0;
  double sandwich_lower = 0.0;  // P_F sigma / (P_F beta + |Omega| sigma)
  double sandwich_upper = 0.0;  // P_F / |Omega|
  bool bounds_pass = false;
};

struct SweepRecord {
  std::vector<SweepRow> rows;
  double extrapolated_slope = 0.0;  // Richardson over the two smallest betas
  double limit = 0.0;               // P_F / |Omega|
  double relative_error = 0.0;
  bool monotone = true;  // diagnostic only
};

struct DecompositionRecord {
  bool available = false;
  double max_violation = 0.0;   // max over vertices of u - (v + h)
  double energy_slack = 0.0;    // E_F(u) - E_F(v)
  double chain_lhs = 0.0;       // int u^2 at the normalized eigenfunction
  double chain_rhs = 0.0;       // squared Minkowski chain bound
  bool pass = false;
  std::string error;
};

struct VerificationReport {
  std::string case_key;
  double domain_area = 0.0;
  double perimeter_F = 0.0;
  double mass = 0.0;  // m
  std::map<std::string, QuantityRecord> quantities;
  std::vector<InequalityRecord> inequalities;
  std::optional<SweepRecord> sweep;
  std::optional<DecompositionRecord> decomposition;

  bool all_pass() const;
  bool any_solver_failure() const;
};

// Relative slack tolerance shared by every inequality record.
inline double slack_tolerance(double lhs, double rhs) {
  return 1e-8 * (std::abs(lhs) + std::abs(rhs));
}

// Computes all six quantities on one mesh and evaluates the theorem and
// remark inequalities. Solver failures are recorded per quantity; dependent
// inequalities stay unevaluated (never marked pass on missing data).
VerificationReport verify_theorem(const CaseSpec& c);

// Constant-beta sweep over a strictly decreasing positive grid.
SweepRecord beta_sweep(const CaseSpec& case_template,
                       const std::vector<double>& betas);

DecompositionRecord decomposition_check(const CaseSpec& c);

// Case matrix runner; worker count capped by max_threads (<=0: hardware).
// Reports are returned sorted by case key.
std::vector<VerificationReport> run_matrix(const std::vector<CaseSpec>& cases,
                                           int max_threads = 0);

// Structured-text (key = value) report.
std::string render_report(const VerificationReport& report);
// One CSV row per report, preceded by a header line.
std::string render_csv(const std::vector<VerificationReport>& reports);
// Two-column decimal "beta lambda/beta" plot data.
std::string render_sweep_data(const SweepRecord& sweep);

std::string format_number(double v);  // 12 significant digits

}  // namespace finsler
