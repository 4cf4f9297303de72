#include "finsler/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace finsler {

std::string format_number(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

std::string BetaSpec::describe() const {
  std::ostringstream os;
  switch (kind) {
    case Kind::Constant:
      os << format_number(constant);
      break;
    case Kind::Affine:
      os << "affine(" << format_number(a0) << "," << format_number(a1) << ","
         << format_number(a2) << ")";
      break;
    case Kind::Segments: {
      os << "segments(";
      for (size_t i = 0; i < segments.size(); ++i)
        os << (i ? "," : "") << format_number(segments[i]);
      os << ")";
      break;
    }
  }
  return os.str();
}

BoundaryWeight realize_beta(const BetaSpec& beta, const Mesh& mesh) {
  switch (beta.kind) {
    case BetaSpec::Kind::Constant:
      return BoundaryWeight(mesh, beta.constant);
    case BetaSpec::Kind::Affine:
      return BoundaryWeight(mesh, [&](const Vector2& p) {
        return beta.a0 + beta.a1 * p.x() + beta.a2 * p.y();
      });
    case BetaSpec::Kind::Segments: {
      if (beta.segments.empty())
        throw std::invalid_argument("BetaSpec: segments() needs at least one value");
      // Arc-length position of every boundary vertex along its loop; the loop
      // is split into equal-arc-length segments carrying the given constants.
      std::map<int, const BoundaryEdge*> next;
      for (const auto& be : mesh.boundary_edges) next[be.v0] = &be;
      std::map<int, double> position;  // vertex -> s in [0,1) on its loop
      std::map<int, bool> done;
      for (const auto& start : mesh.boundary_edges) {
        if (done.count(start.v0)) continue;
        // walk the loop, starting at its smallest vertex index
        int lead = start.v0;
        {
          int v = start.v0;
          do {
            lead = std::min(lead, v);
            v = next.at(v)->v1;
          } while (v != start.v0);
        }
        double total = 0.0;
        std::vector<std::pair<int, double>> walk;
        int v = lead;
        do {
          walk.emplace_back(v, total);
          total += next.at(v)->length;
          v = next.at(v)->v1;
        } while (v != lead);
        for (auto& [vert, s] : walk) {
          position[vert] = s / total;
          done[vert] = true;
        }
      }
      const int n = static_cast<int>(beta.segments.size());
      Eigen::VectorXd values = Eigen::VectorXd::Zero(mesh.num_vertices());
      for (const auto& [vert, s] : position) {
        const int k = std::min(static_cast<int>(s * n), n - 1);
        values[vert] = beta.segments[k];
      }
      return BoundaryWeight(mesh, values);
    }
  }
  throw std::logic_error("realize_beta: unreachable");
}

std::string CaseSpec::key() const {
  std::ostringstream os;
  os << domain_name << "|h=" << format_number(target_h) << "|" << norm_name
     << "|beta=" << beta.describe();
  return os.str();
}

bool VerificationReport::all_pass() const {
  for (const auto& rec : inequalities)
    if (!rec.evaluated || !rec.pass) return false;
  return true;
}

bool VerificationReport::any_solver_failure() const {
  for (const auto& [name, q] : quantities)
    if (!q.available) return true;
  return false;
}

namespace {

QuantityRecord record_of(const EigenResult& r) {
  QuantityRecord q;
  q.available = true;
  q.value = r.value;
  q.iterations = r.iterations;
  q.residual = r.final_residual;
  q.restarts_agree = r.restarts_agree;
  return q;
}

InequalityRecord make_record(const std::string& name, double lhs, double rhs,
                             bool extra_condition = true) {
  InequalityRecord rec;
  rec.name = name;
  rec.lhs = lhs;
  rec.rhs = rhs;
  rec.slack = rhs - lhs;
  rec.evaluated = true;
  rec.pass = (rec.slack >= -slack_tolerance(lhs, rhs)) && extra_condition;
  return rec;
}

InequalityRecord unavailable_record(const std::string& name) {
  InequalityRecord rec;
  rec.name = name;
  rec.evaluated = false;
  rec.pass = false;
  return rec;
}

}  // namespace

VerificationReport verify_theorem(const CaseSpec& c) {
  VerificationReport report;
  report.case_key = c.key();

  const Mesh mesh = generate_mesh(c.domain, c.target_h);
  const BoundaryWeight beta = realize_beta(c.beta, mesh);
  report.domain_area = area(mesh);
  report.perimeter_F = anisotropic_perimeter(mesh, c.norm);
  report.mass = boundary_mass(mesh, beta, c.norm);

  auto compute = [&](const std::string& name, auto&& fn) {
    try {
      report.quantities[name] = record_of(fn());
    } catch (const std::exception& e) {
      QuantityRecord q;
      q.available = false;
      q.error = e.what();
      report.quantities[name] = q;
    }
  };
  compute("lambda_robin", [&] { return lambda_robin(mesh, beta, c.norm, c.solver); });
  compute("lambda_dirichlet", [&] { return lambda_dirichlet(mesh, c.norm, c.solver); });
  compute("sigma", [&] { return sigma(mesh, beta, c.norm, c.solver); });
  compute("mu_neumann", [&] { return mu_neumann(mesh, c.norm, c.solver); });
  compute("q_beta", [&] {
    return q_value(mesh, beta, c.norm, c.solver,
                   c.beta.is_constant() ? c.beta.constant : -1.0);
  });

  auto get = [&](const std::string& name) -> const QuantityRecord* {
    const auto it = report.quantities.find(name);
    return (it != report.quantities.end() && it->second.available) ? &it->second
                                                                   : nullptr;
  };
  const auto* lam = get("lambda_robin");
  const auto* lam_d = get("lambda_dirichlet");
  const auto* sig = get("sigma");
  const auto* mu = get("mu_neumann");
  const auto* q = get("q_beta");
  const double ratio = report.mass / report.domain_area;  // m / |Omega|

  report.inequalities.push_back(
      lam && sig ? make_record("kutt_mi", 1.0 / lam->value,
                               1.0 / sig->value + report.domain_area / report.mass)
                 : unavailable_record("kutt_mi"));
  report.inequalities.push_back(
      lam && lam_d && q
          ? make_record("kutt_40i", 1.0 / lam->value,
                        1.0 / lam_d->value + 1.0 / q->value)
          : unavailable_record("kutt_40i"));
  report.inequalities.push_back(
      sig && mu ? make_record("confr", sig->value, mu->value)
                : unavailable_record("confr"));
  report.inequalities.push_back(
      q ? make_record("cont", q->value, ratio) : unavailable_record("cont"));
  report.inequalities.push_back(
      lam ? make_record("lambda_le_m_over_area", lam->value, ratio)
          : unavailable_record("lambda_le_m_over_area"));
  if (lam && lam_d && q) {
    const double gap = 1.0 / lam->value - 1.0 / lam_d->value;
    const double bound = 1.0 / q->value;
    report.inequalities.push_back(
        make_record("cont1", gap, bound, gap >= -slack_tolerance(gap, bound)));
  } else {
    report.inequalities.push_back(unavailable_record("cont1"));
  }
  return report;
}

SweepRecord beta_sweep(const CaseSpec& case_template,
                       const std::vector<double>& betas) {
  if (!case_template.beta.is_constant())
    throw std::invalid_argument("beta_sweep: constant-beta cases only");
  if (betas.size() < 2)
    throw std::invalid_argument("beta_sweep: need at least two grid points");
  for (size_t i = 0; i < betas.size(); ++i) {
    if (!(betas[i] > 0.0))
      throw std::invalid_argument("beta_sweep: grid must be positive");
    if (i > 0 && !(betas[i] < betas[i - 1]))
      throw std::invalid_argument("beta_sweep: grid must be strictly decreasing");
  }

  const Mesh mesh = generate_mesh(case_template.domain, case_template.target_h);
  const NormSpec& norm = case_template.norm;
  const double a = area(mesh);
  const double pf = anisotropic_perimeter(mesh, norm);
  const double sig =
      sigma(mesh, BoundaryWeight(mesh, 1.0), norm, case_template.solver).value;  // beta-independent

  SweepRecord rec;
  rec.limit = pf / a;
  for (double b : betas) {
    SweepRow row;
    row.beta = b;
    row.lambda = lambda_robin(mesh, BoundaryWeight(mesh, b), norm, case_template.solver).value;
    row.lambda_over_beta = row.lambda / b;
    row.sandwich_upper = pf / a;
    row.sandwich_lower = pf * sig / (pf * b + a * sig);
    const bool upper_ok = row.lambda_over_beta <=
                          row.sandwich_upper +
                              slack_tolerance(row.lambda_over_beta, row.sandwich_upper);
    const bool lower_ok = row.lambda_over_beta >=
                          row.sandwich_lower -
                              slack_tolerance(row.lambda_over_beta, row.sandwich_lower);
    row.bounds_pass = upper_ok && lower_ok;
    rec.rows.push_back(row);
  }
  for (size_t i = 1; i < rec.rows.size(); ++i)
    if (rec.rows[i].lambda_over_beta <
        rec.rows[i - 1].lambda_over_beta - 1e-8)
      rec.monotone = false;

  // Richardson extrapolation with the first-order model lambda/beta = s0 + s1 beta.
  const SweepRow& r1 = rec.rows[rec.rows.size() - 2];
  const SweepRow& r2 = rec.rows.back();
  rec.extrapolated_slope =
      (r2.lambda_over_beta * r1.beta - r1.lambda_over_beta * r2.beta) /
      (r1.beta - r2.beta);
  rec.relative_error = std::abs(rec.extrapolated_slope - rec.limit) / rec.limit;
  return rec;
}

DecompositionRecord decomposition_check(const CaseSpec& c) {
  DecompositionRecord rec;
  try {
    const Mesh mesh = generate_mesh(c.domain, c.target_h);
    const BoundaryWeight beta = realize_beta(c.beta, mesh);
    const NormSpec& norm = c.norm;

    const EigenResult robin = lambda_robin(mesh, beta, norm, c.solver);
    const FemField& u = robin.minimizer;
    const FemField v = solve_dirichlet_matching(norm, u);
    const FemField h = harmonic_extension(norm, mesh, u.coeffs);

    rec.max_violation = (u.coeffs - v.coeffs - h.coeffs).maxCoeff();
    rec.energy_slack = energy(norm, u) - energy(norm, v);

    const double lam_d = lambda_dirichlet(mesh, norm, c.solver).value;
    const double qv =
        q_value(mesh, beta, norm, c.solver,
                c.beta.is_constant() ? c.beta.constant : -1.0)
            .value;
    const AssembledForms forms = assemble_forms(mesh, beta, norm);
    const double u2 = u.coeffs.dot(forms.mass * u.coeffs);
    const double bdry = u.coeffs.dot(forms.boundary * u.coeffs);
    const double chain =
        std::pow(std::sqrt(energy(norm, u) / lam_d) + std::sqrt(bdry / qv), 2);
    rec.chain_lhs = u2;
    rec.chain_rhs = chain;
    rec.available = true;
    rec.pass = rec.max_violation <= 1e-8 && rec.energy_slack >= -1e-9 &&
               u2 <= chain + slack_tolerance(u2, chain);
  } catch (const std::exception& e) {
    rec.available = false;
    rec.error = e.what();
    rec.pass = false;
  }
  return rec;
}

std::vector<VerificationReport> run_matrix(const std::vector<CaseSpec>& cases,
                                           int max_threads) {
  int n_threads = max_threads;
  if (n_threads <= 0) {
    if (const char* env = std::getenv("FINSLER_SPEC_THREADS"))
      n_threads = std::atoi(env);
    if (n_threads <= 0)
      n_threads = static_cast<int>(std::thread::hardware_concurrency());
  }
  n_threads = std::max(1, std::min<int>(n_threads, static_cast<int>(cases.size())));

  std::vector<VerificationReport> reports(cases.size());
  std::atomic<size_t> next{0};
  auto worker = [&] {
    for (;;) {
      const size_t i = next.fetch_add(1);
      if (i >= cases.size()) return;
      reports[i] = verify_theorem(cases[i]);
    }
  };
  std::vector<std::thread> pool;
  for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();

  std::sort(reports.begin(), reports.end(),
            [](const auto& a, const auto& b) { return a.case_key < b.case_key; });
  return reports;
}

std::string render_report(const VerificationReport& report) {
  std::ostringstream os;
  os << "case = " << report.case_key << "\n";
  os << "area = " << format_number(report.domain_area) << "\n";
  os << "perimeter_F = " << format_number(report.perimeter_F) << "\n";
  os << "m = " << format_number(report.mass) << "\n";
  for (const auto& [name, q] : report.quantities) {
    if (q.available) {
      os << name << " = " << format_number(q.value) << "\n";
      os << name << ".iterations = " << q.iterations << "\n";
      os << name << ".residual = " << format_number(q.residual) << "\n";
      os << name << ".restarts_agree = " << (q.restarts_agree ? "true" : "false")
         << "\n";
    } else {
      os << name << " = unavailable\n";
      os << name << ".error = " << q.error << "\n";
    }
  }
  for (const auto& rec : report.inequalities) {
    if (!rec.evaluated) {
      os << "ineq." << rec.name << " = unavailable\n";
      continue;
    }
    os << "ineq." << rec.name << ".lhs = " << format_number(rec.lhs) << "\n";
    os << "ineq." << rec.name << ".rhs = " << format_number(rec.rhs) << "\n";
    os << "ineq." << rec.name << ".slack = " << format_number(rec.slack) << "\n";
    os << "ineq." << rec.name << ".pass = " << (rec.pass ? "true" : "false")
       << "\n";
  }
  if (report.decomposition) {
    const auto& d = *report.decomposition;
    os << "decomposition.max_violation = " << format_number(d.max_violation)
       << "\n";
    os << "decomposition.energy_slack = " << format_number(d.energy_slack)
       << "\n";
    os << "decomposition.pass = " << (d.pass ? "true" : "false") << "\n";
  }
  if (report.sweep) {
    const auto& s = *report.sweep;
    for (const auto& row : s.rows) {
      os << "sweep." << format_number(row.beta)
         << ".lambda_over_beta = " << format_number(row.lambda_over_beta)
         << "\n";
      os << "sweep." << format_number(row.beta)
         << ".bounds_pass = " << (row.bounds_pass ? "true" : "false") << "\n";
    }
    os << "sweep.extrapolated_slope = " << format_number(s.extrapolated_slope)
       << "\n";
    os << "sweep.limit = " << format_number(s.limit) << "\n";
  }
  return os.str();
}

std::string render_csv(const std::vector<VerificationReport>& reports) {
  std::ostringstream os;
  os << "case,area,perimeter_F,m,lambda_robin,lambda_dirichlet,sigma,"
        "mu_neumann,q_beta";
  const char* names[] = {"kutt_mi", "kutt_40i",           "confr",
                         "cont",    "lambda_le_m_over_area", "cont1"};
  for (const char* n : names) os << "," << n << "_slack," << n << "_pass";
  os << "\n";
  for (const auto& r : reports) {
    os << r.case_key << "," << format_number(r.domain_area) << ","
       << format_number(r.perimeter_F) << "," << format_number(r.mass);
    for (const char* qn :
         {"lambda_robin", "lambda_dirichlet", "sigma", "mu_neumann", "q_beta"}) {
      const auto it = r.quantities.find(qn);
      if (it != r.quantities.end() && it->second.available)
        os << "," << format_number(it->second.value);
      else
        os << ",unavailable";
    }
    for (const char* n : names) {
      const auto it = std::find_if(
          r.inequalities.begin(), r.inequalities.end(),
          [&](const InequalityRecord& rec) { return rec.name == n; });
      if (it != r.inequalities.end() && it->evaluated)
        os << "," << format_number(it->slack) << ","
           << (it->pass ? "true" : "false");
      else
        os << ",unavailable,false";
    }
    os << "\n";
  }
  return os.str();
}

std::string render_sweep_data(const SweepRecord& sweep) {
  std::ostringstream os;
  for (const auto& row : sweep.rows)
    os << format_number(row.beta) << " " << format_number(row.lambda_over_beta)
       << "\n";
  return os.str();
}

}  // namespace finsler
