#include "finsler/cli.hpp"

#include "finsler/harness.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <sstream>

namespace finsler::cli {

namespace {

struct CaseOptions {
  std::string domain = "unit_square";
  double r = 1.0;       // disk radius
  double a = 1.0;       // rectangle width / ellipse semi-axis a
  double b = 1.0;       // rectangle height / ellipse semi-axis b
  double h = 0.05;      // mesh size target
  std::string norm = "euclidean";
  std::vector<double> A = {1.0, 0.0, 0.0, 1.0};  // row-major, quadratic norm
  double p = 3.0;
  double eps = 0.1;
  std::string beta = "1.0";
  double tol = -1.0;
  int max_iter = -1;
};

void add_case_options(CLI::App* cmd, CaseOptions& opts, bool with_beta) {
  cmd->set_help_flag("--help", "print help and exit");
  cmd->configurable();  // allow [subcommand] sections in --config files
  cmd->add_option("--domain", opts.domain,
                  "unit_square | rectangle | disk | L_shape | ellipse")
      ->check(CLI::IsMember(
          {"unit_square", "rectangle", "disk", "L_shape", "ellipse"}));
  cmd->add_option("--r", opts.r, "disk radius");
  cmd->add_option("--a", opts.a, "rectangle width / ellipse semi-axis a");
  cmd->add_option("--b", opts.b, "rectangle height / ellipse semi-axis b");
  cmd->add_option("--h", opts.h, "target mesh size")->check(CLI::PositiveNumber);
  cmd->add_option("--norm", opts.norm, "euclidean | quadratic | smoothed-p")
      ->check(CLI::IsMember({"euclidean", "quadratic", "smoothed-p"}));
  cmd->add_option("--A", opts.A,
                  "quadratic norm matrix, row-major a11,a12,a21,a22")
      ->expected(4)
      ->delimiter(',');
  cmd->add_option("--p", opts.p, "smoothed-p exponent (> 1)");
  cmd->add_option("--eps", opts.eps, "smoothed-p regularization (>= 0)");
  if (with_beta)
    cmd->add_option("--beta", opts.beta,
                    "constant | affine(a0,a1,a2) | segments(v1,v2,...)");
  cmd->add_option("--tol", opts.tol, "solver tolerance override (> 0)")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--max-iter", opts.max_iter, "solver iteration cap override")
      ->check(CLI::PositiveNumber);
}

std::vector<double> parse_number_list(const std::string& body) {
  std::vector<double> out;
  std::stringstream ss(body);
  std::string item;
  while (std::getline(ss, item, ',')) {
    size_t pos = 0;
    const double v = std::stod(item, &pos);
    out.push_back(v);
  }
  return out;
}

BetaSpec parse_beta(const std::string& text) {
  const auto paren = text.find('(');
  if (paren == std::string::npos) {
    size_t pos = 0;
    const double c = std::stod(text, &pos);
    return BetaSpec::constant_value(c);
  }
  if (text.back() != ')')
    throw std::invalid_argument("beta: missing closing parenthesis in '" + text + "'");
  const std::string head = text.substr(0, paren);
  const std::string body = text.substr(paren + 1, text.size() - paren - 2);
  const std::vector<double> vals = parse_number_list(body);
  if (head == "affine") {
    if (vals.size() != 3)
      throw std::invalid_argument("beta: affine() needs exactly 3 coefficients");
    return BetaSpec::affine(vals[0], vals[1], vals[2]);
  }
  if (head == "segments") {
    if (vals.empty())
      throw std::invalid_argument("beta: segments() needs at least one value");
    return BetaSpec::per_segment(vals);
  }
  throw std::invalid_argument("beta: unknown form '" + head + "'");
}

CaseSpec build_case(const CaseOptions& opts) {
  CaseSpec c;
  if (opts.domain == "unit_square") {
    c.domain = DomainSpec::unit_square();
  } else if (opts.domain == "rectangle") {
    c.domain = DomainSpec::rectangle(opts.a, opts.b);
  } else if (opts.domain == "disk") {
    c.domain = DomainSpec::disk(opts.r);
  } else if (opts.domain == "L_shape") {
    c.domain = DomainSpec::l_shape();
  } else {
    c.domain = DomainSpec::ellipse(opts.a, opts.b);
  }
  c.domain_name = opts.domain;
  c.target_h = opts.h;
  if (opts.norm == "euclidean") {
    c.norm = NormSpec::euclidean();
  } else if (opts.norm == "quadratic") {
    Matrix2 A;
    A << opts.A[0], opts.A[1], opts.A[2], opts.A[3];
    c.norm = NormSpec::quadratic(A);
  } else {
    c.norm = NormSpec::smoothed_p(opts.p, opts.eps);
  }
  c.norm_name = opts.norm;
  c.beta = parse_beta(opts.beta);
  if (opts.tol > 0.0) {
    c.solver.tol = opts.tol;
    c.solver.nonlinear_tol = opts.tol;
  }
  if (opts.max_iter > 0) c.solver.max_iter = opts.max_iter;
  return c;
}

// write-then-rename so readers never observe a partial file
void write_atomic(const std::filesystem::path& path, const std::string& data) {
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw std::invalid_argument("cannot open output file " + tmp.string());
    out << data;
  }
  std::filesystem::rename(tmp, path);
}

int run_solve(const CaseOptions& opts, const std::string& quantity,
              std::ostream& out) {
  const CaseSpec c = build_case(opts);
  const Mesh mesh = generate_mesh(c.domain, c.target_h);
  const BoundaryWeight beta = realize_beta(c.beta, mesh);

  auto emit = [&](const EigenResult& r) {
    out << quantity_name(r.quantity) << " = " << format_number(r.value) << "\n";
    if (!std::isnan(r.plain_value))
      out << "q_plain = " << format_number(r.plain_value) << "\n";
  };
  const double bc = c.beta.is_constant() ? c.beta.constant : -1.0;
  if (quantity == "lambda_robin" || quantity == "all")
    emit(lambda_robin(mesh, beta, c.norm, c.solver));
  if (quantity == "lambda_dirichlet" || quantity == "all")
    emit(lambda_dirichlet(mesh, c.norm, c.solver));
  if (quantity == "sigma" || quantity == "all")
    emit(sigma(mesh, beta, c.norm, c.solver));
  if (quantity == "mu_neumann" || quantity == "all")
    emit(mu_neumann(mesh, c.norm, c.solver));
  if (quantity == "q_beta" || quantity == "all")
    emit(q_value(mesh, beta, c.norm, c.solver, bc));
  return 0;
}

int run_verify(const CaseOptions& opts, const std::string& out_dir,
               std::ostream& out) {
  const CaseSpec c = build_case(opts);
  VerificationReport report = verify_theorem(c);
  const std::string text = render_report(report);
  out << text;
  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    write_atomic(std::filesystem::path(out_dir) / "report.txt", text);
    write_atomic(std::filesystem::path(out_dir) / "summary.csv",
                 render_csv({report}));
  }
  if (report.any_solver_failure()) return 2;
  return report.all_pass() ? 0 : 1;
}

int run_sweep(const CaseOptions& opts, const std::vector<double>& betas,
              const std::string& out_dir, std::ostream& out) {
  CaseSpec c = build_case(opts);
  if (!c.beta.is_constant())
    throw std::invalid_argument("sweep: requires a constant-beta case template");
  const SweepRecord rec = beta_sweep(c, betas);
  for (const auto& row : rec.rows)
    out << "beta = " << format_number(row.beta)
        << "  lambda/beta = " << format_number(row.lambda_over_beta)
        << "  bounds = " << (row.bounds_pass ? "pass" : "FAIL") << "\n";
  out << "extrapolated_slope = " << format_number(rec.extrapolated_slope)
      << "\n";
  out << "P_F/area = " << format_number(rec.limit) << "\n";
  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    write_atomic(std::filesystem::path(out_dir) / "sweep.dat",
                 render_sweep_data(rec));
  }
  for (const auto& row : rec.rows)
    if (!row.bounds_pass) return 1;
  return 0;
}

int run_mesh_info(const CaseOptions& opts, const std::string& mesh_file,
                  const std::string& save_path, std::ostream& out) {
  Mesh mesh;
  if (!mesh_file.empty()) {
    mesh = load_mesh_file(mesh_file);
  } else {
    const CaseSpec c = build_case(opts);
    mesh = generate_mesh(c.domain, c.target_h);
  }
  const CaseSpec c = build_case(opts);
  out << "vertices = " << mesh.num_vertices() << "\n";
  out << "triangles = " << mesh.num_triangles() << "\n";
  out << "boundary_edges = " << mesh.boundary_edges.size() << "\n";
  out << "area = " << format_number(area(mesh)) << "\n";
  out << "perimeter = "
      << format_number(anisotropic_perimeter(mesh, NormSpec::euclidean()))
      << "\n";
  out << "perimeter_F = " << format_number(anisotropic_perimeter(mesh, c.norm))
      << "\n";
  if (!save_path.empty()) {
    std::ostringstream data;
    save_mesh(mesh, data);
    write_atomic(save_path, data.str());
  }
  return 0;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out,
        std::ostream& err) {
  CLI::App app{"Robin eigenvalues of the Finsler Laplacian: solves, "
               "inequality verification, and beta sweeps"};
  app.set_help_flag("--help", "print help and exit");
  app.set_config("--config", "", "key = value config file mirroring the flags");
  app.require_subcommand(1);

  CaseOptions solve_opts, verify_opts, sweep_opts, mesh_opts;
  std::string quantity = "all";
  std::string out_dir;
  std::string betas_text = "1e-1,1e-2,1e-3";
  std::string mesh_file, save_path;

  CLI::App* solve_cmd = app.add_subcommand("solve", "compute one spectral quantity");
  add_case_options(solve_cmd, solve_opts, true);
  solve_cmd->add_option("--quantity", quantity,
                        "lambda_robin | lambda_dirichlet | sigma | mu_neumann "
                        "| q_beta | all")
      ->check(CLI::IsMember({"lambda_robin", "lambda_dirichlet", "sigma",
                             "mu_neumann", "q_beta", "all"}));

  CLI::App* verify_cmd =
      app.add_subcommand("verify", "verify every inequality on one case");
  add_case_options(verify_cmd, verify_opts, true);
  verify_cmd->add_option("--out", out_dir, "output directory for report files");

  CLI::App* sweep_cmd =
      app.add_subcommand("sweep", "constant-beta sweep toward beta -> 0");
  add_case_options(sweep_cmd, sweep_opts, true);
  sweep_cmd->add_option("--betas", betas_text,
                        "strictly decreasing positive grid, comma separated");
  sweep_cmd->add_option("--out", out_dir, "output directory for plot data");

  CLI::App* mesh_cmd = app.add_subcommand("mesh-info", "mesh statistics");
  add_case_options(mesh_cmd, mesh_opts, false);
  mesh_cmd->add_option("--mesh-file", mesh_file, "load a mesh instead of generating");
  mesh_cmd->add_option("--save", save_path, "write the mesh in exchange format");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      out << app.help();
      return 0;
    }
    err << "error: " << e.what() << "\n";
    return 3;
  }

  try {
    if (solve_cmd->parsed()) return run_solve(solve_opts, quantity, out);
    if (verify_cmd->parsed()) return run_verify(verify_opts, out_dir, out);
    if (sweep_cmd->parsed())
      return run_sweep(sweep_opts, parse_number_list(betas_text), out_dir, out);
    if (mesh_cmd->parsed())
      return run_mesh_info(mesh_opts, mesh_file, save_path, out);
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }
  return 3;
}

}  // namespace finsler::cli
