#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "finsler/cli.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace {

struct RunOutcome {
  int code = -1;
  std::string out;
  std::string err;
};

RunOutcome run_cli(const std::vector<std::string>& args) {
  std::vector<const char*> argv = {"finsler"};
  for (const std::string& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  RunOutcome r;
  r.code = finsler::cli::run(static_cast<int>(argv.size()), argv.data(), out,
                             err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::string grab_value(const std::string& text, const std::string& key) {
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    const std::string prefix = key + " = ";
    if (line.rfind(prefix, 0) == 0) return line.substr(prefix.size());
  }
  return "";
}

}  // namespace

TEST_CASE("mesh-info on the L-shape") {
  const RunOutcome r =
      run_cli({"mesh-info", "--domain", "L_shape", "--h", "0.25"});
  CHECK(r.code == 0);
  CHECK(grab_value(r.out, "area") == "0.75");
  CHECK(grab_value(r.out, "perimeter") == "4");
}

TEST_CASE("solve prints the requested quantity with 12 significant digits") {
  const RunOutcome r =
      run_cli({"solve", "--domain", "unit_square", "--norm", "euclidean",
               "--beta", "1", "--h", "0.1", "--quantity", "lambda_robin"});
  CHECK(r.code == 0);
  const std::string v = grab_value(r.out, "lambda_robin");
  REQUIRE(!v.empty());
  const double lam = std::stod(v);
  CHECK(lam == doctest::Approx(3.417).epsilon(0.01));  // coarse-mesh value
}

TEST_CASE("verify exits 0 with six passing inequalities") {
  const RunOutcome r =
      run_cli({"verify", "--domain", "unit_square", "--norm", "euclidean",
               "--beta", "1", "--h", "0.1"});
  CHECK(r.code == 0);
  for (const char* name : {"kutt_mi", "kutt_40i", "confr", "cont",
                           "lambda_le_m_over_area", "cont1"})
    CHECK(grab_value(r.out, std::string("ineq.") + name + ".pass") == "true");
}

TEST_CASE("verify is byte-identical across repeated runs") {
  const std::vector<std::string> args = {
      "verify", "--domain", "L_shape", "--norm",
      "quadratic", "--A", "4,0,0,1", "--beta",
      "affine(1,0.5,0)", "--h", "0.15"};
  const RunOutcome a = run_cli(args);
  const RunOutcome b = run_cli(args);
  CHECK(a.code == 0);
  CHECK(a.code == b.code);
  CHECK(a.out == b.out);
}

TEST_CASE("sweep prints rows, slope, and limit") {
  const RunOutcome r =
      run_cli({"sweep", "--domain", "unit_square", "--norm", "euclidean",
               "--h", "0.1", "--betas", "1e-1,1e-2"});
  CHECK(r.code == 0);
  CHECK(grab_value(r.out, "P_F/area") == "4");
  CHECK(r.out.find("bounds = pass") != std::string::npos);
  CHECK(r.out.find("FAIL") == std::string::npos);
}

TEST_CASE("output files are written") {
  const std::filesystem::path dir =
      std::filesystem::temp_directory_path() / "finsler_cli_test_out";
  std::filesystem::remove_all(dir);
  const RunOutcome r =
      run_cli({"verify", "--domain", "unit_square", "--norm", "euclidean",
               "--beta", "1", "--h", "0.15", "--out", dir.string()});
  CHECK(r.code == 0);
  CHECK(std::filesystem::exists(dir / "report.txt"));
  CHECK(std::filesystem::exists(dir / "summary.csv"));

  // report file matches the stream output exactly
  std::ifstream in(dir / "report.txt", std::ios::binary);
  std::stringstream file;
  file << in.rdbuf();
  CHECK(file.str() == r.out);
  std::filesystem::remove_all(dir);
}

TEST_CASE("config file mirrors the flags") {
  const std::filesystem::path cfg =
      std::filesystem::temp_directory_path() / "finsler_cli_test.cfg";
  {
    std::ofstream out(cfg);
    out << "[mesh-info]\n";
    out << "domain = L_shape\n";
    out << "h = 0.25\n";
  }
  const RunOutcome from_config = run_cli({"--config", cfg.string()});
  const RunOutcome from_flags =
      run_cli({"mesh-info", "--domain", "L_shape", "--h", "0.25"});
  CHECK(from_config.code == 0);
  CHECK(from_config.out == from_flags.out);
  std::filesystem::remove(cfg);
}

TEST_CASE("invalid input exits 3 with a one-line diagnostic") {
  CHECK(run_cli({"solve", "--no-such-flag"}).code == 3);
  CHECK(run_cli({"solve", "--domain", "dodecagon"}).code == 3);
  CHECK(run_cli({"verify", "--domain", "unit_square", "--beta",
                 "affine(1,-5,0)", "--h", "0.25"})
            .code == 3);
  CHECK(run_cli({"solve", "--beta", "bogus(1)"}).code == 3);
  CHECK(run_cli({"mesh-info", "--mesh-file", "/nonexistent.mesh"}).code == 3);
  CHECK(run_cli({"sweep", "--betas", "1e-2,1e-1", "--h", "0.25"}).code == 3);
  CHECK(run_cli({"solve", "--h", "-0.1"}).code == 3);

  const RunOutcome bad = run_cli({"solve", "--no-such-flag"});
  CHECK(bad.err.rfind("error:", 0) == 0);
  CHECK(std::count(bad.err.begin(), bad.err.end(), '\n') == 1);
}

TEST_CASE("help exits 0") {
  const RunOutcome r = run_cli({"--help"});
  CHECK(r.code == 0);
  CHECK(r.out.find("solve") != std::string::npos);
  CHECK(r.out.find("verify") != std::string::npos);
}
