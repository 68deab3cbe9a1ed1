#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "tmi/runner.hpp"

using namespace tmi;
namespace fs = std::filesystem;

namespace {

const char* kCoarse =
    "[job]\ntype = single-stage\n[grid]\nspan = 2\nn_samples = 512\n"
    "[stage]\nzeta = 20\ngamma = 0\nbasis_size = 12\n[output]\ndirectory = unused\n";

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("tmi_unit_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

std::vector<std::vector<double>> csv_rows(const std::string& text) {
  std::vector<std::vector<double>> rows;
  std::istringstream in(text);
  std::string line;
  bool header = true;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (header) {
      header = false;
      continue;
    }
    std::vector<double> r;
    std::istringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) r.push_back(std::stod(cell));
    rows.push_back(r);
  }
  return rows;
}

std::string csv_header(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line))
    if (!line.empty() && line[0] != '#') return line;
  return {};
}

}  // namespace

TEST_CASE("sha256 test vector") {
  CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  CHECK(sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
}

TEST_CASE("zero-coupling run writes consistent files") {
  const fs::path dir = scratch("zero");
  RunOptions opt;
  opt.out_dir = dir.string();
  const RunManifest man = run(parse_config(kCoarse), opt);
  CHECK(man.config_sha256 == sha256_hex(kCoarse));
  CHECK(man.n_samples == twm_grid_for(0.05, TimeGrid::centered(2.0, 512)).size());

  const auto summary = nlohmann::json::parse(slurp(dir / "summary.json"));
  CHECK(summary["rs_energy"].get<double>() == 0.0);
  CHECK(summary["job"] == "single-stage");

  const std::string modes = slurp(dir / "modes.csv");
  CHECK(modes.find("# config_sha256: " + man.config_sha256) != std::string::npos);
  const std::string head = csv_header(modes);
  CHECK(head.rfind("t,r_in1_re", 0) == 0);
  const auto rows = csv_rows(modes);
  REQUIRE(!rows.empty());
  // r_in and r_out blocks come first, 3 columns per mode, 4 modes each
  double r_side = 0, s_side = 0;
  for (const auto& r : rows) {
    for (std::size_t c = 1; c <= 24; ++c) r_side = std::max(r_side, std::abs(r[c]));
    for (std::size_t c = 25; c < r.size(); ++c) s_side = std::max(s_side, std::abs(r[c]));
  }
  CHECK(r_side == 0.0);
  CHECK(s_side > 0.0);

  const auto m = nlohmann::json::parse(slurp(dir / "manifest.json"));
  REQUIRE(m["files"].size() == man.files.size());
  for (const auto& f : m["files"]) {
    const std::string body = slurp(dir / f["name"].get<std::string>());
    CHECK(sha256_hex(body) == f["sha256"].get<std::string>());
    CHECK(body.size() == f["bytes"].get<std::size_t>());
  }
  CHECK(m["diagnostics"]["unitarity_residual"].get<double>() < 1e-10);
  fs::remove_all(dir);
}

TEST_CASE("repeated runs are bit-identical") {
  const std::string cfg =
      "[job]\ntype = cascade\n[grid]\nspan = 2\nn_samples = 512\n"
      "[stage]\nzeta = 20\nbasis_size = 12\n[cascade]\nstages = 2\n";
  const fs::path a = scratch("rep_a"), b = scratch("rep_b");
  RunOptions oa, ob;
  oa.out_dir = a.string();
  ob.out_dir = b.string();
  ob.jobs = 2;
  const RunManifest ma = run(parse_config(cfg), oa), mb = run(parse_config(cfg), ob);
  REQUIRE(ma.files.size() == mb.files.size());
  for (std::size_t k = 0; k < ma.files.size(); ++k) {
    CHECK(ma.files[k].name == mb.files[k].name);
    CHECK(ma.files[k].sha256 == mb.files[k].sha256);
  }
  CHECK(slurp(a / "summary.json") == slurp(b / "summary.json"));
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST_CASE("output directory precedence") {
  ExperimentConfig cfg = parse_config(kCoarse);
  RunOptions opt;
  ::unsetenv("TMI_OUTPUT_DIR");
  CHECK(resolve_output_dir(cfg, opt) == "unused");
  ::setenv("TMI_OUTPUT_DIR", "from_env", 1);
  CHECK(resolve_output_dir(cfg, opt) == "from_env");
  opt.out_dir = "from_flag";
  CHECK(resolve_output_dir(cfg, opt) == "from_flag");
  ::unsetenv("TMI_OUTPUT_DIR");
}

TEST_CASE("coarse theta scan follows the interference fringe") {
  const std::string cfg =
      "[job]\ntype = theta-scan\n[grid]\nspan = 2\nn_samples = 512\n"
      "[stage]\nzeta = 20\nbasis_size = 12\n[cascade]\nstages = 2\nr_input_modes = off\ntheta_steps = 12\n";
  const fs::path dir = scratch("theta");
  RunOptions opt;
  opt.out_dir = dir.string();
  run(parse_config(cfg), opt);
  const std::string text = slurp(dir / "theta_scan.csv");
  CHECK(csv_header(text) == "theta,rho1_sq,selectivity,fit");
  const auto rows = csv_rows(text);
  REQUIRE(rows.size() == 12);
  double worst = 0;
  for (const auto& r : rows) worst = std::max(worst, std::abs(r[1] - r[3]));
  CHECK(worst < 0.01);
  fs::remove_all(dir);
}

TEST_CASE("command line exit codes") {
  const char* cli = std::getenv("TMI_CLI");
  if (!cli) return;
  const fs::path dir = scratch("cli");
  fs::create_directories(dir);
  {
    std::ofstream(dir / "good.ini") << kCoarse;
    std::ofstream(dir / "bad.ini") << "[stage]\nzetta = 3\n";
  }
  auto status = [&](const std::string& args) {
    const int rc = std::system((std::string(cli) + " " + args + " >/dev/null 2>&1").c_str());
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
  };
  const std::string out = " --out " + (dir / "out").string();
  CHECK(status("run " + (dir / "good.ini").string() + out) == 0);
  CHECK(fs::exists(dir / "out" / "manifest.json"));
  CHECK(status("run " + (dir / "bad.ini").string() + out) == 2);
  CHECK(status("run " + (dir / "missing.ini").string() + out) == 4);
  CHECK(status("run " + (dir / "good.ini").string() + " --jobs 0") == 2);
  CHECK(status("--version") == 0);
  fs::remove_all(dir);
}
