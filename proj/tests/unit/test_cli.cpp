#include "doctest.h"

#include <nlohmann/json.hpp>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace fs = std::filesystem;

namespace {

int run(const std::string& args) {
  const std::string cmd = std::string(LATENTFORGE_CLI) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("latentforge_cli_" + std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string str() const { return path.string(); }
};

}  // namespace

TEST_CASE("usage errors exit with 2") {
  CHECK(run("--help") == 0);
  CHECK(run("") == 2);
  CHECK(run("no-such-command") == 2);
  CHECK(run("evaluate") == 2);  // --designs is required
  CHECK(run("synth --config /nonexistent/config.json") == 2);
}

TEST_CASE("config problems exit with 2") {
  TempDir dir;
  const fs::path bad = dir.path / "bad.json";
  std::ofstream(bad) << "{ not json";
  CHECK(run("synth --config " + bad.string() + " --out " + dir.str()) == 2);

  const fs::path cfg = dir.path / "config.json";
  CHECK(run("init-config --config " + cfg.string()) == 0);
  auto root = nlohmann::json::parse(slurp(cfg));
  root["landscape"].erase("d_model");
  std::ofstream(dir.path / "missing.json") << root.dump();
  CHECK(run("synth --config " + (dir.path / "missing.json").string() + " --out " + dir.str()) == 2);

  root = nlohmann::json::parse(slurp(cfg));
  root["landscape"]["n_motifs"] = 100;
  std::ofstream(dir.path / "invalid.json") << root.dump();
  CHECK(run("synth --config " + (dir.path / "invalid.json").string() + " --out " + dir.str()) == 2);
}

TEST_CASE("missing workspace inputs exit with 3") {
  TempDir dir;
  CHECK(run("train-sae --out " + dir.str()) == 3);
  CHECK(run("evaluate --designs nothing.csv --out " + dir.str()) == 3);
}

TEST_CASE("synth writes provenance-stamped outputs") {
  TempDir dir;
  REQUIRE(run("synth --seed 4 --out " + dir.str()) == 0);
  for (const char* f : {"landscape.json", "dms.csv", "msa.emb1", "dms.emb1", "manifest.json"})
    CHECK(fs::exists(dir.path / f));
  const std::string dms = slurp(dir.path / "dms.csv");
  CHECK(dms.rfind("# config_hash=", 0) == 0);
  CHECK(dms.find("seed=4") != std::string::npos);
  const auto landscape = nlohmann::json::parse(slurp(dir.path / "landscape.json"));
  CHECK(landscape.at("seed") == 4);
  CHECK(run("design --method random --out " + dir.str()) == 0);
  CHECK(run("evaluate --designs designs_random.csv --out " + dir.str()) == 0);
  CHECK(run("evaluate --designs designs_random.csv --oracle lookup --out " + dir.str()) == 3);
  CHECK(run("design --method bogus --out " + dir.str()) == 2);
}
