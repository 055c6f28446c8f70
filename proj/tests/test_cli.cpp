#include <doctest.h>

#include <sys/wait.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

namespace fs = std::filesystem;

namespace {

int run(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string(AHL_CLI_PATH) + " " + args + " > " + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("cli exit codes") {
  const auto dir = fs::temp_directory_path() / "ahl_test_cli_codes";
  fs::remove_all(dir);
  fs::create_directories(dir);
  const auto log = dir / "log.txt";
  CHECK(run("", log) == 1);
  CHECK(run("gen-data --task pair_match", log) == 1);
  CHECK(run("attack --ckpt x --data y --ranking sideways", log) == 1);
  CHECK(run("eval --ckpt " + (dir / "missing.ckpt").string() + " --data " + (dir / "nodata").string(), log) == 2);
  CHECK(run("gen-data --task nonsense --out " + (dir / "d").string(), log) != 0);
  CHECK(run("--help", log) == 0);
}

TEST_CASE("cli pipeline end to end") {
  const auto dir = fs::temp_directory_path() / "ahl_test_cli_pipeline";
  fs::remove_all(dir);
  fs::create_directories(dir);
  const auto log = dir / "log.txt";
  const std::string d = dir.string();
  {
    std::ofstream cfg(dir / "train.json");
    cfg << R"({"model": {"num_layers": 2, "num_heads": 2, "d_model": 8, "d_ff": 16}, "train": {"epochs": 1}})";
  }
  REQUIRE(run("gen-data --task keyword_sentiment --seq-len 10 --n-train 64 --n-dev 16 --n-test 16 --seed 3 --out " +
                  d + "/data",
              log) == 0);
  CHECK(fs::exists(dir / "data" / "vocab.txt"));
  REQUIRE(run("train --data " + d + "/data --config " + d + "/train.json --out-ckpt " + d + "/m.ckpt", log) == 0);
  CHECK(run("eval --ckpt " + d + "/m.ckpt --data " + d + "/data", log) == 0);
  CHECK(run("heatmap --ckpt " + d + "/m.ckpt --data " + d + "/data --index 2 --layer 1 --head 0 --format pgm --out " +
                d + "/h.pgm",
            log) == 0);
  CHECK(slurp(dir / "h.pgm").rfind("P5\n10 10\n255\n", 0) == 0);
  CHECK(run("heatmap --ckpt " + d + "/m.ckpt --data " + d + "/data --layer 5 --out " + d + "/bad.csv", log) != 0);
  REQUIRE(run("attack --ckpt " + d + "/m.ckpt --data " + d + "/data --alpha 0.2 --lmax 2 --hmax 1 --no-accumulate " +
                  "--ranking attention_score --report " + d + "/r.json",
              log) == 0);
  const auto report = nlohmann::json::parse(slurp(dir / "r.json"));
  CHECK(report["config"]["attack"]["accumulate"] == false);
  CHECK(report["config"]["attack"]["ranking"] == "attention_score");
  CHECK(report["metrics"]["n_samples"] == 16);
  REQUIRE(run("report --merge " + d + "/r.json " + d + "/r.json --out " + d + "/m.csv", log) == 0);
  const std::string merged = slurp(dir / "m.csv");
  CHECK(std::count(merged.begin(), merged.end(), '\n') == 3);
}
