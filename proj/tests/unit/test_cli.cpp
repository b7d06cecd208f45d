#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

#include "doctest.h"
#include "fixtures.hpp"

namespace {

struct Run {
  int code = -1;
  std::string output;
};

Run run_cli(const std::string& args, const std::filesystem::path& log) {
  const std::string cmd = std::string("\"") + CFFLOW_CLI_PATH + "\" " + args + " > \"" + log.string() + "\" 2>&1";
  const int status = std::system(cmd.c_str());
  Run r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  std::ifstream in(log);
  std::ostringstream os;
  os << in.rdbuf();
  r.output = os.str();
  return r;
}

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("missing dataset is a usage error naming the path") {
    cfflow::testing::TempDir dir;
    const auto missing = dir.path / "no-such.csv";
    auto r = run_cli("ingest --data \"" + missing.string() + "\"", dir.path / "log.txt");
    CHECK(r.code == 2);
    CHECK(r.output.find(missing.string()) != std::string::npos);

    std::ofstream(dir.path / "exp.json") << R"({"dataset": "no-such.csv"})";
    r = run_cli("train --config \"" + (dir.path / "exp.json").string() + "\"", dir.path / "log.txt");
    CHECK(r.code == 2);
    CHECK(r.output.find(missing.string()) != std::string::npos);
  }

  TEST_CASE("help and unknown subcommands") {
    cfflow::testing::TempDir dir;
    CHECK(run_cli("--help", dir.path / "log.txt").code == 0);
    CHECK(run_cli("frobnicate", dir.path / "log.txt").code != 0);
  }

  TEST_CASE("make-dataset, train, generate and evaluate") {
    cfflow::testing::TempDir dir;
    const auto log = dir.path / "log.txt";
    const auto csv = (dir.path / "moons.csv").string(), bundle = (dir.path / "bundle").string();
    REQUIRE(run_cli("make-dataset --kind two-moons --rows 300 --seed 1 --out \"" + csv + "\"", log).code == 0);
    std::ofstream(dir.path / "exp.json") << R"({"dataset": "moons.csv", "output": "bundle", "seed": 2,
      "classifier": {"kind": "mlp-2-layer", "hidden": 8},
      "train": {"steps": 50, "k": 4, "batch_instances": 32},
      "flow": {"layers": 2, "hidden": 16}})";
    auto r = run_cli("train --config \"" + (dir.path / "exp.json").string() + "\"", log);
    INFO(r.output);
    REQUIRE(r.code == 0);
    const auto out = (dir.path / "cfs.csv").string();
    r = run_cli("generate --bundle \"" + bundle + "\" --input \"" + csv + "\" --n 3 --seed 4 --out \"" + out + "\"", log);
    INFO(r.output);
    REQUIRE(r.code == 0);
    std::ifstream in(out);
    std::size_t lines = 0;
    for (std::string line; std::getline(in, line);) ++lines;
    CHECK(lines == 1 + 300 * 3);
    const auto report = (dir.path / "report.json").string();
    r = run_cli("evaluate --bundle \"" + bundle + "\" --input \"" + csv + "\" --max-rows 20 --seed 1 --json \"" +
                    report + "\"",
                log);
    INFO(r.output);
    REQUIRE(r.code == 0);
    CHECK(r.output.find("Validity") != std::string::npos);
    CHECK(std::filesystem::exists(report));
  }
}
