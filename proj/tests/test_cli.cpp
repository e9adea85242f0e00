#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "doctest.h"
#include "ptpmm/harness.hpp"

using namespace ptpmm;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out, err;
};

Run cli(std::vector<std::string> args) {
  args.insert(args.begin(), "ptpmm");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  auto* old_out = std::cout.rdbuf(out.rdbuf());
  auto* old_err = std::cerr.rdbuf(err.rdbuf());
  const int code = cli_main(static_cast<int>(argv.size()), argv.data());
  std::cout.rdbuf(old_out);
  std::cerr.rdbuf(old_err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct TempDir {
  fs::path path;
  TempDir() : path(fs::temp_directory_path() / ("ptpmm_cli_" + std::to_string(::getpid()))) {
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string operator/(const std::string& name) const { return (path / name).string(); }
};

}  // namespace

TEST_CASE("usage errors") {
  CHECK(cli({}).code == 1);
  CHECK(cli({"--help"}).code == 0);
  const auto r = cli({"estimate", "--in", "x", "--bogus"});
  CHECK(r.code == 1);
  CHECK(!r.err.empty());
  CHECK(cli({"frobnicate"}).code == 1);
  CHECK(cli({"run-experiment", "--trials", "0"}).code == 1);
}

TEST_CASE("runtime errors") {
  CHECK(cli({"estimate", "--in", "/nonexistent/file", "--scheme", "gmle"}).code == 2);
}

TEST_CASE("simulate-delays writes non-negative delays") {
  TempDir dir;
  const auto path = dir / "trace.txt";
  REQUIRE(cli({"simulate-delays", "--traffic", "eg-tm1", "--load", "0.2", "-n", "10000", "--out",
               path})
              .code == 0);
  std::ifstream in(path);
  const auto d = read_trace(in);
  CHECK(d.size() == 10000);
  for (double x : d) CHECK(x >= 0.0);
}

TEST_CASE("estimate gmle on a noiseless fixture") {
  TempDir dir;
  const auto path = dir / "ex.txt";
  {
    std::ofstream f(path);
    f << "# exchange v1\n0 0 2e-05 2e-05\n4e-05 4e-05 6e-05 6e-05\n";
  }
  const auto r = cli({"estimate", "--in", path, "--scheme", "gmle", "--d-ms", "0", "--d-sm", "0"});
  CHECK(r.code == 0);
  CHECK(r.out.rfind("phi=1 delta=0\n", 0) == 0);
}

TEST_CASE("generate, fit and estimate pipeline") {
  TempDir dir;
  REQUIRE(cli({"simulate-delays", "--traffic", "tm1", "--load", "0.4", "-n", "5000", "--seed",
               "3", "--out", dir / "train.txt"})
              .code == 0);
  REQUIRE(cli({"fit-model", "--in", dir / "train.txt", "--fit", "kde", "--out", dir / "kde.txt"})
              .code == 0);
  REQUIRE(cli({"generate-exchange", "--p", "8", "--seed", "4", "--t3-clock", "master", "--out",
               dir / "ex.txt"})
              .code == 0);
  for (const char* s : {"gmle", "lmle", "minimax-k", "minimax-s"}) {
    CAPTURE(s);
    const auto r = cli({"estimate", "--in", dir / "ex.txt", "--model", dir / "kde.txt",
                        "--scheme", s});
    CHECK(r.code == 0);
    CHECK(r.out.find("phi=") == 0);
    CHECK(r.out.find(std::string("scheme=") + s) != std::string::npos);
  }
  CHECK(cli({"fit-model", "--model", "gamma:2,1", "--out", dir / "g.txt"}).code == 0);
  std::ifstream in(dir / "g.txt");
  CHECK(read_delay_model(in).kind() == DelayKind::kGamma);
}

TEST_CASE("run-experiment is reproducible and honors a config file") {
  TempDir dir;
  const std::vector<std::string> base = {"run-experiment", "--model", "exponential:1", "--p",
                                         "4,8", "--trials", "10", "--scheme", "gmle,minimax-k",
                                         "--seed", "7"};
  auto a = base, b = base;
  a.insert(a.end(), {"--out", dir / "a.csv"});
  b.insert(b.end(), {"--threads", "2", "--out", dir / "b.csv"});
  REQUIRE(cli(a).code == 0);
  REQUIRE(cli(b).code == 0);
  const auto csv = slurp(dir / "a.csv");
  CHECK(csv == slurp(dir / "b.csv"));
  CHECK(parse_csv(csv).size() == 4);

  {
    std::ofstream f(dir / "run.cfg");
    f << "# sweep\nmodel = exponential:1\np = 4,8\ntrials = 10\nscheme = gmle,minimax-k\n"
         "seed = 7\n";
  }
  REQUIRE(cli({"run-experiment", "--config", dir / "run.cfg", "--out", dir / "c.csv"}).code == 0);
  CHECK(slurp(dir / "c.csv") == csv);
}
