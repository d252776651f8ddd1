#include "taylorglo/cli.hpp"
#include "taylorglo/evolution.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

using namespace taylorglo;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result run(std::vector<std::string> args) {
  args.insert(args.begin(), "taylorglo");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli_dispatch(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("taylorglo_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

void write(const fs::path& p, const std::string& text) { std::ofstream(p) << text; }

}  // namespace

TEST_CASE("param-count for two variables at order three") {
  auto full = run({"param-count", "--n", "2", "--k", "3"});
  CHECK(full.code == 0);
  CHECK(full.out == "12\n");
  auto trimmed = run({"param-count", "--n", "2", "--k", "3", "--trimmed"});
  CHECK(trimmed.code == 0);
  CHECK(trimmed.out == "8\n");
}

TEST_CASE("plot-loss at theta zero is flat zero") {
  auto r = run({"plot-loss", "--theta", "0,0,0,0,0,0,0,0", "--resolution", "20"});
  REQUIRE(r.code == 0);
  std::istringstream in(r.out);
  std::string line;
  std::getline(in, line);
  CHECK(line == "y0,shifted_loss");
  int rows = 0;
  while (std::getline(in, line)) {
    const auto comma = line.find(',');
    CHECK(std::stod(line.substr(comma + 1)) == 0.0);
    ++rows;
  }
  CHECK(rows == 20);
}

TEST_CASE("plot-loss writes svg by extension") {
  const auto dir = scratch("svg");
  auto r = run({"plot-loss", "--theta", "-0.5,1,2,-0.3,0.4,0.1,0.2,0.3", "--out", (dir / "c.svg").string()});
  REQUIRE(r.code == 0);
  std::ifstream in(dir / "c.svg");
  std::string head;
  std::getline(in, head);
  CHECK(head.find("<svg") != std::string::npos);
}

TEST_CASE("compare on identical files is exactly one half") {
  const auto dir = scratch("compare");
  const std::string csv = "seed,accuracy,validation_accuracy,diverged\n0,0.91,0.9,0\n1,0.93,0.9,0\n2,0.92,0.9,0\n";
  write(dir / "a.csv", csv);
  write(dir / "b.csv", csv);
  auto r = run({"compare", "--a", (dir / "a.csv").string(), "--b", (dir / "b.csv").string()});
  REQUIRE(r.code == 0);
  const auto j = nlohmann::json::parse(r.out);
  CHECK(j.at("p_value").get<double>() == 0.5);
}

TEST_CASE("usage errors exit with 2") {
  CHECK(run({"param-count", "--n", "2", "--k", "3", "--bogus"}).code == 2);
  CHECK(run({"no-such-command"}).code == 2);
  CHECK(run({"plot-loss"}).code == 2);
  CHECK(run({"--help"}).code == 0);
}

TEST_CASE("runtime failures exit with 1 and one diagnostic line") {
  auto r = run({"plot-loss", "--theta", "1,2,x"});
  CHECK(r.code == 1);
  CHECK(r.err.rfind("error: ", 0) == 0);
  CHECK(std::count(r.err.begin(), r.err.end(), '\n') == 1);
  CHECK(run({"train", "--loss", "hinge", "--dataset", "synthetic:per_class=10"}).code == 1);
}

TEST_CASE("best.json round trip") {
  const auto dir = scratch("best");
  CandidateRecord rec;
  rec.generation = 3;
  rec.index = 5;
  rec.fitness = 0.875;
  rec.theta = {0.1, -1.0 / 3.0, 2.5e-7, 4.0, -5.0, 6.0, 7.125, 1e300};
  write(dir / "best.json", best_to_json(rec, 3).dump(2));
  CHECK(load_theta(dir / "best.json") == rec.theta);
  write(dir / "theta.txt", "1, 2\n3 4");
  CHECK(load_theta(dir / "theta.txt") == std::vector<double>{1, 2, 3, 4});
}

TEST_CASE("train writes one row per seed") {
  auto r = run({"train", "--loss", "crossentropy", "--dataset", "synthetic:per_class=30,dim=6",
                "--seeds", "3", "--steps", "20", "--hidden", "8"});
  REQUIRE(r.code == 0);
  CHECK(std::count(r.out.begin(), r.out.end(), '\n') == 4);
  CHECK(r.out.rfind("seed,accuracy,validation_accuracy,diverged\n", 0) == 0);
}
