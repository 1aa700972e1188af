#include <doctest.h>

#include <fstream>
#include <json.hpp>
#include <sstream>

#include "helpers.hpp"
#include "sflda/cli.hpp"
#include "sflda/model.hpp"

using nlohmann::json;

namespace {

struct Run {
  int code = 0;
  std::string out, err;
  json doc() const { return json::parse(out); }
};

Run run(std::vector<std::string> args) {
  std::ostringstream out, err;
  Run r;
  args.push_back("--threads");
  args.push_back("1");
  r.code = sflda::cli::run(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Drops the single timestamp field.
json without_timestamp(json j) {
  j.erase("generated_at");
  return j;
}

}  // namespace

TEST_CASE("simulate, cv, fit, evaluate, predict end to end") {
  testutil::TempDir dir("cli");
  const std::string d = dir.path.string();
  const Run sim = run({"simulate", "--scenario", "diagonal", "--p", "200", "--seed", "7", "--n-train", "30", "--n-test",
                       "50", "--out-dir", d});
  REQUIRE_MESSAGE(sim.code == 0, sim.err);
  CHECK(std::filesystem::exists(dir / "train.csv"));
  CHECK(std::filesystem::exists(dir / "test.csv"));
  const json truth = json::parse(read_file(dir / "truth.json"));
  CHECK(truth["truth_support"].size() == 20);
  CHECK(sim.doc()["reproducibility"]["subcommand"] == "simulate");

  const Run cv = run({"cv", "--data", (dir / "train.csv").string(), "--grid", "10", "--csv", (dir / "cv.csv").string()});
  REQUIRE_MESSAGE(cv.code == 0, cv.err);
  const json cvj = cv.doc();
  CHECK(cvj["cv"]["grid"].size() == 10);
  CHECK(std::filesystem::exists(dir / "cv.csv"));

  const Run fit = run({"fit", "--data", (dir / "train.csv").string(), "--grid", "10", "--out", (dir / "model.json").string()});
  REQUIRE_MESSAGE(fit.code == 0, fit.err);
  const sflda::DiscriminantModel m = sflda::load_model(dir / "model.json");
  CHECK(m.p == 200);

  const Run ev = run({"evaluate", "--model", (dir / "model.json").string(), "--data", (dir / "test.csv").string(), "--truth",
                      (dir / "truth.json").string()});
  REQUIRE_MESSAGE(ev.code == 0, ev.err);
  const json evj = ev.doc();
  const double err = evj["metrics"]["error_percent"].get<double>();
  CHECK(err >= 0.0);
  CHECK(err < 50.0);
  CHECK(evj["metrics"]["correct_features"].get<int>() <= evj["metrics"]["features"].get<int>());

  const Run pr = run({"predict", "--model", (dir / "model.json").string(), "--data", (dir / "test.csv").string(), "--out",
                      (dir / "pred.csv").string()});
  REQUIRE_MESSAGE(pr.code == 0, pr.err);
  std::ifstream in(dir / "pred.csv");
  std::string line;
  int lines = 0;
  while (std::getline(in, line)) ++lines;
  CHECK(lines == 101);
}

TEST_CASE("a huge fixed lambda gives a zero model with a warning") {
  testutil::TempDir dir("cli0");
  REQUIRE(run({"simulate", "--p", "40", "--n-train", "10", "--n-test", "5", "--out-dir", dir.path.string()}).code == 0);
  const Run fit = run({"fit", "--data", (dir / "train.csv").string(), "--lambda", "1e9", "--out", (dir / "m.json").string()});
  CHECK(fit.code == 0);
  CHECK(sflda::load_model(dir / "m.json").is_zero());
  const json j = fit.doc();
  REQUIRE(j["warnings"].size() >= 1);
  CHECK(fit.err.find("zero") != std::string::npos);
}

TEST_CASE("usage errors exit with 1") {
  const Run unknown = run({"fit", "--bogus"});
  CHECK(unknown.code == sflda::cli::kExitValidation);
  CHECK(!unknown.err.empty());
  CHECK(run({}).code == sflda::cli::kExitValidation);
  testutil::TempDir dir("cli1");
  REQUIRE(run({"simulate", "--p", "20", "--n-train", "10", "--n-test", "5", "--out-dir", dir.path.string()}).code == 0);
  const std::string train = (dir / "train.csv").string();
  CHECK(run({"fit", "--data", train, "--lambda", "1", "--cv"}).code == sflda::cli::kExitValidation);
  CHECK(run({"fit", "--data", train, "--lambda", "1", "--lambda-fraction", "0.5"}).code == sflda::cli::kExitValidation);
  CHECK(run({"fit", "--data", train, "--vectors", "2"}).code == sflda::cli::kExitValidation);
  CHECK(run({"fit", "--data", train, "--tau", "1.5"}).code == sflda::cli::kExitValidation);
  CHECK(run({"fit", "--data", (dir / "missing.csv").string()}).code == sflda::cli::kExitValidation);
}

TEST_CASE("non-convergence exits with 2 unless allowed") {
  testutil::TempDir dir("cli2");
  REQUIRE(run({"simulate", "--p", "60", "--n-train", "15", "--n-test", "5", "--out-dir", dir.path.string()}).code == 0);
  const std::string train = (dir / "train.csv").string();
  const Run capped = run({"fit", "--data", train, "--lambda-fraction", "0.05", "--max-outer", "1", "--max-inner", "1",
                          "--eps", "1e-14", "--out", (dir / "m.json").string()});
  CHECK(capped.code == sflda::cli::kExitNumerical);
  const Run allowed = run({"fit", "--data", train, "--lambda-fraction", "0.05", "--max-outer", "1", "--max-inner", "1",
                           "--eps", "1e-14", "--allow-nonconverged", "--out", (dir / "m.json").string()});
  CHECK(allowed.code == 0);
}

TEST_CASE("bench smoke run lists both methods") {
  testutil::TempDir dir("cli3");
  const Run b = run({"bench", "--scenario", "diagonal", "--replicates", "2", "--p", "200", "--n-train", "20", "--n-test", "20",
                     "--grid", "8", "--out", (dir / "bench.csv").string(), "--allow-nonconverged"});
  REQUIRE_MESSAGE(b.code == 0, b.err);
  const std::string csv = read_file(dir / "bench.csv");
  CHECK(csv.rfind("method,scenario,error_mean,error_sd,features_mean,features_sd,correct_mean,correct_sd", 0) == 0);
  CHECK(csv.find("\nFLDA,diagonal,") != std::string::npos);
  CHECK(csv.find("\nFLDAdiag,diagonal,") != std::string::npos);
}

TEST_CASE("reruns are identical apart from the timestamp") {
  testutil::TempDir a("cli4a"), b("cli4b");
  for (auto* dir : {&a, &b})
    REQUIRE(run({"simulate", "--scenario", "block_network", "--p", "80", "--n-train", "40", "--n-test", "5", "--seed", "3",
                 "--out-dir", dir->path.string()})
                .code == 0);
  CHECK(read_file(a / "train.csv") == read_file(b / "train.csv"));
  CHECK(read_file(a / "truth.json") == read_file(b / "truth.json"));
  const std::vector<std::string> args{"fit",      "--data", (a / "train.csv").string(), "--grid", "6", "--cluster",
                                      "--clusters", "5",     "--out", (a / "m.json").string()};
  const Run r1 = run(args);
  REQUIRE(r1.code == 0);
  const std::string model1 = read_file(a / "m.json");
  const Run r2 = run(args);
  REQUIRE(r2.code == 0);
  CHECK(read_file(a / "m.json") == model1);
  CHECK(without_timestamp(r1.doc()) == without_timestamp(r2.doc()));
  CHECK(!r1.doc()["model"]["zero_model"].get<bool>());
  CHECK(r1.doc().contains("generated_at"));
}

TEST_CASE("theory-report and path") {
  const Run t = run({"theory-report", "--l", "0.6,0.5", "--grid-points", "50", "--lambda", "0.3"});
  REQUIRE_MESSAGE(t.code == 0, t.err);
  const json j = t.doc();
  CHECK(j["theory"]["m_prime"] == 1);
  CHECK(j["floor_violations"] == 0);
  const Run u = run({"theory-report", "--uniform-p", "50", "--l-seed", "2", "--lambda-fraction", "0.2"});
  REQUIRE_MESSAGE(u.code == 0, u.err);
  CHECK(u.doc()["floor_violations"] == 0);
  CHECK(run({"theory-report", "--l", "0.6,0.5", "--uniform-p", "4"}).code == sflda::cli::kExitValidation);

  testutil::TempDir dir("cli5");
  REQUIRE(run({"simulate", "--p", "30", "--n-train", "15", "--n-test", "5", "--out-dir", dir.path.string()}).code == 0);
  const Run p = run({"path", "--data", (dir / "train.csv").string(), "--grid-points", "20", "--csv", (dir / "path.csv").string()});
  REQUIRE_MESSAGE(p.code == 0, p.err);
  CHECK(p.doc()["path"]["rows"].size() == 20);
  const Run td = run({"theory-report", "--data", (dir / "train.csv").string(), "--grid-points", "20", "--lambda-fraction", "0.1",
                      "--format", "text"});
  CHECK(td.code == 0);
  CHECK(!td.out.empty());
}
