#include <sys/wait.h>
#include <unistd.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include "doctest.h"

namespace fs = std::filesystem;

namespace {

const std::string kCli = OPACITY_CLI;
const std::string kDir = OPACITY_SCENARIOS;

struct Run {
  int code = -1;
  std::string out;
};

Run run(const std::string& args) {
  const std::string cmd = "'" + kCli + "' " + args + " 2>/dev/null";
  Run r;
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  char buf[4096];
  for (std::size_t n; (n = std::fread(buf, 1, sizeof buf, pipe)) > 0;) r.out.append(buf, n);
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// "key value ..." lines into a map of first value tokens.
std::map<std::string, std::string> fields(const std::string& text) {
  std::map<std::string, std::string> out;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) {
    std::istringstream ls(line);
    std::string k, v;
    if (ls >> k >> v) out[k] = v;
  }
  return out;
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("opacity_cli_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(p);
  return p;
}

std::string illustrative() { return "'" + kDir + "/illustrative.yaml'"; }
std::string gridworld() { return "'" + kDir + "/gridworld.yaml'"; }

}  // namespace

TEST_CASE("missing scenario file exits with 2") {
  CHECK(run("evaluate /nonexistent/scenario.yaml --policy builtin:uniform").code == 2);
  CHECK(run("synthesize /nonexistent/scenario --iterations 1 -q --output-dir " + scratch("missing").string()).code == 2);
}

TEST_CASE("bad command lines are rejected") {
  CHECK(run("").code != 0);
  CHECK(run("evaluate " + illustrative()).code != 0);  // --policy is required
  CHECK(run("evaluate " + illustrative() + " --policy builtin:uniform --mode sideways").code != 0);
}

TEST_CASE("huge step size diverges with exit 3 and leaves a partial trace") {
  const fs::path dir = scratch("diverge");
  const Run r = run("synthesize " + illustrative() + " --iterations 50 --eta 1e7 -q --output-dir " + dir.string());
  CHECK(r.code == 3);
  CHECK(fs::exists(dir / "trace.csv"));
  fs::remove_all(dir);
}

TEST_CASE("policy for another model exits with 4") {
  const fs::path dir = scratch("shape");
  REQUIRE(run("synthesize " + illustrative() + " --iterations 0 -q --output-dir " + dir.string()).code == 0);
  const std::string policy = (dir / "policy.txt").string();
  CHECK(run("evaluate " + illustrative() + " --policy " + policy).code == 0);
  CHECK(run("evaluate " + gridworld() + " --policy " + policy).code == 4);

  // Same action labels, different state count.
  std::string text = slurp(dir / "policy.txt");
  const auto pos = text.find("rows 35");
  REQUIRE(pos != std::string::npos);
  text.replace(pos, 7, "rows 34");
  std::ofstream(dir / "short.txt") << text;
  CHECK(run("evaluate " + illustrative() + " --policy " + (dir / "short.txt").string()).code == 4);

  std::ofstream(dir / "garbage.txt") << "mode augmented\nactions R G P B N\nrows 35\nrow s0 R theta x\n";
  CHECK(run("evaluate " + illustrative() + " --policy " + (dir / "garbage.txt").string()).code == 2);
  fs::remove_all(dir);
}

TEST_CASE("gradcheck passes on the illustrative model and fails with an impossible tolerance") {
  const Run ok = run("gradcheck " + illustrative() + " --probes 5 --seed 3");
  CHECK(ok.code == 0);
  CHECK(ok.out.find("PASS") != std::string::npos);
  CHECK(ok.out.find("grad_entropy max_rel_err") != std::string::npos);
  const Run bad = run("gradcheck " + illustrative() + " --probes 5 --seed 3 --tolerance 0");
  CHECK(bad.code == 5);
  CHECK(bad.out.find("FAIL") != std::string::npos);
}

TEST_CASE("zero iterations write the initial policy") {
  const fs::path dir = scratch("zero");
  const Run r = run("synthesize " + illustrative() + " --iterations 0 -q --no-timing --output-dir " + dir.string());
  REQUIRE(r.code == 0);
  const auto f = fields(r.out);
  CHECK(f.at("iterations") == "0");
  CHECK(f.at("entropy_mode") == "exact");
  CHECK(f.count("wall_seconds") == 0);
  CHECK(slurp(dir / "trace.csv") == "iter,entropy,value,lambda,grad_norm,wall_s\n");
  CHECK(slurp(dir / "summary.txt") == r.out);
  fs::remove_all(dir);
}

TEST_CASE("identical runs write identical files") {
  const fs::path a = scratch("repro_a"), b = scratch("repro_b");
  const std::string args = "synthesize " + illustrative() + " --iterations 25 --seed 11 -q --no-timing --output-dir ";
  REQUIRE(run(args + a.string()).code == 0);
  REQUIRE(run(args + b.string() + " --threads 1").code == 0);
  for (const char* name : {"trace.csv", "policy.txt", "summary.txt"}) {
    CHECK_MESSAGE(slurp(a / name) == slurp(b / name), name);
  }
  CHECK(slurp(a / "trace.csv").size() > 100);
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST_CASE("output directory falls back to the environment") {
  const fs::path dir = scratch("env");
  const std::string cmd = "env OPACITY_OUTPUT_DIR='" + dir.string() + "' '" + kCli + "' synthesize " + illustrative() +
                          " --iterations 1 -q > /dev/null 2>&1";
  CHECK(std::system(cmd.c_str()) == 0);
  CHECK(fs::exists(dir / "summary.txt"));
  fs::remove_all(dir);
}

TEST_CASE("synthesis raises the illustrative entropy within budget") {
  const fs::path dir = scratch("synth");
  const Run r = run("synthesize " + illustrative() + " --iterations 300 --seed 1 -q --output-dir " + dir.string());
  REQUIRE(r.code == 0);
  const auto f = fields(r.out);
  CHECK(std::stod(f.at("final_entropy")) > 0.6);
  CHECK(std::stod(f.at("final_cost")) <= 63.0);
  CHECK(std::stod(f.at("final_lambda")) >= 0.0);
  CHECK(f.count("wall_seconds") == 1);

  const Run e = run("evaluate " + illustrative() + " --policy " + (dir / "policy.txt").string());
  REQUIRE(e.code == 0);
  CHECK(fields(e.out).at("entropy") == f.at("final_entropy"));
  CHECK(fields(e.out).at("expected_cost") == f.at("final_cost"));
  fs::remove_all(dir);
}

TEST_CASE("builtin policies") {
  const Run none = run("evaluate " + illustrative() + " --policy builtin:no-masking");
  REQUIRE(none.code == 0);
  CHECK(std::stod(fields(none.out).at("entropy")) == doctest::Approx(0.0895).epsilon(0.02));
  CHECK(none.out.find("(exact)") != std::string::npos);

  const Run fsm = run("evaluate " + gridworld() + " --policy builtin:final-state --samples 5000");
  REQUIRE(fsm.code == 0);
  CHECK(fsm.out.find("sampled, n=5000") != std::string::npos);
  CHECK(std::stod(fields(fsm.out).at("expected_cost")) == doctest::Approx(14.67).epsilon(0.05));

  // A cheaper budget override changes nothing about evaluation.
  CHECK(run("evaluate " + illustrative() + " --policy builtin:uniform --epsilon 5 --beta 0.5").code == 0);
}

TEST_CASE("enumerate-check") {
  const Run r = run("enumerate-check " + illustrative() + " --samples 20000");
  CHECK(r.code == 0);
  CHECK(r.out.find("PASS") != std::string::npos);
  CHECK(std::stod(fields(r.out).at("total_probability")) == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(run("enumerate-check " + gridworld()).code == 1);  // sequence space too large
}
