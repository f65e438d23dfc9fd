#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

namespace fs = std::filesystem;

namespace {

const std::string kCli = PNPE_CLI_PATH;

struct RunResult {
  int exit_code;
  std::string out;
  std::string err;
};

fs::path work_dir() {
  const auto dir = fs::temp_directory_path() / "pnpe_cli_tests";
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
}

RunResult run(const std::string& args) {
  const fs::path out = work_dir() / "stdout.txt";
  const fs::path err = work_dir() / "stderr.txt";
  const std::string cmd = kCli + " " + args + " > " + out.string() + " 2> " + err.string();
  const int status = std::system(cmd.c_str());
  RunResult r;
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = slurp(out);
  r.err = slurp(err);
  return r;
}

// One small corpus + tiny model shared by the subcommand tests.
struct Fixture {
  fs::path corpus;
  fs::path model;

  Fixture() {
    corpus = work_dir() / "corpus";
    model = work_dir() / "tiny.pnpe";
    if (fs::exists(corpus / "corpus.json") && fs::exists(model)) return;
    fs::remove_all(corpus);
    REQUIRE(run("synth --output " + corpus.string() +
                " --clips 6 --seed 11 --duration 0.8 --f0-min 100 --f0-max 800").exit_code == 0);
    REQUIRE(run("train --corpus " + corpus.string() + " --output " + model.string() +
                " --arch tiny --bins 32 --fmin 65 --cents-per-bin 150 --steps 4 --batch 8"
                " --seed 3").exit_code == 0);
  }
};

Fixture& fixture() {
  static Fixture f;
  return f;
}

}  // namespace

TEST_CASE("help lists subcommands and flags", "[cli]") {
  const RunResult r = run("--help");
  CHECK(r.exit_code == 0);
  for (const char* name : {"infer", "train", "evaluate", "benchmark", "search-threshold", "synth"})
    CHECK(r.out.find(name) != std::string::npos);
  const RunResult ri = run("infer --help");
  CHECK(ri.exit_code == 0);
  for (const char* flag : {"--model", "--decoder", "--periodicity", "--threshold", "--hop-ms",
                           "--threads"})
    CHECK(ri.out.find(flag) != std::string::npos);
}

TEST_CASE("bad arguments exit with 2", "[cli]") {
  CHECK(run("").exit_code == 2);
  CHECK(run("infer --no-such-flag").exit_code == 2);
  CHECK(run("frobnicate").exit_code == 2);
  CHECK(run("synth").exit_code == 2);  // missing required --output
}

TEST_CASE("synth is byte-deterministic", "[cli]") {
  const fs::path a = work_dir() / "det_a";
  const fs::path b = work_dir() / "det_b";
  fs::remove_all(a);
  fs::remove_all(b);
  const std::string args = " --clips 3 --seed 7 --duration 0.6";
  REQUIRE(run("synth --output " + a.string() + args).exit_code == 0);
  REQUIRE(run("synth --output " + b.string() + args).exit_code == 0);
  CHECK(slurp(a / "corpus.json") == slurp(b / "corpus.json"));
  CHECK(slurp(a / "clips/clip_0000.wav") == slurp(b / "clips/clip_0000.wav"));
  CHECK(slurp(a / "annotations/clip_0000.csv") == slurp(b / "annotations/clip_0000.csv"));
}

TEST_CASE("infer writes a pitch track and reports rtf", "[cli]") {
  Fixture& f = fixture();
  const fs::path wav = f.corpus / "clips/clip_0000.wav";
  const fs::path csv = work_dir() / "out.csv";
  const RunResult r =
      run("infer --model " + f.model.string() + " --input " + wav.string() + " --output " +
          csv.string());
  CHECK(r.exit_code == 0);
  CHECK(r.out.find("rtf") != std::string::npos);
  const std::string body = slurp(csv);
  CHECK(body.rfind("time_sec,f0_hz,periodicity,voiced", 0) == 0);

  // argmax and weighted both run; outputs may differ but share the schema
  const RunResult ra =
      run("infer --model " + f.model.string() + " --input " + wav.string() + " --output " +
          (work_dir() / "out_argmax.csv").string() + " --decoder argmax --periodicity max");
  CHECK(ra.exit_code == 0);

  CHECK(run("infer --model " + f.model.string() + " --input " + wav.string() + " --output " +
            csv.string() + " --decoder bogus").exit_code == 2);
}

TEST_CASE("missing model exits with 4, missing audio with 3", "[cli]") {
  Fixture& f = fixture();
  const fs::path wav = f.corpus / "clips/clip_0000.wav";
  CHECK(run("infer --model /nonexistent/m.pnpe --input " + wav.string() + " --output " +
            (work_dir() / "x.csv").string()).exit_code == 4);
  CHECK(run("infer --model " + f.model.string() + " --input /nonexistent/a.wav --output " +
            (work_dir() / "x.csv").string()).exit_code == 3);

  // Corrupted model file: format failure is also exit 4.
  const fs::path bad = work_dir() / "bad.pnpe";
  std::ofstream(bad) << "XXXXnot a model";
  std::ofstream(bad.string() + ".json") << slurp(f.model.string() + ".json");
  CHECK(run("infer --model " + bad.string() + " --input " + wav.string() + " --output " +
            (work_dir() / "x.csv").string()).exit_code == 4);
}

TEST_CASE("evaluate reports perfect scores against itself", "[cli]") {
  Fixture& f = fixture();
  const fs::path ref = f.corpus / "annotations/clip_0001.csv";
  const RunResult r =
      run("evaluate --reference " + ref.string() + " --prediction " + ref.string());
  CHECK(r.exit_code == 0);
  CHECK(r.out.find("\"rpa\": 1.0") != std::string::npos);
  CHECK(r.out.find("\"f1\": 1.0") != std::string::npos);
}

TEST_CASE("search-threshold prints alpha and f1", "[cli]") {
  Fixture& f = fixture();
  const RunResult r = run("search-threshold --model " + f.model.string() + " --corpus " +
                          f.corpus.string() + " --split all --seed 3");
  CHECK(r.exit_code == 0);
  CHECK(r.out.find("alpha") != std::string::npos);
  CHECK(r.out.find("f1") != std::string::npos);
}
