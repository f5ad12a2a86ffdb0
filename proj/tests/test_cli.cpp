#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "lgsgm/cli.hpp"
#include "lgsgm/evaluator.hpp"

using namespace lgsgm;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code = 0;
  std::string out;
  std::string err;
};

Result run(std::vector<std::string> args) {
  args.insert(args.begin(), "lgsgm");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  Result r;
  r.code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream s;
  s << f.rdbuf();
  return s.str();
}

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("lgsgm_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::size_t count_lines(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> parts;
  std::stringstream ss(line);
  std::string part;
  while (std::getline(ss, part, sep)) parts.push_back(part);
  return parts;
}

const std::vector<std::string> kSmall = {"--dims", "6,8,8,6"};

std::vector<std::string> with(std::vector<std::string> a, const std::vector<std::string>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

}  // namespace

TEST_CASE("gen writes the dataset deterministically") {
  const fs::path dir = fresh_dir("gen");
  REQUIRE(run({"gen", "--out", (dir / "a").string(), "--pairs", "64", "--seed", "7"}).code == kExitOk);
  REQUIRE(run({"gen", "--out", (dir / "b").string(), "--pairs", "64", "--seed", "7"}).code == kExitOk);
  CHECK(count_lines(slurp(dir / "a" / "train.jsonl")) == 64);
  CHECK(count_lines(slurp(dir / "a" / "test.jsonl")) == 16);
  for (const char* f : {"train.jsonl", "val.jsonl", "test.jsonl", "vocab.json"}) CHECK(slurp(dir / "a" / f) == slurp(dir / "b" / f));
  REQUIRE(run({"gen", "--out", (dir / "c").string(), "--pairs", "64", "--seed", "8"}).code == kExitOk);
  CHECK(slurp(dir / "a" / "train.jsonl") != slurp(dir / "c" / "train.jsonl"));
}

TEST_CASE("gen argument errors") {
  const fs::path dir = fresh_dir("gen_err");
  const Result one = run({"gen", "--out", (dir / "x").string(), "--pairs", "1", "--seed", "7"});
  CHECK(one.code == kExitConfig);
  CHECK(one.err.find("2") != std::string::npos);
  CHECK(run({"gen", "--out", (dir / "x").string(), "--pairs", "4"}).code == kExitConfig);  // seed is mandatory
  CHECK(run({"frobnicate"}).code == kExitConfig);
  CHECK(run({"--help"}).code == kExitOk);
  std::ofstream(dir / "file") << "x";
  CHECK(run({"gen", "--out", (dir / "file" / "sub").string(), "--pairs", "4", "--seed", "1"}).code == kExitIo);
}

TEST_CASE("train, resume, eval and retrieve") {
  const fs::path dir = fresh_dir("pipeline");
  const std::string data = (dir / "data").string(), runs = (dir / "run").string();
  REQUIRE(run(with({"gen", "--out", data, "--pairs", "16", "--seed", "5"}, kSmall)).code == kExitOk);

  const auto train_args = with({"train", "--data", data, "--out", runs, "--seed", "3", "--epochs", "15", "--batch",
                                "8", "--margin", "0.35", "--quiet"},
                               kSmall);
  const Result tr = run(train_args);
  REQUIRE_MESSAGE(tr.code == kExitOk, tr.err);
  for (const char* f : {"best.ckpt", "last.ckpt", "train_log.tsv", "config.ini"}) CHECK(fs::exists(dir / "run" / f));
  CHECK(count_lines(slurp(dir / "run" / "train_log.tsv")) == 1 + 15);
  CHECK(slurp(dir / "run" / "config.ini").find("margin = 0.35\n") != std::string::npos);

  SUBCASE("resume doubles the epochs without repeating any") {
    const std::string log15 = slurp(dir / "run" / "train_log.tsv");
    auto resume = with({"train", "--data", data, "--out", runs, "--seed", "3", "--epochs", "30", "--batch", "8",
                        "--resume", "--quiet"},
                       kSmall);
    const Result r = run(resume);
    REQUIRE_MESSAGE(r.code == kExitOk, r.err);
    const std::string log30 = slurp(dir / "run" / "train_log.tsv");
    CHECK(count_lines(log30) == 1 + 30);
    CHECK(log30.substr(0, log15.size()) == log15);

    // Matches a run that went straight to 30 epochs.
    const std::string straight = (dir / "straight").string();
    REQUIRE(run(with({"train", "--data", data, "--out", straight, "--seed", "3", "--epochs", "30", "--batch", "8",
                      "--quiet"},
                     kSmall))
                .code == kExitOk);
    CHECK(slurp(dir / "straight" / "train_log.tsv") == log30);
    CHECK(slurp(dir / "straight" / "last.ckpt") == slurp(dir / "run" / "last.ckpt"));
  }
  SUBCASE("eval is deterministic and writes its reports") {
    const std::string ckpt = (dir / "run" / "best.ckpt").string();
    const Result a = run({"eval", "--data", data, "--ckpt", ckpt, "--out", (dir / "ev1").string()});
    const Result b = run({"eval", "--data", data, "--ckpt", ckpt, "--out", (dir / "ev2").string(), "--threads", "2"});
    REQUIRE_MESSAGE(a.code == kExitOk, a.err);
    CHECK(a.out == b.out);
    for (const char* f : {"metrics.txt", "metrics.tsv", "pairs.tsv"}) CHECK(slurp(dir / "ev1" / f) == slurp(dir / "ev2" / f));
    const MetricsReport m = parse_lines(slurp(dir / "ev1" / "metrics.tsv"));
    CHECK(m.ks == std::vector<std::size_t>{1, 5, 10});
    CHECK(m.total_rsum == doctest::Approx(m.image_to_text.rsum + m.text_to_image.rsum));
  }
  SUBCASE("eval errors") {
    CHECK(run({"eval", "--data", data, "--ckpt", (dir / "nope.ckpt").string()}).code == kExitIo);
    const std::string other = (dir / "other").string();
    REQUIRE(run({"gen", "--out", other, "--pairs", "16", "--seed", "5"}).code == kExitOk);  // default widths
    const Result mism = run({"eval", "--data", other, "--ckpt", (dir / "run" / "best.ckpt").string()});
    CHECK(mism.code == kExitData);
    CHECK(mism.err.find("does not match") != std::string::npos);
  }
  SUBCASE("retrieve") {
    const std::string ckpt = (dir / "run" / "best.ckpt").string();
    const Result r = run({"retrieve", "--data", data, "--ckpt", ckpt, "--query", "test0000", "--k", "1000"});
    REQUIRE_MESSAGE(r.code == kExitOk, r.err);
    CHECK(r.err.find("warning") != std::string::npos);
    const auto lines = split(r.out, '\n');
    CHECK(lines.size() == 1 + 4 * 5);  // header plus every test caption
    for (std::size_t i = 1; i < lines.size(); ++i) {
      const auto f = split(lines[i], '\t');
      REQUIRE(f.size() == 7);
      CHECK(std::stod(f[0]) == static_cast<double>(i));
      CHECK(std::stod(f[6]) == doctest::Approx(std::stod(f[3]) + std::stod(f[4]) + std::stod(f[5])).epsilon(1e-12));
    }
    const Result t = run({"retrieve", "--data", data, "--ckpt", ckpt, "--query", "test0002#1", "--direction", "t2i"});
    REQUIRE_MESSAGE(t.code == kExitOk, t.err);
    CHECK(count_lines(t.out) == 1 + 4);
    CHECK(run({"retrieve", "--data", data, "--ckpt", ckpt, "--query", "nobody"}).code == kExitData);
    CHECK(run({"retrieve", "--data", data, "--ckpt", ckpt, "--query", "test0000", "--direction", "up"}).code ==
          kExitConfig);
  }
}

TEST_CASE("config file values apply and flags override them") {
  const fs::path dir = fresh_dir("config");
  const std::string data = (dir / "data").string();
  REQUIRE(run(with({"gen", "--out", data, "--pairs", "4", "--seed", "2"}, kSmall)).code == kExitOk);
  std::ofstream(dir / "run.ini") << "[train]\nepochs = 2\nmargin = 0.5\nbatch = 4\n";
  const Result r = run(with({"--config", (dir / "run.ini").string(), "train", "--data", data, "--out",
                             (dir / "run").string(), "--seed", "1", "--margin", "0.25", "--quiet"},
                            kSmall));
  REQUIRE_MESSAGE(r.code == kExitOk, r.err);
  const std::string snap = slurp(dir / "run" / "config.ini");
  CHECK(snap.find("margin = 0.25\n") != std::string::npos);
  CHECK(snap.find("epochs = 2\n") != std::string::npos);
  CHECK(count_lines(slurp(dir / "run" / "train_log.tsv")) == 3);
}

TEST_CASE("an overfit toy run retrieves the true partners") {
  const fs::path dir = fresh_dir("overfit");
  const std::string data = (dir / "data").string(), runs = (dir / "run").string();
  REQUIRE(run({"gen", "--out", data, "--pairs", "8", "--seed", "4", "--family-size", "1"}).code == kExitOk);
  const Result tr = run({"train", "--data", data, "--out", runs, "--seed", "1", "--epochs", "150", "--batch", "8",
                         "--quiet"});
  REQUIRE_MESSAGE(tr.code == kExitOk, tr.err);
  const std::string ckpt = (dir / "run" / "last.ckpt").string();
  const Result ev = run({"eval", "--data", data, "--ckpt", ckpt, "--split", "train", "--out", (dir / "ev").string()});
  REQUIRE(ev.code == kExitOk);
  const MetricsReport m = parse_lines(slurp(dir / "ev" / "metrics.tsv"));
  CHECK(m.image_to_text.recall[0] >= 87.5);
  CHECK(m.text_to_image.recall[0] >= 87.5);
  const Result r = run({"retrieve", "--data", data, "--ckpt", ckpt, "--split", "train", "--query", "train0003", "--k", "1"});
  REQUIRE(r.code == kExitOk);
  const auto row = split(split(r.out, '\n').at(1), '\t');
  CHECK(row.at(1).rfind("train0003#", 0) == 0);
  CHECK(row.at(2) == "*");
}
