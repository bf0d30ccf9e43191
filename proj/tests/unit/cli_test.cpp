// SPDX-License-Identifier: Apache-2.0
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "cli.hpp"
#include "temp_dir.hpp"

namespace snri {
namespace {

namespace fs = std::filesystem;

struct Result {
  int code;
  std::string out, err;
};

Result run(std::vector<std::string> args) {
  args.insert(args.begin(), "snri");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

class Cli : public testing::TempDir {
 protected:
  void SetUp() override {
    TempDir::SetUp();
    data_ = (dir_ / "data").string();
    ASSERT_EQ(run({"synth", "toy", "--data-dir", data_, "--entities", "120", "--seed", "2", "-q"}).code, 0);
  }

  std::vector<std::string> quick(std::vector<std::string> extra) {
    std::vector<std::string> a = std::move(extra);
    a.insert(a.end(), {"--data-dir", data_, "--epochs", "1", "--hops", "2", "--set", "dim=8", "--set", "layers=2",
                       "-q"});
    return a;
  }

  std::string data_;
};

TEST(CliHelp, EverySubcommand) {
  for (const char* sub : {"ingest", "train", "eval", "ablate", "density", "paths", "synth"}) {
    Result r = run({sub, "--help"});
    EXPECT_EQ(r.code, 0) << sub;
    EXPECT_NE(r.out.find("--data-dir"), std::string::npos) << sub;
  }
  EXPECT_EQ(run({"--help"}).code, 0);
}

TEST(CliHelp, ParseErrors) {
  Result none = run({});
  EXPECT_NE(none.code, 0);
  Result bad = run({"train", "--no-such-flag"});
  EXPECT_NE(bad.code, 0);
  EXPECT_NE(bad.err.find("no-such-flag"), std::string::npos) << bad.err;
  EXPECT_NE(run({"frobnicate"}).code, 0);
}

TEST_F(Cli, IngestPrintsStatistics) {
  const std::string out = (dir_ / "out").string();
  Result r = run({"ingest", "toy", "--data-dir", data_, "--out-dir", out, "-q"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("#R"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("train"), std::string::npos);
  EXPECT_NE(r.out.find("test"), std::string::npos);
  EXPECT_TRUE(fs::exists(fs::path(out) / "toy.train.graph"));
  EXPECT_TRUE(fs::exists(fs::path(out) / "toy.stats.txt"));
  Result missing = run({"ingest", "absent", "--data-dir", data_});
  EXPECT_EQ(missing.code, 1);
  EXPECT_EQ(missing.err.rfind("error: ", 0), 0u) << missing.err;
}

TEST_F(Cli, EvalWithoutCheckpointFailsCleanly) {
  Result r = run({"eval", "toy", "--data-dir", data_, "--out-dir", (dir_ / "nothing").string()});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("checkpoint not found"), std::string::npos) << r.err;
}

TEST_F(Cli, TrainEvalPathsAndReproducibility) {
  const std::string a = (dir_ / "a").string(), b = (dir_ / "b").string();
  Result ra = run(quick({"train", "toy", "--seed", "3", "--out-dir", a}));
  ASSERT_EQ(ra.code, 0) << ra.err;
  Result rb = run(quick({"train", "toy", "--seed", "3", "--out-dir", b, "--set", "cache_subgraphs=false"}));
  ASSERT_EQ(rb.code, 0) << rb.err;
  EXPECT_EQ(slurp(fs::path(a) / "checkpoint.bin"), slurp(fs::path(b) / "checkpoint.bin"));
  EXPECT_NE(slurp(fs::path(a) / "train.conf").find("seed = 3"), std::string::npos);

  Result ev = run({"eval", "toy", "--data-dir", data_, "--out-dir", a, "--candidates", "10", "-q"});
  ASSERT_EQ(ev.code, 0) << ev.err;
  EXPECT_NE(ev.out.find("AUC-PR"), std::string::npos);
  for (const char* f : {"eval.json", "eval.txt", "eval.ranks.csv"}) EXPECT_TRUE(fs::exists(fs::path(a) / f)) << f;

  Result dn = run({"density", "toy", "--data-dir", data_, "--out-dir", a, "--buckets", "2,5", "-q"});
  ASSERT_EQ(dn.code, 0) << dn.err;
  EXPECT_NE(slurp(fs::path(a) / "density.json").find("\"<=2\""), std::string::npos);

  Result ps = run({"paths", "toy", "--data-dir", data_, "--out-dir", a, "--relation", "rt", "-q"});
  ASSERT_EQ(ps.code, 0) << ps.err;
  EXPECT_NE(ps.out.find("rt"), std::string::npos);
  Result bad = run({"paths", "toy", "--data-dir", data_, "--out-dir", a, "--relation", "nope"});
  EXPECT_EQ(bad.code, 1);
  EXPECT_NE(bad.err.find("valid names: r1, r2, r3, r4, rt"), std::string::npos) << bad.err;
}

TEST_F(Cli, AblationTable) {
  const std::string out = (dir_ / "abl").string();
  Result r = run(quick({"ablate", "toy", "--flags", "no_mi", "--candidates", "10", "--out-dir", out}));
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("SNRI"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("w/o MI"), std::string::npos) << r.out;
  EXPECT_EQ(r.out.find("w/o NRF"), std::string::npos);
  const std::string tsv = slurp(fs::path(out) / "ablation.tsv");
  EXPECT_EQ(std::count(tsv.begin(), tsv.end(), '\n'), 3);
}

TEST_F(Cli, BadOverrides) {
  Result r = run(quick({"train", "toy", "--set", "warp=9", "--out-dir", (dir_ / "x").string()}));
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("warp"), std::string::npos) << r.err;
  Result f = run(quick({"train", "toy", "--flags", "no_everything", "--out-dir", (dir_ / "y").string()}));
  EXPECT_EQ(f.code, 1);
}

}  // namespace
}  // namespace snri
