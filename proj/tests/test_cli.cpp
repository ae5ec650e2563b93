#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "muse/cli.hpp"

namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out, err;
};

Result run(std::vector<std::string> args) {
  args.insert(args.begin(), "muse");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  int code = muse::cli::dispatch(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("muse_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  /// synth + ingest into `data/`.
  void make_data() {
    auto s = run({"synth", "--out", path("log.tsv"), "--n-tracks", "60", "--n-clusters", "6", "--n-sessions", "500",
                  "--seed", "3"});
    ASSERT_EQ(s.code, 0) << s.err;
    auto i = run({"ingest", "--log", path("log.tsv"), "--out-dir", path("data"), "--min-count", "1"});
    ASSERT_EQ(i.code, 0) << i.err;
  }

  Result train(const std::string& out, const std::string& seed) {
    return run({"train", "--data", path("data"), "--out", path(out), "--epochs", "2", "--seed", seed, "--set",
                "hidden_dim=4", "--set", "batch_size=64", "--set", "optimizer=adam", "--set", "learning_rate=0.01"});
  }

  fs::path dir_;
};

}  // namespace

TEST(Cli, UsageErrors) {
  EXPECT_EQ(run({}).code, muse::cli::kExitUsage);
  EXPECT_EQ(run({"frobnicate"}).code, muse::cli::kExitUsage);
  EXPECT_EQ(run({"stats"}).code, muse::cli::kExitUsage);  // --sessions is required
  EXPECT_EQ(run({"synth", "--out", "x", "--n-tracks", "many"}).code, muse::cli::kExitUsage);
  EXPECT_EQ(run({"evaluate", "--sessions", "x", "--baseline", "random"}).code, muse::cli::kExitUsage);
}

TEST(Cli, HelpExitsCleanly) {
  auto r = run({"--help"});
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("train"), std::string::npos);
  auto s = run({"train", "--help"});
  EXPECT_EQ(s.code, 0);
  EXPECT_NE(s.out.find("--config"), std::string::npos);
}

TEST_F(CliTest, MissingInputIsNamed) {
  const std::string missing = path("nope.tsv");
  auto r = run({"stats", "--sessions", missing});
  EXPECT_EQ(r.code, muse::cli::kExitData);
  EXPECT_NE(r.err.find(missing), std::string::npos) << r.err;
  auto e = run({"evaluate", "--model", path("nope.ckpt"), "--sessions", missing});
  EXPECT_EQ(e.code, muse::cli::kExitData);
  EXPECT_NE(e.err.find("nope.ckpt"), std::string::npos) << e.err;
}

TEST_F(CliTest, PipelineWritesExpectedFiles) {
  make_data();
  for (const char* f : {"vocab.tsv", "train.tsv", "valid.tsv", "test.tsv", "counts.tsv"}) {
    EXPECT_TRUE(fs::exists(dir_ / "data" / f)) << f;
  }
  auto st = run({"stats", "--sessions", path("data/train.tsv")});
  ASSERT_EQ(st.code, 0) << st.err;
  EXPECT_EQ(st.out.substr(0, st.out.find('\n')), "segment,sessions,share,unique_transition_rate");
  EXPECT_NE(st.out.find("\nshuffle,"), std::string::npos);

  auto au = run({"augment", "--sessions", path("data/train.tsv"), "--out", path("aug.tsv"), "--seed", "1"});
  ASSERT_EQ(au.code, 0) << au.err;
  auto again = run({"augment", "--sessions", path("data/train.tsv"), "--out", path("aug2.tsv"), "--seed", "1"});
  ASSERT_EQ(again.code, 0);
  EXPECT_EQ(slurp(path("aug.tsv")), slurp(path("aug2.tsv")));

  auto tr = train("model.ckpt", "5");
  ASSERT_EQ(tr.code, 0) << tr.err;
  EXPECT_TRUE(fs::exists(path("model.ckpt.csv")));

  auto ev = run({"evaluate", "--model", path("model.ckpt"), "--sessions", path("data/test.tsv"), "--out",
                 path("report.csv"), "--k", "5,20"});
  ASSERT_EQ(ev.code, 0) << ev.err;
  std::istringstream csv(slurp(path("report.csv")));
  std::string line;
  std::getline(csv, line);
  EXPECT_EQ(line, "segment,metric,K,value,count");
  int rows = 0;
  while (std::getline(csv, line)) {
    ++rows;
    auto last = line.rfind(',');
    auto prev = line.rfind(',', last - 1);
    double v = std::stod(line.substr(prev + 1, last - prev - 1));
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
    EXPECT_TRUE(line.find(",5,") != std::string::npos || line.find(",20,") != std::string::npos) << line;
  }
  EXPECT_EQ(rows, 3 * 3 * 2);

  auto pop = run({"evaluate", "--baseline", "popularity", "--train", path("data/train.tsv"), "--sessions",
                  path("data/test.tsv"), "--table"});
  ASSERT_EQ(pop.code, 0) << pop.err;
  EXPECT_NE(pop.out.find("MRR@5"), std::string::npos);
}

TEST_F(CliTest, SameSeedSameBytes) {
  make_data();
  ASSERT_EQ(train("a.ckpt", "9").code, 0);
  ASSERT_EQ(train("b.ckpt", "9").code, 0);
  ASSERT_EQ(train("c.ckpt", "10").code, 0);
  EXPECT_EQ(slurp(path("a.ckpt")), slurp(path("b.ckpt")));
  EXPECT_EQ(slurp(path("a.ckpt.csv")), slurp(path("b.ckpt.csv")));
  EXPECT_NE(slurp(path("a.ckpt")), slurp(path("c.ckpt")));
}

TEST_F(CliTest, ConfigErrorsAreUsageErrors) {
  make_data();
  auto r = run({"train", "--data", path("data"), "--out", path("m.ckpt"), "--set", "bogus=1"});
  EXPECT_EQ(r.code, muse::cli::kExitUsage);
  EXPECT_NE(r.err.find("bogus"), std::string::npos);
  std::ofstream(path("cfg.txt")) << "epochs = 1\nalpha = 2\n";
  auto c = run({"train", "--data", path("data"), "--out", path("m.ckpt"), "--config", path("cfg.txt")});
  EXPECT_EQ(c.code, muse::cli::kExitUsage);
  EXPECT_NE(c.err.find("alpha"), std::string::npos);
  auto both = run({"evaluate", "--model", "m", "--baseline", "popularity", "--sessions", path("data/test.tsv")});
  EXPECT_EQ(both.code, muse::cli::kExitUsage);
  auto days = run({"ingest", "--log", path("log.tsv"), "--out-dir", path("d2"), "--train-days", "x-y"});
  EXPECT_EQ(days.code, muse::cli::kExitUsage);
}

TEST_F(CliTest, MalformedLogIsDataError) {
  std::ofstream(path("bad.tsv")) << "session_id\tposition\n1\t2\n";
  auto r = run({"ingest", "--log", path("bad.tsv"), "--out-dir", path("d")});
  EXPECT_EQ(r.code, muse::cli::kExitData);
  EXPECT_FALSE(r.err.empty());
}
