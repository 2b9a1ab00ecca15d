#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <variant>
#include <vector>

#include "blsh/hashers.hpp"
#include "blsh/randsrc.hpp"
#include "test_util.hpp"

using blsh::testing::read_string;
using blsh::testing::TempDir;
using blsh::testing::write_string;

namespace {

struct RunResult {
  int code = -1;
  std::string out;
  std::string err;
};

std::string quote(const std::string& s) {
  std::string q = "'";
  for (char c : s) q += c == '\'' ? std::string("'\\''") : std::string(1, c);
  return q + "'";
}

RunResult run_cli(const TempDir& dir, const std::vector<std::string>& args) {
  std::string cmd = quote(BLSH_CLI_PATH);
  for (const auto& a : args) cmd += " " + quote(a);
  const std::string out = dir.file("stdout.txt"), err = dir.file("stderr.txt");
  cmd += " >" + quote(out) + " 2>" + quote(err);
  const int status = std::system(cmd.c_str());
  RunResult r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = read_string(out);
  r.err = read_string(err);
  return r;
}

/// Three well-separated clusters of 4x4 items, one item per CSV line.
std::string clustered_csv(size_t n, uint64_t seed) {
  blsh::RandomStream rs(seed, 77);
  std::ostringstream os;
  for (size_t i = 0; i < n; ++i) {
    const double centre = 3.0 * static_cast<double>(i % 3);
    for (int j = 0; j < 16; ++j) os << (j ? "," : "") << centre + 0.3 * rs.normal();
    os << '\n';
  }
  return os.str();
}

std::string write_dataset(const TempDir& dir, size_t n = 60) {
  const std::string path = dir.file("data.csv");
  write_string(path, clustered_csv(n, 5));
  return path;
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) out.push_back(line);
  return out;
}

}  // namespace

TEST(Cli, NonSquareBilinearKIsUsageError) {
  TempDir dir("cli_nonsquare");
  const std::string data = write_dataset(dir);
  const RunResult r = run_cli(dir, {"encode", "--dataset", data, "--dw", "4", "--dv", "4", "--k", "1000",
                                    "--out", dir.file("o")});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("961 or 1024"), std::string::npos) << r.err;
}

TEST(Cli, UnknownFlagAndMissingSubcommandAreUsageErrors) {
  TempDir dir("cli_usage");
  EXPECT_EQ(run_cli(dir, {"encode", "--no-such-flag", "1"}).code, 1);
  EXPECT_EQ(run_cli(dir, {}).code, 1);
  EXPECT_EQ(run_cli(dir, {"encode", "--method", "pca"}).code, 1);
}

TEST(Cli, MissingDatasetIsIoError) {
  TempDir dir("cli_io");
  const RunResult r = run_cli(dir, {"encode", "--dataset", dir.file("absent.csv"), "--dw", "4", "--dv", "4",
                                    "--k", "16", "--out", dir.file("o")});
  EXPECT_EQ(r.code, 2) << r.err;
}

TEST(Cli, WrongRecordLengthIsShapeError) {
  TempDir dir("cli_shape");
  const std::string data = write_dataset(dir);
  const RunResult r = run_cli(dir, {"encode", "--dataset", data, "--dw", "3", "--dv", "4", "--k", "16",
                                    "--out", dir.file("o")});
  EXPECT_EQ(r.code, 3) << r.err;
}

TEST(Cli, EncodeIsDeterministicAndSized) {
  TempDir dir("cli_encode");
  const std::string data = write_dataset(dir, 45);
  auto encode = [&](const std::string& out, const std::string& seed) {
    return run_cli(dir, {"encode", "--dataset", data, "--dw", "4", "--dv", "4", "--k", "25", "--m", "2",
                         "--seed", seed, "--kth", "10", "--out", dir.file(out), "--threads", "3"});
  };
  ASSERT_EQ(encode("a", "11").code, 0);
  ASSERT_EQ(encode("b", "11").code, 0);
  ASSERT_EQ(encode("c", "12").code, 0);
  const std::string a = read_string(dir.file("a/codes.bin"));
  EXPECT_FALSE(a.empty());
  EXPECT_EQ(a, read_string(dir.file("b/codes.bin")));
  EXPECT_EQ(read_string(dir.file("a/hasher.bin")), read_string(dir.file("b/hasher.bin")));
  EXPECT_NE(a, read_string(dir.file("c/codes.bin")));

  const blsh::CodeTable codes = blsh::load_codes(dir.file("a/codes.bin"));
  EXPECT_EQ(codes.size(), 45u);
  EXPECT_EQ(codes.bits(), 25u);
  const blsh::Hasher h = blsh::load_hasher(dir.file("a/hasher.bin"));
  ASSERT_TRUE(std::holds_alternative<blsh::BilinearHasher>(h));
  EXPECT_EQ(std::get<blsh::BilinearHasher>(h).side(), 10);
}

TEST(Cli, EncodePrintsParameterSummary) {
  TempDir dir("cli_summary");
  const std::string data = write_dataset(dir);
  const RunResult r = run_cli(dir, {"encode", "--dataset", data, "--dw", "4", "--dv", "4", "--k", "16",
                                    "--out", dir.file("o")});
  ASSERT_EQ(r.code, 0) << r.err;
  // side 4: W and V are 4x4, b and t have 16 entries each.
  EXPECT_NE(r.out.find("parameter bytes " + std::to_string(8 * (16 + 16 + 16 + 16))), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("single projection at the same k: " + std::to_string(8 * 16 * 16)), std::string::npos);
}

TEST(Cli, FlagsOverrideConfigFileOverrideDefaults) {
  TempDir dir("cli_config");
  const std::string data = write_dataset(dir);
  const std::string cfg = dir.file("run.cfg");
  write_string(cfg, "# encode settings\ndataset=" + data + "\ndw=4\ndv=4\nk=9\nm=3\nseed=3\n");

  ASSERT_EQ(run_cli(dir, {"encode", "--config", cfg, "--seed", "4", "--out", dir.file("file")}).code, 0);
  ASSERT_EQ(run_cli(dir, {"encode", "--dataset", data, "--dw", "4", "--dv", "4", "--k", "9", "--m", "3", "--seed",
                          "4", "--out", dir.file("flags")})
                .code,
            0);
  ASSERT_EQ(run_cli(dir, {"encode", "--config", cfg, "--out", dir.file("plain")}).code, 0);
  EXPECT_EQ(read_string(dir.file("file/codes.bin")), read_string(dir.file("flags/codes.bin")));
  EXPECT_NE(read_string(dir.file("file/codes.bin")), read_string(dir.file("plain/codes.bin")));

  const blsh::Hasher h = blsh::load_hasher(dir.file("file/hasher.bin"));
  ASSERT_TRUE(std::holds_alternative<blsh::BilinearHasher>(h));
  EXPECT_EQ(std::get<blsh::BilinearHasher>(h).m, 3u);  // from the file
  EXPECT_EQ(std::get<blsh::BilinearHasher>(h).k, 9u);

  write_string(cfg, "bogus=1\n");
  EXPECT_EQ(run_cli(dir, {"encode", "--config", cfg}).code, 1);
}

TEST(Cli, EvalPrWritesOneGroupPerMethodKMAndSeed) {
  TempDir dir("cli_eval");
  const std::string data = write_dataset(dir);
  const std::vector<std::string> args = {"eval-pr", "--dataset", data, "--dw", "4", "--dv", "4", "--method",
                                         "both", "--k", "16,36", "--m", "1,2", "--repetitions", "2",
                                         "--queries", "10", "--kth", "5", "--corr-pairs", "20"};
  auto with_out = [&](const std::string& o) {
    auto a = args;
    a.push_back("--out");
    a.push_back(dir.file(o));
    return a;
  };
  const RunResult r = run_cli(dir, with_out("a"));
  ASSERT_EQ(r.code, 0) << r.err;

  const auto lines = lines_of(read_string(dir.file("a/pr_curve.csv")));
  ASSERT_GE(lines.size(), 3u);
  EXPECT_EQ(lines[0], "# blsh-pr v1");
  EXPECT_EQ(lines[1], "method,k,m,seed,cutoff,precision,recall");
  std::set<std::tuple<std::string, std::string, std::string, std::string>> groups;
  for (size_t i = 2; i < lines.size(); ++i) {
    std::istringstream in(lines[i]);
    std::string method, k, m, seed;
    std::getline(in, method, ',');
    std::getline(in, k, ',');
    std::getline(in, m, ',');
    std::getline(in, seed, ',');
    groups.emplace(method, k, m, seed);
  }
  // 2 methods x 2 k x 2 m x (2 seeds + mean + std)
  EXPECT_EQ(groups.size(), 2u * 2u * 2u * 4u);
  EXPECT_TRUE(groups.count({"bilinear", "36", "2", "mean"}));
  EXPECT_TRUE(groups.count({"single", "16", "1", "2"}));  // seeds are seed + r with default seed 1

  const auto aupr = lines_of(read_string(dir.file("a/aupr.csv")));
  EXPECT_EQ(aupr[0], "# blsh-aupr v1");
  EXPECT_EQ(aupr.size(), 2u + 8u);
  const auto corr = lines_of(read_string(dir.file("a/correlation.csv")));
  EXPECT_EQ(corr[0], "# blsh-correlation v1");

  ASSERT_EQ(run_cli(dir, with_out("b")).code, 0);
  for (const char* f : {"pr_curve.csv", "aupr.csv", "correlation.csv"}) {
    EXPECT_EQ(read_string(dir.file(std::string("a/") + f)), read_string(dir.file(std::string("b/") + f))) << f;
  }
}

TEST(Cli, EvalPrWithNoQueriesLeftIsIoError) {
  TempDir dir("cli_noquery");
  std::string same;
  for (int i = 0; i < 10; ++i) same += "1,2,3,4\n";
  const std::string data = dir.file("same.csv");
  write_string(data, same);
  const RunResult r = run_cli(dir, {"eval-pr", "--dataset", data, "--dw", "2", "--dv", "2", "--k", "4",
                                    "--queries", "3", "--kth", "2", "--max-neighbors", "2", "--out", dir.file("o")});
  EXPECT_EQ(r.code, 2) << r.err;
  EXPECT_NE(r.err.find("no queries"), std::string::npos) << r.err;
}

TEST(Cli, GtWritesNeighborSets) {
  TempDir dir("cli_gt");
  const std::string data = write_dataset(dir);
  const RunResult r = run_cli(dir, {"gt", "--dataset", data, "--dw", "4", "--dv", "4", "--queries", "6", "--kth",
                                    "5", "--out", dir.file("o")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto lines = lines_of(read_string(dir.file("o/gt.csv")));
  EXPECT_EQ(lines[0], "# blsh-gt v1");
  EXPECT_EQ(lines.size(), 2u + 6u);
}

TEST(Cli, VerifyPassesOnSyntheticSquareData) {
  TempDir dir("cli_verify");
  const RunResult r = run_cli(dir, {"verify", "--dw", "25", "--dv", "25", "--pairs", "6", "--identical-pairs", "2",
                                    "--mc-samples", "2000", "--cov-samples", "5000", "--out", dir.file("o")});
  EXPECT_EQ(r.code, 0) << r.out << r.err;
  const auto lines = lines_of(read_string(dir.file("o/verify.csv")));
  EXPECT_EQ(lines[0], "# blsh-verify v1");
  EXPECT_EQ(lines.size(), 2u + 8u);
}

TEST(Cli, VerifyFailureExitsFiveWithReport) {
  // Scalar items violate the spectral assumption, and the shared-w
  // covariance of far-apart scalars lies far above the envelope.
  TempDir dir("cli_verify_fail");
  const RunResult r = run_cli(dir, {"verify", "--dw", "1", "--dv", "1", "--scale", "none", "--bandwidth", "3",
                                    "--pairs", "20", "--mc-samples", "2000", "--cov-samples", "20000", "--out",
                                    dir.file("o")});
  EXPECT_EQ(r.code, 5) << r.out << r.err;
  EXPECT_NE(r.err.find("verification failed"), std::string::npos) << r.err;
}

TEST(Cli, BenchOverMemoryCapIsNumericError) {
  TempDir dir("cli_bench_cap");
  const RunResult r = run_cli(dir, {"bench", "--method", "single", "--dw", "250", "--dv", "256", "--k", "40000",
                                    "--memory-cap-mb", "64", "--out", dir.file("o")});
  EXPECT_EQ(r.code, 4) << r.err;
  EXPECT_NE(r.err.find("memory cap"), std::string::npos) << r.err;
}

TEST(Cli, BenchWritesRecords) {
  TempDir dir("cli_bench");
  const RunResult r = run_cli(dir, {"bench", "--method", "both", "--dw", "8", "--dv", "8", "--k", "16,64", "--m",
                                    "1,2", "--bench-items", "20", "--out", dir.file("o")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto lines = lines_of(read_string(dir.file("o/bench.csv")));
  EXPECT_EQ(lines[0], "# blsh-bench v1");
  EXPECT_EQ(lines.size(), 2u + 2u + 4u);  // 2 single rows, 2x2 bilinear rows
}
