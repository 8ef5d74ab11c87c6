#include <gtest/gtest.h>

#include <array>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include <json.hpp>

#include "racm/sha256.hpp"

namespace fs = std::filesystem;

namespace {

std::string cli_path() {
  const char* env = std::getenv("RACM_CLI");
  if (env == nullptr) {
    ADD_FAILURE() << "RACM_CLI not set";
    return {};
  }
  return env;
}

struct RunResult {
  int exit_code = -1;
  std::string output;
};

RunResult run(const std::string& args) {
  const std::string cmd = cli_path() + " " + args + " 2>&1";
  FILE* pipe = popen(cmd.c_str(), "r");
  RunResult r;
  if (pipe == nullptr) return r;
  std::array<char, 4096> buf;
  while (fgets(buf.data(), buf.size(), pipe) != nullptr) r.output += buf.data();
  const int status = pclose(pipe);
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string file_digest(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::string bytes((std::istreambuf_iterator<char>(in)),
                    std::istreambuf_iterator<char>());
  return racm::digest_hex(racm::sha256(bytes.data(), bytes.size()));
}

class CliPipeline : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    root_ = fs::temp_directory_path() / "racm_cli_test";
    fs::remove_all(root_);
    fs::create_directories(root_);
  }

  static fs::path root_;
};

fs::path CliPipeline::root_;

std::string gen_flags(const fs::path& out) {
  return "gen-data --classes 8 --head 30 --tail 4 --dim 24 --sigma 0.2 "
         "--mem-size 1500 --relevant-frac 0.15 --value-dim 12 --seed 7 --out " +
         out.string();
}

}  // namespace

TEST_F(CliPipeline, MissingRequiredFlagIsUsageError) {
  const auto r = run("gen-data --classes 8");
  EXPECT_EQ(r.exit_code, 2);
}

TEST_F(CliPipeline, UnknownSubcommandIsUsageError) {
  EXPECT_EQ(run("frobnicate").exit_code, 2);
}

TEST_F(CliPipeline, GenDataWritesFourFilesPlusEcho) {
  const auto out = root_ / "data";
  const auto r = run(gen_flags(out));
  ASSERT_EQ(r.exit_code, 0) << r.output;
  for (const char* name :
       {"train.racm", "eval.racm", "memory.racm", "sidecar.json",
        "config.json"})
    EXPECT_TRUE(fs::exists(out / name)) << name;
}

TEST_F(CliPipeline, GenDataIdempotent) {
  const auto a = root_ / "data_a";
  const auto b = root_ / "data_b";
  ASSERT_EQ(run(gen_flags(a)).exit_code, 0);
  ASSERT_EQ(run(gen_flags(b)).exit_code, 0);
  for (const char* name : {"train.racm", "eval.racm", "memory.racm",
                           "sidecar.json"})
    EXPECT_EQ(file_digest(a / name), file_digest(b / name)) << name;
}

TEST_F(CliPipeline, FullPipelineAndReruns) {
  const auto data = root_ / "data";
  if (!fs::exists(data / "train.racm"))
    ASSERT_EQ(run(gen_flags(data)).exit_code, 0);
  const auto store = (data / "memory.racm").string();

  // index build: deterministic for a fixed seed
  const auto idx1 = (root_ / "m1.ivf").string();
  const auto idx2 = (root_ / "m2.ivf").string();
  ASSERT_EQ(run("build-index --store " + store + " --lists auto --seed 1 --out " + idx1).exit_code, 0);
  ASSERT_EQ(run("build-index --store " + store + " --lists auto --seed 1 --out " + idx2).exit_code, 0);
  EXPECT_EQ(file_digest(idx1), file_digest(idx2));

  // knn cache
  const auto cache = (root_ / "train.knn").string();
  ASSERT_EQ(run("precompute-knn --store " + store + " --queries " +
                (data / "train.racm").string() + " --k 15 --out " + cache)
                .exit_code,
            0);

  // train twice with the same seed: byte-identical checkpoints and history
  const auto run1 = (root_ / "run1").string();
  const auto run2 = (root_ / "run2").string();
  const std::string train_flags =
      "train --data " + data.string() + " --store " + store + " --cache " +
      cache + " --mode mam --layers 1 --k 15 --epochs 3 --batch 4 --tau 1 "
      "--seed 5 --out ";
  ASSERT_EQ(run(train_flags + run1).exit_code, 0);
  ASSERT_EQ(run(train_flags + run2).exit_code, 0);
  EXPECT_EQ(file_digest(fs::path(run1) / "model.racp"),
            file_digest(fs::path(run2) / "model.racp"));
  EXPECT_EQ(file_digest(fs::path(run1) / "history.jsonl"),
            file_digest(fs::path(run2) / "history.jsonl"));

  // history lines carry the documented schema
  std::ifstream hist(fs::path(run1) / "history.jsonl");
  std::string line;
  ASSERT_TRUE(std::getline(hist, line));
  const auto j = nlohmann::json::parse(line);
  for (const char* key : {"epoch", "loss", "overall", "many", "mid", "low"})
    EXPECT_TRUE(j.contains(key)) << key;

  // eval: exact and full-probe ivf agree
  const auto ev_exact =
      run("eval --run " + run1 + " --data " + data.string() + " --store " + store);
  ASSERT_EQ(ev_exact.exit_code, 0) << ev_exact.output;
  const auto ev_ivf = run("eval --run " + run1 + " --data " + data.string() +
                          " --store " + store + " --ivf " + idx1 +
                          " --probe 100000");
  ASSERT_EQ(ev_ivf.exit_code, 0) << ev_ivf.output;
  const auto m_exact = nlohmann::json::parse(ev_exact.output);
  const auto m_ivf = nlohmann::json::parse(ev_ivf.output);
  EXPECT_EQ(m_exact["metrics"]["overall"], m_ivf["metrics"]["overall"]);
  EXPECT_DOUBLE_EQ(m_ivf["recall_at_k"].get<double>(), 1.0);

  // grow-memory with itself as the extra store runs and reports both sides
  const auto grow = run("grow-memory --run " + run1 + " --data " +
                        data.string() + " --store " + store + " --extra " +
                        store);
  ASSERT_EQ(grow.exit_code, 0) << grow.output;
  const auto gj = nlohmann::json::parse(grow.output);
  EXPECT_TRUE(gj.contains("before"));
  EXPECT_TRUE(gj.contains("after"));

  // trace emits the documented schema
  const auto tr = run("trace --run " + run1 + " --data " + data.string() +
                      " --store " + store + " --query-id 3 --k 10");
  ASSERT_EQ(tr.exit_code, 0) << tr.output;
  const auto tj = nlohmann::json::parse(tr.output);
  EXPECT_EQ(tj["ids"].size(), 10u);
  EXPECT_EQ(tj["layers"].size(), 1u);
  EXPECT_EQ(tj["layers"][0].size(), 10u);
  EXPECT_TRUE(tj.contains("refined_norm"));

  // stale cache: same store, different k -> rejected with the I/O exit code
  const auto stale =
      run("train --data " + data.string() + " --store " + store + " --cache " +
          cache + " --mode mam --layers 1 --k 10 --epochs 1 --out " +
          (root_ / "run_stale").string());
  EXPECT_EQ(stale.exit_code, 3) << stale.output;

  // corrupt store file -> I/O error
  const auto bad = root_ / "bad.racm";
  std::ofstream(bad) << "definitely not a store";
  EXPECT_EQ(run("build-index --store " + bad.string() + " --out " +
                (root_ / "bad.ivf").string())
                .exit_code,
            3);
}

TEST_F(CliPipeline, GradCheckPassesAndFailsByTolerance) {
  const auto ok = run("grad-check --mode mam --layers 2 --dim 8 --seeds 2");
  EXPECT_EQ(ok.exit_code, 0) << ok.output;
  EXPECT_NE(ok.output.find("OK"), std::string::npos);
  // A coarse finite-difference step makes the comparison fail, which must
  // surface as the check-failure exit code.
  const auto fail = run(
      "grad-check --mode mam --layers 1 --dim 6 --seeds 1 --fd-step 0.5 "
      "--tolerance 1e-9");
  EXPECT_EQ(fail.exit_code, 1) << fail.output;
}
