#include <gtest/gtest.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <sys/wait.h>

#include "plm/fsio.hpp"
#include "plm/rng.hpp"

namespace fs = std::filesystem;

namespace {

struct RunResult {
  int exit_code = -1;
  std::string output;
};

RunResult run(const std::string& args) {
  const std::string cmd = std::string(PLM_BIN) + " " + args + " 2>&1";
  FILE* pipe = popen(cmd.c_str(), "r");
  EXPECT_NE(pipe, nullptr);
  RunResult r;
  std::array<char, 4096> buf;
  while (std::size_t n = std::fread(buf.data(), 1, buf.size(), pipe)) r.output.append(buf.data(), n);
  const int status = pclose(pipe);
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

class CliTest : public ::testing::Test {
 protected:
  fs::path dir;

  void SetUp() override {
    dir = fs::temp_directory_path() / "plm_cli_tests" /
          ::testing::UnitTest::GetInstance()->current_test_info()->name();
    fs::remove_all(dir);
    fs::create_directories(dir);
  }

  fs::path p(const std::string& name) const { return dir / name; }
  std::string q(const fs::path& path) const { return "'" + path.string() + "'"; }

  // Little word-salad corpus; content does not matter for plumbing tests.
  void write_corpus(const std::string& name, std::size_t sentences, std::uint64_t seed) const {
    static const char* words[] = {"ship", "river", "lamp", "stone", "wind",
                                  "gate", "cloud", "field", "horn", "moss"};
    plm::Rng rng(seed);
    std::ofstream out(p(name));
    for (std::size_t i = 0; i < sentences; ++i) {
      const std::size_t len = 4 + rng.index(4);
      for (std::size_t j = 0; j < len; ++j) {
        if (j) out << ' ';
        out << words[rng.index(10)];
      }
      out << '\n';
    }
  }

  void write_script(const std::string& name) const {
    std::ofstream out(p(name));
    const char* lines[] = {"ann\tthe ship left the gate",  "ben\twind moved the cloud",
                           "ann\tthe lamp burned low",      "ben\tmoss grew on the stone",
                           "ann\tthe river crossed the field", "ben\tthe horn sounded twice"};
    for (const auto* l : lines) out << l << '\n';
  }

  void build_vocab() const {
    const auto r = run("build-vocab --corpus " + q(p("general.txt")) + " --max-size 50 --out " +
                       q(p("vocab.txt")) + " --out-dir " + q(dir));
    ASSERT_EQ(r.exit_code, 0) << r.output;
  }

  std::string pretrain_args(const std::string& extra = "") const {
    return "pretrain --task sentence --corpus " + q(p("general.txt")) + " --vocab " +
           q(p("vocab.txt")) + " --embed-dim 4 --hidden 4 --epochs 1 --batch-size 4 --seed 3 " +
           "--out-dir " + q(dir) + " " + extra;
  }
};

}  // namespace

TEST_F(CliTest, NoSubcommandIsUsageError) {
  EXPECT_EQ(run("").exit_code, 2);
}

TEST_F(CliTest, UnknownFlagIsUsageError) {
  EXPECT_EQ(run("pretrain --no-such-flag 1").exit_code, 2);
}

TEST_F(CliTest, HelpExitsZero) {
  const auto r = run("--help");
  EXPECT_EQ(r.exit_code, 0);
  EXPECT_NE(r.output.find("build-vocab"), std::string::npos);
  EXPECT_NE(r.output.find("style-convergence"), std::string::npos);
}

TEST_F(CliTest, BuildVocabWritesFileAndManifest) {
  write_corpus("general.txt", 20, 1);
  build_vocab();
  std::ifstream vocab(p("vocab.txt"));
  std::string first, second;
  std::getline(vocab, first);
  std::getline(vocab, second);
  EXPECT_EQ(first, "<eos>");
  EXPECT_EQ(second, "<unk>");
  const auto manifest = plm::io::read_file(p("build-vocab.manifest.json"));
  EXPECT_NE(manifest.find("config_hash"), std::string::npos);
  EXPECT_NE(manifest.find("vocab.txt"), std::string::npos);
}

TEST_F(CliTest, PretrainFinetuneGenerateEvalRoundTrip) {
  write_corpus("general.txt", 30, 2);
  write_corpus("persona.txt", 12, 5);
  build_vocab();

  auto r = run(pretrain_args("--out " + q(p("gen.ckpt")) + " --metrics " + q(p("pre.csv"))));
  ASSERT_EQ(r.exit_code, 0) << r.output;
  EXPECT_TRUE(fs::exists(p("gen.ckpt")));
  EXPECT_NE(plm::io::read_file(p("pre.csv")).find("epoch,split,nll,perplexity"),
            std::string::npos);

  r = run("finetune --model " + q(p("gen.ckpt")) + " --vocab " + q(p("vocab.txt")) +
          " --corpus " + q(p("persona.txt")) +
          " --scheme surplus --epochs 1 --batch-size 4 --validation-fraction 0.25 --out " +
          q(p("alice.ckpt")) + " --metrics " + q(p("ft.csv")) + " --out-dir " + q(dir));
  ASSERT_EQ(r.exit_code, 0) << r.output;
  EXPECT_TRUE(fs::exists(p("alice.ckpt")));

  r = run("generate --model " + q(p("alice.ckpt")) + " --vocab " + q(p("vocab.txt")) +
          " --text 'ship river' --mode greedy --max-len 8 --out " + q(p("gens.txt")) +
          " --out-dir " + q(dir));
  ASSERT_EQ(r.exit_code, 0) << r.output;
  EXPECT_NE(plm::io::read_file(p("gens.txt")).find("ship river"), std::string::npos);

  r = run("eval-ppl --model " + q(p("alice.ckpt")) + " --vocab " + q(p("vocab.txt")) +
          " --corpus " + q(p("persona.txt")) + " --out " + q(p("ppl.csv")) + " --out-dir " +
          q(dir));
  ASSERT_EQ(r.exit_code, 0) << r.output;
  EXPECT_NE(r.output.find("perplexity"), std::string::npos);
  EXPECT_NE(plm::io::read_file(p("ppl.csv")).find("dataset,perplexity"), std::string::npos);
}

TEST_F(CliTest, RerunsProduceIdenticalArtifacts) {
  write_corpus("general.txt", 25, 7);
  build_vocab();
  auto r = run(pretrain_args("--out " + q(p("a.ckpt")) + " --metrics " + q(p("a.csv"))));
  ASSERT_EQ(r.exit_code, 0) << r.output;
  r = run(pretrain_args("--out " + q(p("b.ckpt")) + " --metrics " + q(p("b.csv"))));
  ASSERT_EQ(r.exit_code, 0) << r.output;
  EXPECT_EQ(plm::io::read_file(p("a.ckpt")), plm::io::read_file(p("b.ckpt")));
  EXPECT_EQ(plm::io::read_file(p("a.csv")), plm::io::read_file(p("b.csv")));
}

TEST_F(CliTest, ConfigFileWithFlagOverride) {
  write_corpus("general.txt", 20, 9);
  build_vocab();
  {
    std::ofstream cfg(p("train.cfg"));
    cfg << "# tiny run\nlr = 0.25\nepochs = 1\nbatch_size = 4\n";
  }
  auto r = run(pretrain_args("--config " + q(p("train.cfg")) + " --out " + q(p("c.ckpt"))));
  EXPECT_EQ(r.exit_code, 0) << r.output;

  {
    std::ofstream cfg(p("bad.cfg"));
    cfg << "learning_rate = 0.25\n";
  }
  r = run(pretrain_args("--config " + q(p("bad.cfg"))));
  EXPECT_EQ(r.exit_code, 2);
  EXPECT_NE(r.output.find("unknown key"), std::string::npos);
}

TEST_F(CliTest, ExitCodesDistinguishUsageAndData) {
  write_corpus("general.txt", 20, 11);
  build_vocab();
  EXPECT_EQ(run(pretrain_args("--lr -0.5")).exit_code, 2);
  EXPECT_EQ(run("eval-ppl --model " + q(p("missing.ckpt")) + " --vocab " + q(p("vocab.txt")) +
                " --corpus " + q(p("general.txt")) + " --out-dir " + q(dir))
                .exit_code,
            3);
}

TEST_F(CliTest, FingerprintMismatchIsDataError) {
  write_corpus("general.txt", 25, 13);
  write_corpus("other.txt", 25, 17);
  build_vocab();
  auto r = run(pretrain_args("--out " + q(p("gen.ckpt"))));
  ASSERT_EQ(r.exit_code, 0) << r.output;
  r = run("build-vocab --corpus " + q(p("other.txt")) + " --max-size 8 --out " +
          q(p("vocab2.txt")) + " --out-dir " + q(dir));
  ASSERT_EQ(r.exit_code, 0) << r.output;
  r = run("eval-ppl --model " + q(p("gen.ckpt")) + " --vocab " + q(p("vocab2.txt")) +
          " --corpus " + q(p("general.txt")) + " --out-dir " + q(dir));
  EXPECT_EQ(r.exit_code, 3);
  EXPECT_NE(r.output.find("fingerprint"), std::string::npos);
}

TEST_F(CliTest, PrecisionMismatchNeedsCastFlag) {
  write_corpus("general.txt", 25, 19);
  write_corpus("persona.txt", 10, 23);
  build_vocab();
  auto r = run(pretrain_args("--out " + q(p("gen64.ckpt"))));  // default 64-bit
  ASSERT_EQ(r.exit_code, 0) << r.output;

  const std::string ft = "finetune --model " + q(p("gen64.ckpt")) + " --vocab " +
                         q(p("vocab.txt")) + " --corpus " + q(p("persona.txt")) +
                         " --scheme relearn --epochs 1 --batch-size 4 --precision 32 " +
                         "--validation-fraction 0.25 --out-dir " + q(dir) + " --out " +
                         q(p("ft32.ckpt"));
  r = run(ft);
  EXPECT_EQ(r.exit_code, 3);
  EXPECT_NE(r.output.find("precision mismatch"), std::string::npos);
  r = run(ft + " --cast");
  EXPECT_EQ(r.exit_code, 0) << r.output;
}

TEST_F(CliTest, ReplyTaskPipelineFromScript) {
  write_script("script.tsv");
  auto r = run("build-vocab --script " + q(p("script.tsv")) + " --max-size 50 --out " +
               q(p("vocab.txt")) + " --out-dir " + q(dir));
  ASSERT_EQ(r.exit_code, 0) << r.output;
  r = run("pretrain --task reply --script " + q(p("script.tsv")) + " --vocab " +
          q(p("vocab.txt")) +
          " --embed-dim 4 --hidden 4 --epochs 1 --batch-size 2 --validation-fraction 0.25 " +
          "--seed 3 --out " + q(p("reply.ckpt")) + " --out-dir " + q(dir));
  ASSERT_EQ(r.exit_code, 0) << r.output;
  r = run("generate --model " + q(p("reply.ckpt")) + " --vocab " + q(p("vocab.txt")) +
          " --text 'the ship left' --max-len 6 --out " + q(p("reply.txt")) + " --out-dir " +
          q(dir));
  EXPECT_EQ(r.exit_code, 0) << r.output;
}

TEST_F(CliTest, NgramTrainAndPerplexity) {
  write_corpus("general.txt", 40, 29);
  build_vocab();
  auto r = run("ngram-train --corpus " + q(p("general.txt")) + " --vocab " + q(p("vocab.txt")) +
               " --order 2 --out " + q(p("kn.arpa")) + " --out-dir " + q(dir));
  ASSERT_EQ(r.exit_code, 0) << r.output;
  EXPECT_NE(plm::io::read_file(p("kn.arpa")).find("\\data\\"), std::string::npos);
  r = run("ngram-ppl --model " + q(p("kn.arpa")) + " --vocab " + q(p("vocab.txt")) +
          " --corpus " + q(p("general.txt")) + " --out " + q(p("nppl.csv")) + " --out-dir " +
          q(dir));
  EXPECT_EQ(r.exit_code, 0) << r.output;
  EXPECT_NE(r.output.find("perplexity"), std::string::npos);
}

TEST_F(CliTest, SimilarityMatrixAndStyle) {
  write_corpus("a.txt", 20, 31);
  write_corpus("b.txt", 20, 37);
  write_corpus("general.txt", 20, 31);
  build_vocab();
  auto r = run("similarity-matrix --corpus a=" + p("a.txt").string() + " --corpus b=" +
               p("b.txt").string() + " --vocab " + q(p("vocab.txt")) + " --out " +
               q(p("sim.csv")) + " --out-dir " + q(dir));
  ASSERT_EQ(r.exit_code, 0) << r.output;
  const auto csv = plm::io::read_file(p("sim.csv"));
  EXPECT_NE(csv.find("corpus,a,b"), std::string::npos);

  r = run("eval-style --candidate " + q(p("a.txt")) + " --target " + q(p("b.txt")) +
          " --vocab " + q(p("vocab.txt")) + " --out " + q(p("style.csv")) + " --out-dir " +
          q(dir));
  EXPECT_EQ(r.exit_code, 0) << r.output;
  EXPECT_NE(r.output.find("style cross entropy"), std::string::npos);

  r = run("similarity-matrix --corpus nolabel --vocab " + q(p("vocab.txt")) + " --out-dir " +
          q(dir));
  EXPECT_EQ(r.exit_code, 2);
}

TEST_F(CliTest, EnvVarSetsDefaultOutputDirectory) {
  write_corpus("general.txt", 15, 41);
  const auto env_dir = p("envout");
  const std::string cmd = "PLM_OUT_DIR=" + q(env_dir) + " " + std::string(PLM_BIN) +
                          " build-vocab --corpus " + q(p("general.txt")) + " --max-size 30";
  FILE* pipe = popen((cmd + " 2>&1").c_str(), "r");
  ASSERT_NE(pipe, nullptr);
  std::array<char, 1024> buf;
  while (std::fread(buf.data(), 1, buf.size(), pipe) > 0) {
  }
  const int status = pclose(pipe);
  ASSERT_TRUE(WIFEXITED(status));
  ASSERT_EQ(WEXITSTATUS(status), 0);
  EXPECT_TRUE(fs::exists(env_dir / "vocab.txt"));
  EXPECT_TRUE(fs::exists(env_dir / "build-vocab.manifest.json"));
}

TEST_F(CliTest, SizeSweepWritesAscendingSizes) {
  write_corpus("general.txt", 30, 43);
  write_corpus("persona.txt", 16, 47);
  build_vocab();
  auto r = run(pretrain_args("--out " + q(p("gen.ckpt"))));
  ASSERT_EQ(r.exit_code, 0) << r.output;
  r = run("size-sweep --model " + q(p("gen.ckpt")) + " --vocab " + q(p("vocab.txt")) +
          " --corpus " + q(p("persona.txt")) +
          " --sizes 0,4,8 --scheme relearn --epochs 1 --batch-size 4 " +
          "--validation-fraction 0.25 --out " + q(p("sweep.csv")) + " --out-dir " + q(dir));
  ASSERT_EQ(r.exit_code, 0) << r.output;
  const auto csv = plm::io::read_file(p("sweep.csv"));
  EXPECT_NE(csv.find("size,perplexity"), std::string::npos);
  EXPECT_NE(csv.find("\n0,"), std::string::npos);
  EXPECT_NE(csv.find("\n8,"), std::string::npos);
}

TEST_F(CliTest, StyleConvergenceWritesProbeColumns) {
  write_script("script.tsv");
  write_corpus("target.txt", 10, 53);
  {
    std::ofstream msgs(p("messages.txt"));
    msgs << "the ship left\nthe lamp burned\n";
  }
  auto r = run("build-vocab --script " + q(p("script.tsv")) + " --corpus " + q(p("target.txt")) +
               " --max-size 60 --out " + q(p("vocab.txt")) + " --out-dir " + q(dir));
  ASSERT_EQ(r.exit_code, 0) << r.output;
  r = run("pretrain --task reply --script " + q(p("script.tsv")) + " --vocab " +
          q(p("vocab.txt")) +
          " --embed-dim 4 --hidden 4 --epochs 1 --batch-size 2 --validation-fraction 0.25 " +
          "--seed 3 --out " + q(p("reply.ckpt")) + " --out-dir " + q(dir));
  ASSERT_EQ(r.exit_code, 0) << r.output;
  r = run("style-convergence --model " + q(p("reply.ckpt")) + " --vocab " + q(p("vocab.txt")) +
          " --script " + q(p("script.tsv")) + " --speaker ann --target t=" +
          p("target.txt").string() + " --messages " + q(p("messages.txt")) +
          " --probe-epochs 0,1 --scheme relearn --epochs 1 --batch-size 2 --mode sampled " +
          "--decode-seed 5 --max-len 6 --out " + q(p("conv.csv")) + " --out-dir " + q(dir));
  ASSERT_EQ(r.exit_code, 0) << r.output;
  const auto csv = plm::io::read_file(p("conv.csv"));
  EXPECT_NE(csv.find("target,epoch_0,epoch_1"), std::string::npos);
  EXPECT_NE(csv.find("\nt,"), std::string::npos);
}
