#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "spanpsp/spanpsp.hpp"

namespace fs = std::filesystem;

namespace {

const fs::path& work_dir() {
  static const fs::path dir = [] {
    const fs::path d = fs::temp_directory_path() / ("spanpsp_cli_test_" + std::to_string(::getpid()));
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

struct Run {
  int status;
  std::string out;
  std::string err;
};

Run run(const std::string& args, const std::string& env = "") {
  const fs::path out = work_dir() / "stdout.txt", err = work_dir() / "stderr.txt";
  const std::string cmd = "cd '" + work_dir().string() + "' && " + env + " '" SPANPSP_CLI "' " + args + " >'" +
                          out.string() + "' 2>'" + err.string() + "'";
  const int raw = std::system(cmd.c_str());
  auto slurp = [](const fs::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
  };
  return {WIFEXITED(raw) ? WEXITSTATUS(raw) : -1, slurp(out), slurp(err)};
}

void write(const std::string& name, const std::string& text) { std::ofstream(work_dir() / name) << text; }

std::string read(const std::string& name) {
  std::ifstream in(work_dir() / name);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

const std::string kConfigDir = SPANPSP_SOURCE_DIR "/configs/";

}  // namespace

TEST(Cli, ConvertTwiceIsIdentity) {
  write("c.txt", "ab#1cd#2ef#3\nx#3\n\nab#2c#3\n");
  ASSERT_EQ(run("convert --mode seq-to-tree --in c.txt --out c.tree").status, 0);
  ASSERT_EQ(run("convert --mode tree-to-seq --in c.tree --out back.txt").status, 0);
  EXPECT_EQ(read("back.txt"), "ab#1cd#2ef#3\nx#3\nab#2c#3\n");
  EXPECT_EQ(read("c.tree").substr(0, 24), "abcdef\t0,6,#3 0,4,#2 0,2");
}

TEST(Cli, ConvertReportsBadLine) {
  write("bad.txt", "ab#3\n#1ab\n");
  const auto r = run("convert --mode seq-to-tree --in bad.txt --out x.tree");
  EXPECT_EQ(r.status, 1);
  EXPECT_NE(r.err.find("bad.txt:2"), std::string::npos);
  EXPECT_EQ(run("convert --mode sideways --in bad.txt --out x.tree").status, 1);
}

TEST(Cli, GenTrainPredictEval) {
  write("gen.conf", "n_sentences = 60\nseed = 3\n");
  write("dev.conf", "n_sentences = 20\nseed = 4\n");
  auto r = run("gen --config gen.conf --out train.txt");
  ASSERT_EQ(r.status, 0) << r.err;
  EXPECT_NE(r.out.find("S_num = 60"), std::string::npos);
  ASSERT_EQ(run("gen --config dev.conf --out dev.txt").status, 0);
  EXPECT_TRUE(fs::exists(work_dir() / "train.txt.trees"));

  r = run("--seed 2 train --config '" + kConfigDir + "quick.conf' --train train.txt --dev dev.txt --out run");
  ASSERT_EQ(r.status, 0) << r.err;
  EXPECT_NE(r.out.find("epoch, mean_loss"), std::string::npos);
  for (const char* f : {"train.log", "model.ckpt", "config.txt", "dev_eval.txt"}) {
    EXPECT_TRUE(fs::exists(work_dir() / "run" / f)) << f;
  }
  EXPECT_NE(read("run/config.txt").find("seed = 2"), std::string::npos);

  r = run("predict --model run/model.ckpt --in dev.txt --out pred.txt");
  ASSERT_EQ(r.status, 0) << r.err;
  r = run("eval --pred pred.txt --gold dev.txt");
  ASSERT_EQ(r.status, 0) << r.err;
  EXPECT_NE(r.out.find("PPH_f1 = "), std::string::npos);
  EXPECT_EQ(run("eval --pred pred.txt --gold dev.txt --exact-marks").status, 0);

  write("odd.txt", "c\n\n a \xce\xa9 \n");
  r = run("predict --model run/model.ckpt --in odd.txt --out odd.pred");
  ASSERT_EQ(r.status, 0);
  const auto lines = read("odd.pred");
  EXPECT_EQ(lines.substr(0, 5), "c#3\n\n");
  EXPECT_NE(r.err.find("unknown"), std::string::npos);
}

TEST(Cli, EvalRejectsMismatch) {
  write("g.txt", "ab#3\n");
  write("p.txt", "abc#3\n");
  EXPECT_EQ(run("eval --pred p.txt --gold g.txt").status, 1);
  write("p2.txt", "ab#3\nab#3\n");
  EXPECT_EQ(run("eval --pred p2.txt --gold g.txt").status, 1);
}

TEST(Cli, Bench) {
  const auto r = run("bench --lengths 5,10 --trials 3");
  ASSERT_EQ(r.status, 0) << r.err;
  EXPECT_NE(r.out.find("ratio 10/5"), std::string::npos);
  EXPECT_EQ(run("bench --lengths 5,x --trials 3").status, 1);
}

TEST(Cli, OutDirOverride) {
  write("o.txt", "ab#3\n");
  const auto r = run("convert --mode seq-to-tree --in o.txt --out moved.tree", "SPANPSP_OUT_DIR=elsewhere");
  ASSERT_EQ(r.status, 0) << r.err;
  EXPECT_TRUE(fs::exists(work_dir() / "elsewhere" / "moved.tree"));
}

TEST(Cli, UsageErrors) {
  EXPECT_NE(run("").status, 0);
  EXPECT_NE(run("predict --model missing.ckpt").status, 0);
  EXPECT_EQ(run("predict --model missing.ckpt --in x --out y").status, 1);
}
