#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <regex>
#include <sstream>

#include "drmn/cli.hpp"
#include "drmn/error.hpp"
#include "drmn/io.hpp"
#include "drmn/retrieval.hpp"

namespace drmn {
namespace {

namespace fs = std::filesystem;

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result run(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::path(::testing::TempDir()) /
           ("drmn_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }
  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  fs::path dir_;
};

TEST(CliHelp, EveryCommandDocumentsExactlyItsFlags) {
  const std::regex flag_line(R"(^\s+--([a-z0-9-]+) TEXT \[(.*)\])");
  for (const auto& spec : cli::command_registry()) {
    auto r = run({spec.name, "--help"});
    ASSERT_EQ(r.code, 0) << spec.name;
    std::map<std::string, std::string> documented;
    std::istringstream lines(r.out);
    std::string line;
    std::smatch m;
    while (std::getline(lines, line))
      if (std::regex_search(line, m, flag_line)) documented[m[1]] = m[2];
    std::map<std::string, std::string> expected = {{"config", "none"}};
    for (const auto& f : spec.flags)
      expected[cli::flag_name(f.key)] = f.default_value.empty() ? "none" : f.default_value;
    EXPECT_EQ(documented, expected) << spec.name;
  }
  auto top = run({"--help"});
  EXPECT_EQ(top.code, 0);
  for (const auto& spec : cli::command_registry()) EXPECT_NE(top.out.find(spec.name), std::string::npos);
}

TEST(CliHelp, RegistryListsEveryCommand) {
  std::vector<std::string> names;
  for (const auto& c : cli::command_registry()) names.push_back(c.name);
  EXPECT_EQ(names, (std::vector<std::string>{"synth", "vocab", "index", "retrieve", "train", "generate", "eval",
                                             "ablate", "gradcheck", "trace-esm"}));
  EXPECT_THROW(cli::command_spec("serve"), UsageError);
}

TEST_F(CliTest, ExitCodes) {
  auto none = run({});
  EXPECT_EQ(none.code, 2);
  auto unknown = run({"synth", "--out", path("c.jsonl"), "--bogus", "1"});
  EXPECT_EQ(unknown.code, 2);
  EXPECT_EQ(unknown.err.rfind("error: kind=usage", 0), 0u) << unknown.err;
  EXPECT_EQ(run({"synth"}).code, 2);  // missing required --out
  auto missing = run({"vocab", "--corpus", path("absent.jsonl"), "--out", path("v.txt")});
  EXPECT_EQ(missing.code, 3);
  EXPECT_NE(missing.err.find("error: kind=data"), std::string::npos);
  EXPECT_EQ(std::count(missing.err.begin(), missing.err.end(), '\n') >= 1, true);
  write_file_atomic(path("bad.ckpt"), "not a checkpoint");
  EXPECT_EQ(run({"synth", "--n", "12", "--out", path("c.jsonl")}).code, 0);
  EXPECT_EQ(run({"vocab", "--corpus", path("c.jsonl"), "--out", path("v.txt")}).code, 0);
  EXPECT_EQ(run({"generate", "--corpus", path("c.jsonl"), "--vocab", path("v.txt"), "--checkpoint",
                 path("bad.ckpt"), "--out", path("g.jsonl")})
                .code,
            3);
  write_file_atomic(path("cfg.txt"), "nonsense_key=3\n");
  EXPECT_EQ(run({"synth", "--config", path("cfg.txt"), "--out", path("c2.jsonl")}).code, 2);
}

TEST_F(CliTest, ConfigFileAndPrecedence) {
  write_file_atomic(path("cfg.txt"), "# tiny corpus\nn=9\nseed=3\n");
  ASSERT_EQ(run({"synth", "--config", path("cfg.txt"), "--out", path("a.jsonl")}).code, 0);
  ASSERT_EQ(run({"synth", "--n", "9", "--seed", "3", "--out", path("b.jsonl")}).code, 0);
  EXPECT_EQ(read_file(path("a.jsonl")), read_file(path("b.jsonl")));
  ASSERT_EQ(run({"synth", "--config", path("cfg.txt"), "--n", "12", "--out", path("c.jsonl")}).code, 0);
  std::string c = read_file(path("c.jsonl"));
  EXPECT_EQ(std::count(c.begin(), c.end(), '\n'), 12);
}

TEST_F(CliTest, SynthIsByteIdentical) {
  ASSERT_EQ(run({"synth", "--n", "1000", "--seed", "7", "--out", path("a.jsonl")}).code, 0);
  ASSERT_EQ(run({"synth", "--n", "1000", "--seed", "7", "--out", path("b.jsonl")}).code, 0);
  EXPECT_EQ(read_file(path("a.jsonl")), read_file(path("b.jsonl")));
  EXPECT_FALSE(fs::exists(path("a.jsonl.tmp")));
}

TEST_F(CliTest, RetrieveRespectsNeighborInvariants) {
  ASSERT_EQ(run({"synth", "--n", "120", "--out", path("c.jsonl")}).code, 0);
  ASSERT_EQ(run({"index", "--corpus", path("c.jsonl"), "--out", path("i.json")}).code, 0);
  ASSERT_EQ(run({"retrieve", "--corpus", path("c.jsonl"), "--index", path("i.json"), "--pool", "50", "--k", "3",
                 "--out", path("r.jsonl")})
                .code,
            0);
  auto cache = RetrievalCache::load(path("r.jsonl"));
  EXPECT_GT(cache.size(), 0u);
  for (const auto& id : cache.example_ids()) {
    const auto& neighbors = *cache.find(id);
    EXPECT_LE(neighbors.size(), 3u);
    std::string conv = id.substr(0, id.find('#'));
    for (const auto& n : neighbors) EXPECT_NE(n.id, conv);
  }
  // Same inputs, same bytes.
  ASSERT_EQ(run({"retrieve", "--corpus", path("c.jsonl"), "--k", "3", "--out", path("r2.jsonl")}).code, 0);
  EXPECT_EQ(read_file(path("r.jsonl")), read_file(path("r2.jsonl")));
}

TEST_F(CliTest, FullPipelineProducesAReport) {
  const std::vector<std::string> tiny = {"--word-dim", "8",         "--role-dim", "4",   "--hidden",
                                         "8",          "--layers",  "1",          "--max-epochs",
                                         "15",         "--batch-size", "8",       "--learning-rate", "0.01",
                                         "--keep-prob", "1"};
  ASSERT_EQ(run({"synth", "--n", "60", "--out", path("c.jsonl")}).code, 0);
  ASSERT_EQ(run({"vocab", "--corpus", path("c.jsonl"), "--min-freq", "1", "--out", path("v.txt")}).code, 0);
  ASSERT_EQ(run({"index", "--corpus", path("c.jsonl"), "--out", path("i.json")}).code, 0);
  ASSERT_EQ(run({"retrieve", "--corpus", path("c.jsonl"), "--index", path("i.json"), "--k", "1", "--out",
                 path("r.jsonl")})
                .code,
            0);
  std::vector<std::string> train = {"train", "--corpus", path("c.jsonl"), "--vocab", path("v.txt"), "--cache",
                                    path("r.jsonl"), "--out", path("m.ckpt"), "--log", path("log.csv")};
  train.insert(train.end(), tiny.begin(), tiny.end());
  auto t = run(train);
  ASSERT_EQ(t.code, 0) << t.err;
  std::string log = read_file(path("log.csv"));
  EXPECT_EQ(log.rfind("epoch,train_loss,dev_loss,seconds\n", 0), 0u);
  auto g = run({"generate", "--corpus", path("c.jsonl"), "--vocab", path("v.txt"), "--cache", path("r.jsonl"),
                "--checkpoint", path("m.ckpt"), "--out", path("g.jsonl")});
  ASSERT_EQ(g.code, 0) << g.err;
  auto e = run({"eval", "--generations", path("g.jsonl"), "--corpus", path("c.jsonl"), "--csv", path("r.csv")});
  ASSERT_EQ(e.code, 0) << e.err;
  std::string csv = read_file(path("r.csv"));
  std::istringstream rows(csv);
  std::string header, row;
  std::getline(rows, header);
  std::getline(rows, row);
  EXPECT_EQ(header, "variant,R1,RL,BLEU,n");
  std::vector<std::string> cells;
  std::istringstream cs(row);
  for (std::string c; std::getline(cs, c, ',');) cells.push_back(c);
  ASSERT_EQ(cells.size(), 5u);
  EXPECT_GT(std::stod(cells[3]), 0.0) << csv;

  auto trace = run({"trace-esm", "--corpus", path("c.jsonl"), "--vocab", path("v.txt"), "--cache", path("r.jsonl"),
                    "--checkpoint", path("m.ckpt"), "--example",
                    RetrievalCache::load(path("r.jsonl")).example_ids().front()});
  EXPECT_EQ(trace.code, 0) << trace.err;
  EXPECT_FALSE(trace.out.empty());
}

TEST_F(CliTest, GradcheckPasses) {
  auto r = run({"gradcheck", "--out", path("g.txt")});
  EXPECT_EQ(r.code, 0) << r.err << r.out;
}

}  // namespace
}  // namespace drmn
