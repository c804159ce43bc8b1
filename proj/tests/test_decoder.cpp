#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "drmn/error.hpp"
#include "drmn/model.hpp"
#include "helpers.hpp"
#include "oracles.hpp"

namespace drmn {
namespace {

using ad::Matrix;
using testing::random_matrix;

class DecoderTest : public ::testing::Test {
 protected:
  Vocabulary vocab = testing::word_vocab(50);
  ModelConfig config = testing::tiny_config(50);
  SplitMix64 rng{61};
  nn::Dropout off;

  ad::Matrix& param(Model& m, const std::string& name) { return m.params()[m.params().index(name)].value; }

  EncodedTurn turn(int role, std::vector<int> ids, std::vector<std::string> oov = {}) {
    EncodedTurn t;
    t.role = role;
    std::size_t k = 0;
    for (int id : ids) {
      t.ids.push_back(id);
      t.tokens.push_back(id == Vocabulary::kUnk ? oov.at(k++) : vocab.token(id));
    }
    return t;
  }
};

TEST_F(DecoderTest, StartIsTanhOfAffineMerge) {
  Model m(config, 2);
  Graph g(&m.params(), false);
  Matrix x = random_matrix(1, 24, rng), y = random_matrix(1, 24, rng);
  auto s = m.decoder().start(g, g.constant(x), g.constant(y));
  oracle::Vec merged = oracle::plus(oracle::row0(x), oracle::row0(y));
  oracle::Vec h = oracle::plus(oracle::vecmat(merged, oracle::param(m.params(), "dec.init.w")),
                               oracle::param(m.params(), "dec.init.b")[0]);
  for (double& v : h) v = std::tanh(v);
  EXPECT_LT(oracle::max_abs_diff(oracle::row0(s.lstm.h.value()), h), 1e-12);
  EXPECT_EQ(s.lstm.c.value(), Matrix::Zero(1, 24));
  EXPECT_EQ(s.merged.value(), x + y);

  auto without = m.decoder().start(g, g.constant(x), g.zeros(1, 24));
  auto direct = m.decoder().start(g, g.constant(x), g.constant(Matrix::Zero(1, 24)));
  EXPECT_EQ(without.lstm.h.value(), direct.lstm.h.value());

  auto zero = m.decoder().start(g, g.zeros(1, 24), g.zeros(1, 24));
  EXPECT_EQ(zero.lstm.h.value(), Matrix::Zero(1, 24));  // biases start at zero
  EXPECT_THROW(m.decoder().start(g, g.zeros(1, 23), g.zeros(1, 24)), UsageError);
}

struct StepFixture {
  Graph g;
  Encoded e;
  DecoderState state;
  StepFixture(const Model& m, const ModelInput& in, const nn::Dropout& off)
      : g(&m.params(), false), e(m.encode(g, in, off)), state(e.start) {}
};

TEST_F(DecoderTest, GateOneGivesVocabularyDistribution) {
  Model m(config, 3);
  for (int trial = 0; trial < 50; ++trial) {
    auto in = testing::random_input(rng, vocab, 3, 5, 2, 0.3);
    StepFixture f(m, in, off);
    auto s = m.decoder().step(f.g, f.state, Vocabulary::kBos, f.e.bank, off, 1.0);
    const auto& vf = s.final.value();
    const auto& vs = s.vocab.value();
    ASSERT_EQ(vf.cols(), f.e.bank.extended_size());
    for (Eigen::Index j = 0; j < vf.cols(); ++j) ASSERT_EQ(vf(0, j), j < vs.cols() ? vs(0, j) : 0.0);
  }
}

TEST_F(DecoderTest, GateZeroGivesAggregatedCopyDistribution) {
  Model m(config, 4);
  ModelInput in;
  in.id = "three";
  in.context = {turn(0, {7, 9, 11})};
  in.use_memory = false;
  StepFixture f(m, in, off);
  auto s = m.decoder().step(f.g, f.state, Vocabulary::kBos, f.e.bank, off, 0.0);
  const auto& vf = s.final.value();
  const auto& a = s.attention.value();
  for (Eigen::Index j = 0; j < vf.cols(); ++j) {
    double expect = j == 7 ? a(0, 0) : j == 9 ? a(0, 1) : j == 11 ? a(0, 2) : 0.0;
    ASSERT_EQ(vf(0, j), expect) << j;
  }
}

TEST_F(DecoderTest, GateZeroMatchesPositionSumsWithRepeatsAndOov) {
  Model m(config, 5);
  for (int trial = 0; trial < 50; ++trial) {
    auto in = testing::random_input(rng, vocab, 3, 6, 2, 0.3);
    StepFixture f(m, in, off);
    auto s = m.decoder().step(f.g, f.state, Vocabulary::kBos, f.e.bank, off, 0.0);
    const auto& vf = s.final.value();
    std::vector<double> expect(static_cast<std::size_t>(vf.cols()), 0.0);
    for (std::size_t i = 0; i < f.e.bank.size(); ++i)
      expect[static_cast<std::size_t>(f.e.bank.ext_ids[i])] += s.attention.value()(0, static_cast<Eigen::Index>(i));
    for (Eigen::Index j = 0; j < vf.cols(); ++j) ASSERT_EQ(vf(0, j), expect[static_cast<std::size_t>(j)]);
  }
}

TEST_F(DecoderTest, DuplicatedTokenMassIsTheSumOfItsPositions) {
  Model m(config, 6);
  ModelInput in;
  in.id = "dup";
  // The repeated token sits at bank positions 2 and 7.
  in.context = {turn(0, {5, 6, 20, 8}), turn(1, {9, 10, 11, 20, 12})};
  in.use_memory = false;
  StepFixture f(m, in, off);
  ASSERT_EQ(f.e.bank.ext_ids[2], 20);
  ASSERT_EQ(f.e.bank.ext_ids[7], 20);
  for (double p : {0.0, 0.3, 1.0}) {
    DecoderState st = f.state;
    auto s = m.decoder().step(f.g, st, Vocabulary::kBos, f.e.bank, off, p);
    double copy = s.attention.value()(0, 2) + s.attention.value()(0, 7);
    EXPECT_NEAR(s.final.value()(0, 20), p * s.vocab.value()(0, 20) + (1 - p) * copy, 1e-12);
  }
}

TEST_F(DecoderTest, OovSurfacesShareOneExtendedId) {
  SourceBankBuilder b(50);
  Graph g;
  b.add(g.constant(Matrix::Zero(3, 2)), turn(0, {1, 5, 1}, {"qq", "rr"}), Origin::kTarget);
  b.add(g.constant(Matrix::Zero(2, 2)), turn(0, {1, 6}, {"qq"}), Origin::kSimilar);
  auto bank = b.finish();
  EXPECT_EQ(bank.ext_ids, (std::vector<int>{50, 5, 51, 50, 6}));
  EXPECT_EQ(bank.extended_size(), 52);
  EXPECT_EQ(bank.oov_id("rr"), 51);
  EXPECT_EQ(bank.oov_id("w0"), -1);
  EXPECT_EQ(bank.surface(51, vocab), "rr");
  EXPECT_EQ(bank.surface(5, vocab), vocab.token(5));
  EXPECT_EQ(bank.origins[4], Origin::kSimilar);
  EXPECT_EQ(bank.states.rows(), 5);
  EXPECT_THROW(SourceBankBuilder(50).finish(), UsageError);
}

TEST_F(DecoderTest, DistributionsNormalizeAndCopyOnlyAddsMass) {
  for (int trial = 0; trial < 30; ++trial) {
    Model m(config, 100 + static_cast<std::uint64_t>(trial));
    auto in = testing::random_input(rng, vocab, 3, 6, 2, 0.3);
    StepFixture f(m, in, off);
    int prev = Vocabulary::kBos;
    for (int t = 0; t < 4; ++t) {
      auto s = m.decoder().step(f.g, f.state, prev, f.e.bank, off);
      double p = s.gate.scalar();
      ASSERT_GE(p, 0.0);
      ASSERT_LE(p, 1.0);
      ASSERT_NEAR(s.attention.value().sum(), 1.0, 1e-9);
      ASSERT_NEAR(s.vocab.value().sum(), 1.0, 1e-9);
      ASSERT_NEAR(s.final.value().sum(), 1.0, 1e-6);
      for (Eigen::Index j = 0; j < s.vocab.cols(); ++j) ASSERT_GE(s.final.value()(0, j), p * s.vocab.value()(0, j));
      s.final.value().row(0).maxCoeff(&prev);
    }
  }
}

TEST_F(DecoderTest, ArgmaxIsInvariantToBankOrder) {
  Model m(config, 7);
  for (int trial = 0; trial < 30; ++trial) {
    auto in = testing::random_input(rng, vocab, 3, 6, 2, 0.3);
    StepFixture f(m, in, off);
    const SourceBank& bank = f.e.bank;
    std::vector<std::size_t> perm(bank.size());
    std::iota(perm.begin(), perm.end(), 0);
    for (std::size_t i = perm.size(); i > 1; --i) std::swap(perm[i - 1], perm[rng.below(i)]);
    SourceBank shuffled;
    shuffled.vocab_size = bank.vocab_size;
    shuffled.oov_tokens = bank.oov_tokens;
    Matrix states(bank.states.rows(), bank.states.cols());
    for (std::size_t i = 0; i < perm.size(); ++i) {
      states.row(static_cast<Eigen::Index>(i)) = bank.states.value().row(static_cast<Eigen::Index>(perm[i]));
      shuffled.tokens.push_back(bank.tokens[perm[i]]);
      shuffled.ext_ids.push_back(bank.ext_ids[perm[i]]);
      shuffled.origins.push_back(bank.origins[perm[i]]);
    }
    shuffled.states = f.g.constant(states);
    DecoderState a = f.state, b = f.state;
    auto sa = m.decoder().step(f.g, a, Vocabulary::kBos, bank, off);
    auto sb = m.decoder().step(f.g, b, Vocabulary::kBos, shuffled, off);
    Eigen::Index ia, ib;
    sa.final.value().row(0).maxCoeff(&ia);
    sb.final.value().row(0).maxCoeff(&ib);
    ASSERT_EQ(ia, ib);
    ASSERT_LT((sa.final.value() - sb.final.value()).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST_F(DecoderTest, TargetsRedirectOovGoldToItsCopyEntry) {
  Model m(config, 8);
  ModelInput in;
  in.id = "t";
  in.context = {turn(0, {5, 1}, {"zz"})};
  in.use_memory = false;
  in.gold_ids = {Vocabulary::kBos, 1, 6, 1, Vocabulary::kEos};
  in.gold_tokens = {"zz", "w2", "absent"};
  StepFixture f(m, in, off);
  EXPECT_EQ(m.targets(in, f.e.bank), (std::vector<int>{50, 6, Vocabulary::kUnk, Vocabulary::kEos}));
}

TEST_F(DecoderTest, PointMassOnGoldGivesZeroLoss) {
  Model m(config, 9);
  ModelInput in;
  in.id = "eos";
  in.context = {turn(0, {Vocabulary::kEos})};
  in.use_memory = false;
  in.gold_ids = {Vocabulary::kBos, Vocabulary::kEos};
  Graph g(&m.params(), false);
  auto r = m.loss(g, in, off, 0.0);
  EXPECT_EQ(r.loss.scalar(), 0.0);
  EXPECT_EQ(r.correct, 1);
}

TEST_F(DecoderTest, UniformDistributionGivesLogVocabularySize) {
  Vocabulary small = testing::word_vocab(10);
  Model m(testing::tiny_config(10), 10);
  param(m, "dec.out.w").setZero();
  param(m, "dec.out.b").setZero();
  ModelInput in;
  in.id = "u";
  in.context = {turn(0, {5, 6})};
  in.use_memory = false;
  in.gold_ids = {Vocabulary::kBos, 7, Vocabulary::kEos};
  in.gold_tokens = {small.token(7)};
  Graph g(&m.params(), false);
  EXPECT_NEAR(m.loss(g, in, off, 1.0).loss.scalar(), std::log(10.0), 1e-12);
  EXPECT_NEAR(std::log(10.0), 2.302585, 1e-6);
}

TEST_F(DecoderTest, LossIsTheMeanOfPerStepNegativeLogs) {
  Model m(config, 11);
  auto in = testing::random_input(rng, vocab, 3, 4, 1, 0.0);
  in.gold_ids = {Vocabulary::kBos, 8, 9, Vocabulary::kEos};
  in.gold_tokens = {vocab.token(8), vocab.token(9)};
  Graph g(&m.params(), false);
  auto r = m.loss(g, in, off);
  ASSERT_EQ(r.steps.size(), 3u);
  double sum = 0.0;
  std::vector<int> targets = {8, 9, Vocabulary::kEos};
  for (std::size_t t = 0; t < 3; ++t) sum += -std::log(r.steps[t].final.value()(0, targets[t]));
  EXPECT_NEAR(r.loss.scalar(), sum / 3.0, 1e-12);
}

TEST_F(DecoderTest, EosPointMassGivesEmptyOutput) {
  Model m(config, 12);
  param(m, "dec.out.w").setZero();
  param(m, "dec.out.b").setZero();
  param(m, "dec.out.b")(0, Vocabulary::kEos) = 100.0;
  param(m, "dec.gate.bias")(0, 0) = 100.0;
  auto in = testing::random_input(rng, vocab, 2, 4, 1, 0.0);
  for (int beam : {1, 3}) {
    auto r = m.generate(in, vocab, {beam, 10});
    EXPECT_TRUE(r.ids.empty());
    EXPECT_TRUE(r.finished);
    EXPECT_EQ(r.text(), "");
    EXPECT_EQ(r.gates.size(), 1u);
  }
}

TEST_F(DecoderTest, BeamWidthOneIsGreedy) {
  for (int trial = 0; trial < 20; ++trial) {
    Model m(config, 200 + static_cast<std::uint64_t>(trial));
    auto in = testing::random_input(rng, vocab, 3, 5, 2, 0.3);
    auto r = m.generate(in, vocab, {1, 8});
    StepFixture f(m, in, off);
    std::vector<int> greedy;
    int prev = Vocabulary::kBos;
    for (int t = 0; t < 8; ++t) {
      auto s = m.decoder().step(f.g, f.state, prev, f.e.bank, off);
      const auto& vf = s.final.value();
      int best = -1;
      for (int j = 0; j < vf.cols(); ++j) {
        if (j == Vocabulary::kPad || j == Vocabulary::kBos) continue;
        if (best < 0 || vf(0, j) > vf(0, best)) best = j;
      }
      if (best == Vocabulary::kEos) break;
      greedy.push_back(best);
      prev = best;
    }
    ASSERT_EQ(r.ids, greedy);
    ASSERT_LE(r.ids.size(), 8u);
    for (int id : r.ids) ASSERT_NE(id, Vocabulary::kPad);
  }
}

TEST_F(DecoderTest, WiderBeamNeverScoresWorseThanGreedy) {
  for (int trial = 0; trial < 10; ++trial) {
    Model m(config, 300 + static_cast<std::uint64_t>(trial));
    auto in = testing::random_input(rng, vocab, 3, 5, 1, 0.2);
    auto r = m.generate(in, vocab, {4, 6});
    EXPECT_LE(r.ids.size(), 6u);
    EXPECT_EQ(r.tokens.size(), r.ids.size());
  }
}

TEST_F(DecoderTest, CopiedOovIsRenderedBySurface) {
  Model m(config, 13);
  ModelInput in;
  in.id = "copy";
  in.context = {turn(0, {1}, {"zebra"})};
  in.use_memory = false;
  param(m, "dec.gate.bias")(0, 0) = -100.0;  // always copy
  param(m, "dec.gate.merged").setZero();
  param(m, "dec.gate.context").setZero();
  param(m, "dec.gate.state").setZero();
  auto r = m.generate(in, vocab, {1, 3});
  ASSERT_EQ(r.tokens.size(), 3u);
  EXPECT_EQ(r.text(), "zebra zebra zebra");
  EXPECT_FALSE(r.finished);
  for (const auto& c : r.copies) {
    EXPECT_TRUE(c.copied);
    EXPECT_EQ(c.position, 0);
    EXPECT_EQ(c.origin, Origin::kTarget);
  }
  EXPECT_EQ(r.copied_from_similar, 0);
}

TEST_F(DecoderTest, TargetOnlyBankNeverTagsSimilar) {
  ModelConfig c = config;
  c.bank_target_only = true;
  Model m(c, 14);
  param(m, "dec.gate.bias")(0, 0) = -5.0;  // copy-heavy
  for (int trial = 0; trial < 20; ++trial) {
    auto in = testing::random_input(rng, vocab, 3, 5, 2, 0.3);
    Graph g(&m.params(), false);
    auto e = m.encode(g, in, off);
    std::size_t ctx = 0;
    for (const auto& t : in.context) ctx += t.ids.size();
    ASSERT_EQ(e.bank.size(), ctx);
    for (auto o : e.bank.origins) ASSERT_EQ(o, Origin::kTarget);
    auto r = m.generate(in, vocab, {2, 6});
    ASSERT_EQ(r.copied_from_similar, 0);
  }
}

}  // namespace
}  // namespace drmn
