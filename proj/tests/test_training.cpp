#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <cstring>

#include "drmn/error.hpp"
#include "drmn/experiment.hpp"
#include "drmn/synth.hpp"
#include "drmn/training.hpp"
#include "helpers.hpp"

namespace drmn {
namespace {

using ad::Matrix;

TEST(Optimizer, SgdStep) {
  ad::ParamSet p;
  p.add("x", Matrix::Constant(1, 1, 1.0));
  ad::Gradients g(p);
  g[0](0, 0) = 2.0;
  Optimizer opt(OptimizerKind::kSgd, 0.1, p);
  opt.step(p, g);
  EXPECT_DOUBLE_EQ(p[0].value(0, 0), 0.8);
  EXPECT_TRUE(opt.first_moments().empty());
}

TEST(Optimizer, AdamFirstStepMovesByLearningRate) {
  for (double grad : {0.3, -2.0, 1e-3}) {
    ad::ParamSet p;
    p.add("x", Matrix::Constant(1, 1, 1.0));
    ad::Gradients g(p);
    g[0](0, 0) = grad;
    Optimizer opt(OptimizerKind::kAdam, 5e-4, p);
    opt.step(p, g);
    // m_hat = g, v_hat = g^2, so the step is lr * |g| / (|g| + eps).
    double expect = 5e-4 * std::abs(grad) / (std::abs(grad) + 1e-8);
    EXPECT_NEAR(1.0 - p[0].value(0, 0), std::copysign(expect, grad), 1e-15);
    EXPECT_NEAR(std::abs(1.0 - p[0].value(0, 0)), 5e-4, 1e-8);
  }
}

TEST(Optimizer, ZeroGradientLeavesParametersUnchanged) {
  for (auto kind : {OptimizerKind::kAdam, OptimizerKind::kSgd}) {
    ad::ParamSet p;
    SplitMix64 rng(1);
    p.add("x", testing::random_matrix(3, 4, rng));
    Matrix before = p[0].value;
    ad::Gradients g(p);
    Optimizer opt(kind, 0.1, p);
    for (int i = 0; i < 3; ++i) opt.step(p, g);
    EXPECT_EQ(p[0].value, before);
    EXPECT_EQ(opt.steps(), 3u);
  }
  EXPECT_THROW(parse_optimizer("rmsprop"), UsageError);
}

TEST(Clip, OnlyMagnitudeChanges) {
  SplitMix64 rng(2);
  for (int trial = 0; trial < 50; ++trial) {
    ad::ParamSet p;
    p.add("a", Matrix::Zero(2, 3));
    p.add("b", Matrix::Zero(1, 4));
    ad::Gradients g(p);
    double scale = trial % 2 ? 10.0 : 0.5;
    g[0] = testing::random_matrix(2, 3, rng, -scale, scale);
    g[1] = testing::random_matrix(1, 4, rng, -scale, scale);
    ad::Gradients before = g;
    double norm = clip_global_norm(g, 5.0);
    EXPECT_DOUBLE_EQ(norm, before.global_norm());
    if (norm <= 5.0) {
      EXPECT_EQ(g[0], before[0]);
      continue;
    }
    EXPECT_NEAR(g.global_norm(), 5.0, 1e-12);
    double ratio = g[0](0, 0) / before[0](0, 0);
    EXPECT_GT(ratio, 0.0);
    for (std::size_t i = 0; i < 2; ++i)
      for (Eigen::Index k = 0; k < g[i].size(); ++k) EXPECT_NEAR(g[i].data()[k], ratio * before[i].data()[k], 1e-12);
  }
}

TEST(Config, SerializeParseRoundTrip) {
  TrainConfig c;
  c.hidden = 17;
  c.learning_rate = 0.1 + 0.2;
  c.mode = Mode::kConcat;
  c.memory_keys = MemoryKeys::kPooled;
  c.bank_target_only = true;
  c.seed = 12345678901234ULL;
  auto back = TrainConfig::parse(c.serialize());
  EXPECT_EQ(back.serialize(), c.serialize());
  EXPECT_EQ(back.learning_rate, c.learning_rate);
  EXPECT_THROW(TrainConfig::parse("bogus=1\n"), UsageError);
  EXPECT_THROW(TrainConfig::parse("hidden=abc\n"), UsageError);
  EXPECT_THROW(TrainConfig::parse("hidden\n"), UsageError);
}

TEST(Config, DefaultsFollowTheReferenceSetup) {
  TrainConfig c;
  EXPECT_EQ(c.word_dim, 300);
  EXPECT_EQ(c.role_dim, 100);
  EXPECT_EQ(c.hidden, 300);
  EXPECT_EQ(c.model_config(10, 2).state_width(), 600);
  EXPECT_EQ(c.keep_prob, 0.8);
  EXPECT_EQ(c.learning_rate, 5e-4);
  EXPECT_EQ(c.batch_size, 32);
  EXPECT_EQ(c.clip_norm, 5.0);
  EXPECT_EQ(c.patience, 5);
}

TEST(Config, TopKZeroExactlyWhenEsmOff) {
  TrainConfig c;
  c.top_k = 0;
  EXPECT_THROW(c.validate(), UsageError);
  c.mode = Mode::kEsmOff;
  EXPECT_NO_THROW(c.validate());
  c.top_k = 2;
  EXPECT_THROW(c.validate(), UsageError);
  c.mode = Mode::kDrmn;
  c.top_k = 4;
  EXPECT_THROW(c.validate(), UsageError);
  c.top_k = 3;
  c.keep_prob = 0.0;
  EXPECT_THROW(c.validate(), UsageError);
}

TEST(LogFormat, HeaderAndLine) {
  EXPECT_EQ(format_log_header(), "epoch,train_loss,dev_loss,seconds\n");
  EXPECT_EQ(format_log_line({3, 1.5, 2.25, 0.5}), "3,1.5000000000,2.2500000000,0.500\n");
}

// Small synthetic setup shared by the trainer tests.
struct TinySetup {
  Corpus corpus;
  Vocabulary vocab;
  RetrievalCache cache;
  TrainConfig config;
  Dataset data;

  explicit TinySetup(std::size_t n = 30, Mode mode = Mode::kDrmn, int top_k = 1) {
    corpus = synthesize_corpus({n, 3, 5});
    vocab = build_vocab(corpus, 1);
    cache = build_cache(corpus, make_examples(corpus, "judge"), {});
    config.word_dim = 8;
    config.role_dim = 4;
    config.hidden = 6;
    config.layers = 1;
    config.batch_size = 4;
    config.learning_rate = 5e-3;
    config.mode = mode;
    config.top_k = top_k;
    config.max_epochs = 5;
    data = build_dataset(corpus, vocab, &cache, config);
  }
};

TEST(BuildInputs, ModesWireSimilarConversationsDifferently) {
  Corpus c = synthesize_corpus({30, 3, 5});
  Vocabulary v = build_vocab(c, 1);
  auto ex = make_examples(c, "judge");
  RetrievalCache cache = build_cache(c, ex, {});
  auto drmn2 = build_inputs(ex, c, v, &cache, Mode::kDrmn, 2, {});
  auto off = build_inputs(ex, c, v, nullptr, Mode::kEsmOff, 0, {});
  auto cat = build_inputs(ex, c, v, &cache, Mode::kConcat, 1, {});
  for (std::size_t i = 0; i < ex.size(); ++i) {
    const auto& n = *cache.find(ex[i].id);
    EXPECT_EQ(drmn2[i].similar.size(), std::min<std::size_t>(2, n.size()));
    for (std::size_t j = 0; j < drmn2[i].similar.size(); ++j) EXPECT_EQ(drmn2[i].similar[j].id, n[j].id);
    EXPECT_TRUE(drmn2[i].use_memory);
    EXPECT_TRUE(off[i].similar.empty());
    EXPECT_FALSE(off[i].use_memory);
    EXPECT_EQ(off[i].context.size(), ex[i].context.size());
    EXPECT_TRUE(cat[i].similar.empty());
    EXPECT_FALSE(cat[i].use_memory);
    std::size_t borrowed = n.empty() ? 0 : c[*c.find(n[0].id)].turns.size();
    EXPECT_EQ(cat[i].borrowed_turns, borrowed);
    EXPECT_EQ(cat[i].context.size(), borrowed + ex[i].context.size());
    EXPECT_EQ(cat[i].gold_ids, off[i].gold_ids);
  }
  RetrievalCache empty;
  EXPECT_THROW(build_inputs(ex, c, v, &empty, Mode::kDrmn, 1, {}), DataError);
  EXPECT_THROW(build_inputs(ex, c, v, nullptr, Mode::kDrmn, 1, {}), UsageError);
}

TEST(Trainer, SameSeedSameLosses) {
  TinySetup s;
  Trainer a(s.config, s.vocab.size(), s.vocab.roles());
  Trainer b(s.config, s.vocab.size(), s.vocab.roles());
  for (int e = 0; e < 2; ++e) {
    auto la = a.run_epoch(s.data.train, s.data.dev);
    auto lb = b.run_epoch(s.data.train, s.data.dev);
    EXPECT_EQ(la.train_loss, lb.train_loss);
    EXPECT_EQ(la.dev_loss, lb.dev_loss);
  }
}

TEST(Trainer, EsmOffRunsToCompletion) {
  TinySetup s(30, Mode::kEsmOff, 0);
  Trainer t(s.config, s.vocab.size(), s.vocab.roles());
  t.set_max_epochs(2);
  auto logs = t.fit(s.data.train, s.data.dev);
  ASSERT_EQ(logs.size(), 2u);
  for (const auto& l : logs) EXPECT_TRUE(std::isfinite(l.train_loss));
  for (const auto& in : s.data.train) {
    Graph g(&t.model().params(), false);
    nn::Dropout off;
    auto e = t.model().encode(g, in, off);
    ASSERT_EQ(e.memory.memory.value(), Matrix::Zero(1, t.model().config().state_width()));
  }
}

TEST(Trainer, ResumeMatchesUninterruptedTraining) {
  for (auto opt : {OptimizerKind::kAdam, OptimizerKind::kSgd}) {
    TinySetup s;
    s.config.optimizer = opt;
    s.config.keep_prob = 0.8;  // dropout draws must resume too
    Trainer straight(s.config, s.vocab.size(), s.vocab.roles());
    std::vector<EpochLog> expect;
    for (int e = 0; e < 5; ++e) expect.push_back(straight.run_epoch(s.data.train, s.data.dev));

    Trainer first(s.config, s.vocab.size(), s.vocab.roles());
    for (int e = 0; e < 2; ++e) first.run_epoch(s.data.train, s.data.dev);
    Checkpoint saved = parse_checkpoint(serialize_checkpoint(first.checkpoint()));
    Trainer resumed = Trainer::resume(saved);
    EXPECT_EQ(resumed.epoch(), 2);
    for (int e = 2; e < 5; ++e) {
      auto log = resumed.run_epoch(s.data.train, s.data.dev);
      EXPECT_EQ(log.epoch, expect[static_cast<std::size_t>(e)].epoch);
      EXPECT_EQ(log.train_loss, expect[static_cast<std::size_t>(e)].train_loss);
      EXPECT_EQ(log.dev_loss, expect[static_cast<std::size_t>(e)].dev_loss);
    }
    for (std::size_t i = 0; i < straight.model().params().size(); ++i)
      ASSERT_EQ(resumed.model().params()[i].value, straight.model().params()[i].value);
    EXPECT_EQ(serialize_checkpoint(resumed.checkpoint()), serialize_checkpoint(straight.checkpoint()));
  }
}

TEST(Checkpoint, RoundTripIsBitExact) {
  TinySetup s;
  Trainer t(s.config, s.vocab.size(), s.vocab.roles());
  t.run_epoch(s.data.train, s.data.dev);
  Checkpoint c = t.checkpoint();
  std::string bytes = serialize_checkpoint(c);
  Checkpoint back = parse_checkpoint(bytes);
  EXPECT_EQ(serialize_checkpoint(back), bytes);
  EXPECT_EQ(back.rng_state, c.rng_state);
  EXPECT_EQ(back.optimizer_steps, c.optimizer_steps);
  EXPECT_EQ(back.roles, c.roles);
  EXPECT_EQ(back.config.serialize(), c.config.serialize());
  ASSERT_EQ(back.tensors.size(), c.tensors.size());
  // Parameters, two Adam moments and the best snapshot.
  EXPECT_EQ(c.tensors.size(), 4 * t.model().params().size());
  for (std::size_t i = 0; i < c.tensors.size(); ++i) {
    EXPECT_EQ(back.tensors[i].first, c.tensors[i].first);
    EXPECT_EQ(std::memcmp(back.tensors[i].second.data(), c.tensors[i].second.data(),
                          sizeof(double) * static_cast<std::size_t>(c.tensors[i].second.size())),
              0);
  }
  EXPECT_EQ(bytes.substr(0, 4), "DRMN");
}

TEST(Checkpoint, RejectsVersionMismatchAndCorruption) {
  TinySetup s;
  Trainer t(s.config, s.vocab.size(), s.vocab.roles());
  std::string bytes = serialize_checkpoint(t.checkpoint());
  std::string wrong_version = bytes;
  wrong_version[4] = 2;
  EXPECT_THROW(parse_checkpoint(wrong_version), DataError);
  std::string bad_magic = bytes;
  bad_magic[0] = 'X';
  EXPECT_THROW(parse_checkpoint(bad_magic), DataError);
  EXPECT_THROW(parse_checkpoint(bytes + "x"), DataError);
  EXPECT_THROW(parse_checkpoint(bytes.substr(0, bytes.size() - 3)), DataError);
  try {
    parse_checkpoint(wrong_version, "m.ckpt");
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("version"), std::string::npos);
  }
}

TEST(Checkpoint, InferenceModelUsesBestSnapshot) {
  TinySetup s;
  Trainer t(s.config, s.vocab.size(), s.vocab.roles());
  t.run_epoch(s.data.train, s.data.dev);
  Model best = t.best_model();
  t.run_epoch(s.data.train, s.data.dev);
  Checkpoint c = t.checkpoint();
  Model restored = model_from_checkpoint(c);
  Model expect = t.best_model();
  for (std::size_t i = 0; i < restored.params().size(); ++i)
    ASSERT_EQ(restored.params()[i].value, expect.params()[i].value);
  (void)best;
}

TEST(Trainer, OneSmallStepLowersTheBatchLoss) {
  TinySetup s;
  s.config.keep_prob = 1.0;
  s.config.optimizer = OptimizerKind::kSgd;
  s.config.learning_rate = 1e-3;
  int improved = 0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    s.config.seed = seed;
    Trainer t(s.config, s.vocab.size(), s.vocab.roles());
    std::vector<ModelInput> batch(s.data.train.begin(), s.data.train.begin() + 4);
    std::vector<const ModelInput*> ptrs;
    for (const auto& in : batch) ptrs.push_back(&in);
    ad::Gradients grads(t.model().params());
    double before = t.batch_gradients(ptrs, grads);
    EXPECT_NEAR(before, evaluate_loss(t.model(), batch).loss, 1e-12);
    t.optimizer().step(t.model().params(), grads);
    double after = evaluate_loss(t.model(), batch).loss;
    if (after < before) ++improved;
  }
  EXPECT_EQ(improved, 20);
}

TEST(Trainer, NonFiniteLossNamesTheFirstBadTensor) {
  TinySetup s;
  Trainer t(s.config, s.vocab.size(), s.vocab.roles());
  auto& p = t.model().params();
  p[p.index("enc.word_attn.w")].value(0, 0) = std::nan("");
  std::vector<const ModelInput*> batch = {&s.data.train[0]};
  ad::Gradients grads(p);
  try {
    t.batch_gradients(batch, grads);
    FAIL() << "expected a numeric error";
  } catch (const NumericError& e) {
    std::string msg = e.what();
    EXPECT_NE(msg.find("first non-finite tensor"), std::string::npos) << msg;
  }
}

TEST(Trainer, RejectsEmptyInputs) {
  TinySetup s;
  EXPECT_THROW(Trainer(s.config, s.vocab.size(), {}), UsageError);
  Trainer t(s.config, s.vocab.size(), s.vocab.roles());
  EXPECT_THROW(t.run_epoch({}, {}), DataError);
}

TEST(Trainer, MemorizedExampleIsGeneratedExactly) {
  TinySetup s;
  s.config.keep_prob = 1.0;
  s.config.learning_rate = 2e-2;
  s.config.batch_size = 1;
  s.config.max_epochs = 200;
  s.config.patience = 1000;
  std::vector<ModelInput> one = {s.data.train[0]};
  Trainer t(s.config, s.vocab.size(), s.vocab.roles());
  for (int e = 0; e < 200 && evaluate_loss(t.model(), one).loss > 0.01; ++e) t.run_epoch(one, one);
  auto r = t.model().generate(one[0], s.vocab, {1, 40});
  std::string gold;
  for (const auto& tok : one[0].gold_tokens) gold += (gold.empty() ? "" : " ") + tok;
  EXPECT_EQ(r.text(), gold);
  EXPECT_TRUE(r.finished);
  EXPECT_EQ(t.model().generate(one[0], s.vocab, {3, 40}).text(), gold);
}

TEST(Ablation, TableHasEveryVariant) {
  TinySetup s(30);
  s.config.max_epochs = 1;
  AblationOptions opt;
  opt.generate.max_len = 5;
  auto rows = run_ablation(s.config, s.corpus, s.vocab, s.cache, opt);
  ASSERT_EQ(rows.size(), 5u);
  std::vector<std::string> names;
  for (const auto& r : rows) names.push_back(r.variant);
  EXPECT_EQ(names, (std::vector<std::string>{"drmn_top1", "drmn_top2", "drmn_top3", "esm_off", "concat_tc_sc"}));
  std::string table = format_ablation_table(rows);
  for (const auto& n : names) EXPECT_NE(table.find(n), std::string::npos);
  std::string csv = format_ablation_csv(rows);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 6);
  for (const auto& r : rows) {
    EXPECT_GE(r.report.bleu, 0.0);
    EXPECT_LE(r.report.bleu, 100.0);
  }
}

}  // namespace
}  // namespace drmn
