#include "drmn/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "drmn/error.hpp"

namespace drmn {

double relative_error(double analytic, double numeric) {
  double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
  return std::abs(analytic - numeric) / denom;
}

GradCheckReport grad_check(ad::ParamSet& params, const std::function<Var(Graph&)>& loss, double step,
                           double tolerance) {
  auto eval = [&]() {
    Graph g(&params, false);
    return loss(g).scalar();
  };
  ad::Gradients analytic(params);
  double base;
  {
    Graph g(&params);
    Var l = loss(g);
    base = l.scalar();
    g.backward(l, analytic);
  }
  if (eval() != base) throw NumericError("gradient check: forward pass is not deterministic");

  GradCheckReport report;
  report.tolerance = tolerance;
  for (std::size_t p = 0; p < params.size(); ++p) {
    ParamCheck pc;
    pc.name = params[p].name;
    auto& value = params[p].value;
    for (Eigen::Index k = 0; k < value.size(); ++k) {
      double saved = value.data()[k];
      value.data()[k] = saved + step;
      double up = eval();
      value.data()[k] = saved - step;
      double down = eval();
      value.data()[k] = saved;
      double numeric = (up - down) / (2.0 * step);
      double a = analytic[p].data()[k];
      double rel = relative_error(a, numeric);
      if (k == 0 || rel > pc.worst_relative) {
        pc.worst_relative = rel;
        pc.worst_index = static_cast<std::size_t>(k);
        pc.analytic = a;
        pc.numeric = numeric;
      }
      ++report.checked;
    }
    report.max_relative = std::max(report.max_relative, pc.worst_relative);
    report.params.push_back(pc);
  }
  return report;
}

TinyInstance make_tiny_instance(std::uint64_t seed, MemoryKeys keys) {
  TinyInstance t;
  for (int i = 0; t.vocab.size() < 50; ++i) t.vocab.append("w" + std::to_string(i), 50 - i);
  t.vocab.set_roles({"a", "b"});

  ModelConfig c;
  c.vocab_size = t.vocab.size();
  c.role_count = 2;
  c.word_dim = 16;
  c.role_dim = 8;
  c.hidden = 12;
  c.layers = 2;
  c.keep_prob = 1.0;
  c.memory_keys = keys;
  t.model = Model(c, seed);

  SplitMix64 rng(seed ^ 0xC0FFEEULL);
  auto turn = [&](int role, int len, const char* oov) {
    EncodedTurn e;
    e.role = role;
    for (int i = 0; i < len; ++i) {
      int id = Vocabulary::kReserved + static_cast<int>(rng.below(46));
      e.ids.push_back(id);
      e.tokens.push_back(t.vocab.token(id));
    }
    if (oov) {
      e.ids.push_back(Vocabulary::kUnk);
      e.tokens.emplace_back(oov);
    }
    return e;
  };
  t.input.id = "tiny";
  t.input.context = {turn(0, 4, nullptr), turn(1, 3, nullptr)};
  t.input.similar = {{"sim", {turn(0, 3, nullptr), turn(1, 3, "zz")}}};
  EncodedTurn gold = turn(1, 3, "zz");
  t.input.gold_ids.push_back(Vocabulary::kBos);
  for (int id : gold.ids) t.input.gold_ids.push_back(id);
  t.input.gold_ids.push_back(Vocabulary::kEos);
  t.input.gold_tokens = gold.tokens;
  return t;
}

}  // namespace drmn
