#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "drmn/cli.hpp"
#include "drmn/error.hpp"
#include "drmn/experiment.hpp"
#include "drmn/gradcheck.hpp"
#include "drmn/metrics.hpp"
#include "drmn/retrieval.hpp"
#include "drmn/synth.hpp"
#include "drmn/training.hpp"

namespace py = pybind11;
using namespace drmn;

namespace {

TrainConfig config_from(const py::dict& settings) {
  TrainConfig c;
  for (const auto& [k, v] : settings) {
    std::string value = py::isinstance<py::bool_>(v) ? (v.cast<bool>() ? "true" : "false") : py::str(v).cast<std::string>();
    c.set(k.cast<std::string>(), value);
  }
  c.validate();
  return c;
}

py::dict config_to_dict(const TrainConfig& c) {
  py::dict d;
  std::istringstream in(c.serialize());
  for (std::string line; std::getline(in, line);) {
    auto eq = line.find('=');
    if (eq != std::string::npos) d[py::str(line.substr(0, eq))] = line.substr(eq + 1);
  }
  return d;
}

py::dict report_dict(const EvalReport& r) {
  py::dict d;
  d["rouge1"] = r.rouge1;
  d["rougeL"] = r.rougeL;
  d["bleu"] = r.bleu;
  d["count"] = r.count;
  d["empty_hypotheses"] = r.empty_hypotheses;
  return d;
}

Vocabulary with_roles(Vocabulary v, const Corpus& corpus) {
  if (v.roles().empty()) v.set_roles(corpus.roles());
  return v;
}

Split split_named(const std::string& name) {
  if (name == "train") return Split::kTrain;
  if (name == "dev") return Split::kDev;
  if (name == "test") return Split::kTest;
  throw UsageError("unknown split '" + name + "'");
}

}  // namespace

PYBIND11_MODULE(_drmn, m) {
  m.doc() = "Bindings for the drmn dialogue generation library";

  static py::exception<Error> base(m, "Error", PyExc_RuntimeError);
  static py::exception<UsageError> usage(m, "UsageError", base.ptr());
  static py::exception<DataError> data(m, "DataError", base.ptr());
  static py::exception<NumericError> numeric(m, "NumericError", base.ptr());
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const UsageError& e) {
      py::set_error(usage, e.what());
    } catch (const DataError& e) {
      py::set_error(data, e.what());
    } catch (const NumericError& e) {
      py::set_error(numeric, e.what());
    } catch (const Error& e) {
      py::set_error(base, e.what());
    }
  });

  m.def("tokenize", [](const std::string& s) { return tokenize(s); });

  py::class_<Corpus>(m, "Corpus")
      .def_static("synthesize",
                  [](std::size_t n, std::size_t cluster_size, std::uint64_t seed) {
                    return synthesize_corpus({n, cluster_size, seed});
                  },
                  py::arg("n") = 1000, py::arg("cluster_size") = 3, py::arg("seed") = 7)
      .def_static("parse", [](const std::string& text) { return parse_corpus(text); })
      .def_static("load", &load_corpus)
      .def("save", [](const Corpus& c, const std::string& path) { save_corpus(c, path); })
      .def("serialize", [](const Corpus& c) { return serialize_corpus(c); })
      .def("__len__", &Corpus::size)
      .def("ids",
           [](const Corpus& c) {
             std::vector<std::string> ids;
             for (const auto& conv : c.conversations()) ids.push_back(conv.id);
             return ids;
           })
      .def("roles", &Corpus::roles)
      .def("split",
           [](const Corpus& c, const std::string& name) { return c.subset(split_indices(c, split_named(name))); });

  py::class_<Vocabulary>(m, "Vocabulary")
      .def_static("build", &build_vocab, py::arg("corpus"), py::arg("min_freq") = kDefaultMinFreq,
                  py::arg("max_size") = kDefaultMaxVocab)
      .def_static("parse", [](const std::string& text) { return Vocabulary::parse(text); })
      .def_static("load", &Vocabulary::load)
      .def("save", &Vocabulary::save)
      .def("serialize", &Vocabulary::serialize)
      .def("__len__", &Vocabulary::size)
      .def("__contains__", &Vocabulary::contains)
      .def("encode", &Vocabulary::encode)
      .def("decode", &Vocabulary::decode)
      .def("roles", &Vocabulary::roles);

  py::class_<RetrievalCache>(m, "RetrievalCache")
      .def_static(
          "build",
          [](const Corpus& corpus, const std::string& target_role, std::size_t pool, std::size_t k,
             const std::string& reranker) {
            RetrievalOptions o{pool, k, parse_reranker(reranker)};
            return build_cache(corpus, make_examples(corpus, target_role), o);
          },
          py::arg("corpus"), py::arg("target_role") = "judge", py::arg("pool") = 50, py::arg("k") = 3,
          py::arg("reranker") = "tfidf-cosine")
      .def_static("parse", &RetrievalCache::parse)
      .def_static("load", &RetrievalCache::load)
      .def("save", &RetrievalCache::save)
      .def("serialize", &RetrievalCache::serialize)
      .def("__len__", &RetrievalCache::size)
      .def("neighbors", [](const RetrievalCache& c, const std::string& example_id) {
        std::vector<std::pair<std::string, double>> out;
        if (const auto* n = c.find(example_id))
          for (const auto& d : *n) out.emplace_back(d.id, d.score);
        return out;
      });

  m.def("bm25", [](const std::vector<std::string>& ids, const std::vector<std::vector<std::string>>& docs,
                   const std::vector<std::string>& query, std::size_t pool) {
    std::vector<std::pair<std::string, double>> out;
    for (const auto& d : bm25_candidates(InvertedIndex::build(ids, docs), query, pool)) out.emplace_back(d.id, d.score);
    return out;
  }, py::arg("ids"), py::arg("docs"), py::arg("query"), py::arg("pool") = 50);

  m.def("default_config", [] { return config_to_dict(TrainConfig{}); });

  m.def(
      "train",
      [](const Corpus& corpus, const Vocabulary& vocab, const RetrievalCache* cache, const py::dict& settings) {
        TrainConfig c = config_from(settings);
        Vocabulary v = with_roles(vocab, corpus);
        Dataset data = build_dataset(corpus, v, cache, c);
        std::vector<EpochLog> logs;
        std::string bytes;
        {
          py::gil_scoped_release release;
          Trainer t(c, v.size(), v.roles());
          logs = t.fit(data.train, data.dev);
          bytes = serialize_checkpoint(t.checkpoint());
        }
        py::list rows;
        for (const auto& l : logs) rows.append(py::make_tuple(l.epoch, l.train_loss, l.dev_loss));
        return py::make_tuple(py::bytes(bytes), rows);
      },
      py::arg("corpus"), py::arg("vocab"), py::arg("cache") = nullptr, py::arg("config") = py::dict(),
      "Trains a model; returns (checkpoint bytes, [(epoch, train_loss, dev_loss)]).");

  m.def(
      "generate",
      [](const py::bytes& checkpoint, const Corpus& corpus, const Vocabulary& vocab, const RetrievalCache* cache,
         const std::string& split, int beam, int max_len) {
        Checkpoint ckpt = parse_checkpoint(checkpoint.cast<std::string>());
        Model model = model_from_checkpoint(ckpt);
        Vocabulary v = with_roles(vocab, corpus);
        auto examples = make_examples(corpus.subset(split_indices(corpus, split_named(split))), ckpt.config.target_role);
        auto inputs = build_inputs(examples, corpus, v, cache, ckpt.config.mode, ckpt.config.top_k, ckpt.config.limits());
        std::vector<GenerationRecord> recs;
        {
          py::gil_scoped_release release;
          recs = generate_records(model, inputs, v, {beam, max_len});
        }
        py::list out;
        for (const auto& r : recs) {
          py::dict d;
          d["example_id"] = r.example_id;
          d["output"] = r.output;
          d["gold"] = r.gold;
          d["gate_mean"] = r.gate_mean;
          d["copied_from_similar"] = r.copied_from_similar;
          out.append(d);
        }
        return out;
      },
      py::arg("checkpoint"), py::arg("corpus"), py::arg("vocab"), py::arg("cache") = nullptr,
      py::arg("split") = "test", py::arg("beam") = 1, py::arg("max_len") = 40);

  m.def("bleu", [](const std::vector<Tokens>& h, const std::vector<Tokens>& r) { return bleu(h, r).score; });
  m.def("rouge1", [](const Tokens& h, const Tokens& r) { return 100.0 * rouge1(h, r).f1; });
  m.def("rougeL", [](const Tokens& h, const Tokens& r) { return 100.0 * rougeL(h, r).f1; });
  m.def("evaluate", [](const std::vector<Tokens>& h, const std::vector<Tokens>& r) {
    return report_dict(evaluate_pairs(h, r));
  });

  m.def(
      "grad_check",
      [](std::uint64_t seed, const std::string& keys) {
        TinyInstance inst = make_tiny_instance(seed, parse_memory_keys(keys));
        nn::Dropout off;
        auto rep = grad_check(
            inst.model.params(), [&](Graph& g) { return inst.model.loss(g, inst.input, off).loss; }, 1e-4, 1e-3);
        return rep.max_relative;
      },
      py::arg("seed") = 1, py::arg("memory_keys") = "words",
      "Maximum relative gradient error on the tiny fixed instance.");

  m.def(
      "run_cli",
      [](const std::vector<std::string>& args) {
        std::ostringstream out, err;
        int code = cli::run(args, out, err);
        return py::make_tuple(code, out.str(), err.str());
      },
      "Runs the command-line tool in-process; returns (exit code, stdout, stderr).");
}
