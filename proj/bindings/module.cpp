#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <fstream>
#include <sstream>

#include "sparselda/corpus.hpp"
#include "sparselda/eval.hpp"
#include "sparselda/sampler.hpp"
#include "sparselda/trainer.hpp"
#include "sparselda/types.hpp"

namespace py = pybind11;
using namespace sparselda;

namespace {

Corpus corpus_from_text(const std::string& docword, const std::string& vocab) {
    std::istringstream docword_stream(docword);
    std::istringstream vocab_stream(vocab);
    return load_uci(docword_stream, vocab_stream);
}

Corpus corpus_from_files(const std::string& docword_path, const std::string& vocab_path) {
    std::ifstream docword(docword_path);
    if (!docword) throw IoError("cannot open docword file " + docword_path);
    std::ifstream vocab(vocab_path);
    if (!vocab) throw IoError("cannot open vocab file " + vocab_path);
    return load_uci(docword, vocab);
}

py::array_t<std::uint32_t> word_topic_array(const ModelState& state) {
    const std::uint32_t V = state.word_topic.num_words();
    const std::uint32_t K = state.word_topic.num_topics();
    py::array_t<std::uint32_t> out({V, K});
    auto view = out.mutable_unchecked<2>();
    for (std::uint32_t v = 0; v < V; ++v) {
        const auto row = state.word_topic.row(v);
        for (std::uint32_t k = 0; k < K; ++k) view(v, k) = row[k];
    }
    return out;
}

py::array_t<float> word_topic_prob_array(const ModelState& state) {
    const std::uint32_t V = state.word_topic_prob.num_words();
    const std::uint32_t K = state.word_topic_prob.num_topics();
    py::array_t<float> out({V, K});
    auto view = out.mutable_unchecked<2>();
    for (std::uint32_t v = 0; v < V; ++v) {
        const auto row = state.word_topic_prob.row(v);
        for (std::uint32_t k = 0; k < K; ++k) view(v, k) = row[k];
    }
    return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Sparsity-aware LDA trainer";
    m.attr("__version__") = kVersion;

    py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);
    py::register_exception<IoError>(m, "IoError", PyExc_IOError);

    py::class_<Corpus>(m, "Corpus")
        .def_static("from_text", &corpus_from_text, py::arg("docword"), py::arg("vocab"))
        .def_static("from_files", &corpus_from_files, py::arg("docword_path"),
                    py::arg("vocab_path"))
        .def_readonly("num_docs", &Corpus::num_docs)
        .def_readonly("vocab_size", &Corpus::vocab_size)
        .def_readonly("num_tokens", &Corpus::num_tokens)
        .def_readonly("vocab", &Corpus::vocab)
        .def("init_assignments", &init_assignments, py::arg("num_topics"), py::arg("seed"))
        .def("__repr__", [](const Corpus& c) {
            return "Corpus(D=" + std::to_string(c.num_docs) + ", V=" + std::to_string(c.vocab_size) +
                   ", T=" + std::to_string(c.num_tokens) + ")";
        });

    py::enum_<SamplerKind>(m, "SamplerKind")
        .value("SPARSE", SamplerKind::kSparse)
        .value("VANILLA", SamplerKind::kVanilla);

    py::class_<TrainConfig>(m, "TrainConfig")
        .def(py::init<>())
        .def_readwrite("num_topics", &TrainConfig::num_topics)
        .def_readwrite("alpha", &TrainConfig::alpha)
        .def_readwrite("beta", &TrainConfig::beta)
        .def_readwrite("iterations", &TrainConfig::iterations)
        .def_readwrite("num_chunks", &TrainConfig::num_chunks)
        .def_readwrite("num_workers", &TrainConfig::num_workers)
        .def_readwrite("seed", &TrainConfig::seed)
        .def_readwrite("memory_budget", &TrainConfig::memory_budget)
        .def_readwrite("eval_every", &TrainConfig::eval_every)
        .def_readwrite("sampler", &TrainConfig::sampler);

    py::class_<IterationStats>(m, "IterationStats")
        .def_readonly("iteration", &IterationStats::iteration)
        .def_readonly("tokens", &IterationStats::tokens)
        .def_readonly("elapsed_s", &IterationStats::elapsed_s)
        .def_readonly("mtokens_per_s", &IterationStats::mtokens_per_s)
        .def_readonly("mean_doc_topics", &IterationStats::mean_doc_topics);

    py::class_<ModelState>(m, "Model")
        .def_readonly("num_docs", &ModelState::num_docs)
        .def_readonly("vocab_size", &ModelState::vocab_size)
        .def_readonly("num_tokens", &ModelState::num_tokens)
        .def_readonly("num_topics", &ModelState::num_topics)
        .def_readonly("alpha", &ModelState::alpha)
        .def_readonly("beta", &ModelState::beta)
        .def_readonly("iteration", &ModelState::iteration)
        .def("word_topic", &word_topic_array)
        .def("word_topic_prob", &word_topic_prob_array)
        .def("assignments",
             [](ModelState& state) {
                 const auto assignments = state.gather_assignments();
                 py::array_t<std::uint32_t> out(assignments.size());
                 std::copy(assignments.begin(), assignments.end(), out.mutable_data());
                 return out;
             })
        .def("run_iteration", &run_iteration, py::arg("config"),
             py::call_guard<py::gil_scoped_release>())
        .def("save", [](ModelState& state, const std::string& path) { save_checkpoint(path, state); })
        .def_static("load", [](const std::string& path, unsigned workers) {
            return model_from_checkpoint(load_checkpoint(path), workers);
        }, py::arg("path"), py::arg("workers") = 0);

    m.def(
        "train",
        [](const Corpus& corpus, const TrainConfig& cfg) { return train(corpus, cfg); },
        py::arg("corpus"), py::arg("config"), py::call_guard<py::gil_scoped_release>());

    m.def(
        "heldout_ll",
        [](ModelState& model, const Corpus& heldout_corpus, std::uint32_t burn_in,
           unsigned workers, std::uint64_t seed) {
            const HeldoutSet set = HeldoutSet::from_corpus(heldout_corpus);
            const EvalReport report = heldout_ll(model, set, burn_in, workers, seed);
            return py::make_tuple(report.per_token_ll, report.tokens_evaluated);
        },
        py::arg("model"), py::arg("heldout"), py::arg("burn_in") = 20, py::arg("workers") = 1,
        py::arg("seed") = 0);

    m.def(
        "top_words",
        [](const ModelState& model, std::uint32_t n) { return top_words(model.word_topic_prob, n); },
        py::arg("model"), py::arg("n"));

    m.def("segmented_count", [](const std::vector<TopicId>& segment) {
        const SparseTopicRow row = segmented_count(segment);
        std::vector<std::pair<TopicId, std::uint32_t>> pairs;
        pairs.reserve(row.size());
        for (std::size_t i = 0; i < row.size(); ++i) pairs.emplace_back(row.topics[i], row.counts[i]);
        return pairs;
    });

    m.def(
        "prefix_search",
        [](const std::vector<double>& prefix, double x) {
            return prefix_search<double>(prefix, x);
        },
        py::arg("prefix"), py::arg("x"));

    py::class_<WaryTree<double>>(m, "WaryTree")
        .def(py::init([](const std::vector<double>& weights, std::uint32_t branch) {
                 return WaryTree<double>(weights, branch);
             }),
             py::arg("weights"), py::arg("branch") = WaryTree<double>::kDefaultBranch)
        .def_property_readonly("total", &WaryTree<double>::total)
        .def_property_readonly("size", &WaryTree<double>::size)
        .def("sample", &WaryTree<double>::sample, py::arg("x"));
}
