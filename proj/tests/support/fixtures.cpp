#include "support/fixtures.hpp"

#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <fstream>
#include <map>
#include <sstream>

#include "sparselda/types.hpp"

namespace testsupport {

using sparselda::Corpus;
using sparselda::Token;

namespace {

void finalize(Corpus& corpus) {
    corpus.num_tokens = corpus.tokens.size();
    corpus.doc_lengths.assign(corpus.num_docs, 0);
    corpus.word_freqs.assign(corpus.vocab_size, 0);
    for (const Token& t : corpus.tokens) {
        corpus.doc_lengths[t.doc] += 1;
        corpus.word_freqs[t.word] += 1;
    }
    corpus.vocab.resize(corpus.vocab_size);
    for (std::uint32_t v = 0; v < corpus.vocab_size; ++v) {
        corpus.vocab[v] = "w" + std::to_string(v);
    }
}

}  // namespace

Corpus example_corpus() {
    Corpus corpus;
    corpus.num_docs = 3;
    corpus.vocab_size = 5;
    corpus.tokens = {
        {0, 0, 2}, {0, 4, 2},                  // document 0: both tokens on topic 2
        {1, 1, 0}, {1, 4, 0}, {1, 0, 1},       // document 1
        {2, 2, 1}, {2, 3, 1}, {2, 2, 0},       // document 2
    };
    finalize(corpus);
    corpus.vocab = {"apple", "orange", "iphone", "android", "screen"};
    return corpus;
}

Corpus random_corpus(std::uint32_t num_docs, std::uint32_t vocab_size, double mean_doc_len,
                     std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::poisson_distribution<std::uint32_t> len_dist(mean_doc_len);
    std::uniform_int_distribution<std::uint32_t> word_dist(0, vocab_size - 1);

    Corpus corpus;
    corpus.num_docs = num_docs;
    corpus.vocab_size = vocab_size;
    for (std::uint32_t d = 0; d < num_docs; ++d) {
        const std::uint32_t len = std::max<std::uint32_t>(1, len_dist(rng));
        for (std::uint32_t i = 0; i < len; ++i) {
            corpus.tokens.push_back(Token{d, word_dist(rng), sparselda::kInvalidTopic});
        }
    }
    finalize(corpus);
    return corpus;
}

Corpus generative_corpus(const GenerativeParams& params) {
    std::mt19937_64 rng(params.seed);
    std::poisson_distribution<std::uint32_t> len_dist(params.mean_doc_len);
    std::gamma_distribution<double> gamma(params.doc_dirichlet, 1.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    const std::uint32_t stride = params.vocab_size / params.num_latent_topics;

    Corpus corpus;
    corpus.num_docs = params.num_docs;
    corpus.vocab_size = params.vocab_size;
    std::vector<double> theta(params.num_latent_topics);
    for (std::uint32_t d = 0; d < params.num_docs; ++d) {
        double theta_total = 0.0;
        for (double& w : theta) {
            w = gamma(rng);
            theta_total += w;
        }
        const std::uint32_t len = std::max<std::uint32_t>(2, len_dist(rng));
        for (std::uint32_t i = 0; i < len; ++i) {
            double pick = unit(rng) * theta_total;
            std::uint32_t topic = 0;
            for (; topic + 1 < theta.size(); ++topic) {
                pick -= theta[topic];
                if (pick <= 0.0) break;
            }
            const std::uint32_t offset =
                static_cast<std::uint32_t>(unit(rng) * params.topic_window) % params.topic_window;
            const std::uint32_t word =
                (static_cast<std::uint64_t>(topic) * stride + offset) % params.vocab_size;
            corpus.tokens.push_back(Token{d, word, sparselda::kInvalidTopic});
        }
    }
    finalize(corpus);
    return corpus;
}

void write_uci(const Corpus& corpus, const std::filesystem::path& docword_path,
               const std::filesystem::path& vocab_path) {
    std::map<std::pair<std::uint32_t, std::uint32_t>, std::uint32_t> cells;
    for (const Token& t : corpus.tokens) cells[{t.doc, t.word}] += 1;

    std::ofstream docword(docword_path, std::ios::trunc);
    docword << corpus.num_docs << '\n' << corpus.vocab_size << '\n' << cells.size() << '\n';
    for (const auto& [cell, count] : cells) {
        docword << cell.first + 1 << ' ' << cell.second + 1 << ' ' << count << '\n';
    }

    std::ofstream vocab(vocab_path, std::ios::trunc);
    for (const std::string& term : corpus.vocab) vocab << term << '\n';
}

TempDir::TempDir() {
    static std::atomic<std::uint64_t> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("sparselda-test-" + std::to_string(::getpid()) + "-" +
             std::to_string(counter.fetch_add(1)));
    std::filesystem::create_directories(path_);
}

TempDir::~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream out;
    out << in.rdbuf();
    return out.str();
}

}  // namespace testsupport
