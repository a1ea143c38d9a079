#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "sparselda/corpus.hpp"

namespace testsupport {

// The worked 3-document example: D=3, V=5, T=8, with topic assignments in
// [0, 3) where document 0 puts both its tokens on topic 2.
sparselda::Corpus example_corpus();

// Unstructured random corpus: uniform words, Poisson-ish doc lengths.
sparselda::Corpus random_corpus(std::uint32_t num_docs, std::uint32_t vocab_size,
                                double mean_doc_len, std::uint64_t seed);

// Topic-structured corpus drawn from an LDA-style generative process: each
// latent topic is uniform over a window of the vocabulary, each document
// mixes a Dirichlet-weighted handful of topics. Training has real structure
// to recover, so held-out likelihood improves measurably.
struct GenerativeParams {
    std::uint32_t num_docs = 5000;
    std::uint32_t vocab_size = 8000;
    std::uint32_t num_latent_topics = 20;
    std::uint32_t topic_window = 400;  // == stride, so latent topics are disjoint
    double doc_dirichlet = 0.08;
    double mean_doc_len = 150.0;
    std::uint64_t seed = 1;
};
sparselda::Corpus generative_corpus(const GenerativeParams& params);

// Writes the corpus in UCI bag-of-words form (docword + vocab files).
void write_uci(const sparselda::Corpus& corpus, const std::filesystem::path& docword_path,
               const std::filesystem::path& vocab_path);

// A unique scratch directory under the system temp dir, removed on scope exit.
class TempDir {
public:
    TempDir();
    ~TempDir();
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
};

std::string read_file(const std::filesystem::path& path);

}  // namespace testsupport
