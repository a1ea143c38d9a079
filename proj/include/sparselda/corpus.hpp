#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "sparselda/types.hpp"

namespace sparselda {

struct Corpus {
    std::uint32_t num_docs = 0;    // D
    std::uint32_t vocab_size = 0;  // V
    std::uint64_t num_tokens = 0;  // T
    std::vector<Token> tokens;
    std::vector<std::uint32_t> doc_lengths;
    std::vector<std::uint64_t> word_freqs;
    std::vector<std::string> vocab;
};

struct WordSegment {
    WordId word;
    std::uint32_t offset;
    std::uint32_t length;
};

// One streaming unit: the tokens of a contiguous document range, sorted by
// word id, plus the precomputed pointers that turn the word-major layout
// back into a doc-grouped one. shuffle_ptrs and doc_offsets depend only on
// (doc, word), which never change, so they are built once.
struct Chunk {
    DocId doc_begin = 0;
    DocId doc_end = 0;
    std::vector<Token> tokens;                  // word-major order
    std::vector<std::uint32_t> token_ids;       // original corpus position per slot
    std::vector<WordSegment> word_segments;     // ascending word id until scheduled
    std::vector<std::uint32_t> shuffle_ptrs;    // word-major slot -> doc-grouped slot
    std::vector<std::uint32_t> doc_offsets;     // doc-grouped starts, doc_count()+1 entries

    std::uint32_t doc_count() const { return doc_end - doc_begin; }
    std::uint32_t size() const { return static_cast<std::uint32_t>(tokens.size()); }
};

// Reads a UCI bag-of-words pair: docword header lines D, V, NNZ followed by
// NNZ "docID wordID count" triples (1-based ids), and a vocabulary file with
// exactly V lines. Ids are converted to 0-based here and nowhere else.
// Topics come out as kInvalidTopic.
Corpus load_uci(std::istream& docword, std::istream& vocab);

// Same parse without a vocabulary file (surface strings stay empty); used
// for held-out sets where only ids matter.
Corpus load_docword(std::istream& docword);

// Draws every token's topic uniformly from [0, K). Deterministic in seed and
// independent of any later chunking.
void init_assignments(Corpus& corpus, std::uint32_t num_topics, std::uint64_t seed);

// Splits documents into num_chunks contiguous ranges greedily balanced by
// token count, then word-major sorts each range and precomputes its shuffle
// pointers and doc offsets.
std::vector<Chunk> build_chunks(const Corpus& corpus, std::uint32_t num_chunks);

// Orders the chunk's distinct words by descending in-chunk token count (ties:
// ascending word id) and reorders word_segments to match, so heavy words are
// dispatched first.
std::vector<WordId> build_schedule(Chunk& chunk);

// Smallest chunk count whose largest chunk (tokens + pointer arrays + its
// doc-topic rows) fits budget_bytes. Clamped to [1, max(D, 1)].
std::uint32_t auto_num_chunks(const Corpus& corpus, std::uint32_t num_topics,
                              std::uint64_t budget_bytes);

}  // namespace sparselda
