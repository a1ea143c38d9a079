#include "sparselda/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <sstream>

#include "sparselda/rng.hpp"

namespace sparselda {
namespace {

[[noreturn]] void parse_fail(std::uint64_t line, const std::string& what) {
    throw ValidationError("docword line " + std::to_string(line) + ": " + what);
}

std::uint64_t read_header_line(std::istream& in, std::uint64_t line, const char* name) {
    std::string text;
    if (!std::getline(in, text)) parse_fail(line, std::string("missing ") + name + " header line");
    std::istringstream fields(text);
    long long value = -1;
    if (!(fields >> value) || value < 0) parse_fail(line, std::string("malformed ") + name + " header");
    std::string trailing;
    if (fields >> trailing) parse_fail(line, std::string("trailing data after ") + name + " header");
    return static_cast<std::uint64_t>(value);
}

}  // namespace

Corpus load_docword(std::istream& docword) {
    Corpus corpus;
    std::uint64_t line = 1;
    const std::uint64_t D = read_header_line(docword, line++, "D");
    const std::uint64_t V = read_header_line(docword, line++, "V");
    const std::uint64_t nnz = read_header_line(docword, line++, "NNZ");
    if (D > 0xFFFFFFFFull || V > 0xFFFFFFFFull) parse_fail(1, "dimension exceeds 32-bit id space");

    corpus.num_docs = static_cast<std::uint32_t>(D);
    corpus.vocab_size = static_cast<std::uint32_t>(V);
    corpus.doc_lengths.assign(corpus.num_docs, 0);
    corpus.word_freqs.assign(corpus.vocab_size, 0);

    for (std::uint64_t i = 0; i < nnz; ++i, ++line) {
        std::string text;
        if (!std::getline(docword, text)) parse_fail(line, "unexpected end of file, expected entry");
        std::istringstream fields(text);
        long long doc = 0, word = 0, count = 0;
        if (!(fields >> doc >> word >> count)) parse_fail(line, "malformed entry, expected \"docID wordID count\"");
        std::string trailing;
        if (fields >> trailing) parse_fail(line, "trailing data after entry");
        if (doc < 1 || static_cast<std::uint64_t>(doc) > D) parse_fail(line, "docID out of range [1, D]");
        if (word < 1 || static_cast<std::uint64_t>(word) > V) parse_fail(line, "wordID out of range [1, V]");
        if (count < 1) parse_fail(line, "count must be >= 1");
        const DocId d = static_cast<DocId>(doc - 1);
        const WordId v = static_cast<WordId>(word - 1);
        for (long long c = 0; c < count; ++c) {
            corpus.tokens.push_back(Token{d, v, kInvalidTopic});
        }
        corpus.doc_lengths[d] += static_cast<std::uint32_t>(count);
        corpus.word_freqs[v] += static_cast<std::uint64_t>(count);
    }
    corpus.num_tokens = corpus.tokens.size();
    return corpus;
}

Corpus load_uci(std::istream& docword, std::istream& vocab) {
    Corpus corpus = load_docword(docword);
    corpus.vocab.reserve(corpus.vocab_size);
    std::string term;
    std::uint64_t line = 0;
    while (std::getline(vocab, term)) {
        ++line;
        if (!term.empty() && term.back() == '\r') term.pop_back();
        if (line > corpus.vocab_size) {
            throw ValidationError("vocab line " + std::to_string(line) +
                                  ": more than V=" + std::to_string(corpus.vocab_size) + " entries");
        }
        corpus.vocab.push_back(term);
    }
    if (line != corpus.vocab_size) {
        throw ValidationError("vocab line " + std::to_string(line) + ": expected V=" +
                              std::to_string(corpus.vocab_size) + " entries, got " + std::to_string(line));
    }
    return corpus;
}

void init_assignments(Corpus& corpus, std::uint32_t num_topics, std::uint64_t seed) {
    if (num_topics == 0) throw ValidationError("number of topics must be >= 1");
    for (std::uint64_t t = 0; t < corpus.tokens.size(); ++t) {
        RngStream rng(seed, kInitAssignStream, t);
        const double u = rng.next_double();
        auto topic = static_cast<TopicId>(u * num_topics);
        if (topic >= num_topics) topic = num_topics - 1;
        corpus.tokens[t].topic = topic;
    }
}

namespace {

// Contiguous ranges balanced greedily toward T/num_chunks tokens each: a
// chunk grows until its load strictly exceeds the per-chunk share of the
// remaining tokens, always leaving one document for every later chunk.
std::vector<DocId> chunk_boundaries(const Corpus& corpus, std::uint32_t num_chunks) {
    std::vector<DocId> bounds;
    bounds.push_back(0);
    std::uint64_t remaining = corpus.num_tokens;
    DocId doc = 0;
    for (std::uint32_t c = 0; c < num_chunks; ++c) {
        const std::uint64_t chunks_left = num_chunks - c;
        const std::uint64_t share_basis = remaining;
        std::uint64_t taken = 0;
        do {
            taken += corpus.doc_lengths[doc];
            ++doc;
        } while (corpus.num_docs - doc > chunks_left - 1 && taken * chunks_left <= share_basis);
        remaining -= taken;
        bounds.push_back(doc);
    }
    bounds.back() = corpus.num_docs;
    return bounds;
}

}  // namespace

std::vector<Chunk> build_chunks(const Corpus& corpus, std::uint32_t num_chunks) {
    if (corpus.num_docs == 0) {
        if (num_chunks != 1) throw ValidationError("empty corpus admits exactly one chunk");
        return {Chunk{}};
    }
    if (num_chunks < 1 || num_chunks > corpus.num_docs) {
        throw ValidationError("num_chunks must be in [1, D=" + std::to_string(corpus.num_docs) + "]");
    }

    const std::vector<DocId> bounds = chunk_boundaries(corpus, num_chunks);
    std::vector<Chunk> chunks(num_chunks);
    for (std::uint32_t c = 0; c < num_chunks; ++c) {
        Chunk& chunk = chunks[c];
        chunk.doc_begin = bounds[c];
        chunk.doc_end = bounds[c + 1];
    }

    // Gather each chunk's tokens in original corpus order, remembering the
    // global position (which also keys the per-token RNG streams).
    std::vector<std::uint32_t> chunk_of_doc(corpus.num_docs);
    for (std::uint32_t c = 0; c < num_chunks; ++c) {
        for (DocId d = bounds[c]; d < bounds[c + 1]; ++d) chunk_of_doc[d] = c;
    }
    for (std::uint64_t t = 0; t < corpus.tokens.size(); ++t) {
        Chunk& chunk = chunks[chunk_of_doc[corpus.tokens[t].doc]];
        chunk.tokens.push_back(corpus.tokens[t]);
        chunk.token_ids.push_back(static_cast<std::uint32_t>(t));
    }

    for (Chunk& chunk : chunks) {
        const std::uint32_t n = chunk.size();

        // Word-major sort, ties broken by (doc, original position). Sorting
        // slot indices keeps tokens and token_ids in lockstep.
        std::vector<std::uint32_t> order(n);
        for (std::uint32_t i = 0; i < n; ++i) order[i] = i;
        std::sort(order.begin(), order.end(), [&chunk](std::uint32_t a, std::uint32_t b) {
            const Token& ta = chunk.tokens[a];
            const Token& tb = chunk.tokens[b];
            if (ta.word != tb.word) return ta.word < tb.word;
            if (ta.doc != tb.doc) return ta.doc < tb.doc;
            return chunk.token_ids[a] < chunk.token_ids[b];
        });
        std::vector<Token> sorted_tokens(n);
        std::vector<std::uint32_t> sorted_ids(n);
        for (std::uint32_t i = 0; i < n; ++i) {
            sorted_tokens[i] = chunk.tokens[order[i]];
            sorted_ids[i] = chunk.token_ids[order[i]];
        }
        chunk.tokens = std::move(sorted_tokens);
        chunk.token_ids = std::move(sorted_ids);

        // Segment boundaries per distinct word, ascending.
        chunk.word_segments.clear();
        for (std::uint32_t i = 0; i < n;) {
            std::uint32_t j = i;
            while (j < n && chunk.tokens[j].word == chunk.tokens[i].word) ++j;
            chunk.word_segments.push_back(WordSegment{chunk.tokens[i].word, i, j - i});
            i = j;
        }

        // Doc-grouped offsets and the word-major -> doc-grouped permutation.
        const std::uint32_t docs = chunk.doc_count();
        chunk.doc_offsets.assign(docs + 1, 0);
        for (const Token& t : chunk.tokens) chunk.doc_offsets[t.doc - chunk.doc_begin + 1]++;
        for (std::uint32_t d = 0; d < docs; ++d) chunk.doc_offsets[d + 1] += chunk.doc_offsets[d];
        std::vector<std::uint32_t> cursor(chunk.doc_offsets.begin(), chunk.doc_offsets.end() - 1);
        chunk.shuffle_ptrs.assign(n, 0);
        for (std::uint32_t i = 0; i < n; ++i) {
            chunk.shuffle_ptrs[i] = cursor[chunk.tokens[i].doc - chunk.doc_begin]++;
        }
    }
    return chunks;
}

std::vector<WordId> build_schedule(Chunk& chunk) {
    std::stable_sort(chunk.word_segments.begin(), chunk.word_segments.end(),
                     [](const WordSegment& a, const WordSegment& b) {
                         if (a.length != b.length) return a.length > b.length;
                         return a.word < b.word;
                     });
    std::vector<WordId> schedule;
    schedule.reserve(chunk.word_segments.size());
    for (const WordSegment& s : chunk.word_segments) schedule.push_back(s.word);
    return schedule;
}

namespace {

std::uint64_t chunk_cost_bytes(const Corpus& corpus, DocId begin, DocId end,
                               std::uint32_t num_topics) {
    std::uint64_t tokens = 0;
    std::uint64_t row_entries = 0;
    for (DocId d = begin; d < end; ++d) {
        tokens += corpus.doc_lengths[d];
        row_entries += std::min<std::uint64_t>(corpus.doc_lengths[d], num_topics);
    }
    // tokens + token_ids + shuffle_ptrs, then CSR rows (topic + count).
    return tokens * (sizeof(Token) + 2 * sizeof(std::uint32_t)) + row_entries * 8;
}

std::uint64_t max_chunk_cost(const Corpus& corpus, std::uint32_t num_chunks,
                             std::uint32_t num_topics) {
    const std::vector<DocId> bounds = chunk_boundaries(corpus, num_chunks);
    std::uint64_t worst = 0;
    for (std::uint32_t c = 0; c < num_chunks; ++c) {
        worst = std::max(worst, chunk_cost_bytes(corpus, bounds[c], bounds[c + 1], num_topics));
    }
    return worst;
}

}  // namespace

std::uint32_t auto_num_chunks(const Corpus& corpus, std::uint32_t num_topics,
                              std::uint64_t budget_bytes) {
    if (corpus.num_docs <= 1) return 1;
    std::uint32_t lo = 1, hi = corpus.num_docs;
    if (max_chunk_cost(corpus, lo, num_topics) <= budget_bytes) return lo;
    // Largest chunk shrinks as the count grows; binary search the threshold.
    while (lo < hi) {
        const std::uint32_t mid = lo + (hi - lo) / 2;
        if (max_chunk_cost(corpus, mid, num_topics) <= budget_bytes) {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    return lo;
}

}  // namespace sparselda
