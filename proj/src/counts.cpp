#include "sparselda/counts.hpp"

#include <algorithm>
#include <atomic>
#include <istream>
#include <ostream>
#include <sstream>

#include "sparselda/parallel.hpp"

namespace sparselda {

std::uint64_t DocTopicMatrix::total() const {
    std::uint64_t sum = 0;
    for (const std::uint32_t c : counts_) sum += c;
    return sum;
}

void WordTopicMatrix::atomic_add(WordId v, TopicId k, std::uint32_t amount) {
    if (v >= num_words_) throw ValidationError("word id out of range");
    std::atomic_ref<std::uint32_t> cell(cells_[static_cast<std::size_t>(v) * num_topics_ + k]);
    cell.fetch_add(amount, std::memory_order_relaxed);
}

std::uint64_t WordTopicMatrix::total() const {
    std::uint64_t sum = 0;
    for (const std::uint32_t c : cells_) sum += c;
    return sum;
}

std::uint64_t WordTopicMatrix::row_total(WordId v) const {
    std::uint64_t sum = 0;
    for (const std::uint32_t c : row(v)) sum += c;
    return sum;
}

WordTopicProb preprocess(const WordTopicMatrix& b, double beta, unsigned workers) {
    if (beta <= 0.0) throw ValidationError("beta must be > 0");
    const std::uint32_t V = b.num_words();
    const std::uint32_t K = b.num_topics();
    if (V == 0) throw ValidationError("preprocess requires V >= 1");

    // Integer column sums first; their order never affects the result.
    std::vector<std::uint64_t> colsum(K, 0);
    for (WordId v = 0; v < V; ++v) {
        const auto row = b.row(v);
        for (TopicId k = 0; k < K; ++k) colsum[k] += row[k];
    }
    std::vector<double> denom(K);
    for (TopicId k = 0; k < K; ++k) denom[k] = static_cast<double>(colsum[k]) + V * beta;

    WordTopicProb bhat(V, K, beta);
    parallel_for(V, workers, [&](std::uint64_t begin, std::uint64_t end) {
        for (std::uint64_t v = begin; v < end; ++v) {
            const auto counts = b.row(static_cast<WordId>(v));
            auto out = bhat.mutable_row(static_cast<WordId>(v));
            for (TopicId k = 0; k < K; ++k) {
                out[k] = static_cast<float>((counts[k] + beta) / denom[k]);
            }
        }
    });
    return bhat;
}

void segmented_count(std::span<const TopicId> segment, SparseTopicRow& out,
                     std::vector<TopicId>& scratch) {
    out.clear();
    if (segment.empty()) return;
    scratch.assign(segment.begin(), segment.end());
    if (scratch.size() < 32) {
        // Insertion sort for the short segments that dominate in practice.
        for (std::size_t i = 1; i < scratch.size(); ++i) {
            const TopicId key = scratch[i];
            std::size_t j = i;
            while (j > 0 && scratch[j - 1] > key) {
                scratch[j] = scratch[j - 1];
                --j;
            }
            scratch[j] = key;
        }
    } else {
        std::sort(scratch.begin(), scratch.end());
    }
    // Boundaries of the sorted run give each distinct topic its order number;
    // scatter the topic ids and accumulate run lengths.
    for (std::size_t i = 0; i < scratch.size(); ++i) {
        if (i == 0 || scratch[i] != scratch[i - 1]) {
            out.topics.push_back(scratch[i]);
            out.counts.push_back(1);
        } else {
            ++out.counts.back();
        }
    }
}

SparseTopicRow segmented_count(std::span<const TopicId> segment) {
    SparseTopicRow out;
    std::vector<TopicId> scratch;
    segmented_count(segment, out, scratch);
    return out;
}

DocTopicMatrix rebuild_doc_topic(const Chunk& chunk) {
    const std::uint32_t n = chunk.size();
    std::vector<TopicId> doc_grouped(n);
    for (std::uint32_t i = 0; i < n; ++i) {
        const TopicId topic = chunk.tokens[i].topic;
        if (topic == kInvalidTopic) {
            throw ValidationError("uninitialized topic assignment in chunk");
        }
        doc_grouped[chunk.shuffle_ptrs[i]] = topic;
    }

    DocTopicMatrix a;
    a.start_rows(chunk.doc_count());
    SparseTopicRow row;
    std::vector<TopicId> scratch;
    for (std::uint32_t d = 0; d < chunk.doc_count(); ++d) {
        const std::uint32_t begin = chunk.doc_offsets[d];
        const std::uint32_t end = chunk.doc_offsets[d + 1];
        segmented_count({doc_grouped.data() + begin, end - begin}, row, scratch);
        a.append_row(row);
    }
    return a;
}

void accumulate_word_topic(WordTopicMatrix& b, WordId word, const SparseTopicRow& topic_counts) {
    if (word >= b.num_words()) throw ValidationError("word id out of range");
    for (std::size_t i = 0; i < topic_counts.size(); ++i) {
        b.atomic_add(word, topic_counts.topics[i], topic_counts.counts[i]);
    }
}

void reset_word_topic(WordTopicMatrix& b) {
    for (WordId v = 0; v < b.num_words(); ++v) {
        for (TopicId k = 0; k < b.num_topics(); ++k) b.cell(v, k) = 0;
    }
}

void dump_word_topic(std::ostream& out, const WordTopicMatrix& b, std::uint64_t num_tokens,
                     std::uint32_t iteration) {
    out << b.num_words() << ' ' << b.num_topics() << ' ' << num_tokens << ' ' << iteration << '\n';
    for (WordId v = 0; v < b.num_words(); ++v) {
        const auto row = b.row(v);
        for (TopicId k = 0; k < b.num_topics(); ++k) {
            if (row[k] != 0) out << v << ' ' << k << ' ' << row[k] << '\n';
        }
    }
}

WordTopicMatrix parse_word_topic(std::istream& in, std::uint64_t& num_tokens,
                                 std::uint32_t& iteration) {
    std::string text;
    if (!std::getline(in, text)) throw ValidationError("word-topic dump: missing header");
    std::istringstream header(text);
    std::uint32_t V = 0, K = 0;
    if (!(header >> V >> K >> num_tokens >> iteration)) {
        throw ValidationError("word-topic dump: malformed header");
    }
    WordTopicMatrix b(V, K);
    std::uint64_t stored = 0;
    while (std::getline(in, text)) {
        if (text.empty()) continue;
        std::istringstream fields(text);
        std::uint64_t v = 0, k = 0, count = 0;
        if (!(fields >> v >> k >> count) || v >= V || k >= K) {
            throw ValidationError("word-topic dump: malformed entry \"" + text + "\"");
        }
        b.cell(static_cast<WordId>(v), static_cast<TopicId>(k)) = static_cast<std::uint32_t>(count);
        stored += count;
    }
    if (stored != num_tokens) {
        throw ValidationError("word-topic dump: stored counts do not sum to T");
    }
    return b;
}

}  // namespace sparselda
