#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include "sparselda/corpus.hpp"
#include "sparselda/types.hpp"

namespace sparselda {

// One document's topic counts: topic indices strictly increasing, counts >= 1.
struct SparseTopicRow {
    std::vector<TopicId> topics;
    std::vector<std::uint32_t> counts;

    std::size_t size() const { return topics.size(); }
    void clear() {
        topics.clear();
        counts.clear();
    }
};

struct SparseTopicRowView {
    std::span<const TopicId> topics;
    std::span<const std::uint32_t> counts;

    std::size_t size() const { return topics.size(); }
};

// CSR document-topic counts for one chunk's document range.
class DocTopicMatrix {
public:
    DocTopicMatrix() = default;

    SparseTopicRowView row(std::uint32_t local_doc) const {
        const std::size_t begin = row_offsets_[local_doc];
        const std::size_t end = row_offsets_[local_doc + 1];
        return {{topics_.data() + begin, end - begin}, {counts_.data() + begin, end - begin}};
    }

    std::uint32_t num_rows() const {
        return row_offsets_.empty() ? 0 : static_cast<std::uint32_t>(row_offsets_.size() - 1);
    }
    std::uint64_t nnz() const { return topics_.size(); }
    std::uint64_t total() const;

    void start_rows(std::uint32_t rows) {
        row_offsets_.clear();
        row_offsets_.reserve(rows + 1);
        row_offsets_.push_back(0);
        topics_.clear();
        counts_.clear();
    }
    void append_row(const SparseTopicRow& row) {
        topics_.insert(topics_.end(), row.topics.begin(), row.topics.end());
        counts_.insert(counts_.end(), row.counts.begin(), row.counts.end());
        row_offsets_.push_back(topics_.size());
    }
    void adopt(std::vector<std::uint64_t> row_offsets, std::vector<TopicId> topics,
               std::vector<std::uint32_t> counts) {
        if (row_offsets.empty() || row_offsets.back() != topics.size() ||
            topics.size() != counts.size()) {
            throw ValidationError("inconsistent CSR arrays");
        }
        row_offsets_ = std::move(row_offsets);
        topics_ = std::move(topics);
        counts_ = std::move(counts);
    }

    const std::vector<std::uint64_t>& row_offsets() const { return row_offsets_; }
    const std::vector<TopicId>& topics() const { return topics_; }
    const std::vector<std::uint32_t>& counts() const { return counts_; }

private:
    std::vector<std::uint64_t> row_offsets_;
    std::vector<TopicId> topics_;
    std::vector<std::uint32_t> counts_;
};

// Dense V x K word-topic counts, shared across workers during the E-step.
// Increments go through atomic_add so concurrent updates to the same row
// never lose counts.
class WordTopicMatrix {
public:
    WordTopicMatrix() = default;
    WordTopicMatrix(std::uint32_t num_words, std::uint32_t num_topics)
        : num_words_(num_words), num_topics_(num_topics),
          cells_(static_cast<std::size_t>(num_words) * num_topics, 0) {}

    std::uint32_t num_words() const { return num_words_; }
    std::uint32_t num_topics() const { return num_topics_; }

    std::uint32_t at(WordId v, TopicId k) const {
        return cells_[static_cast<std::size_t>(v) * num_topics_ + k];
    }
    std::uint32_t& cell(WordId v, TopicId k) {
        return cells_[static_cast<std::size_t>(v) * num_topics_ + k];
    }
    std::span<const std::uint32_t> row(WordId v) const {
        return {cells_.data() + static_cast<std::size_t>(v) * num_topics_, num_topics_};
    }
    void atomic_add(WordId v, TopicId k, std::uint32_t amount);

    std::uint64_t total() const;
    std::uint64_t row_total(WordId v) const;

    bool operator==(const WordTopicMatrix& other) const = default;

private:
    std::uint32_t num_words_ = 0;
    std::uint32_t num_topics_ = 0;
    std::vector<std::uint32_t> cells_;
};

// Column-normalized smoothed probabilities: every entry positive, every
// column sums to 1.
class WordTopicProb {
public:
    WordTopicProb() = default;
    WordTopicProb(std::uint32_t num_words, std::uint32_t num_topics, double beta)
        : num_words_(num_words), num_topics_(num_topics), beta_(beta),
          cells_(static_cast<std::size_t>(num_words) * num_topics, 0.0f) {}

    std::uint32_t num_words() const { return num_words_; }
    std::uint32_t num_topics() const { return num_topics_; }
    double beta() const { return beta_; }

    float at(WordId v, TopicId k) const {
        return cells_[static_cast<std::size_t>(v) * num_topics_ + k];
    }
    std::span<const float> row(WordId v) const {
        return {cells_.data() + static_cast<std::size_t>(v) * num_topics_, num_topics_};
    }
    std::span<float> mutable_row(WordId v) {
        return {cells_.data() + static_cast<std::size_t>(v) * num_topics_, num_topics_};
    }

private:
    std::uint32_t num_words_ = 0;
    std::uint32_t num_topics_ = 0;
    double beta_ = 0.0;
    std::vector<float> cells_;
};

// bhat[v][k] = (b[v][k] + beta) / (colsum_k + V*beta).
WordTopicProb preprocess(const WordTopicMatrix& b, double beta, unsigned workers = 1);

// Sorted (topic, count) pairs for one doc-grouped segment: sort by topic,
// locate the boundaries, scatter ids and counts.
SparseTopicRow segmented_count(std::span<const TopicId> segment);
void segmented_count(std::span<const TopicId> segment, SparseTopicRow& out,
                     std::vector<TopicId>& scratch);

// Rebuilds the chunk's CSR doc-topic counts: shuffle topics into doc-grouped
// order through the precomputed pointers, then count each document segment.
DocTopicMatrix rebuild_doc_topic(const Chunk& chunk);

void accumulate_word_topic(WordTopicMatrix& b, WordId word, const SparseTopicRow& topic_counts);
void reset_word_topic(WordTopicMatrix& b);

// "v k count" triples under a "V K T iteration" header, zeros omitted.
void dump_word_topic(std::ostream& out, const WordTopicMatrix& b, std::uint64_t num_tokens,
                     std::uint32_t iteration);
WordTopicMatrix parse_word_topic(std::istream& in, std::uint64_t& num_tokens,
                                 std::uint32_t& iteration);

}  // namespace sparselda
