#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "sparselda/counts.hpp"
#include "sparselda/corpus.hpp"
#include "sparselda/sampler.hpp"
#include "sparselda/types.hpp"

namespace sparselda {

enum class SamplerKind { kSparse, kVanilla };

struct TrainConfig {
    std::uint32_t num_topics = 0;
    double alpha = 0.0;  // <= 0 resolves to 50 / K
    double beta = 0.01;
    std::uint32_t iterations = 100;
    std::uint32_t num_chunks = 0;  // 0 resolves from memory_budget
    unsigned num_workers = 0;      // 0 resolves to hardware concurrency
    std::uint64_t seed = 0;
    std::uint64_t memory_budget = 1ull << 30;
    std::uint32_t eval_every = 0;  // 0 disables held-out probes
    SamplerKind sampler = SamplerKind::kSparse;
    std::uint32_t tree_branch = WaryTree<float>::kDefaultBranch;
    std::string spill_dir;  // empty -> system temp dir

    // Fills defaults against a corpus and validates; throws ValidationError.
    TrainConfig resolved(const Corpus& corpus) const;
};

struct IterationStats {
    std::uint32_t iteration = 0;
    std::uint64_t tokens = 0;
    double elapsed_s = 0.0;
    double mtokens_per_s = 0.0;
    double mean_doc_topics = 0.0;  // mean nnz per doc-topic row, the K_d statistic
};

struct MetricsEntry {
    IterationStats stats;
    std::optional<double> heldout_ll;
};

// "iter elapsed_s throughput_mtoken_s heldout_ll", the last field blank when
// no evaluation ran.
std::string format_metrics_line(const MetricsEntry& entry);

using MetricsSink = std::function<void(const MetricsEntry&)>;

// Dense per-document topic counts, the layout the O(K) baseline samples
// from (a dense-matrix system never compresses its rows).
class DenseDocTopic {
public:
    DenseDocTopic() = default;

    void rebuild(const Chunk& chunk, std::uint32_t num_topics);
    std::span<const std::uint32_t> row(std::uint32_t local_doc) const {
        return {cells_.data() + static_cast<std::size_t>(local_doc) * num_topics_, num_topics_};
    }
    std::uint32_t num_rows() const { return rows_; }
    std::uint32_t num_topics() const { return num_topics_; }
    std::uint64_t nnz() const { return nnz_; }
    bool empty() const { return cells_.empty(); }

    const std::vector<std::uint32_t>& cells() const { return cells_; }
    std::vector<std::uint32_t>& raw_cells() { return cells_; }
    void set_shape(std::uint32_t rows, std::uint32_t num_topics, std::uint64_t nnz) {
        rows_ = rows;
        num_topics_ = num_topics;
        nnz_ = nnz;
    }

private:
    std::uint32_t rows_ = 0;
    std::uint32_t num_topics_ = 0;
    std::uint64_t nnz_ = 0;
    std::vector<std::uint32_t> cells_;
};

struct ChunkSlot {
    Chunk chunk;
    DocTopicMatrix doc_topic;        // CSR rows, the sparse system's state
    DenseDocTopic doc_topic_dense;   // populated only by the vanilla baseline
};

// Holds the streaming state: every slot resident, or each slot spilled to its
// own file and loaded one at a time per iteration.
class ChunkStore {
public:
    ChunkStore() = default;
    ChunkStore(const ChunkStore&) = delete;
    ChunkStore& operator=(const ChunkStore&) = delete;
    ChunkStore(ChunkStore&& other) noexcept { *this = std::move(other); }
    ChunkStore& operator=(ChunkStore&& other) noexcept;
    ~ChunkStore();

    static ChunkStore make_resident(std::vector<ChunkSlot> slots);
    static ChunkStore make_file_backed(std::vector<ChunkSlot> slots,
                                       const std::filesystem::path& dir);

    std::size_t size() const { return count_; }
    bool file_backed() const { return !spill_dir_.empty(); }

    // File-backed slots load on acquire and write back on release; resident
    // slots are returned directly.
    ChunkSlot& acquire(std::size_t index);
    void release(std::size_t index);

private:
    std::filesystem::path slot_path(std::size_t index) const;

    std::size_t count_ = 0;
    std::vector<ChunkSlot> slots_;
    std::vector<bool> loaded_;
    std::filesystem::path spill_dir_;
};

// Dynamic dispatch of (chunk, word segment) units: idle workers claim the
// next unit, so every unit runs exactly once and heavy words (first in each
// chunk's schedule) start earliest.
struct WorkUnit {
    std::uint32_t chunk;
    std::uint32_t segment;
};

class WorkQueue {
public:
    explicit WorkQueue(std::vector<WorkUnit> units) : units_(std::move(units)) {}

    std::optional<WorkUnit> claim() {
        const std::size_t i = next_.fetch_add(1, std::memory_order_relaxed);
        if (i >= units_.size()) return std::nullopt;
        return units_[i];
    }
    std::size_t size() const { return units_.size(); }

private:
    std::vector<WorkUnit> units_;
    std::atomic<std::size_t> next_{0};
};

struct ModelState {
    std::uint32_t num_docs = 0;
    std::uint32_t vocab_size = 0;
    std::uint64_t num_tokens = 0;
    std::uint32_t num_topics = 0;
    double alpha = 0.0;
    double beta = 0.0;
    std::uint64_t seed = 0;
    std::uint32_t iteration = 0;

    WordTopicMatrix word_topic;       // B
    WordTopicProb word_topic_prob;    // B-hat, frozen between M-steps
    std::vector<float> tree_mass;     // Q_v per word
    std::vector<WaryTree<float>> trees;
    ChunkStore chunks;

    // Assignments in original corpus token order.
    std::vector<TopicId> gather_assignments();
};

// Chunk construction, assignment init (when the corpus carries the invalid
// sentinel), initial counts, and preprocessing. The result is ready for
// run_iteration.
ModelState init_state(const Corpus& corpus, const TrainConfig& cfg);

// One bulk-synchronous pass: E-step samples every token from the frozen
// B-hat/trees and accumulates a fresh B; M-step rebuilds each chunk's
// doc-topic rows, re-normalizes B-hat, and rebuilds the trees.
IterationStats run_iteration(ModelState& state, const TrainConfig& cfg);

using HeldoutProbe = std::function<double(ModelState&)>;

ModelState train(const Corpus& corpus, const TrainConfig& cfg, const MetricsSink& sink = {},
                 const HeldoutProbe& heldout_probe = {});

struct Checkpoint {
    std::uint32_t num_docs = 0;
    std::uint32_t vocab_size = 0;
    std::uint64_t num_tokens = 0;
    std::uint32_t num_topics = 0;
    std::uint32_t iteration = 0;
    double alpha = 0.0;
    double beta = 0.0;
    std::uint64_t seed = 0;
    std::vector<TopicId> assignments;
    WordTopicMatrix word_topic;
};

void save_checkpoint(const std::filesystem::path& path, ModelState& state);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Rebuilds a sampling-ready model (B-hat, trees) from checkpointed counts;
// carries no chunks, which is all held-out evaluation needs.
ModelState model_from_checkpoint(const Checkpoint& ckpt, unsigned workers = 0);

}  // namespace sparselda
