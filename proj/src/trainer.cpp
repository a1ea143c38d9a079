#include "sparselda/trainer.hpp"

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <memory>
#include <sstream>
#include <thread>

#include "sparselda/parallel.hpp"

namespace sparselda {

TrainConfig TrainConfig::resolved(const Corpus& corpus) const {
    TrainConfig out = *this;
    if (out.num_topics == 0) throw ValidationError("number of topics must be >= 1");
    if (out.alpha <= 0.0) out.alpha = 50.0 / out.num_topics;
    if (out.beta <= 0.0) throw ValidationError("beta must be > 0");
    if (out.tree_branch < 2) throw ValidationError("tree branch must be >= 2");
    const std::uint64_t capacity = static_cast<std::uint64_t>(out.tree_branch) * out.tree_branch *
                                   out.tree_branch;
    if (out.num_topics > capacity) {
        throw ValidationError("K=" + std::to_string(out.num_topics) + " exceeds tree capacity W^3=" +
                              std::to_string(capacity));
    }
    if (out.num_chunks == 0) {
        out.num_chunks = auto_num_chunks(corpus, out.num_topics, out.memory_budget);
    }
    if (corpus.num_docs > 0 && out.num_chunks > corpus.num_docs) {
        throw ValidationError("num_chunks exceeds document count");
    }
    out.num_workers = resolve_workers(out.num_workers);
    return out;
}

std::string format_metrics_line(const MetricsEntry& entry) {
    char buf[160];
    if (entry.heldout_ll.has_value()) {
        std::snprintf(buf, sizeof(buf), "%u %.6f %.6f %.6f", entry.stats.iteration,
                      entry.stats.elapsed_s, entry.stats.mtokens_per_s, *entry.heldout_ll);
    } else {
        std::snprintf(buf, sizeof(buf), "%u %.6f %.6f", entry.stats.iteration,
                      entry.stats.elapsed_s, entry.stats.mtokens_per_s);
    }
    return buf;
}

void DenseDocTopic::rebuild(const Chunk& chunk, std::uint32_t num_topics) {
    rows_ = chunk.doc_count();
    num_topics_ = num_topics;
    nnz_ = 0;
    cells_.assign(static_cast<std::size_t>(rows_) * num_topics, 0);
    for (const Token& t : chunk.tokens) {
        if (t.topic == kInvalidTopic) {
            throw ValidationError("uninitialized topic assignment in chunk");
        }
        std::uint32_t& cell =
            cells_[static_cast<std::size_t>(t.doc - chunk.doc_begin) * num_topics + t.topic];
        if (cell == 0) ++nnz_;
        ++cell;
    }
}

// ---------------------------------------------------------------------------
// ChunkStore

namespace {

template <class T>
void write_vec(std::ofstream& out, const std::vector<T>& v) {
    const std::uint64_t n = v.size();
    out.write(reinterpret_cast<const char*>(&n), sizeof(n));
    out.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(n * sizeof(T)));
}

template <class T>
void read_vec(std::ifstream& in, std::vector<T>& v) {
    std::uint64_t n = 0;
    in.read(reinterpret_cast<char*>(&n), sizeof(n));
    v.resize(n);
    in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(T)));
}

void write_slot(const std::filesystem::path& path, const ChunkSlot& slot) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write spill file " + path.string());
    out.write(reinterpret_cast<const char*>(&slot.chunk.doc_begin), sizeof(DocId));
    out.write(reinterpret_cast<const char*>(&slot.chunk.doc_end), sizeof(DocId));
    write_vec(out, slot.chunk.tokens);
    write_vec(out, slot.chunk.token_ids);
    write_vec(out, slot.chunk.word_segments);
    write_vec(out, slot.chunk.shuffle_ptrs);
    write_vec(out, slot.chunk.doc_offsets);
    write_vec(out, slot.doc_topic.row_offsets());
    write_vec(out, slot.doc_topic.topics());
    write_vec(out, slot.doc_topic.counts());
    const std::uint64_t dense_shape[3] = {slot.doc_topic_dense.num_rows(),
                                          slot.doc_topic_dense.num_topics(),
                                          slot.doc_topic_dense.nnz()};
    out.write(reinterpret_cast<const char*>(dense_shape), sizeof(dense_shape));
    write_vec(out, slot.doc_topic_dense.cells());
    if (!out) throw IoError("short write to spill file " + path.string());
}

ChunkSlot read_slot(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read spill file " + path.string());
    ChunkSlot slot;
    in.read(reinterpret_cast<char*>(&slot.chunk.doc_begin), sizeof(DocId));
    in.read(reinterpret_cast<char*>(&slot.chunk.doc_end), sizeof(DocId));
    read_vec(in, slot.chunk.tokens);
    read_vec(in, slot.chunk.token_ids);
    read_vec(in, slot.chunk.word_segments);
    read_vec(in, slot.chunk.shuffle_ptrs);
    read_vec(in, slot.chunk.doc_offsets);
    std::vector<std::uint64_t> row_offsets;
    std::vector<TopicId> topics;
    std::vector<std::uint32_t> counts;
    read_vec(in, row_offsets);
    read_vec(in, topics);
    read_vec(in, counts);
    std::uint64_t dense_shape[3] = {0, 0, 0};
    in.read(reinterpret_cast<char*>(dense_shape), sizeof(dense_shape));
    read_vec(in, slot.doc_topic_dense.raw_cells());
    slot.doc_topic_dense.set_shape(static_cast<std::uint32_t>(dense_shape[0]),
                                   static_cast<std::uint32_t>(dense_shape[1]), dense_shape[2]);
    if (!in) throw IoError("short read from spill file " + path.string());
    slot.doc_topic.adopt(std::move(row_offsets), std::move(topics), std::move(counts));
    return slot;
}

}  // namespace

ChunkStore::~ChunkStore() {
    if (!spill_dir_.empty()) {
        std::error_code ec;
        std::filesystem::remove_all(spill_dir_, ec);
    }
}

ChunkStore& ChunkStore::operator=(ChunkStore&& other) noexcept {
    if (this == &other) return *this;
    if (!spill_dir_.empty()) {
        std::error_code ec;
        std::filesystem::remove_all(spill_dir_, ec);
    }
    count_ = other.count_;
    slots_ = std::move(other.slots_);
    loaded_ = std::move(other.loaded_);
    spill_dir_ = std::move(other.spill_dir_);
    other.count_ = 0;
    other.slots_.clear();
    other.loaded_.clear();
    other.spill_dir_.clear();
    return *this;
}

ChunkStore ChunkStore::make_resident(std::vector<ChunkSlot> slots) {
    ChunkStore store;
    store.count_ = slots.size();
    store.slots_ = std::move(slots);
    store.loaded_.assign(store.count_, true);
    return store;
}

ChunkStore ChunkStore::make_file_backed(std::vector<ChunkSlot> slots,
                                        const std::filesystem::path& dir) {
    ChunkStore store;
    store.count_ = slots.size();
    store.spill_dir_ = dir;
    std::filesystem::create_directories(dir);
    for (std::size_t i = 0; i < slots.size(); ++i) {
        write_slot(store.slot_path(i), slots[i]);
    }
    store.slots_.resize(slots.size());
    store.loaded_.assign(slots.size(), false);
    return store;
}

std::filesystem::path ChunkStore::slot_path(std::size_t index) const {
    return spill_dir_ / ("chunk_" + std::to_string(index) + ".bin");
}

ChunkSlot& ChunkStore::acquire(std::size_t index) {
    if (!loaded_[index]) {
        slots_[index] = read_slot(slot_path(index));
        loaded_[index] = true;
    }
    return slots_[index];
}

void ChunkStore::release(std::size_t index) {
    if (spill_dir_.empty()) return;
    write_slot(slot_path(index), slots_[index]);
    slots_[index] = ChunkSlot{};
    loaded_[index] = false;
}

// ---------------------------------------------------------------------------
// Training

std::vector<TopicId> ModelState::gather_assignments() {
    std::vector<TopicId> out(num_tokens, kInvalidTopic);
    for (std::size_t c = 0; c < chunks.size(); ++c) {
        ChunkSlot& slot = chunks.acquire(c);
        for (std::uint32_t i = 0; i < slot.chunk.size(); ++i) {
            out[slot.chunk.token_ids[i]] = slot.chunk.tokens[i].topic;
        }
        chunks.release(c);
    }
    return out;
}

namespace {

TopicId uniform_topic(std::uint64_t seed, std::uint64_t token_id, std::uint32_t num_topics) {
    RngStream rng(seed, kInitAssignStream, token_id);
    auto topic = static_cast<TopicId>(rng.next_double() * num_topics);
    return topic < num_topics ? topic : num_topics - 1;
}

void count_chunk_into(const Chunk& chunk, WordTopicMatrix& b) {
    SparseTopicRow row;
    std::vector<TopicId> scratch;
    std::vector<TopicId> seg_topics;
    for (const WordSegment& seg : chunk.word_segments) {
        seg_topics.clear();
        for (std::uint32_t i = seg.offset; i < seg.offset + seg.length; ++i) {
            seg_topics.push_back(chunk.tokens[i].topic);
        }
        segmented_count(seg_topics, row, scratch);
        accumulate_word_topic(b, seg.word, row);
    }
}

void rebuild_trees(ModelState& state, const TrainConfig& cfg) {
    const std::uint32_t V = state.vocab_size;
    state.trees.resize(V);
    state.tree_mass.resize(V);
    parallel_for(V, cfg.num_workers, [&](std::uint64_t begin, std::uint64_t end) {
        for (std::uint64_t v = begin; v < end; ++v) {
            state.trees[v].build(state.word_topic_prob.row(static_cast<WordId>(v)),
                                 cfg.tree_branch);
            state.tree_mass[v] = static_cast<float>(state.alpha) * state.trees[v].total();
        }
    });
}

struct WorkerScratch {
    std::vector<float> probs;
    std::vector<TopicId> seg_topics;
    std::vector<TopicId> sort_buf;
    SparseTopicRow row;
};

void rebuild_chunk_doc_topic(ChunkSlot& slot, const TrainConfig& cfg) {
    if (cfg.sampler == SamplerKind::kSparse) {
        slot.doc_topic = rebuild_doc_topic(slot.chunk);
    } else {
        slot.doc_topic_dense.rebuild(slot.chunk, cfg.num_topics);
    }
}

void process_segment(ModelState& state, ChunkSlot& slot, const WordSegment& seg,
                     const TrainConfig& cfg, std::uint32_t iteration_stream,
                     WorkerScratch& scratch) {
    const auto bhat_row = state.word_topic_prob.row(seg.word);
    const WaryTree<float>& tree = state.trees[seg.word];
    const float q = state.tree_mass[seg.word];
    scratch.seg_topics.clear();

    for (std::uint32_t i = seg.offset; i < seg.offset + seg.length; ++i) {
        Token& token = slot.chunk.tokens[i];
        RngStream rng(state.seed, iteration_stream, slot.chunk.token_ids[i]);
        TopicId next;
        if (cfg.sampler == SamplerKind::kSparse) {
            const SparseTopicRowView doc_row =
                slot.doc_topic.row(token.doc - slot.chunk.doc_begin);
            next = sample_token<float>(doc_row, bhat_row, q, tree, rng, scratch.probs);
        } else {
            next = vanilla_sample<float>(slot.doc_topic_dense.row(token.doc - slot.chunk.doc_begin),
                                         bhat_row, static_cast<float>(state.alpha), rng,
                                         scratch.probs);
        }
        token.topic = next;
        scratch.seg_topics.push_back(next);
    }
    segmented_count(scratch.seg_topics, scratch.row, scratch.sort_buf);
    accumulate_word_topic(state.word_topic, seg.word, scratch.row);
}

// Samples every segment of the given chunk set; the worker that finishes a
// chunk's last segment rebuilds its doc-topic rows in place.
void run_e_step_over(ModelState& state, const TrainConfig& cfg, std::uint32_t iteration_stream,
                     const std::vector<std::size_t>& chunk_ids) {
    std::vector<WorkUnit> units;
    std::vector<std::unique_ptr<std::atomic<std::uint32_t>>> remaining(state.chunks.size());
    for (const std::size_t c : chunk_ids) {
        ChunkSlot& slot = state.chunks.acquire(c);
        const auto segments = static_cast<std::uint32_t>(slot.chunk.word_segments.size());
        remaining[c] = std::make_unique<std::atomic<std::uint32_t>>(segments);
        if (segments == 0) {
            rebuild_chunk_doc_topic(slot, cfg);
            continue;
        }
        for (std::uint32_t s = 0; s < segments; ++s) {
            units.push_back(WorkUnit{static_cast<std::uint32_t>(c), s});
        }
    }

    WorkQueue queue(std::move(units));
    auto worker = [&] {
        WorkerScratch scratch;
        while (auto unit = queue.claim()) {
            ChunkSlot& slot = state.chunks.acquire(unit->chunk);
            process_segment(state, slot, slot.chunk.word_segments[unit->segment], cfg,
                            iteration_stream, scratch);
            if (remaining[unit->chunk]->fetch_sub(1, std::memory_order_acq_rel) == 1) {
                rebuild_chunk_doc_topic(slot, cfg);
            }
        }
    };

    if (cfg.num_workers <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(cfg.num_workers);
        for (unsigned w = 0; w < cfg.num_workers; ++w) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
}

double mean_doc_topics(ModelState& state) {
    std::uint64_t nnz = 0;
    std::uint64_t rows = 0;
    for (std::size_t c = 0; c < state.chunks.size(); ++c) {
        ChunkSlot& slot = state.chunks.acquire(c);
        if (slot.doc_topic_dense.empty()) {
            nnz += slot.doc_topic.nnz();
            rows += slot.doc_topic.num_rows();
        } else {
            nnz += slot.doc_topic_dense.nnz();
            rows += slot.doc_topic_dense.num_rows();
        }
        state.chunks.release(c);
    }
    return rows > 0 ? static_cast<double>(nnz) / static_cast<double>(rows) : 0.0;
}

}  // namespace

ModelState init_state(const Corpus& corpus, const TrainConfig& raw_cfg) {
    const TrainConfig cfg = raw_cfg.resolved(corpus);

    ModelState state;
    state.num_docs = corpus.num_docs;
    state.vocab_size = corpus.vocab_size;
    state.num_tokens = corpus.num_tokens;
    state.num_topics = cfg.num_topics;
    state.alpha = cfg.alpha;
    state.beta = cfg.beta;
    state.seed = cfg.seed;
    state.iteration = 0;

    std::vector<Chunk> chunks = build_chunks(corpus, cfg.num_chunks);
    bool uninitialized = false;
    for (const Token& t : corpus.tokens) {
        if (t.topic == kInvalidTopic) {
            uninitialized = true;
            break;
        }
        if (t.topic >= cfg.num_topics) {
            throw ValidationError("token topic exceeds configured K");
        }
    }

    std::vector<ChunkSlot> slots(chunks.size());
    std::uint64_t resident_bytes = 0;
    for (std::size_t c = 0; c < chunks.size(); ++c) {
        Chunk& chunk = chunks[c];
        if (uninitialized) {
            for (std::uint32_t i = 0; i < chunk.size(); ++i) {
                chunk.tokens[i].topic =
                    uniform_topic(cfg.seed, chunk.token_ids[i], cfg.num_topics);
            }
        }
        build_schedule(chunk);
        slots[c].chunk = std::move(chunk);
        if (cfg.sampler == SamplerKind::kSparse) {
            slots[c].doc_topic = rebuild_doc_topic(slots[c].chunk);
            resident_bytes += slots[c].doc_topic.nnz() * 8;
        } else {
            slots[c].doc_topic_dense.rebuild(slots[c].chunk, cfg.num_topics);
            resident_bytes += slots[c].doc_topic_dense.cells().size() * 4;
        }
        resident_bytes += slots[c].chunk.size() * (sizeof(Token) + 2 * sizeof(std::uint32_t));
    }

    state.word_topic = WordTopicMatrix(state.vocab_size, state.num_topics);
    for (const ChunkSlot& slot : slots) count_chunk_into(slot.chunk, state.word_topic);
    state.word_topic_prob = preprocess(state.word_topic, cfg.beta, cfg.num_workers);
    rebuild_trees(state, cfg);

    if (slots.size() > 1 && resident_bytes > cfg.memory_budget) {
        std::filesystem::path dir = cfg.spill_dir.empty()
                                        ? std::filesystem::temp_directory_path()
                                        : std::filesystem::path(cfg.spill_dir);
        dir /= "sparselda-spill-" + std::to_string(
                   std::chrono::steady_clock::now().time_since_epoch().count());
        state.chunks = ChunkStore::make_file_backed(std::move(slots), dir);
    } else {
        state.chunks = ChunkStore::make_resident(std::move(slots));
    }
    return state;
}

IterationStats run_iteration(ModelState& state, const TrainConfig& raw_cfg) {
    TrainConfig cfg = raw_cfg;
    cfg.num_workers = resolve_workers(cfg.num_workers);
    const auto start = std::chrono::steady_clock::now();
    const std::uint32_t iteration_stream = state.iteration;

    reset_word_topic(state.word_topic);
    if (state.chunks.file_backed()) {
        for (std::size_t c = 0; c < state.chunks.size(); ++c) {
            run_e_step_over(state, cfg, iteration_stream, {c});
            state.chunks.release(c);
        }
    } else {
        std::vector<std::size_t> all(state.chunks.size());
        for (std::size_t c = 0; c < all.size(); ++c) all[c] = c;
        run_e_step_over(state, cfg, iteration_stream, all);
    }

    state.word_topic_prob = preprocess(state.word_topic, state.beta, cfg.num_workers);
    rebuild_trees(state, cfg);
    state.iteration += 1;

    IterationStats stats;
    stats.iteration = state.iteration;
    stats.tokens = state.num_tokens;
    stats.elapsed_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    stats.mtokens_per_s =
        stats.elapsed_s > 0 ? static_cast<double>(stats.tokens) / stats.elapsed_s / 1e6 : 0.0;
    stats.mean_doc_topics = mean_doc_topics(state);
    return stats;
}

ModelState train(const Corpus& corpus, const TrainConfig& raw_cfg, const MetricsSink& sink,
                 const HeldoutProbe& heldout_probe) {
    const TrainConfig cfg = raw_cfg.resolved(corpus);
    ModelState state = init_state(corpus, cfg);
    for (std::uint32_t i = 0; i < cfg.iterations; ++i) {
        MetricsEntry entry;
        entry.stats = run_iteration(state, cfg);
        if (heldout_probe && cfg.eval_every > 0 && entry.stats.iteration % cfg.eval_every == 0) {
            entry.heldout_ll = heldout_probe(state);
        }
        if (sink) sink(entry);
    }
    return state;
}

// ---------------------------------------------------------------------------
// Checkpoints

void save_checkpoint(const std::filesystem::path& path, ModelState& state) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write checkpoint " + path.string());
    out << "sparselda-checkpoint 1 " << state.num_docs << ' ' << state.vocab_size << ' '
        << state.num_tokens << ' ' << state.num_topics << ' ' << state.iteration << ' '
        << std::setprecision(17) << state.alpha << ' ' << state.beta << ' ' << state.seed << '\n';
    for (const TopicId t : state.gather_assignments()) out << t << '\n';
    dump_word_topic(out, state.word_topic, state.num_tokens, state.iteration);
    if (!out) throw IoError("short write to checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read checkpoint " + path.string());
    std::string magic;
    std::uint32_t version = 0;
    Checkpoint ckpt;
    in >> magic >> version;
    if (magic != "sparselda-checkpoint" || version != 1) {
        throw ValidationError("unrecognized checkpoint header in " + path.string());
    }
    in >> ckpt.num_docs >> ckpt.vocab_size >> ckpt.num_tokens >> ckpt.num_topics >>
        ckpt.iteration >> ckpt.alpha >> ckpt.beta >> ckpt.seed;
    if (!in) throw ValidationError("malformed checkpoint header in " + path.string());
    ckpt.assignments.resize(ckpt.num_tokens);
    for (std::uint64_t t = 0; t < ckpt.num_tokens; ++t) {
        if (!(in >> ckpt.assignments[t])) {
            throw ValidationError("checkpoint truncated in assignments");
        }
        if (ckpt.assignments[t] >= ckpt.num_topics) {
            throw ValidationError("checkpoint assignment out of range");
        }
    }
    in.ignore(1, '\n');
    std::uint64_t dump_tokens = 0;
    std::uint32_t dump_iteration = 0;
    ckpt.word_topic = parse_word_topic(in, dump_tokens, dump_iteration);
    if (dump_tokens != ckpt.num_tokens || dump_iteration != ckpt.iteration ||
        ckpt.word_topic.num_words() != ckpt.vocab_size ||
        ckpt.word_topic.num_topics() != ckpt.num_topics) {
        throw ValidationError("checkpoint sections disagree in " + path.string());
    }
    return ckpt;
}

ModelState model_from_checkpoint(const Checkpoint& ckpt, unsigned workers) {
    ModelState state;
    state.num_docs = ckpt.num_docs;
    state.vocab_size = ckpt.vocab_size;
    state.num_tokens = ckpt.num_tokens;
    state.num_topics = ckpt.num_topics;
    state.alpha = ckpt.alpha;
    state.beta = ckpt.beta;
    state.seed = ckpt.seed;
    state.iteration = ckpt.iteration;
    state.word_topic = ckpt.word_topic;
    state.word_topic_prob = preprocess(state.word_topic, state.beta, workers);
    TrainConfig cfg;
    cfg.num_topics = state.num_topics;
    cfg.alpha = state.alpha;
    cfg.num_workers = resolve_workers(workers);
    rebuild_trees(state, cfg);
    return state;
}

}  // namespace sparselda
