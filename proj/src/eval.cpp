#include "sparselda/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>

#include "sparselda/parallel.hpp"
#include "sparselda/rng.hpp"
#include "sparselda/sampler.hpp"

namespace sparselda {

HeldoutSet HeldoutSet::from_corpus(const Corpus& corpus) {
    HeldoutSet set;
    set.vocab_size = corpus.vocab_size;
    set.docs.resize(corpus.num_docs);
    std::vector<std::uint32_t> seen(corpus.num_docs, 0);
    for (const Token& t : corpus.tokens) {
        Doc& doc = set.docs[t.doc];
        if (seen[t.doc]++ % 2 == 0) {
            doc.estimation.push_back(t.word);
        } else {
            doc.evaluation.push_back(t.word);
        }
    }
    return set;
}

std::uint64_t HeldoutSet::estimation_tokens() const {
    std::uint64_t n = 0;
    for (const Doc& d : docs) n += d.estimation.size();
    return n;
}

std::uint64_t HeldoutSet::evaluation_tokens() const {
    std::uint64_t n = 0;
    for (const Doc& d : docs) n += d.evaluation.size();
    return n;
}

std::string format_eval_line(const EvalReport& report) {
    char buf[96];
    std::snprintf(buf, sizeof(buf), "%u %.6f %llu", report.iteration, report.per_token_ll,
                  static_cast<unsigned long long>(report.tokens_evaluated));
    return buf;
}

EvalReport heldout_ll(ModelState& model, const HeldoutSet& heldout, std::uint32_t burn_in,
                      unsigned workers, std::uint64_t seed) {
    if (heldout.docs.empty()) throw ValidationError("held-out set is empty");
    if (heldout.vocab_size != model.vocab_size) {
        throw ValidationError("held-out vocabulary size does not match model");
    }
    const std::uint64_t eval_tokens = heldout.evaluation_tokens();
    if (eval_tokens == 0) throw ValidationError("held-out set has no evaluation tokens");

    const std::uint32_t K = model.num_topics;
    const double alpha = model.alpha;

    // Row sums of B-hat in 64-bit; the alpha-weighted smoothing mass per word.
    std::vector<double> row_mass(model.vocab_size, 0.0);
    parallel_for(model.vocab_size, workers, [&](std::uint64_t begin, std::uint64_t end) {
        for (std::uint64_t v = begin; v < end; ++v) {
            double sum = 0.0;
            for (const float p : model.word_topic_prob.row(static_cast<WordId>(v))) sum += p;
            row_mass[v] = sum;
        }
    });

    // Stream ids: position of the token among all estimation tokens, doc-major.
    std::vector<std::uint64_t> doc_stream_base(heldout.docs.size() + 1, 0);
    for (std::size_t d = 0; d < heldout.docs.size(); ++d) {
        doc_stream_base[d + 1] = doc_stream_base[d] + heldout.docs[d].estimation.size();
    }

    std::vector<double> doc_ll(heldout.docs.size(), 0.0);
    parallel_for(heldout.docs.size(), workers, [&](std::uint64_t begin, std::uint64_t end) {
        std::vector<TopicId> topics;
        std::vector<float> prob_scratch;
        std::vector<TopicId> sort_scratch;
        SparseTopicRow doc_row;
        for (std::uint64_t d = begin; d < end; ++d) {
            const HeldoutSet::Doc& doc = heldout.docs[d];
            if (doc.estimation.empty()) continue;
            const std::uint64_t base = doc_stream_base[d];

            topics.resize(doc.estimation.size());
            for (std::size_t j = 0; j < topics.size(); ++j) {
                RngStream rng(seed, kHeldoutInitStream, base + j);
                auto k = static_cast<TopicId>(rng.next_double() * K);
                topics[j] = k < K ? k : K - 1;
            }

            // Bulk-synchronous sweeps against the frozen model: resample every
            // estimation token from the previous sweep's counts, then recount.
            for (std::uint32_t sweep = 0; sweep < burn_in; ++sweep) {
                segmented_count(topics, doc_row, sort_scratch);
                const SparseTopicRowView row_view{doc_row.topics, doc_row.counts};
                for (std::size_t j = 0; j < topics.size(); ++j) {
                    const WordId v = doc.estimation[j];
                    RngStream rng(seed, kHeldoutSweepBase + sweep, base + j);
                    topics[j] = sample_token<float>(row_view, model.word_topic_prob.row(v),
                                                    model.tree_mass[v], model.trees[v], rng,
                                                    prob_scratch);
                }
            }
            segmented_count(topics, doc_row, sort_scratch);

            const double denom = static_cast<double>(doc.estimation.size()) + K * alpha;
            double ll = 0.0;
            for (const WordId v : doc.evaluation) {
                double mass = alpha * row_mass[v];
                const auto bhat_row = model.word_topic_prob.row(v);
                for (std::size_t i = 0; i < doc_row.size(); ++i) {
                    mass += static_cast<double>(doc_row.counts[i]) *
                            static_cast<double>(bhat_row[doc_row.topics[i]]);
                }
                ll += std::log(mass / denom);
            }
            doc_ll[d] = ll;
        }
    });

    double total = 0.0;
    for (const double ll : doc_ll) total += ll;

    EvalReport report;
    report.per_token_ll = total / static_cast<double>(eval_tokens);
    report.tokens_evaluated = eval_tokens;
    report.iteration = model.iteration;
    return report;
}

double throughput_mtokens(std::uint64_t tokens, double elapsed_s) {
    if (elapsed_s <= 0.0) throw ValidationError("throughput requires positive elapsed time");
    return static_cast<double>(tokens) / elapsed_s / 1e6;
}

double throughput_mtokens(const IterationStats& stats) {
    return throughput_mtokens(stats.tokens, stats.elapsed_s);
}

std::vector<std::vector<std::pair<WordId, float>>> top_words(const WordTopicProb& bhat,
                                                             std::uint32_t n) {
    if (n > bhat.num_words()) {
        throw ValidationError("top_words n exceeds vocabulary size");
    }
    std::vector<std::vector<std::pair<WordId, float>>> out(bhat.num_topics());
    std::vector<std::pair<WordId, float>> column(bhat.num_words());
    for (TopicId k = 0; k < bhat.num_topics(); ++k) {
        for (WordId v = 0; v < bhat.num_words(); ++v) column[v] = {v, bhat.at(v, k)};
        const auto by_prob = [](const auto& a, const auto& b) {
            if (a.second != b.second) return a.second > b.second;
            return a.first < b.first;
        };
        std::partial_sort(column.begin(), column.begin() + n, column.end(), by_prob);
        out[k].assign(column.begin(), column.begin() + n);
    }
    return out;
}

void print_topics(std::ostream& out, const WordTopicProb& bhat,
                  const std::vector<std::string>& vocab, std::uint32_t n) {
    const auto ranked = top_words(bhat, n);
    char number[48];
    for (TopicId k = 0; k < ranked.size(); ++k) {
        out << "topic " << k << ':';
        for (const auto& [word, prob] : ranked[k]) {
            std::snprintf(number, sizeof(number), "%.6f", prob);
            out << ' ';
            if (word < vocab.size() && !vocab[word].empty()) {
                out << vocab[word];
            } else {
                out << word;
            }
            out << ':' << number;
        }
        out << '\n';
    }
}

}  // namespace sparselda
