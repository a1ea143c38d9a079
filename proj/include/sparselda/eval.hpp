#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "sparselda/corpus.hpp"
#include "sparselda/trainer.hpp"
#include "sparselda/types.hpp"

namespace sparselda {

// Held-out documents split 50/50 by alternating token positions: even
// positions estimate the document's topic mix, odd positions are scored.
struct HeldoutSet {
    struct Doc {
        std::vector<WordId> estimation;
        std::vector<WordId> evaluation;
    };
    std::uint32_t vocab_size = 0;
    std::vector<Doc> docs;

    static HeldoutSet from_corpus(const Corpus& corpus);
    std::uint64_t estimation_tokens() const;
    std::uint64_t evaluation_tokens() const;
};

struct EvalReport {
    double per_token_ll = 0.0;
    std::uint64_t tokens_evaluated = 0;
    std::uint32_t iteration = 0;
};

std::string format_eval_line(const EvalReport& report);

// Partially-observed document scoring: burn-in sweeps over each document's
// estimation half against the frozen model, a point estimate of the topic
// mix, then the mean log-probability of the evaluation half. Results do not
// depend on worker count or document order.
EvalReport heldout_ll(ModelState& model, const HeldoutSet& heldout, std::uint32_t burn_in = 20,
                      unsigned workers = 1, std::uint64_t seed = 0);

// Millions of tokens per second; throws on a zero-length interval.
double throughput_mtokens(std::uint64_t tokens, double elapsed_s);
double throughput_mtokens(const IterationStats& stats);

// Per topic, the n highest-probability words, descending, ties by word id.
std::vector<std::vector<std::pair<WordId, float>>> top_words(const WordTopicProb& bhat,
                                                             std::uint32_t n);

void print_topics(std::ostream& out, const WordTopicProb& bhat,
                  const std::vector<std::string>& vocab, std::uint32_t n);

}  // namespace sparselda
