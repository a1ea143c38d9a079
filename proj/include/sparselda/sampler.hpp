#pragma once

#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "sparselda/counts.hpp"
#include "sparselda/rng.hpp"
#include "sparselda/types.hpp"

namespace sparselda {

// Smallest i with prefix[i] >= x over a non-decreasing sequence. A draw
// u * total can land a rounding step past the last accumulated prefix; such
// values clamp to the final index instead of faulting.
template <class Real>
std::size_t prefix_search(std::span<const Real> prefix, Real x) {
    if (prefix.empty()) throw ValidationError("prefix_search on empty sequence");
    const Real last = prefix.back();
    if (x > last) {
        const Real slack = static_cast<Real>(16) * std::numeric_limits<Real>::epsilon() *
                           (last > Real(1) ? last : Real(1));
        if (x > last + slack) {
            throw ValidationError("prefix_search target " + std::to_string(static_cast<double>(x)) +
                                  " beyond prefix total " + std::to_string(static_cast<double>(last)));
        }
        return prefix.size() - 1;
    }
    std::size_t lo = 0, hi = prefix.size() - 1;
    while (lo < hi) {
        const std::size_t mid = lo + (hi - lo) / 2;
        if (prefix[mid] >= x) {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    return lo;
}

// Branching-factor-W prefix-sum search tree. The bottom level holds the
// inclusive prefix sums of the source array; each upper node mirrors the last
// node of its W-wide block below, and partial blocks are padded with the
// running total so a first->= search can never land on padding. Four levels
// cover K <= W^3.
template <class Real>
class WaryTree {
public:
    static constexpr std::uint32_t kDefaultBranch = 32;

    WaryTree() = default;
    explicit WaryTree(std::span<const Real> weights, std::uint32_t branch = kDefaultBranch) {
        build(weights, branch);
    }

    void build(std::span<const Real> weights, std::uint32_t branch = kDefaultBranch) {
        if (branch < 2) throw ValidationError("tree branching factor must be >= 2");
        const std::uint64_t capacity =
            static_cast<std::uint64_t>(branch) * branch * branch;
        if (weights.size() > capacity) {
            throw ValidationError("tree capacity exceeded: K=" + std::to_string(weights.size()) +
                                  " > W^3=" + std::to_string(capacity));
        }
        if (weights.empty()) throw ValidationError("tree requires at least one weight");
        branch_ = branch;
        size_ = static_cast<std::uint32_t>(weights.size());

        const std::uint32_t n4 = padded(size_);
        bottom_.resize(n4);
        Real running = 0;
        for (std::uint32_t i = 0; i < size_; ++i) {
            running += weights[i];
            bottom_[i] = running;
        }
        total_ = running;
        for (std::uint32_t i = size_; i < n4; ++i) bottom_[i] = total_;

        const std::uint32_t n3_real = n4 / branch_;
        const std::uint32_t n3 = padded(n3_real);
        mid_.resize(n3);
        for (std::uint32_t i = 0; i < n3_real; ++i) mid_[i] = bottom_[(i + 1) * branch_ - 1];
        for (std::uint32_t i = n3_real; i < n3; ++i) mid_[i] = total_;

        const std::uint32_t n2_real = n3 / branch_;
        top_.resize(branch_);
        for (std::uint32_t i = 0; i < n2_real; ++i) top_[i] = mid_[(i + 1) * branch_ - 1];
        for (std::uint32_t i = n2_real; i < branch_; ++i) top_[i] = total_;
    }

    std::uint32_t size() const { return size_; }
    std::uint32_t branch() const { return branch_; }
    Real total() const { return total_; }

    // Top-down descent: at each level, the first node >= x within the current
    // W-wide block picks the child block. Matches prefix_search over the
    // un-padded prefix array for every x. Values past the total (rounding)
    // clamp to it, keeping every descent inside the real nodes.
    std::uint32_t sample(Real x) const {
        if (!(x <= total_)) x = total_;
        const std::uint32_t i2 = first_not_below(top_.data(), branch_, x);
        const std::uint32_t i3 = i2 * branch_ + first_not_below(mid_.data() + i2 * branch_, branch_, x);
        const std::uint32_t i4 = i3 * branch_ + first_not_below(bottom_.data() + i3 * branch_, branch_, x);
        return i4 < size_ ? i4 : size_ - 1;
    }

    // Real (un-padded) prefix sums; the linear-scan oracle view.
    std::span<const Real> prefix() const { return {bottom_.data(), size_}; }

    std::span<const Real> level2() const { return top_; }
    std::span<const Real> level3() const { return mid_; }
    std::span<const Real> level4() const { return bottom_; }

private:
    std::uint32_t padded(std::uint32_t n) const {
        return (n + branch_ - 1) / branch_ * branch_;
    }
    static std::uint32_t first_not_below(const Real* block, std::uint32_t width, Real x) {
        for (std::uint32_t i = 0; i < width; ++i) {
            if (block[i] >= x) return i;
        }
        return width - 1;
    }

    std::uint32_t branch_ = kDefaultBranch;
    std::uint32_t size_ = 0;
    Real total_ = 0;
    std::vector<Real> top_;     // L2
    std::vector<Real> mid_;     // L3
    std::vector<Real> bottom_;  // L4
};

// Per-word preprocessing: the tree over one probability row plus the
// alpha-scaled row mass used as the word-only branch weight.
template <class Real>
struct TreeAndMass {
    Real q = 0;  // alpha * sum_k row[k]
    WaryTree<Real> tree;
};

template <class Real>
TreeAndMass<Real> build_tree(std::span<const Real> bhat_row, Real alpha,
                             std::uint32_t branch = WaryTree<Real>::kDefaultBranch) {
    TreeAndMass<Real> out;
    out.tree.build(bhat_row, branch);
    out.q = alpha * out.tree.total();
    return out;
}

template <class Real>
std::uint32_t tree_sample(const WaryTree<Real>& tree, Real x) {
    return tree.sample(x);
}

// The two-way decomposition of p(k) ∝ (A_dk + alpha) * bhat_vk: a sparse
// branch over the document's non-zero topics with mass S, and the
// preprocessed word-only branch with mass Q.
template <class Real>
struct BranchContext {
    Real sparse_mass = 0;            // S = sum_k A_dk * bhat_vk
    Real word_mass = 0;              // Q = alpha * sum_k bhat_vk
    std::span<const Real> probs;     // P_k aligned with the row's non-zeros
};

template <class Real>
BranchContext<Real> make_branch_context(SparseTopicRowView doc_row,
                                        std::span<const Real> bhat_row, Real word_mass,
                                        std::vector<Real>& scratch) {
    scratch.resize(doc_row.size());
    Real s = 0;
    for (std::size_t i = 0; i < doc_row.size(); ++i) {
        const Real p = static_cast<Real>(doc_row.counts[i]) * bhat_row[doc_row.topics[i]];
        scratch[i] = p;
        s += p;
    }
    return {s, word_mass, {scratch.data(), scratch.size()}};
}

// One draw from p(k) ∝ (A_dk + alpha) * bhat_vk. Picks the sparse branch
// with probability S / (S + Q); otherwise descends the word's tree. Work is
// O(nnz(A_d) + log_W K), never O(K).
template <class Real>
TopicId sample_token(SparseTopicRowView doc_row, std::span<const Real> bhat_row, Real word_mass,
                     const WaryTree<Real>& tree, RngStream& rng, std::vector<Real>& scratch) {
    const BranchContext<Real> ctx = make_branch_context(doc_row, bhat_row, word_mass, scratch);
    if (ctx.sparse_mass + ctx.word_mass <= 0) {
        throw ValidationError("sample_token: branch masses sum to zero");
    }
    const Real branch_draw = static_cast<Real>(rng.next_double());
    const Real position_draw = static_cast<Real>(rng.next_double());
    if (branch_draw < ctx.sparse_mass / (ctx.sparse_mass + ctx.word_mass)) {
        // In-place inclusive prefix over the sparse products.
        Real running = 0;
        for (std::size_t i = 0; i < scratch.size(); ++i) {
            running += scratch[i];
            scratch[i] = running;
        }
        const std::size_t pick =
            prefix_search<Real>({scratch.data(), scratch.size()}, position_draw * running);
        return doc_row.topics[pick];
    }
    return static_cast<TopicId>(tree.sample(position_draw * tree.total()));
}

// O(K) three-step reference: densify p(k), draw, prefix search. Used as a
// baseline trainer mode and as the distributional oracle for sample_token.
template <class Real>
TopicId vanilla_sample(std::span<const Real> doc_row_dense, std::span<const Real> bhat_row,
                       Real alpha, RngStream& rng, std::vector<Real>& scratch) {
    const std::size_t K = bhat_row.size();
    scratch.resize(K);
    Real running = 0;
    for (std::size_t k = 0; k < K; ++k) {
        running += (doc_row_dense[k] + alpha) * bhat_row[k];
        scratch[k] = running;
    }
    const Real draw = static_cast<Real>(rng.next_double()) * running;
    return static_cast<TopicId>(prefix_search<Real>({scratch.data(), K}, draw));
}

// Same draw over a dense integer count row, as a dense-matrix system keeps it.
template <class Real>
TopicId vanilla_sample(std::span<const std::uint32_t> doc_counts_dense,
                       std::span<const Real> bhat_row, Real alpha, RngStream& rng,
                       std::vector<Real>& scratch) {
    const std::size_t K = bhat_row.size();
    scratch.resize(K);
    Real running = 0;
    for (std::size_t k = 0; k < K; ++k) {
        running += (static_cast<Real>(doc_counts_dense[k]) + alpha) * bhat_row[k];
        scratch[k] = running;
    }
    const Real draw = static_cast<Real>(rng.next_double()) * running;
    return static_cast<TopicId>(prefix_search<Real>({scratch.data(), K}, draw));
}

}  // namespace sparselda
