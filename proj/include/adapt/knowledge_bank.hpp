#pragma once

// Per-class fixed-capacity buffers of high-confidence samples.
//
// Each buffer is a binary heap keyed by confidence (newest first among ties), so the entry
// that would be evicted next sits at the front. Online admission is strict:
// a full buffer accepts a newcomer only when its confidence exceeds the
// current minimum. Batch selection (fill_top_l) uses the total order
// confidence-then-higher-seq.

#include "adapt/core_types.hpp"
#include "adapt/zeroshot.hpp"

#include <algorithm>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace adapt {

struct BankEntry {
    Vector feature;
    SoftLabel soft_label;
    double confidence = 0.0;
    std::uint64_t seq = 0;
    Index sample_index = 0;
};

struct InsertOutcome {
    enum class Kind { inserted, replaced, rejected };
    Kind kind = Kind::rejected;
    std::uint64_t evicted_seq = 0;

    bool changed() const noexcept { return kind != Kind::rejected; }
};

/// Batch selection order: confidence, then seq (newer ranks higher).
inline bool bank_key_less(const BankEntry& a, const BankEntry& b) {
    if (a.confidence != b.confidence) return a.confidence < b.confidence;
    return a.seq < b.seq;
}

class KnowledgeBank {
public:
    KnowledgeBank() = default;
    KnowledgeBank(Index num_classes, int capacity, Index dim)
        : buffers_(static_cast<std::size_t>(num_classes)), capacity_(capacity), dim_(dim) {
        if (capacity < 1) throw Error(ErrorCode::ConfigError, "bank_capacity");
    }

    Index num_classes() const noexcept { return static_cast<Index>(buffers_.size()); }
    int capacity() const noexcept { return capacity_; }
    Index dim() const noexcept { return dim_; }

    /// Entries of class k in heap order (front = next to evict).
    const std::vector<BankEntry>& entries(Index k) const { return buffers_[checked(k)]; }
    Index size(Index k) const { return static_cast<Index>(entries(k).size()); }

    Index total_size() const noexcept {
        Index n = 0;
        for (const auto& b : buffers_) n += static_cast<Index>(b.size());
        return n;
    }

    std::vector<Index> fill_counts() const {
        std::vector<Index> out;
        out.reserve(buffers_.size());
        for (const auto& b : buffers_) out.push_back(static_cast<Index>(b.size()));
        return out;
    }

    InsertOutcome try_insert(Index class_k, BankEntry entry) {
        auto& buf = buffers_[checked(class_k)];
        if (entry.feature.size() != dim_) throw Error(ErrorCode::DimensionMismatch, "bank entry feature dimension");
        if (entry.soft_label.size() != num_classes()) {
            throw Error(ErrorCode::DimensionMismatch, "bank entry label length");
        }
        if (static_cast<int>(buf.size()) < capacity_) {
            buf.push_back(std::move(entry));
            std::push_heap(buf.begin(), buf.end(), heap_cmp);
            return {InsertOutcome::Kind::inserted, 0};
        }
        if (!(entry.confidence > buf.front().confidence)) return {InsertOutcome::Kind::rejected, 0};
        std::pop_heap(buf.begin(), buf.end(), heap_cmp);
        const std::uint64_t evicted = buf.back().seq;
        buf.back() = std::move(entry);
        std::push_heap(buf.begin(), buf.end(), heap_cmp);
        return {InsertOutcome::Kind::replaced, evicted};
    }

    /// Sum over entries of their soft-label mass for class k.
    double class_weight_sum(Index k) const {
        double s = 0.0;
        for (const auto& e : entries(k)) s += e.soft_label[k];
        return s;
    }

    Vector weighted_feature_sum(Index k) const {
        Vector s = Vector::Zero(dim_);
        for (const auto& e : entries(k)) s += e.soft_label[k] * e.feature;
        return s;
    }

    /// Debug dump: K arrays of {seq, sample_index, confidence, argmax}, most confident first.
    nlohmann::json to_json() const {
        nlohmann::json out = nlohmann::json::array();
        for (const auto& buf : buffers_) {
            std::vector<const BankEntry*> sorted;
            for (const auto& e : buf) sorted.push_back(&e);
            std::sort(sorted.begin(), sorted.end(),
                      [](const BankEntry* a, const BankEntry* b) { return bank_key_less(*b, *a); });
            nlohmann::json cls = nlohmann::json::array();
            for (const auto* e : sorted) {
                cls.push_back({{"seq", e->seq},
                               {"sample_index", e->sample_index},
                               {"confidence", e->confidence},
                               {"argmax", e->soft_label.argmax()}});
            }
            out.push_back(std::move(cls));
        }
        return out;
    }

private:
    // Front of the heap is the next eviction: lowest confidence, newest among equals.
    // Together with strict admission this keeps the first-come top-L on ties.
    static bool heap_cmp(const BankEntry& a, const BankEntry& b) {
        if (a.confidence != b.confidence) return a.confidence > b.confidence;
        return a.seq < b.seq;
    }

    std::size_t checked(Index k) const {
        if (k < 0 || k >= num_classes()) {
            throw Error(ErrorCode::ClassIndexOutOfRange,
                        "class " + std::to_string(k) + " of " + std::to_string(num_classes()));
        }
        return static_cast<std::size_t>(k);
    }

    std::vector<std::vector<BankEntry>> buffers_;
    int capacity_ = 1;
    Index dim_ = 0;
};

/// Batch selection: buffer k gets the top-L candidates (by confidence, newer seq on ties)
/// among those whose soft-label argmax is k.
inline KnowledgeBank fill_top_l(std::span<const BankEntry> candidates, Index num_classes, int capacity, Index dim) {
    KnowledgeBank bank(num_classes, capacity, dim);
    std::vector<std::vector<const BankEntry*>> per_class(static_cast<std::size_t>(num_classes));
    for (const auto& c : candidates) {
        const Index k = c.soft_label.argmax();
        per_class[static_cast<std::size_t>(k)].push_back(&c);
    }
    for (Index k = 0; k < num_classes; ++k) {
        auto& list = per_class[static_cast<std::size_t>(k)];
        const auto take = std::min<std::size_t>(list.size(), static_cast<std::size_t>(capacity));
        std::partial_sort(list.begin(), list.begin() + static_cast<std::ptrdiff_t>(take), list.end(),
                          [](const BankEntry* a, const BankEntry* b) { return bank_key_less(*b, *a); });
        for (std::size_t i = 0; i < take; ++i) bank.try_insert(k, *list[i]);
    }
    return bank;
}

/// Builds candidates from a feature matrix and its zero-shot labels; seq = row index.
inline KnowledgeBank fill_top_l(const Matrix& X, std::span<const SoftLabel> yhat, int capacity) {
    if (static_cast<Index>(yhat.size()) != X.rows()) throw Error(ErrorCode::DimensionMismatch, "labels vs rows");
    if (yhat.empty()) throw Error(ErrorCode::EmptyStream, "no samples");
    const Index K = yhat.front().size();
    // Select by index first; only the retained rows are copied into the bank.
    std::vector<double> conf(yhat.size());
    std::vector<std::vector<Index>> per_class(static_cast<std::size_t>(K));
    for (std::size_t i = 0; i < yhat.size(); ++i) {
        conf[i] = confidence(yhat[i]);
        per_class[static_cast<std::size_t>(yhat[i].argmax())].push_back(static_cast<Index>(i));
    }
    KnowledgeBank bank(K, capacity, X.cols());
    for (Index k = 0; k < K; ++k) {
        auto& list = per_class[static_cast<std::size_t>(k)];
        const auto take = std::min<std::size_t>(list.size(), static_cast<std::size_t>(capacity));
        std::partial_sort(list.begin(), list.begin() + static_cast<std::ptrdiff_t>(take), list.end(),
                          [&](Index a, Index b) {
                              const double ca = conf[static_cast<std::size_t>(a)];
                              const double cb = conf[static_cast<std::size_t>(b)];
                              return ca != cb ? ca > cb : a > b;
                          });
        for (std::size_t t = 0; t < take; ++t) {
            const Index i = list[t];
            const auto ui = static_cast<std::size_t>(i);
            bank.try_insert(k, {X.row(i).transpose(), yhat[ui], conf[ui], static_cast<std::uint64_t>(i), i});
        }
    }
    return bank;
}

} // namespace adapt
