#pragma once

// Sequential one-pass adaptation. Per sample: zero-shot label, confidence,
// bank admission, model refresh (only when the bank changed), fused posterior.

#include "adapt/core_types.hpp"
#include "adapt/fusion.hpp"
#include "adapt/gaussian.hpp"
#include "adapt/knowledge_bank.hpp"
#include "adapt/zeroshot.hpp"

#include <algorithm>
#include <numeric>
#include <random>
#include <vector>

namespace adapt {

/// Output of any adaptation run. `records[i]` belongs to row i of the input.
struct RunResult {
    std::vector<PredictionRecord> records;
    std::vector<Index> processing_order;
    KnowledgeBank bank;
    GaussianModel model;
    int solver_iterations = 0;
    bool converged = true;
};

class OnlineAdapter {
public:
    OnlineAdapter(PrototypeSet protos, AdaptConfig cfg)
        : protos_(std::move(protos)), cfg_(cfg),
          bank_(protos_.num_classes(), cfg.bank_capacity, protos_.dim()) {
        validate_config(cfg_);
        rebuild();
    }

    PredictionRecord step(const Eigen::Ref<const Vector>& x, Index sample_index) {
        if (x.size() != protos_.dim()) {
            throw Error(ErrorCode::DimensionMismatch, "sample " + std::to_string(sample_index) + " has dim " +
                                                          std::to_string(x.size()));
        }
        PredictionRecord rec;
        rec.sample_index = sample_index;
        rec.zero_shot = zero_shot(x, protos_, cfg_.tau);
        rec.confidence = confidence(rec.zero_shot);

        if (!cfg_.insert_after_predict) rec.bank_inserted = admit(x, rec);
        if (dirty_) rebuild();

        const Vector gda = gda_logits(x, model_);
        const BankVote votes = cfg_.use_bank ? bank_votes(x, bank_) : BankVote{Vector::Zero(protos_.num_classes())};
        rec.adapted = fuse(rec.zero_shot, gda, votes);
        rec.argmax_class = rec.adapted.argmax();

        if (cfg_.insert_after_predict) rec.bank_inserted = admit(x, rec);
        ++steps_;
        return rec;
    }

    const KnowledgeBank& bank() const noexcept { return bank_; }
    const PrototypeSet& prototypes() const noexcept { return protos_; }
    const AdaptConfig& config() const noexcept { return cfg_; }
    Index steps() const noexcept { return steps_; }
    Index rebuilds() const noexcept { return rebuilds_; }

    /// Model reflecting the current bank contents.
    const GaussianModel& model() {
        if (dirty_) rebuild();
        return model_;
    }

private:
    bool admit(const Eigen::Ref<const Vector>& x, const PredictionRecord& rec) {
        if (!cfg_.use_bank) return false;
        const auto outcome = bank_.try_insert(rec.zero_shot.argmax(),
                                              {x, rec.zero_shot, rec.confidence, next_seq_++, rec.sample_index});
        if (outcome.changed()) dirty_ = true;
        return outcome.changed();
    }

    void rebuild() {
        Matrix means = cfg_.update_means ? means_online(bank_, protos_, cfg_.alpha) : protos_.matrix();
        model_ = build_model(std::move(means), bank_, cfg_.covariance_mode, cfg_.update_covariance);
        dirty_ = false;
        ++rebuilds_;
    }

    PrototypeSet protos_;
    AdaptConfig cfg_;
    KnowledgeBank bank_;
    GaussianModel model_;
    bool dirty_ = false;
    std::uint64_t next_seq_ = 0;
    Index steps_ = 0;
    Index rebuilds_ = 0;
};

/// Processing order for a stream. Confidence orderings use a zero-shot pre-pass;
/// ties keep input order.
inline std::vector<Index> stream_order(const Matrix& X, const PrototypeSet& protos, const AdaptConfig& cfg) {
    std::vector<Index> order(static_cast<std::size_t>(X.rows()));
    std::iota(order.begin(), order.end(), Index{0});
    switch (cfg.order) {
    case StreamOrder::as_given:
        break;
    case StreamOrder::shuffled: {
        std::mt19937_64 rng(cfg.seed);
        std::shuffle(order.begin(), order.end(), rng);
        break;
    }
    case StreamOrder::easy_to_hard:
    case StreamOrder::hard_to_easy: {
        std::vector<double> conf(order.size());
        for (Index i = 0; i < X.rows(); ++i) {
            conf[static_cast<std::size_t>(i)] = confidence(zero_shot(X.row(i).transpose(), protos, cfg.tau));
        }
        const bool easy_first = cfg.order == StreamOrder::easy_to_hard;
        std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) {
            const double ca = conf[static_cast<std::size_t>(a)];
            const double cb = conf[static_cast<std::size_t>(b)];
            return easy_first ? ca > cb : ca < cb;
        });
        break;
    }
    }
    return order;
}

inline RunResult run_online(const Matrix& X, const PrototypeSet& protos, const AdaptConfig& cfg) {
    validate_config(cfg);
    if (X.rows() == 0) throw Error(ErrorCode::EmptyStream, "online stream has no samples");
    if (X.cols() != protos.dim()) throw Error(ErrorCode::DimensionMismatch, "feature dim vs prototype dim");

    RunResult result;
    result.processing_order = stream_order(X, protos, cfg);
    result.records.resize(static_cast<std::size_t>(X.rows()));
    OnlineAdapter adapter(protos, cfg);
    for (const Index i : result.processing_order) {
        result.records[static_cast<std::size_t>(i)] = adapter.step(X.row(i).transpose(), i);
    }
    result.model = adapter.model();
    result.bank = adapter.bank();
    return result;
}

} // namespace adapt
