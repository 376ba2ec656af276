#pragma once

// Full-batch adaptation: top-L bank over the whole batch, one-pass means with
// zero-shot labels standing in for the latent assignments, pooled covariance
// over the bank, then the fused posterior for every sample.

#include "adapt/core_types.hpp"
#include "adapt/fusion.hpp"
#include "adapt/gaussian.hpp"
#include "adapt/knowledge_bank.hpp"
#include "adapt/online.hpp"
#include "adapt/parallel.hpp"
#include "adapt/zeroshot.hpp"

#include <numeric>
#include <vector>

namespace adapt {

inline std::vector<SoftLabel> zero_shot_batch(const Matrix& X, const PrototypeSet& protos, double tau) {
    if (X.cols() != protos.dim()) throw Error(ErrorCode::DimensionMismatch, "feature dim vs prototype dim");
    std::vector<SoftLabel> out(static_cast<std::size_t>(X.rows()));
    parallel::for_each_index(X.rows(), [&](std::ptrdiff_t i) {
        out[static_cast<std::size_t>(i)] = zero_shot(X.row(i).transpose(), protos, tau);
    });
    return out;
}

/// Bank selected from the batch (empty when the bank is disabled).
inline KnowledgeBank transductive_bank(const Matrix& X, const std::vector<SoftLabel>& yhat, const PrototypeSet& protos,
                                      const AdaptConfig& cfg) {
    if (!cfg.use_bank) return KnowledgeBank(protos.num_classes(), cfg.bank_capacity, protos.dim());
    return fill_top_l(X, yhat, cfg.bank_capacity);
}

/// Fused posteriors for every row against a fixed model and bank.
inline std::vector<PredictionRecord> predict_batch(const Matrix& X, const std::vector<SoftLabel>& yhat,
                                                   const KnowledgeBank& bank, const GaussianModel& model,
                                                   bool use_bank) {
    std::vector<char> in_bank(static_cast<std::size_t>(X.rows()), 0);
    for (Index k = 0; k < bank.num_classes(); ++k) {
        for (const auto& e : bank.entries(k)) {
            if (e.sample_index >= 0 && e.sample_index < X.rows()) in_bank[static_cast<std::size_t>(e.sample_index)] = 1;
        }
    }
    std::vector<PredictionRecord> records(static_cast<std::size_t>(X.rows()));
    parallel::for_each_index(X.rows(), [&](std::ptrdiff_t i) {
        const auto ui = static_cast<std::size_t>(i);
        const Vector x = X.row(i).transpose();
        PredictionRecord& rec = records[ui];
        rec.sample_index = i;
        rec.zero_shot = yhat[ui];
        rec.confidence = confidence(yhat[ui]);
        rec.bank_inserted = in_bank[ui] != 0;
        const BankVote votes = use_bank ? bank_votes(x, bank) : BankVote{Vector::Zero(model.num_classes())};
        rec.adapted = fuse(yhat[ui], gda_logits(x, model), votes);
        rec.argmax_class = rec.adapted.argmax();
    });
    return records;
}

inline RunResult run_transductive(const Matrix& X, const PrototypeSet& protos, const AdaptConfig& cfg) {
    validate_config(cfg);
    if (X.rows() == 0) throw Error(ErrorCode::EmptyStream, "transductive batch has no samples");
    if (X.cols() != protos.dim()) throw Error(ErrorCode::DimensionMismatch, "feature dim vs prototype dim");

    const auto yhat = zero_shot_batch(X, protos, cfg.tau);
    RunResult result;
    result.bank = transductive_bank(X, yhat, protos, cfg);
    Matrix means =
        cfg.update_means ? means_transductive(X, yhat, result.bank, protos, cfg.alpha) : protos.matrix();
    result.model = build_model(std::move(means), result.bank, cfg.covariance_mode, cfg.update_covariance);
    result.records = predict_batch(X, yhat, result.bank, result.model, cfg.use_bank);
    result.processing_order.resize(static_cast<std::size_t>(X.rows()));
    std::iota(result.processing_order.begin(), result.processing_order.end(), Index{0});
    return result;
}

} // namespace adapt
