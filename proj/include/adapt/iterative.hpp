#pragma once

// Alternating (majorization-minimization style) reference solver. Instead of
// the one-pass shortcut it alternates the exact z-update (the fused posterior)
// with the full mean fixed point
//
//     mu_k = (sum_i z_ik x_i + sum_{j in B_k} yhat_jk x_j + beta * proto_k)
//            / (sum_i z_ik + sum_{j in B_k} yhat_jk + beta)
//
// refreshing the covariance each iteration unless freeze_covariance is set.
// With a one-pass weight sum S the closed-form mixing weight corresponds to
// alpha = S / (S + beta).

#include "adapt/core_types.hpp"
#include "adapt/fusion.hpp"
#include "adapt/gaussian.hpp"
#include "adapt/knowledge_bank.hpp"
#include "adapt/online.hpp"
#include "adapt/parallel.hpp"
#include "adapt/transductive.hpp"
#include "adapt/zeroshot.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <span>
#include <vector>

namespace adapt {

/// beta giving mixing weight alpha for a data weight sum S.
inline double beta_for_alpha(double weight_sum, double alpha) { return weight_sum * (1.0 - alpha) / alpha; }

struct IterativeTrace {
    std::vector<double> objective;   // after each iteration
    std::vector<double> max_delta;   // max |z_t - z_{t-1}|
    std::vector<Matrix> means;       // mu after each mean update
};

namespace detail {

inline Matrix prior_weighted_means(const Matrix& sums, const Vector& weights, const PrototypeSet& protos, double beta) {
    Matrix means(protos.num_classes(), protos.dim());
    for (Index k = 0; k < protos.num_classes(); ++k) {
        means.row(k) = (sums.row(k) + beta * protos.row(k)) / (weights[k] + beta);
    }
    return means;
}

/// Rebuilds the model for new means, optionally reusing an earlier covariance estimate.
inline GaussianModel model_for_means(Matrix means, const KnowledgeBank& bank, const AdaptConfig& cfg,
                                     const GaussianModel* frozen) {
    if (frozen == nullptr) return build_model(std::move(means), bank, cfg.covariance_mode, cfg.update_covariance);
    GaussianModel m = *frozen;
    m.means = std::move(means);
    refresh_discriminant(m);
    return m;
}

} // namespace detail

/// Monitored batch objective at (z, model):
///   sum_i [-z_i' loglik_i + KL(z_i || yhat_i) - z_i' votes_i]
///   + beta/2 sum_k (proto_k - mu_k)' P (proto_k - mu_k)
///   - sum_k sum_{j in B_k} yhat_jk loglik_jk.
inline double batch_objective(const Matrix& X, std::span<const SoftLabel> yhat, std::span<const SoftLabel> z,
                              std::span<const BankVote> votes, const KnowledgeBank& bank, const GaussianModel& model,
                              const PrototypeSet& protos, double beta) {
    std::vector<double> per_sample(static_cast<std::size_t>(X.rows()));
    parallel::for_each_index(X.rows(), [&](std::ptrdiff_t i) {
        const auto ui = static_cast<std::size_t>(i);
        per_sample[ui] = objective_z(z[ui], yhat[ui], log_likelihoods(X.row(i).transpose(), model), votes[ui]);
    });
    double value = std::accumulate(per_sample.begin(), per_sample.end(), 0.0);
    for (Index k = 0; k < protos.num_classes(); ++k) {
        const Vector dev = protos.row(k).transpose() - model.means.row(k).transpose();
        value += 0.5 * beta * dev.dot(model.precision * dev);
        for (const auto& e : bank.entries(k)) value -= e.soft_label[k] * log_likelihood(e.feature, k, model);
    }
    return value;
}

inline RunResult run_transductive_iterative(const Matrix& X, const PrototypeSet& protos, const AdaptConfig& cfg,
                                            IterativeTrace* trace = nullptr) {
    validate_config(cfg);
    if (X.rows() == 0) throw Error(ErrorCode::EmptyStream, "transductive batch has no samples");
    if (X.cols() != protos.dim()) throw Error(ErrorCode::DimensionMismatch, "feature dim vs prototype dim");

    const Index N = X.rows();
    const Index K = protos.num_classes();
    const auto yhat = zero_shot_batch(X, protos, cfg.tau);

    RunResult result;
    result.bank = transductive_bank(X, yhat, protos, cfg);
    const KnowledgeBank& bank = result.bank;

    std::vector<BankVote> votes(static_cast<std::size_t>(N), BankVote{Vector::Zero(K)});
    if (cfg.use_bank) {
        parallel::for_each_index(N, [&](std::ptrdiff_t i) {
            votes[static_cast<std::size_t>(i)] = bank_votes(X.row(i).transpose(), bank);
        });
    }
    Matrix bank_sums(K, X.cols());
    Vector bank_weights(K);
    for (Index k = 0; k < K; ++k) {
        bank_sums.row(k) = bank.weighted_feature_sum(k).transpose();
        bank_weights[k] = bank.class_weight_sum(k);
    }

    std::vector<SoftLabel> z = yhat;
    std::vector<SoftLabel> z_next(z.size());
    std::vector<SoftLabel> best_z;
    GaussianModel model;
    GaussianModel first_model;
    double best_objective = std::numeric_limits<double>::infinity();
    result.converged = false;

    for (int it = 1; it <= cfg.max_iters; ++it) {
        Matrix means = protos.matrix();
        if (cfg.update_means) {
            Matrix sums = bank_sums;
            Vector weights = bank_weights;
            for (Index i = 0; i < N; ++i) {
                const Vector& zi = z[static_cast<std::size_t>(i)].probs();
                for (Index k = 0; k < K; ++k) {
                    if (zi[k] == 0.0) continue;
                    sums.row(k) += zi[k] * X.row(i);
                    weights[k] += zi[k];
                }
            }
            means = detail::prior_weighted_means(sums, weights, protos, cfg.beta);
        }
        model = detail::model_for_means(std::move(means), bank, cfg,
                                        cfg.freeze_covariance && it > 1 ? &first_model : nullptr);
        if (it == 1) first_model = model;
        if (trace) trace->means.push_back(model.means);

        parallel::for_each_index(N, [&](std::ptrdiff_t i) {
            const auto ui = static_cast<std::size_t>(i);
            z_next[ui] = fuse(yhat[ui], gda_logits(X.row(i).transpose(), model), votes[ui]);
        });
        double delta = 0.0;
        for (std::size_t i = 0; i < z.size(); ++i) {
            delta = std::max(delta, (z_next[i].probs() - z[i].probs()).cwiseAbs().maxCoeff());
        }
        std::swap(z, z_next);
        result.solver_iterations = it;

        const double objective = batch_objective(X, yhat, z, votes, bank, model, protos, cfg.beta);
        if (trace) {
            trace->objective.push_back(objective);
            trace->max_delta.push_back(delta);
        }
        if (objective <= best_objective) {
            best_objective = objective;
            best_z = z;
        }
        if (delta < cfg.tol) {
            result.converged = true;
            best_z = z;
            break;
        }
    }
    // Non-convergence returns the lowest-objective iterate.
    if (!result.converged) z = best_z;

    result.model = std::move(model);
    result.records.resize(static_cast<std::size_t>(N));
    std::vector<char> in_bank(static_cast<std::size_t>(N), 0);
    for (Index k = 0; k < K; ++k) {
        for (const auto& e : bank.entries(k)) in_bank[static_cast<std::size_t>(e.sample_index)] = 1;
    }
    for (Index i = 0; i < N; ++i) {
        const auto ui = static_cast<std::size_t>(i);
        auto& rec = result.records[ui];
        rec.sample_index = i;
        rec.zero_shot = yhat[ui];
        rec.confidence = confidence(yhat[ui]);
        rec.bank_inserted = in_bank[ui] != 0;
        rec.adapted = z[ui];
        rec.argmax_class = rec.adapted.argmax();
    }
    result.processing_order.resize(static_cast<std::size_t>(N));
    std::iota(result.processing_order.begin(), result.processing_order.end(), Index{0});
    return result;
}

/// Called after each inner mean update of the online solver: (stream step, iteration, means).
using OnlineTraceFn = std::function<void(Index, int, const Matrix&)>;

/// Online variant: bank handling follows the sequential loop; per sample, z and the means
/// (with the current sample's z-weighted term retained) alternate until convergence.
/// `solver_iterations` reports the largest per-sample iteration count.
inline RunResult run_online_iterative(const Matrix& X, const PrototypeSet& protos, const AdaptConfig& cfg,
                                      const OnlineTraceFn& trace = {}) {
    validate_config(cfg);
    if (X.rows() == 0) throw Error(ErrorCode::EmptyStream, "online stream has no samples");
    if (X.cols() != protos.dim()) throw Error(ErrorCode::DimensionMismatch, "feature dim vs prototype dim");

    const Index K = protos.num_classes();
    RunResult result;
    result.processing_order = stream_order(X, protos, cfg);
    result.records.resize(static_cast<std::size_t>(X.rows()));
    KnowledgeBank bank(K, cfg.bank_capacity, protos.dim());
    std::uint64_t seq = 0;
    GaussianModel model = build_model(protos.matrix(), bank, cfg.covariance_mode, cfg.update_covariance);

    auto admit = [&](const Vector& x, PredictionRecord& rec) {
        if (!cfg.use_bank) return;
        rec.bank_inserted =
            bank.try_insert(rec.zero_shot.argmax(), {x, rec.zero_shot, rec.confidence, seq++, rec.sample_index})
                .changed();
    };

    Index step = 0;
    for (const Index i : result.processing_order) {
        const Vector x = X.row(i).transpose();
        PredictionRecord& rec = result.records[static_cast<std::size_t>(i)];
        rec.sample_index = i;
        rec.zero_shot = zero_shot(x, protos, cfg.tau);
        rec.confidence = confidence(rec.zero_shot);
        if (!cfg.insert_after_predict) admit(x, rec);

        const BankVote votes = cfg.use_bank ? bank_votes(x, bank) : BankVote{Vector::Zero(K)};
        Matrix bank_sums(K, protos.dim());
        Vector bank_weights(K);
        for (Index k = 0; k < K; ++k) {
            bank_sums.row(k) = bank.weighted_feature_sum(k).transpose();
            bank_weights[k] = bank.class_weight_sum(k);
        }

        SoftLabel z = rec.zero_shot;
        GaussianModel first_model;
        bool converged = false;
        int it = 1;
        for (; it <= cfg.max_iters; ++it) {
            Matrix means = protos.matrix();
            if (cfg.update_means) {
                Matrix sums = bank_sums;
                Vector weights = bank_weights;
                for (Index k = 0; k < K; ++k) {
                    sums.row(k) += z[k] * x.transpose();
                    weights[k] += z[k];
                }
                means = detail::prior_weighted_means(sums, weights, protos, cfg.beta);
            }
            model = detail::model_for_means(std::move(means), bank, cfg,
                                            cfg.freeze_covariance && it > 1 ? &first_model : nullptr);
            if (it == 1) first_model = model;
            if (trace) trace(step, it, model.means);
            SoftLabel z_new = fuse(rec.zero_shot, gda_logits(x, model), votes);
            const double delta = (z_new.probs() - z.probs()).cwiseAbs().maxCoeff();
            z = std::move(z_new);
            if (delta < cfg.tol) {
                converged = true;
                break;
            }
        }
        result.solver_iterations = std::max(result.solver_iterations, std::min(it, cfg.max_iters));
        result.converged = result.converged && converged;
        rec.adapted = std::move(z);
        rec.argmax_class = rec.adapted.argmax();
        if (cfg.insert_after_predict) admit(x, rec);
        ++step;
    }
    result.model = std::move(model);
    result.bank = std::move(bank);
    return result;
}

} // namespace adapt
