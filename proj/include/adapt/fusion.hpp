#pragma once

// Closed-form posterior: z_k proportional to yhat_k * exp(gda_k + votes_k), where
// votes_k = sum_{j in bank_k} max(0, x'x_j) * yhat_{j,k}.

#include "adapt/core_types.hpp"
#include "adapt/knowledge_bank.hpp"

#include <cmath>
#include <limits>

namespace adapt {

struct BankVote {
    Vector votes;
};

inline BankVote bank_votes(const Eigen::Ref<const Vector>& x, const KnowledgeBank& bank) {
    BankVote out{Vector::Zero(bank.num_classes())};
    for (Index k = 0; k < bank.num_classes(); ++k) {
        double v = 0.0;
        for (const auto& e : bank.entries(k)) {
            const double w = x.dot(e.feature);
            if (w > 0.0) v += w * e.soft_label[k];
        }
        out.votes[k] = v;
    }
    return out;
}

/// Log-space softmax of ln yhat + gda + votes. Classes with yhat_k = 0 get exactly zero mass.
inline SoftLabel fuse(const SoftLabel& yhat, const Vector& gda, const BankVote& votes) {
    const Index K = yhat.size();
    if (gda.size() != K || votes.votes.size() != K) throw Error(ErrorCode::DimensionMismatch, "fuse inputs");
    Vector logits(K);
    double shift = -std::numeric_limits<double>::infinity();
    for (Index k = 0; k < K; ++k) {
        logits[k] = yhat[k] > 0.0 ? std::log(yhat[k]) + gda[k] + votes.votes[k]
                                  : -std::numeric_limits<double>::infinity();
        if (logits[k] > shift) shift = logits[k];
    }
    if (!std::isfinite(shift)) throw Error(ErrorCode::DegenerateInput, "zero-shot label has no support");
    Vector z(K);
    for (Index k = 0; k < K; ++k) z[k] = yhat[k] > 0.0 ? std::exp(logits[k] - shift) : 0.0;
    z /= z.sum();
    return SoftLabel(std::move(z));
}

/// z-dependent part of the regularized objective:
///   -z'loglik + KL(z || yhat) - z'votes.
/// `loglik` is the full Gaussian log-density per class; adding the same constant to every entry
/// shifts the value by that constant (z sums to one).
inline double objective_z(const SoftLabel& z, const SoftLabel& yhat, const Vector& loglik, const BankVote& votes) {
    double value = 0.0;
    for (Index k = 0; k < z.size(); ++k) {
        const double zk = z[k];
        value -= zk * (loglik[k] + votes.votes[k]);
        if (zk > 0.0) value += zk * std::log(zk / yhat[k]);
    }
    return value;
}

} // namespace adapt
