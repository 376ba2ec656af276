#pragma once

// Class-conditional Gaussian statistics: prototype-anchored mean estimates,
// pooled covariance over the knowledge bank, its shrinkage inverse
//
//     precision = d * ((N - 1) * cov + tr(cov) * I)^-1,
//
// and the linear discriminant logits w_k' x + b_k with w_k = precision * mu_k,
// b_k = -1/2 mu_k' precision mu_k.

#include "adapt/core_types.hpp"
#include "adapt/knowledge_bank.hpp"

#include <cmath>
#include <numbers>
#include <span>
#include <string>
#include <vector>

namespace adapt {

struct ClassCovariance {
    SquareMatrix covariance;
    SquareMatrix precision;
    double log_det_precision = 0.0;
    Index count = 0;
};

struct GaussianModel {
    Matrix means;             // K x d
    SquareMatrix covariance;  // d x d, pooled
    SquareMatrix precision;   // d x d, shrinkage inverse (identity fallback)
    Matrix gda_weights;       // K x d
    Vector gda_bias;          // K
    Index n_bank = 0;
    double log_det_precision = 0.0;
    CovarianceMode mode = CovarianceMode::shared;
    /// Populated only in per_class mode.
    std::vector<ClassCovariance> per_class;

    Index num_classes() const noexcept { return means.rows(); }
    Index dim() const noexcept { return means.cols(); }
};

/// mu_k = alpha * (bank-weighted mean of class k) + (1 - alpha) * prototype_k.
/// Classes whose bank carries no mass keep the prototype.
inline Matrix means_online(const KnowledgeBank& bank, const PrototypeSet& protos, double alpha) {
    const Index K = protos.num_classes();
    Matrix means = protos.matrix();
    for (Index k = 0; k < K; ++k) {
        const double w = bank.class_weight_sum(k);
        if (w > 0.0) {
            const Vector mean_bank = bank.weighted_feature_sum(k) / w;
            means.row(k) = alpha * mean_bank.transpose() + (1.0 - alpha) * protos.row(k);
        }
    }
    return means;
}

/// One-pass transductive estimate: the soft-label weighted mean over all samples plus the bank,
/// mixed with the prototype by alpha.
inline Matrix means_transductive(const Matrix& X, std::span<const SoftLabel> yhat, const KnowledgeBank& bank,
                                 const PrototypeSet& protos, double alpha) {
    const Index K = protos.num_classes();
    if (X.cols() != protos.dim()) throw Error(ErrorCode::DimensionMismatch, "feature dim vs prototype dim");
    if (static_cast<Index>(yhat.size()) != X.rows()) throw Error(ErrorCode::DimensionMismatch, "labels vs rows");

    Matrix sums = Matrix::Zero(K, X.cols());
    Vector weights = Vector::Zero(K);
    for (Index i = 0; i < X.rows(); ++i) {
        const Vector& y = yhat[static_cast<std::size_t>(i)].probs();
        if (y.size() != K) throw Error(ErrorCode::DimensionMismatch, "label length");
        for (Index k = 0; k < K; ++k) {
            if (y[k] == 0.0) continue;
            sums.row(k) += y[k] * X.row(i);
            weights[k] += y[k];
        }
    }
    Matrix means = protos.matrix();
    for (Index k = 0; k < K; ++k) {
        const double w = weights[k] + bank.class_weight_sum(k);
        if (w > 0.0) {
            const Vector total = sums.row(k).transpose() + bank.weighted_feature_sum(k);
            means.row(k) = alpha * (total / w).transpose() + (1.0 - alpha) * protos.row(k);
        }
    }
    return means;
}

struct PooledCovariance {
    SquareMatrix covariance;
    Index n_bank = 0;
};

/// (1/N) sum_k sum_{j in bank_k} (x_j - mu_k)(x_j - mu_k)'. Zero matrix when the bank is empty.
inline PooledCovariance pooled_covariance(const KnowledgeBank& bank, const Matrix& means) {
    const Index d = means.cols();
    PooledCovariance out{SquareMatrix::Zero(d, d), bank.total_size()};
    if (out.n_bank == 0) return out;
    for (Index k = 0; k < bank.num_classes(); ++k) {
        for (const auto& e : bank.entries(k)) {
            const Vector dev = e.feature - means.row(k).transpose();
            out.covariance.selfadjointView<Eigen::Lower>().rankUpdate(dev);
        }
    }
    out.covariance.triangularView<Eigen::StrictlyUpper>() = out.covariance.transpose();
    out.covariance /= static_cast<double>(out.n_bank);
    return out;
}

struct ShrinkageInverse {
    SquareMatrix precision;
    double log_det_precision = 0.0;
    bool fallback = false;
};

/// d * ((N - 1) cov + tr(cov) I)^-1 via Cholesky, together with log det of the result.
/// Falls back to the identity when N < 2 or tr(cov) = 0.
inline ShrinkageInverse shrinkage_inverse_with_logdet(const SquareMatrix& cov, Index n_bank) {
    const Index d = cov.rows();
    const double trace = cov.trace();
    if (n_bank < 2 || !(trace > 0.0)) return {SquareMatrix::Identity(d, d), 0.0, true};

    SquareMatrix regularized = static_cast<double>(n_bank - 1) * cov;
    regularized.diagonal().array() += trace;
    regularized /= static_cast<double>(d);
    const Eigen::LLT<SquareMatrix> llt(regularized);
    if (llt.info() != Eigen::Success) throw Error(ErrorCode::SingularMatrix, "regularized covariance not SPD");
    SquareMatrix precision = llt.solve(SquareMatrix::Identity(d, d));
    precision = 0.5 * (precision + precision.transpose());
    const double log_det_reg = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
    return {std::move(precision), -log_det_reg, false};
}

inline SquareMatrix shrinkage_inverse(const SquareMatrix& cov, Index n_bank) {
    return shrinkage_inverse_with_logdet(cov, n_bank).precision;
}

inline void refresh_discriminant(GaussianModel& model) {
    model.gda_weights = model.means * model.precision;  // precision is symmetric
    model.gda_bias = -0.5 * (model.gda_weights.array() * model.means.array()).rowwise().sum().matrix();
}

/// Per-class covariances: each class uses its own bank entries and count in the shrinkage rule;
/// classes with fewer than two entries get identity precision.
inline std::vector<ClassCovariance> per_class_covariance(const KnowledgeBank& bank, const Matrix& means) {
    const Index d = means.cols();
    std::vector<ClassCovariance> out;
    out.reserve(static_cast<std::size_t>(bank.num_classes()));
    for (Index k = 0; k < bank.num_classes(); ++k) {
        ClassCovariance cc;
        cc.count = bank.size(k);
        cc.covariance = SquareMatrix::Zero(d, d);
        for (const auto& e : bank.entries(k)) {
            const Vector dev = e.feature - means.row(k).transpose();
            cc.covariance.noalias() += dev * dev.transpose();
        }
        if (cc.count > 0) cc.covariance /= static_cast<double>(cc.count);
        auto inv = shrinkage_inverse_with_logdet(cc.covariance, cc.count);
        cc.precision = std::move(inv.precision);
        cc.log_det_precision = inv.log_det_precision;
        out.push_back(std::move(cc));
    }
    return out;
}

/// Assembles a model from given means; covariance comes from the bank unless disabled.
inline GaussianModel build_model(Matrix means, const KnowledgeBank& bank, CovarianceMode mode,
                                 bool update_covariance) {
    GaussianModel m;
    const Index d = means.cols();
    m.means = std::move(means);
    m.mode = mode;
    m.n_bank = bank.total_size();
    if (update_covariance && mode != CovarianceMode::identity) {
        auto pooled = pooled_covariance(bank, m.means);
        auto inv = shrinkage_inverse_with_logdet(pooled.covariance, pooled.n_bank);
        m.covariance = std::move(pooled.covariance);
        m.precision = std::move(inv.precision);
        m.log_det_precision = inv.log_det_precision;
        if (mode == CovarianceMode::per_class) m.per_class = per_class_covariance(bank, m.means);
    } else {
        m.covariance = SquareMatrix::Zero(d, d);
        m.precision = SquareMatrix::Identity(d, d);
    }
    refresh_discriminant(m);
    return m;
}

/// Model with prototype means and identity precision (no bank information).
inline GaussianModel prior_model(const PrototypeSet& protos) {
    return build_model(protos.matrix(), KnowledgeBank(protos.num_classes(), 1, protos.dim()),
                       CovarianceMode::identity, false);
}

/// Discriminant logits. Shared/identity modes: w_k' x + b_k. Per-class mode: the class log-density
/// up to a class-independent constant, -1/2 (x-mu_k)' P_k (x-mu_k) + 1/2 log det P_k.
inline Vector gda_logits(const Eigen::Ref<const Vector>& x, const GaussianModel& model) {
    if (x.size() != model.dim()) throw Error(ErrorCode::DimensionMismatch, "feature dim vs model dim");
    if (model.mode == CovarianceMode::per_class && !model.per_class.empty()) {
        Vector out(model.num_classes());
        for (Index k = 0; k < model.num_classes(); ++k) {
            const auto& cc = model.per_class[static_cast<std::size_t>(k)];
            const Vector dev = x - model.means.row(k).transpose();
            out[k] = -0.5 * dev.dot(cc.precision * dev) + 0.5 * cc.log_det_precision;
        }
        return out;
    }
    return model.gda_weights * x + model.gda_bias;
}

/// ln N(x; mu_k, precision^-1) with the log-determinant taken from the shrinkage factorization.
inline double log_likelihood(const Eigen::Ref<const Vector>& x, Index k, const GaussianModel& model) {
    if (k < 0 || k >= model.num_classes()) throw Error(ErrorCode::ClassIndexOutOfRange, "class index");
    const SquareMatrix* precision = &model.precision;
    double log_det = model.log_det_precision;
    if (model.mode == CovarianceMode::per_class && !model.per_class.empty()) {
        precision = &model.per_class[static_cast<std::size_t>(k)].precision;
        log_det = model.per_class[static_cast<std::size_t>(k)].log_det_precision;
    }
    const Vector dev = x - model.means.row(k).transpose();
    const double d = static_cast<double>(model.dim());
    return -0.5 * d * std::log(2.0 * std::numbers::pi) + 0.5 * log_det - 0.5 * dev.dot(*precision * dev);
}

inline Vector log_likelihoods(const Eigen::Ref<const Vector>& x, const GaussianModel& model) {
    Vector out(model.num_classes());
    for (Index k = 0; k < model.num_classes(); ++k) out[k] = log_likelihood(x, k, model);
    return out;
}

} // namespace adapt
