#pragma once

// Shared-covariance Gaussian mixture on (near) the unit sphere, with shifted
// prototypes and an exact-posterior Bayes oracle.

#include "adapt/core_types.hpp"
#include "adapt/io.hpp"

#include <Eigen/Cholesky>
#include <Eigen/QR>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

namespace adapt::synth {

struct SynthSpec {
    Index K = 10;
    Index d = 32;
    Index n_per_class = 200;
    double mean_separation = 1.35;    // min Euclidean distance between unit true means
    double prototype_noise = 0.3;     // per-coordinate std of the prototype shift
    double covariance_condition = 5.0;
    double noise_scale = 0.4;         // tr(true_cov) = noise_scale^2
    std::uint64_t seed = 0;

    bool operator==(const SynthSpec&) const = default;
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(SynthSpec, K, d, n_per_class, mean_separation, prototype_noise,
                                                covariance_condition, noise_scale, seed)

inline void validate_spec(const SynthSpec& s) {
    auto fail = [](const std::string& what) { throw Error(ErrorCode::ConfigError, what); };
    if (s.K < 2) fail("K must be >= 2");
    if (s.d < 2) fail("d must be >= 2");
    if (s.n_per_class < 1) fail("n_per_class must be >= 1");
    if (!(s.covariance_condition >= 1.0) || !std::isfinite(s.covariance_condition)) {
        fail("covariance_condition must be >= 1");
    }
    if (!(s.mean_separation >= 0.0) || !std::isfinite(s.mean_separation)) fail("mean_separation must be >= 0");
    if (!(s.prototype_noise >= 0.0) || !std::isfinite(s.prototype_noise)) fail("prototype_noise must be >= 0");
    if (!(s.noise_scale >= 0.0) || !std::isfinite(s.noise_scale)) fail("noise_scale must be >= 0");
}

struct SynthData {
    SynthSpec spec;
    Matrix X;             // unit-normalized samples, class-major
    Matrix X_raw;         // the same draws before normalization
    std::vector<int> labels;
    PrototypeSet protos;
    Matrix true_means;    // K x d, unit norm
    SquareMatrix true_cov;
};

namespace detail {

inline Vector gaussian_vector(std::mt19937_64& rng, Index n) {
    std::normal_distribution<double> g(0.0, 1.0);
    Vector v(n);
    for (Index i = 0; i < n; ++i) v[i] = g(rng);
    return v;
}

/// K unit vectors with pairwise distance >= sep. Each slot gets 10K candidate draws; an
/// exhausted slot restarts the placement, at most 10K times.
inline Matrix place_means(std::mt19937_64& rng, const SynthSpec& s) {
    const Index budget = 10 * s.K;
    Matrix means(s.K, s.d);
    for (Index restart = 0; restart < budget; ++restart) {
        Index placed = 0;
        while (placed < s.K) {
            bool ok = false;
            for (Index attempt = 0; attempt < budget && !ok; ++attempt) {
                Vector v = gaussian_vector(rng, s.d);
                const double n = v.norm();
                if (n == 0.0) continue;
                v /= n;
                ok = true;
                for (Index j = 0; j < placed && ok; ++j) ok = (means.row(j).transpose() - v).norm() >= s.mean_separation;
                if (ok) means.row(placed) = v.transpose();
            }
            if (!ok) break;
            ++placed;
        }
        if (placed == s.K) return means;
    }
    throw Error(ErrorCode::SeparationInfeasible, "cannot place " + std::to_string(s.K) + " means in d=" +
                                                     std::to_string(s.d) + " at separation " +
                                                     std::to_string(s.mean_separation));
}

} // namespace detail

inline SynthData generate(const SynthSpec& spec) {
    validate_spec(spec);
    std::mt19937_64 rng(spec.seed);
    const Index K = spec.K, d = spec.d;

    SynthData out;
    out.spec = spec;
    out.true_means = detail::place_means(rng, spec);

    // Log-spaced spectrum from 1 to the condition number, randomly rotated.
    SquareMatrix G(d, d);
    for (Index j = 0; j < d; ++j) G.col(j) = detail::gaussian_vector(rng, d);
    const SquareMatrix Q = Eigen::HouseholderQR<SquareMatrix>(G).householderQ();
    Vector lam(d);
    const double log_cond = std::log(spec.covariance_condition);
    for (Index j = 0; j < d; ++j) lam[j] = std::exp(log_cond * static_cast<double>(j) / static_cast<double>(d - 1));
    lam *= spec.noise_scale * spec.noise_scale / lam.sum();
    out.true_cov = Q * lam.asDiagonal() * Q.transpose();
    out.true_cov = 0.5 * (out.true_cov + out.true_cov.transpose()).eval();
    const SquareMatrix root = Q * lam.cwiseSqrt().asDiagonal();

    const Index N = K * spec.n_per_class;
    out.X_raw.resize(N, d);
    out.labels.resize(static_cast<std::size_t>(N));
    for (Index k = 0; k < K; ++k) {
        for (Index i = 0; i < spec.n_per_class; ++i) {
            const Index r = k * spec.n_per_class + i;
            out.X_raw.row(r) = (out.true_means.row(k).transpose() + root * detail::gaussian_vector(rng, d)).transpose();
            out.labels[static_cast<std::size_t>(r)] = static_cast<int>(k);
        }
    }
    out.X = out.X_raw;
    for (Index r = 0; r < N; ++r) {
        const double n = out.X.row(r).norm();
        if (n == 0.0) throw Error(ErrorCode::ZeroNormRow, "synthetic row " + std::to_string(r));
        out.X.row(r) /= n;
    }

    Matrix P = out.true_means;
    if (spec.prototype_noise > 0.0) {
        for (Index k = 0; k < K; ++k) P.row(k) += spec.prototype_noise * detail::gaussian_vector(rng, d).transpose();
    }
    std::vector<std::string> names;
    for (Index k = 0; k < K; ++k) names.push_back("class_" + std::to_string(k));
    out.protos = PrototypeSet::from_rows(std::move(P), std::move(names));
    return out;
}

struct BayesResult {
    std::vector<int> labels;
    Matrix posteriors;   // N x K
    double accuracy = 0.0;
};

/// Exact posterior of the generating mixture (uniform prior) evaluated at the given samples.
inline BayesResult bayes_oracle(const Matrix& X, const Matrix& true_means, const SquareMatrix& true_cov,
                                std::span<const int> true_labels = {}) {
    if (X.cols() != true_means.cols() || true_cov.rows() != X.cols()) {
        throw Error(ErrorCode::DimensionMismatch, "oracle inputs");
    }
    Eigen::LLT<SquareMatrix> llt(true_cov);
    if (llt.info() != Eigen::Success) throw Error(ErrorCode::SingularMatrix, "true covariance not SPD");
    const Index K = true_means.rows();
    const Matrix W = llt.solve(true_means.transpose()).transpose();   // K x d, rows P mu_k
    Vector b(K);
    for (Index k = 0; k < K; ++k) b[k] = -0.5 * W.row(k).dot(true_means.row(k));

    BayesResult out;
    out.posteriors.resize(X.rows(), K);
    out.labels.resize(static_cast<std::size_t>(X.rows()));
    Index correct = 0;
    for (Index i = 0; i < X.rows(); ++i) {
        Vector logit = W * X.row(i).transpose() + b;
        const double m = logit.maxCoeff();
        Vector p = (logit.array() - m).exp();
        p /= p.sum();
        out.posteriors.row(i) = p.transpose();
        const Index k = argmax(logit);
        out.labels[static_cast<std::size_t>(i)] = static_cast<int>(k);
        if (!true_labels.empty() && true_labels[static_cast<std::size_t>(i)] == static_cast<int>(k)) ++correct;
    }
    if (!true_labels.empty() && X.rows() > 0) out.accuracy = static_cast<double>(correct) / static_cast<double>(X.rows());
    return out;
}

struct OracleSummary {
    double normalized_accuracy = 0.0;
    double raw_accuracy = 0.0;
    double delta() const noexcept { return normalized_accuracy - raw_accuracy; }
};

/// Oracle accuracy on the normalized samples the adapters see and on the raw draws.
inline OracleSummary oracle_summary(const SynthData& data) {
    return {bayes_oracle(data.X, data.true_means, data.true_cov, data.labels).accuracy,
            bayes_oracle(data.X_raw, data.true_means, data.true_cov, data.labels).accuracy};
}

inline io::Dataset to_dataset(const SynthData& data) {
    return io::Dataset::in_memory(data.X, data.protos, data.labels);
}

struct WrittenFiles {
    std::filesystem::path manifest, features, prototypes, labels;
};

/// Writes features.adpt, prototypes.adpt, labels.adpl and manifest.json into dir.
inline WrittenFiles write_synth(const SynthData& data, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    WrittenFiles f{dir / "manifest.json", dir / "features.adpt", dir / "prototypes.adpt", dir / "labels.adpl"};
    io::write_embeddings(f.features, data.X, io::kFlagPreNormalized);
    io::write_embeddings(f.prototypes, data.protos.matrix(), io::kFlagPreNormalized);
    io::write_labels(f.labels, data.labels);
    io::write_manifest(f.manifest, {"features.adpt", "prototypes.adpt", "labels.adpl", data.protos.class_names(), {}});
    return f;
}

} // namespace adapt::synth
