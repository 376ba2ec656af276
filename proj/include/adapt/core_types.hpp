#pragma once

// Shared domain types and configuration. All arithmetic is double precision;
// feature files store float32 (see io.hpp).

#include "adapt/error.hpp"

#include <Eigen/Dense>
#include <json.hpp>

#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace adapt {

using Index = Eigen::Index;
using Vector = Eigen::VectorXd;
/// Samples-by-features, one embedding per row.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using SquareMatrix = Eigen::MatrixXd;

inline constexpr double kUnitNormTolerance = 1e-6;
inline constexpr double kSimplexTolerance = 1e-9;

/// Index of the largest entry; ties resolve to the lowest index.
template <typename Derived>
Index argmax(const Eigen::DenseBase<Derived>& v) {
    Index best = 0;
    for (Index i = 1; i < v.size(); ++i) {
        if (v[i] > v[best]) best = i;
    }
    return best;
}

inline bool is_simplex(const Vector& p, double tol = kSimplexTolerance) {
    if (p.size() == 0) return false;
    double sum = 0.0;
    for (Index i = 0; i < p.size(); ++i) {
        if (!std::isfinite(p[i]) || p[i] < 0.0) return false;
        sum += p[i];
    }
    return std::abs(sum - 1.0) <= tol;
}

/// A probability vector over K classes.
class SoftLabel {
public:
    SoftLabel() = default;
    explicit SoftLabel(Vector probs) : probs_(std::move(probs)) {}

    const Vector& probs() const noexcept { return probs_; }
    double operator[](Index k) const { return probs_[k]; }
    Index size() const noexcept { return probs_.size(); }
    Index argmax() const { return adapt::argmax(probs_); }
    bool valid(double tol = kSimplexTolerance) const { return is_simplex(probs_, tol); }

    friend bool operator==(const SoftLabel& a, const SoftLabel& b) {
        return a.probs_.size() == b.probs_.size() && a.probs_ == b.probs_;
    }

private:
    Vector probs_;
};

/// Throws DegenerateInput when `y` violates the simplex invariants.
inline void expect_simplex(const SoftLabel& y, const char* where) {
    if (!y.valid()) throw Error(ErrorCode::DegenerateInput, std::string(where) + ": label is not on the simplex");
}

/// K unit-norm class prototypes; these are also the prior class means.
class PrototypeSet {
public:
    PrototypeSet() = default;

    /// Normalizes each row. Requires K >= 2, finite entries, nonzero and pairwise distinct rows.
    static PrototypeSet from_rows(Matrix rows, std::vector<std::string> names = {}) {
        if (rows.rows() < 2) throw Error(ErrorCode::InvalidPrototypes, "need at least 2 classes");
        if (rows.cols() < 1) throw Error(ErrorCode::InvalidPrototypes, "zero dimension");
        if (!rows.allFinite()) throw Error(ErrorCode::NonFiniteValue, "prototype matrix has non-finite entries");
        for (Index k = 0; k < rows.rows(); ++k) {
            const double n = rows.row(k).norm();
            if (n == 0.0) throw Error(ErrorCode::ZeroNormRow, "prototype row " + std::to_string(k));
            rows.row(k) /= n;
        }
        for (Index a = 0; a < rows.rows(); ++a) {
            for (Index b = a + 1; b < rows.rows(); ++b) {
                if (rows.row(a) == rows.row(b)) {
                    throw Error(ErrorCode::InvalidPrototypes,
                                "prototype rows " + std::to_string(a) + " and " + std::to_string(b) + " coincide");
                }
            }
        }
        if (!names.empty() && static_cast<Index>(names.size()) != rows.rows()) {
            throw Error(ErrorCode::DimensionMismatch, "class_names length does not match prototype count");
        }
        PrototypeSet p;
        p.rows_ = std::move(rows);
        p.names_ = std::move(names);
        return p;
    }

    Index num_classes() const noexcept { return rows_.rows(); }
    Index dim() const noexcept { return rows_.cols(); }
    const Matrix& matrix() const noexcept { return rows_; }
    auto row(Index k) const { return rows_.row(k); }
    const std::vector<std::string>& class_names() const noexcept { return names_; }

private:
    Matrix rows_;
    std::vector<std::string> names_;
};

enum class CovarianceMode { shared, per_class, identity };
enum class StreamOrder { as_given, easy_to_hard, hard_to_easy, shuffled };
enum class Mode { online, transductive };
enum class Solver { closed, iterative };

NLOHMANN_JSON_SERIALIZE_ENUM(CovarianceMode, {{CovarianceMode::shared, "shared"},
                                              {CovarianceMode::per_class, "per_class"},
                                              {CovarianceMode::identity, "identity"}})
NLOHMANN_JSON_SERIALIZE_ENUM(StreamOrder, {{StreamOrder::as_given, "as_given"},
                                           {StreamOrder::easy_to_hard, "easy_to_hard"},
                                           {StreamOrder::hard_to_easy, "hard_to_easy"},
                                           {StreamOrder::shuffled, "shuffled"}})
NLOHMANN_JSON_SERIALIZE_ENUM(Mode, {{Mode::online, "online"}, {Mode::transductive, "transductive"}})
NLOHMANN_JSON_SERIALIZE_ENUM(Solver, {{Solver::closed, "closed"}, {Solver::iterative, "iterative"}})

inline constexpr int kDefaultOnlineBank = 16;
inline constexpr int kDefaultTransductiveBank = 6;

inline int default_bank_capacity(Mode mode) {
    return mode == Mode::online ? kDefaultOnlineBank : kDefaultTransductiveBank;
}

struct AdaptConfig {
    int bank_capacity = kDefaultOnlineBank;
    double alpha = 0.9;
    /// Softmax temperature for zero-shot scores (logit scale 1/tau).
    double tau = 0.01;
    CovarianceMode covariance_mode = CovarianceMode::shared;
    /// Online only. `shuffled` draws its permutation from `seed`.
    StreamOrder order = StreamOrder::as_given;
    bool use_bank = true;
    bool update_means = true;
    bool update_covariance = true;
    /// Prior strength on the class means; used by the iterative solver only.
    double beta = 1.0;
    std::uint64_t seed = 0;

    Mode mode = Mode::online;
    Solver solver = Solver::closed;
    int max_iters = 20;
    double tol = 1e-5;
    /// Online: admit the sample to the bank after predicting it instead of before.
    bool insert_after_predict = false;
    /// Iterative: keep the first covariance estimate instead of refreshing it every iteration.
    bool freeze_covariance = false;

    friend bool operator==(const AdaptConfig&, const AdaptConfig&) = default;
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(AdaptConfig, bank_capacity, alpha, tau, covariance_mode, order,
                                                use_bank, update_means, update_covariance, beta, seed, mode, solver,
                                                max_iters, tol, insert_after_predict, freeze_covariance)

/// Throws ConfigError naming the first violated field.
inline void validate_config(const AdaptConfig& cfg) {
    auto fail = [](const char* field) { throw Error(ErrorCode::ConfigError, field); };
    if (cfg.bank_capacity < 1) fail("bank_capacity");
    if (!(cfg.alpha >= 0.0 && cfg.alpha <= 1.0)) fail("alpha");
    if (!(cfg.tau > 0.0) || !std::isfinite(cfg.tau)) fail("tau");
    if (!(cfg.beta > 0.0) || !std::isfinite(cfg.beta)) fail("beta");
    if (cfg.max_iters < 1) fail("max_iters");
    if (!(cfg.tol > 0.0)) fail("tol");
}

struct PredictionRecord {
    Index sample_index = 0;
    SoftLabel zero_shot;
    SoftLabel adapted;
    double confidence = 0.0;
    bool bank_inserted = false;
    Index argmax_class = 0;
};

} // namespace adapt
