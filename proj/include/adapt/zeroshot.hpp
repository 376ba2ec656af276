#pragma once

#include "adapt/core_types.hpp"

#include <cmath>
#include <string>

namespace adapt {

/// Numerically stable softmax of `logits` (max-shifted).
inline Vector softmax(const Vector& logits) {
    const double shift = logits.maxCoeff();
    Vector e = (logits.array() - shift).exp();
    return e / e.sum();
}

/// Cosine-similarity softmax against the prototypes, logit scale 1/tau.
inline SoftLabel zero_shot(const Eigen::Ref<const Vector>& x, const PrototypeSet& protos, double tau) {
    if (x.size() != protos.dim()) {
        throw Error(ErrorCode::DimensionMismatch, "feature dim " + std::to_string(x.size()) + " vs prototype dim " +
                                                      std::to_string(protos.dim()));
    }
    const Vector logits = (protos.matrix() * x) / tau;
    return SoftLabel(softmax(logits));
}

/// Negative entropy in nats, with 0 log 0 = 0. Lies in [-ln K, 0].
inline double confidence(const SoftLabel& y) {
    double s = 0.0;
    for (Index k = 0; k < y.size(); ++k) {
        const double p = y[k];
        if (p > 0.0) s += p * std::log(p);
    }
    return s;
}

} // namespace adapt
