#include "oracles.hpp"

#include <gtest/gtest.h>

using namespace adapt;

namespace {

SoftLabel label(std::initializer_list<double> p) {
    Vector v(static_cast<Index>(p.size()));
    Index i = 0;
    for (double x : p) v[i++] = x;
    return SoftLabel(v);
}

BankVote votes_of(std::initializer_list<double> v) { return {label(v).probs()}; }

} // namespace

TEST(Votes, EmptyBankIsZero) {
    KnowledgeBank bank(3, 4, 5);
    EXPECT_EQ(bank_votes(Vector::Unit(5, 0), bank).votes, Vector::Zero(3));
}

TEST(Votes, SelfSimilarity) {
    KnowledgeBank bank(3, 4, 5);
    const Vector x = Vector::Unit(5, 2);
    bank.try_insert(0, {x, label({1, 0, 0}), 0, 0, 0});
    const auto v = bank_votes(x, bank).votes;
    EXPECT_DOUBLE_EQ(v[0], 1.0);
    EXPECT_EQ(v[1], 0.0);
    EXPECT_EQ(v[2], 0.0);
}

TEST(Votes, NegativeSimilarityClamped) {
    KnowledgeBank bank(2, 4, 3);
    bank.try_insert(0, {-Vector::Unit(3, 0), label({1, 0}), 0, 0, 0});
    Vector tilt(3);
    tilt << -0.1, 0.99, 0;
    bank.try_insert(1, {tilt.normalized(), label({0.2, 0.8}), 0, 1, 0});
    const auto v = bank_votes(Vector::Unit(3, 0), bank).votes;
    EXPECT_EQ(v[0], 0.0);
    EXPECT_EQ(v[1], 0.0);
}

TEST(Votes, BoundedByBankSize) {
    std::mt19937_64 rng(1);
    const Index K = 4, d = 6;
    KnowledgeBank bank(K, 8, d);
    for (std::uint64_t s = 0; s < 40; ++s) {
        const SoftLabel y(oracle::simplex_point(rng, K));
        bank.try_insert(y.argmax(), {oracle::unit(rng, d), y, -static_cast<double>(s), s, 0});
    }
    for (int t = 0; t < 100; ++t) {
        const auto v = bank_votes(oracle::unit(rng, d), bank).votes;
        for (Index k = 0; k < K; ++k) {
            EXPECT_GE(v[k], 0.0);
            EXPECT_LE(v[k], static_cast<double>(bank.size(k)) + 1e-12);
        }
    }
}

TEST(Fuse, ConstantGdaZeroVotesPassesPrior) {
    const auto y = label({0.1, 0.6, 0.3});
    const auto z = fuse(y, Vector::Constant(3, 4.2), votes_of({0, 0, 0}));
    EXPECT_LE((z.probs() - y.probs()).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Fuse, UniformPriorPassesGda) {
    Vector g(3);
    g << 1.0, -2.0, 0.5;
    const auto z = fuse(label({1.0 / 3, 1.0 / 3, 1.0 / 3}), g, votes_of({0, 0, 0}));
    EXPECT_LE((z.probs() - softmax(g)).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Fuse, DirectEvaluation) {
    Vector g(2);
    g << 0, 1;
    const auto z = fuse(label({0.7, 0.3}), g, votes_of({0, 0}));
    const double a = 0.7, b = 0.3 * std::exp(1.0);
    EXPECT_NEAR(z[0], a / (a + b), 1e-15);
    EXPECT_NEAR(z[1], b / (a + b), 1e-15);
    EXPECT_NEAR(z[0], 0.4619, 1e-4);
    EXPECT_NEAR(z[1], 0.5381, 1e-4);
}

TEST(Fuse, SupportPreservedAndDegenerateRejected) {
    Vector g(3);
    g << 500, -500, 800;
    const auto z = fuse(label({0.5, 0.5, 0.0}), g, votes_of({0, 0, 100}));
    EXPECT_EQ(z[2], 0.0);
    EXPECT_GT(z[1], 0.0 - 1e-300);
    EXPECT_TRUE(z.valid());
    try {
        fuse(SoftLabel(Vector::Zero(3)), g, votes_of({0, 0, 0}));
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::DegenerateInput);
    }
}

TEST(Fuse, LargeLogitsStayFinite) {
    Vector g(4);
    g << 2000, 1990, -3000, 1999.5;
    const auto z = fuse(label({0.25, 0.25, 0.25, 0.25}), g, votes_of({0, 0, 0, 0}));
    EXPECT_TRUE(z.probs().allFinite());
    EXPECT_TRUE(z.valid());
    EXPECT_EQ(z.argmax(), 0);
}

TEST(Fuse, ConstantShiftInvariance) {
    std::mt19937_64 rng(2);
    for (int t = 0; t < 200; ++t) {
        const SoftLabel y(oracle::simplex_point(rng, 6));
        const Vector g = oracle::gaussian(rng, 6, 5.0);
        const BankVote v{oracle::gaussian(rng, 6).cwiseAbs()};
        const auto a = fuse(y, g, v), b = fuse(y, (g.array() + 37.5).matrix(), v);
        ASSERT_LE((a.probs() - b.probs()).cwiseAbs().maxCoeff(), 1e-12);
    }
}

TEST(Fuse, VoteMonotonicity) {
    std::mt19937_64 rng(3);
    for (int t = 0; t < 200; ++t) {
        const SoftLabel y(oracle::simplex_point(rng, 5));
        const Vector g = oracle::gaussian(rng, 5);
        BankVote v{oracle::gaussian(rng, 5).cwiseAbs()};
        const double before = fuse(y, g, v)[2];
        v.votes[2] += 0.25;
        ASSERT_GT(fuse(y, g, v)[2], before);
    }
}

TEST(Objective, ZeroCases) {
    const auto y = label({0.2, 0.5, 0.3});
    EXPECT_NEAR(objective_z(y, y, Vector::Zero(3), votes_of({0, 0, 0})), 0.0, 1e-16);
    const auto u = label({0.25, 0.25, 0.25, 0.25});
    EXPECT_EQ(objective_z(u, u, Vector::Zero(4), votes_of({0, 0, 0, 0})), 0.0);
}

TEST(Objective, FuseIsMinimizerOverRandomSimplexPoints) {
    std::mt19937_64 rng(4);
    int violations = 0;
    for (int inst = 0; inst < 100; ++inst) {
        const Index K = 2 + inst % 9;
        const SoftLabel y(oracle::simplex_point(rng, K));
        const Vector loglik = oracle::gaussian(rng, K, 3.0);
        const BankVote v{oracle::gaussian(rng, K).cwiseAbs()};
        // fuse sees the affine logits; any class-independent offset is irrelevant
        const Vector gda = (loglik.array() - 11.0).matrix();
        const auto z = fuse(y, gda, v);
        const double best = objective_z(z, y, loglik, v);
        for (int t = 0; t < 300; ++t) {
            const SoftLabel p(oracle::simplex_point(rng, K));
            if (best > objective_z(p, y, loglik, v) + 1e-9) ++violations;
        }
    }
    EXPECT_EQ(violations, 0);
}
