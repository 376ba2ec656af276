#include "oracles.hpp"

#include <gtest/gtest.h>

using namespace adapt;

namespace {

AdaptConfig online_cfg() {
    AdaptConfig cfg;
    cfg.mode = Mode::online;
    cfg.bank_capacity = 16;
    return cfg;
}

} // namespace

TEST(OnlineStep, ColdStartTrace) {
    std::mt19937_64 rng(1);
    const Index K = 4, d = 8;
    const auto protos = PrototypeSet::from_rows(oracle::unit_rows(rng, K, d));
    const Vector x = oracle::unit(rng, d);
    OnlineAdapter adapter(protos, online_cfg());
    const auto rec = adapter.step(x, 0);

    EXPECT_TRUE(rec.bank_inserted);
    EXPECT_EQ(adapter.bank().total_size(), 1);
    const auto& model = adapter.model();
    EXPECT_EQ(model.precision, SquareMatrix::Identity(d, d));

    // hand-built expectation
    const SoftLabel y = zero_shot(x, protos, 0.01);
    const Index k = y.argmax();
    Matrix mu = protos.matrix();
    mu.row(k) = 0.9 * x.transpose() + 0.1 * protos.row(k);
    Vector logits(K);
    for (Index c = 0; c < K; ++c) {
        logits[c] = std::log(y[c]) + mu.row(c).dot(x) - 0.5 * mu.row(c).squaredNorm() + (c == k ? y[k] * x.dot(x) : 0.0);
    }
    const Vector expect = softmax(logits);
    EXPECT_LE((rec.adapted.probs() - expect).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_EQ(rec.argmax_class, argmax(expect));
    EXPECT_NEAR(rec.confidence, oracle::neg_entropy(y.probs()), 1e-12);
}

TEST(OnlineStep, InsertAfterPredictUsesPriorModelFirst) {
    std::mt19937_64 rng(2);
    const Index K = 3, d = 6;
    const auto protos = PrototypeSet::from_rows(oracle::unit_rows(rng, K, d));
    const Vector x = oracle::unit(rng, d);
    auto cfg = online_cfg();
    cfg.insert_after_predict = true;
    OnlineAdapter adapter(protos, cfg);
    const auto rec = adapter.step(x, 0);
    const SoftLabel y = zero_shot(x, protos, 0.01);
    const auto expect = fuse(y, gda_logits(x, prior_model(protos)), BankVote{Vector::Zero(K)});
    EXPECT_LE((rec.adapted.probs() - expect.probs()).cwiseAbs().maxCoeff(), 1e-15);
    EXPECT_TRUE(rec.bank_inserted);
    EXPECT_EQ(adapter.bank().total_size(), 1);
}

TEST(OnlineStep, CurrentSampleSitsInBankWhenPredicted) {
    // Algorithm order: the sample is admitted before its own prediction, so its bank vote
    // includes the self-similarity term; the mean excludes any z-weighted term for it.
    const auto data = oracle::small_synth(3);
    auto cfg = online_cfg();
    OnlineAdapter adapter(data.protos, cfg);
    for (Index i = 0; i < 40; ++i) {
        const Vector x = data.X.row(i).transpose();
        const auto rec = adapter.step(x, i);
        if (!rec.bank_inserted) continue;
        bool found = false;
        for (const auto& e : adapter.bank().entries(rec.zero_shot.argmax())) found |= e.sample_index == i;
        ASSERT_TRUE(found);
        const auto& m = adapter.model();
        const auto expect = fuse(rec.zero_shot, gda_logits(x, m), bank_votes(x, adapter.bank()));
        ASSERT_LE((rec.adapted.probs() - expect.probs()).cwiseAbs().maxCoeff(), 1e-15);
        ASSERT_EQ(m.means, means_online(adapter.bank(), data.protos, cfg.alpha));
    }
}

TEST(OnlineStep, DimensionMismatch) {
    std::mt19937_64 rng(4);
    const auto protos = PrototypeSet::from_rows(oracle::unit_rows(rng, 3, 5));
    OnlineAdapter adapter(protos, online_cfg());
    try {
        adapter.step(Vector::Ones(4), 0);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::DimensionMismatch);
    }
}

TEST(OnlineStep, FullAblationIsPrototypeGda) {
    const auto data = oracle::small_synth(5);
    auto cfg = online_cfg();
    cfg.use_bank = cfg.update_means = cfg.update_covariance = false;
    const auto result = run_online(data.X, data.protos, cfg);
    const auto prior = prior_model(data.protos);
    for (Index i = 0; i < data.X.rows(); ++i) {
        const Vector x = data.X.row(i).transpose();
        const SoftLabel y = zero_shot(x, data.protos, cfg.tau);
        const auto expect = fuse(y, gda_logits(x, prior), BankVote{Vector::Zero(data.protos.num_classes())});
        ASSERT_EQ(result.records[static_cast<std::size_t>(i)].adapted, expect);
        ASSERT_FALSE(result.records[static_cast<std::size_t>(i)].bank_inserted);
    }
}

TEST(OnlineStep, LazyRebuildMatchesEagerRebuild) {
    const auto data = oracle::small_synth(6);
    const auto cfg = online_cfg();
    OnlineAdapter adapter(data.protos, cfg);
    KnowledgeBank bank(data.protos.num_classes(), cfg.bank_capacity, data.protos.dim());
    for (Index i = 0; i < data.X.rows(); ++i) {
        const Vector x = data.X.row(i).transpose();
        const auto rec = adapter.step(x, i);
        const SoftLabel y = zero_shot(x, data.protos, cfg.tau);
        bank.try_insert(y.argmax(), {x, y, confidence(y), static_cast<std::uint64_t>(i), i});
        const auto eager = build_model(means_online(bank, data.protos, cfg.alpha), bank, cfg.covariance_mode, true);
        const auto expect = fuse(y, gda_logits(x, eager), bank_votes(x, bank));
        ASSERT_EQ(rec.adapted, expect) << "step " << i;
    }
    EXPECT_LT(adapter.rebuilds(), adapter.steps());
}

TEST(OnlineRun, SingleSample) {
    const auto data = oracle::small_synth(7);
    const auto r = run_online(data.X.topRows(1), data.protos, online_cfg());
    ASSERT_EQ(r.records.size(), 1u);
    EXPECT_TRUE(r.records[0].adapted.valid());
    EXPECT_TRUE(r.records[0].bank_inserted);
}

TEST(OnlineRun, EmptyStreamAndDimensionErrors) {
    const auto data = oracle::small_synth(8);
    try {
        run_online(Matrix(0, data.protos.dim()), data.protos, online_cfg());
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::EmptyStream);
    }
    EXPECT_THROW(run_online(Matrix::Ones(3, data.protos.dim() + 1), data.protos, online_cfg()), Error);
}

TEST(OnlineRun, DeterministicReports) {
    const auto data = oracle::small_synth(9);
    const auto ds = synth::to_dataset(data);
    auto cfg = online_cfg();
    cfg.order = StreamOrder::shuffled;
    cfg.seed = 42;
    const auto a = eval::report_json(eval::evaluate(ds, cfg), {false, true}).dump();
    const auto b = eval::report_json(eval::evaluate(ds, cfg), {false, true}).dump();
    EXPECT_EQ(a, b);
    cfg.seed = 43;
    EXPECT_NE(a, eval::report_json(eval::evaluate(ds, cfg), {false, true}).dump());
}

TEST(OnlineRun, OrdersPermuteProcessing) {
    const auto data = oracle::small_synth(10);
    auto cfg = online_cfg();
    for (auto o : {StreamOrder::as_given, StreamOrder::shuffled, StreamOrder::easy_to_hard, StreamOrder::hard_to_easy}) {
        cfg.order = o;
        const auto r = run_online(data.X, data.protos, cfg);
        auto sorted = r.processing_order;
        std::sort(sorted.begin(), sorted.end());
        for (Index i = 0; i < data.X.rows(); ++i) ASSERT_EQ(sorted[static_cast<std::size_t>(i)], i);
        for (Index i = 0; i < data.X.rows(); ++i) ASSERT_EQ(r.records[static_cast<std::size_t>(i)].sample_index, i);
        if (o == StreamOrder::easy_to_hard || o == StreamOrder::hard_to_easy) {
            for (std::size_t s = 1; s < r.processing_order.size(); ++s) {
                const double prev = r.records[static_cast<std::size_t>(r.processing_order[s - 1])].confidence;
                const double cur = r.records[static_cast<std::size_t>(r.processing_order[s])].confidence;
                if (o == StreamOrder::easy_to_hard) ASSERT_GE(prev, cur);
                else ASSERT_LE(prev, cur);
            }
        }
    }
}

TEST(OnlineRun, BankOffIsOrderFree) {
    const auto data = oracle::small_synth(11);
    auto cfg = online_cfg();
    cfg.use_bank = false;
    const auto base = run_online(data.X, data.protos, cfg);
    for (auto o : {StreamOrder::shuffled, StreamOrder::easy_to_hard, StreamOrder::hard_to_easy}) {
        cfg.order = o;
        const auto r = run_online(data.X, data.protos, cfg);
        for (std::size_t i = 0; i < r.records.size(); ++i) ASSERT_EQ(r.records[i].adapted, base.records[i].adapted);
    }
}

TEST(OnlineRun, EasyToHardNotWorseThanHardToEasy) {
    synth::SynthSpec spec;
    spec.seed = 3;
    const auto data = synth::generate(spec);
    auto cfg = online_cfg();
    cfg.order = StreamOrder::easy_to_hard;
    const double e2h = oracle::accuracy(run_online(data.X, data.protos, cfg).records, data.labels);
    cfg.order = StreamOrder::hard_to_easy;
    const double h2e = oracle::accuracy(run_online(data.X, data.protos, cfg).records, data.labels);
    EXPECT_GE(e2h, h2e);
}

TEST(OnlineRun, CloseToTransductiveOnSyntheticStream) {
    synth::SynthSpec spec;
    spec.seed = 4;
    const auto data = synth::generate(spec);
    ASSERT_EQ(data.X.rows(), 2000);
    auto cfg = online_cfg();
    cfg.order = StreamOrder::shuffled;
    const double online = oracle::accuracy(run_online(data.X, data.protos, cfg).records, data.labels);
    cfg.mode = Mode::transductive;
    cfg.bank_capacity = default_bank_capacity(Mode::transductive);
    const double trans = oracle::accuracy(run_transductive(data.X, data.protos, cfg).records, data.labels);
    EXPECT_LE(std::abs(online - trans), 0.02) << "online " << online << " transductive " << trans;
}

TEST(OnlineRun, AdversarialInputsStayFinite) {
    std::mt19937_64 rng(12);
    const Index K = 3, d = 6;
    const auto protos = PrototypeSet::from_rows(oracle::unit_rows(rng, K, d));
    for (auto mode : {CovarianceMode::shared, CovarianceMode::per_class, CovarianceMode::identity}) {
        auto cfg = online_cfg();
        cfg.covariance_mode = mode;
        cfg.bank_capacity = 4;
        // duplicates of a single feature
        Matrix dup = Matrix::Zero(50, d);
        for (Index i = 0; i < 50; ++i) dup.row(i) = protos.row(1);
        EXPECT_TRUE(oracle::records_finite(run_online(dup, protos, cfg).records));
        // one-class stream with small noise
        Matrix one(60, d);
        for (Index i = 0; i < 60; ++i) {
            one.row(i) = (protos.row(0).transpose() + oracle::gaussian(rng, d, 0.05)).normalized().transpose();
        }
        EXPECT_TRUE(oracle::records_finite(run_online(one, protos, cfg).records));
        // features exactly on prototypes, extreme temperature
        cfg.tau = 1e-4;
        EXPECT_TRUE(oracle::records_finite(run_online(protos.matrix(), protos, cfg).records));
    }
}
