#pragma once

// Scoring, run dispatch, the component-ablation and stream-order matrices,
// multi-seed aggregation and the JSON run report (schema: docs/REPORT.md).

#include "adapt/core_types.hpp"
#include "adapt/io.hpp"
#include "adapt/iterative.hpp"
#include "adapt/online.hpp"
#include "adapt/transductive.hpp"

#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace adapt::eval {

struct EvalReport {
    Mode mode = Mode::online;
    AdaptConfig config;
    Index n_samples = 0;
    Index n_labeled = 0;
    Index n_unlabeled = 0;
    double top1_accuracy = 0.0;
    double zero_shot_accuracy = 0.0;
    double gain = 0.0;
    std::vector<std::optional<double>> per_class_accuracy;   // empty class -> null
    std::vector<Index> bank_fill;
    std::optional<std::int64_t> wall_time_ms;
    std::optional<int> solver_iterations;
    std::optional<bool> converged;
    std::string dataset_hash;
};

/// Accuracy of adapted and zero-shot argmax against labels; label -1 is skipped.
inline EvalReport score(std::span<const PredictionRecord> records, std::span<const int> labels, Index num_classes) {
    if (records.size() != labels.size()) {
        throw Error(ErrorCode::DimensionMismatch, "records vs labels: " + std::to_string(records.size()) + " vs " +
                                                      std::to_string(labels.size()));
    }
    EvalReport r;
    r.n_samples = static_cast<Index>(records.size());
    std::vector<Index> per_n(static_cast<std::size_t>(num_classes), 0), per_ok(per_n);
    Index ok = 0, zs_ok = 0;
    for (std::size_t i = 0; i < records.size(); ++i) {
        const int y = labels[i];
        if (y < 0) {
            ++r.n_unlabeled;
            continue;
        }
        if (y >= num_classes) throw Error(ErrorCode::ClassIndexOutOfRange, "label " + std::to_string(y));
        ++r.n_labeled;
        ++per_n[static_cast<std::size_t>(y)];
        if (records[i].argmax_class == y) {
            ++ok;
            ++per_ok[static_cast<std::size_t>(y)];
        }
        if (records[i].zero_shot.argmax() == y) ++zs_ok;
    }
    if (r.n_labeled == 0) throw Error(ErrorCode::NoLabeledSamples, "no sample carries a label");
    const auto n = static_cast<double>(r.n_labeled);
    r.top1_accuracy = static_cast<double>(ok) / n;
    r.zero_shot_accuracy = static_cast<double>(zs_ok) / n;
    r.gain = r.top1_accuracy - r.zero_shot_accuracy;
    for (std::size_t k = 0; k < per_n.size(); ++k) {
        if (per_n[k] == 0) {
            r.per_class_accuracy.emplace_back(std::nullopt);
        } else {
            r.per_class_accuracy.emplace_back(static_cast<double>(per_ok[k]) / static_cast<double>(per_n[k]));
        }
    }
    return r;
}

/// Dispatches on cfg.mode and cfg.solver.
inline RunResult run(const Matrix& X, const PrototypeSet& protos, const AdaptConfig& cfg) {
    if (cfg.mode == Mode::online) {
        return cfg.solver == Solver::closed ? run_online(X, protos, cfg) : run_online_iterative(X, protos, cfg);
    }
    return cfg.solver == Solver::closed ? run_transductive(X, protos, cfg) : run_transductive_iterative(X, protos, cfg);
}

struct Evaluation {
    RunResult result;
    EvalReport report;
};

inline Evaluation evaluate(const io::Dataset& ds, const AdaptConfig& cfg) {
    const auto t0 = std::chrono::steady_clock::now();
    Evaluation ev{run(ds.features, ds.prototypes, cfg), {}};
    const auto t1 = std::chrono::steady_clock::now();
    ev.report = score(ev.result.records, ds.labels, ds.num_classes());
    ev.report.mode = cfg.mode;
    ev.report.config = cfg;
    ev.report.bank_fill = ev.result.bank.fill_counts();
    ev.report.wall_time_ms = std::chrono::duration_cast<std::chrono::milliseconds>(t1 - t0).count();
    if (cfg.solver == Solver::iterative) {
        ev.report.solver_iterations = ev.result.solver_iterations;
        ev.report.converged = ev.result.converged;
    }
    ev.report.dataset_hash = ds.feature_hash;
    return ev;
}

struct ReportOptions {
    bool timing = true;          // false writes wall_time_ms as null (reproducible bytes)
    bool predictions = false;    // per-sample argmax and adapted probabilities
};

inline nlohmann::json to_json(const EvalReport& r) {
    nlohmann::json j;
    j["mode"] = r.mode;
    j["config"] = r.config;
    j["n_samples"] = r.n_samples;
    j["n_labeled"] = r.n_labeled;
    j["n_unlabeled"] = r.n_unlabeled;
    j["top1_accuracy"] = r.top1_accuracy;
    j["zero_shot_accuracy"] = r.zero_shot_accuracy;
    j["gain"] = r.gain;
    j["per_class_accuracy"] = nlohmann::json::array();
    for (const auto& a : r.per_class_accuracy) j["per_class_accuracy"].push_back(a ? nlohmann::json(*a) : nullptr);
    j["bank_fill"] = r.bank_fill;
    j["wall_time_ms"] = r.wall_time_ms ? nlohmann::json(*r.wall_time_ms) : nullptr;
    if (r.solver_iterations) j["solver_iterations"] = *r.solver_iterations;
    if (r.converged) j["converged"] = *r.converged;
    j["dataset_hash"] = r.dataset_hash;
    return j;
}

inline nlohmann::json predictions_json(const std::vector<PredictionRecord>& records) {
    auto arr = nlohmann::json::array();
    for (const auto& rec : records) {
        const Vector& p = rec.adapted.probs();
        arr.push_back({{"index", rec.sample_index},
                       {"argmax", rec.argmax_class},
                       {"zero_shot_argmax", rec.zero_shot.argmax()},
                       {"bank_inserted", rec.bank_inserted},
                       {"adapted", std::vector<double>(p.data(), p.data() + p.size())}});
    }
    return arr;
}

inline nlohmann::json report_json(const Evaluation& ev, const ReportOptions& opt = {}) {
    EvalReport r = ev.report;
    if (!opt.timing) r.wall_time_ms.reset();
    nlohmann::json j = to_json(r);
    if (opt.predictions) j["predictions"] = predictions_json(ev.result.records);
    return j;
}

/// Structural check of a report object. Returns the list of problems (empty when valid).
inline std::vector<std::string> validate_report(const nlohmann::json& j) {
    std::vector<std::string> problems;
    auto need = [&](const char* key, auto pred, const char* what) {
        if (!j.contains(key)) {
            problems.push_back(std::string("missing ") + key);
        } else if (!pred(j.at(key))) {
            problems.push_back(std::string(key) + " must be " + what);
        }
    };
    auto is_fraction = [](const nlohmann::json& v) {
        return v.is_number() && std::isfinite(v.get<double>()) && v.get<double>() >= 0.0 && v.get<double>() <= 1.0;
    };
    if (!j.is_object()) return {"report must be an object"};
    need("mode", [](const auto& v) { return v == "online" || v == "transductive"; }, "online|transductive");
    need("config", [](const auto& v) { return v.is_object(); }, "an object");
    need("n_samples", [](const auto& v) { return v.is_number_integer() && v.template get<long long>() >= 1; },
         "a positive integer");
    need("top1_accuracy", is_fraction, "in [0,1]");
    need("zero_shot_accuracy", is_fraction, "in [0,1]");
    need("gain", [](const auto& v) { return v.is_number() && std::isfinite(v.template get<double>()); }, "finite");
    need("per_class_accuracy",
         [&](const auto& v) {
             if (!v.is_array()) return false;
             for (const auto& a : v) {
                 if (!a.is_null() && !is_fraction(a)) return false;
             }
             return true;
         },
         "an array of fractions or null");
    need("bank_fill",
         [](const auto& v) {
             if (!v.is_array()) return false;
             for (const auto& a : v) {
                 if (!a.is_number_integer() || a.template get<long long>() < 0) return false;
             }
             return true;
         },
         "an array of non-negative integers");
    need("wall_time_ms", [](const auto& v) { return v.is_null() || (v.is_number_integer() && v.template get<long long>() >= 0); },
         "a non-negative integer or null");
    need("dataset_hash", [](const auto& v) { return v.is_string() && v.template get<std::string>().size() == 64; },
         "a 64-character hex string");
    if (j.contains("solver_iterations") && !(j["solver_iterations"].is_number_integer() &&
                                             j["solver_iterations"].get<long long>() >= 1)) {
        problems.push_back("solver_iterations must be a positive integer");
    }
    if (j.contains("per_class_accuracy") && j.contains("bank_fill") && j["per_class_accuracy"].is_array() &&
        j["bank_fill"].is_array() && j["per_class_accuracy"].size() != j["bank_fill"].size()) {
        problems.push_back("per_class_accuracy and bank_fill lengths differ");
    }
    if (problems.empty()) {
        const double g = j["top1_accuracy"].get<double>() - j["zero_shot_accuracy"].get<double>();
        if (std::abs(g - j["gain"].get<double>()) > 1e-12) problems.push_back("gain != top1 - zero_shot");
    }
    return problems;
}

struct AblationRow {
    bool use_bank = false;
    bool update_means = false;
    bool update_covariance = false;
    EvalReport report;
};

/// All 8 component combinations, bank-major: (off,off,off), (off,off,on), ..., (on,on,on).
inline std::vector<AblationRow> ablation_matrix(const io::Dataset& ds, const AdaptConfig& cfg) {
    std::vector<AblationRow> rows;
    for (int mask = 0; mask < 8; ++mask) {
        AdaptConfig c = cfg;
        c.use_bank = (mask & 4) != 0;
        c.update_means = (mask & 2) != 0;
        c.update_covariance = (mask & 1) != 0;
        rows.push_back({c.use_bank, c.update_means, c.update_covariance, evaluate(ds, c).report});
    }
    return rows;
}

struct OrderingRow {
    StreamOrder order = StreamOrder::shuffled;
    EvalReport report;
};

/// shuffled(cfg.seed), easy_to_hard, hard_to_easy on the same dataset.
inline std::vector<OrderingRow> ordering_experiment(const io::Dataset& ds, const AdaptConfig& cfg) {
    if (cfg.mode != Mode::online) {
        throw Error(ErrorCode::OrderingRequiresOnline, "stream order only applies to online mode");
    }
    std::vector<OrderingRow> rows;
    for (const StreamOrder o : {StreamOrder::shuffled, StreamOrder::easy_to_hard, StreamOrder::hard_to_easy}) {
        AdaptConfig c = cfg;
        c.order = o;
        rows.push_back({o, evaluate(ds, c).report});
    }
    return rows;
}

struct Summary {
    double mean = 0.0;
    double stddev = 0.0;   // sample standard deviation (n-1); 0 for a single value
    std::size_t n = 0;
};

inline Summary summarize(std::span<const double> values) {
    Summary s;
    s.n = values.size();
    if (values.empty()) return s;
    for (const double v : values) s.mean += v;
    s.mean /= static_cast<double>(s.n);
    if (s.n > 1) {
        double ss = 0.0;
        for (const double v : values) ss += (v - s.mean) * (v - s.mean);
        s.stddev = std::sqrt(ss / static_cast<double>(s.n - 1));
    }
    return s;
}

inline nlohmann::json summary_json(const Summary& s) { return {{"mean", s.mean}, {"std", s.stddev}, {"n", s.n}}; }

namespace detail {
inline std::string pct(double fraction) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%6.2f", 100.0 * fraction);
    return buf;
}
inline const char* mark(bool on) { return on ? "  on " : "  -  "; }
} // namespace detail

inline std::string format_ablation_table(const std::vector<AblationRow>& rows) {
    std::string out = " bank  mean  cov  |  acc %   gain %\n";
    out += "-------------------+-----------------\n";
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (i == 4) out += "-------------------+-----------------\n";
        const auto& r = rows[i];
        out += std::string(detail::mark(r.use_bank)) + detail::mark(r.update_means) + detail::mark(r.update_covariance) +
               "   | " + detail::pct(r.report.top1_accuracy) + "  " + detail::pct(r.report.gain) + "\n";
    }
    return out;
}

inline std::string format_ordering_table(const std::vector<OrderingRow>& rows) {
    std::string out = "order          |  acc %   gain %\n";
    out += "---------------+-----------------\n";
    for (const auto& r : rows) {
        std::string name = nlohmann::json(r.order).get<std::string>();
        name.resize(14, ' ');
        out += name + " | " + detail::pct(r.report.top1_accuracy) + "  " + detail::pct(r.report.gain) + "\n";
    }
    return out;
}

} // namespace adapt::eval
