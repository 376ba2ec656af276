// adapt_cli: run / synth / ablate / ordering / inspect.
// Exit codes: 0 ok, 1 usage or config error, 2 data error.

#include "adapt/adapt.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>

namespace {

using namespace adapt;

struct RunFlags {
    std::string manifest;
    std::string mode = "online";
    std::string solver = "closed";
    std::optional<int> bank_size;
    double alpha = 0.9;
    std::optional<double> tau;
    std::string cov = "shared";
    std::string order = "as_given";
    std::uint64_t seed = 0;
    bool no_bank = false;
    bool no_mean_update = false;
    bool no_cov_update = false;
    double beta = 1.0;
    int max_iters = 20;
    double tol = 1e-5;
    bool insert_after_predict = false;
    bool freeze_cov = false;
    std::string out;
    bool no_timing = false;
    bool predictions = false;
    int threads = -1;
};

const std::map<std::string, Mode> kModes{{"online", Mode::online}, {"transductive", Mode::transductive}};
const std::map<std::string, Solver> kSolvers{{"closed", Solver::closed}, {"iterative", Solver::iterative}};
const std::map<std::string, CovarianceMode> kCovs{
    {"shared", CovarianceMode::shared}, {"per_class", CovarianceMode::per_class}, {"identity", CovarianceMode::identity}};
const std::map<std::string, StreamOrder> kOrders{{"as_given", StreamOrder::as_given},
                                                 {"shuffled", StreamOrder::shuffled},
                                                 {"easy_to_hard", StreamOrder::easy_to_hard},
                                                 {"hard_to_easy", StreamOrder::hard_to_easy}};

template <typename Map>
CLI::IsMember member_of(const Map& m) {
    std::vector<std::string> keys;
    for (const auto& [k, v] : m) keys.push_back(k);
    return CLI::IsMember(keys);
}

void add_run_flags(CLI::App* sub, RunFlags& f, bool with_order = true) {
    sub->add_option("--manifest", f.manifest, "Dataset manifest (JSON)")->required();
    sub->add_option("--mode", f.mode, "online|transductive")->check(member_of(kModes))->capture_default_str();
    sub->add_option("--solver", f.solver, "closed|iterative")->check(member_of(kSolvers))->capture_default_str();
    sub->add_option("--bank-size", f.bank_size, "Bank capacity L per class [default: 16 online, 6 transductive]")
        ->check(CLI::PositiveNumber);
    sub->add_option("--alpha", f.alpha, "Mean mixing weight")->check(CLI::Range(0.0, 1.0))->capture_default_str();
    sub->add_option("--tau", f.tau, "Zero-shot temperature [default: manifest tau, else 0.01]")
        ->check(CLI::PositiveNumber);
    sub->add_option("--cov", f.cov, "shared|per_class|identity")->check(member_of(kCovs))->capture_default_str();
    if (with_order) {
        sub->add_option("--order", f.order, "as_given|shuffled|easy_to_hard|hard_to_easy")
            ->check(member_of(kOrders))
            ->capture_default_str();
    }
    sub->add_option("--seed", f.seed, "Seed for the shuffled order")->capture_default_str();
    sub->add_flag("--no-bank", f.no_bank, "Disable the knowledge bank");
    sub->add_flag("--no-mean-update", f.no_mean_update, "Keep prototypes as class means");
    sub->add_flag("--no-cov-update", f.no_cov_update, "Use identity precision");
    sub->add_option("--beta", f.beta, "Mean prior strength (iterative)")->check(CLI::PositiveNumber)->capture_default_str();
    sub->add_option("--max-iters", f.max_iters, "Iteration cap (iterative)")->check(CLI::PositiveNumber)->capture_default_str();
    sub->add_option("--tol", f.tol, "Convergence tolerance on max |dz| (iterative)")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    sub->add_flag("--insert-after-predict", f.insert_after_predict, "Online: admit a sample after predicting it");
    sub->add_flag("--freeze-cov", f.freeze_cov, "Iterative: keep the first covariance estimate");
    sub->add_option("--out", f.out, "Write JSON output here instead of stdout");
    sub->add_flag("--no-timing", f.no_timing, "Write wall_time_ms as null");
    sub->add_option("--threads", f.threads, "Worker threads (0 = auto) [default: ADAPT_THREADS]");
}

AdaptConfig config_from(const RunFlags& f, const io::Dataset& ds) {
    AdaptConfig cfg;
    cfg.mode = kModes.at(f.mode);
    cfg.solver = kSolvers.at(f.solver);
    cfg.bank_capacity = f.bank_size.value_or(default_bank_capacity(cfg.mode));
    cfg.alpha = f.alpha;
    cfg.tau = f.tau.value_or(ds.tau.value_or(AdaptConfig{}.tau));
    cfg.covariance_mode = kCovs.at(f.cov);
    cfg.order = kOrders.at(f.order);
    cfg.seed = f.seed;
    cfg.use_bank = !f.no_bank;
    cfg.update_means = !f.no_mean_update;
    cfg.update_covariance = !f.no_cov_update;
    cfg.beta = f.beta;
    cfg.max_iters = f.max_iters;
    cfg.tol = f.tol;
    cfg.insert_after_predict = f.insert_after_predict;
    cfg.freeze_covariance = f.freeze_cov;
    validate_config(cfg);
    return cfg;
}

void emit(const nlohmann::json& j, const std::string& out) {
    if (out.empty()) {
        std::cout << j.dump(2) << '\n';
        return;
    }
    std::ofstream f(out);
    if (!f) throw Error(ErrorCode::MissingFile, "cannot open for writing: " + out);
    f << j.dump(2) << '\n';
}

nlohmann::json matrix_json(const Matrix& m) {
    auto rows = nlohmann::json::array();
    for (Index i = 0; i < m.rows(); ++i) {
        std::vector<double> r(static_cast<std::size_t>(m.cols()));
        for (Index j = 0; j < m.cols(); ++j) r[static_cast<std::size_t>(j)] = m(i, j);
        rows.push_back(r);
    }
    return rows;
}

int cmd_run(const RunFlags& f) {
    const auto ds = io::load_manifest(f.manifest);
    const auto cfg = config_from(f, ds);
    const auto ev = eval::evaluate(ds, cfg);
    emit(eval::report_json(ev, {!f.no_timing, f.predictions}), f.out);
    if (!f.out.empty()) {
        std::printf("%s: top1 %.2f%%  zero-shot %.2f%%  gain %+.2f\n", f.mode.c_str(), 100.0 * ev.report.top1_accuracy,
                    100.0 * ev.report.zero_shot_accuracy, 100.0 * ev.report.gain);
    }
    return 0;
}

int cmd_ablate(const RunFlags& f) {
    const auto ds = io::load_manifest(f.manifest);
    const auto cfg = config_from(f, ds);
    const auto rows = eval::ablation_matrix(ds, cfg);
    nlohmann::json j{{"dataset_hash", ds.feature_hash}, {"rows", nlohmann::json::array()}};
    for (auto row : rows) {
        if (f.no_timing) row.report.wall_time_ms.reset();
        j["rows"].push_back({{"use_bank", row.use_bank},
                             {"update_means", row.update_means},
                             {"update_covariance", row.update_covariance},
                             {"report", eval::to_json(row.report)}});
    }
    std::cerr << eval::format_ablation_table(rows);
    emit(j, f.out);
    return 0;
}

int cmd_ordering(const RunFlags& f) {
    const auto ds = io::load_manifest(f.manifest);
    const auto cfg = config_from(f, ds);
    const auto rows = eval::ordering_experiment(ds, cfg);
    nlohmann::json j{{"dataset_hash", ds.feature_hash}, {"rows", nlohmann::json::array()}};
    for (auto row : rows) {
        if (f.no_timing) row.report.wall_time_ms.reset();
        j["rows"].push_back({{"order", row.order}, {"report", eval::to_json(row.report)}});
    }
    std::cerr << eval::format_ordering_table(rows);
    emit(j, f.out);
    return 0;
}

int cmd_inspect(const RunFlags& f, const std::string& dump_dir) {
    const auto ds = io::load_manifest(f.manifest);
    const auto cfg = config_from(f, ds);
    const auto ev = eval::evaluate(ds, cfg);
    const auto& m = ev.result.model;
    nlohmann::json j{{"config", cfg},
                     {"bank", ev.result.bank.to_json()},
                     {"bank_fill", ev.result.bank.fill_counts()},
                     {"n_bank", m.n_bank},
                     {"log_det_precision", m.log_det_precision},
                     {"covariance_trace", m.covariance.size() ? m.covariance.trace() : 0.0},
                     {"means", matrix_json(m.means)},
                     {"gda_bias", std::vector<double>(m.gda_bias.data(), m.gda_bias.data() + m.gda_bias.size())}};
    if (!dump_dir.empty()) {
        std::filesystem::create_directories(dump_dir);
        const std::filesystem::path dir = dump_dir;
        io::write_embeddings(dir / "means.adpt", m.means);
        io::write_embeddings(dir / "covariance.adpt", Matrix(m.covariance));
        io::write_embeddings(dir / "precision.adpt", Matrix(m.precision));
        j["dump_dir"] = dump_dir;
    }
    emit(j, f.out);
    return 0;
}

int cmd_synth(const synth::SynthSpec& spec, const std::string& out_dir) {
    const auto data = synth::generate(spec);
    const auto files = synth::write_synth(data, out_dir);
    const auto oracle = synth::oracle_summary(data);
    std::ofstream(std::filesystem::path(out_dir) / "synth.json")
        << nlohmann::json{{"spec", spec},
                          {"bayes_accuracy", oracle.normalized_accuracy},
                          {"bayes_accuracy_raw", oracle.raw_accuracy},
                          {"bayes_normalization_delta", oracle.delta()}}
               .dump(2)
        << '\n';
    std::printf("wrote %s (N=%lld, d=%lld, K=%lld); Bayes oracle %.2f%% (raw %.2f%%)\n",
                files.manifest.string().c_str(), static_cast<long long>(data.X.rows()),
                static_cast<long long>(spec.d), static_cast<long long>(spec.K), 100.0 * oracle.normalized_accuracy,
                100.0 * oracle.raw_accuracy);
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Backpropagation-free test-time adaptation over precomputed embeddings"};
    app.require_subcommand(1);

    RunFlags run_flags, ablate_flags, ordering_flags, inspect_flags;
    auto* run = app.add_subcommand("run", "Adapt a dataset and write a JSON report");
    add_run_flags(run, run_flags);
    run->add_flag("--predictions", run_flags.predictions, "Include per-sample predictions in the report");

    auto* ablate = app.add_subcommand("ablate", "Bank / mean / covariance ablation matrix (8 rows)");
    add_run_flags(ablate, ablate_flags);

    auto* ordering = app.add_subcommand("ordering", "Online stream-order comparison (3 rows)");
    add_run_flags(ordering, ordering_flags, false);

    std::string dump_dir;
    auto* inspect = app.add_subcommand("inspect", "Dump bank contents and model state after a run");
    add_run_flags(inspect, inspect_flags);
    inspect->add_option("--dump-dir", dump_dir, "Also write means/covariance/precision as ADPT files here");

    synth::SynthSpec spec;
    std::string out_dir;
    auto* syn = app.add_subcommand("synth", "Write a synthetic Gaussian-mixture dataset");
    syn->add_option("--K", spec.K, "Classes")->check(CLI::Range(2, 1 << 20))->capture_default_str();
    syn->add_option("--d", spec.d, "Dimension")->check(CLI::Range(2, 1 << 20))->capture_default_str();
    syn->add_option("--n-per-class", spec.n_per_class, "Samples per class")->check(CLI::PositiveNumber)->capture_default_str();
    syn->add_option("--mean-separation", spec.mean_separation, "Min distance between unit means")->capture_default_str();
    syn->add_option("--prototype-noise", spec.prototype_noise, "Per-coordinate prototype shift std")->capture_default_str();
    syn->add_option("--covariance-condition", spec.covariance_condition, "Condition number of the shared covariance")
        ->capture_default_str();
    syn->add_option("--noise-scale", spec.noise_scale, "RMS sample noise norm")->capture_default_str();
    syn->add_option("--seed", spec.seed, "Seed")->capture_default_str();
    syn->add_option("--out-dir", out_dir, "Output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: " << e.what() << '\n';
        const CLI::App* failed = &app;
        for (auto* s : {run, ablate, ordering, inspect, syn}) {
            if (s->parsed()) failed = s;
        }
        std::cerr << failed->help();
        return 1;
    }

    auto pick = [&]() -> const RunFlags* {
        if (run->parsed()) return &run_flags;
        if (ablate->parsed()) return &ablate_flags;
        if (ordering->parsed()) return &ordering_flags;
        if (inspect->parsed()) return &inspect_flags;
        return nullptr;
    };
    try {
        if (const RunFlags* f = pick(); f && f->threads >= 0) parallel::set_thread_count(f->threads);
        if (run->parsed()) return cmd_run(run_flags);
        if (ablate->parsed()) return cmd_ablate(ablate_flags);
        if (ordering->parsed()) return cmd_ordering(ordering_flags);
        if (inspect->parsed()) return cmd_inspect(inspect_flags, dump_dir);
        if (syn->parsed()) return cmd_synth(spec, out_dir);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return e.code() == ErrorCode::ConfigError ? 1 : 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 1;
}
