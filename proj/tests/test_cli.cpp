#include "oracles.hpp"

#include <gtest/gtest.h>

#include <sys/wait.h>

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace adapt;
namespace fs = std::filesystem;

namespace {

struct Out {
    int code;
    std::string text;
};

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

class Cli : public ::testing::Test {
protected:
    static void SetUpTestSuite() {
        root_ = fs::temp_directory_path() / "adapt_cli_test";
        fs::remove_all(root_);
        fs::create_directories(root_);
        data_ = synth::write_synth(oracle::small_synth(21), root_ / "data").manifest;
    }
    static void TearDownTestSuite() { fs::remove_all(root_); }

    static Out cli(const std::string& args) {
        const fs::path log = root_ / "log.txt";
        const std::string cmd = std::string(ADAPT_CLI_PATH) + " " + args + " > " + log.string() + " 2>&1";
        const int status = std::system(cmd.c_str());
        return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(log)};
    }

    static fs::path root_;
    static fs::path data_;
};

fs::path Cli::root_;
fs::path Cli::data_;

} // namespace

TEST_F(Cli, HelpListsFlagsWithDefaults) {
    const auto r = cli("run --help");
    EXPECT_EQ(r.code, 0);
    for (const char* s : {"--manifest", "--mode", "--bank-size", "16 online, 6 transductive", "--alpha", "0.9", "--tau",
                          "--cov", "--order", "--no-bank", "--no-mean-update", "--no-cov-update", "--solver", "--beta",
                          "--max-iters", "--tol", "--seed", "--out"}) {
        EXPECT_NE(r.text.find(s), std::string::npos) << s;
    }
}

TEST_F(Cli, ExitCodes) {
    const auto missing = cli("run --manifest " + (root_ / "nope.json").string());
    EXPECT_EQ(missing.code, 2);
    EXPECT_NE(missing.text.find("MissingFile"), std::string::npos) << missing.text;
    EXPECT_EQ(cli("run").code, 1);
    EXPECT_EQ(cli("run --manifest " + data_.string() + " --mode batch").code, 1);
    EXPECT_EQ(cli("frobnicate").code, 1);
    EXPECT_EQ(cli("ordering --manifest " + data_.string() + " --mode transductive").code, 2);
}

TEST_F(Cli, RunMatchesLibraryByteForByte) {
    const fs::path out = root_ / "report.json";
    const auto r = cli("run --manifest " + data_.string() + " --mode transductive --no-timing --out " + out.string());
    ASSERT_EQ(r.code, 0) << r.text;
    const auto text = slurp(out);
    const auto j = nlohmann::json::parse(text);
    EXPECT_EQ(j["mode"], "transductive");
    EXPECT_EQ(j["config"]["bank_capacity"], 6);
    EXPECT_TRUE(eval::validate_report(j).empty());

    const auto ds = io::load_manifest(data_);
    AdaptConfig cfg;
    cfg.mode = Mode::transductive;
    cfg.bank_capacity = 6;
    EXPECT_EQ(text, eval::report_json(eval::evaluate(ds, cfg), {false, false}).dump(2) + "\n");
}

TEST_F(Cli, RunStdoutAndPredictions) {
    const auto r = cli("run --manifest " + data_.string() + " --predictions --no-timing");
    ASSERT_EQ(r.code, 0) << r.text;
    const auto j = nlohmann::json::parse(r.text);
    EXPECT_EQ(j["mode"], "online");
    EXPECT_EQ(j["config"]["bank_capacity"], 16);
    EXPECT_EQ(j["predictions"].size(), static_cast<std::size_t>(j["n_samples"].get<int>()));
}

TEST_F(Cli, OrderFlagMatchesOrderingExperiment) {
    const fs::path run_out = root_ / "e2h.json", ord_out = root_ / "ordering.json";
    ASSERT_EQ(cli("run --manifest " + data_.string() + " --order easy_to_hard --no-timing --out " + run_out.string()).code,
              0);
    ASSERT_EQ(cli("ordering --manifest " + data_.string() + " --no-timing --out " + ord_out.string()).code, 0);
    const auto run = nlohmann::json::parse(slurp(run_out));
    const auto ord = nlohmann::json::parse(slurp(ord_out));
    ASSERT_EQ(ord["rows"].size(), 3u);
    EXPECT_EQ(ord["rows"][1]["order"], "easy_to_hard");
    EXPECT_EQ(ord["rows"][1]["report"]["top1_accuracy"], run["top1_accuracy"]);
    EXPECT_EQ(ord["rows"][1]["report"]["config"], run["config"]);
}

TEST_F(Cli, AblateEmitsEightRows) {
    const fs::path out = root_ / "ablate.json";
    const auto r = cli("ablate --manifest " + data_.string() + " --order shuffled --out " + out.string());
    ASSERT_EQ(r.code, 0) << r.text;
    const auto j = nlohmann::json::parse(slurp(out));
    ASSERT_EQ(j["rows"].size(), 8u);
    for (const auto& row : j["rows"]) EXPECT_TRUE(eval::validate_report(row["report"]).empty());
    EXPECT_NE(r.text.find("acc %"), std::string::npos);
}

TEST_F(Cli, InspectDumpsModel) {
    const fs::path dump = root_ / "dump", out = root_ / "inspect.json";
    const auto r = cli("inspect --manifest " + data_.string() + " --dump-dir " + dump.string() + " --out " + out.string());
    ASSERT_EQ(r.code, 0) << r.text;
    const auto j = nlohmann::json::parse(slurp(out));
    EXPECT_EQ(j["bank"].size(), 5u);
    const Matrix means = io::load_embeddings(dump / "means.adpt", nullptr, false);
    EXPECT_EQ(means.rows(), 5);
    EXPECT_EQ(io::load_embeddings(dump / "precision.adpt", nullptr, false).rows(), 16);
}

TEST_F(Cli, SynthWritesLoadableDataset) {
    const fs::path dir = root_ / "syn";
    const auto r = cli("synth --K 3 --d 8 --n-per-class 10 --seed 4 --out-dir " + dir.string());
    ASSERT_EQ(r.code, 0) << r.text;
    const auto ds = io::load_manifest(dir / "manifest.json");
    EXPECT_EQ(ds.size(), 30);
    EXPECT_EQ(ds.num_classes(), 3);
    const auto meta = nlohmann::json::parse(slurp(dir / "synth.json"));
    EXPECT_GT(meta["bayes_accuracy"].get<double>(), 0.0);
    EXPECT_EQ(cli("synth --K 6 --d 2 --mean-separation 1.9 --out-dir " + (root_ / "bad").string()).code, 2);
}
