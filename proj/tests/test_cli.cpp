#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include <sys/wait.h>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct RunResult {
    int exit_code;
    std::string out;
    std::string err;
};

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

RunResult run(const std::string& args, const fs::path& scratch) {
    fs::path out_file = scratch / "stdout.txt";
    fs::path err_file = scratch / "stderr.txt";
    std::string cmd = std::string(SEMDETECT_BIN) + " " + args + " > " + out_file.string() +
                      " 2> " + err_file.string();
    int status = std::system(cmd.c_str());
    RunResult r;
    r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = slurp(out_file);
    r.err = slurp(err_file);
    return r;
}

class CliTest : public ::testing::Test {
protected:
    void SetUp() override {
        root_ = fs::temp_directory_path() /
                ("semdetect_cli_" + std::string(::testing::UnitTest::GetInstance()
                                                    ->current_test_info()
                                                    ->name()));
        fs::remove_all(root_);
        fs::create_directories(root_);
    }

    void TearDown() override { fs::remove_all(root_); }

    fs::path write_fixture_corpus() {
        fs::path path = root_ / "corpus.jsonl";
        std::ofstream out(path);
        const char* review_texts[2] = {
            "The paper proposes a new estimator.\nResults are strong.\n"
            "Consider adding a baseline.\nWhy was the batch size fixed?\n"
            "Overall a good fit for the venue.",
            "The paper extends prior pruning work.\nThe writing is uneven in places.\n"
            "Suggest reporting variance across seeds.\nHow sensitive is the method to "
            "initialization?\nOverall a borderline case."};
        for (int p = 0; p < 2; ++p) {
            std::string pid = "p" + std::to_string(p);
            json paper;
            paper["paper_id"] = pid;
            paper["venue"] = "ICLR";
            paper["year"] = 2024;
            paper["title"] = "Paper " + pid;
            paper["body_text"] = "Body of paper " + pid + " describing the method in detail.";
            paper["human_ratings"] = {4, 7};
            out << paper.dump() << '\n';
            int ratings[2] = {4, 7};
            for (int r = 0; r < 2; ++r) {
                json rev;
                rev["id"] = pid + "_h" + std::to_string(r);
                rev["paper_id"] = pid;
                rev["venue"] = "ICLR";
                rev["year"] = 2024;
                rev["rating"] = ratings[r];
                rev["label"] = "human";
                rev["text"] = review_texts[r];
                rev["generator_model"] = nullptr;
                rev["source_review_id"] = nullptr;
                out << rev.dump() << '\n';
            }
        }
        return path;
    }

    fs::path root_;
};

TEST_F(CliTest, IngestReportsCountsAndWritesNormalizedCorpus) {
    fs::path corpus = write_fixture_corpus();
    fs::path out = root_ / "ingest";
    RunResult r = run("ingest --corpus " + corpus.string() + " --out " + out.string(), root_);
    EXPECT_EQ(r.exit_code, 0) << r.err;
    EXPECT_NE(r.out.find("papers: 2"), std::string::npos);
    EXPECT_NE(r.out.find("human 4"), std::string::npos);
    EXPECT_TRUE(fs::exists(out / "corpus.jsonl"));
    EXPECT_FALSE(fs::exists(out / ".lock")) << "lock not released";
}

TEST_F(CliTest, LockedOutputDirectoryIsRefused) {
    fs::path corpus = write_fixture_corpus();
    fs::path out = root_ / "locked";
    fs::create_directories(out);
    std::ofstream(out / ".lock") << "";
    RunResult r = run("ingest --corpus " + corpus.string() + " --out " + out.string(), root_);
    EXPECT_EQ(r.exit_code, 4);
    EXPECT_NE(r.err.find(".lock"), std::string::npos);
}

TEST_F(CliTest, MissingConfigFileExitsWithConfigCode) {
    RunResult r = run("ingest --corpus x.jsonl --config " + (root_ / "no_such.cfg").string() +
                          " --out " + (root_ / "o").string(),
                      root_);
    EXPECT_EQ(r.exit_code, 2);
    EXPECT_NE(r.err.find("config error"), std::string::npos);
}

TEST_F(CliTest, GenerateRequiresSeed) {
    fs::path corpus = write_fixture_corpus();
    RunResult r = run("generate --corpus " + corpus.string() + " --out " +
                          (root_ / "gen").string(),
                      root_);
    EXPECT_EQ(r.exit_code, 2);
    EXPECT_NE(r.err.find("--seed"), std::string::npos);
}

TEST_F(CliTest, MissingFeatureTableExitsWithDataCode) {
    RunResult r = run("train --features " + (root_ / "absent.jsonl").string() + " --seed 1 --out " +
                          (root_ / "t").string(),
                      root_);
    EXPECT_EQ(r.exit_code, 4);
    EXPECT_NE(r.err.find("data error"), std::string::npos);
}

TEST_F(CliTest, UnreachableHttpProviderExitsWithProviderCode) {
    fs::path corpus = write_fixture_corpus();
    RunResult r = run("extract-claims --corpus " + corpus.string() +
                          " --set chat.backend=http --set chat.endpoint=http://127.0.0.1:1"
                          " --set chat.retry_count=1 --out " +
                          (root_ / "x").string(),
                      root_);
    EXPECT_EQ(r.exit_code, 3);
    EXPECT_NE(r.err.find("provider error"), std::string::npos);
}

TEST_F(CliTest, BadFeatureMaskExitsWithConfigCode) {
    fs::path corpus = write_fixture_corpus();
    RunResult r = run("featurize --corpus " + corpus.string() +
                          " --set features.mask=101 --out " + (root_ / "f").string(),
                      root_);
    EXPECT_EQ(r.exit_code, 2);
    EXPECT_NE(r.err.find("features.mask"), std::string::npos);
}

TEST_F(CliTest, FullPipelineOverStubsIsDeterministic) {
    fs::path corpus = write_fixture_corpus();

    fs::path gen = root_ / "gen";
    RunResult r = run("generate --corpus " + corpus.string() + " --seed 7 --out " + gen.string(),
                      root_);
    ASSERT_EQ(r.exit_code, 0) << r.err;
    ASSERT_TRUE(fs::exists(gen / "generated.jsonl"));

    // Merge the source corpus with the generated reviews.
    fs::path merged = root_ / "merged.jsonl";
    std::ofstream(merged) << slurp(corpus) << slurp(gen / "generated.jsonl");

    fs::path feat = root_ / "feat";
    r = run("featurize --corpus " + merged.string() + " --generate-refs --out " + feat.string(),
            root_);
    ASSERT_EQ(r.exit_code, 0) << r.err;
    ASSERT_TRUE(fs::exists(feat / "features.jsonl"));

    fs::path model_dir = root_ / "model";
    std::string train_args =
        "train --features " + (feat / "features.jsonl").string() +
        " --seed 11 --set gbdt.num_rounds=8 --set gbdt.min_samples_leaf=2"
        " --set gbdt.subsample=1.0 --out ";
    r = run(train_args + model_dir.string(), root_);
    ASSERT_EQ(r.exit_code, 0) << r.err;
    ASSERT_TRUE(fs::exists(model_dir / "model.bin"));

    // Re-training with the same seed must reproduce the model byte for byte.
    fs::path model_dir2 = root_ / "model2";
    r = run(train_args + model_dir2.string(), root_);
    ASSERT_EQ(r.exit_code, 0) << r.err;
    EXPECT_EQ(slurp(model_dir / "model.bin"), slurp(model_dir2 / "model.bin"));

    fs::path cls1 = root_ / "cls1";
    fs::path cls2 = root_ / "cls2";
    std::string classify_args = "classify --corpus " + merged.string() +
                                " --review-id p0_h0 --model " +
                                (model_dir / "model.bin").string() + " --out ";
    r = run(classify_args + cls1.string(), root_);
    ASSERT_EQ(r.exit_code, 0) << r.err;
    r = run(classify_args + cls2.string(), root_);
    ASSERT_EQ(r.exit_code, 0) << r.err;
    EXPECT_EQ(slurp(cls1 / "prediction.json"), slurp(cls2 / "prediction.json"));

    json pred = json::parse(slurp(cls1 / "prediction.json"));
    EXPECT_EQ(pred["review_id"], "p0_h0");
    double total = pred["probs"]["human"].get<double>() + pred["probs"]["refined"].get<double>() +
                   pred["probs"]["ai"].get<double>();
    EXPECT_NEAR(total, 1.0, 1e-9);

    fs::path eval = root_ / "eval";
    r = run("evaluate --features " + (feat / "features.jsonl").string() + " --model " +
                (model_dir / "model.bin").string() +
                " --seed 3 --set bootstrap.iterations=50 --out " + eval.string(),
            root_);
    ASSERT_EQ(r.exit_code, 0) << r.err;
    json report = json::parse(slurp(eval / "report.json"));
    EXPECT_TRUE(report.contains("macro_f1"));
    EXPECT_TRUE(report.contains("auc_ai_vs_rest"));
    EXPECT_TRUE(report.contains("confusion_counts"));
    EXPECT_TRUE(fs::exists(eval / "roc.csv"));
    EXPECT_TRUE(fs::exists(eval / "theta.csv"));

    fs::path sweep = root_ / "sweep";
    r = run("sweep-theta --features " + (feat / "features.jsonl").string() + " --model " +
                (model_dir / "model.bin").string() + " --out " + sweep.string(),
            root_);
    ASSERT_EQ(r.exit_code, 0) << r.err;
    std::string theta = slurp(sweep / "theta.csv");
    EXPECT_NE(theta.find("theta,coverage,selective_accuracy"), std::string::npos);
    EXPECT_NE(theta.find("0.34"), std::string::npos);
    EXPECT_NE(theta.find("0.99"), std::string::npos);
}

TEST_F(CliTest, ConfigFileFillsGapsButFlagsWin) {
    fs::path corpus = write_fixture_corpus();
    fs::path cfg = root_ / "run.cfg";
    std::ofstream(cfg) << "features.mask = bad\n";
    // The --set override takes priority over the file, so the run succeeds.
    RunResult r = run("featurize --corpus " + corpus.string() + " --config " + cfg.string() +
                          " --set features.mask=111111111 --generate-refs --out " +
                          (root_ / "f").string(),
                      root_);
    EXPECT_EQ(r.exit_code, 0) << r.err;
}

}  // namespace
