#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

namespace fs = std::filesystem;

namespace {

const char* const kTinyConfig =
    "data.train_identities = 12\n"
    "data.eval_identities = 6\n"
    "data.samples_per_identity = 8\n"
    "data.observation_dim = 24\n"
    "data.pose_dim = 4\n"
    "model.hidden_dim = 16\n"
    "model.feature_dim = 8\n"
    "batch = 32\n"
    "pretrain.epochs = 2\n"
    "pretrain.decay_epochs = 1\n"
    "finetune.epochs = 1\n"
    "finetune.batch = 32\n"
    "eval.pairs = 60\n";

struct CliResult {
    int code;
    std::string output;
};

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

class Cli : public ::testing::Test {
protected:
    void SetUp() override {
        dir_ = fs::temp_directory_path() /
               ("fspfm_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
        fs::remove_all(dir_);
        fs::create_directories(dir_);
        std::ofstream(dir_ / "tiny.cfg") << kTinyConfig;
    }
    void TearDown() override { fs::remove_all(dir_); }

    CliResult run(const std::string& args) {
        const fs::path log = dir_ / "log.txt";
        const std::string cmd = std::string(FSPFM_CLI_PATH) + " " + args + " --config " + (dir_ / "tiny.cfg").string() +
                                " --out " + out().string() + " > " + log.string() + " 2>&1";
        const int status = std::system(cmd.c_str());
        return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(log)};
    }
    fs::path out() const { return dir_ / "run"; }

    fs::path dir_;
};

}  // namespace

TEST_F(Cli, FinetuneWithoutStageOneNamesTheMissingFile) {
    ASSERT_EQ(run("gen-data").code, 0);
    const CliResult r = run("finetune");
    EXPECT_NE(r.code, 0);
    EXPECT_NE(r.output.find("dependency"), std::string::npos) << r.output;
    EXPECT_NE(r.output.find("stage1.ckpt"), std::string::npos) << r.output;
    EXPECT_FALSE(fs::exists(out() / "stage2.ckpt"));
}

TEST_F(Cli, PretrainWithoutDataFails) {
    const CliResult r = run("pretrain");
    EXPECT_NE(r.code, 0);
    EXPECT_NE(r.output.find("dataset.bin"), std::string::npos) << r.output;
}

TEST_F(Cli, RefusesToOverwrite) {
    ASSERT_EQ(run("gen-data").code, 0);
    const std::string before = slurp(out() / "dataset.bin");
    const CliResult again = run("gen-data");
    EXPECT_NE(again.code, 0);
    EXPECT_NE(again.output.find("exists"), std::string::npos) << again.output;
    EXPECT_EQ(run("gen-data --overwrite").code, 0);
    EXPECT_EQ(slurp(out() / "dataset.bin"), before);
}

TEST_F(Cli, FullPipelineWritesManifestAndReport) {
    ASSERT_EQ(run("gen-data").code, 0);
    ASSERT_EQ(run("pretrain").code, 0);
    ASSERT_EQ(run("finetune").code, 0);
    const CliResult ev = run("eval");
    ASSERT_EQ(ev.code, 0) << ev.output;

    const std::string kv = slurp(out() / "report.kv");
    EXPECT_NE(kv.find("cross_pose"), std::string::npos) << kv;
    EXPECT_TRUE(fs::exists(out() / "report.txt"));

    std::ifstream manifest(out() / "manifest.jsonl");
    std::string line;
    std::vector<std::string> stages;
    while (std::getline(manifest, line)) {
        const auto j = nlohmann::json::parse(line);
        const std::string digest = j.at("sha256");
        EXPECT_EQ(digest.size(), 64u);
        EXPECT_EQ(digest.find_first_not_of("0123456789abcdef"), std::string::npos);
        EXPECT_TRUE(j.contains("seed"));
        EXPECT_TRUE(j.contains("config_digest"));
        stages.push_back(j.at("stage"));
    }
    EXPECT_EQ(stages, (std::vector<std::string>{"gen-data", "pretrain", "finetune", "eval", "eval"}));
}

TEST_F(Cli, SeedOverrideChangesCheckpoint) {
    ASSERT_EQ(run("gen-data").code, 0);
    ASSERT_EQ(run("pretrain").code, 0);
    const std::string a = slurp(out() / "stage1.ckpt");
    ASSERT_EQ(run("pretrain --overwrite").code, 0);
    EXPECT_EQ(slurp(out() / "stage1.ckpt"), a);
    ASSERT_EQ(run("pretrain --overwrite --seed 5").code, 0);
    EXPECT_NE(slurp(out() / "stage1.ckpt"), a);
}

TEST_F(Cli, AblateEmitsFiveRowsAndCheckpoints) {
    ASSERT_EQ(run("gen-data").code, 0);
    const CliResult r = run("ablate");
    ASSERT_EQ(r.code, 0) << r.output;
    const std::string kv = slurp(out() / "ablation" / "report.kv");
    int rows = 0;
    for (std::size_t pos = 0; (pos = kv.find(".cross_pose.accuracy", pos)) != std::string::npos; ++pos) ++rows;
    EXPECT_EQ(rows, 5) << kv;
    for (const char* slug : {"baseline", "synthetic", "fspfm", "ft", "ft_ada"})
        EXPECT_TRUE(fs::exists(out() / "ablation" / (std::string(slug) + ".ckpt"))) << slug;
}

TEST_F(Cli, BadConfigExitsWithConfigError) {
    std::ofstream(dir_ / "tiny.cfg", std::ios::app) << "lambda = -1\n";
    const CliResult r = run("gen-data");
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.output.find("error: config"), std::string::npos) << r.output;
}
