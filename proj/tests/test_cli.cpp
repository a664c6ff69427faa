#include <gtest/gtest.h>

#include <filesystem>
#include <sstream>

#include "essnl/cli.hpp"
#include "essnl/oracles.hpp"

using namespace essnl;

namespace {

struct CliResult {
    int status;
    std::string out, err;
};

CliResult cli(std::vector<std::string> args) {
    args.insert(args.begin(), "essnl");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    const int status = cli_main(static_cast<int>(argv.size()), argv.data(), out, err);
    return {status, out.str(), err.str()};
}

}  // namespace

TEST(Cli, ShaperInfoMatchesEnumeration) {
    const auto r = cli({"shaper-info", "--N", "4", "--k", "6"});
    ASSERT_EQ(r.status, 0) << r.err;
    const long emax = oracle::min_emax(4, 6, 8);
    const auto p = oracle::prefix_distribution(4, 8, emax, 6);
    double h = 0;
    for (double v : p)
        if (v > 0) h -= v * std::log2(v);
    std::istringstream lines(r.out);
    std::string header, row;
    std::getline(lines, header);
    std::getline(lines, row);
    std::istringstream fields(row);
    int N, k;
    long e;
    double entropy, rloss;
    fields >> N >> k >> e >> entropy >> rloss;
    EXPECT_EQ(N, 4);
    EXPECT_EQ(k, 6);
    EXPECT_EQ(e, emax);
    EXPECT_NEAR(entropy, h, 1e-6);
    EXPECT_NEAR(rloss, h - 6.0 / 4, 1e-6);
}

TEST(Cli, MissingConfigFile) {
    const auto r = cli({"--config", "/nonexistent/run.cfg", "shaper-info"});
    EXPECT_NE(r.status, 0);
    EXPECT_NE(r.err.find("/nonexistent/run.cfg"), std::string::npos);
    EXPECT_NE(r.err.find("[config]"), std::string::npos);
}

TEST(Cli, UsageErrors) {
    auto r = cli({"frobnicate"});
    EXPECT_NE(r.status, 0);
    EXPECT_NE(r.err.find("Usage"), std::string::npos);
    r = cli({"run", "--power", "0", "--bogus"});
    EXPECT_NE(r.status, 0);
    r = cli({});
    EXPECT_NE(r.status, 0);
    EXPECT_EQ(cli({"--help"}).status, 0);
}

TEST(Cli, BadOverrideIsTagged) {
    const auto r = cli({"--override", "grid.nope=1", "shaper-info", "--N", "4"});
    EXPECT_EQ(r.status, 2);
    EXPECT_NE(r.err.find("[config]"), std::string::npos);
}

TEST(Cli, RunWritesResults) {
    const auto dir = std::filesystem::path(::testing::TempDir()) / "essnl_cli_run";
    std::filesystem::remove_all(dir);
    const std::vector<std::string> args{"--out", dir.string(), "--seed", "4", "--override", "grid.num_channels=1", "shaping.N=16",
                                        "run.symbols_per_block=512", "run.blocks_per_point=1",
                                        "run.noise_min_samples=100", "run", "--N", "16", "--power", "0"};
    const auto r = cli(args);
    ASSERT_EQ(r.status, 0) << r.err;
    int csv = 0;
    for (const auto& f : std::filesystem::directory_iterator(dir)) csv += f.path().extension() == ".csv";
    EXPECT_EQ(csv, 1);
    EXPECT_NE(r.out.find("N=16"), std::string::npos);
}

TEST(Cli, StageTaggedPropagationFailure) {
    const auto dir = std::filesystem::path(::testing::TempDir()) / "essnl_cli_fail";
    const auto r = cli({"--out", dir.string(), "--override", "grid.num_channels=1", "shaping.N=16", "run.symbols_per_block=256",
                        "run.blocks_per_point=1", "run.ssfm_adaptive=false", "run.ssfm_max_phase_rad=1e-6", "run",
                        "--N", "4", "--power", "6"});
    EXPECT_EQ(r.status, 2);
    EXPECT_NE(r.err.find("[propagation]"), std::string::npos);
    EXPECT_FALSE(std::filesystem::exists(dir));
}

TEST(Cli, ValidatePasses) {
    const auto r = cli({"validate"});
    EXPECT_EQ(r.status, 0) << r.out;
    EXPECT_NE(r.out.find("all checks passed"), std::string::npos);
}
