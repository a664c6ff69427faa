#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "essnl/harness.hpp"
#include "essnl/oracles.hpp"

using namespace essnl;

namespace {

/// Single-channel, short-frame, short-span setup that runs in well under a second per point.
ExperimentConfig small_config(std::vector<std::string> extra = {}) {
    std::vector<std::string> o{"grid.num_channels = 1",  "run.symbols_per_block = 512", "run.blocks_per_point = 2",
                               "link.span_length_km = 20", "shaping.N = 4,16",          "sweep.power_dbm = -2,2,6",
                               "run.noise_min_samples = 100"};
    o.insert(o.end(), extra.begin(), extra.end());
    return load_config_text("", o);
}

std::string read_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::filesystem::path temp_dir(const std::string& name) {
    auto p = std::filesystem::path(::testing::TempDir()) / ("essnl_" + name);
    std::filesystem::remove_all(p);
    return p;
}

}  // namespace

TEST(Config, DefaultsAndParsing) {
    const auto c = load_config_text("");
    EXPECT_EQ(c.grid.num_channels, 5);
    EXPECT_EQ(c.shaping.blocklengths.front(), 4);
    EXPECT_EQ(c.shaping.blocklengths.back(), 4096);
    EXPECT_EQ(c.power_dbm.size(), 15u);
    EXPECT_EQ(c.samples_per_symbol(), 8);
    EXPECT_NEAR(c.link.amplifier().gain_db, 15.2, 1e-12);

    const auto d = load_config_text(R"(
        # comment line
        grid.symbol_rate_gbd = 160   # trailing comment
        grid.spacing_ghz = 175
        link.num_spans = 10
        shaping.mapping = 1d, 4d
        shaping.N = 16,64
    )");
    EXPECT_EQ(d.grid.symbol_rate_gbd, 160);
    EXPECT_EQ(d.link.num_spans, 10);
    ASSERT_EQ(d.shaping.mappings.size(), 2u);
    EXPECT_EQ(d.shaping.mappings[0], MappingStrategy::one_d);
    // multi-span default power grid
    EXPECT_EQ(d.power_dbm.front(), -4);
    EXPECT_EQ(d.power_dbm.back(), 6);
    EXPECT_EQ(d.samples_per_symbol(), 8);
}

TEST(Config, OverridesAndRanges) {
    const auto c = load_config_text("run.seed = 3\n", {"run.seed=9", "sweep.power_dbm=-1:0.5:1"});
    EXPECT_EQ(c.run.seed, 9u);
    EXPECT_EQ(c.power_dbm, (std::vector<double>{-1, -0.5, 0, 0.5, 1}));
}

TEST(Config, Errors) {
    EXPECT_THROW(load_config_text("grid.bogus = 1"), ConfigurationError);
    EXPECT_THROW(load_config_text("grid.num_channels = five"), ConfigurationError);
    EXPECT_THROW(load_config_text("no equals sign"), ConfigurationError);
    EXPECT_THROW(load_config_text("grid.num_channels = 4"), ConfigurationError);
    EXPECT_THROW(load_config_text("shaping.rate = 2.5"), InfeasibleRateError);
    EXPECT_THROW(load_config_text("shaping.N = 3"), ConfigurationError);  // does not divide the stream
    EXPECT_THROW(load_config_text("grid.spacing_ghz = 50"), ConfigurationError);
    EXPECT_THROW(load_config_file("/nonexistent/essnl.cfg"), ConfigurationError);
    EXPECT_THROW(load_config_text("", {"run.seed"}), ConfigurationError);
}

TEST(Config, ResolvedTextRoundTripsAndFingerprints) {
    const auto c = small_config();
    const auto again = load_config_text(resolved_text(c));
    EXPECT_EQ(resolved_text(again), resolved_text(c));
    EXPECT_EQ(fingerprint(again), fingerprint(c));
    EXPECT_EQ(fingerprint(c).size(), 16u);
    EXPECT_NE(fingerprint(small_config({"run.seed = 2"})), fingerprint(c));
    EXPECT_EQ(fingerprint(small_config({"run.workers = 3"})), fingerprint(c));
}

TEST(Seeds, DistinctPerPoint) {
    const auto c = small_config();
    std::set<std::uint64_t> seeds;
    for (int N : {4, 16})
        for (auto m : {MappingStrategy::one_d, MappingStrategy::two_d, MappingStrategy::four_d})
            for (double p : {-2.0, 2.0, 6.0}) seeds.insert(point_seed(c, {N, m, p}));
    EXPECT_EQ(seeds.size(), 18u);
    EXPECT_EQ(point_seed(c, {4, MappingStrategy::four_d, 2.0}), point_seed(c, {4, MappingStrategy::four_d, 2.0}));
}

TEST(RunPoint, LinearLinkMatchesAseLimit) {
    auto c = small_config({"link.gamma_per_w_km = 0", "link.span_length_km = 80", "run.symbols_per_block = 4096",
                           "run.blocks_per_point = 2"});
    ShaperCache shapers;
    const auto r = run_point(c, {16, MappingStrategy::four_d, -10}, shapers);
    const auto amp = c.link.amplifier();
    const double expected = oracle::ase_limited_snr_db(dbm_to_watt(-10), 1, amp.gain_db, amp.noise_figure_db, 1550e-9,
                                                       c.grid.symbol_rate_hz());
    EXPECT_NEAR(r.snr_db_mean, expected, 0.1);
    EXPECT_EQ(r.snr_db_per_channel.size(), 1u);
    EXPECT_EQ(r.snr_db_per_channel_pol.size(), 2u);
    EXPECT_NEAR(r.H_X, r.H_A + 1, 1e-12);
}

TEST(RunPoint, DeterministicAndSeedSensitive) {
    const auto c = small_config();
    ShaperCache shapers;
    const SweepPoint p{16, MappingStrategy::four_d, 2};
    const auto a = run_point(c, p, shapers);
    const auto b = run_point(c, p, shapers);
    EXPECT_EQ(a, b);
    const auto d = run_point(small_config({"run.seed = 5"}), p, shapers);
    EXPECT_NE(a.snr_db_mean, d.snr_db_mean);
}

TEST(RunPoint, StepHalvingConverges) {
    const std::vector<std::string> base{"grid.num_channels = 3", "link.span_length_km = 80", "run.blocks_per_point = 1",
                                        "run.symbols_per_block = 2048"};
    auto halved = base;
    halved.insert(halved.end(), {"run.ssfm_max_step_km = 0.05", "run.ssfm_max_phase_rad = 0.025"});
    ShaperCache shapers;
    const SweepPoint p{64, MappingStrategy::four_d, 9};
    const auto coarse = run_point(small_config(base), p, shapers);
    const auto fine = run_point(small_config(halved), p, shapers);
    EXPECT_LT(coarse.snr_db_mean, 25.0);  // nonlinearity dominates at this power
    EXPECT_NEAR(coarse.snr_db_mean, fine.snr_db_mean, 0.05);
}

TEST(RunPoint, StageTaggedFailure) {
    const auto c = small_config({"run.ssfm_adaptive = false", "run.ssfm_max_phase_rad = 1e-6"});
    ShaperCache shapers;
    try {
        run_point(c, {4, MappingStrategy::four_d, 6}, shapers);
        FAIL() << "expected a stage error";
    } catch (const StageError& e) {
        EXPECT_EQ(e.stage(), "propagation");
        EXPECT_NE(std::string(e.what()).find("[propagation]"), std::string::npos);
    }
}

TEST(Sweeps, WorkerCountDoesNotChangeResults) {
    const auto one = small_config();
    const auto two = small_config({"run.workers = 2"});
    ShaperCache shapers;
    const auto a = sweep_blocklength(one, shapers);
    const auto b = sweep_blocklength(two, shapers);
    ASSERT_EQ(a.sweeps.size(), 2u);
    for (std::size_t i = 0; i < a.sweeps.size(); ++i) EXPECT_EQ(a.sweeps[i].rows, b.sweeps[i].rows);
    ASSERT_EQ(a.table.size(), 2u);
    EXPECT_EQ(a.table[0].N, 4);
    EXPECT_EQ(a.table[1].N, 16);
}

TEST(Sweeps, PowerSweepBranches) {
    std::vector<MetricsRecord> rows;
    const double p_opt = 1.3;
    for (double p = -6; p <= 8; p += 1) {
        MetricsRecord r;
        r.N = 64;
        r.mapping = "4d";
        r.launch_power_dbm = p;
        r.snr_db_mean = 20 - 0.4 * (p - p_opt) * (p - p_opt);
        r.air_bits_per_2d = 3 + 0.1 * r.snr_db_mean - (p > p_opt ? 0.05 : 0.0);
        rows.push_back(r);
    }
    const auto s = analyze_power_sweep(rows);
    EXPECT_TRUE(s.optimum.fitted);
    EXPECT_NEAR(s.optimum.power_dbm, p_opt, 1e-9);
    ASSERT_TRUE(s.eye.has_value());
    EXPECT_NEAR(s.eye->max_gap, 0.05, 1e-9);
    for (const auto& r : s.rows) {
        EXPECT_EQ(r.branch, r.launch_power_dbm < p_opt ? "low" : "high");
        EXPECT_DOUBLE_EQ(r.p_opt_dbm, s.optimum.power_dbm);
    }
}

TEST(Output, CsvDeterministicAndJsonRoundTrip) {
    auto c = small_config({"shaping.N = 4"});
    c.output.dir = temp_dir("out").string();
    ShaperCache shapers;
    const auto sweep = sweep_power(c, 4, MappingStrategy::four_d, shapers);
    const auto files = emit_results(c, "sweep_power", sweep.rows, power_sweep_json(sweep));
    ASSERT_EQ(files.size(), 3u);
    const std::string csv = read_file(files[0]);
    EXPECT_EQ(csv.substr(0, csv.find(',')), "symbol_rate_gbd");
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 4);
    EXPECT_NE(files[0].find(fingerprint(c)), std::string::npos);

    // a rerun from scratch writes the same bytes
    ShaperCache fresh;
    const auto rerun = sweep_power(c, 4, MappingStrategy::four_d, fresh);
    const auto files2 = emit_results(c, "sweep_power", rerun.rows, power_sweep_json(rerun));
    EXPECT_EQ(read_file(files2[0]), csv);
    EXPECT_EQ(read_file(files2[1]), read_file(files[1]));

    auto sorted = sweep.rows;
    sort_rows(sorted);
    EXPECT_EQ(rows_from_json_text(read_file(files[1])), sorted);
    EXPECT_EQ(load_config_file(files[2]).run.seed, c.run.seed);
}

TEST(Output, EmptyAndUnwritable) {
    auto c = small_config();
    c.output.dir = temp_dir("empty").string();
    EXPECT_THROW(emit_results(c, "x", {}), Error);
    EXPECT_FALSE(std::filesystem::exists(c.output.dir));
    c.output.dir = "/proc/essnl_no_such_dir";
    MetricsRecord r;
    r.snr_db_per_channel = {1.0};
    EXPECT_THROW(emit_results(c, "x", {r}), Error);
}

TEST(Awgn, ReferenceUsesConfiguredPrior) {
    const auto c = small_config({"metrics.awgn_snr_db = 14,16", "metrics.awgn_samples = 20000"});
    ShaperCache shapers;
    const auto a = awgn_reference_for(c, 16, shapers);
    ASSERT_EQ(a.size(), 2u);
    EXPECT_LT(a[0].air, a[1].air);
    const auto mb = awgn_reference_for(small_config({"metrics.awgn_snr_db = 14,16", "metrics.awgn_samples = 20000",
                                                     "metrics.awgn_prior = maxwell_boltzmann"}),
                                       16, shapers);
    // no rate loss with the asymptotic prior
    EXPECT_GT(mb[1].air, a[1].air);
}
