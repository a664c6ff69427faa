#include <gtest/gtest.h>

#include <bit>
#include <map>
#include <random>

#include "essnl/mapper.hpp"
#include "essnl/oracles.hpp"
#include "essnl/shaper.hpp"

using namespace essnl;

TEST(Brgc, EightAskLabels) {
    EXPECT_EQ(brgc_label(1, 8), 0b00u);
    EXPECT_EQ(brgc_label(3, 8), 0b01u);
    EXPECT_EQ(brgc_label(5, 8), 0b11u);
    EXPECT_EQ(brgc_label(7, 8), 0b10u);
    EXPECT_THROW(brgc_label(2, 8), ConfigurationError);
    EXPECT_THROW(brgc_label(9, 8), ConfigurationError);
}

TEST(Brgc, GrayPropertyAndInverse) {
    for (int M : {4, 8, 16}) {
        for (int a = 1; a < M; a += 2) {
            EXPECT_EQ(brgc_amplitude(brgc_label(a, M), M), a);
            if (a + 2 < M) { EXPECT_EQ(std::popcount(brgc_label(a, M) ^ brgc_label(a + 2, M)), 1); }
        }
    }
}

TEST(Labels, SignBitLeads) {
    // -3 in 8-ASK: sign bit 1 followed by BRGC(3) = 01
    EXPECT_EQ(ask_label(-3, 8), 0b101u);
    EXPECT_EQ(ask_label(3, 8), 0b001u);
    EXPECT_EQ(label_bit(0b101u, 1, 3), 1);
    EXPECT_EQ(label_bit(0b101u, 2, 3), 0);
    EXPECT_EQ(label_bit(0b101u, 3, 3), 1);
    for (int v = -7; v <= 7; v += 2) EXPECT_EQ(ask_label(v, 8), oracle::ask_label(v, 8));
}

TEST(Signs, DeterministicAndBalanced) {
    EXPECT_EQ(assign_signs(1000, 42), assign_signs(1000, 42));
    EXPECT_NE(assign_signs(1000, 42), assign_signs(1000, 43));
    EXPECT_TRUE(assign_signs(0, 1).empty());
    const auto s = assign_signs(1000000, 5);
    double mean = 0;
    for (auto v : s) mean += v;
    mean /= static_cast<double>(s.size());
    // 4 sigma of the binomial mean is 4e-3
    EXPECT_LT(std::abs(mean), 4e-3);
}

namespace {
std::vector<std::int8_t> plus_signs(std::size_t n) { return std::vector<std::int8_t>(n, 1); }
}  // namespace

TEST(MapToFrame, FourDOrdering) {
    const std::vector<std::vector<int>> streams{{1, 3, 5, 7}};
    const auto f = map_to_frame(streams, plus_signs(4), MappingStrategy::four_d, 0, 0.0, 1);
    ASSERT_EQ(f.slot_count(), 1u);
    EXPECT_NEAR(std::abs(f.x[0] / f.scale - std::complex<double>(1, 3)), 0, 1e-12);
    EXPECT_NEAR(std::abs(f.y[0] / f.scale - std::complex<double>(5, 7)), 0, 1e-12);
}

TEST(MapToFrame, OneDAndTwoDOrdering) {
    const std::vector<std::vector<int>> one{{1}, {3}, {5}, {7}};
    const auto f1 = map_to_frame(one, plus_signs(4), MappingStrategy::one_d, 0, 0.0, 1);
    EXPECT_EQ(f1.ask[0], (std::array<std::int8_t, 4>{1, 3, 5, 7}));
    const std::vector<std::vector<int>> two{{1, 3}, {5, 7}};
    const auto f2 = map_to_frame(two, plus_signs(4), MappingStrategy::two_d, 0, 0.0, 1);
    EXPECT_EQ(f2.ask[0], (std::array<std::int8_t, 4>{1, 3, 5, 7}));
    std::vector<std::int8_t> signs{1, -1, -1, 1};
    const auto f3 = map_to_frame(one, signs, MappingStrategy::one_d, 0, 0.0, 1);
    EXPECT_EQ(f3.ask[0], (std::array<std::int8_t, 4>{1, -3, -5, 7}));
}

TEST(MapToFrame, RejectsMismatchedStreams) {
    const std::vector<std::vector<int>> three{{1}, {3}, {5}};
    EXPECT_THROW(map_to_frame(three, plus_signs(3), MappingStrategy::one_d, 0, 0.0, 1), ConfigurationError);
    const std::vector<std::vector<int>> ragged{{1, 3}, {5}};
    EXPECT_THROW(map_to_frame(ragged, plus_signs(4), MappingStrategy::two_d, 0, 0.0, 1), ConfigurationError);
    const std::vector<std::vector<int>> bad{{1, 3, 4, 7}};
    EXPECT_THROW(map_to_frame(bad, plus_signs(4), MappingStrategy::four_d, 0, 0.0, 1), ConfigurationError);
}

TEST(MapToFrame, PilotLayoutAndPower) {
    std::vector<int> stream(64 * 4);
    std::mt19937 rng(1);
    for (auto& a : stream) a = 2 * static_cast<int>(rng() % 4) + 1;
    const std::vector<std::vector<int>> streams{stream};
    const auto f = map_to_frame(streams, assign_signs(256, 3), MappingStrategy::four_d, 32, 3.0, 11);
    EXPECT_EQ(f.slot_count(), 66u);
    EXPECT_EQ(f.pilot_count(), 2u);
    EXPECT_TRUE(f.is_pilot(0));
    EXPECT_TRUE(f.is_pilot(33));
    double data_power = 0;
    for (std::size_t s = 0; s < f.slot_count(); ++s) {
        const double p = std::norm(f.x[s]) + std::norm(f.y[s]);
        if (f.is_pilot(s)) {
            EXPECT_NEAR(p, dbm_to_watt(3.0), 1e-15);
        } else {
            data_power += p;
        }
    }
    EXPECT_NEAR(data_power / 64 / dbm_to_watt(3.0), 1.0, 1e-3);
    const auto again = map_to_frame(streams, assign_signs(256, 3), MappingStrategy::four_d, 32, 3.0, 11);
    EXPECT_EQ(again.x, f.x);
}

TEST(MapToFrame, PowerNormalizedOnLargeShapedFrames) {
    const Shaper shaper(64, 96, AmplitudeAlphabet{8}, {});
    std::mt19937_64 rng(2);
    std::vector<int> stream;
    while (stream.size() < 4 * 4096) {
        auto b = shaper.random_block(rng);
        stream.insert(stream.end(), b.begin(), b.end());
    }
    const std::vector<std::vector<int>> streams{stream};
    const auto f = map_to_frame(streams, assign_signs(stream.size(), 9), MappingStrategy::four_d, 32, -1.0, 1);
    double p = 0;
    for (std::size_t s = 0; s < f.slot_count(); ++s)
        if (!f.is_pilot(s)) p += std::norm(f.x[s]) + std::norm(f.y[s]);
    EXPECT_NEAR(p / 4096 / dbm_to_watt(-1.0), 1.0, 1e-3);
}

TEST(MapToFrame, StrategiesShareMarginals) {
    // Same amplitude multiset arranged by each strategy gives identical
    // per-dimension-pooled histograms.
    std::vector<int> pool(4 * 96);
    std::mt19937 rng(4);
    for (auto& a : pool) a = 2 * static_cast<int>(rng() % 4) + 1;
    const auto signs = plus_signs(pool.size());
    auto histogram = [](const DualPolFrame& f) {
        std::map<int, int> h;
        for (const auto& s : f.ask)
            for (auto v : s) ++h[v];
        return h;
    };
    const std::vector<std::vector<int>> s4{pool};
    const std::vector<std::vector<int>> s2{{pool.begin(), pool.begin() + 192}, {pool.begin() + 192, pool.end()}};
    std::vector<std::vector<int>> s1;
    for (int d = 0; d < 4; ++d) s1.emplace_back(pool.begin() + 96 * d, pool.begin() + 96 * (d + 1));
    const auto h4 = histogram(map_to_frame(s4, signs, MappingStrategy::four_d, 32, 0, 1));
    EXPECT_EQ(h4, histogram(map_to_frame(s2, signs, MappingStrategy::two_d, 32, 0, 1)));
    EXPECT_EQ(h4, histogram(map_to_frame(s1, signs, MappingStrategy::one_d, 32, 0, 1)));
}

TEST(References, RecoverDataSymbols) {
    const std::vector<std::vector<int>> streams{{1, 3, 5, 7, 7, 5, 3, 1}};
    const std::vector<std::int8_t> signs{1, -1, 1, 1, -1, 1, 1, 1};
    const auto f = map_to_frame(streams, signs, MappingStrategy::four_d, 32, 0.0, 1);
    const auto r = frame_to_references(f);
    ASSERT_EQ(r.x.size(), 2u);
    EXPECT_EQ(r.x[0], f.x[1]);
    EXPECT_EQ(r.y[1], f.y[2]);
    EXPECT_NEAR(std::abs(r.x[0] / r.scale - std::complex<double>(1, -3)), 0, 1e-12);
    EXPECT_EQ(r.labels[0][1], ask_label(-3, 8));
    EXPECT_EQ(r.ask, f.ask);
}
