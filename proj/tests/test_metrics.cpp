#include <algorithm>
#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "essnl/metrics.hpp"
#include "essnl/oracles.hpp"
#include "essnl/shaper.hpp"

using namespace essnl;

namespace {

std::vector<std::complex<double>> unit_qam(std::size_t n, std::mt19937_64& rng) {
    std::vector<std::complex<double>> v(n);
    std::uniform_int_distribution<int> pick(0, 7);
    for (auto& s : v) s = std::complex<double>(2 * pick(rng) - 7, 2 * pick(rng) - 7) / std::sqrt(42.0);
    return v;
}

AmplitudeDistribution uniform4() { return {{0.25, 0.25, 0.25, 0.25}}; }

}  // namespace

TEST(Snr, KnownNoiseVariance) {
    std::mt19937_64 rng(1);
    const auto tx = unit_qam(100000, rng);
    const double sigma2 = 0.02;
    std::normal_distribution<double> g(0, std::sqrt(sigma2 / 2));
    std::vector<std::complex<double>> rx(tx.size());
    for (std::size_t i = 0; i < tx.size(); ++i) rx[i] = tx[i] + std::complex<double>(g(rng), g(rng));
    EXPECT_NEAR(effective_snr_db(tx, rx), -10 * std::log10(sigma2), 0.1);
}

TEST(Snr, ScaleAndRotationInvariant) {
    std::mt19937_64 rng(2);
    const auto tx = unit_qam(5000, rng);
    std::normal_distribution<double> g(0, 0.05);
    std::vector<std::complex<double>> noise(tx.size());
    for (auto& v : noise) v = {g(rng), g(rng)};
    std::vector<std::complex<double>> a(tx.size()), b(tx.size());
    const auto c = std::polar(2.5, 1.1);
    for (std::size_t i = 0; i < tx.size(); ++i) {
        a[i] = tx[i] + noise[i];
        b[i] = c * (tx[i] + noise[i]);
    }
    EXPECT_NEAR(effective_snr_db(tx, a), effective_snr_db(tx, b), 1e-9);
    std::vector<std::complex<double>> doubled(tx.size());
    for (std::size_t i = 0; i < tx.size(); ++i) doubled[i] = 2.0 * tx[i];
    EXPECT_EQ(effective_snr_db(tx, tx, 80), 80);
    EXPECT_EQ(effective_snr_db(tx, doubled, 80), 80);
}

TEST(Snr, Errors) {
    std::vector<std::complex<double>> zero(10), one(10, 1.0);
    EXPECT_THROW(effective_snr_db(zero, one), DegenerateEstimateError);
    EXPECT_THROW(effective_snr_db(std::vector<std::complex<double>>(3), one), AlignmentError);
}

TEST(Demapper, NoiselessAndUselessLimits) {
    const auto d = uniform4();
    const AskDemapper dm(d.probabilities, 8);
    std::mt19937_64 rng(3);
    std::vector<double> y(20000);
    std::vector<std::int8_t> x(20000);
    for (std::size_t i = 0; i < x.size(); ++i) {
        x[i] = static_cast<std::int8_t>(2 * static_cast<int>(rng() % 8) - 7);
        y[i] = x[i];
    }
    for (double h : dm.bit_entropies(y, x, 1e-4)) EXPECT_LT(h, 1e-12);
    std::normal_distribution<double> g(0, 1000);
    for (auto& v : y) v = g(rng);
    for (double h : dm.bit_entropies(y, x, 1e6)) EXPECT_NEAR(h, 1.0, 0.02);
    EXPECT_THROW(dm.bit_entropies(y, x, 0), DegenerateEstimateError);
    EXPECT_THROW(dm.bit_entropies({}, {}, 1), DegenerateEstimateError);
}

TEST(Demapper, MatchesQuadratureAt16dB) {
    const auto d = uniform4();
    const AskDemapper dm(d.probabilities, 8);
    const double sigma2 = 21.0 / db_to_linear(16);
    const auto ref = oracle::bit_entropies_quadrature(d.probabilities, 8, sigma2);
    std::mt19937_64 rng(4);
    std::normal_distribution<double> g(0, std::sqrt(sigma2));
    const std::size_t n = 200000;
    std::vector<double> y(n);
    std::vector<std::int8_t> x(n);
    for (std::size_t i = 0; i < n; ++i) {
        x[i] = static_cast<std::int8_t>(2 * static_cast<int>(rng() % 8) - 7);
        y[i] = x[i] + g(rng);
    }
    const auto mc = dm.bit_entropies(y, x, sigma2);
    for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(mc[i], ref[i], 0.005) << "level " << i;
}

TEST(Demapper, ConvergesAtRootNRate) {
    const Shaper sh(64, 96, AmplitudeAlphabet(8), Shaper::Options{});
    const auto& d = sh.distribution();
    const AskDemapper dm(d.probabilities, 8);
    const double sigma2 = mean_energy(d, AmplitudeAlphabet(8)) / db_to_linear(15);
    const auto ref = oracle::bit_entropies_quadrature(d.probabilities, 8, sigma2);
    double ref_sum = ref[0] + ref[1] + ref[2];
    std::mt19937_64 rng(5);
    std::discrete_distribution<int> amp(d.probabilities.begin(), d.probabilities.end());
    std::normal_distribution<double> g(0, std::sqrt(sigma2));
    auto err = [&](std::size_t n, int reps) {
        double sq = 0;
        for (int r = 0; r < reps; ++r) {
            std::vector<double> y(n);
            std::vector<std::int8_t> x(n);
            for (std::size_t i = 0; i < n; ++i) {
                const int a = 2 * amp(rng) + 1;
                x[i] = static_cast<std::int8_t>((rng() & 1) ? a : -a);
                y[i] = x[i] + g(rng);
            }
            const auto h = dm.bit_entropies(y, x, sigma2);
            const double e = h[0] + h[1] + h[2] - ref_sum;
            sq += e * e;
        }
        return std::sqrt(sq / reps);
    };
    const double e4 = err(10000, 20), e5 = err(100000, 20);
    // sqrt(10) expected; allow sampling slack
    EXPECT_GT(e4 / e5, 1.8);
    EXPECT_LT(e5, 0.01);
}

TEST(Air, FormulaAndNoiselessPoint) {
    const std::vector<double> h{0.1, 0.2, 0.05};
    EXPECT_DOUBLE_EQ(air_n(2.4, h, 0.3), 2 * (2.4 - 0.35 - 0.3));
    EXPECT_EQ(air_n(1.0, h, 0.7), 0.0);
    // noiseless with k/N = 1.5: 2 (H(A) + 1 - 0 - (H(A) - 1.5)) = 5
    const Shaper sh(16, 24, AmplitudeAlphabet(8), Shaper::Options{});
    const std::vector<double> zero(3, 0.0);
    EXPECT_NEAR(air_n(ask_entropy(sh.distribution()), zero, sh.rate_loss()), 5.0, 1e-12);
    EXPECT_EQ(air_n(2.0, std::vector<double>{1.2, 0.3, 0.0}, 0.5), 0.0);
}

TEST(AwgnReference, MatchesQuadratureAndIsMonotone) {
    const Shaper sh(64, 96, AmplitudeAlphabet(8), Shaper::Options{});
    std::vector<double> grid;
    for (double s = 13; s <= 17.01; s += 1) grid.push_back(s);
    const auto curve = awgn_reference(sh.distribution(), 8, grid, sh.rate_loss(), 100000, 6);
    ASSERT_EQ(curve.size(), grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const double ref = oracle::awgn_air_quadrature(sh.distribution().probabilities, 8, curve[i].snr_db, 96, 64);
        EXPECT_NEAR(curve[i].air, ref, 0.02) << grid[i] << " dB";
        if (i > 0) { EXPECT_GE(curve[i].air, curve[i - 1].air); }
    }
}

TEST(AwgnReference, LongBlockAt17dB) {
    // large-N shaped 64-QAM on AWGN at 17 dB, read off the reference curve: 4.92
    const Shaper sh(4096, 6144, AmplitudeAlphabet(8), {Arithmetic::bounded, 32});
    const double q = oracle::awgn_air_quadrature(sh.distribution().probabilities, 8, 17.0, 6144, 4096);
    EXPECT_NEAR(q, 4.92, 0.05);
    const std::vector<double> grid{17.0};
    const auto curve = awgn_reference(sh.distribution(), 8, grid, sh.rate_loss(), 100000, 7);
    EXPECT_NEAR(curve[0].air, 4.92, 0.05);
}

TEST(AwgnReference, SaturatesWithoutRateLoss) {
    const auto mb = maxwell_boltzmann(AmplitudeAlphabet(8), 1.5);
    const std::vector<double> grid{45.0};
    const auto curve = awgn_reference(mb, 8, grid, 0.0, 20000, 8);
    EXPECT_NEAR(curve[0].air, 2 * (entropy_bits(mb) + 1), 1e-3);
}

TEST(NoiseShape, IsotropicAndAnisotropic) {
    std::mt19937_64 rng(9);
    std::normal_distribution<double> g(0, 0.3);
    std::vector<std::complex<double>> tx, iso, aniso;
    for (int re = -7; re <= 7; re += 2)
        for (int im = -7; im <= 7; im += 2)
            for (int s = 0; s < 10000; ++s) {
                tx.emplace_back(re, im);
                const double a = g(rng), b = g(rng);
                iso.emplace_back(re + a, im + b);
                // 4:1 variance along the tangential direction
                const double phi = std::atan2(im, re);
                const auto e = std::polar(1.0, phi) * std::complex<double>(b, 2 * a);
                aniso.emplace_back(re + e.real(), im + e.imag());
            }
    const auto si = noise_shape(tx, iso);
    EXPECT_EQ(si.points.size(), 64u);
    EXPECT_GE(si.mean_ratio, 1.0);
    EXPECT_LE(si.mean_ratio, 1.1);
    const auto sa = noise_shape(tx, aniso);
    EXPECT_NEAR(sa.mean_ratio, 4.0, 0.4);
    EXPECT_NEAR(sa.outer_ring_ratio, 4.0, 0.4);
    EXPECT_EQ(sa.outer_ring_energy, 98);
    // 64-QAM has 9 distinct energies; (5,5), (7,1), (1,7) share one ring
    ASSERT_EQ(sa.rings.size(), 9u);
    EXPECT_EQ(sa.rings.front().energy, 2);
    EXPECT_EQ(sa.rings.front().points, 4);
    const auto ring50 = std::find_if(sa.rings.begin(), sa.rings.end(), [](const auto& r) { return r.energy == 50; });
    ASSERT_NE(ring50, sa.rings.end());
    EXPECT_EQ(ring50->points, 12);
    EXPECT_DOUBLE_EQ(sa.rings.back().ratio, sa.outer_ring_ratio);
    for (const auto& p : sa.points) EXPECT_GE(p.ratio, 1.0);

    // global rotation of the clouds leaves the ratio unchanged
    std::vector<std::complex<double>> tx_r, rx_r;
    const auto rot = std::polar(1.0, 0.4);
    for (std::size_t i = 0; i < 10000; ++i) {
        tx_r.push_back(tx[i]);
        rx_r.push_back(tx[i] + rot * (aniso[i] - tx[i]));
    }
    EXPECT_NEAR(noise_shape(tx_r, rx_r).mean_ratio, noise_shape(std::span(tx).first(10000),
                                                                std::span(aniso).first(10000)).mean_ratio, 1e-9);
}

TEST(NoiseShape, DegenerateAndSparsePointsExcluded) {
    std::vector<std::complex<double>> tx(500, {1, 1}), rx = tx;
    tx.emplace_back(7, 7);
    rx.emplace_back(7.1, 6.9);
    const auto s = noise_shape(tx, rx);
    EXPECT_TRUE(s.points.empty());
    EXPECT_EQ(s.excluded, 2u);
    EXPECT_TRUE(std::isnan(s.outer_ring_ratio));
}

TEST(OptimumPower, ParabolaAndFallbacks) {
    std::vector<std::pair<double, double>> sweep;
    for (double p = -2; p <= 6; p += 1) sweep.emplace_back(p, 20 - 0.3 * (p - 2.4) * (p - 2.4));
    auto r = find_optimum_power(sweep);
    EXPECT_TRUE(r.fitted);
    EXPECT_NEAR(r.power_dbm, 2.4, 1e-12);
    EXPECT_NEAR(r.snr_db, 20, 1e-12);

    std::vector<std::pair<double, double>> mono{{0, 10}, {1, 11}, {2, 12}};
    r = find_optimum_power(mono);
    EXPECT_FALSE(r.fitted);
    EXPECT_TRUE(r.at_boundary);
    EXPECT_EQ(r.power_dbm, 2);
    EXPECT_FALSE(r.warning.empty());

    std::vector<std::pair<double, double>> bumpy{{0, 10}, {1, 12}, {2, 11}, {3, 13}, {4, 9}};
    r = find_optimum_power(bumpy);
    EXPECT_FALSE(r.fitted);
    EXPECT_EQ(r.power_dbm, 3);
    EXPECT_FALSE(r.warning.empty());
    EXPECT_THROW(find_optimum_power({{0, 1}, {1, 2}}), ConfigurationError);
}

TEST(OptimumPower, GaussianNoiseModelCurve) {
    // 1/SNR = a/P + b P^2 with optimum (a / 2b)^(1/3)
    const double a = 1e-6, b = 50.0;
    const double p_opt = std::cbrt(a / (2 * b));
    std::vector<std::pair<double, double>> sweep;
    for (double dbm = -6; dbm <= 8; dbm += 1) {
        const double p = dbm_to_watt(dbm);
        sweep.emplace_back(dbm, -10 * std::log10(a / p + b * p * p));
    }
    const auto r = find_optimum_power(sweep);
    EXPECT_TRUE(r.fitted);
    EXPECT_NEAR(r.power_dbm, watt_to_dbm(p_opt), 0.25);
}

TEST(EyeGap, Construction) {
    std::vector<CurvePoint> low, high;
    for (double s = 10; s <= 16; s += 0.5) {
        low.push_back({s, 3 + 0.2 * s});
        high.push_back({s + 0.25, 3 + 0.2 * (s + 0.25) - 0.1});
    }
    auto g = eye_gap(low, low);
    EXPECT_NEAR(g.max_gap, 0, 1e-12);
    EXPECT_NEAR(g.mean_gap, 0, 1e-12);
    g = eye_gap(low, high);
    EXPECT_NEAR(g.max_gap, 0.1, 1e-12);
    EXPECT_NEAR(g.mean_gap, 0.1, 1e-12);
    EXPECT_NEAR(g.snr_lo, 10.25, 1e-12);
    EXPECT_NEAR(g.snr_hi, 16, 1e-12);
    std::vector<CurvePoint> far{{30, 5}, {31, 5}};
    EXPECT_THROW(eye_gap(low, far), ConfigurationError);
}
