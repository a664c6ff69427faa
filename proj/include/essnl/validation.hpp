// Analytic-oracle self checks run by `essnl validate`.
#pragma once

#include <cmath>
#include <complex>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "essnl/fft.hpp"
#include "essnl/fiber.hpp"
#include "essnl/harness.hpp"
#include "essnl/metrics.hpp"
#include "essnl/oracles.hpp"
#include "essnl/shaper.hpp"

namespace essnl {

struct CheckResult {
    std::string name;
    bool passed = false;
    double value = 0;  ///< measured deviation
    double limit = 0;  ///< pass threshold on value
    std::string detail;
};

namespace detail {

inline Waveform bandlimited_noise(std::size_t n, double fs, double power, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g(0, std::sqrt(power / 4));
    Waveform w;
    w.sample_rate = fs;
    for (std::size_t i = 0; i < n; ++i) {
        w.x.emplace_back(g(rng), g(rng));
        w.y.emplace_back(g(rng), g(rng));
    }
    const Fft fft(n);
    for (auto* pol : {&w.x, &w.y}) {
        fft.forward(*pol);
        for (std::size_t k = n / 4; k < n - n / 4; ++k) (*pol)[k] = 0;
        fft.inverse_normalized(*pol);
    }
    return w;
}

inline double relative_error(const Waveform& a, const Waveform& b) {
    double num = 0, den = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        num += std::norm(a.x[i] - b.x[i]) + std::norm(a.y[i] - b.y[i]);
        den += std::norm(b.x[i]) + std::norm(b.y[i]);
    }
    return std::sqrt(num / den);
}

inline CheckResult check(std::string name, double value, double limit, std::string detail = {}) {
    return {std::move(name), value <= limit, value, limit, std::move(detail)};
}

/// Worst mismatch between the shaper and brute-force enumeration; 0 when identical.
inline double shaper_vs_enumeration(int N, int k, int M) {
    const AmplitudeAlphabet alph(M);
    const Shaper shaper(N, k, alph, Shaper::Options{});
    const long emax = oracle::min_emax(N, k, M);
    if (shaper.max_energy() != emax) return 1.0;
    const auto all = oracle::sphere_sequences(N, M, emax);
    const std::size_t count = std::size_t{1} << k;
    for (std::size_t i = 0; i < count; ++i) {
        const auto block = shaper.shape(BigInt{i});
        if (block.amplitudes != all[i] || shaper.deshape(block.amplitudes) != BigInt{i}) return 1.0;
    }
    const auto p = oracle::prefix_distribution(N, M, emax, k);
    double worst = 0;
    for (std::size_t i = 0; i < p.size(); ++i) worst = std::max(worst, std::abs(p[i] - shaper.distribution()[i]));
    return worst;
}

}  // namespace detail

/// Each check compares a library result against an independent closed form or
/// exhaustive enumeration; all run in a few seconds.
inline std::vector<CheckResult> run_validation(const std::function<void(const CheckResult&)>& progress = {}) {
    std::vector<CheckResult> out;
    auto add = [&](CheckResult r) {
        if (progress) progress(r);
        out.push_back(std::move(r));
    };
    auto guarded = [&](const std::string& name, const std::function<CheckResult()>& f) {
        try {
            add(f());
        } catch (const std::exception& e) {
            add({name, false, NAN, 0, e.what()});
        }
    };

    for (auto [N, k, M] : {std::tuple{4, 6, 8}, {5, 8, 8}, {6, 9, 8}, {4, 3, 4}, {3, 5, 16}}) {
        const std::string name = "shaper.enumeration N=" + std::to_string(N) + " k=" + std::to_string(k) +
                                 " M=" + std::to_string(M);
        guarded(name, [&] { return detail::check(name, detail::shaper_vs_enumeration(N, k, M), 1e-12); });
    }

    guarded("shaper.bounded-roundtrip", [] {
        const Shaper s(96, 144, AmplitudeAlphabet(8), {Arithmetic::bounded, 32});
        std::mt19937_64 rng(7);
        double failures = 0;
        for (int i = 0; i < 200; ++i) {
            const auto idx = random_index(144, rng);
            if (s.deshape(s.shape(idx).amplitudes) != idx) ++failures;
        }
        return detail::check("shaper.bounded-roundtrip", failures, 0, "200 random indices, N=96");
    });

    guarded("ssfm.lossless-energy", [] {
        SpanParams s;
        s.attenuation_db_per_km = 0;
        s.length_km = 20;
        const auto w = detail::bandlimited_noise(4096, 400e9, 0.05, 2);
        const auto o = ssfm_span(w, s, {});
        return detail::check("ssfm.lossless-energy", std::abs(o.energy() / w.energy() - 1), 1e-9);
    });

    guarded("ssfm.cw-phase", [] {
        SpanParams s;
        const double p = 0.05;
        Waveform w;
        w.sample_rate = 100e9;
        w.x.assign(256, std::sqrt(p));
        w.y.assign(256, 0);
        const auto o = ssfm_span(w, s, {});
        const double expected = oracle::cw_nonlinear_phase(s.gamma_per_w_m() * 8 / 9, p, s.alpha_per_m(), s.length_m());
        return detail::check("ssfm.cw-phase", std::abs(std::arg(o.x[100]) - expected), 1e-3,
                             "expected " + std::to_string(expected) + " rad");
    });

    guarded("ssfm.soliton", [] {
        SpanParams s;
        s.attenuation_db_per_km = 0;
        const double t0 = 10e-12;
        s.length_km = 5 * t0 * t0 / std::abs(s.beta2_s2_per_m()) / 1e3;
        const double p0 = oracle::soliton_peak_power(s.beta2_s2_per_m(), s.gamma_per_w_m(), t0);
        const std::size_t n = 2048;
        Waveform w;
        w.sample_rate = 1e12;
        for (std::size_t i = 0; i < n; ++i) {
            w.x.emplace_back(oracle::soliton_envelope((static_cast<double>(i) - n / 2.0) / w.sample_rate, p0, t0));
            w.y.emplace_back(0);
        }
        StepPolicy pol;
        pol.model = NonlinearModel::scalar;
        pol.max_step_km = 0.05;
        const auto o = ssfm_span(w, s, pol);
        double worst = 0;
        for (std::size_t i = 0; i < n; ++i) worst = std::max(worst, std::abs(std::abs(o.x[i]) - std::abs(w.x[i])));
        return detail::check("ssfm.soliton", worst / std::sqrt(p0), 1e-3, "five dispersion lengths");
    });

    guarded("cdc.inverse", [] {
        SpanParams s;
        s.gamma_per_w_km = 0;
        const auto w = detail::bandlimited_noise(4096, 400e9, 1e-3, 6);
        const auto o = cd_compensate(ssfm_span(w, s, {}), s.beta2_s2_per_m() * s.length_m());
        Waveform ref = w;
        const double a = std::exp(-s.alpha_per_m() * s.length_m() / 2);
        for (auto* pol : {&ref.x, &ref.y})
            for (auto& v : *pol) v *= a;
        return detail::check("cdc.inverse", detail::relative_error(o, ref), 1e-6);
    });

    guarded("awgn.air-vs-quadrature", [] {
        const int N = 64, k = 96, M = 8;
        const Shaper s(N, k, AmplitudeAlphabet(M), Shaper::Options{});
        const std::vector<double> grid{15.0};
        const auto mc = awgn_reference(s.distribution(), M, grid, s.rate_loss(), 400000, 11);
        const double q = oracle::awgn_air_quadrature(s.distribution().probabilities, M, 15.0, k, N);
        return detail::check("awgn.air-vs-quadrature", std::abs(mc[0].air - q), 0.02,
                             "quadrature " + std::to_string(q) + " bits/2D at 15 dB");
    });

    guarded("link.ase-limit", [] {
        const auto c = load_config_text("", {"grid.num_channels = 1", "link.gamma_per_w_km = 0", "shaping.N = 16",
                                             "run.symbols_per_block = 4096", "run.blocks_per_point = 2",
                                             "run.noise_min_samples = 100"});
        ShaperCache shapers;
        const auto r = run_point(c, {16, MappingStrategy::four_d, -10}, shapers);
        const auto amp = c.link.amplifier();
        const double expected = oracle::ase_limited_snr_db(dbm_to_watt(-10), 1, amp.gain_db, amp.noise_figure_db,
                                                           c.link.span.wavelength_nm * 1e-9, c.grid.symbol_rate_hz());
        return detail::check("link.ase-limit", std::abs(r.snr_db_mean - expected), 0.2,
                             "expected " + std::to_string(expected) + " dB");
    });
    return out;
}

}  // namespace essnl
