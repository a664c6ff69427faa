#pragma once

// Independent reference computations used by the test suites and by
// `essnl validate`. Nothing here calls into the trellis, the demapper or the
// split-step solver; each routine recomputes its quantity by brute force,
// quadrature or closed form.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <utility>
#include <vector>

namespace essnl::oracle {

/// All length-N sequences over {1, 3, ..., M-1} with energy <= emax, in
/// lexicographic order (odometer enumeration).
inline std::vector<std::vector<int>> sphere_sequences(int N, int M, long emax) {
    std::vector<std::vector<int>> out;
    std::vector<int> digits(static_cast<std::size_t>(N), 0);
    const int letters = M / 2;
    while (true) {
        long e = 0;
        for (int d : digits) e += static_cast<long>(2 * d + 1) * (2 * d + 1);
        if (e <= emax) {
            std::vector<int> seq;
            for (int d : digits) seq.push_back(2 * d + 1);
            out.push_back(std::move(seq));
        }
        int pos = N - 1;
        while (pos >= 0 && digits[static_cast<std::size_t>(pos)] == letters - 1) digits[static_cast<std::size_t>(pos--)] = 0;
        if (pos < 0) break;
        ++digits[static_cast<std::size_t>(pos)];
    }
    return out;
}

/// Smallest emax on the lattice N + 8j with at least 2^k sequences.
inline long min_emax(int N, int k, int M) {
    const auto all = sphere_sequences(N, M, static_cast<long>(M - 1) * (M - 1) * N);
    const std::size_t need = std::size_t{1} << k;
    for (long emax = N;; emax += 8) {
        std::size_t count = 0;
        for (const auto& s : all) {
            long e = 0;
            for (int a : s) e += static_cast<long>(a) * a;
            if (e <= emax) ++count;
        }
        if (count >= need) return emax;
        if (count == all.size()) return -1;
    }
}

/// Letter probabilities over the first 2^k sphere sequences.
inline std::vector<double> prefix_distribution(int N, int M, long emax, int k) {
    const auto all = sphere_sequences(N, M, emax);
    std::vector<double> p(static_cast<std::size_t>(M / 2), 0.0);
    const std::size_t count = std::size_t{1} << k;
    for (std::size_t i = 0; i < count; ++i)
        for (int a : all[i]) p[static_cast<std::size_t>((a - 1) / 2)] += 1.0;
    for (auto& v : p) v /= static_cast<double>(count) * N;
    return p;
}

/// Gauss-Hermite nodes and weights for weight function exp(-x^2), by Newton
/// iteration on the orthonormal Hermite recurrence.
inline std::pair<std::vector<double>, std::vector<double>> gauss_hermite(int n) {
    std::vector<double> x(static_cast<std::size_t>(n)), w(static_cast<std::size_t>(n));
    const double pim4 = 1.0 / std::pow(std::numbers::pi, 0.25);
    double z = 0;
    for (int i = 0; i < (n + 1) / 2; ++i) {
        if (i == 0) z = std::sqrt(2.0 * n + 1) - 1.85575 * std::pow(2.0 * n + 1, -0.16667);
        else if (i == 1) z -= 1.14 * std::pow(static_cast<double>(n), 0.426) / z;
        else if (i == 2) z = 1.86 * z - 0.86 * x[0];
        else if (i == 3) z = 1.91 * z - 0.91 * x[1];
        else z = 2.0 * z - x[static_cast<std::size_t>(i - 2)];
        double pp = 0;
        for (int it = 0; it < 100; ++it) {
            double p1 = pim4, p2 = 0;
            for (int j = 0; j < n; ++j) {
                const double p3 = p2;
                p2 = p1;
                p1 = z * std::sqrt(2.0 / (j + 1)) * p2 - std::sqrt(static_cast<double>(j) / (j + 1)) * p3;
            }
            pp = std::sqrt(2.0 * n) * p2;
            const double z1 = z;
            z = z1 - p1 / pp;
            if (std::abs(z - z1) <= 1e-14) break;
        }
        x[static_cast<std::size_t>(i)] = z;
        x[static_cast<std::size_t>(n - 1 - i)] = -z;
        w[static_cast<std::size_t>(i)] = 2.0 / (pp * pp);
        w[static_cast<std::size_t>(n - 1 - i)] = w[static_cast<std::size_t>(i)];
    }
    return {x, w};
}

/// Binary label of ASK point `value` (odd, |value| < M): leading bit set for
/// negative values, followed by the reflected Gray code of (|value| - 1) / 2.
inline unsigned ask_label(int value, int M) {
    int m = 0;
    while ((1 << m) < M) ++m;
    const unsigned idx = static_cast<unsigned>((std::abs(value) - 1) / 2);
    const unsigned gray = idx ^ (idx >> 1);
    return ((value < 0 ? 1u : 0u) << (m - 1)) | gray;
}

/// Per-level H(B_i | Y) for a 1D ASK channel y = x + n, n ~ N(0, sigma2),
/// prior p(x) = amplitude_probs[|x|] / 2, with the matched Gaussian demapper;
/// evaluated by Gauss-Hermite quadrature.
inline std::vector<double> bit_entropies_quadrature(const std::vector<double>& amplitude_probs, int M, double sigma2,
                                                    int nodes = 64) {
    int m = 0;
    while ((1 << m) < M) ++m;
    std::vector<int> points;
    std::vector<double> prior;
    for (int a = -(M - 1); a <= M - 1; a += 2) {
        points.push_back(a);
        prior.push_back(0.5 * amplitude_probs[static_cast<std::size_t>((std::abs(a) - 1) / 2)]);
    }
    const auto [t, w] = gauss_hermite(nodes);
    std::vector<double> h(static_cast<std::size_t>(m), 0.0);
    const double sigma = std::sqrt(sigma2);
    for (std::size_t s = 0; s < points.size(); ++s) {
        const unsigned lab = ask_label(points[s], M);
        for (std::size_t q = 0; q < t.size(); ++q) {
            const double y = points[s] + std::sqrt(2.0) * sigma * t[q];
            for (int i = 0; i < m; ++i) {
                const int bit = (lab >> (m - 1 - i)) & 1;
                double num = 0, den = 0;
                for (std::size_t r = 0; r < points.size(); ++r) {
                    const double d = y - points[r];
                    // shift by the transmitted point's metric for stability
                    const double l = prior[r] * std::exp(-(d * d - (y - points[s]) * (y - points[s])) / (2 * sigma2));
                    if (static_cast<int>((ask_label(points[r], M) >> (m - 1 - i)) & 1) == bit) num += l;
                    else den += l;
                }
                h[static_cast<std::size_t>(i)] += prior[s] * w[q] / std::sqrt(std::numbers::pi) * std::log2(1.0 + den / num);
            }
        }
    }
    return h;
}

/// AIR_N in bits/2D on the AWGN channel by quadrature; snr is E|x|^2 / E|n|^2
/// over complex symbols built from two independent ASK dimensions.
inline double awgn_air_quadrature(const std::vector<double>& amplitude_probs, int M, double snr_db, int k, int N) {
    double energy = 0, h_a = 0;
    for (std::size_t i = 0; i < amplitude_probs.size(); ++i) {
        const double a = 2.0 * i + 1;
        energy += amplitude_probs[i] * a * a;
        if (amplitude_probs[i] > 0) h_a -= amplitude_probs[i] * std::log2(amplitude_probs[i]);
    }
    const double sigma2 = energy / std::pow(10.0, snr_db / 10.0);  // per real dimension
    double sum_h = 0;
    for (double v : bit_entropies_quadrature(amplitude_probs, M, sigma2)) sum_h += v;
    const double r_loss = h_a - static_cast<double>(k) / N;
    return std::max(0.0, 2.0 * ((h_a + 1.0) - sum_h - r_loss));
}

/// Nonlinear phase of a CW field after a lossy span: gamma * P * L_eff.
inline double cw_nonlinear_phase(double gamma_per_w_m, double power_w, double alpha_per_m, double length_m) {
    const double l_eff = alpha_per_m > 0 ? (1.0 - std::exp(-alpha_per_m * length_m)) / alpha_per_m : length_m;
    return gamma_per_w_m * power_w * l_eff;
}

/// ASE-limited SNR of a chain of identical amplified spans, per channel with
/// matched filtering at the symbol rate: P / (spans * NF * G * h * nu * Rs).
inline double ase_limited_snr_db(double power_w, int spans, double gain_db, double nf_db, double wavelength_m,
                                 double symbol_rate_hz) {
    constexpr double planck = 6.62607015e-34;
    constexpr double c = 299792458.0;
    const double g = std::pow(10.0, gain_db / 10.0);
    const double nf = std::pow(10.0, nf_db / 10.0);
    const double noise = spans * nf * g * planck * (c / wavelength_m) * symbol_rate_hz;
    return 10.0 * std::log10(power_w / noise);
}

/// Fundamental soliton of the lossless scalar equation with beta2 < 0:
/// |A(t)| = sqrt(P0) sech(t / T0) at every distance, P0 = |beta2| / (gamma T0^2).
inline double soliton_peak_power(double beta2_s2_per_m, double gamma_per_w_m, double t0_s) {
    return std::abs(beta2_s2_per_m) / (gamma_per_w_m * t0_s * t0_s);
}

inline double soliton_envelope(double t_s, double peak_power_w, double t0_s) {
    return std::sqrt(peak_power_w) / std::cosh(t_s / t0_s);
}

}  // namespace essnl::oracle
