#pragma once

// Effective SNR, bit-metric AIR with a Gaussian auxiliary channel, AWGN
// reference curves, noise-cloud shape statistics, optimum launch power and
// the SNR-vs-AIR eye between the two launch-power branches.

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstdint>
#include <limits>
#include <map>
#include <numbers>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "essnl/errors.hpp"
#include "essnl/mapper.hpp"
#include "essnl/shaper.hpp"

namespace essnl {

inline double db_to_linear(double db) { return std::pow(10.0, db / 10.0); }
inline double linear_to_db(double v) { return 10.0 * std::log10(v); }

// ---------------------------------------------------------------------------
// Effective SNR

struct SnrEstimate {
    std::complex<double> gain;  ///< h = <rx, tx> / <tx, tx>
    double signal = 0;          ///< |h|^2 E|tx|^2
    double noise = 0;           ///< E|rx - h tx|^2
    double db = 0;              ///< capped at the configured ceiling
};

inline SnrEstimate estimate_snr(std::span<const std::complex<double>> tx, std::span<const std::complex<double>> rx,
                                double cap_db = 100.0) {
    if (tx.size() != rx.size()) throw AlignmentError("tx and rx sequences differ in length");
    if (tx.empty()) throw DegenerateEstimateError("empty symbol sequence");
    std::complex<double> cross{};
    double tx_energy = 0;
    for (std::size_t i = 0; i < tx.size(); ++i) {
        cross += rx[i] * std::conj(tx[i]);
        tx_energy += std::norm(tx[i]);
    }
    if (tx_energy == 0) throw DegenerateEstimateError("transmitted sequence has zero power");
    SnrEstimate e;
    e.gain = cross / tx_energy;
    double err = 0;
    for (std::size_t i = 0; i < tx.size(); ++i) err += std::norm(rx[i] - e.gain * tx[i]);
    const auto n = static_cast<double>(tx.size());
    e.signal = std::norm(e.gain) * tx_energy / n;
    e.noise = err / n;
    e.db = e.noise > 0 ? std::min(cap_db, linear_to_db(e.signal / e.noise)) : cap_db;
    return e;
}

inline double effective_snr_db(std::span<const std::complex<double>> tx, std::span<const std::complex<double>> rx,
                               double cap_db = 100.0) {
    return estimate_snr(tx, rx, cap_db).db;
}

// ---------------------------------------------------------------------------
// Bit-metric demapper

/// Labeled M-ASK with prior p(x) = amplitude_probs[|x|] / 2.
class AskDemapper {
  public:
    AskDemapper(std::span<const double> amplitude_probs, int M) : M_(M), m_(bits_per_symbol(M)) {
        if (static_cast<int>(amplitude_probs.size()) != M / 2)
            throw ConfigurationError("prior must list M/2 amplitude probabilities");
        for (int v = -(M - 1); v <= M - 1; v += 2) {
            points_.push_back(v);
            const double p = 0.5 * amplitude_probs[static_cast<std::size_t>((std::abs(v) - 1) / 2)];
            log_prior_.push_back(p > 0 ? std::log(p) : -std::numeric_limits<double>::infinity());
            labels_.push_back(ask_label(v, M));
        }
    }

    int bits() const { return m_; }

    /// Per-level H(B_i | Y) in bits, averaged over the samples. `sent` holds
    /// the transmitted ASK values, `received` the equalized observations.
    std::vector<double> bit_entropies(std::span<const double> received, std::span<const std::int8_t> sent,
                                      double sigma2) const {
        if (!(sigma2 > 0)) throw DegenerateEstimateError("noise variance must be positive");
        if (received.empty() || received.size() != sent.size())
            throw DegenerateEstimateError("demapper needs equally many nonempty observations and labels");
        std::vector<double> h(static_cast<std::size_t>(m_), 0.0);
        std::vector<double> metric(points_.size());
        const double inv = 1.0 / (2.0 * sigma2);
        for (std::size_t t = 0; t < received.size(); ++t) {
            const double y = received[t];
            double top = -std::numeric_limits<double>::infinity();
            for (std::size_t r = 0; r < points_.size(); ++r) {
                const double d = y - points_[r];
                metric[r] = log_prior_[r] - d * d * inv;
                top = std::max(top, metric[r]);
            }
            for (std::size_t r = 0; r < points_.size(); ++r) metric[r] = std::exp(metric[r] - top);
            const std::uint32_t sent_label = ask_label(sent[t], M_);
            for (int i = 0; i < m_; ++i) {
                const int shift = m_ - 1 - i;
                const unsigned bit = (sent_label >> shift) & 1u;
                double same = 0, other = 0;
                for (std::size_t r = 0; r < points_.size(); ++r) {
                    if (((labels_[r] >> shift) & 1u) == bit) same += metric[r];
                    else other += metric[r];
                }
                // log2(1 + other/same), guarding the tails
                if (other == 0) continue;
                const double lr = std::log(other) - std::log(same);
                h[static_cast<std::size_t>(i)] += (lr > 30 ? lr : std::log1p(std::exp(lr))) / std::numbers::ln2;
            }
        }
        for (auto& v : h) v /= static_cast<double>(received.size());
        return h;
    }

  private:
    int M_, m_;
    std::vector<int> points_;
    std::vector<double> log_prior_;
    std::vector<std::uint32_t> labels_;
};

/// 2 (H_X - sum_i H(B_i|Y) - R_loss), floored at 0; bits per 2D symbol.
inline double air_n(double h_x, std::span<const double> bit_entropies, double rate_loss_bits) {
    double sum = 0;
    for (double v : bit_entropies) sum += v;
    return std::max(0.0, 2.0 * (h_x - sum - rate_loss_bits));
}

/// H_X = H(A) + 1 with uniform signs.
inline double ask_entropy(const AmplitudeDistribution& dist) { return entropy_bits(dist) + 1.0; }

// ---------------------------------------------------------------------------
// Noise shape

struct PointCovariance {
    int re = 0, im = 0;  ///< transmitted 2D point in ASK units
    std::size_t samples = 0;
    std::array<double, 3> cov{};  ///< var(re), var(im), cov(re, im)
    double ratio = 1;             ///< lambda_max / lambda_min
};

/// Mean ratio over the populated points of one energy ring |x|^2.
struct RingEllipticity {
    int energy = 0;
    double ratio = 0;
    int points = 0;

    friend bool operator==(const RingEllipticity&, const RingEllipticity&) = default;
};

struct NoiseShapeStats {
    std::vector<PointCovariance> points;  ///< populated points only
    std::vector<RingEllipticity> rings;   ///< ascending energy
    std::size_t excluded = 0;             ///< points below the sample floor or degenerate
    double mean_ratio = std::numeric_limits<double>::quiet_NaN();
    double outer_ring_ratio = std::numeric_limits<double>::quiet_NaN();
    int outer_ring_energy = 0;
};

inline double eigen_ratio(double a, double b, double c) {
    const double mean = 0.5 * (a + b);
    const double dev = std::sqrt(0.25 * (a - b) * (a - b) + c * c);
    const double lo = mean - dev;
    if (!(lo > 0)) return std::numeric_limits<double>::infinity();
    return (mean + dev) / lo;
}

/// Accumulates per-point error moments over any number of symbol streams.
class NoiseShapeAccumulator {
  public:
    /// `sent` in ASK units, `received` already divided by h and the ASK scale.
    void add(std::span<const std::complex<double>> received, std::span<const std::complex<double>> sent) {
        if (received.size() != sent.size()) throw AlignmentError("noise-shape streams differ in length");
        for (std::size_t t = 0; t < sent.size(); ++t) {
            const auto key = std::make_pair(static_cast<int>(std::lround(sent[t].real())),
                                            static_cast<int>(std::lround(sent[t].imag())));
            const auto e = received[t] - sent[t];
            auto& m = moments_[key];
            m[0] += 1;
            m[1] += e.real();
            m[2] += e.imag();
            m[3] += e.real() * e.real();
            m[4] += e.imag() * e.imag();
            m[5] += e.real() * e.imag();
        }
    }

    NoiseShapeStats finish(std::size_t min_samples = 100) const {
        NoiseShapeStats s;
        for (const auto& [key, m] : moments_) {
            const auto n = static_cast<std::size_t>(m[0]);
            if (n < min_samples || n < 2) {
                ++s.excluded;
                continue;
            }
            PointCovariance p;
            p.re = key.first;
            p.im = key.second;
            p.samples = n;
            const double mr = m[1] / m[0], mi = m[2] / m[0];
            const double scale = m[0] / (m[0] - 1);
            p.cov = {(m[3] / m[0] - mr * mr) * scale, (m[4] / m[0] - mi * mi) * scale, (m[5] / m[0] - mr * mi) * scale};
            p.ratio = eigen_ratio(p.cov[0], p.cov[1], p.cov[2]);
            if (!std::isfinite(p.ratio)) {
                ++s.excluded;
                continue;
            }
            s.points.push_back(p);
        }
        if (s.points.empty()) return s;
        std::map<int, std::pair<double, int>> rings;
        double sum = 0;
        for (const auto& p : s.points) {
            sum += p.ratio;
            auto& r = rings[p.re * p.re + p.im * p.im];
            r.first += p.ratio;
            ++r.second;
        }
        s.mean_ratio = sum / static_cast<double>(s.points.size());
        for (const auto& [energy, r] : rings) s.rings.push_back({energy, r.first / r.second, r.second});
        s.outer_ring_energy = s.rings.back().energy;
        s.outer_ring_ratio = s.rings.back().ratio;
        return s;
    }

  private:
    std::map<std::pair<int, int>, std::array<double, 6>> moments_;
};

inline NoiseShapeStats noise_shape(std::span<const std::complex<double>> sent, std::span<const std::complex<double>> received,
                                   std::size_t min_samples = 100) {
    NoiseShapeAccumulator acc;
    acc.add(received, sent);
    return acc.finish(min_samples);
}

// ---------------------------------------------------------------------------
// Per-stream evaluation

/// Metrics of one polarization stream of one channel.
struct StreamMetrics {
    SnrEstimate snr;
    std::vector<double> bit_entropies;  ///< per level, averaged over both real dimensions
};

struct StreamInput {
    std::span<const std::complex<double>> tx;  ///< transmitted data symbols (sqrt(W))
    std::span<const std::complex<double>> rx;  ///< received, phase-corrected data symbols
    std::span<const std::int8_t> ask_re;       ///< transmitted ASK values, in-phase
    std::span<const std::int8_t> ask_im;       ///< transmitted ASK values, quadrature
    double scale = 1;                          ///< field per ASK unit
};

/// Equalizes rx by h and the ASK scale, sets sigma^2 per real dimension from
/// the effective SNR, and runs the demapper over both real dimensions.
/// `equalized` (optional) receives rx / (h scale) for noise-shape analysis.
inline StreamMetrics evaluate_stream(const StreamInput& in, const AskDemapper& demapper, double snr_cap_db,
                                     std::vector<std::complex<double>>* equalized = nullptr) {
    StreamMetrics out;
    out.snr = estimate_snr(in.tx, in.rx, snr_cap_db);
    const std::size_t n = in.tx.size();
    std::vector<double> y(2 * n);
    std::vector<std::int8_t> x(2 * n);
    double ask_energy = 0;
    const auto g = out.snr.gain * in.scale;
    if (equalized) equalized->resize(n);
    for (std::size_t t = 0; t < n; ++t) {
        const auto v = in.rx[t] / g;
        y[2 * t] = v.real();
        y[2 * t + 1] = v.imag();
        x[2 * t] = in.ask_re[t];
        x[2 * t + 1] = in.ask_im[t];
        ask_energy += static_cast<double>(in.ask_re[t]) * in.ask_re[t] + static_cast<double>(in.ask_im[t]) * in.ask_im[t];
        if (equalized) (*equalized)[t] = v;
    }
    const double per_dim = ask_energy / (2.0 * static_cast<double>(n));
    const double sigma2 = per_dim / db_to_linear(out.snr.db);
    out.bit_entropies = demapper.bit_entropies(y, x, sigma2);
    return out;
}

// ---------------------------------------------------------------------------
// AWGN reference

struct CurvePoint {
    double snr_db = 0;
    double air = 0;
};

/// AIR_N over y = x + n with complex Gaussian noise at each grid SNR, using
/// the same stream evaluation as the fiber receiver.
inline std::vector<CurvePoint> awgn_reference(const AmplitudeDistribution& dist, int M, std::span<const double> snr_grid_db,
                                              double rate_loss_bits, std::size_t samples, std::uint64_t seed,
                                              double snr_cap_db = 100.0) {
    if (samples == 0) throw ConfigurationError("AWGN reference needs samples > 0");
    const AskDemapper demapper(dist.probabilities, M);
    const double h_x = ask_entropy(dist);
    std::mt19937_64 rng(seed);
    std::discrete_distribution<int> amp(dist.probabilities.begin(), dist.probabilities.end());
    std::vector<std::int8_t> re(samples), im(samples);
    std::vector<std::complex<double>> tx(samples);
    double energy = 0;
    for (std::size_t t = 0; t < samples; ++t) {
        auto draw = [&] {
            const int a = 2 * amp(rng) + 1;
            return static_cast<std::int8_t>((rng() & 1u) ? -a : a);
        };
        re[t] = draw();
        im[t] = draw();
        tx[t] = {static_cast<double>(re[t]), static_cast<double>(im[t])};
        energy += std::norm(tx[t]);
    }
    energy /= static_cast<double>(samples);
    std::vector<CurvePoint> curve;
    std::vector<std::complex<double>> rx(samples);
    for (double snr_db : snr_grid_db) {
        std::normal_distribution<double> noise(0.0, std::sqrt(energy / db_to_linear(snr_db) / 2.0));
        for (std::size_t t = 0; t < samples; ++t) rx[t] = tx[t] + std::complex<double>(noise(rng), noise(rng));
        const auto m = evaluate_stream({tx, rx, re, im, 1.0}, demapper, snr_cap_db);
        curve.push_back({m.snr.db, air_n(h_x, m.bit_entropies, rate_loss_bits)});
    }
    return curve;
}

// ---------------------------------------------------------------------------
// Launch-power optimum

struct PowerOptimum {
    double power_dbm = 0;
    double snr_db = 0;
    bool fitted = false;        ///< parabola vertex used
    bool at_boundary = false;   ///< grid argmax is an end point
    std::string warning;        ///< empty when the sweep is well formed
    std::size_t best_index = 0; ///< grid argmax
};

/// Vertex of the parabola through the grid maximum and its neighbors. Falls
/// back to the grid argmax (with a warning) for boundary maxima, vertices
/// outside the neighbor interval, or sweeps that are not unimodal beyond
/// `noise_db`.
inline PowerOptimum find_optimum_power(std::vector<std::pair<double, double>> sweep, double noise_db = 0.02) {
    if (sweep.size() < 3) throw ConfigurationError("optimum power needs at least 3 sweep points");
    std::sort(sweep.begin(), sweep.end());
    PowerOptimum r;
    for (std::size_t i = 1; i < sweep.size(); ++i)
        if (sweep[i].second > sweep[r.best_index].second) r.best_index = i;
    const std::size_t b = r.best_index;
    r.power_dbm = sweep[b].first;
    r.snr_db = sweep[b].second;
    for (std::size_t i = 1; i < sweep.size(); ++i) {
        const double step = sweep[i].second - sweep[i - 1].second;
        if ((i <= b && step < -noise_db) || (i > b && step > noise_db)) {
            r.warning = "SNR is not unimodal in launch power; using the grid maximum";
            return r;
        }
    }
    if (b == 0 || b + 1 == sweep.size()) {
        r.at_boundary = true;
        r.warning = "SNR peak lies on the edge of the power grid";
        return r;
    }
    const auto [x0, y0] = sweep[b - 1];
    const auto [x1, y1] = sweep[b];
    const auto [x2, y2] = sweep[b + 1];
    const double d01 = (y1 - y0) / (x1 - x0), d12 = (y2 - y1) / (x2 - x1);
    const double a = (d12 - d01) / (x2 - x0);
    if (!(a < 0)) {
        r.warning = "flat SNR peak; using the grid maximum";
        return r;
    }
    const double bb = d01 - a * (x0 + x1);
    const double v = -bb / (2 * a);
    if (v < x0 || v > x2) {
        r.warning = "parabola vertex outside the neighbor interval; using the grid maximum";
        return r;
    }
    r.fitted = true;
    r.power_dbm = v;
    r.snr_db = y1 + (v - x1) * (d01 + a * (v - x0));
    return r;
}

/// Quadratic interpolation through the three points around index `center`.
inline double quadratic_at(std::span<const std::pair<double, double>> pts, std::size_t center, double x) {
    if (pts.size() < 3) throw ConfigurationError("quadratic interpolation needs 3 points");
    const std::size_t c = std::clamp<std::size_t>(center, 1, pts.size() - 2);
    const auto [x0, y0] = pts[c - 1];
    const auto [x1, y1] = pts[c];
    const auto [x2, y2] = pts[c + 1];
    return y0 * (x - x1) * (x - x2) / ((x0 - x1) * (x0 - x2)) + y1 * (x - x0) * (x - x2) / ((x1 - x0) * (x1 - x2)) +
           y2 * (x - x0) * (x - x1) / ((x2 - x0) * (x2 - x1));
}

// ---------------------------------------------------------------------------
// Eye between branches

struct EyeGap {
    double max_gap = 0;
    double mean_gap = 0;
    double snr_lo = 0, snr_hi = 0;  ///< common SNR range
};

inline double interpolate_branch(const std::vector<CurvePoint>& branch, double snr) {
    auto it = std::lower_bound(branch.begin(), branch.end(), snr,
                               [](const CurvePoint& p, double s) { return p.snr_db < s; });
    if (it == branch.begin()) return it->air;
    if (it == branch.end()) return branch.back().air;
    const auto& hi = *it;
    const auto& lo = *(it - 1);
    if (hi.snr_db == lo.snr_db) return 0.5 * (hi.air + lo.air);
    return lo.air + (hi.air - lo.air) * (snr - lo.snr_db) / (hi.snr_db - lo.snr_db);
}

/// AIR of the low-power branch minus the high-power branch at matched SNR.
inline EyeGap eye_gap(std::vector<CurvePoint> low, std::vector<CurvePoint> high, int grid_points = 64) {
    if (low.empty() || high.empty()) throw ConfigurationError("eye gap needs two nonempty branches");
    auto by_snr = [](const CurvePoint& a, const CurvePoint& b) { return a.snr_db < b.snr_db; };
    std::sort(low.begin(), low.end(), by_snr);
    std::sort(high.begin(), high.end(), by_snr);
    EyeGap g;
    g.snr_lo = std::max(low.front().snr_db, high.front().snr_db);
    g.snr_hi = std::min(low.back().snr_db, high.back().snr_db);
    if (!(g.snr_hi > g.snr_lo)) throw ConfigurationError("branches have no overlapping SNR range");
    g.max_gap = -std::numeric_limits<double>::infinity();
    double sum = 0;
    for (int i = 0; i < grid_points; ++i) {
        const double s = g.snr_lo + (g.snr_hi - g.snr_lo) * i / (grid_points - 1);
        const double d = interpolate_branch(low, s) - interpolate_branch(high, s);
        g.max_gap = std::max(g.max_gap, d);
        sum += d;
    }
    g.mean_gap = sum / grid_points;
    return g;
}

}  // namespace essnl
