#pragma once

// Dual-polarization WDM link: RRC transmitter, split-step Fourier propagation
// of the Manakov equation over amplified spans, and the receiver chain (CD
// compensation, channel selection with matched filtering, pilot-aided
// constant-phase correction).
//
// Everything is cyclic: a frame is one period of the simulated signal, so
// dispersion, filtering and frequency shifts are exact circular operations
// and the receiver needs no timing recovery.
//
// Field convention: A(t) = sum_k A_k exp(+j w_k t) (FFTW backward transform),
//   dA/dz = -(alpha/2) A - j (beta2/2) d2A/dt2 + j gamma' |A|^2 A,
// so the linear step is exp((-alpha/2 + j beta2 w^2 / 2) h).

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstdint>
#include <fstream>
#include <numbers>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "essnl/errors.hpp"
#include "essnl/fft.hpp"
#include "essnl/mapper.hpp"

namespace essnl {

inline constexpr double kSpeedOfLight = 299792458.0;  // m/s
inline constexpr double kPlanck = 6.62607015e-34;     // J s

struct SpanParams {
    double length_km = 80.0;
    double attenuation_db_per_km = 0.19;
    double dispersion_ps_per_nm_km = 17.0;
    double gamma_per_w_km = 1.3;
    double wavelength_nm = 1550.0;

    double length_m() const { return length_km * 1e3; }
    /// Field-power attenuation coefficient (1/m).
    double alpha_per_m() const { return attenuation_db_per_km * std::log(10.0) / 10.0 / 1e3; }
    /// beta2 = -D lambda^2 / (2 pi c), in s^2/m.
    double beta2_s2_per_m() const {
        const double d = dispersion_ps_per_nm_km * 1e-6;  // s/m^2
        const double lambda = wavelength_nm * 1e-9;
        return -d * lambda * lambda / (2.0 * std::numbers::pi * kSpeedOfLight);
    }
    double gamma_per_w_m() const { return gamma_per_w_km * 1e-3; }
    double loss_db() const { return attenuation_db_per_km * length_km; }

    void validate() const {
        if (!(length_km >= 0) || !(attenuation_db_per_km >= 0) || !(gamma_per_w_km >= 0) || !(wavelength_nm > 0))
            throw ConfigurationError("span parameters must be non-negative with a positive wavelength");
    }
};

struct AmplifierParams {
    double gain_db = 15.2;
    double noise_figure_db = 5.5;

    /// Gain that exactly offsets the span loss.
    static AmplifierParams for_span(const SpanParams& span, double noise_figure_db) {
        return {span.loss_db(), noise_figure_db};
    }
};

struct GridParams {
    int num_channels = 5;
    double symbol_rate_gbd = 56.0;
    double spacing_ghz = 62.5;
    double rolloff = 0.1;

    double symbol_rate_hz() const { return symbol_rate_gbd * 1e9; }
    double spacing_hz() const { return spacing_ghz * 1e9; }

    void validate() const {
        if (num_channels < 1 || num_channels % 2 == 0)
            throw ConfigurationError("channel count must be odd so that the center channel sits at 0 Hz");
        if (!(symbol_rate_gbd > 0) || !(rolloff >= 0 && rolloff <= 1))
            throw ConfigurationError("symbol rate must be positive and roll-off in [0, 1]");
        if (num_channels > 1 && spacing_ghz <= symbol_rate_gbd)
            throw ConfigurationError("channel spacing must exceed the symbol rate");
    }

    /// Spectral overlap of the roll-off skirts of adjacent channels (GHz, 0 when disjoint).
    double overlap_ghz() const {
        return num_channels > 1 ? std::max(0.0, symbol_rate_gbd * (1 + rolloff) - spacing_ghz) : 0.0;
    }

    /// Nominal offset of channel i from the grid center (Hz).
    double channel_offset_hz(int i) const { return spacing_hz() * (i - (num_channels - 1) / 2.0); }
};

/// Dual-polarization complex envelope, sqrt(W) per sample.
struct Waveform {
    cvec x, y;
    double sample_rate = 0;              ///< Hz
    double center_frequency_offset = 0;  ///< Hz, relative to the reference wavelength

    std::size_t size() const noexcept { return x.size(); }
    /// Sum over samples of |x|^2 + |y|^2.
    double energy() const {
        double e = 0;
        for (std::size_t i = 0; i < x.size(); ++i) e += std::norm(x[i]) + std::norm(y[i]);
        return e;
    }
    double mean_power() const { return x.empty() ? 0.0 : energy() / static_cast<double>(x.size()); }
};

enum class NonlinearModel {
    manakov,  ///< 8/9 gamma (|Ax|^2 + |Ay|^2) on both polarizations
    scalar    ///< gamma |Ap|^2 on each polarization separately
};

inline std::string to_string(NonlinearModel m) { return m == NonlinearModel::manakov ? "manakov" : "scalar"; }
inline NonlinearModel parse_nonlinear_model(const std::string& s) {
    if (s == "manakov") return NonlinearModel::manakov;
    if (s == "scalar") return NonlinearModel::scalar;
    throw ConfigurationError("unknown nonlinear model '" + s + "' (expected manakov or scalar)");
}

struct StepPolicy {
    double max_step_km = 0.1;
    double max_phase_rad = 0.05;  ///< nonlinear phase guard per step
    bool adaptive = true;         ///< shrink steps to honor the guard; otherwise refuse
    NonlinearModel model = NonlinearModel::manakov;
};

// ---------------------------------------------------------------------------
// Transmitter

/// Smallest power-of-two samples per symbol covering num_channels * spacing * 1.25.
inline int aggregate_samples_per_symbol(const GridParams& grid) {
    const double needed = grid.num_channels * std::max(grid.spacing_hz(), grid.symbol_rate_hz() * (1 + grid.rolloff)) *
                          1.25;
    int sps = 2;
    while (sps * grid.symbol_rate_hz() < needed) sps *= 2;
    return sps;
}

/// Unit-energy root-raised-cosine taps, span_symbols * sps + 1 long, centered.
inline std::vector<double> rrc_taps(double rolloff, int sps, int span_symbols) {
    if (sps < 2) throw ConfigurationError("samples per symbol must be >= 2");
    if (span_symbols < 2) throw ConfigurationError("RRC span must cover at least 2 symbols");
    const int len = span_symbols * sps + 1;
    const int center = len / 2;
    const double b = rolloff;
    std::vector<double> h(static_cast<std::size_t>(len));
    const double pi = std::numbers::pi;
    for (int i = 0; i < len; ++i) {
        const double t = static_cast<double>(i - center) / sps;
        double v;
        if (std::abs(t) < 1e-12) {
            v = 1.0 - b + 4.0 * b / pi;
        } else if (b > 0 && std::abs(std::abs(t) - 1.0 / (4.0 * b)) < 1e-9) {
            v = b / std::sqrt(2.0) * ((1 + 2 / pi) * std::sin(pi / (4 * b)) + (1 - 2 / pi) * std::cos(pi / (4 * b)));
        } else {
            v = (std::sin(pi * t * (1 - b)) + 4 * b * t * std::cos(pi * t * (1 + b))) /
                (pi * t * (1 - (4 * b * t) * (4 * b * t)));
        }
        h[static_cast<std::size_t>(i)] = v;
    }
    double e = 0;
    for (double v : h) e += v * v;
    for (double& v : h) v /= std::sqrt(e);
    return h;
}

/// Worst spectral level (dB relative to the passband peak) of the taps beyond
/// the band edge (1 + rolloff) Rs / 2, from a finely zero-padded FFT. The
/// first Rs / span above the edge is the transition smear of the truncation
/// window and is not counted.
inline double rrc_stopband_db(std::span<const double> taps, int sps, double rolloff) {
    std::size_t n = 1;
    while (n < taps.size() * 16) n <<= 1;
    cvec buf(n);
    for (std::size_t i = 0; i < taps.size(); ++i) buf[i] = taps[i];
    Fft(n).forward(buf);
    double peak = 0, stop = 0;
    const double span = static_cast<double>(taps.size() - 1) / sps;
    const double edge = ((1 + rolloff) / 2 + 1 / span) / sps;  // cycles per sample
    for (std::size_t k = 0; k < n; ++k) {
        const double f = std::abs(bin_angular_frequency(k, n, 1.0)) / (2 * std::numbers::pi);
        const double p = std::norm(buf[k]);
        peak = std::max(peak, p);
        if (f >= edge) stop = std::max(stop, p);
    }
    return 10 * std::log10(stop / peak);
}

/// Circular frequency response of centered taps for a length-n signal.
inline cvec circular_response(std::span<const double> taps, std::size_t n) {
    if (taps.size() > n) throw ConfigurationError("filter is longer than the frame");
    cvec h(n);
    const std::size_t center = taps.size() / 2;
    for (std::size_t i = 0; i < taps.size(); ++i) h[(i + n - center) % n] += taps[i];
    Fft(n).forward(h);
    return h;
}

struct PulseOptions {
    int span_symbols = 64;
    double min_stopband_db = 40.0;
};

/// RRC pulse shaping of both polarizations of a frame at symbol_rate * sps.
/// The mean waveform power equals the mean slot power of the frame.
inline Waveform pulse_shape(const DualPolFrame& frame, const GridParams& grid, int samples_per_symbol,
                            PulseOptions options = {}) {
    if (samples_per_symbol < 2) throw ConfigurationError("samples per symbol must be >= 2");
    const auto taps = rrc_taps(grid.rolloff, samples_per_symbol, options.span_symbols);
    const double stop = rrc_stopband_db(taps, samples_per_symbol, grid.rolloff);
    if (stop > -options.min_stopband_db)
        throw ConfigurationError("RRC span of " + std::to_string(options.span_symbols) +
                                 " symbols gives only " + std::to_string(-stop) + " dB stopband attenuation");
    const std::size_t n = frame.slot_count();
    const std::size_t len = n * static_cast<std::size_t>(samples_per_symbol);
    const auto h = circular_response(taps, len);
    const Fft small(n), big(len);
    const double gain = std::sqrt(static_cast<double>(samples_per_symbol));

    Waveform w;
    w.sample_rate = grid.symbol_rate_hz() * samples_per_symbol;
    auto shape_pol = [&](const cvec& symbols) {
        // Spectrum of the zero-stuffed sequence is the symbol spectrum tiled sps times.
        cvec s = symbols;
        small.forward(s);
        cvec out(len);
        for (std::size_t k = 0; k < len; ++k) out[k] = s[k % n] * h[k] * gain;
        big.inverse_normalized(out);
        return out;
    };
    w.x = shape_pol(frame.x);
    w.y = shape_pol(frame.y);
    return w;
}

/// Integer FFT-bin offset used for channel i (nominal offset rounded to the
/// frame's bin grid, which keeps frequency shifts cyclic).
inline long channel_bin_offset(const GridParams& grid, int channel, std::size_t length, double sample_rate) {
    return std::lround(grid.channel_offset_hz(channel) * static_cast<double>(length) / sample_rate);
}

/// Frequency-multiplexes per-channel baseband waveforms onto the grid.
inline Waveform wdm_multiplex(std::span<const Waveform> channels, const GridParams& grid, double aggregate_sample_rate) {
    grid.validate();
    if (static_cast<int>(channels.size()) != grid.num_channels)
        throw ConfigurationError("need one waveform per grid channel");
    const double needed = grid.num_channels * grid.spacing_hz() * 1.25;
    if (aggregate_sample_rate < needed * (1 - 1e-12) && grid.num_channels > 1)
        throw AliasingError("aggregate sample rate " + std::to_string(aggregate_sample_rate / 1e9) +
                            " GHz is below num_channels x spacing x 1.25 = " + std::to_string(needed / 1e9) + " GHz");
    const std::size_t lc = channels[0].size();
    const double ratio = aggregate_sample_rate / channels[0].sample_rate;
    const auto len = static_cast<std::size_t>(std::llround(static_cast<double>(lc) * ratio));
    if (ratio < 1 - 1e-12 || std::abs(static_cast<double>(len) - static_cast<double>(lc) * ratio) > 1e-6)
        throw ConfigurationError("aggregate rate must be an integer-length upsampling of the channel rate");

    Waveform out;
    out.sample_rate = aggregate_sample_rate;
    out.x.assign(len, {});
    out.y.assign(len, {});
    const Fft small(lc), big(len);
    const double norm = 1.0 / static_cast<double>(lc);
    for (int c = 0; c < grid.num_channels; ++c) {
        const auto& ch = channels[static_cast<std::size_t>(c)];
        if (ch.size() != lc || ch.sample_rate != channels[0].sample_rate)
            throw ConfigurationError("channel waveforms differ in length or rate");
        const long shift = channel_bin_offset(grid, c, len, aggregate_sample_rate);
        auto add = [&](const cvec& in, cvec& acc) {
            cvec s = in;
            small.forward(s);
            cvec up(len);
            for (std::size_t k = 0; k < lc; ++k) {
                // keep the two-sided band around DC when zero-padding
                const long f = k < (lc + 1) / 2 ? static_cast<long>(k) : static_cast<long>(k) - static_cast<long>(lc);
                const long dst = ((f + shift) % static_cast<long>(len) + static_cast<long>(len)) % static_cast<long>(len);
                up[static_cast<std::size_t>(dst)] = s[k] * norm;
            }
            big.inverse(up);
            for (std::size_t i = 0; i < len; ++i) acc[i] += up[i];
        };
        add(ch.x, out.x);
        add(ch.y, out.y);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Propagation

struct SpanReport {
    int steps = 0;
    double max_phase_rad = 0;
};

/// Symmetric split-step propagation over one span. Consecutive half linear
/// steps are merged; the nonlinear operator acts at each step midpoint with
/// an effective length that integrates the power decay over the step.
inline Waveform ssfm_span(Waveform wave, const SpanParams& span, const StepPolicy& policy, SpanReport* report = nullptr) {
    span.validate();
    if (!(policy.max_step_km > 0)) throw ConfigurationError("SSFM step must be positive");
    const std::size_t n = wave.size();
    if (wave.y.size() != n) throw ConfigurationError("polarizations differ in length");
    const double alpha = span.alpha_per_m();
    const double beta2 = span.beta2_s2_per_m();
    const double gamma = span.gamma_per_w_m();
    const double length = span.length_m();
    const double max_step = policy.max_step_km * 1e3;
    const bool manakov = policy.model == NonlinearModel::manakov;
    const double gamma_eff = manakov ? gamma * 8.0 / 9.0 : gamma;
    SpanReport rep;
    if (length == 0) {
        if (report) *report = rep;
        return wave;
    }

    const Fft fft(n);
    std::vector<double> w2(n);
    for (std::size_t k = 0; k < n; ++k) {
        const double w = bin_angular_frequency(k, n, wave.sample_rate) + 2 * std::numbers::pi * wave.center_frequency_offset;
        w2[k] = w * w;
    }
    // Linear operator over distance d, with the 1/n of the inverse FFT folded in.
    struct CachedOp {
        double distance = -1;
        cvec op;
    };
    std::array<CachedOp, 4> cache;
    std::size_t cache_next = 0;
    const double inv_n = 1.0 / static_cast<double>(n);
    auto linear_op = [&](double d) -> const cvec& {
        for (auto& c : cache)
            if (c.distance == d) return c.op;
        auto& slot = cache[cache_next++ % cache.size()];
        slot.distance = d;
        slot.op.resize(n);
        const double att = std::exp(-alpha / 2 * d) * inv_n;
        for (std::size_t k = 0; k < n; ++k) slot.op[k] = std::polar(att, beta2 / 2 * w2[k] * d);
        return slot.op;
    };
    auto apply_linear = [&](double d) {
        const auto& op = linear_op(d);
        for (std::size_t k = 0; k < n; ++k) {
            wave.x[k] *= op[k];
            wave.y[k] *= op[k];
        }
    };
    auto effective = [&](double h) { return alpha > 0 ? 2.0 * std::sinh(alpha * h / 2) / alpha : h; };
    auto peak_power = [&] {
        double p = 0;
        if (manakov) {
            for (std::size_t i = 0; i < n; ++i) p = std::max(p, std::norm(wave.x[i]) + std::norm(wave.y[i]));
        } else {
            for (std::size_t i = 0; i < n; ++i) p = std::max({p, std::norm(wave.x[i]), std::norm(wave.y[i])});
        }
        return p;
    };
    // Adaptive steps are snapped to max_step * 2^(-q/4) so linear operators repeat.
    auto snap = [&](double h) {
        if (h >= max_step) return max_step;
        const double q = std::ceil(-4.0 * std::log2(h / max_step));
        return max_step * std::exp2(-q / 4.0);
    };
    auto guard_step = [&](double peak) {
        if (gamma_eff == 0 || peak == 0) return max_step;
        return policy.max_phase_rad / (gamma_eff * peak);
    };

    double predicted_peak = peak_power();
    fft.forward(wave.x);
    fft.forward(wave.y);
    // Each forward/inverse pair is normalized by the 1/n folded into the operator.
    double z = 0;
    double pending = 0;  // half step of the previous step not yet applied
    while (z < length * (1 - 1e-12)) {
        double h = std::min(max_step, length - z);
        if (policy.adaptive) h = std::min(h, snap(guard_step(predicted_peak)));
        // Bring the field to the midpoint of this step.
        apply_linear(pending + h / 2);
        fft.inverse(wave.x);
        fft.inverse(wave.y);
        double peak = peak_power();
        double phase = gamma_eff * peak * effective(h);
        while (phase > policy.max_phase_rad * (1 + 1e-12)) {
            if (!policy.adaptive)
                throw StepSizeError("nonlinear phase " + std::to_string(phase) + " rad per step exceeds the " +
                                    std::to_string(policy.max_phase_rad) + " rad guard (peak power " +
                                    std::to_string(peak) + " W, step " + std::to_string(h) +
                                    " m); reduce run.ssfm_max_step_km or enable adaptive steps");
            // Roll the midpoint back to the midpoint of a shorter step.
            const double h_new = snap(std::min(guard_step(peak), h / 2));
            fft.forward(wave.x);
            fft.forward(wave.y);
            apply_linear(-(h - h_new) / 2);
            fft.inverse(wave.x);
            fft.inverse(wave.y);
            h = h_new;
            peak = peak_power();
            phase = gamma_eff * peak * effective(h);
        }
        if (gamma_eff > 0) {
            const double scale = gamma_eff * effective(h);
            if (manakov) {
                for (std::size_t i = 0; i < n; ++i) {
                    const auto rot = std::polar(1.0, scale * (std::norm(wave.x[i]) + std::norm(wave.y[i])));
                    wave.x[i] *= rot;
                    wave.y[i] *= rot;
                }
            } else {
                for (std::size_t i = 0; i < n; ++i) {
                    wave.x[i] *= std::polar(1.0, scale * std::norm(wave.x[i]));
                    wave.y[i] *= std::polar(1.0, scale * std::norm(wave.y[i]));
                }
            }
        }
        rep.max_phase_rad = std::max(rep.max_phase_rad, phase);
        ++rep.steps;
        predicted_peak = peak * std::exp(-alpha * h);
        fft.forward(wave.x);
        fft.forward(wave.y);
        pending = h / 2;
        z += h;
    }
    apply_linear(pending);
    fft.inverse(wave.x);
    fft.inverse(wave.y);
    if (report) *report = rep;
    return wave;
}

/// Lumped amplifier: field gain sqrt(G) plus circular Gaussian ASE in each
/// polarization with one-sided PSD (G - 1) h nu n_sp, n_sp = NF G / (2 (G - 1)).
/// Unity gain (or less) is treated as a passive element without noise.
inline Waveform amplify(Waveform wave, const AmplifierParams& amp, double center_wavelength_nm, std::uint64_t seed) {
    const double g = std::pow(10.0, amp.gain_db / 10.0);
    const double field_gain = std::sqrt(g);
    for (auto& v : wave.x) v *= field_gain;
    for (auto& v : wave.y) v *= field_gain;
    if (g <= 1.0) return wave;
    const double nf = std::pow(10.0, amp.noise_figure_db / 10.0);
    const double nu = kSpeedOfLight / (center_wavelength_nm * 1e-9);
    const double n_sp = nf * g / (2.0 * (g - 1.0));
    const double psd = (g - 1.0) * kPlanck * nu * n_sp;
    const double variance = psd * wave.sample_rate;  // complex, per sample and polarization
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, std::sqrt(variance / 2.0));
    for (auto& v : wave.x) v += std::complex<double>(normal(rng), normal(rng));
    for (auto& v : wave.y) v += std::complex<double>(normal(rng), normal(rng));
    return wave;
}

/// num_spans repetitions of (span, amplifier) with independent ASE per span.
inline Waveform propagate_link(Waveform wave, const SpanParams& span, const AmplifierParams& amp, int num_spans,
                               const StepPolicy& policy, std::uint64_t seed, std::vector<SpanReport>* reports = nullptr) {
    if (num_spans < 1) throw ConfigurationError("need at least one span");
    std::mt19937_64 seeder(seed);
    for (int s = 0; s < num_spans; ++s) {
        SpanReport rep;
        wave = ssfm_span(std::move(wave), span, policy, &rep);
        wave = amplify(std::move(wave), amp, span.wavelength_nm, seeder());
        if (reports) reports->push_back(rep);
    }
    return wave;
}

/// Removes accumulated dispersion beta2 * L (s^2): multiplies by exp(-j beta2 L w^2 / 2).
inline Waveform cd_compensate(Waveform wave, double accumulated_beta2_s2) {
    if (accumulated_beta2_s2 == 0) return wave;
    const std::size_t n = wave.size();
    const Fft fft(n);
    fft.forward(wave.x);
    fft.forward(wave.y);
    const double inv_n = 1.0 / static_cast<double>(n);
    for (std::size_t k = 0; k < n; ++k) {
        const double w = bin_angular_frequency(k, n, wave.sample_rate) + 2 * std::numbers::pi * wave.center_frequency_offset;
        const auto op = std::polar(inv_n, -accumulated_beta2_s2 / 2 * w * w);
        wave.x[k] *= op;
        wave.y[k] *= op;
    }
    fft.inverse(wave.x);
    fft.inverse(wave.y);
    return wave;
}

// ---------------------------------------------------------------------------
// Receiver

/// Symbols of one channel at one sample per symbol, all frame slots.
struct ReceivedSymbols {
    cvec x, y;
};

struct SelectOptions {
    int span_symbols = 64;
    int delay_samples = 0;  ///< genie-known channel delay
};

/// Shifts channel `channel_index` to baseband, applies the RRC matched filter
/// and samples at the symbol instants, aligned to the transmitted frame.
inline ReceivedSymbols channel_select(const Waveform& wave, const GridParams& grid, int channel_index,
                                      const DualPolFrame& frame, SelectOptions options = {}) {
    if (channel_index < 0 || channel_index >= grid.num_channels)
        throw ConfigurationError("channel index " + std::to_string(channel_index) + " outside the grid");
    const std::size_t slots = frame.slot_count();
    const std::size_t len = wave.size();
    if (slots == 0 || len % slots != 0) throw AlignmentError("waveform length is not a whole number of frame slots");
    const int sps = static_cast<int>(len / slots);
    if (std::abs(wave.sample_rate / sps - grid.symbol_rate_hz()) > 1e-6 * grid.symbol_rate_hz())
        throw AlignmentError("waveform sample rate is not a multiple of the symbol rate");
    const auto taps = rrc_taps(grid.rolloff, sps, options.span_symbols);
    const auto h = circular_response(taps, len);
    const long shift = channel_bin_offset(grid, channel_index, len, wave.sample_rate);
    const Fft big(len), small(slots);
    const double norm = 1.0 / (static_cast<double>(len) * std::sqrt(static_cast<double>(sps)));

    // Matched-filtered spectrum of one polarization at baseband.
    auto filtered = [&](const cvec& pol) {
        cvec s = pol;
        big.forward(s);
        cvec out(len);
        for (std::size_t k = 0; k < len; ++k) {
            const std::size_t src = (k + static_cast<std::size_t>(shift % static_cast<long>(len) + static_cast<long>(len))) % len;
            out[k] = s[src] * std::conj(h[k]);
        }
        return out;
    };
    // Sample instants t_k = k sps + delay: fold the spectrum onto the symbol grid.
    auto sample = [&](const cvec& spec, int delay) {
        cvec folded(slots);
        for (std::size_t k = 0; k < len; ++k) {
            const double w = 2 * std::numbers::pi * static_cast<double>(k) * delay / static_cast<double>(len);
            folded[k % slots] += spec[k] * std::polar(1.0, w);
        }
        small.inverse(folded);
        for (auto& v : folded) v *= norm;
        return folded;
    };
    const auto fx = filtered(wave.x);
    const auto fy = filtered(wave.y);

    // Verify the alignment against the transmitted frame.
    int best = 0;
    double best_corr = -1;
    for (int d = -sps; d <= sps; ++d) {
        const auto sx = sample(fx, options.delay_samples + d);
        const auto sy = sample(fy, options.delay_samples + d);
        std::complex<double> cx{}, cy{};
        for (std::size_t k = 0; k < slots; ++k) {
            cx += sx[k] * std::conj(frame.x[k]);
            cy += sy[k] * std::conj(frame.y[k]);
        }
        const double corr = std::abs(cx) + std::abs(cy);
        if (corr > best_corr) {
            best_corr = corr;
            best = d;
        }
    }
    if (2 * std::abs(best) > sps)
        throw AlignmentError("received channel " + std::to_string(channel_index) + " is misaligned by " +
                             std::to_string(best) + " samples (more than half a symbol)");
    return {sample(fx, options.delay_samples), sample(fy, options.delay_samples)};
}

/// Data symbols after constant-phase correction, one phase per polarization.
struct PhaseCorrected {
    cvec x, y;
    double phase_x = 0, phase_y = 0;
};

inline PhaseCorrected pilot_phase_correct(const ReceivedSymbols& received, const DualPolFrame& frame) {
    if (received.x.size() != frame.slot_count() || received.y.size() != frame.slot_count())
        throw AlignmentError("received symbol count differs from the frame length");
    std::complex<double> cx{}, cy{};
    for (std::size_t s = 0; s < frame.slot_count(); ++s) {
        if (!frame.is_pilot(s)) continue;
        cx += received.x[s] * std::conj(frame.x[s]);
        cy += received.y[s] * std::conj(frame.y[s]);
    }
    if (std::abs(cx) == 0 || std::abs(cy) == 0)
        throw DegenerateEstimateError("pilot correlation is zero; phase cannot be estimated");
    PhaseCorrected out;
    out.phase_x = std::arg(cx);
    out.phase_y = std::arg(cy);
    const auto rx = std::polar(1.0, -out.phase_x), ry = std::polar(1.0, -out.phase_y);
    out.x.reserve(frame.data_symbol_count());
    out.y.reserve(frame.data_symbol_count());
    for (std::size_t s = 0; s < frame.slot_count(); ++s) {
        if (frame.is_pilot(s)) continue;
        out.x.push_back(received.x[s] * rx);
        out.y.push_back(received.y[s] * ry);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Debug dump

/// Raw dump: 8-byte magic "ESSNLWF1", float64 sample rate, uint64 length,
/// uint32 polarization count (2), then per sample x and y as little-endian
/// interleaved complex64 (re, im as float32).
inline void write_waveform_dump(const std::string& path, const Waveform& wave) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot open waveform dump '" + path + "'");
    out.write("ESSNLWF1", 8);
    const double rate = wave.sample_rate;
    const std::uint64_t len = wave.size();
    const std::uint32_t pols = 2;
    out.write(reinterpret_cast<const char*>(&rate), sizeof rate);
    out.write(reinterpret_cast<const char*>(&len), sizeof len);
    out.write(reinterpret_cast<const char*>(&pols), sizeof pols);
    for (std::size_t i = 0; i < wave.size(); ++i) {
        const float v[4] = {static_cast<float>(wave.x[i].real()), static_cast<float>(wave.x[i].imag()),
                            static_cast<float>(wave.y[i].real()), static_cast<float>(wave.y[i].imag())};
        out.write(reinterpret_cast<const char*>(v), sizeof v);
    }
}

}  // namespace essnl
