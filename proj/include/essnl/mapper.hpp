#pragma once

// PAS symbol mapping: BRGC amplitude labels, uniform signs, and the 1D/2D/4D
// assignment of shaped amplitude streams to the four real dimensions of a
// dual-polarization slot, with periodic QPSK pilots.

#include <array>
#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "essnl/errors.hpp"

namespace essnl {

enum class MappingStrategy { one_d, two_d, four_d };

/// Number of independent shaped streams feeding one 4D symbol stream.
constexpr int streams_per_frame(MappingStrategy s) noexcept {
    switch (s) {
        case MappingStrategy::one_d: return 4;
        case MappingStrategy::two_d: return 2;
        case MappingStrategy::four_d: return 1;
    }
    return 0;
}

inline std::string to_string(MappingStrategy s) {
    switch (s) {
        case MappingStrategy::one_d: return "1D";
        case MappingStrategy::two_d: return "2D";
        case MappingStrategy::four_d: return "4D";
    }
    return "?";
}

inline MappingStrategy parse_mapping(const std::string& text) {
    if (text == "1D" || text == "1d") return MappingStrategy::one_d;
    if (text == "2D" || text == "2d") return MappingStrategy::two_d;
    if (text == "4D" || text == "4d") return MappingStrategy::four_d;
    throw ConfigurationError("unknown mapping strategy '" + text + "' (expected 1D, 2D or 4D)");
}

/// m = log2 M bits per ASK symbol.
inline int bits_per_symbol(int M) {
    int m = 0;
    while ((1 << m) < M) ++m;
    if ((1 << m) != M || M < 4) throw ConfigurationError("M must be a power of two >= 4");
    return m;
}

/// Reflected Gray label (m - 1 bits) of amplitude a in {1, 3, ..., M-1}.
inline std::uint32_t brgc_label(int amplitude, int M) {
    bits_per_symbol(M);
    if (amplitude < 1 || amplitude >= M || amplitude % 2 == 0)
        throw ConfigurationError("amplitude " + std::to_string(amplitude) + " is not a letter of " +
                                 std::to_string(M) + "-ASK");
    const auto i = static_cast<std::uint32_t>((amplitude - 1) / 2);
    return i ^ (i >> 1);
}

/// Inverse of brgc_label.
inline int brgc_amplitude(std::uint32_t label, int M) {
    const int m = bits_per_symbol(M);
    if (label >= (1u << (m - 1))) throw ConfigurationError("label out of range");
    std::uint32_t i = label;
    for (std::uint32_t shift = 1; shift < 32; shift <<= 1) i ^= i >> shift;
    return 2 * static_cast<int>(i) + 1;
}

/// Full m-bit label of ASK value s * a: B_1 is the sign bit (1 for negative)
/// followed by the BRGC amplitude bits B_2 ... B_m.
inline std::uint32_t ask_label(int value, int M) {
    const int m = bits_per_symbol(M);
    const std::uint32_t sign = value < 0 ? 1u : 0u;
    return (sign << (m - 1)) | brgc_label(std::abs(value), M);
}

/// Bit B_i (i = 1 ... m) of an m-bit label.
constexpr int label_bit(std::uint32_t label, int i, int m) noexcept { return static_cast<int>((label >> (m - i)) & 1u); }

/// i.i.d. uniform signs (+1 / -1), reproducible per seed.
inline std::vector<std::int8_t> assign_signs(std::size_t count, std::uint64_t seed) {
    std::vector<std::int8_t> signs(count);
    std::mt19937_64 rng(seed);
    std::uint64_t word = 0;
    for (std::size_t i = 0; i < count; ++i) {
        if (i % 64 == 0) word = rng();
        signs[i] = (word >> (i % 64)) & 1u ? std::int8_t{-1} : std::int8_t{1};
    }
    return signs;
}

inline double dbm_to_watt(double dbm) { return 1e-3 * std::pow(10.0, dbm / 10.0); }
inline double watt_to_dbm(double w) { return 10.0 * std::log10(w / 1e-3); }

/// Dual-polarization symbol frame with interleaved QPSK pilot slots.
struct DualPolFrame {
    std::vector<std::complex<double>> x, y;      ///< all slots, scaled (sqrt(W))
    std::vector<std::uint8_t> pilot_mask;        ///< 1 where the slot is a pilot
    std::vector<std::array<std::int8_t, 4>> ask; ///< data slots: (Re x, Im x, Re y, Im y) ASK values
    double scale = 1;                            ///< field per ASK unit
    double power_w = 0;                          ///< mean data-slot power (both polarizations)
    int M = 8;
    int pilot_period = 0;
    MappingStrategy strategy = MappingStrategy::four_d;

    std::size_t slot_count() const noexcept { return x.size(); }
    std::size_t data_symbol_count() const noexcept { return ask.size(); }
    std::size_t pilot_count() const noexcept { return slot_count() - data_symbol_count(); }
    bool is_pilot(std::size_t slot) const { return pilot_mask[slot] != 0; }
};

/// Number of slots holding `data` data slots with a pilot at slot 0 and then
/// one pilot before every `period` data slots.
constexpr std::size_t frame_length(std::size_t data, int period) noexcept {
    if (period <= 0) return data;
    const auto p = static_cast<std::size_t>(period);
    return data + (data + p - 1) / p;
}

inline DualPolFrame map_to_frame(std::span<const std::vector<int>> streams, std::span<const std::int8_t> signs,
                                 MappingStrategy strategy, int pilot_period, double power_dbm,
                                 std::uint64_t pilot_seed, int M = 8) {
    const int count = streams_per_frame(strategy);
    if (static_cast<int>(streams.size()) != count)
        throw ConfigurationError(to_string(strategy) + " mapping needs " + std::to_string(count) + " streams, got " +
                                 std::to_string(streams.size()));
    const std::size_t len = streams[0].size();
    for (const auto& s : streams)
        if (s.size() != len) throw ConfigurationError("shaped streams differ in length");
    if ((len * static_cast<std::size_t>(count)) % 4 != 0 || len == 0)
        throw ConfigurationError("stream length does not fill whole 4D slots");
    const std::size_t data = len * static_cast<std::size_t>(count) / 4;
    if (signs.size() != 4 * data) throw ConfigurationError("need one sign per real dimension");
    if (pilot_period < 0) throw ConfigurationError("pilot period must be >= 0");

    DualPolFrame frame;
    frame.M = M;
    frame.pilot_period = pilot_period;
    frame.strategy = strategy;
    frame.ask.resize(data);
    for (std::size_t t = 0; t < data; ++t) {
        for (std::size_t d = 0; d < 4; ++d) {
            int a = 0;
            switch (strategy) {
                case MappingStrategy::four_d: a = streams[0][4 * t + d]; break;
                case MappingStrategy::two_d: a = streams[d / 2][2 * t + d % 2]; break;
                case MappingStrategy::one_d: a = streams[d][t]; break;
            }
            if (a < 1 || a >= M || a % 2 == 0) throw ConfigurationError("stream holds a non-alphabet amplitude");
            frame.ask[t][d] = static_cast<std::int8_t>(a * signs[4 * t + d]);
        }
    }

    double energy = 0;
    for (const auto& s : frame.ask)
        for (auto v : s) energy += static_cast<double>(v) * v;
    const double mean_ask_power = energy / static_cast<double>(data);
    frame.power_w = dbm_to_watt(power_dbm);
    frame.scale = std::sqrt(frame.power_w / mean_ask_power);

    const std::size_t slots = frame_length(data, pilot_period);
    frame.x.resize(slots);
    frame.y.resize(slots);
    frame.pilot_mask.assign(slots, 0);
    std::mt19937_64 rng(pilot_seed);
    const double pilot_amp = std::sqrt(frame.power_w / 2.0);
    auto qpsk = [&] {
        const auto q = static_cast<double>(rng() & 3u);
        return std::polar(pilot_amp, std::numbers::pi / 4 + q * std::numbers::pi / 2);
    };
    std::size_t t = 0;
    for (std::size_t s = 0; s < slots; ++s) {
        if (pilot_period > 0 && s % static_cast<std::size_t>(pilot_period + 1) == 0) {
            frame.pilot_mask[s] = 1;
            frame.x[s] = qpsk();
            frame.y[s] = qpsk();
            continue;
        }
        const auto& v = frame.ask[t++];
        frame.x[s] = frame.scale * std::complex<double>(v[0], v[1]);
        frame.y[s] = frame.scale * std::complex<double>(v[2], v[3]);
    }
    return frame;
}

/// Transmitted data symbols and their labels, pilots excluded.
struct FrameReferences {
    std::vector<std::complex<double>> x, y;
    std::vector<std::array<std::int8_t, 4>> ask;
    std::vector<std::array<std::uint32_t, 4>> labels;
    double scale = 1;
    int M = 8;
};

inline FrameReferences frame_to_references(const DualPolFrame& frame) {
    FrameReferences ref;
    ref.scale = frame.scale;
    ref.M = frame.M;
    ref.ask = frame.ask;
    ref.x.reserve(frame.data_symbol_count());
    ref.y.reserve(frame.data_symbol_count());
    for (std::size_t s = 0; s < frame.slot_count(); ++s) {
        if (frame.is_pilot(s)) continue;
        ref.x.push_back(frame.x[s]);
        ref.y.push_back(frame.y[s]);
    }
    ref.labels.resize(frame.ask.size());
    for (std::size_t t = 0; t < frame.ask.size(); ++t)
        for (std::size_t d = 0; d < 4; ++d) ref.labels[t][d] = ask_label(frame.ask[t][d], frame.M);
    return ref;
}

}  // namespace essnl
