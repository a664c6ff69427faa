#pragma once

// Enumerative sphere shaping (ESS).
//
// A bounded-energy trellis counts, for every prefix state, the number of
// amplitude suffixes whose total energy stays below a sphere radius. Shaping
// is lexicographic unranking over that trellis and deshaping is ranking.
//
// Accumulated energies after n amplitudes are always n + 8j (every odd square
// is 1 mod 8), so a state is addressed by (n, j) with j = (e - n) / 8 and the
// table is dense in j. With J = floor((Emax - N) / 8) every stage has the same
// J + 1 admissible levels.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>

#include "essnl/errors.hpp"

namespace essnl {

using BigInt = boost::multiprecision::cpp_int;

/// Positive ASK amplitude levels {1, 3, ..., M-1}.
class AmplitudeAlphabet {
  public:
    explicit AmplitudeAlphabet(int M = 8) : M_(M) {
        if (M < 4 || M % 2 != 0 || M > 64)
            throw ConfigurationError("ASK order M must be even, 4 <= M <= 64, got " + std::to_string(M));
        for (int a = 1; a < M; a += 2) amplitudes_.push_back(a);
    }

    int order() const noexcept { return M_; }
    int size() const noexcept { return static_cast<int>(amplitudes_.size()); }
    int amplitude(int i) const { return amplitudes_.at(static_cast<std::size_t>(i)); }
    const std::vector<int>& amplitudes() const noexcept { return amplitudes_; }
    /// Energy increment of letter i on the 8-lattice: (a^2 - 1) / 8.
    int level_step(int i) const { return (amplitude(i) * amplitude(i) - 1) / 8; }
    int max_level_step() const { return level_step(size() - 1); }

    /// Index of amplitude a, or -1 when a is not a letter.
    int index_of(int a) const noexcept {
        if (a < 1 || a >= M_ || a % 2 == 0) return -1;
        return (a - 1) / 2;
    }

    friend bool operator==(const AmplitudeAlphabet&, const AmplitudeAlphabet&) = default;

  private:
    int M_;
    std::vector<int> amplitudes_;
};

// ---------------------------------------------------------------------------
// Count representations

/// Count stored with a bounded mantissa: value = mantissa * 2^exponent.
/// Canonical form: exponent == 0, or mantissa has exactly `bits` bits.
/// Packed into 64 bits (48-bit mantissa, 16-bit exponent).
class BoundedCount {
  public:
    static constexpr int max_mantissa_bits = 48;

    constexpr BoundedCount() = default;
    constexpr BoundedCount(std::uint64_t mantissa, int exponent)
        : packed_((static_cast<std::uint64_t>(exponent) << 48) | mantissa) {}

    constexpr std::uint64_t mantissa() const noexcept { return packed_ & ((std::uint64_t{1} << 48) - 1); }
    constexpr int exponent() const noexcept { return static_cast<int>(packed_ >> 48); }
    constexpr bool is_zero() const noexcept { return mantissa() == 0; }

    friend constexpr bool operator==(BoundedCount, BoundedCount) = default;

    /// Rounds an exact value toward zero to `bits` significant bits.
    static BoundedCount round_down(const BigInt& value, int bits) {
        if (value.is_zero()) return {};
        const int len = static_cast<int>(boost::multiprecision::msb(value)) + 1;
        if (len <= bits) return {static_cast<std::uint64_t>(value), 0};
        const int shift = len - bits;
        check_exponent(shift);
        return {static_cast<std::uint64_t>(value >> shift), shift};
    }

    /// Exact sum of up to a few counts rounded down to `bits` bits.
    static BoundedCount sum_round_down(std::span<const BoundedCount> terms, int bits) {
        int lo = std::numeric_limits<int>::max();
        int hi = 0;
        for (auto t : terms) {
            if (t.is_zero()) continue;
            lo = std::min(lo, t.exponent());
            hi = std::max(hi, t.exponent());
        }
        if (lo == std::numeric_limits<int>::max()) return {};
        if (hi - lo <= 62) {
            unsigned __int128 s = 0;
            for (auto t : terms)
                if (!t.is_zero()) s += static_cast<unsigned __int128>(t.mantissa()) << (t.exponent() - lo);
            return normalize(s, lo, bits);
        }
        BigInt s = 0;
        for (auto t : terms) s += t.to_integer();
        return round_down(s, bits);
    }

    BigInt to_integer() const {
        BigInt v = mantissa();
        return v << exponent();
    }

    long double to_long_double() const { return std::ldexp(static_cast<long double>(mantissa()), exponent()); }

  private:
    static void check_exponent(int e) {
        if (e >= (1 << 16)) throw PrecisionError("bounded count exponent overflow");
    }

    static BoundedCount normalize(unsigned __int128 s, int exponent, int bits) {
        int len = 0;
        for (auto t = s; t != 0; t >>= 1) ++len;
        if (len > bits) {
            const int shift = len - bits;
            check_exponent(exponent + shift);
            return {static_cast<std::uint64_t>(s >> shift), exponent + shift};
        }
        // Pull the exponent down while keeping the mantissa within `bits`.
        const int room = std::min(exponent, bits - len);
        return {static_cast<std::uint64_t>(s << room), exponent - room};
    }

    std::uint64_t packed_ = 0;
};

using ExactCount = BigInt;

/// x * 2^e with x a long double; used for count ratios.
struct ScaledValue {
    long double mantissa = 0;
    long exponent = 0;
};

namespace detail {

inline ScaledValue scaled(const BigInt& v) {
    if (v.is_zero()) return {};
    const long len = static_cast<long>(boost::multiprecision::msb(v)) + 1;
    if (len <= 64) return {static_cast<long double>(static_cast<std::uint64_t>(v)), 0};
    const long shift = len - 64;
    return {static_cast<long double>(static_cast<std::uint64_t>(v >> shift)), shift};
}
inline ScaledValue scaled(BoundedCount v) {
    return {static_cast<long double>(v.mantissa()), v.exponent()};
}

inline BigInt to_integer(const BigInt& v) { return v; }
inline BigInt to_integer(BoundedCount v) { return v.to_integer(); }
inline bool is_zero(const BigInt& v) { return v.is_zero(); }
inline bool is_zero(BoundedCount v) { return v.is_zero(); }

inline bool index_below(const BigInt& index, const BigInt& count) { return index < count; }
inline bool index_below(const BigInt& index, BoundedCount count) {
    if (count.is_zero()) return false;
    if (index.is_zero()) return true;
    // index < m * 2^x  <=>  floor(index / 2^x) < m
    const long len = static_cast<long>(boost::multiprecision::msb(index)) + 1;
    if (len - count.exponent() > 64) return false;
    const BigInt high = index >> count.exponent();
    return static_cast<std::uint64_t>(high) < count.mantissa();
}

inline void subtract(BigInt& index, const BigInt& count) { index -= count; }
inline void subtract(BigInt& index, BoundedCount count) { index -= count.to_integer(); }
inline void add(BigInt& index, const BigInt& count) { index += count; }
inline void add(BigInt& index, BoundedCount count) { index += count.to_integer(); }

/// a / b for nonnegative scaled values, b > 0.
inline long double ratio(ScaledValue a, ScaledValue b) {
    if (a.mantissa == 0) return 0;
    return std::ldexp(a.mantissa / b.mantissa, static_cast<int>(a.exponent - b.exponent));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Trellis

enum class Arithmetic { exact, bounded };

template <class Count>
class BasicTrellis {
  public:
    using count_type = Count;

    BasicTrellis(int N, AmplitudeAlphabet alphabet, long max_energy, int mantissa_bits, std::vector<Count> counts)
        : N_(N),
          alphabet_(std::move(alphabet)),
          max_energy_(max_energy),
          levels_(static_cast<int>((max_energy - N) / 8) + 1),
          mantissa_bits_(mantissa_bits),
          counts_(std::move(counts)) {}

    int blocklength() const noexcept { return N_; }
    long max_energy() const noexcept { return max_energy_; }
    const AmplitudeAlphabet& alphabet() const noexcept { return alphabet_; }
    /// Number of energy levels per stage (J + 1).
    int levels() const noexcept { return levels_; }
    /// 0 for exact counts.
    int mantissa_bits() const noexcept { return mantissa_bits_; }
    Arithmetic arithmetic() const noexcept {
        return std::is_same_v<Count, BoundedCount> ? Arithmetic::bounded : Arithmetic::exact;
    }

    /// T_n(j); zero when j lies outside the sphere.
    const Count& count(int n, int level) const {
        static const Count zero{};
        if (level < 0 || level >= levels_) return zero;
        return counts_[static_cast<std::size_t>(n) * levels_ + level];
    }
    /// T_0(0): number of sequences the trellis can index.
    const Count& total() const { return count(0, 0); }
    BigInt total_integer() const { return detail::to_integer(total()); }
    /// Accumulated energy of state (n, level).
    long energy_of(int n, int level) const { return n + 8L * level; }

  private:
    int N_;
    AmplitudeAlphabet alphabet_;
    long max_energy_;
    int levels_;
    int mantissa_bits_;
    std::vector<Count> counts_;
};

using ExactTrellis = BasicTrellis<ExactCount>;
using BoundedTrellis = BasicTrellis<BoundedCount>;

namespace detail {

inline void check_trellis_args(int N, long max_energy) {
    if (N < 1) throw ConfigurationError("blocklength must be >= 1");
    if (max_energy < N)
        throw EmptyCodebookError("Emax = " + std::to_string(max_energy) + " is below the minimum sequence energy " +
                                 std::to_string(N));
}

inline void check_mantissa_bits(int bits) {
    if (bits < 8 || bits > BoundedCount::max_mantissa_bits)
        throw ConfigurationError("mantissa_bits must lie in [8, 48], got " + std::to_string(bits));
}

}  // namespace detail

/// Exact (unbounded integer) trellis.
inline ExactTrellis build_trellis(int N, const AmplitudeAlphabet& alphabet, long max_energy) {
    detail::check_trellis_args(N, max_energy);
    const int levels = static_cast<int>((max_energy - N) / 8) + 1;
    std::vector<ExactCount> counts(static_cast<std::size_t>(N + 1) * levels);
    auto at = [&](int n, int j) -> ExactCount& { return counts[static_cast<std::size_t>(n) * levels + j]; };
    for (int j = 0; j < levels; ++j) at(N, j) = 1;
    for (int n = N - 1; n >= 0; --n) {
        for (int j = 0; j < levels; ++j) {
            ExactCount& c = at(n, j);
            for (int i = 0; i < alphabet.size(); ++i) {
                const int child = j + alphabet.level_step(i);
                if (child >= levels) break;
                c += at(n + 1, child);
            }
        }
    }
    return {N, alphabet, max_energy, 0, std::move(counts)};
}

/// Bounded-precision trellis: every stored count is the exact sum of its
/// stored children rounded toward zero to `mantissa_bits` bits.
inline BoundedTrellis build_bounded_trellis(int N, const AmplitudeAlphabet& alphabet, long max_energy,
                                            int mantissa_bits) {
    detail::check_trellis_args(N, max_energy);
    detail::check_mantissa_bits(mantissa_bits);
    const int levels = static_cast<int>((max_energy - N) / 8) + 1;
    std::vector<BoundedCount> counts(static_cast<std::size_t>(N + 1) * levels);
    auto idx = [&](int n, int j) { return static_cast<std::size_t>(n) * levels + j; };
    for (int j = 0; j < levels; ++j) counts[idx(N, j)] = BoundedCount{1, 0};
    std::vector<BoundedCount> terms(static_cast<std::size_t>(alphabet.size()));
    for (int n = N - 1; n >= 0; --n) {
        for (int j = 0; j < levels; ++j) {
            std::size_t used = 0;
            for (int i = 0; i < alphabet.size(); ++i) {
                const int child = j + alphabet.level_step(i);
                if (child >= levels) break;
                terms[used++] = counts[idx(n + 1, child)];
            }
            counts[idx(n, j)] = BoundedCount::sum_round_down(std::span(terms.data(), used), mantissa_bits);
        }
    }
    return {N, alphabet, max_energy, mantissa_bits, std::move(counts)};
}

/// Bounded-precision copy of an exact trellis. Counts are recomputed from the
/// rounded children (rounding each exact count independently would break
/// invertibility).
inline BoundedTrellis quantize_trellis(const ExactTrellis& exact, int mantissa_bits) {
    return build_bounded_trellis(exact.blocklength(), exact.alphabet(), exact.max_energy(), mantissa_bits);
}

/// As above, and checks that the quantized trellis still indexes 2^k sequences.
inline BoundedTrellis quantize_trellis(const ExactTrellis& exact, int mantissa_bits, int k) {
    auto q = quantize_trellis(exact, mantissa_bits);
    if (q.total_integer() < (BigInt{1} << k))
        throw PrecisionError("quantized trellis indexes fewer than 2^" + std::to_string(k) +
                             " sequences; increase mantissa_bits (currently " + std::to_string(mantissa_bits) + ")");
    return q;
}

// ---------------------------------------------------------------------------
// Sphere radius for a target rate

namespace detail {

inline void check_rate(int N, int k, const AmplitudeAlphabet& alphabet) {
    if (N < 1 || k < 0) throw ConfigurationError("need N >= 1 and k >= 0");
    // 2^k <= (M/2)^N
    const double capacity_bits = N * std::log2(static_cast<double>(alphabet.size()));
    if (k > capacity_bits + 1e-9)
        throw InfeasibleRateError("2^" + std::to_string(k) + " sequences exceed (M/2)^N for N = " +
                                  std::to_string(N));
}

/// log2 of the number of length-N sequences with energy <= N + 8J, for all J,
/// evaluated in scaled long double (stage-wise renormalized).
inline std::vector<long double> log2_cumulative_counts(int N, const AmplitudeAlphabet& alphabet) {
    const int width = N * alphabet.max_level_step() + 1;
    std::vector<long double> cur(static_cast<std::size_t>(width), 0.0L), next(cur.size());
    cur[0] = 1.0L;
    long double log2_scale = 0;
    int reach = 0;
    for (int n = 1; n <= N; ++n) {
        std::fill(next.begin(), next.begin() + reach + alphabet.max_level_step() + 1, 0.0L);
        for (int j = 0; j <= reach; ++j) {
            if (cur[j] == 0) continue;
            for (int i = 0; i < alphabet.size(); ++i) next[j + alphabet.level_step(i)] += cur[j];
        }
        reach += alphabet.max_level_step();
        // Renormalize by the alphabet size to keep values finite.
        const long double s = static_cast<long double>(alphabet.size());
        for (int j = 0; j <= reach; ++j) next[j] /= s;
        log2_scale += std::log2(s);
        std::swap(cur, next);
    }
    std::vector<long double> out(cur.size());
    long double acc = 0;
    for (std::size_t j = 0; j < cur.size(); ++j) {
        acc += cur[j];
        out[j] = acc > 0 ? std::log2(acc) + log2_scale : -std::numeric_limits<long double>::infinity();
    }
    return out;
}

inline BoundedCount bounded_total(int N, const AmplitudeAlphabet& alphabet, int levels, int mantissa_bits) {
    std::vector<BoundedCount> cur(static_cast<std::size_t>(levels), BoundedCount{1, 0}), prev(cur.size());
    std::vector<BoundedCount> terms(static_cast<std::size_t>(alphabet.size()));
    for (int n = N - 1; n >= 0; --n) {
        std::swap(cur, prev);
        for (int j = 0; j < levels; ++j) {
            std::size_t used = 0;
            for (int i = 0; i < alphabet.size(); ++i) {
                const int child = j + alphabet.level_step(i);
                if (child >= levels) break;
                terms[used++] = prev[static_cast<std::size_t>(child)];
            }
            cur[static_cast<std::size_t>(j)] = BoundedCount::sum_round_down(std::span(terms.data(), used), mantissa_bits);
        }
    }
    return cur[0];
}

}  // namespace detail

/// Smallest Emax on the lattice N, N+8, N+16, ... whose exact sphere holds at
/// least 2^k sequences.
inline long min_emax_for_rate(int N, int k, const AmplitudeAlphabet& alphabet) {
    detail::check_rate(N, k, alphabet);
    // Number of length-n sequences per exact energy level, accumulated stage by stage.
    const int step_max = alphabet.max_level_step();
    std::vector<BigInt> cur(static_cast<std::size_t>(N) * step_max + 1), next(cur.size());
    cur[0] = 1;
    int reach = 0;
    for (int n = 1; n <= N; ++n) {
        for (int j = 0; j <= reach + step_max; ++j) next[j] = 0;
        for (int j = 0; j <= reach; ++j) {
            if (cur[j].is_zero()) continue;
            for (int i = 0; i < alphabet.size(); ++i) next[j + alphabet.level_step(i)] += cur[j];
        }
        reach += step_max;
        std::swap(cur, next);
    }
    const BigInt target = BigInt{1} << k;
    BigInt acc = 0;
    for (int j = 0; j <= reach; ++j) {
        acc += cur[j];
        if (acc >= target) return N + 8L * j;
    }
    throw InfeasibleRateError("rate infeasible for alphabet");
}

/// Smallest Emax on the lattice for which the bounded-precision trellis holds
/// at least 2^k sequences. Starts from a floating-point estimate and scans.
inline long min_emax_for_rate_bounded(int N, int k, const AmplitudeAlphabet& alphabet, int mantissa_bits) {
    detail::check_rate(N, k, alphabet);
    detail::check_mantissa_bits(mantissa_bits);
    const auto log2_counts = detail::log2_cumulative_counts(N, alphabet);
    int j = 0;
    while (j + 1 < static_cast<int>(log2_counts.size()) && log2_counts[j] < k - 1e-6L) ++j;
    const BigInt target = BigInt{1} << k;
    auto fits = [&](int level) {
        return detail::bounded_total(N, alphabet, level + 1, mantissa_bits).to_integer() >= target;
    };
    const int last = static_cast<int>(log2_counts.size()) - 1;
    while (j > 0 && fits(j - 1)) --j;
    while (!fits(j)) {
        if (j == last)
            throw PrecisionError("bounded trellis cannot index 2^" + std::to_string(k) +
                                 " sequences; increase mantissa_bits");
        ++j;
    }
    return N + 8L * j;
}

// ---------------------------------------------------------------------------
// Shaping and deshaping

struct ShapedBlock {
    BigInt index;
    std::vector<int> amplitudes;
    long energy = 0;
};

/// Lexicographically index-th sequence of the trellis (alphabet in ascending order).
template <class Count>
ShapedBlock shape(const BigInt& index, const BasicTrellis<Count>& trellis) {
    if (index < 0 || !detail::index_below(index, trellis.total()))
        throw IndexError("shaping index outside [0, T_0(0))");
    const auto& alphabet = trellis.alphabet();
    ShapedBlock out;
    out.index = index;
    out.amplitudes.reserve(static_cast<std::size_t>(trellis.blocklength()));
    BigInt rest = index;
    int level = 0;
    for (int n = 0; n < trellis.blocklength(); ++n) {
        int chosen = -1;
        for (int i = 0; i < alphabet.size(); ++i) {
            const auto& c = trellis.count(n + 1, level + alphabet.level_step(i));
            if (detail::is_zero(c)) break;
            if (detail::index_below(rest, c)) {
                chosen = i;
                break;
            }
            detail::subtract(rest, c);
        }
        // Only reachable if stored counts exceed the sum of their children.
        if (chosen < 0) throw PrecisionError("trellis is not invertible at stage " + std::to_string(n));
        level += alphabet.level_step(chosen);
        out.amplitudes.push_back(alphabet.amplitude(chosen));
    }
    out.energy = trellis.energy_of(trellis.blocklength(), level);
    return out;
}

/// Lexicographic rank of an amplitude sequence.
template <class Count>
BigInt deshape(std::span<const int> amplitudes, const BasicTrellis<Count>& trellis) {
    if (static_cast<int>(amplitudes.size()) != trellis.blocklength())
        throw InvalidSequenceError("sequence length differs from trellis blocklength");
    const auto& alphabet = trellis.alphabet();
    long energy = 0;
    for (int a : amplitudes) {
        if (alphabet.index_of(a) < 0) throw InvalidSequenceError("amplitude " + std::to_string(a) + " not in alphabet");
        energy += static_cast<long>(a) * a;
    }
    if (energy > trellis.max_energy()) throw InvalidSequenceError("sequence energy exceeds Emax");
    BigInt rank = 0;
    int level = 0;
    for (int n = 0; n < trellis.blocklength(); ++n) {
        const int letter = alphabet.index_of(amplitudes[static_cast<std::size_t>(n)]);
        for (int i = 0; i < letter; ++i) detail::add(rank, trellis.count(n + 1, level + alphabet.level_step(i)));
        level += alphabet.level_step(letter);
    }
    if (!detail::index_below(rank, trellis.total()))
        throw InvalidSequenceError("sequence lies outside the bounded-precision image");
    return rank;
}

/// Uniform k-bit index.
template <class Rng>
BigInt random_index(int k, Rng& rng) {
    if (k == 0) return 0;
    std::vector<std::uint64_t> words(static_cast<std::size_t>((k + 63) / 64));
    for (auto& w : words) w = rng();
    if (k % 64 != 0) words.back() &= (std::uint64_t{1} << (k % 64)) - 1;
    BigInt v;
    // import_bits takes most-significant chunk first
    boost::multiprecision::import_bits(v, words.rbegin(), words.rend(), 64);
    return v;
}

// ---------------------------------------------------------------------------
// Amplitude statistics

/// Probability of each alphabet letter, averaged over positions and over the
/// shaper image.
struct AmplitudeDistribution {
    std::vector<double> probabilities;

    double operator[](std::size_t i) const { return probabilities[i]; }
    std::size_t size() const noexcept { return probabilities.size(); }
};

inline double entropy_bits(const AmplitudeDistribution& dist) {
    double h = 0;
    for (double p : dist.probabilities)
        if (p > 0) h -= p * std::log2(p);
    return h;
}

/// Mean a^2 under the distribution.
inline double mean_energy(const AmplitudeDistribution& dist, const AmplitudeAlphabet& alphabet) {
    double e = 0;
    for (int i = 0; i < alphabet.size(); ++i) {
        const double a = alphabet.amplitude(i);
        e += dist[static_cast<std::size_t>(i)] * a * a;
    }
    return e;
}

/// H(A) - k/N in bits per real dimension.
inline double rate_loss(const AmplitudeDistribution& dist, int k, int N) {
    return entropy_bits(dist) - static_cast<double>(k) / N;
}

enum class DistributionMethod { automatic, enumerate, trellis };

namespace detail {

template <class Count>
AmplitudeDistribution distribution_by_enumeration(const BasicTrellis<Count>& trellis, int k) {
    const auto& alphabet = trellis.alphabet();
    std::vector<double> hits(static_cast<std::size_t>(alphabet.size()), 0.0);
    const std::uint64_t count = std::uint64_t{1} << k;
    for (std::uint64_t i = 0; i < count; ++i) {
        const auto block = shape(BigInt{i}, trellis);
        for (int a : block.amplitudes) hits[static_cast<std::size_t>(alphabet.index_of(a))] += 1;
    }
    const double norm = static_cast<double>(count) * trellis.blocklength();
    for (auto& h : hits) h /= norm;
    return {hits};
}

// Letter frequencies over the first 2^k sequences. The prefix [0, 2^k) splits
// into whole subtrees hanging off the unranking path of index 2^k; the mean
// letter count over a whole subtree follows from a backward recursion with
// child weights T_{n+1}(child) / sum of children. For bounded counts this
// treats each stored count as the sum of its children, which is exact up to a
// relative N * 2^-mantissa_bits.
template <class Count>
AmplitudeDistribution distribution_by_trellis(const BasicTrellis<Count>& trellis, int k) {
    const auto& alphabet = trellis.alphabet();
    const int N = trellis.blocklength();
    const int A = alphabet.size();
    const int levels = trellis.levels();
    const BigInt limit = BigInt{1} << k;
    const BigInt total = trellis.total_integer();
    if (limit > total) throw IndexError("2^k exceeds the number of trellis sequences");

    // Unranking path of index `limit`; whole image when limit == total.
    const bool whole = (limit == total);
    std::vector<int> path_letter(static_cast<std::size_t>(N), 0), path_level(static_cast<std::size_t>(N + 1), 0);
    if (!whole) {
        const auto block = shape(limit, trellis);
        int level = 0;
        for (int n = 0; n < N; ++n) {
            path_level[static_cast<std::size_t>(n)] = level;
            path_letter[static_cast<std::size_t>(n)] = alphabet.index_of(block.amplitudes[static_cast<std::size_t>(n)]);
            level += alphabet.level_step(path_letter[static_cast<std::size_t>(n)]);
        }
    }
    // Prefix letter counts along the path.
    std::vector<std::vector<int>> prefix(static_cast<std::size_t>(N + 1), std::vector<int>(static_cast<std::size_t>(A), 0));
    for (int n = 0; n < N; ++n) {
        prefix[static_cast<std::size_t>(n + 1)] = prefix[static_cast<std::size_t>(n)];
        ++prefix[static_cast<std::size_t>(n + 1)][static_cast<std::size_t>(path_letter[static_cast<std::size_t>(n)])];
    }

    const ScaledValue limit_scaled = scaled(limit);
    std::vector<long double> acc(static_cast<std::size_t>(A), 0.0L);
    // f[j * A + b]: mean number of letter b in a suffix drawn from state (n, j).
    std::vector<long double> f_next(static_cast<std::size_t>(levels) * A, 0.0L), f_cur(f_next.size());
    std::vector<ScaledValue> child(static_cast<std::size_t>(A));

    auto add_subtree = [&](int n, int level, int letter_prefix_stage, int letter) {
        // Subtree rooted at (n, level) reached by the path prefix of length
        // letter_prefix_stage followed by `letter` (or nothing when letter < 0).
        const auto& c = trellis.count(n, level);
        if (is_zero(c)) return;
        const long double weight = ratio(scaled(c), limit_scaled);
        const auto& pre = prefix[static_cast<std::size_t>(letter_prefix_stage)];
        const long double* f = f_next.data() + static_cast<std::size_t>(level) * A;
        for (int b = 0; b < A; ++b) {
            long double occ = pre[static_cast<std::size_t>(b)] + f[b];
            if (b == letter) occ += 1;
            acc[static_cast<std::size_t>(b)] += weight * occ;
        }
    };

    for (int n = N - 1; n >= 0; --n) {
        // f_next holds stage n + 1; handle subtrees rooted at stage n + 1.
        if (!whole) {
            const int pl = path_level[static_cast<std::size_t>(n)];
            for (int a = 0; a < path_letter[static_cast<std::size_t>(n)]; ++a)
                add_subtree(n + 1, pl + alphabet.level_step(a), n, a);
        }
        for (int j = 0; j < levels; ++j) {
            long double* out = f_cur.data() + static_cast<std::size_t>(j) * A;
            std::fill(out, out + A, 0.0L);
            int used = 0;
            ScaledValue sum_ref{};
            for (int a = 0; a < A; ++a) {
                const int cj = j + alphabet.level_step(a);
                if (cj >= levels) break;
                child[static_cast<std::size_t>(a)] = scaled(trellis.count(n + 1, cj));
                ++used;
            }
            if (used == 0) continue;
            // Normalize by the exact sum of the children (as long double).
            sum_ref = child[0];
            long double sum = 0;
            for (int a = 0; a < used; ++a) sum += ratio(child[static_cast<std::size_t>(a)], sum_ref);
            for (int a = 0; a < used; ++a) {
                const long double w = ratio(child[static_cast<std::size_t>(a)], sum_ref) / sum;
                const long double* fc = f_next.data() + static_cast<std::size_t>(j + alphabet.level_step(a)) * A;
                for (int b = 0; b < A; ++b) out[b] += w * fc[b];
                out[a] += w;
            }
        }
        std::swap(f_cur, f_next);
    }
    if (whole) {
        // f_next is stage 0.
        for (int b = 0; b < A; ++b) acc[static_cast<std::size_t>(b)] = f_next[static_cast<std::size_t>(b)];
    }
    AmplitudeDistribution dist;
    dist.probabilities.resize(static_cast<std::size_t>(A));
    long double norm = 0;
    for (auto v : acc) norm += v;
    for (int b = 0; b < A; ++b)
        dist.probabilities[static_cast<std::size_t>(b)] = static_cast<double>(acc[static_cast<std::size_t>(b)] / norm);
    return dist;
}

}  // namespace detail

/// Letter distribution of the shaper image (first 2^k sequences).
template <class Count>
AmplitudeDistribution amplitude_distribution(const BasicTrellis<Count>& trellis, int k,
                                             DistributionMethod method = DistributionMethod::automatic) {
    if (trellis.total_integer() < (BigInt{1} << k)) throw IndexError("2^k exceeds the number of trellis sequences");
    if (method == DistributionMethod::automatic) {
        const double log2_all = trellis.blocklength() * std::log2(static_cast<double>(trellis.alphabet().size()));
        method = (log2_all <= 20.0) ? DistributionMethod::enumerate : DistributionMethod::trellis;
    }
    if (method == DistributionMethod::enumerate) {
        if (k > 30) throw ConfigurationError("enumeration limited to k <= 30");
        return detail::distribution_by_enumeration(trellis, k);
    }
    return detail::distribution_by_trellis(trellis, k);
}

/// Maxwell-Boltzmann distribution p(a) ~ exp(-lambda a^2) with the requested
/// entropy (bits), found by bisection on lambda.
inline AmplitudeDistribution maxwell_boltzmann(const AmplitudeAlphabet& alphabet, double entropy) {
    const double h_max = std::log2(static_cast<double>(alphabet.size()));
    if (entropy <= 0 || entropy > h_max + 1e-12)
        throw ConfigurationError("Maxwell-Boltzmann entropy must lie in (0, log2(M/2)]");
    auto make = [&](double lambda) {
        AmplitudeDistribution d;
        double z = 0;
        for (int a : alphabet.amplitudes()) {
            d.probabilities.push_back(std::exp(-lambda * (a * a - 1)));
            z += d.probabilities.back();
        }
        for (auto& p : d.probabilities) p /= z;
        return d;
    };
    double lo = 0, hi = 10;
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (entropy_bits(make(mid)) > entropy) lo = mid;
        else hi = mid;
    }
    return make(0.5 * (lo + hi));
}

// ---------------------------------------------------------------------------
// Runtime-selected shaper

/// ESS shaper with a fixed rate k/N; exact or bounded-precision arithmetic.
class Shaper {
  public:
    struct Options {
        Arithmetic arithmetic = Arithmetic::exact;
        int mantissa_bits = 32;
    };

    Shaper(int N, int k, const AmplitudeAlphabet& alphabet, Options options)
        : k_(k), trellis_(make_trellis(N, k, alphabet, options)) {
        distribution_ = std::visit([&](const auto& t) { return amplitude_distribution(t, k_); }, trellis_);
    }

    int blocklength() const {
        return std::visit([](const auto& t) { return t.blocklength(); }, trellis_);
    }
    int bits() const noexcept { return k_; }
    long max_energy() const {
        return std::visit([](const auto& t) { return t.max_energy(); }, trellis_);
    }
    const AmplitudeAlphabet& alphabet() const {
        return std::visit([](const auto& t) -> const AmplitudeAlphabet& { return t.alphabet(); }, trellis_);
    }
    Arithmetic arithmetic() const {
        return std::visit([](const auto& t) { return t.arithmetic(); }, trellis_);
    }
    int mantissa_bits() const {
        return std::visit([](const auto& t) { return t.mantissa_bits(); }, trellis_);
    }
    BigInt total() const {
        return std::visit([](const auto& t) { return t.total_integer(); }, trellis_);
    }
    const AmplitudeDistribution& distribution() const noexcept { return distribution_; }
    double entropy() const { return entropy_bits(distribution_); }
    double rate_loss() const { return essnl::rate_loss(distribution_, k_, blocklength()); }

    ShapedBlock shape(const BigInt& index) const {
        if (index >= (BigInt{1} << k_)) throw IndexError("index does not fit in k bits");
        return std::visit([&](const auto& t) { return essnl::shape(index, t); }, trellis_);
    }
    BigInt deshape(std::span<const int> amplitudes) const {
        return std::visit([&](const auto& t) { return essnl::deshape(amplitudes, t); }, trellis_);
    }

    /// Shapes a uniformly drawn k-bit index.
    template <class Rng>
    std::vector<int> random_block(Rng& rng) const {
        return shape(random_index(k_, rng)).amplitudes;
    }

  private:
    using Variant = std::variant<ExactTrellis, BoundedTrellis>;

    static Variant make_trellis(int N, int k, const AmplitudeAlphabet& alphabet, Options options) {
        if (options.arithmetic == Arithmetic::exact) return build_trellis(N, alphabet, min_emax_for_rate(N, k, alphabet));
        const long emax = min_emax_for_rate_bounded(N, k, alphabet, options.mantissa_bits);
        return build_bounded_trellis(N, alphabet, emax, options.mantissa_bits);
    }

    int k_;
    Variant trellis_;
    AmplitudeDistribution distribution_;
};

}  // namespace essnl
