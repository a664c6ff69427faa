#pragma once

// Experiment orchestration: one simulated point runs the whole chain
// (shape, map, pulse-shape, multiplex, propagate, CDC, select, phase-correct,
// metrics); sweeps fan points out over a worker pool and reassemble them in
// a fixed order.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "essnl/config.hpp"
#include "essnl/errors.hpp"
#include "essnl/fiber.hpp"
#include "essnl/mapper.hpp"
#include "essnl/metrics.hpp"
#include "essnl/seeding.hpp"
#include "essnl/shaper.hpp"

namespace essnl {

struct SweepPoint {
    int N = 64;
    MappingStrategy mapping = MappingStrategy::four_d;
    double power_dbm = 0;
};

/// One result row: sweep coordinates plus the point's metrics.
struct MetricsRecord {
    double symbol_rate_gbd = 0;
    int num_channels = 0;
    int num_spans = 0;
    int N = 0;
    int k = 0;
    long emax = 0;
    std::string mapping;
    std::string arithmetic;
    std::string nonlinear_model;
    double launch_power_dbm = 0;
    std::uint64_t seed = 0;

    double snr_db_mean = 0;
    double snr_db_stderr = 0;  ///< over blocks
    std::vector<double> snr_db_per_channel;
    std::vector<double> snr_db_per_channel_pol;  ///< channel-major: x, y
    double air_bits_per_2d = 0;
    std::vector<double> air_per_channel;
    double H_X = 0, H_A = 0, R_loss = 0;
    double sum_bit_entropies = 0;
    double ellipticity_outer_ring = std::numeric_limits<double>::quiet_NaN();
    double ellipticity_mean = std::numeric_limits<double>::quiet_NaN();
    int outer_ring_energy = 0;
    std::vector<RingEllipticity> ellipticity_rings;
    int noise_points = 0;
    int noise_excluded = 0;

    double p_opt_dbm = std::numeric_limits<double>::quiet_NaN();
    std::string branch;  ///< low, high or peak within a power sweep
    double runtime_s = 0;
    std::string fingerprint;

    /// Field-wise equality with NaN equal to NaN.
    bool operator==(const MetricsRecord& o) const {
        auto same = [](double a, double b) { return a == b || (std::isnan(a) && std::isnan(b)); };
        auto same_vec = [&](const std::vector<double>& a, const std::vector<double>& b) {
            return a.size() == b.size() && std::equal(a.begin(), a.end(), b.begin(), same);
        };
        return same(symbol_rate_gbd, o.symbol_rate_gbd) && num_channels == o.num_channels &&
               num_spans == o.num_spans && N == o.N && k == o.k && emax == o.emax && mapping == o.mapping &&
               arithmetic == o.arithmetic && nonlinear_model == o.nonlinear_model &&
               same(launch_power_dbm, o.launch_power_dbm) && seed == o.seed && same(snr_db_mean, o.snr_db_mean) &&
               same(snr_db_stderr, o.snr_db_stderr) && same_vec(snr_db_per_channel, o.snr_db_per_channel) &&
               same_vec(snr_db_per_channel_pol, o.snr_db_per_channel_pol) &&
               same(air_bits_per_2d, o.air_bits_per_2d) && same_vec(air_per_channel, o.air_per_channel) &&
               same(H_X, o.H_X) && same(H_A, o.H_A) && same(R_loss, o.R_loss) &&
               same(sum_bit_entropies, o.sum_bit_entropies) &&
               same(ellipticity_outer_ring, o.ellipticity_outer_ring) &&
               same(ellipticity_mean, o.ellipticity_mean) && outer_ring_energy == o.outer_ring_energy &&
               ellipticity_rings == o.ellipticity_rings &&
               noise_points == o.noise_points && noise_excluded == o.noise_excluded &&
               same(p_opt_dbm, o.p_opt_dbm) && branch == o.branch && same(runtime_s, o.runtime_s) &&
               fingerprint == o.fingerprint;
    }
};

inline void PrintTo(const MetricsRecord& r, std::ostream* os) {
    *os << "{N=" << r.N << " " << r.mapping << " P=" << r.launch_power_dbm << " snr=" << r.snr_db_mean
        << " air=" << r.air_bits_per_2d << " branch=" << r.branch << "}";
}

/// Thread-safe cache of shapers keyed by (N, k, arithmetic, mantissa bits).
class ShaperCache {
  public:
    std::shared_ptr<const Shaper> get(int N, int k, int M, Arithmetic arithmetic, int mantissa_bits) {
        const auto key = std::make_tuple(N, k, M, arithmetic, mantissa_bits);
        std::lock_guard lock(mutex_);
        if (auto it = cache_.find(key); it != cache_.end()) return it->second;
        auto s = std::make_shared<const Shaper>(N, k, AmplitudeAlphabet(M), Shaper::Options{arithmetic, mantissa_bits});
        cache_.emplace(key, s);
        return s;
    }

  private:
    std::mutex mutex_;
    std::map<std::tuple<int, int, int, Arithmetic, int>, std::shared_ptr<const Shaper>> cache_;
};

namespace detail {

template <class F>
auto stage(const char* name, F&& f) -> decltype(f()) {
    try {
        return f();
    } catch (const StageError&) {
        throw;
    } catch (const std::exception& e) {
        throw StageError(name, e.what());
    }
}

inline int mapping_code(MappingStrategy m) { return static_cast<int>(m); }

inline std::string point_tag(const SweepPoint& p) {
    std::ostringstream os;
    os << "N" << p.N << "_" << to_string(p.mapping) << "_P" << format_double(p.power_dbm);
    return os.str();
}

}  // namespace detail

/// Seed of a sweep point: the base seed hashed with every coordinate.
inline std::uint64_t point_seed(const ExperimentConfig& c, const SweepPoint& p) {
    return derive_seed(c.run.seed, {hash_string("point"), static_cast<std::uint64_t>(p.N),
                                    static_cast<std::uint64_t>(detail::mapping_code(p.mapping)), seed_coord(p.power_dbm),
                                    static_cast<std::uint64_t>(c.link.num_spans), seed_coord(c.grid.symbol_rate_gbd),
                                    static_cast<std::uint64_t>(c.grid.num_channels)});
}

/// Builds one channel's transmitted frame from shaped blocks and random signs.
inline DualPolFrame build_frame(const ExperimentConfig& c, const Shaper& shaper, MappingStrategy mapping, double power_dbm,
                                std::uint64_t seed) {
    const int streams = streams_per_frame(mapping);
    const std::size_t amplitudes = 4 * static_cast<std::size_t>(c.run.symbols_per_block);
    const std::size_t per_stream = amplitudes / static_cast<std::size_t>(streams);
    const auto N = static_cast<std::size_t>(shaper.blocklength());
    std::mt19937_64 rng(derive_seed(seed, {hash_string("data")}));
    std::vector<std::vector<int>> data(static_cast<std::size_t>(streams));
    for (auto& s : data) {
        s.reserve(per_stream);
        for (std::size_t b = 0; b < per_stream / N; ++b) {
            const auto block = shaper.random_block(rng);
            s.insert(s.end(), block.begin(), block.end());
        }
    }
    const auto signs = assign_signs(amplitudes, derive_seed(seed, {hash_string("signs")}));
    return map_to_frame(data, signs, mapping, c.run.pilot_period, power_dbm, derive_seed(seed, {hash_string("pilots")}),
                        c.shaping.M);
}

/// Full transmission chain for one sweep point, averaged over the configured
/// blocks, channels and polarizations. Failures are rethrown as StageError.
inline MetricsRecord run_point(const ExperimentConfig& c, const SweepPoint& p, ShaperCache& shapers) {
    const auto start = std::chrono::steady_clock::now();
    MetricsRecord r;
    r.symbol_rate_gbd = c.grid.symbol_rate_gbd;
    r.num_channels = c.grid.num_channels;
    r.num_spans = c.link.num_spans;
    r.N = p.N;
    r.k = c.shaping.bits_for(p.N);
    r.mapping = to_string(p.mapping);
    r.nonlinear_model = to_string(c.link.model);
    r.launch_power_dbm = p.power_dbm;
    r.seed = point_seed(c, p);
    r.fingerprint = fingerprint(c);

    const auto arithmetic = c.shaping.arithmetic_for(p.N);
    r.arithmetic = arithmetic == Arithmetic::exact ? "exact" : "bounded";
    const auto shaper = detail::stage("shaper", [&] {
        return shapers.get(p.N, r.k, c.shaping.M, arithmetic, c.shaping.mantissa_bits);
    });
    r.emax = shaper->max_energy();
    r.H_A = shaper->entropy();
    r.H_X = r.H_A + 1.0;
    r.R_loss = shaper->rate_loss();
    const AskDemapper demapper(shaper->distribution().probabilities, c.shaping.M);

    const int channels = c.grid.num_channels;
    const int sps = c.samples_per_symbol();
    const double fs = c.grid.symbol_rate_hz() * sps;
    const auto span = c.link.span;
    const auto amp = c.link.amplifier();
    const auto policy = c.step_policy();
    const double accumulated_beta2 = c.link.num_spans * span.beta2_s2_per_m() * span.length_m();

    std::vector<double> snr_sum(static_cast<std::size_t>(2 * channels), 0.0);
    std::vector<std::vector<double>> entropy_sum(static_cast<std::size_t>(channels),
                                                 std::vector<double>(static_cast<std::size_t>(demapper.bits()), 0.0));
    std::vector<double> block_snr_db;
    NoiseShapeAccumulator noise;

    for (int b = 0; b < c.run.blocks_per_point; ++b) {
        std::vector<DualPolFrame> frames;
        std::vector<Waveform> waves;
        detail::stage("transmitter", [&] {
            for (int ch = 0; ch < channels; ++ch) {
                const auto seed = derive_seed(r.seed, {static_cast<std::uint64_t>(b), static_cast<std::uint64_t>(ch)});
                frames.push_back(build_frame(c, *shaper, p.mapping, p.power_dbm, seed));
                waves.push_back(pulse_shape(frames.back(), c.grid, sps, {c.run.rrc_span_symbols}));
            }
        });
        auto wave = detail::stage("multiplex", [&] { return wdm_multiplex(waves, c.grid, fs); });
        waves.clear();
        const auto dump_base = std::filesystem::path(c.output.dir) / "waveforms" /
                               (fingerprint(c) + "_" + detail::point_tag(p) + "_b" + std::to_string(b));
        if (c.run.dump_waveforms && b == 0) {
            std::filesystem::create_directories(dump_base.parent_path());
            write_waveform_dump(dump_base.string() + "_tx.bin", wave);
        }
        wave = detail::stage("propagation", [&] {
            return propagate_link(std::move(wave), span, amp, c.link.num_spans, policy,
                                  derive_seed(r.seed, {hash_string("ase"), static_cast<std::uint64_t>(b)}));
        });
        wave = detail::stage("cd-compensation", [&] { return cd_compensate(std::move(wave), accumulated_beta2); });
        if (c.run.dump_waveforms && b == 0) write_waveform_dump(dump_base.string() + "_rx.bin", wave);

        double block_snr = 0;
        for (int ch = 0; ch < channels; ++ch) {
            const auto& frame = frames[static_cast<std::size_t>(ch)];
            const auto corrected = detail::stage("receiver", [&] {
                return pilot_phase_correct(channel_select(wave, c.grid, ch, frame, {c.run.rrc_span_symbols, 0}), frame);
            });
            detail::stage("metrics", [&] {
                const auto ref = frame_to_references(frame);
                const std::size_t n = ref.ask.size();
                for (int pol = 0; pol < 2; ++pol) {
                    std::vector<std::int8_t> re(n), im(n);
                    std::vector<std::complex<double>> sent(n);
                    for (std::size_t t = 0; t < n; ++t) {
                        re[t] = ref.ask[t][static_cast<std::size_t>(2 * pol)];
                        im[t] = ref.ask[t][static_cast<std::size_t>(2 * pol + 1)];
                        sent[t] = {static_cast<double>(re[t]), static_cast<double>(im[t])};
                    }
                    std::vector<std::complex<double>> equalized;
                    const auto m = evaluate_stream({pol == 0 ? ref.x : ref.y, pol == 0 ? corrected.x : corrected.y, re, im,
                                                    ref.scale},
                                                   demapper, c.run.snr_cap_db, &equalized);
                    noise.add(equalized, sent);
                    const double lin = db_to_linear(m.snr.db);
                    snr_sum[static_cast<std::size_t>(2 * ch + pol)] += lin;
                    block_snr += lin;
                    auto& acc = entropy_sum[static_cast<std::size_t>(ch)];
                    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += m.bit_entropies[i];
                }
            });
        }
        block_snr_db.push_back(linear_to_db(block_snr / (2 * channels)));
    }

    const double blocks = c.run.blocks_per_point;
    double total = 0;
    for (int ch = 0; ch < channels; ++ch) {
        const double sx = snr_sum[static_cast<std::size_t>(2 * ch)] / blocks;
        const double sy = snr_sum[static_cast<std::size_t>(2 * ch + 1)] / blocks;
        r.snr_db_per_channel_pol.push_back(linear_to_db(sx));
        r.snr_db_per_channel_pol.push_back(linear_to_db(sy));
        r.snr_db_per_channel.push_back(linear_to_db(0.5 * (sx + sy)));
        total += sx + sy;
        auto h = entropy_sum[static_cast<std::size_t>(ch)];
        double sum = 0;
        for (auto& v : h) {
            v /= 2 * blocks;
            sum += v;
        }
        r.sum_bit_entropies += sum / channels;
        r.air_per_channel.push_back(air_n(r.H_X, h, r.R_loss));
    }
    r.snr_db_mean = linear_to_db(total / (2 * channels));
    double air = 0;
    for (double v : r.air_per_channel) air += v;
    r.air_bits_per_2d = air / channels;
    if (block_snr_db.size() > 1) {
        double mean = 0, sq = 0;
        for (double v : block_snr_db) mean += v;
        mean /= static_cast<double>(block_snr_db.size());
        for (double v : block_snr_db) sq += (v - mean) * (v - mean);
        r.snr_db_stderr = std::sqrt(sq / static_cast<double>(block_snr_db.size() - 1)) /
                          std::sqrt(static_cast<double>(block_snr_db.size()));
    }
    const auto shape = noise.finish(static_cast<std::size_t>(c.run.noise_min_samples));
    r.ellipticity_outer_ring = shape.outer_ring_ratio;
    r.ellipticity_mean = shape.mean_ratio;
    r.outer_ring_energy = shape.outer_ring_energy;
    r.ellipticity_rings = shape.rings;
    r.noise_points = static_cast<int>(shape.points.size());
    r.noise_excluded = static_cast<int>(shape.excluded);
    if (c.output.record_runtime)
        r.runtime_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return r;
}

/// Runs points on `workers` threads; the result order follows `points`.
inline std::vector<MetricsRecord> run_points(const ExperimentConfig& c, const std::vector<SweepPoint>& points,
                                             ShaperCache& shapers,
                                             const std::function<void(const MetricsRecord&)>& progress = {}) {
    std::vector<MetricsRecord> out(points.size());
    std::vector<std::exception_ptr> errors(points.size());
    std::atomic<std::size_t> next{0};
    std::mutex report;
    auto work = [&] {
        for (std::size_t i = next++; i < points.size(); i = next++) {
            try {
                out[i] = run_point(c, points[i], shapers);
                if (progress) {
                    std::lock_guard lock(report);
                    progress(out[i]);
                }
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    const int workers = std::max(1, std::min<int>(c.run.workers, static_cast<int>(points.size())));
    if (workers == 1) {
        work();
    } else {
        std::vector<std::thread> pool;
        for (int w = 0; w < workers; ++w) pool.emplace_back(work);
        for (auto& t : pool) t.join();
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
    return out;
}

/// Canonical row order: rate, channels, spans, N, mapping, power.
inline void sort_rows(std::vector<MetricsRecord>& rows) {
    std::sort(rows.begin(), rows.end(), [](const MetricsRecord& a, const MetricsRecord& b) {
        return std::tie(a.symbol_rate_gbd, a.num_channels, a.num_spans, a.N, a.mapping, a.launch_power_dbm) <
               std::tie(b.symbol_rate_gbd, b.num_channels, b.num_spans, b.N, b.mapping, b.launch_power_dbm);
    });
}

// ---------------------------------------------------------------------------
// Sweeps

struct PowerSweep {
    int N = 0;
    MappingStrategy mapping = MappingStrategy::four_d;
    std::vector<MetricsRecord> rows;  ///< by launch power, branch labeled
    PowerOptimum optimum;
    double air_at_opt = 0;
    std::vector<CurvePoint> low, high;  ///< SNR-vs-AIR branches
    std::optional<EyeGap> eye;
    std::string eye_error;  ///< why `eye` is empty
};

/// Splits a power sweep at the optimum, labels branches and computes the eye.
inline PowerSweep analyze_power_sweep(std::vector<MetricsRecord> rows) {
    if (rows.empty()) throw ConfigurationError("empty power sweep");
    PowerSweep s;
    std::sort(rows.begin(), rows.end(),
              [](const auto& a, const auto& b) { return a.launch_power_dbm < b.launch_power_dbm; });
    s.N = rows.front().N;
    s.mapping = parse_mapping(rows.front().mapping);
    std::vector<std::pair<double, double>> snr, air;
    for (const auto& r : rows) {
        snr.emplace_back(r.launch_power_dbm, r.snr_db_mean);
        air.emplace_back(r.launch_power_dbm, r.air_bits_per_2d);
    }
    if (rows.size() >= 3) {
        s.optimum = find_optimum_power(snr);
        s.air_at_opt = s.optimum.fitted ? quadratic_at(air, s.optimum.best_index, s.optimum.power_dbm)
                                        : air[s.optimum.best_index].second;
    } else {
        const auto best = std::max_element(rows.begin(), rows.end(), [](const auto& a, const auto& b) {
            return a.snr_db_mean < b.snr_db_mean;
        });
        s.optimum.best_index = static_cast<std::size_t>(best - rows.begin());
        s.optimum.power_dbm = best->launch_power_dbm;
        s.optimum.snr_db = best->snr_db_mean;
        s.optimum.at_boundary = true;
        s.optimum.warning = "fewer than 3 power points; using the grid maximum";
        s.air_at_opt = best->air_bits_per_2d;
    }
    for (auto& r : rows) {
        r.p_opt_dbm = s.optimum.power_dbm;
        const CurvePoint pt{r.snr_db_mean, r.air_bits_per_2d};
        if (r.launch_power_dbm < s.optimum.power_dbm) {
            r.branch = "low";
            s.low.push_back(pt);
        } else if (r.launch_power_dbm > s.optimum.power_dbm) {
            r.branch = "high";
            s.high.push_back(pt);
        } else {
            r.branch = "peak";
            s.low.push_back(pt);
            s.high.push_back(pt);
        }
    }
    try {
        s.eye = eye_gap(s.low, s.high);
    } catch (const ConfigurationError& e) {
        s.eye_error = e.what();
    }
    s.rows = std::move(rows);
    return s;
}

inline std::vector<SweepPoint> power_points(const ExperimentConfig& c, int N, MappingStrategy m) {
    std::vector<SweepPoint> pts;
    for (double p : c.power_dbm) pts.push_back({N, m, p});
    return pts;
}

inline PowerSweep sweep_power(const ExperimentConfig& c, int N, MappingStrategy mapping, ShaperCache& shapers,
                              const std::function<void(const MetricsRecord&)>& progress = {}) {
    return analyze_power_sweep(run_points(c, power_points(c, N, mapping), shapers, progress));
}

struct BlocklengthRow {
    int N = 0;
    int k = 0;
    std::string mapping;
    double p_opt_dbm = 0;
    double snr_db_at_opt = 0;
    double air_at_opt = 0;
    bool boundary = false;  ///< peak not bracketed by the grid
    std::string warning;
};

struct BlocklengthSweep {
    std::vector<PowerSweep> sweeps;
    std::vector<BlocklengthRow> table;
};

/// Power sweep for every (mapping, N) with the optimum of each; all points
/// share one worker pool.
inline BlocklengthSweep sweep_blocklength(const ExperimentConfig& c, ShaperCache& shapers,
                                          const std::function<void(const MetricsRecord&)>& progress = {}) {
    std::vector<SweepPoint> pts;
    for (auto m : c.shaping.mappings)
        for (int N : c.shaping.blocklengths)
            for (double p : c.power_dbm) pts.push_back({N, m, p});
    const auto rows = run_points(c, pts, shapers, progress);
    BlocklengthSweep out;
    const std::size_t per = c.power_dbm.size();
    for (std::size_t i = 0; i < rows.size(); i += per) {
        std::vector<MetricsRecord> group(rows.begin() + static_cast<long>(i), rows.begin() + static_cast<long>(i + per));
        auto s = analyze_power_sweep(std::move(group));
        BlocklengthRow row;
        row.N = s.N;
        row.k = c.shaping.bits_for(s.N);
        row.mapping = to_string(s.mapping);
        row.p_opt_dbm = s.optimum.power_dbm;
        row.snr_db_at_opt = s.optimum.snr_db;
        row.air_at_opt = s.air_at_opt;
        row.boundary = s.optimum.at_boundary;
        row.warning = s.optimum.warning;
        out.table.push_back(row);
        out.sweeps.push_back(std::move(s));
    }
    return out;
}

/// AWGN reference for blocklength N with the configured prior.
inline std::vector<CurvePoint> awgn_reference_for(const ExperimentConfig& c, int N, ShaperCache& shapers) {
    const int k = c.shaping.bits_for(N);
    const std::uint64_t seed = derive_seed(c.run.seed, {hash_string("awgn"), static_cast<std::uint64_t>(N)});
    if (c.metrics.awgn_prior == AwgnPrior::maxwell_boltzmann) {
        const auto mb = maxwell_boltzmann(AmplitudeAlphabet(c.shaping.M), static_cast<double>(k) / N);
        return awgn_reference(mb, c.shaping.M, c.metrics.awgn_snr_db, 0.0,
                              static_cast<std::size_t>(c.metrics.awgn_samples), seed, c.run.snr_cap_db);
    }
    const auto s = shapers.get(N, k, c.shaping.M, c.shaping.arithmetic_for(N), c.shaping.mantissa_bits);
    return awgn_reference(s->distribution(), c.shaping.M, c.metrics.awgn_snr_db, s->rate_loss(),
                          static_cast<std::size_t>(c.metrics.awgn_samples), seed, c.run.snr_cap_db);
}

// ---------------------------------------------------------------------------
// Output

namespace detail {

inline std::string csv_number(double v) {
    if (std::isnan(v)) return "";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

inline nlohmann::json json_number(double v) {
    if (std::isnan(v)) return nullptr;
    return v;
}

inline double number_from_json(const nlohmann::json& j) {
    return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>();
}

}  // namespace detail

inline std::vector<std::string> csv_header(std::size_t channels) {
    std::vector<std::string> h{"symbol_rate_gbd", "num_channels", "num_spans", "N", "k", "mapping", "launch_power_dbm",
                               "seed", "snr_db_mean"};
    for (std::size_t c = 0; c < channels; ++c) h.push_back("snr_db_ch" + std::to_string(c));
    for (const char* s : {"air_bits_per_2d", "H_A", "R_loss", "ellipticity_outer_ring", "p_opt_dbm", "runtime_s",
                          "snr_db_stderr", "H_X", "sum_bit_entropies", "ellipticity_mean", "outer_ring_energy",
                          "noise_points", "noise_excluded", "ellipticity_rings", "emax", "arithmetic", "nonlinear_model", "branch",
                          "fingerprint"})
        h.emplace_back(s);
    return h;
}

inline std::string to_csv(const std::vector<MetricsRecord>& rows) {
    if (rows.empty()) throw Error("no result rows to write");
    using detail::csv_number;
    const std::size_t channels = rows.front().snr_db_per_channel.size();
    std::string out;
    const auto header = csv_header(channels);
    for (std::size_t i = 0; i < header.size(); ++i) out += (i ? "," : "") + header[i];
    out += "\n";
    for (const auto& r : rows) {
        if (r.snr_db_per_channel.size() != channels) throw Error("rows disagree on the channel count");
        std::vector<std::string> f{csv_number(r.symbol_rate_gbd), std::to_string(r.num_channels),
                                   std::to_string(r.num_spans), std::to_string(r.N), std::to_string(r.k), r.mapping,
                                   csv_number(r.launch_power_dbm), std::to_string(r.seed), csv_number(r.snr_db_mean)};
        for (double v : r.snr_db_per_channel) f.push_back(csv_number(v));
        for (double v : {r.air_bits_per_2d, r.H_A, r.R_loss, r.ellipticity_outer_ring, r.p_opt_dbm, r.runtime_s,
                         r.snr_db_stderr, r.H_X, r.sum_bit_entropies, r.ellipticity_mean})
            f.push_back(csv_number(v));
        for (int v : {r.outer_ring_energy, r.noise_points, r.noise_excluded}) f.push_back(std::to_string(v));
        std::string rings;
        for (const auto& ring : r.ellipticity_rings)
            rings += (rings.empty() ? "" : ";") + std::to_string(ring.energy) + ":" + csv_number(ring.ratio);
        f.push_back(rings);
        f.push_back(std::to_string(r.emax));
        f.push_back(r.arithmetic);
        f.push_back(r.nonlinear_model);
        f.push_back(r.branch);
        f.push_back(r.fingerprint);
        for (std::size_t i = 0; i < f.size(); ++i) out += (i ? "," : "") + f[i];
        out += "\n";
    }
    return out;
}

inline nlohmann::json to_json(const MetricsRecord& r) {
    using detail::json_number;
    nlohmann::json j;
    j["symbol_rate_gbd"] = r.symbol_rate_gbd;
    j["num_channels"] = r.num_channels;
    j["num_spans"] = r.num_spans;
    j["N"] = r.N;
    j["k"] = r.k;
    j["emax"] = r.emax;
    j["mapping"] = r.mapping;
    j["arithmetic"] = r.arithmetic;
    j["nonlinear_model"] = r.nonlinear_model;
    j["launch_power_dbm"] = r.launch_power_dbm;
    j["seed"] = r.seed;
    j["snr_db_mean"] = r.snr_db_mean;
    j["snr_db_stderr"] = r.snr_db_stderr;
    j["snr_db_per_channel"] = r.snr_db_per_channel;
    j["snr_db_per_channel_pol"] = r.snr_db_per_channel_pol;
    j["air_bits_per_2d"] = r.air_bits_per_2d;
    j["air_per_channel"] = r.air_per_channel;
    j["H_X"] = r.H_X;
    j["H_A"] = r.H_A;
    j["R_loss"] = r.R_loss;
    j["sum_bit_entropies"] = r.sum_bit_entropies;
    j["ellipticity_outer_ring"] = json_number(r.ellipticity_outer_ring);
    j["ellipticity_mean"] = json_number(r.ellipticity_mean);
    j["outer_ring_energy"] = r.outer_ring_energy;
    j["ellipticity_rings"] = nlohmann::json::array();
    for (const auto& ring : r.ellipticity_rings)
        j["ellipticity_rings"].push_back({{"energy", ring.energy}, {"ratio", ring.ratio}, {"points", ring.points}});
    j["noise_points"] = r.noise_points;
    j["noise_excluded"] = r.noise_excluded;
    j["p_opt_dbm"] = json_number(r.p_opt_dbm);
    j["branch"] = r.branch;
    j["runtime_s"] = r.runtime_s;
    j["fingerprint"] = r.fingerprint;
    return j;
}

inline MetricsRecord record_from_json(const nlohmann::json& j) {
    using detail::number_from_json;
    MetricsRecord r;
    r.symbol_rate_gbd = j.at("symbol_rate_gbd").get<double>();
    r.num_channels = j.at("num_channels").get<int>();
    r.num_spans = j.at("num_spans").get<int>();
    r.N = j.at("N").get<int>();
    r.k = j.at("k").get<int>();
    r.emax = j.at("emax").get<long>();
    r.mapping = j.at("mapping").get<std::string>();
    r.arithmetic = j.at("arithmetic").get<std::string>();
    r.nonlinear_model = j.at("nonlinear_model").get<std::string>();
    r.launch_power_dbm = j.at("launch_power_dbm").get<double>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.snr_db_mean = j.at("snr_db_mean").get<double>();
    r.snr_db_stderr = j.at("snr_db_stderr").get<double>();
    r.snr_db_per_channel = j.at("snr_db_per_channel").get<std::vector<double>>();
    r.snr_db_per_channel_pol = j.at("snr_db_per_channel_pol").get<std::vector<double>>();
    r.air_bits_per_2d = j.at("air_bits_per_2d").get<double>();
    r.air_per_channel = j.at("air_per_channel").get<std::vector<double>>();
    r.H_X = j.at("H_X").get<double>();
    r.H_A = j.at("H_A").get<double>();
    r.R_loss = j.at("R_loss").get<double>();
    r.sum_bit_entropies = j.at("sum_bit_entropies").get<double>();
    r.ellipticity_outer_ring = number_from_json(j.at("ellipticity_outer_ring"));
    r.ellipticity_mean = number_from_json(j.at("ellipticity_mean"));
    r.outer_ring_energy = j.at("outer_ring_energy").get<int>();
    for (const auto& ring : j.at("ellipticity_rings"))
        r.ellipticity_rings.push_back(
            {ring.at("energy").get<int>(), ring.at("ratio").get<double>(), ring.at("points").get<int>()});
    r.noise_points = j.at("noise_points").get<int>();
    r.noise_excluded = j.at("noise_excluded").get<int>();
    r.p_opt_dbm = number_from_json(j.at("p_opt_dbm"));
    r.branch = j.at("branch").get<std::string>();
    r.runtime_s = j.at("runtime_s").get<double>();
    r.fingerprint = j.at("fingerprint").get<std::string>();
    return r;
}

inline nlohmann::json config_json(const ExperimentConfig& c) {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& [k, v] : resolved_settings(c)) j[k] = v;
    return j;
}

inline std::string rows_to_json_text(const ExperimentConfig& c, const std::vector<MetricsRecord>& rows,
                                     const nlohmann::json& extra = nullptr) {
    if (rows.empty()) throw Error("no result rows to write");
    nlohmann::json doc;
    doc["fingerprint"] = fingerprint(c);
    doc["config"] = config_json(c);
    doc["rows"] = nlohmann::json::array();
    for (const auto& r : rows) doc["rows"].push_back(to_json(r));
    if (!extra.is_null()) doc["analysis"] = extra;
    return doc.dump(2) + "\n";
}

inline std::vector<MetricsRecord> rows_from_json_text(const std::string& text) {
    const auto doc = nlohmann::json::parse(text);
    std::vector<MetricsRecord> rows;
    for (const auto& j : doc.at("rows")) rows.push_back(record_from_json(j));
    return rows;
}

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
    std::ofstream out(path, std::ios::binary);
    if (!out || !(out << text)) throw Error("cannot write '" + path.string() + "'");
}

/// Writes `<stem>_<fingerprint>.{csv,json}` per the configured formats plus
/// the resolved config next to them; returns the written paths.
inline std::vector<std::string> emit_results(const ExperimentConfig& c, const std::string& stem,
                                             std::vector<MetricsRecord> rows, const nlohmann::json& extra = nullptr) {
    if (rows.empty()) throw Error("no result rows to write");
    sort_rows(rows);
    const std::filesystem::path dir(c.output.dir);
    const std::string base = stem + "_" + fingerprint(c);
    std::vector<std::string> written;
    // render everything first so a failure leaves no partial output
    std::vector<std::pair<std::filesystem::path, std::string>> files;
    for (const auto& f : c.output.formats) {
        if (f == "csv") files.emplace_back(dir / (base + ".csv"), to_csv(rows));
        if (f == "json") files.emplace_back(dir / (base + ".json"), rows_to_json_text(c, rows, extra));
    }
    files.emplace_back(dir / ("config_" + fingerprint(c) + ".txt"), resolved_text(c));
    for (const auto& [path, text] : files) {
        write_text_file(path, text);
        written.push_back(path.string());
    }
    return written;
}

inline nlohmann::json curve_json(const std::vector<CurvePoint>& curve) {
    auto j = nlohmann::json::array();
    for (const auto& p : curve) j.push_back({{"snr_db", p.snr_db}, {"air_bits_per_2d", p.air}});
    return j;
}

inline std::string curve_csv(const std::vector<CurvePoint>& curve) {
    std::string out = "snr_db,air_bits_per_2d\n";
    for (const auto& p : curve) out += detail::csv_number(p.snr_db) + "," + detail::csv_number(p.air) + "\n";
    return out;
}

inline nlohmann::json power_sweep_json(const PowerSweep& s) {
    nlohmann::json j;
    j["N"] = s.N;
    j["mapping"] = to_string(s.mapping);
    j["p_opt_dbm"] = s.optimum.power_dbm;
    j["snr_db_at_opt"] = s.optimum.snr_db;
    j["air_at_opt"] = s.air_at_opt;
    j["fitted"] = s.optimum.fitted;
    j["boundary"] = s.optimum.at_boundary;
    j["warning"] = s.optimum.warning;
    j["low_branch"] = curve_json(s.low);
    j["high_branch"] = curve_json(s.high);
    if (s.eye) {
        j["eye"] = {{"max_gap", s.eye->max_gap}, {"mean_gap", s.eye->mean_gap}, {"snr_lo", s.eye->snr_lo},
                    {"snr_hi", s.eye->snr_hi}};
    } else {
        j["eye"] = nullptr;
        j["eye_error"] = s.eye_error;
    }
    return j;
}

inline std::string blocklength_table_csv(const std::vector<BlocklengthRow>& table) {
    std::string out = "N,k,mapping,p_opt_dbm,snr_db_at_opt,air_at_opt,boundary\n";
    for (const auto& r : table)
        out += std::to_string(r.N) + "," + std::to_string(r.k) + "," + r.mapping + "," + detail::csv_number(r.p_opt_dbm) +
               "," + detail::csv_number(r.snr_db_at_opt) + "," + detail::csv_number(r.air_at_opt) + "," +
               (r.boundary ? "1" : "0") + "\n";
    return out;
}

}  // namespace essnl
