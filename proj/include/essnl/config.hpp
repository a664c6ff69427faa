#pragma once

// Experiment configuration: flat `key = value` text with dotted keys and `#`
// comments. Every key has a default, so an empty file is a valid config.
// Lists are comma separated; power grids also accept `start:step:stop`.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "essnl/errors.hpp"
#include "essnl/fiber.hpp"
#include "essnl/mapper.hpp"
#include "essnl/seeding.hpp"
#include "essnl/shaper.hpp"

namespace essnl {

enum class ArithmeticMode { automatic, exact, bounded };
enum class AwgnPrior { shaper, maxwell_boltzmann };

struct ShapingConfig {
    std::vector<int> blocklengths{4, 8, 16, 32, 64, 128, 256, 512, 1024, 2048, 4096};
    double rate = 1.5;  ///< bits per amplitude
    int M = 8;
    std::vector<MappingStrategy> mappings{MappingStrategy::four_d};
    ArithmeticMode arithmetic = ArithmeticMode::automatic;
    int bounded_from_n = 1024;  ///< automatic mode switches to bounded counts at this N
    int mantissa_bits = 32;

    int bits_for(int N) const { return static_cast<int>(std::lround(N * rate)); }
    Arithmetic arithmetic_for(int N) const {
        if (arithmetic == ArithmeticMode::exact) return Arithmetic::exact;
        if (arithmetic == ArithmeticMode::bounded) return Arithmetic::bounded;
        return N >= bounded_from_n ? Arithmetic::bounded : Arithmetic::exact;
    }
};

struct LinkConfig {
    SpanParams span;
    double noise_figure_db = 5.5;
    std::optional<double> gain_db;  ///< empty: compensate the span loss
    int num_spans = 1;
    NonlinearModel model = NonlinearModel::manakov;

    AmplifierParams amplifier() const {
        return {gain_db ? *gain_db : span.loss_db(), noise_figure_db};
    }
};

struct RunConfig {
    int symbols_per_block = 4096;  ///< 4D data slots per simulated frame
    int blocks_per_point = 8;
    std::uint64_t seed = 1;
    double ssfm_max_step_km = 0.1;
    double ssfm_max_phase_rad = 0.05;
    bool ssfm_adaptive = true;
    int samples_per_symbol = 0;  ///< 0: smallest power of two covering the grid
    int pilot_period = 32;
    int rrc_span_symbols = 64;
    int workers = 1;
    bool dump_waveforms = false;
    double snr_cap_db = 100.0;
    int noise_min_samples = 1000;
};

struct MetricsConfig {
    AwgnPrior awgn_prior = AwgnPrior::shaper;
    int awgn_samples = 100000;
    std::vector<double> awgn_snr_db;  ///< filled from the default range on load
};

struct OutputConfig {
    std::string dir = "results";
    std::vector<std::string> formats{"csv", "json"};
    bool record_runtime = false;
};

struct ExperimentConfig {
    GridParams grid;
    LinkConfig link;
    ShapingConfig shaping;
    std::vector<double> power_dbm;
    RunConfig run;
    MetricsConfig metrics;
    OutputConfig output;

    StepPolicy step_policy() const {
        return {run.ssfm_max_step_km, run.ssfm_max_phase_rad, run.ssfm_adaptive, link.model};
    }
    int samples_per_symbol() const {
        return run.samples_per_symbol > 0 ? run.samples_per_symbol : aggregate_samples_per_symbol(grid);
    }
};

namespace detail {

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string item;
    std::istringstream in(s);
    while (std::getline(in, item, sep)) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

inline double parse_double(const std::string& key, const std::string& v) {
    double out = 0;
    const auto* end = v.data() + v.size();
    const auto [ptr, ec] = std::from_chars(v.data(), end, out);
    if (ec != std::errc{} || ptr != end) throw ConfigurationError(key + ": '" + v + "' is not a number");
    return out;
}

inline long long parse_int(const std::string& key, const std::string& v) {
    long long out = 0;
    const auto* end = v.data() + v.size();
    const auto [ptr, ec] = std::from_chars(v.data(), end, out);
    if (ec != std::errc{} || ptr != end) throw ConfigurationError(key + ": '" + v + "' is not an integer");
    return out;
}

inline bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw ConfigurationError(key + ": '" + v + "' is not a boolean");
}

/// `a,b,c` or `start:step:stop` (inclusive, tolerant to rounding).
inline std::vector<double> parse_grid(const std::string& key, const std::string& v) {
    if (v.find(':') != std::string::npos) {
        const auto parts = split(v, ':');
        if (parts.size() != 3) throw ConfigurationError(key + ": range must be start:step:stop");
        const double a = parse_double(key, parts[0]), step = parse_double(key, parts[1]), b = parse_double(key, parts[2]);
        if (!(step > 0) || b < a) throw ConfigurationError(key + ": range needs step > 0 and stop >= start");
        std::vector<double> out;
        const auto n = static_cast<long>(std::floor((b - a) / step + 1e-9));
        for (long i = 0; i <= n; ++i) out.push_back(std::round((a + i * step) * 1e9) / 1e9);
        return out;
    }
    std::vector<double> out;
    for (const auto& p : split(v, ',')) out.push_back(parse_double(key, p));
    if (out.empty()) throw ConfigurationError(key + ": empty list");
    return out;
}

inline std::string format_double(double v) {
    std::ostringstream os;
    os.precision(12);
    os << v;
    return os.str();
}

template <class T, class F>
std::string join(const std::vector<T>& v, F&& fmt) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) out += ",";
        out += fmt(v[i]);
    }
    return out;
}

}  // namespace detail

/// Applies one `key = value` setting.
inline void apply_setting(ExperimentConfig& c, const std::string& key, const std::string& value) {
    using namespace detail;
    const std::string& v = value;
    auto positive_int = [&](long long lo) {
        const auto n = parse_int(key, v);
        if (n < lo) throw ConfigurationError(key + " must be >= " + std::to_string(lo));
        return static_cast<int>(n);
    };
    if (key == "grid.num_channels") c.grid.num_channels = positive_int(1);
    else if (key == "grid.symbol_rate_gbd") c.grid.symbol_rate_gbd = parse_double(key, v);
    else if (key == "grid.spacing_ghz") c.grid.spacing_ghz = parse_double(key, v);
    else if (key == "grid.rolloff") c.grid.rolloff = parse_double(key, v);
    else if (key == "link.span_length_km") c.link.span.length_km = parse_double(key, v);
    else if (key == "link.attenuation_db_km") c.link.span.attenuation_db_per_km = parse_double(key, v);
    else if (key == "link.dispersion_ps_nm_km") c.link.span.dispersion_ps_per_nm_km = parse_double(key, v);
    else if (key == "link.gamma_per_w_km") c.link.span.gamma_per_w_km = parse_double(key, v);
    else if (key == "link.wavelength_nm") c.link.span.wavelength_nm = parse_double(key, v);
    else if (key == "link.noise_figure_db") c.link.noise_figure_db = parse_double(key, v);
    else if (key == "link.gain_db") c.link.gain_db = v == "auto" ? std::nullopt : std::optional(parse_double(key, v));
    else if (key == "link.num_spans") c.link.num_spans = positive_int(1);
    else if (key == "link.nonlinear_model") c.link.model = parse_nonlinear_model(v);
    else if (key == "shaping.N") {
        c.shaping.blocklengths.clear();
        for (const auto& p : split(v, ',')) c.shaping.blocklengths.push_back(static_cast<int>(parse_int(key, p)));
        if (c.shaping.blocklengths.empty()) throw ConfigurationError(key + ": empty list");
    } else if (key == "shaping.rate") c.shaping.rate = parse_double(key, v);
    else if (key == "shaping.M") c.shaping.M = positive_int(4);
    else if (key == "shaping.mapping") {
        c.shaping.mappings.clear();
        for (const auto& p : split(v, ',')) c.shaping.mappings.push_back(parse_mapping(p));
        if (c.shaping.mappings.empty()) throw ConfigurationError(key + ": empty list");
    } else if (key == "shaping.arithmetic") {
        if (v == "auto") c.shaping.arithmetic = ArithmeticMode::automatic;
        else if (v == "exact") c.shaping.arithmetic = ArithmeticMode::exact;
        else if (v == "bounded") c.shaping.arithmetic = ArithmeticMode::bounded;
        else throw ConfigurationError(key + ": expected auto, exact or bounded");
    } else if (key == "shaping.bounded_from_n") c.shaping.bounded_from_n = positive_int(1);
    else if (key == "shaping.mantissa_bits") c.shaping.mantissa_bits = positive_int(8);
    else if (key == "sweep.power_dbm") c.power_dbm = parse_grid(key, v);
    else if (key == "run.symbols_per_block") c.run.symbols_per_block = positive_int(1);
    else if (key == "run.blocks_per_point") c.run.blocks_per_point = positive_int(1);
    else if (key == "run.seed") c.run.seed = static_cast<std::uint64_t>(parse_int(key, v));
    else if (key == "run.ssfm_max_step_km") c.run.ssfm_max_step_km = parse_double(key, v);
    else if (key == "run.ssfm_max_phase_rad") c.run.ssfm_max_phase_rad = parse_double(key, v);
    else if (key == "run.ssfm_adaptive") c.run.ssfm_adaptive = parse_bool(key, v);
    else if (key == "run.samples_per_symbol") c.run.samples_per_symbol = v == "auto" ? 0 : positive_int(2);
    else if (key == "run.pilot_period") c.run.pilot_period = positive_int(1);
    else if (key == "run.rrc_span_symbols") c.run.rrc_span_symbols = positive_int(2);
    else if (key == "run.workers") c.run.workers = positive_int(1);
    else if (key == "run.dump_waveforms") c.run.dump_waveforms = parse_bool(key, v);
    else if (key == "run.snr_cap_db") c.run.snr_cap_db = parse_double(key, v);
    else if (key == "run.noise_min_samples") c.run.noise_min_samples = positive_int(2);
    else if (key == "metrics.awgn_prior") {
        if (v == "shaper") c.metrics.awgn_prior = AwgnPrior::shaper;
        else if (v == "maxwell_boltzmann") c.metrics.awgn_prior = AwgnPrior::maxwell_boltzmann;
        else throw ConfigurationError(key + ": expected shaper or maxwell_boltzmann");
    } else if (key == "metrics.awgn_samples") c.metrics.awgn_samples = positive_int(1);
    else if (key == "metrics.awgn_snr_db") c.metrics.awgn_snr_db = parse_grid(key, v);
    else if (key == "output.dir") c.output.dir = v;
    else if (key == "output.formats") {
        c.output.formats = split(v, ',');
        for (const auto& f : c.output.formats)
            if (f != "csv" && f != "json") throw ConfigurationError(key + ": unknown format '" + f + "'");
    } else if (key == "output.record_runtime") c.output.record_runtime = parse_bool(key, v);
    else throw ConfigurationError("unknown config key '" + key + "'");
}

/// Checks cross-field invariants.
inline void validate(const ExperimentConfig& c) {
    c.grid.validate();
    c.link.span.validate();
    if (c.power_dbm.empty()) throw ConfigurationError("sweep.power_dbm is empty");
    const AmplitudeAlphabet alphabet(c.shaping.M);
    for (int N : c.shaping.blocklengths) {
        if (N < 1) throw ConfigurationError("shaping.N entries must be positive");
        const int k = c.shaping.bits_for(N);
        if (k < 1 || static_cast<double>(k) > N * std::log2(alphabet.size()))
            throw InfeasibleRateError("N=" + std::to_string(N) + ": k=" + std::to_string(k) +
                                      " bits exceed log2((M/2)^N)");
        for (auto m : c.shaping.mappings) {
            const auto per_stream = 4 * static_cast<long>(c.run.symbols_per_block) / streams_per_frame(m);
            if (per_stream % N != 0)
                throw ConfigurationError("N=" + std::to_string(N) + " does not divide the " + to_string(m) +
                                         " stream length " + std::to_string(per_stream));
        }
    }
    if (!(c.run.ssfm_max_step_km > 0) || !(c.run.ssfm_max_phase_rad > 0))
        throw ConfigurationError("SSFM step and phase guard must be positive");
}

/// Built-in defaults plus the per-span-count power grid.
inline ExperimentConfig default_config() {
    ExperimentConfig c;
    c.power_dbm = detail::parse_grid("sweep.power_dbm", "-2:1:12");
    c.metrics.awgn_snr_db = detail::parse_grid("metrics.awgn_snr_db", "8:0.5:22");
    return c;
}

struct ConfigLine {
    std::string key, value;
};

inline std::vector<ConfigLine> parse_config_text(const std::string& text) {
    std::vector<ConfigLine> out;
    std::istringstream in(text);
    std::string line;
    int number = 0;
    while (std::getline(in, line)) {
        ++number;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigurationError("line " + std::to_string(number) + ": expected key = value");
        out.push_back({detail::trim(line.substr(0, eq)), detail::trim(line.substr(eq + 1))});
    }
    return out;
}

/// Parses `key=value` override strings.
inline ConfigLine parse_override(const std::string& s) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw ConfigurationError("override '" + s + "' is not key=value");
    return {detail::trim(s.substr(0, eq)), detail::trim(s.substr(eq + 1))};
}

/// Defaults, then the file text, then overrides. The multi-span power grid
/// default applies when the config sets more than one span without a grid.
inline ExperimentConfig load_config_text(const std::string& text, const std::vector<std::string>& overrides = {}) {
    auto c = default_config();
    bool grid_set = false;
    auto apply = [&](const ConfigLine& l) {
        apply_setting(c, l.key, l.value);
        grid_set |= l.key == "sweep.power_dbm";
    };
    for (const auto& l : parse_config_text(text)) apply(l);
    for (const auto& o : overrides) apply(parse_override(o));
    if (!grid_set && c.link.num_spans > 1) c.power_dbm = detail::parse_grid("sweep.power_dbm", "-4:1:6");
    validate(c);
    return c;
}

inline ExperimentConfig load_config_file(const std::string& path, const std::vector<std::string>& overrides = {}) {
    std::ifstream in(path);
    if (!in) throw ConfigurationError("cannot read config file '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return load_config_text(ss.str(), overrides);
}

/// Fully resolved config in canonical key order; reloading it gives the same config.
inline std::vector<ConfigLine> resolved_settings(const ExperimentConfig& c) {
    using detail::format_double;
    using detail::join;
    auto mode = [](ArithmeticMode m) {
        return m == ArithmeticMode::automatic ? "auto" : m == ArithmeticMode::exact ? "exact" : "bounded";
    };
    return {
        {"grid.num_channels", std::to_string(c.grid.num_channels)},
        {"grid.symbol_rate_gbd", format_double(c.grid.symbol_rate_gbd)},
        {"grid.spacing_ghz", format_double(c.grid.spacing_ghz)},
        {"grid.rolloff", format_double(c.grid.rolloff)},
        {"link.span_length_km", format_double(c.link.span.length_km)},
        {"link.attenuation_db_km", format_double(c.link.span.attenuation_db_per_km)},
        {"link.dispersion_ps_nm_km", format_double(c.link.span.dispersion_ps_per_nm_km)},
        {"link.gamma_per_w_km", format_double(c.link.span.gamma_per_w_km)},
        {"link.wavelength_nm", format_double(c.link.span.wavelength_nm)},
        {"link.noise_figure_db", format_double(c.link.noise_figure_db)},
        {"link.gain_db", c.link.gain_db ? format_double(*c.link.gain_db) : "auto"},
        {"link.num_spans", std::to_string(c.link.num_spans)},
        {"link.nonlinear_model", to_string(c.link.model)},
        {"shaping.N", join(c.shaping.blocklengths, [](int n) { return std::to_string(n); })},
        {"shaping.rate", format_double(c.shaping.rate)},
        {"shaping.M", std::to_string(c.shaping.M)},
        {"shaping.mapping", join(c.shaping.mappings, [](MappingStrategy m) { return to_string(m); })},
        {"shaping.arithmetic", mode(c.shaping.arithmetic)},
        {"shaping.bounded_from_n", std::to_string(c.shaping.bounded_from_n)},
        {"shaping.mantissa_bits", std::to_string(c.shaping.mantissa_bits)},
        {"sweep.power_dbm", join(c.power_dbm, format_double)},
        {"run.symbols_per_block", std::to_string(c.run.symbols_per_block)},
        {"run.blocks_per_point", std::to_string(c.run.blocks_per_point)},
        {"run.seed", std::to_string(c.run.seed)},
        {"run.ssfm_max_step_km", format_double(c.run.ssfm_max_step_km)},
        {"run.ssfm_max_phase_rad", format_double(c.run.ssfm_max_phase_rad)},
        {"run.ssfm_adaptive", c.run.ssfm_adaptive ? "true" : "false"},
        {"run.samples_per_symbol", c.run.samples_per_symbol > 0 ? std::to_string(c.run.samples_per_symbol) : "auto"},
        {"run.pilot_period", std::to_string(c.run.pilot_period)},
        {"run.rrc_span_symbols", std::to_string(c.run.rrc_span_symbols)},
        {"run.workers", std::to_string(c.run.workers)},
        {"run.dump_waveforms", c.run.dump_waveforms ? "true" : "false"},
        {"run.snr_cap_db", format_double(c.run.snr_cap_db)},
        {"run.noise_min_samples", std::to_string(c.run.noise_min_samples)},
        {"metrics.awgn_prior", c.metrics.awgn_prior == AwgnPrior::shaper ? "shaper" : "maxwell_boltzmann"},
        {"metrics.awgn_samples", std::to_string(c.metrics.awgn_samples)},
        {"metrics.awgn_snr_db", join(c.metrics.awgn_snr_db, format_double)},
        {"output.dir", c.output.dir},
        {"output.formats", join(c.output.formats, [](const std::string& s) { return s; })},
        {"output.record_runtime", c.output.record_runtime ? "true" : "false"},
    };
}

inline std::string resolved_text(const ExperimentConfig& c) {
    std::string out;
    for (const auto& [k, v] : resolved_settings(c)) out += k + " = " + v + "\n";
    return out;
}

/// 16-hex-digit fingerprint of the settings that affect results (worker
/// count and output options excluded).
inline std::string fingerprint(const ExperimentConfig& c) {
    std::string text;
    for (const auto& [k, v] : resolved_settings(c)) {
        if (k == "run.workers" || k.rfind("output.", 0) == 0) continue;
        text += k + "=" + v + "\n";
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(hash_string(text)));
    return buf;
}

}  // namespace essnl
