// Command-line front end; `essnl --help` lists the subcommands.
#pragma once

#include <cstdio>
#include <iomanip>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "essnl/config.hpp"
#include "essnl/errors.hpp"
#include "essnl/harness.hpp"
#include "essnl/validation.hpp"

namespace essnl {

struct ShaperInfoRow {
    int N = 0;
    int k = 0;
    long emax = 0;
    double entropy = 0;    ///< H(A), bits per amplitude
    double rate_loss = 0;  ///< bits per amplitude
    double energy = 0;     ///< E[A^2]
    Arithmetic arithmetic = Arithmetic::exact;
};

inline ShaperInfoRow shaper_info(int N, int k, int M, Arithmetic arithmetic, int mantissa_bits) {
    const AmplitudeAlphabet alph(M);
    const Shaper s(N, k, alph, {arithmetic, mantissa_bits});
    return {N, k, s.max_energy(), s.entropy(), s.rate_loss(), mean_energy(s.distribution(), alph), arithmetic};
}

namespace detail {

inline std::string fixed(double v, int digits) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

inline void print_record(std::ostream& out, const MetricsRecord& r) {
    out << "N=" << r.N << " mapping=" << r.mapping << " P=" << fixed(r.launch_power_dbm, 2)
        << " dBm  snr=" << fixed(r.snr_db_mean, 3) << " dB  air=" << fixed(r.air_bits_per_2d, 4)
        << " bits/2D  ellipticity=" << fixed(r.ellipticity_outer_ring, 3) << "\n";
}

inline void print_files(std::ostream& out, const std::vector<std::string>& files) {
    for (const auto& f : files) out << "wrote " << f << "\n";
}

}  // namespace detail

/// Entry point of the `essnl` executable. Returns the process exit status:
/// 0 on success, 1 on usage errors or failed checks, 2 on runtime failures.
inline int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Enumerative sphere shaping over a simulated nonlinear WDM fiber link", "essnl"};
    app.require_subcommand(1);
    app.fallthrough();

    std::optional<std::string> config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out_dir;
    std::vector<std::string> overrides;
    app.add_option("--config", config_path, "key = value configuration file");
    app.add_option("--seed", seed, "base seed (run.seed)");
    app.add_option("--out", out_dir, "output directory (output.dir)");
    app.add_option("--override", overrides, "key=value setting applied after the config file")->take_all();

    int point_n = 64;
    std::string mapping = "4d";
    double power = 0;
    auto* run = app.add_subcommand("run", "simulate a single operating point");
    run->add_option("--N", point_n, "blocklength")->capture_default_str();
    run->add_option("--mapping", mapping, "1d, 2d or 4d")->capture_default_str();
    run->add_option("--power", power, "launch power per channel (dBm)")->required();

    auto* sweep_n = app.add_subcommand("sweep-n", "launch-power sweep for every configured blocklength");

    auto* sweep_p = app.add_subcommand("sweep-power", "launch-power sweep at one blocklength");
    sweep_p->add_option("--N", point_n, "blocklength")->capture_default_str();
    sweep_p->add_option("--mapping", mapping, "1d, 2d or 4d")->capture_default_str();

    std::vector<int> awgn_ns;
    auto* awgn = app.add_subcommand("awgn-ref", "AIR versus SNR on the AWGN channel");
    awgn->add_option("--N", awgn_ns, "blocklengths (default: shaping.N)");

    auto* validate = app.add_subcommand("validate", "run the analytic-oracle self checks");

    std::vector<int> info_ns;
    std::optional<int> info_k;
    auto* info = app.add_subcommand("shaper-info", "print N, k, Emax, H(A) and rate loss");
    info->add_option("--N", info_ns, "blocklengths (default: shaping.N)");
    info->add_option("--k", info_k, "input bits per block (default: round(N * shaping.rate))");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        if (code != 0) err << app.help();
        return code == 0 ? 0 : 1;
    }

    std::string stage = "config";
    try {
        std::vector<std::string> all = overrides;
        if (seed) all.push_back("run.seed=" + std::to_string(*seed));
        if (out_dir) all.push_back("output.dir=" + *out_dir);
        const ExperimentConfig c = config_path ? load_config_file(*config_path, all) : load_config_text("", all);
        ShaperCache shapers;
        const auto progress = [&](const MetricsRecord& r) { detail::print_record(out, r); };

        if (*run) {
            stage = "run";
            const auto r = run_point(c, {point_n, parse_mapping(mapping), power}, shapers);
            progress(r);
            detail::print_files(out, emit_results(c, "run", {r}));
        } else if (*sweep_p) {
            stage = "sweep-power";
            const auto s = sweep_power(c, point_n, parse_mapping(mapping), shapers, progress);
            out << "optimum " << detail::fixed(s.optimum.power_dbm, 2) << " dBm"
                << (s.optimum.warning.empty() ? "" : " (" + s.optimum.warning + ")") << "\n";
            detail::print_files(out, emit_results(c, "sweep_power_N" + std::to_string(point_n), s.rows,
                                                  power_sweep_json(s)));
        } else if (*sweep_n) {
            stage = "sweep-n";
            const auto s = sweep_blocklength(c, shapers, progress);
            std::vector<MetricsRecord> rows;
            nlohmann::json sweeps = nlohmann::json::array();
            for (const auto& p : s.sweeps) {
                rows.insert(rows.end(), p.rows.begin(), p.rows.end());
                sweeps.push_back(power_sweep_json(p));
            }
            const std::string table = blocklength_table_csv(s.table);
            out << table;
            auto files = emit_results(c, "sweep_n", rows, {{"sweeps", sweeps}});
            const auto path = std::filesystem::path(c.output.dir) / ("blocklength_table_" + fingerprint(c) + ".csv");
            write_text_file(path, table);
            files.push_back(path.string());
            detail::print_files(out, files);
        } else if (*awgn) {
            stage = "awgn-ref";
            if (awgn_ns.empty()) awgn_ns = c.shaping.blocklengths;
            for (int N : awgn_ns) {
                const auto curve = awgn_reference_for(c, N, shapers);
                const auto path =
                    std::filesystem::path(c.output.dir) / ("awgn_ref_N" + std::to_string(N) + "_" + fingerprint(c) + ".csv");
                write_text_file(path, curve_csv(curve));
                out << "wrote " << path.string() << "\n";
            }
        } else if (*validate) {
            stage = "validate";
            int failed = 0;
            run_validation([&](const CheckResult& r) {
                failed += r.passed ? 0 : 1;
                out << (r.passed ? "ok    " : "FAIL  ") << std::left << std::setw(36) << r.name << " deviation "
                    << std::scientific << std::setprecision(3) << r.value << " limit " << r.limit << std::defaultfloat
                    << (r.detail.empty() ? "" : "  (" + r.detail + ")") << "\n";
            });
            out << (failed == 0 ? "all checks passed\n" : std::to_string(failed) + " check(s) failed\n");
            return failed == 0 ? 0 : 1;
        } else if (*info) {
            stage = "shaper-info";
            if (info_ns.empty()) info_ns = c.shaping.blocklengths;
            out << "     N       k       Emax      H(A)    R_loss    E[A^2]  arithmetic\n";
            for (int N : info_ns) {
                const int k = info_k ? *info_k : c.shaping.bits_for(N);
                const auto r = shaper_info(N, k, c.shaping.M, c.shaping.arithmetic_for(N), c.shaping.mantissa_bits);
                char line[160];
                std::snprintf(line, sizeof line, "%6d  %6d  %9ld  %8.6f  %8.6f  %8.4f  %s\n", r.N, r.k, r.emax,
                              r.entropy, r.rate_loss, r.energy, r.arithmetic == Arithmetic::exact ? "exact" : "bounded");
                out << line;
            }
        }
        return 0;
    } catch (const StageError& e) {
        err << "essnl: " << e.what() << "\n";
    } catch (const std::exception& e) {
        err << "essnl: [" << stage << "] " << e.what() << "\n";
    }
    return 2;
}

}  // namespace essnl
