// fmw_cli: spectrum, sequence, validate and calibrate commands.
#include "fmw/config.hpp"
#include "fmw/oracle.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using namespace fmw;

namespace {

struct Overrides {
    std::string mode;
    int manifold = 0;
    std::string state;
    std::string out;
    int threads = 0;
    int Q = 0;
};

RunConfig load(const std::string& path, const Overrides& o) {
    RunConfig rc = load_run_config(path);
    auto& s = rc.sequence;
    if (!o.mode.empty()) {
        const Modulation m = modulation_from_string(o.mode);
        if (m == Modulation::Off) throw ConfigError("--mode must be cw or pulsed");
        s.field.mw.mode = m;
    }
    if (o.manifold != 0) s.probe_manifold = detail::manifold_from_int(o.manifold);
    if (!o.state.empty()) s.input.kind = state_kind_from_string(o.state);
    if (!o.out.empty()) rc.out_dir = o.out;
    if (o.threads > 0) rc.threads = o.threads;
    if (o.Q > 0) s.Q = o.Q;
    s.validate();
    return rc;
}

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const fs::path& p, const std::string& content) {
    std::ofstream out(p, std::ios::binary);
    if (!out) throw ConfigError("cannot write '" + p.string() + "'");
    out << content;
}

/// Largest |m2(Q+2) - m2(Q)| / max|m2(Q)| over every `stride`-th grid point.
nlohmann::json convergence_report(const RunConfig& rc, const Spectrum& base, int stride) {
    SequenceConfig hi = rc.sequence;
    hi.Q = base.Q + 2;
    std::vector<double> grid;
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < base.size(); i += static_cast<std::size_t>(stride)) {
        grid.push_back(base.detuning[i]);
        idx.push_back(i);
    }
    const Spectrum sp = scan(hi, grid, rc.threads);
    double scale = 0.0, worst = 0.0;
    for (const cplx& z : base.m2) scale = std::max(scale, std::abs(z));
    for (std::size_t k = 0; k < idx.size(); ++k) worst = std::max(worst, std::abs(sp.m2[k] - base.m2[idx[k]]));
    return {{"Q", base.Q}, {"Q_check", hi.Q}, {"points", idx.size()}, {"max_relative_change", worst / scale}};
}

int cmd_spectrum(const std::string& path, const Overrides& o, bool convergence, int stride) {
    const RunConfig rc = load(path, o);
    const std::string fp = fingerprint(rc);
    const fs::path out_dir(rc.out_dir);
    fs::create_directories(out_dir);
    const std::string stem = fs::path(path).stem().string();
    const fs::path csv = out_dir / (stem + ".csv"), sidecar = out_dir / (stem + ".json");
    const fs::path cache = cache_directory(rc);
    const fs::path cached_csv = cache / (fp + ".csv"), cached_json = cache / (fp + ".json");

    if (fs::exists(cached_csv) && fs::exists(cached_json) && !convergence) {
        write_file(csv, read_file(cached_csv));
        write_file(sidecar, read_file(cached_json));
        std::cout << "cache hit " << fp << "\n" << csv.string() << "\n";
        return 0;
    }

    const auto grid = rc.sweep.grid(rc.sequence.field);
    Spectrum sp = scan(rc.sequence, grid, rc.threads);
    sp.fingerprint = fp;
    const PeakAnalysis pa = find_peaks(sp, rc.min_prominence);
    const FieldCalibration cal = calibrate_fields(pa, LevelScheme{}, rc.sequence.field.omega_rf);

    nlohmann::json j;
    j["fingerprint"] = fp;
    j["config"] = resolved_json(rc);
    j["provenance"] = {{"version", kVersion}, {"Q", sp.Q}};
    j["provenance"]["convergence"] = convergence ? convergence_report(rc, sp, stride) : nlohmann::json("not run");
    j["failures"] = nlohmann::json::array();
    for (const auto& f : sp.failures) j["failures"].push_back({{"index", f.index}, {"message", f.message}});
    j["analysis"] = analysis_json(pa, cal);
    const std::string csv_text = spectrum_csv(sp), json_text = j.dump(2) + "\n";

    write_file(csv, csv_text);
    write_file(sidecar, json_text);
    fs::create_directories(cache);
    write_file(cached_csv, csv_text);
    write_file(cached_json, json_text);
    std::cout << "fingerprint " << fp << "  Q " << sp.Q << "  points " << sp.size() << "  peaks " << pa.peaks.size()
              << "  groups " << pa.group_count << "\n"
              << csv.string() << "\n";
    return 0;
}

int cmd_sequence(const std::string& path, const Overrides& o, double detuning_hz) {
    RunConfig rc = load(path, o);
    rc.sequence.field.mw.detuning = hz_to_rad_s(detuning_hz);
    const SequenceResult r = run_sequence(rc.sequence);
    std::printf("Q %d  pump rcond %.3e  residual %.3e\n", r.Q, r.pump.rcond, r.pump.residual);
    for (const auto& s : r.stages)
        std::printf("  %-9s trace %.12f  hermiticity %.2e  degree %5d  %.3f s\n", s.name.c_str(), s.trace, s.hermiticity,
                    s.degree, s.seconds);
    for (int n = 0; n < 3; ++n) {
        const cplx m = n == 0 ? r.m0 : n == 1 ? r.m1 : r.m2;
        std::printf("m%d  %+.12e %+.12ei  |m%d| %.6e\n", n, m.real(), m.imag(), n, std::abs(m));
    }
    return 0;
}

int cmd_validate(const std::string& path, const Overrides& o, double tol, int points, int spp) {
    const RunConfig rc = load(path, o);
    const auto full = rc.sweep.grid(rc.sequence.field);
    const auto grid = points >= 2 ? linear_grid(full.front(), full.back(), points) : std::vector<double>{full[full.size() / 2]};
    const Spectrum sp = scan(rc.sequence, grid, rc.threads);
    std::vector<cplx> ref(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) {
        SequenceConfig c = rc.sequence;
        c.field.mw.detuning = grid[i];
        ref[i] = oracle::run(c, spp).m2;
    }
    double scale = 0.0;
    for (const cplx& z : sp.m2) scale = std::max(scale, std::abs(z));
    for (const cplx& z : ref) scale = std::max(scale, std::abs(z));
    if (scale == 0.0) scale = 1.0;
    int failed = 0;
    std::printf("%14s %22s %22s %12s\n", "detuning_hz", "re_m2_floquet", "re_m2_oracle", "rel_error");
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const double e = std::abs(sp.m2[i] - ref[i]) / scale;
        failed += e > tol;
        std::printf("%14.3f %22.15e %22.15e %12.3e%s\n", rad_s_to_hz(grid[i]), sp.m2[i].real(), ref[i].real(), e,
                    e > tol ? "  FAIL" : "");
    }
    std::printf("%s: %d of %zu points exceed tol %.1e (Q %d)\n", failed ? "FAIL" : "PASS", failed, grid.size(), tol, sp.Q);
    return failed ? 1 : 0;
}

int cmd_calibrate(const std::string& path, const Overrides& o, const std::string& csv) {
    const RunConfig rc = load(path, o);
    Spectrum sp = csv.empty() ? scan(rc.sequence, rc.sweep.grid(rc.sequence.field), rc.threads) : read_spectrum_csv(csv);
    const PeakAnalysis pa = find_peaks(sp, rc.min_prominence);
    const FieldCalibration c = calibrate_fields(pa, LevelScheme{}, rc.sequence.field.omega_rf);
    std::printf("groups %d  peaks %zu\n", pa.group_count, pa.peaks.size());
    std::printf("group spacing %.3f Hz  line spacing %.3f Hz\n", rad_s_to_hz(pa.group_spacing), rad_s_to_hz(pa.line_spacing));
    std::printf("Omega_dc %.3f Hz  B_dc %.6e T%s\n", rad_s_to_hz(c.omega_dc), c.b_dc, c.dc_resolved ? "" : "  (unresolved)");
    std::printf("Omega_rf %.3f Hz  B_rf %.6e T%s\n", rad_s_to_hz(c.omega_rf), c.b_rf, c.rf_resolved ? "" : "  (unresolved)");
    if (!c.diagnostic.empty()) std::printf("note: %s\n", c.diagnostic.c_str());
    return c.dc_resolved ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Floquet microwave spectroscopy of dressed 87Rb"};
    app.require_subcommand(1);
    Overrides o;
    std::string config;
    auto common = [&](CLI::App* sub) {
        sub->add_option("config", config, "JSON run configuration")->required()->check(CLI::ExistingFile);
        sub->add_option("--mode", o.mode, "microwave mode override")->check(CLI::IsMember({"cw", "pulsed"}));
        sub->add_option("--manifold", o.manifold, "probed manifold override")->check(CLI::IsMember({1, 2}));
        sub->add_option("--state", o.state, "input state override");
        sub->add_option("--threads", o.threads, "worker threads");
        sub->add_option("--Q", o.Q, "Floquet cutoff override");
    };

    auto* spectrum = app.add_subcommand("spectrum", "scan the microwave detuning and analyse the spectrum");
    common(spectrum);
    spectrum->add_option("--out", o.out, "output directory");
    bool convergence = false;
    int stride = 10;
    spectrum->add_flag("--check-convergence", convergence, "rerun every stride-th point at Q+2");
    spectrum->add_option("--stride", stride, "grid stride of the convergence check")->check(CLI::PositiveNumber);

    auto* sequence = app.add_subcommand("sequence", "run one sequence and dump stage diagnostics");
    common(sequence);
    double detuning_hz = 0.0;
    sequence->add_option("--detuning-hz", detuning_hz, "microwave detuning");

    auto* validate = app.add_subcommand("validate", "compare against the time-domain oracle on a reduced grid");
    common(validate);
    double tol = 1e-3;
    int points = 5, spp = 1024;
    validate->add_option("--tol", tol, "relative tolerance against max |m2|");
    validate->add_option("--points", points, "reduced grid size");
    validate->add_option("--steps-per-period", spp, "oracle RK4 steps per rf period");

    auto* calibrate = app.add_subcommand("calibrate", "recover B_dc and B_rf from a spectrum");
    common(calibrate);
    std::string csv;
    calibrate->add_option("--csv", csv, "analyse an existing spectrum CSV instead of scanning")->check(CLI::ExistingFile);

    CLI11_PARSE(app, argc, argv);
    try {
        if (*spectrum) return cmd_spectrum(config, o, convergence, stride);
        if (*sequence) return cmd_sequence(config, o, detuning_hz);
        if (*validate) return cmd_validate(config, o, tol, points, spp);
        if (*calibrate) return cmd_calibrate(config, o, csv);
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
    return 0;
}
