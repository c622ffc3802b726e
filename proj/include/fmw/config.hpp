// config.hpp: JSON run configuration with mandatory unit suffixes,
// fingerprinting and the on-disk result cache.
#pragma once

#include "fmw/spectrum.hpp"

#include <json.hpp>

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace fmw {

inline constexpr const char* kVersion = "1.0.0";

struct SweepConfig {
    double start = 0.0;  // rad/s
    double stop = 0.0;   // rad/s
    int points = 0;      // 0 selects default_grid()

    std::vector<double> grid(const FieldConfig& f) const {
        return points == 0 ? default_grid(f) : linear_grid(start, stop, points);
    }
};

struct RunConfig {
    SequenceConfig sequence;
    SweepConfig sweep;
    double min_prominence = 0.05;
    int threads = 1;
    std::string out_dir = "out";
    std::string cache_dir;  // empty: FMW_CACHE_DIR or <out_dir>/.cache
};

namespace detail {

using nlohmann::json;

/// Reads one object level, collecting every offending key.
class ObjectReader {
public:
    ObjectReader(const json& j, std::string path, std::vector<std::string>& errors)
        : j_(j), path_(std::move(path)), errors_(errors) {
        if (!j_.is_object()) errors_.push_back(where("") + ": expected an object");
    }

    ~ObjectReader() = default;

    /// Physical rate/frequency: `<name>_hz` (times 2 pi) or `<name>_rad_s`.
    void frequency(const std::string& name, double& out) { physical(name, out, {{"_hz", two_pi}, {"_rad_s", 1.0}}); }
    /// Angle: `<name>_deg` or `<name>_rad`.
    void angle(const std::string& name, double& out) { physical(name, out, {{"_deg", pi / 180.0}, {"_rad", 1.0}}); }

    void number(const std::string& key, double& out) {
        if (const json* v = take(key)) {
            if (v->is_number()) out = v->get<double>();
            else errors_.push_back(where(key) + ": expected a number");
        }
    }
    void integer(const std::string& key, int& out) {
        if (const json* v = take(key)) {
            if (v->is_number_integer()) out = v->get<int>();
            else errors_.push_back(where(key) + ": expected an integer");
        }
    }
    void boolean(const std::string& key, bool& out) {
        if (const json* v = take(key)) {
            if (v->is_boolean()) out = v->get<bool>();
            else errors_.push_back(where(key) + ": expected true or false");
        }
    }
    void string(const std::string& key, std::string& out) {
        if (const json* v = take(key)) {
            if (v->is_string()) out = v->get<std::string>();
            else errors_.push_back(where(key) + ": expected a string");
        }
    }
    template <class F>
    void enumeration(const std::string& key, F&& parse) {
        std::string s;
        if (!has(key)) return;
        string(key, s);
        try {
            parse(s);
        } catch (const ConfigError& e) {
            errors_.push_back(where(key) + ": " + e.what());
        }
    }
    const json* object(const std::string& key) { return take(key); }
    std::string child(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

    /// Reports keys that were never consumed.
    void finish() {
        if (!j_.is_object()) return;
        for (auto it = j_.begin(); it != j_.end(); ++it) {
            if (used_.count(it.key())) continue;
            errors_.push_back(where(it.key()) + ": unknown key" + suffix_hint(it.key()));
        }
    }

private:
    bool has(const std::string& key) const { return j_.is_object() && j_.contains(key); }

    const json* take(const std::string& key) {
        if (!has(key)) return nullptr;
        used_.insert(key);
        return &j_.at(key);
    }

    void physical(const std::string& name, double& out, std::vector<std::pair<std::string, double>> units) {
        int found = 0;
        for (const auto& [suffix, scale] : units) {
            const std::string key = name + suffix;
            if (const json* v = take(key)) {
                ++found;
                if (v->is_number()) out = v->get<double>() * scale;
                else errors_.push_back(where(key) + ": expected a number");
            }
        }
        if (found > 1) errors_.push_back(where(name) + ": given with more than one unit");
        known_.emplace_back(name, units);
    }

    std::string suffix_hint(const std::string& key) const {
        for (const auto& [name, units] : known_) {
            if (key.rfind(name, 0) != 0) continue;
            std::string list;
            for (const auto& u : units) list += (list.empty() ? "" : " or ") + name + u.first;
            return " (malformed or missing unit suffix; expected " + list + ")";
        }
        return "";
    }

    std::string where(const std::string& key) const {
        return "'" + (key.empty() ? (path_.empty() ? std::string("<root>") : path_) : child(key)) + "'";
    }

    const json& j_;
    std::string path_;
    std::vector<std::string>& errors_;
    std::set<std::string> used_;
    std::vector<std::pair<std::string, std::vector<std::pair<std::string, double>>>> known_;
};

inline Axis axis_from_string(std::string_view s) {
    if (s == "x") return Axis::X;
    if (s == "y") return Axis::Y;
    if (s == "z") return Axis::Z;
    throw ConfigError("unknown axis '" + std::string(s) + "' (expected x, y or z)");
}

inline std::string_view to_string(Axis a) {
    switch (a) {
        case Axis::X: return "x";
        case Axis::Y: return "y";
        case Axis::Z: return "z";
    }
    return "x";
}

inline ModeExtraction extraction_from_string(std::string_view s) {
    if (s == "physical") return ModeExtraction::Physical;
    if (s == "envelope") return ModeExtraction::Envelope;
    throw ConfigError("unknown extraction '" + std::string(s) + "' (expected physical or envelope)");
}

inline std::string_view to_string(ModeExtraction e) { return e == ModeExtraction::Physical ? "physical" : "envelope"; }

inline Manifold manifold_from_int(int m) {
    if (m == 1) return Manifold::F1;
    if (m == 2) return Manifold::F2;
    throw ConfigError("probe manifold must be 1 or 2, got " + std::to_string(m));
}

inline std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

}  // namespace detail

/// Parses a run configuration. Every offending key is listed in the error.
inline RunConfig parse_run_config(const nlohmann::json& j) {
    using detail::ObjectReader;
    RunConfig rc;
    std::vector<std::string> errors;
    ObjectReader root(j, "", errors);
    auto& seq = rc.sequence;
    auto& f = seq.field;

    if (const auto* jf = root.object("field")) {
        ObjectReader r(*jf, "field", errors);
        r.frequency("omega_rf", f.omega_rf);
        r.frequency("rf_amplitude", f.rf_amplitude);
        r.frequency("dc", f.dc);
        r.frequency("ext_x", f.ext_x);
        r.frequency("ext_y", f.ext_y);
        r.frequency("ext_z", f.ext_z);
        r.frequency("relaxation", f.relaxation);
        if (const auto* jp = r.object("pump")) {
            ObjectReader p(*jp, "field.pump", errors);
            p.enumeration("mode", [&](const std::string& s) { f.pump.mode = modulation_from_string(s); });
            p.frequency("rate", f.pump.rate);
            p.number("duty", f.pump.duty);
            p.angle("phase", f.pump.phase);
            p.finish();
        }
        if (const auto* jm = r.object("microwave")) {
            ObjectReader m(*jm, "field.microwave", errors);
            m.enumeration("mode", [&](const std::string& s) { f.mw.mode = modulation_from_string(s); });
            m.frequency("rabi_pi", f.mw.rabi_pi);
            m.frequency("rabi_sigma_plus", f.mw.rabi_sigma_plus);
            m.frequency("rabi_sigma_minus", f.mw.rabi_sigma_minus);
            m.number("duty", f.mw.duty);
            m.angle("phase", f.mw.phase);
            m.finish();
        }
        r.finish();
    }
    if (const auto* ji = root.object("input")) {
        ObjectReader r(*ji, "input", errors);
        r.enumeration("kind", [&](const std::string& s) { seq.input.kind = state_kind_from_string(s); });
        r.enumeration("axis", [&](const std::string& s) { seq.input.axis = detail::axis_from_string(s); });
        r.boolean("repump", seq.input.repump);
        r.number("f2_fraction", seq.input.f2_fraction);
        r.angle("rotation", seq.input.rotation);
        r.finish();
        if (seq.input.kind == StateKind::Custom) errors.push_back("'input.kind': custom states cannot be given in a config file");
    }
    if (const auto* js = root.object("sequence")) {
        ObjectReader r(*js, "sequence", errors);
        r.integer("mw_periods", seq.mw_periods);
        r.integer("probe_periods", seq.probe_periods);
        r.integer("window_periods", seq.window_periods);
        int manifold = static_cast<int>(seq.probe_manifold);
        r.integer("probe_manifold", manifold);
        try {
            seq.probe_manifold = detail::manifold_from_int(manifold);
        } catch (const ConfigError& e) {
            errors.push_back(std::string("'sequence.probe_manifold': ") + e.what());
        }
        r.number("gain", seq.gain);
        r.integer("samples_per_period", seq.samples_per_period);
        r.enumeration("extraction", [&](const std::string& s) { seq.extraction = detail::extraction_from_string(s); });
        r.integer("Q", seq.Q);
        r.finish();
    }
    if (const auto* jw = root.object("sweep")) {
        ObjectReader r(*jw, "sweep", errors);
        r.frequency("start", rc.sweep.start);
        r.frequency("stop", rc.sweep.stop);
        r.integer("points", rc.sweep.points);
        r.finish();
        if (rc.sweep.points != 0 && (rc.sweep.points < 2 || !(rc.sweep.stop > rc.sweep.start)))
            errors.push_back("'sweep': need points >= 2 and stop > start");
    }
    if (const auto* ja = root.object("analysis")) {
        ObjectReader r(*ja, "analysis", errors);
        r.number("min_prominence", rc.min_prominence);
        r.finish();
    }
    if (const auto* jr = root.object("run")) {
        ObjectReader r(*jr, "run", errors);
        r.integer("threads", rc.threads);
        r.string("out_dir", rc.out_dir);
        r.string("cache_dir", rc.cache_dir);
        r.finish();
        if (rc.threads < 1) errors.push_back("'run.threads': must be >= 1");
    }
    root.finish();

    if (errors.empty()) {
        try {
            seq.validate();
        } catch (const ConfigError& e) {
            errors.push_back(e.what());
        }
    }
    if (!errors.empty()) {
        std::string msg = "invalid configuration:";
        for (const auto& e : errors) msg += "\n  " + e;
        throw ConfigError(msg);
    }
    return rc;
}

inline RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config '" + path + "'");
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in, nullptr, true, true);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError("'" + path + "' is not valid JSON: " + e.what());
    }
    return parse_run_config(j);
}

/// Fully resolved physics part of a run (no output paths or parallelism),
/// in exact rad/s units. Parsing it back yields the same configuration.
inline nlohmann::json resolved_json(const RunConfig& rc) {
    const auto& s = rc.sequence;
    const auto& f = s.field;
    const auto grid = rc.sweep.grid(f);
    nlohmann::json j;
    j["field"] = {{"omega_rf_rad_s", f.omega_rf},
                  {"rf_amplitude_rad_s", f.rf_amplitude},
                  {"dc_rad_s", f.dc},
                  {"ext_x_rad_s", f.ext_x},
                  {"ext_y_rad_s", f.ext_y},
                  {"ext_z_rad_s", f.ext_z},
                  {"relaxation_rad_s", f.relaxation},
                  {"pump",
                   {{"mode", std::string(to_string(f.pump.mode))},
                    {"rate_rad_s", f.pump.rate},
                    {"duty", f.pump.duty},
                    {"phase_rad", f.pump.phase}}},
                  {"microwave",
                   {{"mode", std::string(to_string(f.mw.mode))},
                    {"rabi_pi_rad_s", f.mw.rabi_pi},
                    {"rabi_sigma_plus_rad_s", f.mw.rabi_sigma_plus},
                    {"rabi_sigma_minus_rad_s", f.mw.rabi_sigma_minus},
                    {"duty", f.mw.duty},
                    {"phase_rad", f.mw.phase}}}};
    j["input"] = {{"kind", std::string(to_string(s.input.kind))},
                  {"axis", std::string(detail::to_string(s.input.axis))},
                  {"repump", s.input.repump},
                  {"f2_fraction", s.input.f2_fraction},
                  {"rotation_rad", s.input.rotation}};
    j["sequence"] = {{"mw_periods", s.mw_periods},
                     {"probe_periods", s.probe_periods},
                     {"window_periods", s.window_periods},
                     {"probe_manifold", static_cast<int>(s.probe_manifold)},
                     {"gain", s.gain},
                     {"samples_per_period", s.samples_per_period},
                     {"extraction", std::string(detail::to_string(s.extraction))},
                     {"Q", s.cutoff()}};
    j["sweep"] = {{"start_rad_s", grid.front()}, {"stop_rad_s", grid.back()}, {"points", static_cast<int>(grid.size())}};
    j["analysis"] = {{"min_prominence", rc.min_prominence}};
    return j;
}

/// 16 hex digits of FNV-1a over the canonical resolved configuration and the version.
inline std::string fingerprint(const RunConfig& rc) {
    const std::string canon = resolved_json(rc).dump() + "|" + kVersion;
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(detail::fnv1a(canon)));
    return buf;
}

/// Cache directory: run.cache_dir, else $FMW_CACHE_DIR, else <out_dir>/.cache.
inline std::filesystem::path cache_directory(const RunConfig& rc) {
    if (!rc.cache_dir.empty()) return rc.cache_dir;
    if (const char* env = std::getenv("FMW_CACHE_DIR"); env && *env) return env;
    return std::filesystem::path(rc.out_dir) / ".cache";
}

}  // namespace fmw
