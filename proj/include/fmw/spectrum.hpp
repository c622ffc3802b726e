// spectrum.hpp: detuning scans, peak/group analysis, field calibration and
// preparation efficiency.
#pragma once

#include "fmw/sequence.hpp"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <mutex>
#include <numeric>
#include <optional>
#include <string>
#include <thread>
#include <vector>

namespace fmw {

struct PointFailure {
    std::size_t index = 0;
    std::string message;
};

struct Spectrum {
    std::vector<double> detuning;  // rad/s, relative to the clock transition
    std::vector<cplx> m0, m1, m2;
    std::string fingerprint;
    int Q = 0;
    double setup_seconds = 0.0;
    double scan_seconds = 0.0;
    std::vector<PointFailure> failures;

    std::size_t size() const { return detuning.size(); }

    void validate() const {
        if (detuning.empty()) throw ConfigError("spectrum: empty grid");
        if (m2.size() != detuning.size()) throw ConfigError("spectrum: one m2 per grid point required");
        for (std::size_t i = 1; i < detuning.size(); ++i)
            if (!(detuning[i] > detuning[i - 1])) throw ConfigError("spectrum: grid must be strictly increasing");
    }

    std::vector<double> re_m2() const {
        std::vector<double> y(m2.size());
        std::transform(m2.begin(), m2.end(), y.begin(), [](cplx z) { return z.real(); });
        return y;
    }
};

/// n equally spaced points on [lo, hi] (rad/s).
inline std::vector<double> linear_grid(double lo, double hi, int n) {
    if (n < 2 || !(hi > lo)) throw ConfigError("linear_grid: need n >= 2 and hi > lo");
    std::vector<double> g(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) g[static_cast<std::size_t>(i)] = lo + (hi - lo) * i / (n - 1);
    return g;
}

/// 701 points spanning +-3.5 Omega_dc around the clock transition.
inline std::vector<double> default_grid(const FieldConfig& f) {
    const double span = 3.5 * std::abs(f.dc);
    return linear_grid(-span, span, 701);
}

/// Runs the sequence at every detuning. Points are independent; results are
/// stored by index, so the output does not depend on `threads`.
inline Spectrum scan(const SequenceConfig& cfg, const std::vector<double>& grid, int threads = 1,
                     const std::function<void(std::size_t, std::size_t)>& progress = {}) {
    if (grid.empty()) throw ConfigError("scan: empty detuning grid");
    for (std::size_t i = 1; i < grid.size(); ++i)
        if (!(grid[i] > grid[i - 1])) throw ConfigError("scan: grid must be strictly increasing");
    Spectrum sp;
    sp.detuning = grid;
    const auto t0 = std::chrono::steady_clock::now();
    const SequencePlan plan(cfg);
    sp.Q = plan.Q();
    const auto t1 = std::chrono::steady_clock::now();
    sp.setup_seconds = std::chrono::duration<double>(t1 - t0).count();

    const std::size_t n = grid.size();
    const cplx nan(std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::quiet_NaN());
    sp.m0.assign(n, nan);
    sp.m1.assign(n, nan);
    sp.m2.assign(n, nan);
    std::vector<std::optional<std::string>> errors(n);
    std::atomic<std::size_t> next{0}, done{0};
    std::mutex progress_mutex;
    auto worker = [&]() {
        for (std::size_t i = next++; i < n; i = next++) {
            try {
                const auto m = plan.signals(plan.probe_start(grid[i]));
                sp.m0[i] = m[0];
                sp.m1[i] = m[1];
                sp.m2[i] = m[2];
            } catch (const std::exception& e) {
                errors[i] = e.what();
            }
            const std::size_t d = ++done;
            if (progress) {
                std::lock_guard<std::mutex> lock(progress_mutex);
                progress(d, n);
            }
        }
    };
    const int nt = std::max(1, std::min<int>(threads, static_cast<int>(n)));
    if (nt == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < nt; ++t) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    for (std::size_t i = 0; i < n; ++i)
        if (errors[i]) sp.failures.push_back({i, *errors[i]});
    sp.scan_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t1).count();
    if (static_cast<double>(sp.failures.size()) > 0.01 * static_cast<double>(n))
        throw NumericalError("scan: " + std::to_string(sp.failures.size()) + " of " + std::to_string(n) +
                             " points failed; first: " + sp.failures.front().message);
    return sp;
}

struct Peak {
    double position = 0.0;  // rad/s, refined by parabolic interpolation
    double height = 0.0;    // signed deviation from the baseline
    double prominence = 0.0;
    std::size_t index = 0;  // grid index
    int group = 0;          // -3..3 relative to the clock transition
    bool main_line = false; // |height| >= kMainLineFraction of the group's strongest line
};

inline constexpr double kMainLineFraction = 0.25;

struct PeakAnalysis {
    double baseline = 0.0;
    std::vector<Peak> peaks;
    int group_count = 0;
    std::vector<int> group_index;        // one entry per group, ascending
    std::vector<double> group_centre;    // rad/s
    std::vector<double> group_line_spacing;  // rad/s, per group (NaN with < 2 lines)
    double group_spacing = 0.0;          // rad/s (0 when < 2 groups)
    double line_spacing = 0.0;           // rad/s, median over groups (0 when unresolved)
    std::string diagnostic;
};

namespace detail {

inline double median(std::vector<double> v) {
    if (v.empty()) return 0.0;
    const std::size_t mid = v.size() / 2;
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
    double m = v[mid];
    if (v.size() % 2 == 0) m = 0.5 * (m + *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid)));
    return m;
}

/// Largest s such that every gap is within 10% of s of a multiple round(v/s) in
/// 1..6 (a group spans at most six line spacings). 0 when there are no gaps.
inline double common_spacing(const std::vector<double>& gaps) {
    if (gaps.empty()) return 0.0;
    double best = 0.0;
    for (double d : gaps)
        for (int m = 1; m <= 6; ++m) {
            const double s = d / m;
            if (s <= best) break;
            const bool fits = std::all_of(gaps.begin(), gaps.end(), [s](double v) {
                const double k = std::round(v / s);
                return k >= 1.0 && k <= 6.0 && std::abs(v / s - k) <= 0.1;
            });
            if (fits) best = s;
        }
    return best > 0.0 ? best : median(gaps);
}

/// Topographic prominence of local maxima of y.
inline std::vector<std::pair<std::size_t, double>> maxima_with_prominence(const std::vector<double>& y) {
    std::vector<std::pair<std::size_t, double>> out;
    const std::size_t n = y.size();
    for (std::size_t i = 1; i + 1 < n; ++i) {
        if (!(y[i] > y[i - 1] && y[i] >= y[i + 1])) continue;
        double left = y[i], right = y[i];
        for (std::size_t j = i; j-- > 0;) {
            if (y[j] > y[i]) break;
            left = std::min(left, y[j]);
        }
        for (std::size_t j = i + 1; j < n; ++j) {
            if (y[j] > y[i]) break;
            right = std::min(right, y[j]);
        }
        out.emplace_back(i, y[i] - std::max(left, right));
    }
    return out;
}

}  // namespace detail

/// Detects extrema of Re(m2) - baseline (dips and peaks) whose prominence and
/// height exceed `min_prominence` times the largest deviation, then clusters them
/// into groups: a gap wider than 3x the median intra-group gap starts a new
/// group. Intra-group gaps are those below the largest ratio jump of the
/// sorted gaps. When all gaps lie within a factor 3 of each other every line
/// is its own group and the line spacing is reported as unresolved. A
/// positive `group_gap` (rad/s) overrides the threshold.
inline PeakAnalysis find_peaks(const Spectrum& spec, double min_prominence = 0.05, double group_gap = 0.0) {
    spec.validate();
    if (spec.size() < 16) throw ConfigError("find_peaks: need at least 16 grid points");
    if (!(min_prominence > 0.0 && min_prominence < 1.0)) throw ConfigError("find_peaks: prominence fraction must lie in (0,1)");
    PeakAnalysis pa;
    const std::vector<double> y = spec.re_m2();
    pa.baseline = detail::median(y);
    std::vector<double> dev(y.size()), neg(y.size());
    double scale = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        dev[i] = y[i] - pa.baseline;
        neg[i] = -dev[i];
        scale = std::max(scale, std::abs(dev[i]));
    }
    if (!(scale > 1e-14 * std::max(1.0, std::abs(pa.baseline)))) {
        pa.diagnostic = "flat spectrum: no deviation from the baseline";
        return pa;
    }
    const auto& x = spec.detuning;
    auto add = [&](const std::vector<double>& s, double sign) {
        for (auto [i, prom] : detail::maxima_with_prominence(s)) {
            if (prom < min_prominence * scale || sign * dev[i] < min_prominence * scale) continue;
            Peak p;
            p.index = i;
            p.prominence = prom;
            // Parabolic refinement on a locally uniform grid.
            const double a = s[i - 1], b = s[i], c = s[i + 1];
            const double h = 0.5 * (x[i + 1] - x[i - 1]), den = a - 2 * b + c;
            const double off = den != 0.0 ? 0.5 * (a - c) / den : 0.0;
            p.position = x[i] + std::clamp(off, -0.5, 0.5) * h;
            p.height = sign * (b - 0.25 * (a - c) * off);
            pa.peaks.push_back(p);
        }
    };
    add(dev, 1.0);
    add(neg, -1.0);
    std::sort(pa.peaks.begin(), pa.peaks.end(), [](const Peak& a, const Peak& b) { return a.position < b.position; });
    if (pa.peaks.empty()) {
        pa.diagnostic = "no extrema above the prominence threshold";
        return pa;
    }

    // Group clustering.
    std::vector<double> gaps;
    for (std::size_t i = 1; i < pa.peaks.size(); ++i) gaps.push_back(pa.peaks[i].position - pa.peaks[i - 1].position);
    double split = std::numeric_limits<double>::infinity();
    if (group_gap > 0.0) {
        split = group_gap;
    } else if (!gaps.empty()) {
        std::vector<double> sorted = gaps;
        std::sort(sorted.begin(), sorted.end());
        if (sorted.back() <= 3.0 * sorted.front()) {
            split = 0.0;  // no scale separation: one line per group
        } else {
            // Intra-group gaps: those below the largest ratio jump of the sorted gaps.
            std::size_t cut = 1;
            double best = 0.0;
            for (std::size_t i = 1; i < sorted.size(); ++i) {
                const double r = sorted[i] / std::max(sorted[i - 1], 1e-300);
                if (r > best) {
                    best = r;
                    cut = i;
                }
            }
            split = 3.0 * detail::median(std::vector<double>(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(cut)));
        }
    }
    std::vector<std::vector<std::size_t>> groups{{0}};
    for (std::size_t i = 1; i < pa.peaks.size(); ++i) {
        if (gaps[i - 1] > split)
            groups.push_back({i});
        else
            groups.back().push_back(i);
    }

    pa.group_count = static_cast<int>(groups.size());
    // Main lines carry at least a quarter of their group's strongest |height|;
    // weaker extrema next to them are usually lineshape sidelobes.
    std::vector<std::vector<double>> main_gaps(groups.size());
    std::vector<double> all_gaps;
    for (std::size_t gi = 0; gi < groups.size(); ++gi) {
        const auto& g = groups[gi];
        pa.group_centre.push_back(0.5 * (pa.peaks[g.front()].position + pa.peaks[g.back()].position));
        double strongest = 0.0;
        for (std::size_t k : g) strongest = std::max(strongest, std::abs(pa.peaks[k].height));
        double last = std::numeric_limits<double>::quiet_NaN();
        for (std::size_t k : g) {
            auto& p = pa.peaks[k];
            p.main_line = std::abs(p.height) >= kMainLineFraction * strongest;
            if (!p.main_line) continue;
            if (std::isfinite(last)) main_gaps[gi].push_back(p.position - last);
            last = p.position;
        }
        all_gaps.insert(all_gaps.end(), main_gaps[gi].begin(), main_gaps[gi].end());
    }
    // Per-group spacing: gaps counted in units of the common line spacing, so
    // empty slots inside a group do not bias the estimate.
    const double unit_gap = detail::common_spacing(all_gaps);
    for (const auto& d : main_gaps) {
        double num = 0.0, den = 0.0;
        for (double v : d) {
            num += v;
            den += std::max(1.0, std::round(v / unit_gap));
        }
        pa.group_line_spacing.push_back(den > 0.0 ? num / den : std::numeric_limits<double>::quiet_NaN());
    }
    if (groups.size() >= 2) {
        std::vector<double> d;
        for (std::size_t k = 1; k < pa.group_centre.size(); ++k) d.push_back(pa.group_centre[k] - pa.group_centre[k - 1]);
        // Group gaps may skip empty groups; count them in units of the smallest gap.
        const double unit = *std::min_element(d.begin(), d.end());
        double num = 0.0, den = 0.0;
        for (double v : d) {
            const double k = std::max(1.0, std::round(v / unit));
            num += v;
            den += k;
        }
        pa.group_spacing = num / den;
    }
    const double gs = pa.group_spacing > 0.0 ? pa.group_spacing : 0.0;
    for (std::size_t gi = 0; gi < groups.size(); ++gi) {
        const int idx = gs > 0.0 ? static_cast<int>(std::lround(pa.group_centre[gi] / gs)) : 0;
        pa.group_index.push_back(idx);
        for (std::size_t k : groups[gi]) pa.peaks[k].group = idx;
    }
    std::vector<double> spacings;
    for (double s : pa.group_line_spacing)
        if (std::isfinite(s)) spacings.push_back(s);
    pa.line_spacing = detail::median(spacings);
    if (pa.group_count > 7) pa.diagnostic = "more than 7 groups detected";
    return pa;
}

/// Quasi-energy spacing of the F=2 manifold dressed by dc*Fz + rf*cos(w t)*Fx (rad/s),
/// from the eigenphases of the one-period propagator.
inline double dressed_splitting(double dc, double rf, double omega, int steps = 4096) {
    if (!(omega > 0.0)) throw ConfigError("dressed_splitting: omega must be > 0");
    const auto F = angular_momentum_matrices(2);
    using M5 = Eigen::Matrix<cplx, 5, 5>;
    const M5 Fx = F.x, Fz = F.z;
    const double T = two_pi / omega, h = T / steps;
    auto rhs = [&](double t, const M5& U) -> M5 { return -I * (dc * Fz + rf * std::cos(omega * t) * Fx) * U; };
    M5 U = M5::Identity();
    for (int k = 0; k < steps; ++k) {
        const double t = k * h;
        const M5 k1 = rhs(t, U), k2 = rhs(t + h / 2, U + h / 2 * k1), k3 = rhs(t + h / 2, U + h / 2 * k2),
                 k4 = rhs(t + h, U + h * k3);
        U += h / 6 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    Eigen::ComplexEigenSolver<M5> es(U);
    std::vector<double> phase;
    for (int i = 0; i < 5; ++i) phase.push_back(std::arg(es.eigenvalues()(i)));
    std::sort(phase.begin(), phase.end());
    // Eigenphases form an equally spaced ladder m*s*T (mod 2pi); the smallest
    // circular gap between neighbours is s*T unless 5 s T wraps the circle.
    double best = two_pi;
    for (int i = 0; i < 5; ++i) {
        double d = phase[static_cast<std::size_t>((i + 1) % 5)] - phase[static_cast<std::size_t>(i)];
        if (d <= 0) d += two_pi;
        best = std::min(best, d);
    }
    return best / T;
}

struct FieldCalibration {
    double omega_dc = 0.0;  // rad/s
    double omega_rf = 0.0;  // rad/s, 0 when unresolved
    double b_dc = 0.0;      // tesla
    double b_rf = 0.0;      // tesla
    bool dc_resolved = false;
    bool rf_resolved = false;
    std::string diagnostic;
};

/// Field magnitude (T) giving Larmor angular frequency `omega` for g-factor `g`.
inline double field_from_larmor(double omega, double g) {
    return rad_s_to_hz(omega) / (kBohrOverPlanckHzPerTesla * std::abs(g));
}

/// B_dc from the group spacing; B_rf by inverting dressed_splitting at the
/// recovered static field (bisection on the rf amplitude).
inline FieldCalibration calibrate_fields(const PeakAnalysis& pa, const LevelScheme& scheme, double omega_rf) {
    scheme.validate();
    FieldCalibration c;
    if (pa.group_count < 2 || !(pa.group_spacing > 0.0)) {
        c.diagnostic = "fewer than two groups resolved";
        return c;
    }
    c.omega_dc = pa.group_spacing;
    c.b_dc = field_from_larmor(c.omega_dc, scheme.g_f2);
    c.dc_resolved = true;
    if (!(pa.line_spacing > 0.0)) {
        c.diagnostic = "intra-group line spacing unresolved";
        return c;
    }
    const double target = pa.line_spacing;
    double lo = 0.0, hi = 0.5 * omega_rf;
    auto f = [&](double rf) { return dressed_splitting(c.omega_dc, rf, omega_rf, 1024) - target; };
    // Expand until bracketed; the splitting grows monotonically from |dc - omega| in this range.
    int guard = 0;
    while (f(hi) < 0.0 && guard++ < 8) hi *= 1.5;
    if (f(lo) > 0.0 || f(hi) < 0.0) {
        c.diagnostic = "line spacing outside the invertible range of the dressed splitting";
        return c;
    }
    for (int it = 0; it < 60; ++it) {
        const double mid = 0.5 * (lo + hi);
        (f(mid) < 0.0 ? lo : hi) = mid;
    }
    c.omega_rf = 0.5 * (lo + hi);
    c.b_rf = field_from_larmor(c.omega_rf, scheme.g_f2);
    c.rf_resolved = true;
    return c;
}

/// Tr(rho P_target): population in the target state(s).
inline double preparation_efficiency(const Mat8& rho, StateKind target, Axis axis = Axis::X) {
    const auto rep = check_density_matrix(rho);
    if (rep.hermiticity > 1e-8 || rep.trace_error > 1e-8) throw ConfigError("preparation_efficiency: invalid density matrix");
    return std::real((rho * target_projector(target, axis)).trace());
}

/// Share of |deviation| carried by each of the 7 line slots centre + k*s,
/// k = -3..3, of one group. A slot reads the largest deviation within s/6 of
/// its position, or the nearest grid point if none lies that close.
inline std::array<double, 7> line_slot_weights(const Spectrum& spec, double baseline, double centre, double spacing) {
    if (spec.size() == 0) throw ConfigError("line_slot_weights: empty spectrum");
    if (!(spacing > 0.0)) throw ConfigError("line_slot_weights: spacing must be > 0");
    std::array<double, 7> w{};
    const auto y = spec.re_m2();
    const auto& x = spec.detuning;
    double total = 0.0;
    for (int k = -3; k <= 3; ++k) {
        const double pos = centre + k * spacing, half = spacing / 6.0;
        double best = -1.0;
        for (auto it = std::lower_bound(x.begin(), x.end(), pos - half); it != x.end() && *it <= pos + half; ++it)
            best = std::max(best, std::abs(y[static_cast<std::size_t>(it - x.begin())] - baseline));
        if (best < 0.0) {
            const auto it = std::lower_bound(x.begin(), x.end(), pos);
            std::size_t i = static_cast<std::size_t>(std::distance(x.begin(), it));
            if (i >= spec.size()) i = spec.size() - 1;
            if (i > 0 && std::abs(x[i - 1] - pos) < std::abs(x[i] - pos)) --i;
            best = std::abs(y[i] - baseline);
        }
        w[static_cast<std::size_t>(k + 3)] = best;
        total += best;
    }
    if (total > 0.0)
        for (double& v : w) v /= total;
    return w;
}

/// CSV with header `detuning_hz, re_m2, im_m2`, values in %.17g.
inline std::string spectrum_csv(const Spectrum& sp) {
    std::string out = "detuning_hz, re_m2, im_m2\n";
    char buf[128];
    for (std::size_t i = 0; i < sp.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%.17g, %.17g, %.17g\n", rad_s_to_hz(sp.detuning[i]), sp.m2[i].real(), sp.m2[i].imag());
        out += buf;
    }
    return out;
}

inline Spectrum read_spectrum_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read spectrum CSV '" + path + "'");
    std::string line;
    std::getline(in, line);
    if (line.rfind("detuning_hz", 0) != 0) throw ConfigError("'" + path + "' is not a spectrum CSV");
    Spectrum sp;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        double d, re, im;
        if (std::sscanf(line.c_str(), "%lf , %lf , %lf", &d, &re, &im) != 3) throw ConfigError("malformed CSV row: " + line);
        sp.detuning.push_back(hz_to_rad_s(d));
        sp.m2.emplace_back(re, im);
    }
    return sp;
}

inline nlohmann::json analysis_json(const PeakAnalysis& pa, const FieldCalibration& cal) {
    nlohmann::json j;
    j["baseline"] = pa.baseline;
    j["group_count"] = pa.group_count;
    j["group_spacing_hz"] = rad_s_to_hz(pa.group_spacing);
    j["line_spacing_hz"] = rad_s_to_hz(pa.line_spacing);
    j["diagnostic"] = pa.diagnostic;
    auto& peaks = j["peaks"] = nlohmann::json::array();
    for (const auto& p : pa.peaks)
        peaks.push_back({{"detuning_hz", rad_s_to_hz(p.position)}, {"height", p.height}, {"prominence", p.prominence},
                         {"group", p.group}});
    auto& groups = j["groups"] = nlohmann::json::array();
    for (std::size_t g = 0; g < pa.group_centre.size(); ++g) {
        const double s = pa.group_line_spacing[g];
        groups.push_back({{"index", pa.group_index[g]},
                          {"centre_hz", rad_s_to_hz(pa.group_centre[g])},
                          {"line_spacing_hz", std::isfinite(s) ? nlohmann::json(rad_s_to_hz(s)) : nlohmann::json(nullptr)}});
    }
    j["calibration"] = {{"omega_dc_hz", rad_s_to_hz(cal.omega_dc)}, {"omega_rf_hz", rad_s_to_hz(cal.omega_rf)},
                        {"b_dc_tesla", cal.b_dc},  {"b_rf_tesla", cal.b_rf},
                        {"dc_resolved", cal.dc_resolved}, {"rf_resolved", cal.rf_resolved},
                        {"diagnostic", cal.diagnostic}};
    return j;
}

}  // namespace fmw
