// liouville.hpp: row-major vectorization of the density matrix, commutator
// superoperators and the harmonic decomposition of every periodic drive.
#pragma once

#include "fmw/operators.hpp"
#include "fmw/types.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <vector>

namespace fmw {

/// Liouville index of rho_ij (0-based i, j).
constexpr int lidx(int i, int j) { return kLevels * i + j; }

inline VecX vectorize(const Mat8& rho) {
    VecX x(kLiouville);
    for (int i = 0; i < kLevels; ++i)
        for (int j = 0; j < kLevels; ++j) x(lidx(i, j)) = rho(i, j);
    return x;
}

inline Mat8 devectorize(const VecX& x) {
    if (x.size() != kLiouville)
        throw ConfigError("devectorize: expected 64 components, got " + std::to_string(x.size()));
    Mat8 rho;
    for (int i = 0; i < kLevels; ++i)
        for (int j = 0; j < kLevels; ++j) rho(i, j) = x(lidx(i, j));
    return rho;
}

/// Vector of the Hermitian-conjugate matrix: X[idx(i,j)] -> conj(X[idx(j,i)]).
inline VecX conj_swap(const VecX& x) {
    VecX y(x.size());
    for (int i = 0; i < kLevels; ++i)
        for (int j = 0; j < kLevels; ++j) y(lidx(i, j)) = std::conj(x(lidx(j, i)));
    return y;
}

inline void require_hermitian(const Mat8& H, const char* who) {
    const double scale = std::max(1.0, H.cwiseAbs().maxCoeff());
    if ((H - H.adjoint()).cwiseAbs().maxCoeff() > 1e-10 * scale)
        throw ConfigError(std::string(who) + ": Hamiltonian is not Hermitian");
}

/// L with L*vec(rho) = vec(i(rho H - H rho)), i.e. L = i(I (x) H^T - H (x) I).
inline MatX commutator_superoperator(const Mat8& H) {
    require_hermitian(H, "commutator_superoperator");
    MatX L = MatX::Zero(kLiouville, kLiouville);
    for (int i = 0; i < kLevels; ++i)
        for (int j = 0; j < kLevels; ++j) {
            const int row = lidx(i, j);
            for (int l = 0; l < kLevels; ++l) L(row, lidx(i, l)) += I * H(l, j);
            for (int k = 0; k < kLevels; ++k) L(row, lidx(k, j)) -= I * H(i, k);
        }
    return L;
}

inline SparseMat to_sparse(const MatX& dense) {
    SparseMat s = dense.sparseView(0.0, 0.0);
    s.makeCompressed();
    return s;
}

/// Truncated Fourier series c(n), |n| <= cutoff.
struct HarmonicSeries {
    int cutoff = 0;
    std::vector<cplx> coeffs;  // index n + cutoff

    static HarmonicSeries constant(cplx value) { return {0, {value}}; }

    cplx operator()(int n) const {
        if (n < -cutoff || n > cutoff) return 0.0;
        return coeffs[static_cast<std::size_t>(n + cutoff)];
    }

    /// Highest |n| with a nonzero coefficient.
    int band() const {
        for (int n = cutoff; n > 0; --n)
            if ((*this)(n) != 0.0 || (*this)(-n) != 0.0) return n;
        return 0;
    }

    cplx evaluate(double phase) const {
        cplx s = 0.0;
        for (int n = -cutoff; n <= cutoff; ++n) s += (*this)(n) * std::exp(I * (n * phase));
        return s;
    }
};

/// Harmonics of a square wave of height `amplitude`, duty `duty`, whose
/// window is centred on rf phase `phase`.
inline HarmonicSeries square_wave_harmonics(double amplitude, double duty, double phase, int cutoff) {
    if (!(duty > 0.0 && duty <= 1.0))
        throw ConfigError("square_wave_harmonics: duty must lie in (0,1], got " + std::to_string(duty));
    if (cutoff < 0) throw ConfigError("square_wave_harmonics: cutoff must be >= 0");
    HarmonicSeries s;
    s.cutoff = cutoff;
    s.coeffs.assign(static_cast<std::size_t>(2 * cutoff + 1), 0.0);
    s.coeffs[static_cast<std::size_t>(cutoff)] = amplitude * duty;
    if (duty < 1.0) {
        for (int n = 1; n <= cutoff; ++n) {
            const double mag = amplitude * std::sin(n * pi * duty) / (n * pi);
            const cplx c = mag * std::exp(-I * (n * phase));
            s.coeffs[static_cast<std::size_t>(cutoff + n)] = c;
            s.coeffs[static_cast<std::size_t>(cutoff - n)] = std::conj(c);
        }
    }
    return s;
}

/// True while rf phase `phase` lies inside the window centred on `centre`.
inline bool square_wave_on(double phase, double duty, double centre) {
    if (duty >= 1.0) return true;
    double u = std::fmod(phase - centre, two_pi);
    if (u > pi) u -= two_pi;
    if (u <= -pi) u += two_pi;
    return std::abs(u) <= pi * duty;
}

/// How harmonic modes are read off a sampled Floquet trace.
enum class ModeExtraction {
    Envelope,  // average of the envelopes themselves
    Physical   // demodulation of rho(t) = sum_k X^(k)(t) e^{ik w t}
};

enum class Modulation { Off, CW, Pulsed };

inline std::string_view to_string(Modulation m) {
    switch (m) {
        case Modulation::Off: return "off";
        case Modulation::CW: return "cw";
        case Modulation::Pulsed: return "pulsed";
    }
    return "?";
}

inline Modulation modulation_from_string(std::string_view s) {
    if (s == "off") return Modulation::Off;
    if (s == "cw") return Modulation::CW;
    if (s == "pulsed") return Modulation::Pulsed;
    throw ConfigError("unknown modulation '" + std::string(s) + "' (expected off|cw|pulsed)");
}

struct MicrowaveConfig {
    Modulation mode = Modulation::CW;
    double rabi_pi = 0.0;           // rad/s
    double rabi_sigma_plus = 0.0;   // rad/s
    double rabi_sigma_minus = 0.0;  // rad/s
    double detuning = 0.0;          // rad/s, (E2 - E1)/hbar - omega_mw
    double duty = 1.0;
    double phase = 0.0;  // rad, window centre in rf phase
};

struct PumpConfig {
    Modulation mode = Modulation::Pulsed;
    double rate = 0.0;  // Gamma_b, 1/s
    double duty = 0.1;
    double phase = 0.0;
};

/// All rates in rad/s (hbar = 1).
struct FieldConfig {
    double omega_rf = two_pi * 90e3;
    double rf_amplitude = 0.0;
    double dc = two_pi * 90e3;
    double ext_x = 0.0, ext_y = 0.0, ext_z = 0.0;
    MicrowaveConfig mw;
    PumpConfig pump;
    double relaxation = 0.0;
    Mat8 rho_in = Mat8::Identity() / 8.0;
    Mat8 rho0 = Mat8::Identity() / 8.0;

    void validate() const {
        if (!(omega_rf > 0.0) || !std::isfinite(omega_rf)) throw ConfigError("omega_rf must be > 0");
        if (!(pump.rate >= 0.0)) throw ConfigError("pump rate must be >= 0");
        if (!(relaxation >= 0.0)) throw ConfigError("relaxation rate must be >= 0");
        if (pump.mode == Modulation::Pulsed && !(pump.duty > 0.0 && pump.duty <= 1.0))
            throw ConfigError("pump duty must lie in (0,1]");
        if (mw.mode == Modulation::Pulsed && !(mw.duty > 0.0 && mw.duty <= 1.0))
            throw ConfigError("microwave duty must lie in (0,1]");
        for (double v : {rf_amplitude, dc, ext_x, ext_y, ext_z, mw.rabi_pi, mw.rabi_sigma_plus,
                         mw.rabi_sigma_minus, mw.detuning, mw.phase, pump.phase})
            if (!std::isfinite(v)) throw ConfigError("field parameters must be finite");
    }

    bool mw_on() const {
        return mw.mode != Modulation::Off &&
               (mw.rabi_pi != 0.0 || mw.rabi_sigma_plus != 0.0 || mw.rabi_sigma_minus != 0.0);
    }
};

/// One Hermitian operator H with a periodic scalar envelope sum_n c(n) e^{i n w t}.
struct HarmonicTerm {
    std::string name;
    Mat8 hamiltonian;
    SparseMat superop;
    std::map<int, cplx> coeffs;
};

inline HarmonicTerm make_term(std::string name, const Mat8& H, std::map<int, cplx> coeffs) {
    HarmonicTerm t;
    t.name = std::move(name);
    t.hamiltonian = H;
    t.superop = to_sparse(commutator_superoperator(H));
    for (auto it = coeffs.begin(); it != coeffs.end();) {
        if (it->second == 0.0)
            it = coeffs.erase(it);
        else
            ++it;
    }
    t.coeffs = std::move(coeffs);
    return t;
}

/// M(t) = sum_n M^(n) e^{i n w t} stored as a list of (operator, envelope) terms.
struct GeneratorHarmonics {
    std::vector<HarmonicTerm> terms;

    void add(HarmonicTerm t) {
        if (!t.coeffs.empty() && t.hamiltonian.cwiseAbs().maxCoeff() > 0.0) terms.push_back(std::move(t));
    }

    void append(const GeneratorHarmonics& other) {
        for (const auto& t : other.terms) terms.push_back(t);
    }

    int band() const {
        int b = 0;
        for (const auto& t : terms)
            for (const auto& [n, c] : t.coeffs) b = std::max(b, std::abs(n));
        return b;
    }

    MatX block(int n) const {
        MatX M = MatX::Zero(kLiouville, kLiouville);
        for (const auto& t : terms) {
            auto it = t.coeffs.find(n);
            if (it != t.coeffs.end()) M += it->second * MatX(t.superop);
        }
        return M;
    }

    Mat8 hamiltonian_harmonic(int n) const {
        Mat8 H = Mat8::Zero();
        for (const auto& t : terms) {
            auto it = t.coeffs.find(n);
            if (it != t.coeffs.end()) H += it->second * t.hamiltonian;
        }
        return H;
    }

    /// H(t) for rf phase w*t.
    Mat8 hamiltonian_at(double phase) const {
        Mat8 H = Mat8::Zero();
        for (const auto& t : terms)
            for (const auto& [n, c] : t.coeffs) H += c * std::exp(I * (n * phase)) * t.hamiltonian;
        return H;
    }

    /// M(t) for rf phase w*t.
    MatX superop_at(double phase) const {
        MatX M = MatX::Zero(kLiouville, kLiouville);
        for (const auto& t : terms)
            for (const auto& [n, c] : t.coeffs) M += c * std::exp(I * (n * phase)) * MatX(t.superop);
        return M;
    }
};

/// H_mw^eff without the detuning frame term.
inline Mat8 mw_coupling_hamiltonian(const MicrowaveConfig& mw, const OperatorSet& ops) {
    return mw.rabi_pi * mw_coupling(ops.Sz) + mw.rabi_sigma_plus * mw_coupling(ops.Ssigma_plus) +
           mw.rabi_sigma_minus * mw_coupling(ops.Ssigma_minus);
}

/// Static and rf magnetic terms, plus the microwave frame term (and the
/// coupling itself when the microwave runs CW).
inline GeneratorHarmonics magnetic_harmonics(const FieldConfig& cfg, const OperatorSet& ops) {
    cfg.validate();
    GeneratorHarmonics h;
    Mat8 H0 = cfg.ext_x * ops.Zx + cfg.ext_y * ops.Zy + (cfg.dc + cfg.ext_z) * ops.Zz;
    if (cfg.mw.mode != Modulation::Off) {
        H0 += cfg.mw.detuning * ops.P2;
        if (cfg.mw.mode == Modulation::CW) H0 += mw_coupling_hamiltonian(cfg.mw, ops);
    }
    h.add(make_term("static", H0, {{0, 1.0}}));
    if (cfg.rf_amplitude != 0.0)
        h.add(make_term("rf", 0.5 * cfg.rf_amplitude * ops.Zx, {{-1, 1.0}, {1, 1.0}}));
    return h;
}

/// Microwave coupling gated by its square-wave envelope (cutoff |n| <= cutoff).
inline GeneratorHarmonics mw_drive_harmonics(const FieldConfig& cfg, const OperatorSet& ops, int cutoff) {
    GeneratorHarmonics h;
    const double duty = cfg.mw.mode == Modulation::Pulsed ? cfg.mw.duty : 1.0;
    const auto series = square_wave_harmonics(1.0, duty, cfg.mw.phase, cutoff);
    std::map<int, cplx> coeffs;
    for (int n = -cutoff; n <= cutoff; ++n)
        if (series(n) != 0.0) coeffs[n] = series(n);
    h.add(make_term("mw", mw_coupling_hamiltonian(cfg.mw, ops), std::move(coeffs)));
    return h;
}

/// Coherent generator for the given fields; pulsed microwaves are expanded to |n| <= cutoff.
inline GeneratorHarmonics coherent_harmonics(const FieldConfig& cfg, const OperatorSet& ops, int cutoff) {
    GeneratorHarmonics h = magnetic_harmonics(cfg, ops);
    if (cfg.mw.mode == Modulation::Pulsed) h.append(mw_drive_harmonics(cfg, ops, cutoff));
    return h;
}

/// Pump-rate harmonics Gamma_p^(n).
inline HarmonicSeries pump_harmonics(const PumpConfig& pump, int cutoff) {
    switch (pump.mode) {
        case Modulation::Off: return HarmonicSeries::constant(0.0);
        case Modulation::CW: return HarmonicSeries::constant(pump.rate);
        case Modulation::Pulsed: return square_wave_harmonics(pump.rate, pump.duty, pump.phase, cutoff);
    }
    return HarmonicSeries::constant(0.0);
}

}  // namespace fmw
