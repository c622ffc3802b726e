// floquet.hpp: banded block Floquet generator, pump-stage steady state,
// affine propagation and harmonic-mode extraction.
#pragma once

#include "fmw/chebyshev.hpp"
#include "fmw/liouville.hpp"
#include "fmw/types.hpp"

#include <unsupported/Eigen/MatrixFunctions>

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace fmw {

/// Stacked envelopes X^(n), n = -Q..Q, each a 64-vector.
struct FloquetVector {
    int Q = 0;
    VecX data;

    static FloquetVector zero(int Q) { return {Q, VecX::Zero(static_cast<Eigen::Index>(kLiouville) * (2 * Q + 1))}; }

    /// Only the n = 0 block set to `x`.
    static FloquetVector dc(int Q, const VecX& x) {
        FloquetVector v = zero(Q);
        v.block(0) = x;
        return v;
    }

    int blocks() const { return 2 * Q + 1; }
    Eigen::Index dim() const { return data.size(); }

    using Block = Eigen::VectorBlock<VecX>;
    using ConstBlock = Eigen::VectorBlock<const VecX>;

    Block block(int n) { return data.segment(static_cast<Eigen::Index>(n + Q) * kLiouville, kLiouville); }
    ConstBlock block(int n) const { return data.segment(static_cast<Eigen::Index>(n + Q) * kLiouville, kLiouville); }

    VecX harmonic(int n) const {
        if (n < -Q || n > Q) return VecX::Zero(kLiouville);
        return block(n);
    }
    Mat8 matrix(int n) const { return devectorize(harmonic(n)); }

    /// max_n |X^(-n) - (X^(n))^dagger| over all blocks.
    double hermiticity_residual() const {
        double r = 0.0;
        for (int n = 0; n <= Q; ++n)
            r = std::max(r, (matrix(-n) - matrix(n).adjoint()).cwiseAbs().maxCoeff());
        return r;
    }

    /// rho at rf phase w*t.
    Mat8 physical(double phase) const {
        Mat8 rho = Mat8::Zero();
        for (int n = -Q; n <= Q; ++n) rho += std::exp(I * (n * phase)) * matrix(n);
        return rho;
    }
};

/// C~ with diagonal blocks C^(0) - i n w and off-diagonal blocks C^(n-m).
class FloquetGenerator {
public:
    FloquetGenerator(GeneratorHarmonics harmonics, int Q, double omega)
        : harmonics_(std::move(harmonics)), Q_(Q), omega_(omega) {
        if (Q < 1) throw ConfigError("FloquetGenerator: cutoff Q must be >= 1, got " + std::to_string(Q));
        if (!(omega > 0.0)) throw ConfigError("FloquetGenerator: omega_rf must be > 0");
        const int band = harmonics_.band();
        if (band > 2 * Q)
            throw ConfigError("FloquetGenerator: drive band " + std::to_string(band) +
                              " exceeds the representable range 2Q = " + std::to_string(2 * Q) + " (aliasing)");
        const int B = blocks();
        for (const auto& t : harmonics_.terms) {
            Packed p;
            p.op = t.superop;
            if (t.coeffs.size() > 4) {
                p.toeplitz = MatX::Zero(B, B);
                for (int m = 0; m < B; ++m)
                    for (int n = 0; n < B; ++n) {
                        auto it = t.coeffs.find(n - m);
                        if (it != t.coeffs.end()) p.toeplitz(m, n) = it->second;
                    }
            } else {
                p.shifts.assign(t.coeffs.begin(), t.coeffs.end());
            }
            packed_.push_back(std::move(p));
        }
    }

    int Q() const { return Q_; }
    double omega() const { return omega_; }
    int blocks() const { return 2 * Q_ + 1; }
    Eigen::Index dim() const { return static_cast<Eigen::Index>(kLiouville) * blocks(); }
    const GeneratorHarmonics& harmonics() const { return harmonics_; }

    /// Block (n, m) of C~.
    MatX block(int n, int m) const {
        MatX b = harmonics_.block(n - m);
        if (n == m) b.diagonal().array() -= I * (n * omega_);
        return b;
    }

    MatX dense() const {
        const Eigen::Index N = dim();
        MatX G = MatX::Zero(N, N);
        for (const auto& t : harmonics_.terms) {
            const MatX L(t.superop);
            for (const auto& [k, c] : t.coeffs)
                for (int m = -Q_; m <= Q_; ++m) {
                    const int n = m + k;
                    if (n < -Q_ || n > Q_) continue;
                    G.block(static_cast<Eigen::Index>(n + Q_) * kLiouville, static_cast<Eigen::Index>(m + Q_) * kLiouville,
                            kLiouville, kLiouville) += c * L;
                }
        }
        for (int n = -Q_; n <= Q_; ++n)
            G.diagonal().segment(static_cast<Eigen::Index>(n + Q_) * kLiouville, kLiouville).array() -= I * (n * omega_);
        return G;
    }

    /// y = C~ x.
    void apply(const VecX& x, VecX& y) const {
        const int B = blocks();
        y.setZero(dim());
        Eigen::Map<const MatX> X(x.data(), kLiouville, B);
        Eigen::Map<MatX> Y(y.data(), kLiouville, B);
        MatX Z(kLiouville, B);
        for (const auto& p : packed_) {
            Z.noalias() = p.op * X;
            if (p.toeplitz.size() > 0) {
                Y.noalias() += Z * p.toeplitz;
            } else {
                for (const auto& [k, c] : p.shifts) {
                    const int len = B - std::abs(k);
                    if (len <= 0) continue;
                    Y.middleCols(std::max(0, k), len) += c * Z.middleCols(std::max(0, -k), len);
                }
            }
        }
        for (int j = 0; j < B; ++j) Y.col(j) -= I * ((j - Q_) * omega_) * X.col(j);
    }

    /// True when every envelope satisfies c(-n) = conj(c(n)), i.e. C~ is anti-Hermitian.
    bool anti_hermitian() const {
        for (const auto& t : harmonics_.terms)
            for (const auto& [k, c] : t.coeffs) {
                auto it = t.coeffs.find(-k);
                const cplx partner = it == t.coeffs.end() ? cplx(0.0) : it->second;
                if (std::abs(partner - std::conj(c)) > 1e-14 * std::max(1.0, std::abs(c))) return false;
            }
        return true;
    }

    /// Gershgorin enclosure of the spectrum of K = i C~ (real for anti-Hermitian C~).
    std::pair<double, double> hermitian_bounds() const {
        Eigen::VectorXd centre = Eigen::VectorXd::Zero(kLiouville);
        Eigen::VectorXd radius = Eigen::VectorXd::Zero(kLiouville);
        for (const auto& t : harmonics_.terms) {
            double weight = 0.0;
            for (const auto& [k, c] : t.coeffs) weight += std::abs(c);
            auto it0 = t.coeffs.find(0);
            const cplx c0 = it0 == t.coeffs.end() ? cplx(0.0) : it0->second;
            for (int r = 0; r < kLiouville; ++r) {
                double rowabs = 0.0;
                cplx diag = 0.0;
                for (SparseMat::InnerIterator it(t.superop, r); it; ++it) {
                    rowabs += std::abs(it.value());
                    if (it.col() == r) diag = it.value();
                }
                centre(r) += std::real(I * c0 * diag);
                radius(r) += weight * rowabs - std::abs(c0 * diag);
            }
        }
        const double lo = (centre - radius).minCoeff() - Q_ * omega_;
        const double hi = (centre + radius).maxCoeff() + Q_ * omega_;
        return {lo, hi};
    }

private:
    struct Packed {
        SparseMat op;
        std::vector<std::pair<int, cplx>> shifts;
        MatX toeplitz;  // (m, n) -> c(n - m), used for long envelopes
    };

    GeneratorHarmonics harmonics_;
    int Q_;
    double omega_;
    std::vector<Packed> packed_;
};

inline FloquetGenerator assemble(const GeneratorHarmonics& harmonics, int Q, double omega_rf) {
    return FloquetGenerator(harmonics, Q, omega_rf);
}

/// Pump and relaxation terms in block form.
struct BlockDrive {
    HarmonicSeries pump;    // Gamma_p^(n)
    double relaxation = 0;  // gamma
    VecX x_in = vectorize(Mat8::Identity() / 8.0);
    VecX x0 = vectorize(Mat8::Identity() / 8.0);

    /// Dense pump block matrix with (n, m) block Gamma^(n-m) I.
    MatX pump_matrix(int Q) const {
        const Eigen::Index N = static_cast<Eigen::Index>(kLiouville) * (2 * Q + 1);
        MatX P = MatX::Zero(N, N);
        for (int n = -Q; n <= Q; ++n)
            for (int m = -Q; m <= Q; ++m) {
                const cplx g = pump(n - m);
                if (g == 0.0) continue;
                P.block(static_cast<Eigen::Index>(n + Q) * kLiouville, static_cast<Eigen::Index>(m + Q) * kLiouville,
                        kLiouville, kLiouville)
                    .diagonal()
                    .array() += g;
            }
        return P;
    }

    /// Gamma_in X_in + gamma X_0 (X_0 in the n = 0 block only).
    FloquetVector source(int Q) const {
        FloquetVector s = FloquetVector::zero(Q);
        for (int n = -Q; n <= Q; ++n) s.block(n) = pump(n) * x_in;
        s.block(0) += relaxation * x0;
        return s;
    }
};

inline BlockDrive make_block_drive(const FieldConfig& cfg, int Q) {
    BlockDrive d;
    d.pump = pump_harmonics(cfg.pump, 2 * Q);
    d.relaxation = cfg.relaxation;
    d.x_in = vectorize(cfg.rho_in);
    d.x0 = vectorize(cfg.rho0);
    return d;
}

struct SolveReport {
    double rcond = 0.0;
    double residual = 0.0;  // relative
};

/// X = -(C~ - Gamma - gamma)^{-1} (Gamma_in X_in + gamma X_0) by dense LU.
inline FloquetVector pump_steady_state(const FloquetGenerator& gen, const BlockDrive& drive, SolveReport* report = nullptr) {
    const int Q = gen.Q();
    MatX G = gen.dense() - drive.pump_matrix(Q);
    G.diagonal().array() -= drive.relaxation;
    const FloquetVector src = drive.source(Q);
    Eigen::PartialPivLU<MatX> lu(G);
    // Eigen's estimator can miss exactly zero pivots, so the pivot ratio is checked as well.
    const auto pivots = lu.matrixLU().diagonal().cwiseAbs();
    const double rcond = std::min(lu.rcond(), pivots.minCoeff() / std::max(pivots.maxCoeff(), 1e-300));
    if (!(rcond > 1e-13))
        throw NumericalError("pump_steady_state: singular Floquet system (reciprocal condition estimate " +
                             std::to_string(rcond) + ")");
    FloquetVector x{Q, lu.solve(-src.data)};
    const double res = (G * x.data + src.data).norm() /
                       std::max(1e-300, G.cwiseAbs().rowwise().sum().maxCoeff() * x.data.norm() + src.data.norm());
    if (report) *report = {rcond, res};
    return x;
}

enum class PropagationMethod { Auto, Chebyshev, Dense };

/// Reusable propagator for A = C~ - gamma over a fixed time step.
class StagePropagator {
public:
    StagePropagator(const FloquetGenerator& gen, double gamma, const VecX& x0, double t,
                    PropagationMethod method = PropagationMethod::Auto)
        : Q_(gen.Q()), t_(t) {
        if (!(gamma >= 0.0)) throw ConfigError("StagePropagator: relaxation must be >= 0");
        if (!std::isfinite(t)) throw ConfigError("StagePropagator: time must be finite");
        b_ = FloquetVector::dc(Q_, gamma * x0).data;
        const bool affine = b_.squaredNorm() > 0.0;
        if (method == PropagationMethod::Auto)
            method = gen.anti_hermitian() ? PropagationMethod::Chebyshev : PropagationMethod::Dense;
        if (method == PropagationMethod::Chebyshev) {
            if (!gen.anti_hermitian())
                throw ConfigError("StagePropagator: Chebyshev path needs an anti-Hermitian generator");
            const auto [lo, hi] = gen.hermitian_bounds();
            cheb_.emplace([&gen](const VecX& x, VecX& y) { gen.apply(x, y); }, lo, hi, gamma, t, affine);
        } else {
            const Eigen::Index N = gen.dim();
            MatX aug = MatX::Zero(N + 1, N + 1);
            aug.topLeftCorner(N, N) = gen.dense();
            aug.topLeftCorner(N, N).diagonal().array() -= gamma;
            aug.topRightCorner(N, 1) = b_;
            aug *= t;
            const MatX E = aug.exp();
            if (!E.allFinite())
                throw NumericalError("StagePropagator: matrix exponential overflow (|A t|_1 = " +
                                     std::to_string(aug.cwiseAbs().colwise().sum().maxCoeff()) + ")");
            dense_exp_ = E.topLeftCorner(N, N);
            dense_affine_ = E.topRightCorner(N, 1);
        }
    }

    /// Time step covered by one application.
    double time() const { return t_; }
    bool uses_chebyshev() const { return cheb_.has_value(); }
    int degree() const { return cheb_ ? cheb_->degree() : 0; }

    FloquetVector apply(const FloquetVector& x) const {
        if (x.Q != Q_) throw ConfigError("StagePropagator: cutoff mismatch");
        if (cheb_) return {Q_, cheb_->apply(x.data, b_)};
        return {Q_, dense_exp_ * x.data + dense_affine_};
    }

private:
    int Q_;
    double t_;
    VecX b_;
    std::optional<ChebyshevPropagator> cheb_;
    MatX dense_exp_;
    VecX dense_affine_;
};

/// e^{At} X + (e^{At} - I) A^{-1} b with A = C~ - gamma and b = gamma X_0.
inline FloquetVector propagate(const FloquetGenerator& gen, double gamma, const VecX& x0, const FloquetVector& start,
                               double t, PropagationMethod method = PropagationMethod::Auto) {
    if (!(t >= 0.0)) throw ConfigError("propagate: t must be >= 0");
    if (t == 0.0) return start;
    return StagePropagator(gen, gamma, x0, t, method).apply(start);
}

/// Samples of the probe-stage envelopes on a uniform grid starting at rf phase 0.
struct ProbeTrace {
    double omega = 0.0;
    double dt = 0.0;
    int samples_per_period = 0;
    std::vector<FloquetVector> samples;

    double duration() const { return samples.empty() ? 0.0 : dt * static_cast<double>(samples.size() - 1); }
};

inline ProbeTrace sample_probe(const FloquetGenerator& gen, double gamma, const VecX& x0, const FloquetVector& start,
                               int periods, int samples_per_period = 64) {
    if (periods < 1) throw ConfigError("sample_probe: need at least one period");
    if (samples_per_period < 32) throw ConfigError("sample_probe: need >= 32 samples per rf period");
    ProbeTrace tr;
    tr.omega = gen.omega();
    tr.samples_per_period = samples_per_period;
    tr.dt = two_pi / gen.omega() / samples_per_period;
    const StagePropagator step(gen, gamma, x0, tr.dt);
    tr.samples.reserve(static_cast<std::size_t>(periods * samples_per_period + 1));
    tr.samples.push_back(start);
    for (int s = 0; s < periods * samples_per_period; ++s) tr.samples.push_back(step.apply(tr.samples.back()));
    return tr;
}

namespace detail {
inline int window_samples(const ProbeTrace& trace, double t_avg) {
    const double T = two_pi / trace.omega;
    const double periods = t_avg / T;
    const long whole = std::lround(periods);
    if (whole < 1 || std::abs(periods - static_cast<double>(whole)) > 1e-9 * std::max(1.0, periods))
        throw ConfigError("harmonic_mode: averaging window must be a positive integer number of rf periods");
    const long count = whole * trace.samples_per_period;
    if (count + 1 > static_cast<long>(trace.samples.size()))
        throw ConfigError("harmonic_mode: averaging window exceeds the sampled trace");
    return static_cast<int>(count);
}

/// (1/T) int_0^T sum_k X^(k)(t) e^{i(k-n) w t} dt (Physical) or (1/T) int X^(n) dt (Envelope).
inline VecX demodulate_trace(const ProbeTrace& trace, int n, int count, ModeExtraction mode) {
    VecX acc = VecX::Zero(kLiouville);
    for (int s = 0; s <= count; ++s) {
        const double w = (s == 0 || s == count) ? 0.5 : 1.0;
        const FloquetVector& X = trace.samples[static_cast<std::size_t>(s)];
        if (mode == ModeExtraction::Envelope) {
            acc += w * X.harmonic(n);
        } else {
            const double phase = trace.omega * trace.dt * s;
            for (int k = -X.Q; k <= X.Q; ++k) acc += (w * std::exp(I * ((k - n) * phase))) * X.block(k);
        }
    }
    return acc / static_cast<double>(count);
}
}  // namespace detail

/// 1/2 (D_n + conj-swap D_{-n}) averaged over [0, t_avg].
inline VecX harmonic_mode(const ProbeTrace& trace, int n, double t_avg, ModeExtraction mode = ModeExtraction::Physical) {
    const int count = detail::window_samples(trace, t_avg);
    const VecX plus = detail::demodulate_trace(trace, n, count, mode);
    const VecX minus = detail::demodulate_trace(trace, -n, count, mode);
    return 0.5 * (plus + conj_swap(minus));
}

}  // namespace fmw
