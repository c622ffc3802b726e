// sequence.hpp: the pump -> microwave -> probe sequence and the Voigt
// second-harmonic observable.
#pragma once

#include "fmw/floquet.hpp"
#include "fmw/sequence_config.hpp"

#include <array>
#include <chrono>
#include <memory>
#include <string>
#include <vector>

namespace fmw {

/// Ellipticity signal of a harmonic mode on the probed manifold.
inline cplx voigt_signal(const VecX& envelope, Manifold manifold, double gain = 1.0) {
    const Mat8 r = devectorize(envelope);
    const double s6 = std::sqrt(6.0);
    if (manifold == Manifold::F1) return gain * (r(0, 2) + r(2, 0));
    return gain * (s6 * (r(3, 5) + r(5, 3)) + s6 * (r(5, 7) + r(7, 5)) + 3.0 * (r(6, 4) + r(4, 6)));
}

struct StageDiagnostics {
    std::string name;
    double trace = 0.0;        // Tr X^(0) at the end of the stage
    double hermiticity = 0.0;  // max_n |X^(-n) - X^(n)dagger|
    double seconds = 0.0;
    int degree = 0;            // Chebyshev degree, 0 for direct solves
};

struct SequenceResult {
    cplx m0, m1, m2;
    FloquetVector probe_start;
    VecX mode0, mode1, mode2;  // empty when produced by a SequencePlan
    int Q = 0;
    SolveReport pump;
    std::vector<StageDiagnostics> stages;
};

namespace detail {

inline StageDiagnostics diagnose(std::string name, const FloquetVector& x, double seconds, int degree = 0) {
    return {std::move(name), std::real(x.matrix(0).trace()), x.hermiticity_residual(), seconds, degree};
}

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

/// Field configuration with the microwave frame and coupling removed.
inline FieldConfig without_microwave(FieldConfig f) {
    f.mw.mode = Modulation::Off;
    return f;
}

}  // namespace detail

/// Floquet generators and the pump-stage steady state shared by all points of a scan.
class SequencePlan {
public:
    explicit SequencePlan(const SequenceConfig& cfg)
        : cfg_(cfg), ops_(build_operator_set(LevelScheme{})) {
        cfg_.validate();
        field_ = cfg_.resolved_field();
        Q_ = cfg_.cutoff();
        x0_ = vectorize(field_.rho0);

        const auto t0 = std::chrono::steady_clock::now();
        quiet_ = std::make_shared<FloquetGenerator>(coherent_harmonics(detail::without_microwave(field_), ops_, 2 * Q_), Q_,
                                                    field_.omega_rf);
        pump_state_ = pump_steady_state(*quiet_, make_block_drive(field_, Q_), &pump_report_);
        pump_diag_ = detail::diagnose("pump", pump_state_, detail::seconds_since(t0));

        const auto t1 = std::chrono::steady_clock::now();
        build_probe_functional();
        probe_seconds_ = detail::seconds_since(t1);
    }

    const SequenceConfig& config() const { return cfg_; }
    int Q() const { return Q_; }
    const FloquetVector& pump_state() const { return pump_state_; }
    const SolveReport& pump_report() const { return pump_report_; }

    /// Microwave-stage generator for detuning `delta` (rad/s).
    FloquetGenerator microwave_generator(double delta) const {
        FieldConfig f = field_;
        f.mw.detuning = delta;
        return FloquetGenerator(coherent_harmonics(f, ops_, 2 * Q_), Q_, f.omega_rf);
    }

    /// State at probe onset for microwave detuning `delta`.
    FloquetVector probe_start(double delta, StageDiagnostics* diag = nullptr) const {
        const auto t0 = std::chrono::steady_clock::now();
        if (cfg_.mw_periods == 0) {
            if (diag) *diag = detail::diagnose("microwave", pump_state_, 0.0);
            return pump_state_;
        }
        // With the microwave off the stage is free evolution over t_mw.
        const FloquetGenerator gen = field_.mw_on() ? microwave_generator(delta) : *quiet_;
        const StagePropagator prop(gen, field_.relaxation, x0_, cfg_.mw_duration());
        FloquetVector x = prop.apply(pump_state_);
        if (diag) *diag = detail::diagnose("microwave", x, detail::seconds_since(t0), prop.degree());
        return x;
    }

    /// m0, m1, m2 from the precomputed probe functional.
    std::array<cplx, 3> signals(const FloquetVector& x) const {
        std::array<cplx, 5> s{};
        for (int k = 0; k < 5; ++k) s[static_cast<std::size_t>(k)] = linear_[static_cast<std::size_t>(k)].cwiseProduct(x.data).sum() + offset_[static_cast<std::size_t>(k)];
        auto mode = [&](int n) { return 0.5 * (s[static_cast<std::size_t>(n + 2)] + std::conj(s[static_cast<std::size_t>(2 - n)])); };
        return {0.5 * mode(0), mode(1), mode(2)};
    }

    SequenceResult run(double delta) const {
        SequenceResult r;
        r.Q = Q_;
        r.pump = pump_report_;
        r.stages.push_back(pump_diag_);
        StageDiagnostics mw;
        r.probe_start = probe_start(delta, &mw);
        r.stages.push_back(mw);
        const auto m = signals(r.probe_start);
        r.m0 = m[0];
        r.m1 = m[1];
        r.m2 = m[2];
        r.stages.push_back({"probe", std::real(r.probe_start.matrix(0).trace()), r.probe_start.hermiticity_residual(),
                            probe_seconds_, 0});
        return r;
    }

private:
    // Signal s_k = g Tr(D_k B) of the demodulated probe trace is affine in the
    // probe-onset state: s_k = lin_k . X + off_k, k = -2..2. The linear parts
    // are accumulated backwards with the transposed step propagator.
    void build_probe_functional() {
        const int S = cfg_.samples_per_period, count = cfg_.window_periods * S;
        const double dt = cfg_.period() / S, w = field_.omega_rf;
        const Mat8 P = ops_.projector(cfg_.probe_manifold);
        const VecX b = vectorize(Mat8((P * ops_.A * P).transpose()));
        const Eigen::Index N = quiet_->dim();

        auto row = [&](int n, int s) {
            VecX r = VecX::Zero(N);
            const double weight = cfg_.gain * ((s == 0 || s == count) ? 0.5 : 1.0) / count;
            for (int k = -Q_; k <= Q_; ++k) {
                if (cfg_.extraction == ModeExtraction::Envelope && k != n) continue;
                const cplx ph = cfg_.extraction == ModeExtraction::Envelope ? cplx(1.0) : std::exp(I * ((k - n) * w * dt * s));
                r.segment(static_cast<Eigen::Index>(k + Q_) * kLiouville, kLiouville) = weight * ph * b;
            }
            return r;
        };

        // Offsets: the functional applied to the trace started from zero.
        const auto zero_trace = sample_probe(*quiet_, field_.relaxation, x0_, FloquetVector::zero(Q_), cfg_.window_periods, S);
        for (int n = -2; n <= 2; ++n) {
            cplx acc = 0.0;
            for (int s = 0; s <= count; ++s) acc += row(n, s).cwiseProduct(zero_trace.samples[static_cast<std::size_t>(s)].data).sum();
            offset_[static_cast<std::size_t>(n + 2)] = acc;
        }

        // E^T y = e^{-gamma dt} conj(exp(-C dt) conj(y)) for anti-Hermitian C.
        if (!quiet_->anti_hermitian()) throw NumericalError("probe functional: probe generator is not anti-Hermitian");
        const auto [lo, hi] = quiet_->hermitian_bounds();
        const auto gen = quiet_;
        const ChebyshevPropagator back([gen](const VecX& x, VecX& y) { gen->apply(x, y); }, lo, hi, 0.0, -dt, false);
        const double decay = std::exp(-field_.relaxation * dt);
        for (int n = -2; n <= 2; ++n) {
            VecX u = row(n, count);
            for (int s = count - 1; s >= 0; --s) u = decay * back.apply(u.conjugate()).conjugate() + row(n, s);
            linear_[static_cast<std::size_t>(n + 2)] = u;
        }
    }

    SequenceConfig cfg_;
    OperatorSet ops_;
    FieldConfig field_;
    int Q_ = 0;
    VecX x0_;
    std::shared_ptr<const FloquetGenerator> quiet_;  // pump and probe stages: no microwave
    FloquetVector pump_state_;
    SolveReport pump_report_;
    StageDiagnostics pump_diag_;
    double probe_seconds_ = 0.0;
    std::array<VecX, 5> linear_;
    std::array<cplx, 5> offset_{};
};

/// Runs the three stages explicitly: steady pump state, microwave
/// propagation over t_mw, sampled probe stage and harmonic extraction.
inline SequenceResult run_sequence(const SequenceConfig& cfg) {
    cfg.validate();
    const OperatorSet ops = build_operator_set(LevelScheme{});
    const FieldConfig field = cfg.resolved_field();
    const int Q = cfg.cutoff();
    const VecX x0 = vectorize(field.rho0);
    SequenceResult r;
    r.Q = Q;

    auto t0 = std::chrono::steady_clock::now();
    const FloquetGenerator quiet(coherent_harmonics(detail::without_microwave(field), ops, 2 * Q), Q, field.omega_rf);
    const FloquetVector pumped = pump_steady_state(quiet, make_block_drive(field, Q), &r.pump);
    r.stages.push_back(detail::diagnose("pump", pumped, detail::seconds_since(t0)));

    t0 = std::chrono::steady_clock::now();
    if (cfg.mw_periods > 0) {
        const FloquetGenerator gen(coherent_harmonics(field, ops, 2 * Q), Q, field.omega_rf);
        const StagePropagator prop(gen, field.relaxation, x0, cfg.mw_duration());
        r.probe_start = prop.apply(pumped);
        r.stages.push_back(detail::diagnose("microwave", r.probe_start, detail::seconds_since(t0), prop.degree()));
    } else {
        r.probe_start = pumped;
        r.stages.push_back(detail::diagnose("microwave", pumped, 0.0));
    }

    t0 = std::chrono::steady_clock::now();
    const ProbeTrace trace = sample_probe(quiet, field.relaxation, x0, r.probe_start, cfg.probe_periods, cfg.samples_per_period);
    const double window = cfg.window_periods * cfg.period();
    r.mode0 = harmonic_mode(trace, 0, window, cfg.extraction);
    r.mode1 = harmonic_mode(trace, 1, window, cfg.extraction);
    r.mode2 = harmonic_mode(trace, 2, window, cfg.extraction);
    r.stages.push_back(detail::diagnose("probe", trace.samples.back(), detail::seconds_since(t0)));

    r.m0 = 0.5 * voigt_signal(r.mode0, cfg.probe_manifold, cfg.gain);
    r.m1 = voigt_signal(r.mode1, cfg.probe_manifold, cfg.gain);
    r.m2 = voigt_signal(r.mode2, cfg.probe_manifold, cfg.gain);
    return r;
}

}  // namespace fmw
