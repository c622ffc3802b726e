// oracle.hpp: brute-force time-domain integration of the 8x8 master equation
// with explicit H(t) and square-wave pump/microwave gates. Shares no code
// with the Floquet path beyond the operator matrices.
#pragma once

#include "fmw/operators.hpp"
#include "fmw/sequence_config.hpp"
#include "fmw/types.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

namespace fmw::oracle {

enum class Stage { Pump, Microwave, Probe };

struct TimeTrace {
    double omega = 0.0;
    std::vector<double> t;
    std::vector<Mat8> rho;
    int steps_per_period = 0;
};

/// True while rf phase lies in the window of half-width pi*duty centred on `centre`.
inline bool gate_open(double phase, double duty, double centre) {
    if (duty >= 1.0) return true;
    const double u = std::remainder(phase - centre, two_pi);
    return std::abs(u) <= pi * duty;
}

class Model {
public:
    explicit Model(const SequenceConfig& cfg)
        : cfg_(cfg), field_(cfg.resolved_field()), ops_(build_operator_set(LevelScheme{})) {
        cfg_.validate();
        static_part_ = field_.ext_x * ops_.Zx + field_.ext_y * ops_.Zy + (field_.dc + field_.ext_z) * ops_.Zz;
        const auto& mw = field_.mw;
        coupling_ = mw.rabi_pi * mw_coupling(ops_.Sz) + mw.rabi_sigma_plus * mw_coupling(ops_.Ssigma_plus) +
                    mw.rabi_sigma_minus * mw_coupling(ops_.Ssigma_minus);
    }

    double omega() const { return field_.omega_rf; }
    double period() const { return two_pi / field_.omega_rf; }
    const FieldConfig& field() const { return field_; }
    const OperatorSet& ops() const { return ops_; }

    bool pump_active(Stage s) const { return s == Stage::Pump && field_.pump.mode != Modulation::Off; }
    bool mw_active(Stage s) const { return s == Stage::Microwave && field_.mw_on(); }

    /// Gate edges within one rf period, as phases in [0, 2pi).
    std::vector<double> edge_phases(Stage s) const {
        std::vector<double> e;
        auto add = [&](double centre, double duty) {
            for (double sgn : {-1.0, 1.0}) {
                double p = std::fmod(centre + sgn * pi * duty, two_pi);
                if (p < 0) p += two_pi;
                e.push_back(p);
            }
        };
        if (pump_active(s) && field_.pump.mode == Modulation::Pulsed && field_.pump.duty < 1.0)
            add(field_.pump.phase, field_.pump.duty);
        if (mw_active(s) && field_.mw.mode == Modulation::Pulsed && field_.mw.duty < 1.0)
            add(field_.mw.phase, field_.mw.duty);
        return e;
    }

    struct Gates {
        double pump_rate = 0.0;
        bool mw = false;
    };

    Gates gates_at(Stage s, double t) const {
        const double phase = field_.omega_rf * t;
        Gates g;
        if (pump_active(s)) {
            const bool open = field_.pump.mode == Modulation::CW || gate_open(phase, field_.pump.duty, field_.pump.phase);
            g.pump_rate = open ? field_.pump.rate : 0.0;
        }
        if (mw_active(s))
            g.mw = field_.mw.mode == Modulation::CW || gate_open(phase, field_.mw.duty, field_.mw.phase);
        return g;
    }

    Mat8 hamiltonian(Stage s, double t, const Gates& g) const {
        Mat8 H = static_part_ + field_.rf_amplitude * std::cos(field_.omega_rf * t) * ops_.Zx;
        if (s == Stage::Microwave && field_.mw.mode != Modulation::Off) {
            H += field_.mw.detuning * ops_.P2;
            if (g.mw) H += coupling_;
        }
        return H;
    }

    /// d rho/dt = i[rho, H] - Gamma_p (rho - rho_in) - gamma (rho - rho_0).
    Mat8 rhs(Stage s, double t, const Mat8& rho, const Gates& g) const {
        const Mat8 H = hamiltonian(s, t, g);
        Mat8 d = I * (rho * H - H * rho);
        if (g.pump_rate != 0.0) d -= g.pump_rate * (rho - field_.rho_in);
        if (field_.relaxation != 0.0) d -= field_.relaxation * (rho - field_.rho0);
        return d;
    }

    /// Classical RK4 from t0 to t1 with steps no longer than period/steps_per_period,
    /// split at every gate edge so the right-hand side is smooth inside each step.
    Mat8 evolve(Stage s, Mat8 rho, double t0, double t1, int steps_per_period) const {
        if (t1 <= t0) return rho;
        const double T = period(), h_max = T / steps_per_period;
        std::vector<double> cuts{t0, t1};
        const auto edges = edge_phases(s);
        if (!edges.empty()) {
            const long p0 = static_cast<long>(std::floor(t0 / T)) - 1, p1 = static_cast<long>(std::ceil(t1 / T)) + 1;
            for (long p = p0; p <= p1; ++p)
                for (double e : edges) {
                    const double te = (static_cast<double>(p) * two_pi + e) / field_.omega_rf;
                    if (te > t0 + 1e-15 * T && te < t1 - 1e-15 * T) cuts.push_back(te);
                }
            std::sort(cuts.begin(), cuts.end());
        }
        for (std::size_t k = 0; k + 1 < cuts.size(); ++k) {
            const double a = cuts[k], b = cuts[k + 1];
            const Gates g = gates_at(s, 0.5 * (a + b));
            const int n = std::max(1, static_cast<int>(std::ceil((b - a) / h_max - 1e-9)));
            const double h = (b - a) / n;
            for (int i = 0; i < n; ++i) {
                const double t = a + i * h;
                const Mat8 k1 = rhs(s, t, rho, g);
                const Mat8 k2 = rhs(s, t + 0.5 * h, rho + 0.5 * h * k1, g);
                const Mat8 k3 = rhs(s, t + 0.5 * h, rho + 0.5 * h * k2, g);
                const Mat8 k4 = rhs(s, t + h, rho + h * k3, g);
                rho += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            }
        }
        return rho;
    }

private:
    SequenceConfig cfg_;
    FieldConfig field_;
    OperatorSet ops_;
    Mat8 static_part_;
    Mat8 coupling_;
};

/// Smallest power-of-two steps per period whose end state changes by less
/// than `tol` (Richardson estimate) when the step is halved.
inline int choose_steps(const Model& model, Stage s, const Mat8& rho, double t0, double t1, double tol) {
    if (!(tol >= 1e-12 && tol <= 1e-6)) throw ConfigError("oracle tolerance must lie in [1e-12, 1e-6]");
    int n = 128;
    Mat8 coarse = model.evolve(s, rho, t0, t1, n);
    for (; n <= (1 << 16); n *= 2) {
        const Mat8 fine = model.evolve(s, rho, t0, t1, 2 * n);
        if ((fine - coarse).cwiseAbs().maxCoeff() / 15.0 < tol) return 2 * n;
        coarse = fine;
    }
    throw NumericalError("oracle: step size underflow, no step count reaches tolerance " + std::to_string(tol));
}

/// Samples rho(t) on [t0, t0 + periods*T] at `samples_per_period` points per rf period.
inline TimeTrace sample(const Model& model, Stage s, const Mat8& rho0, double t0, int periods, int steps_per_period,
                        int samples_per_period = 64) {
    if (periods < 1) throw ConfigError("oracle: need at least one period");
    if (samples_per_period < 32) throw ConfigError("oracle: need >= 32 samples per period");
    if (steps_per_period % samples_per_period != 0)
        steps_per_period = ((steps_per_period + samples_per_period - 1) / samples_per_period) * samples_per_period;
    TimeTrace tr;
    tr.omega = model.omega();
    tr.steps_per_period = steps_per_period;
    const double dt = model.period() / samples_per_period;
    Mat8 rho = rho0;
    tr.t.push_back(t0);
    tr.rho.push_back(rho);
    for (int k = 1; k <= periods * samples_per_period; ++k) {
        const double ta = t0 + (k - 1) * dt, tb = t0 + k * dt;
        rho = model.evolve(s, rho, ta, tb, steps_per_period);
        tr.t.push_back(tb);
        tr.rho.push_back(rho);
    }
    return tr;
}

/// Integrates one stage over [t0, t1] with the step count fixed by `tol`.
inline TimeTrace integrate(const SequenceConfig& cfg, Stage s, const Mat8& rho0, double t0, double t1, double tol,
                           int samples_per_period = 64) {
    const Model model(cfg);
    const double periods = (t1 - t0) / model.period();
    const long whole = std::lround(periods);
    if (whole < 1 || std::abs(periods - static_cast<double>(whole)) > 1e-9 * std::max(1.0, periods))
        throw ConfigError("oracle: integration span must be a positive integer number of rf periods");
    const int steps = choose_steps(model, s, rho0, t0, t1, tol);
    return sample(model, s, rho0, t0, static_cast<int>(whole), steps, samples_per_period);
}

/// (1/T_w) int rho(t) e^{-i n w t} dt over the first `window` periods, trapezoidal.
inline VecX demodulate(const TimeTrace& trace, double omega, int n, int window) {
    if (window < 1) throw ConfigError("demodulate: window must be >= 1 period");
    if (trace.t.size() < 2) throw ConfigError("demodulate: trace too short");
    const double T = two_pi / omega, dt = trace.t[1] - trace.t[0];
    const long count = std::lround(window * T / dt);
    if (std::abs(count * dt - window * T) > 1e-9 * T) throw ConfigError("demodulate: window not aligned with samples");
    if (count + 1 > static_cast<long>(trace.t.size())) throw ConfigError("demodulate: window exceeds the trace");
    Mat8 acc = Mat8::Zero();
    for (long k = 0; k <= count; ++k) {
        const double w = (k == 0 || k == count) ? 0.5 : 1.0;
        acc += (w * std::exp(-I * (n * omega * trace.t[static_cast<std::size_t>(k)]))) * trace.rho[static_cast<std::size_t>(k)];
    }
    acc /= static_cast<double>(count);
    VecX x(kLiouville);
    for (int i = 0; i < kLevels; ++i)
        for (int j = 0; j < kLevels; ++j) x(kLevels * i + j) = acc(i, j);
    return x;
}

/// Periodic pump-stage state at rf phase 0 from the one-period monodromy map.
inline Mat8 periodic_pump_state(const Model& model, int steps_per_period) {
    const double T = model.period();
    const Mat8 c = model.evolve(Stage::Pump, Mat8::Zero(), 0.0, T, steps_per_period);
    Eigen::Matrix<cplx, kLiouville, kLiouville> M;
    Eigen::Matrix<cplx, kLiouville, 1> rhs;
    for (int i = 0; i < kLevels; ++i)
        for (int j = 0; j < kLevels; ++j) {
            Mat8 e = Mat8::Zero();
            e(i, j) = 1.0;
            const Mat8 col = model.evolve(Stage::Pump, e, 0.0, T, steps_per_period) - c;
            for (int a = 0; a < kLevels; ++a)
                for (int b = 0; b < kLevels; ++b) M(kLevels * a + b, kLevels * i + j) = (a == i && b == j ? 1.0 : 0.0) - col(a, b);
            rhs(kLevels * i + j) = c(i, j);
        }
    Eigen::PartialPivLU<Eigen::Matrix<cplx, kLiouville, kLiouville>> lu(M);
    const Eigen::Matrix<cplx, kLiouville, 1> x = lu.solve(rhs);
    if (!x.allFinite()) throw NumericalError("oracle: periodic pump state is not unique");
    Mat8 rho;
    for (int i = 0; i < kLevels; ++i)
        for (int j = 0; j < kLevels; ++j) rho(i, j) = x(kLevels * i + j);
    return rho;
}

struct Result {
    cplx m0, m1, m2;
    Mat8 rho_pump;
    Mat8 rho_probe;
    VecX mode0, mode1, mode2;
    int steps_per_period = 0;
};

/// Full pump -> microwave -> probe sequence, demodulated on the probed manifold.
inline Result run(const SequenceConfig& cfg, int steps_per_period = 1024) {
    const Model model(cfg);
    const double T = model.period();
    Result r;
    r.steps_per_period = steps_per_period;
    r.rho_pump = periodic_pump_state(model, steps_per_period);
    const double t_mw = cfg.mw_periods * T;
    r.rho_probe = model.evolve(Stage::Microwave, r.rho_pump, 0.0, t_mw, steps_per_period);
    const TimeTrace tr = sample(model, Stage::Probe, r.rho_probe, t_mw, cfg.window_periods, steps_per_period,
                                cfg.samples_per_period);
    r.mode0 = demodulate(tr, model.omega(), 0, cfg.window_periods);
    r.mode1 = demodulate(tr, model.omega(), 1, cfg.window_periods);
    r.mode2 = demodulate(tr, model.omega(), 2, cfg.window_periods);
    const Mat8 P = model.ops().projector(cfg.probe_manifold);
    const Mat8 B = P * model.ops().A * P;
    auto signal = [&](const VecX& x) {
        cplx s = 0.0;
        for (int i = 0; i < kLevels; ++i)
            for (int j = 0; j < kLevels; ++j) s += x(kLevels * i + j) * B(j, i);
        return cfg.gain * s;
    };
    r.m0 = 0.5 * signal(r.mode0);
    r.m1 = signal(r.mode1);
    r.m2 = signal(r.mode2);
    return r;
}

}  // namespace fmw::oracle
