#include "fmw/floquet.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace fmw;

namespace {

const OperatorSet& ops() {
    static const OperatorSet o = build_operator_set(LevelScheme{});
    return o;
}

VecX random_vector(Eigen::Index n, unsigned seed) {
    std::mt19937 rng(seed);
    std::normal_distribution<double> d(0.0, 1.0);
    VecX v(n);
    for (Eigen::Index i = 0; i < n; ++i) v(i) = cplx(d(rng), d(rng));
    return v;
}

// Scaled-down operating point: rf resonant with the static field.
FieldConfig dressed_config(double scale = 1.0) {
    FieldConfig cfg;
    cfg.omega_rf = two_pi * 9e3 * scale;
    cfg.dc = cfg.omega_rf;
    cfg.rf_amplitude = two_pi * 1.5e3 * scale;
    cfg.mw.mode = Modulation::Off;
    cfg.pump.mode = Modulation::Pulsed;
    cfg.pump.rate = two_pi * 1e3 * scale;
    cfg.pump.duty = 0.1;
    cfg.relaxation = two_pi * 20.0 * scale;
    PreparedState s;
    cfg.rho_in = prepare_input_state(s);
    return cfg;
}

}  // namespace

TEST(Assemble, EmptyHarmonicsGiveFrequencyLadder) {
    const double w = 3.0;
    const auto gen = assemble(GeneratorHarmonics{}, 1, w);
    const MatX G = gen.dense();
    ASSERT_EQ(G.rows(), 3 * kLiouville);
    MatX expected = MatX::Zero(G.rows(), G.cols());
    for (int n = -1; n <= 1; ++n)
        expected.diagonal().segment((n + 1) * kLiouville, kLiouville).setConstant(-I * (n * w));
    EXPECT_EQ(G, expected);
}

TEST(Assemble, StaticGeneratorIsBlockDiagonal) {
    FieldConfig cfg = dressed_config();
    cfg.rf_amplitude = 0.0;
    const auto gen = assemble(coherent_harmonics(cfg, ops(), 4), 2, cfg.omega_rf);
    for (int n = -2; n <= 2; ++n)
        for (int m = -2; m <= 2; ++m) {
            if (n == m) {
                MatX diff = gen.block(n, n) - gen.block(0, 0);
                diff.diagonal().array() += I * (n * cfg.omega_rf);
                EXPECT_LT(diff.cwiseAbs().maxCoeff(), 1e-9);
            } else {
                EXPECT_EQ(gen.block(n, m).cwiseAbs().maxCoeff(), 0.0);
            }
        }
}

TEST(Assemble, RfDriveFillsTridiagonalBand) {
    const FieldConfig cfg = dressed_config();
    const auto gen = assemble(coherent_harmonics(cfg, ops(), 4), 2, cfg.omega_rf);
    const MatX G = gen.dense();
    for (int n = -2; n <= 2; ++n)
        for (int m = -2; m <= 2; ++m) {
            const double mag = G.block((n + 2) * kLiouville, (m + 2) * kLiouville, kLiouville, kLiouville).cwiseAbs().maxCoeff();
            if (std::abs(n - m) <= 1)
                EXPECT_GT(mag, 0.0);
            else
                EXPECT_EQ(mag, 0.0);
        }
    const MatX expected = commutator_superoperator(0.5 * cfg.rf_amplitude * ops().Zx);
    EXPECT_LT((gen.block(1, 0) - expected).cwiseAbs().maxCoeff(), 1e-9);
    EXPECT_LT((gen.block(-1, 0) - expected).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(Assemble, RejectsAliasedBand) {
    FieldConfig cfg = dressed_config();
    cfg.mw.mode = Modulation::Pulsed;
    cfg.mw.duty = 0.1;
    cfg.mw.rabi_pi = 1e3;
    EXPECT_THROW(assemble(coherent_harmonics(cfg, ops(), 9), 4, cfg.omega_rf), ConfigError);
    EXPECT_NO_THROW(assemble(coherent_harmonics(cfg, ops(), 8), 4, cfg.omega_rf));
    EXPECT_THROW(assemble(GeneratorHarmonics{}, 0, 1.0), ConfigError);
}

TEST(Generator, StructuredApplyMatchesDense) {
    FieldConfig cfg = dressed_config();
    cfg.mw.mode = Modulation::Pulsed;
    cfg.mw.duty = 0.12;
    cfg.mw.rabi_pi = two_pi * 500.0;
    cfg.mw.rabi_sigma_plus = two_pi * 300.0;
    cfg.mw.detuning = two_pi * 4e3;
    cfg.ext_y = two_pi * 60.0;
    const int Q = 5;
    const auto gen = assemble(coherent_harmonics(cfg, ops(), 2 * Q), Q, cfg.omega_rf);
    const VecX x = random_vector(gen.dim(), 11);
    VecX y;
    gen.apply(x, y);
    const VecX ref = gen.dense() * x;
    EXPECT_LT((y - ref).norm(), 1e-12 * ref.norm());
}

TEST(Generator, AntiHermitianWithEnclosingBounds) {
    FieldConfig cfg = dressed_config();
    cfg.mw.mode = Modulation::Pulsed;
    cfg.mw.duty = 0.2;
    cfg.mw.rabi_sigma_minus = two_pi * 800.0;
    const int Q = 3;
    const auto gen = assemble(coherent_harmonics(cfg, ops(), 2 * Q), Q, cfg.omega_rf);
    ASSERT_TRUE(gen.anti_hermitian());
    const MatX G = gen.dense();
    EXPECT_LT((G + G.adjoint()).cwiseAbs().maxCoeff(), 1e-9);
    const MatX K = I * G;
    Eigen::SelfAdjointEigenSolver<MatX> es(0.5 * (K + K.adjoint()), Eigen::EigenvaluesOnly);
    const auto [lo, hi] = gen.hermitian_bounds();
    EXPECT_LE(lo, es.eigenvalues().minCoeff());
    EXPECT_GE(hi, es.eigenvalues().maxCoeff());
}

TEST(PumpSteadyState, ContinuousPumpFixesTheState) {
    FieldConfig cfg;
    cfg.mw.mode = Modulation::Off;
    cfg.dc = 0.0;
    cfg.pump.mode = Modulation::CW;
    cfg.pump.rate = 50.0;
    PreparedState s;
    s.kind = StateKind::Clock;
    cfg.rho_in = prepare_input_state(s);
    const auto gen = assemble(coherent_harmonics(cfg, ops(), 4), 2, cfg.omega_rf);
    const auto X = pump_steady_state(gen, make_block_drive(cfg, 2));
    EXPECT_LT((X.harmonic(0) - vectorize(cfg.rho_in)).cwiseAbs().maxCoeff(), 1e-12);
    for (int n : {-2, -1, 1, 2}) EXPECT_LT(X.harmonic(n).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(PumpSteadyState, PureRelaxationReachesTarget) {
    FieldConfig cfg;
    cfg.mw.mode = Modulation::Off;
    cfg.dc = 0.0;
    cfg.pump.mode = Modulation::Off;
    cfg.relaxation = 7.0;
    PreparedState s;
    s.kind = StateKind::Oriented;
    cfg.rho0 = prepare_input_state(s);
    const auto gen = assemble(coherent_harmonics(cfg, ops(), 2), 1, cfg.omega_rf);
    const auto X = pump_steady_state(gen, make_block_drive(cfg, 1));
    EXPECT_LT((X.harmonic(0) - vectorize(cfg.rho0)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(PumpSteadyState, SingularSystemReported) {
    FieldConfig cfg;
    cfg.mw.mode = Modulation::Off;
    cfg.dc = 0.0;
    cfg.pump.mode = Modulation::Off;
    const auto gen = assemble(coherent_harmonics(cfg, ops(), 2), 1, cfg.omega_rf);
    try {
        pump_steady_state(gen, make_block_drive(cfg, 1));
        FAIL() << "expected a singular-system error";
    } catch (const NumericalError& e) {
        EXPECT_NE(std::string(e.what()).find("condition"), std::string::npos);
    }
}

TEST(PumpSteadyState, PulsedDressedResidualAndPhysicality) {
    const FieldConfig cfg = dressed_config();
    const int Q = 10;
    const auto gen = assemble(coherent_harmonics(cfg, ops(), 2 * Q), Q, cfg.omega_rf);
    SolveReport rep;
    const auto X = pump_steady_state(gen, make_block_drive(cfg, Q), &rep);
    EXPECT_LT(rep.residual, 1e-10);
    EXPECT_LT(X.hermiticity_residual(), 1e-10);
    EXPECT_NEAR(std::abs(X.matrix(0).trace() - 1.0), 0.0, 1e-10);
    for (int n = 1; n <= Q; ++n) EXPECT_LT(std::abs(X.matrix(n).trace()), 1e-10);
}

TEST(Propagate, ZeroTimeAndZeroGenerator) {
    const FieldConfig cfg = dressed_config();
    const auto gen = assemble(coherent_harmonics(cfg, ops(), 4), 2, cfg.omega_rf);
    FloquetVector X{2, random_vector(gen.dim(), 5)};
    EXPECT_EQ(propagate(gen, 3.0, vectorize(cfg.rho0), X, 0.0).data, X.data);
    EXPECT_THROW(propagate(gen, 3.0, vectorize(cfg.rho0), X, -1.0), ConfigError);

    // Only the n = 0 block is stationary under the bare frequency ladder.
    const auto empty = assemble(GeneratorHarmonics{}, 1, 2.0);
    const auto X0 = FloquetVector::dc(1, random_vector(kLiouville, 6));
    for (double t : {0.1, 3.0, 40.0})
        EXPECT_LT((propagate(empty, 0.0, VecX::Zero(kLiouville), X0, t).data - X0.data).norm(), 1e-13);
}

TEST(Propagate, SigmaPlusTwoLevelRabi) {
    FieldConfig cfg;
    cfg.dc = 0.0;
    cfg.mw.mode = Modulation::CW;
    cfg.mw.rabi_sigma_plus = two_pi * 1e3;
    const auto gen = assemble(coherent_harmonics(cfg, ops(), 2), 1, cfg.omega_rf);
    Mat8 rho = Mat8::Zero();
    rho(3, 3) = 1.0;
    const auto X0 = FloquetVector::dc(1, vectorize(rho));
    const double W = std::sqrt(3.0) * cfg.mw.rabi_sigma_plus;
    for (double t : {1e-5, 1.3e-4, 2.9e-4, 7.7e-4}) {
        const Mat8 r = propagate(gen, 0.0, VecX::Zero(kLiouville), X0, t).matrix(0);
        EXPECT_NEAR(std::real(r(3, 3)), 0.5 * (1.0 + std::cos(W * t)), 1e-11);
        EXPECT_NEAR(std::real(r(0, 0)), 0.5 * (1.0 - std::cos(W * t)), 1e-11);
    }
}

TEST(Propagate, ChebyshevMatchesDenseExponential) {
    FieldConfig cfg = dressed_config();
    cfg.mw.mode = Modulation::Pulsed;
    cfg.mw.duty = 0.1;
    cfg.mw.rabi_pi = two_pi * 700.0;
    cfg.mw.rabi_sigma_plus = two_pi * 400.0;
    cfg.mw.rabi_sigma_minus = two_pi * 400.0;
    cfg.mw.detuning = two_pi * 2e3;
    const int Q = 4;
    const auto gen = assemble(coherent_harmonics(cfg, ops(), 2 * Q), Q, cfg.omega_rf);
    const FloquetVector X{Q, random_vector(gen.dim(), 9)};
    const VecX x0 = vectorize(cfg.rho0);
    const double t = 3.0 * two_pi / cfg.omega_rf;
    for (double gamma : {0.0, cfg.relaxation}) {
        const auto a = propagate(gen, gamma, x0, X, t, PropagationMethod::Chebyshev);
        const auto b = propagate(gen, gamma, x0, X, t, PropagationMethod::Dense);
        EXPECT_LT((a.data - b.data).norm(), 1e-10 * b.data.norm());
    }
}

TEST(Propagate, ExponentialIdentityResidual) {
    const FieldConfig cfg = dressed_config();
    const int Q = 6;
    const auto gen = assemble(coherent_harmonics(cfg, ops(), 2 * Q), Q, cfg.omega_rf);
    const VecX x0 = vectorize(cfg.rho0);
    const FloquetVector X{Q, random_vector(gen.dim(), 21)};
    const double t = 2.5 * two_pi / cfg.omega_rf, h = 1e-4 * two_pi / cfg.omega_rf;
    // d/dt X(t) = (C - gamma) X(t) + gamma X0, checked by a 4th-order central difference.
    auto at = [&](double s) { return propagate(gen, cfg.relaxation, x0, X, s).data; };
    const VecX deriv = (8.0 * (at(t + h) - at(t - h)) - (at(t + 2 * h) - at(t - 2 * h))) / (12.0 * h);
    const VecX Xt = at(t);
    VecX rhs;
    gen.apply(Xt, rhs);
    rhs -= cfg.relaxation * Xt;
    rhs += FloquetVector::dc(Q, cfg.relaxation * x0).data;
    EXPECT_LT((deriv - rhs).norm() / rhs.norm(), 1e-8);
}

TEST(Propagate, SemigroupProperty) {
    const FieldConfig cfg = dressed_config();
    const int Q = 6;
    const auto gen = assemble(coherent_harmonics(cfg, ops(), 2 * Q), Q, cfg.omega_rf);
    const VecX x0 = vectorize(cfg.rho0);
    const FloquetVector X{Q, random_vector(gen.dim(), 22)};
    const double t1 = 1.7e-4, t2 = 6.1e-4;
    const auto direct = propagate(gen, cfg.relaxation, x0, X, t1 + t2);
    const auto split = propagate(gen, cfg.relaxation, x0, propagate(gen, cfg.relaxation, x0, X, t1), t2);
    EXPECT_LT((direct.data - split.data).norm(), 1e-11 * direct.data.norm());
}

TEST(Propagate, TraceAndHermiticityWithoutDamping) {
    FieldConfig cfg = dressed_config();
    cfg.relaxation = 0.0;
    cfg.mw.mode = Modulation::Pulsed;
    cfg.mw.duty = 0.1;
    cfg.mw.rabi_pi = two_pi * 900.0;
    const int Q = 10;
    const auto gen = assemble(coherent_harmonics(cfg, ops(), 2 * Q), Q, cfg.omega_rf);
    const auto pumped = pump_steady_state(assemble(coherent_harmonics(dressed_config(), ops(), 2 * Q), Q, cfg.omega_rf),
                                          make_block_drive(dressed_config(), Q));
    const auto X = propagate(gen, 0.0, VecX::Zero(kLiouville), pumped, 5.0 * two_pi / cfg.omega_rf);
    EXPECT_NEAR(std::abs(X.matrix(0).trace() - pumped.matrix(0).trace()), 0.0, 1e-10);
    for (int n = 1; n <= Q; ++n) EXPECT_LT(std::abs(X.matrix(n).trace()), 1e-10);
    EXPECT_LT(X.hermiticity_residual(), 1e-10);
}

TEST(HarmonicMode, ConstantEnvelopes) {
    const double w = 5.0;
    const auto gen = assemble(GeneratorHarmonics{}, 2, w);
    ProbeTrace tr;
    tr.omega = w;
    tr.samples_per_period = 32;
    tr.dt = two_pi / w / 32;
    const FloquetVector X{2, random_vector(5 * kLiouville, 4)};
    tr.samples.assign(33, X);
    const VecX expected = 0.5 * (X.harmonic(2) + conj_swap(X.harmonic(-2)));
    EXPECT_LT((harmonic_mode(tr, 2, two_pi / w, ModeExtraction::Envelope) - expected).norm(), 1e-14);
}

TEST(HarmonicMode, DcModeOfPhysicalStateIsHermitian) {
    const FieldConfig cfg = dressed_config();
    const int Q = 6;
    const auto gen = assemble(coherent_harmonics(cfg, ops(), 2 * Q), Q, cfg.omega_rf);
    const auto X = pump_steady_state(gen, make_block_drive(cfg, Q));
    const auto tr = sample_probe(gen, cfg.relaxation, vectorize(cfg.rho0), X, 1, 32);
    const Mat8 m0 = devectorize(harmonic_mode(tr, 0, two_pi / cfg.omega_rf));
    EXPECT_LT((m0 - m0.adjoint()).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(HarmonicMode, DecayingEnvelopeAverage) {
    const double w = two_pi, gamma = w / two_pi;  // gamma * T = 1
    const auto gen = assemble(GeneratorHarmonics{}, 1, w);
    const VecX v = random_vector(kLiouville, 8);
    FloquetVector X = FloquetVector::zero(1);
    X.block(0) = v;
    // Relaxation towards zero leaves the DC envelope decaying as e^{-gamma t}.
    const auto tr = sample_probe(gen, gamma, VecX::Zero(kLiouville), X, 1, 2048);
    const VecX got = harmonic_mode(tr, 0, two_pi / w, ModeExtraction::Envelope);
    const VecX expected = 0.5 * (v + conj_swap(v)) * (1.0 - std::exp(-1.0));
    EXPECT_LT((got - expected).norm(), 1e-7 * expected.norm());
}

TEST(HarmonicMode, RejectsFractionalWindow) {
    ProbeTrace tr;
    tr.omega = 1.0;
    tr.samples_per_period = 32;
    tr.dt = two_pi / 32;
    tr.samples.assign(65, FloquetVector::zero(1));
    EXPECT_THROW(harmonic_mode(tr, 2, 1.5 * two_pi), ConfigError);
    EXPECT_THROW(harmonic_mode(tr, 2, 3.0 * two_pi), ConfigError);
    EXPECT_NO_THROW(harmonic_mode(tr, 2, 2.0 * two_pi));
}
