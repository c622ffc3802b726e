#include "fmw/operators.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace fmw;

namespace {

const double s2 = std::sqrt(2.0), s3 = std::sqrt(3.0), s6 = std::sqrt(6.0);

// 1-based accessor matching the |F,m> labelling used in the ellipticity formulas.
cplx at(const Mat8& M, int i, int j) { return M(i - 1, j - 1); }

Mat8 commutator(const Mat8& a, const Mat8& b) { return a * b - b * a; }

}  // namespace

TEST(LevelScheme, OrderingAndGFactors) {
    LevelScheme s;
    EXPECT_EQ(LevelScheme::index_of(1, -1), 0);
    EXPECT_EQ(LevelScheme::index_of(1, 1), 2);
    EXPECT_EQ(LevelScheme::index_of(2, -2), 3);
    EXPECT_EQ(LevelScheme::index_of(2, 2), 7);
    EXPECT_THROW(LevelScheme::index_of(2, 3), ConfigError);
    EXPECT_DOUBLE_EQ(s.g_f1, -0.5);
    EXPECT_DOUBLE_EQ(s.g_f2, 0.5);
    EXPECT_EQ(LevelScheme::label(5), "|2,0>");
}

TEST(AngularMomentum, SpinOneFzDiagonal) {
    const auto F = angular_momentum_matrices(1);
    EXPECT_NEAR(std::abs(F.z(0, 0) - cplx(-1.0)), 0.0, 1e-15);
    EXPECT_NEAR(std::abs(F.z(1, 1)), 0.0, 1e-15);
    EXPECT_NEAR(std::abs(F.z(2, 2) - cplx(1.0)), 0.0, 1e-15);
}

TEST(AngularMomentum, LadderElement) {
    const auto F = angular_momentum_matrices(2);
    // <2,-1|Fx|2,-2> = sqrt(F(F+1) - m(m+1))/2 with m = -2.
    EXPECT_NEAR(std::abs(F.x(1, 0) - cplx(1.0)), 0.0, 1e-15);
}

TEST(AngularMomentum, CommutationRelations) {
    for (int f : {1, 2}) {
        const auto F = angular_momentum_matrices(f);
        EXPECT_LT((F.x * F.y - F.y * F.x - I * F.z).cwiseAbs().maxCoeff(), 1e-14);
        EXPECT_LT((F.y * F.z - F.z * F.y - I * F.x).cwiseAbs().maxCoeff(), 1e-14);
        EXPECT_LT((F.x - F.x.adjoint()).cwiseAbs().maxCoeff(), 0.0 + 1e-16);
    }
    EXPECT_THROW(angular_momentum_matrices(3), ConfigError);
}

TEST(OperatorSet, LongitudinalCouplingEntries) {
    const auto ops = build_operator_set(LevelScheme{});
    EXPECT_EQ(at(ops.Sz, 1, 5), cplx(s3 / 4));
    EXPECT_EQ(at(ops.Sz, 2, 6), cplx(0.5));
    EXPECT_EQ(at(ops.Sz, 3, 7), cplx(s3 / 4));
    EXPECT_EQ(at(ops.Sz, 5, 1), cplx(s3 / 4));
    EXPECT_LT((ops.Sz - ops.Sz.adjoint()).cwiseAbs().maxCoeff(), 1e-16);
    EXPECT_EQ((ops.Sz.array() != cplx(0.0)).count(), 6);
}

TEST(OperatorSet, CircularCouplingEntries) {
    const auto ops = build_operator_set(LevelScheme{});
    const Mat8& P = ops.Ssigma_plus;
    EXPECT_EQ(at(P, 1, 4), cplx(s3 / 2));
    EXPECT_EQ(at(P, 2, 5), cplx(s6 / 4));
    EXPECT_EQ(at(P, 3, 6), cplx(s2 / 4));
    EXPECT_EQ(at(P, 6, 1), cplx(-s2 / 4));
    EXPECT_EQ(at(P, 7, 2), cplx(-s6 / 4));
    EXPECT_EQ(at(P, 8, 3), cplx(-s3 / 2));
    EXPECT_EQ((P.array() != cplx(0.0)).count(), 6);

    const Mat8& M = ops.Ssigma_minus;
    EXPECT_EQ(at(M, 1, 6), cplx(-s2 / 4));
    EXPECT_EQ(at(M, 2, 7), cplx(-s6 / 4));
    EXPECT_EQ(at(M, 3, 8), cplx(-s3 / 2));
    EXPECT_EQ(at(M, 4, 1), cplx(s3 / 2));
    EXPECT_EQ(at(M, 5, 2), cplx(s6 / 4));
    EXPECT_EQ(at(M, 6, 3), cplx(s2 / 4));
    EXPECT_EQ((M.array() != cplx(0.0)).count(), 6);
    // The two circular operators are transposes of each other.
    EXPECT_EQ(M, P.transpose());
}

TEST(OperatorSet, CouplingsOnlyConnectManifolds) {
    const auto ops = build_operator_set(LevelScheme{});
    for (const Mat8* S : {&ops.Sz, &ops.Ssigma_plus, &ops.Ssigma_minus}) {
        EXPECT_EQ(S->topLeftCorner(3, 3).cwiseAbs().maxCoeff(), 0.0);
        EXPECT_EQ(S->bottomRightCorner(5, 5).cwiseAbs().maxCoeff(), 0.0);
    }
}

TEST(OperatorSet, AlignmentCoefficients) {
    const auto ops = build_operator_set(LevelScheme{});
    EXPECT_NEAR(std::abs(at(ops.A, 1, 3) - 1.0), 0.0, 1e-14);
    EXPECT_NEAR(std::abs(at(ops.A, 4, 6) - s6), 0.0, 1e-14);
    EXPECT_NEAR(std::abs(at(ops.A, 5, 7) - 3.0), 0.0, 1e-14);
    EXPECT_NEAR(std::abs(at(ops.A, 6, 8) - s6), 0.0, 1e-14);
    EXPECT_LT(ops.A.diagonal().cwiseAbs().maxCoeff(), 1e-15);
    // Nonzero only at |dm| = 2 inside a manifold.
    for (int i = 0; i < kLevels; ++i)
        for (int j = 0; j < kLevels; ++j) {
            const auto &li = LevelScheme::levels[static_cast<std::size_t>(i)],
                       &lj = LevelScheme::levels[static_cast<std::size_t>(j)];
            if (li.F != lj.F || std::abs(li.m - lj.m) != 2) EXPECT_LT(std::abs(ops.A(i, j)), 1e-14);
        }
}

TEST(OperatorSet, AlignmentFromLadderOperators) {
    const auto ops = build_operator_set(LevelScheme{});
    const Mat8 Fp = ops.Fx + I * ops.Fy, Fm = ops.Fx - I * ops.Fy;
    EXPECT_LT((ops.A - 0.5 * (Fp * Fp + Fm * Fm)).cwiseAbs().maxCoeff(), 1e-13);
}

TEST(OperatorSet, ZeemanBlocksCarryGFactorSign) {
    const auto ops = build_operator_set(LevelScheme{});
    EXPECT_LT((ops.Zz.topLeftCorner(3, 3) + ops.Fz.topLeftCorner(3, 3)).cwiseAbs().maxCoeff(), 1e-15);
    EXPECT_LT((ops.Zz.bottomRightCorner(5, 5) - ops.Fz.bottomRightCorner(5, 5)).cwiseAbs().maxCoeff(), 1e-15);
    EXPECT_LT((commutator(ops.Fx, ops.Fy) - I * ops.Fz).cwiseAbs().maxCoeff(), 1e-13);
    EXPECT_EQ(ops.Fx.topRightCorner(3, 5).cwiseAbs().maxCoeff(), 0.0);
}

TEST(OperatorSet, HermitianMicrowaveCouplingGivesSqrtThreeRabi) {
    const auto ops = build_operator_set(LevelScheme{});
    const Mat8 K = mw_coupling(ops.Ssigma_plus);
    EXPECT_LT((K - K.adjoint()).cwiseAbs().maxCoeff(), 1e-16);
    EXPECT_NEAR(std::abs(K(0, 3)), s3 / 2, 1e-15);
    EXPECT_NEAR(std::abs(K(3, 0)), s3 / 2, 1e-15);
}

TEST(Rotation, IdentityAndZAxis) {
    EXPECT_LT((manifold_rotation({1, 0, 0}, 0.0) - Mat8::Identity()).cwiseAbs().maxCoeff(), 1e-14);
    const double th = 0.37;
    const Mat8 R = manifold_rotation({0, 0, 1}, th);
    for (int i = 0; i < kLevels; ++i) {
        const int m = LevelScheme::levels[static_cast<std::size_t>(i)].m;
        EXPECT_NEAR(std::abs(R(i, i) - std::exp(-I * (th * m))), 0.0, 1e-13);
    }
    EXPECT_THROW(manifold_rotation({0, 0, 0}, 1.0), ConfigError);
}

TEST(Rotation, YQuarterTurnPointsStretchedStateAlongX) {
    const auto ops = build_operator_set(LevelScheme{});
    Vec8 up = Vec8::Zero();
    up(LevelScheme::index_of(2, 2)) = 1.0;
    const Vec8 v = manifold_rotation({0, 1, 0}, pi / 2) * up;
    EXPECT_NEAR(std::real((v.adjoint() * ops.Fx * v)(0, 0)), 2.0, 1e-12);
}

TEST(Rotation, GroupPropertyAndUnitarity) {
    std::mt19937 rng(7);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int trial = 0; trial < 20; ++trial) {
        std::array<double, 3> n{u(rng), u(rng), u(rng)};
        const double a = 3 * u(rng), b = 3 * u(rng);
        const Mat8 Ra = manifold_rotation(n, a), Rb = manifold_rotation(n, b), Rab = manifold_rotation(n, a + b);
        EXPECT_LT((Ra * Rb - Rab).cwiseAbs().maxCoeff(), 1e-10);
        EXPECT_LT((Ra * Ra.adjoint() - Mat8::Identity()).cwiseAbs().maxCoeff(), 1e-12);
    }
}

TEST(PreparedStates, AllKindsArePhysical) {
    for (auto kind : {StateKind::StretchedMixture, StateKind::Clock, StateKind::Oriented, StateKind::Thermal})
        for (bool repump : {true, false})
            for (double theta : {0.0, 35.0 * pi / 180.0, 1.3}) {
                PreparedState s;
                s.kind = kind;
                s.repump = repump;
                s.rotation = theta;
                s.f2_fraction = 0.3;
                const auto rep = check_density_matrix(prepare_input_state(s));
                EXPECT_LT(rep.hermiticity, 1e-12);
                EXPECT_LT(rep.trace_error, 1e-12);
                EXPECT_GT(rep.min_eigenvalue, -1e-12);
            }
}

TEST(PreparedStates, ThermalIsMaximallyMixed) {
    PreparedState s;
    s.kind = StateKind::Thermal;
    EXPECT_LT((prepare_input_state(s) - Mat8::Identity() / 8.0).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(PreparedStates, StretchedMixtureAlignment) {
    // Along x: <Fx^2> = 4 and <Fy^2> = 1 for m = +-2, so Tr(rho A) = 3.
    const auto ops = build_operator_set(LevelScheme{});
    PreparedState s;
    const Mat8 rho = prepare_input_state(s);
    EXPECT_NEAR(std::real((rho * ops.A).trace()), 3.0, 1e-12);
    EXPECT_NEAR(std::real((rho * ops.Fx * ops.Fx).trace()), 4.0, 1e-12);
    EXPECT_NEAR(std::real((rho * ops.P1).trace()), 0.0, 1e-14);
}

TEST(PreparedStates, ClockStateIsAligned) {
    const auto ops = build_operator_set(LevelScheme{});
    PreparedState s;
    s.kind = StateKind::Clock;
    // x-clock state: <Fx^2> = 0, <Fy^2> = 3.
    EXPECT_NEAR(std::real((prepare_input_state(s) * ops.A).trace()), -3.0, 1e-12);
}

TEST(PreparedStates, RotatedOverlap) {
    PreparedState s;
    s.rotation = 35.0 * pi / 180.0;
    const Mat8 rho = prepare_input_state(s);
    const Vec8 up = axis_state(2, 2, Axis::X);
    const double overlap = std::real((up.adjoint() * rho * up)(0, 0)) * 2.0;
    const double c = std::cos(17.5 * pi / 180.0), sn = std::sin(17.5 * pi / 180.0);
    // Only the same-sign stretched state contributes cos^8; the opposite one adds sin^8.
    EXPECT_NEAR(overlap, std::pow(c, 8) + std::pow(sn, 8), 1e-12);
}

TEST(PreparedStates, RepumpOffMixesThermalF1) {
    PreparedState s;
    s.repump = false;
    s.f2_fraction = 0.25;
    const Mat8 rho = prepare_input_state(s);
    for (int k = 0; k < 3; ++k) EXPECT_NEAR(std::real(rho(k, k)), 0.75 / 3.0, 1e-14);
    EXPECT_LT(rho.topLeftCorner(3, 3).imag().cwiseAbs().maxCoeff(), 1e-15);
}

TEST(PreparedStates, CustomValidation) {
    PreparedState s;
    s.kind = StateKind::Custom;
    EXPECT_THROW(prepare_input_state(s), ConfigError);
    Mat8 bad = Mat8::Identity() / 4.0;
    s.custom = bad;
    EXPECT_THROW(prepare_input_state(s), ConfigError);
    Mat8 good = Mat8::Zero();
    good(0, 0) = 1.0;
    s.custom = good;
    EXPECT_NO_THROW(prepare_input_state(s));
    EXPECT_THROW(state_kind_from_string("dressed"), ConfigError);
    EXPECT_EQ(state_kind_from_string("clock"), StateKind::Clock);
}
