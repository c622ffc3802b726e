// operators.hpp: the 8-level 87Rb ground-state basis, spin and microwave
// coupling matrices, manifold rotations and prepared input states.
//
// Basis ordering (0-based index): |1,-1>,|1,0>,|1,+1>,|2,-2>,|2,-1>,|2,0>,|2,+1>,|2,+2>.
#pragma once

#include "fmw/types.hpp"

#include <array>
#include <cmath>
#include <optional>
#include <string>
#include <string_view>

namespace fmw {

enum class Manifold { F1 = 1, F2 = 2 };

inline int manifold_offset(Manifold f) { return f == Manifold::F1 ? 0 : 3; }
inline int manifold_size(Manifold f) { return f == Manifold::F1 ? 3 : 5; }

struct Level {
    int F;
    int m;
};

struct LevelScheme {
    double g_f1 = -0.5;
    double g_f2 = +0.5;

    static constexpr std::array<Level, kLevels> levels{{
        {1, -1}, {1, 0}, {1, 1}, {2, -2}, {2, -1}, {2, 0}, {2, 1}, {2, 2}}};

    static int index_of(int F, int m) {
        if (F == 1 && m >= -1 && m <= 1) return m + 1;
        if (F == 2 && m >= -2 && m <= 2) return 3 + m + 2;
        throw ConfigError("no level |F=" + std::to_string(F) + ",m=" + std::to_string(m) + ">");
    }

    static std::string label(int idx) {
        const auto& l = levels.at(static_cast<std::size_t>(idx));
        return "|" + std::to_string(l.F) + "," + (l.m > 0 ? "+" : "") + std::to_string(l.m) + ">";
    }

    double g(Manifold f) const { return f == Manifold::F1 ? g_f1 : g_f2; }

    void validate() const {
        if (g_f1 == 0.0 || g_f2 == 0.0 || !std::isfinite(g_f1) || !std::isfinite(g_f2))
            throw ConfigError("LevelScheme: g-factors must be finite and nonzero");
    }
};

struct SpinMatrices {
    MatX x, y, z;
};

/// Spin-F angular momentum matrices in the |F,m> basis, m ascending.
inline SpinMatrices angular_momentum_matrices(int F) {
    if (F != 1 && F != 2)
        throw ConfigError("angular_momentum_matrices: unsupported F=" + std::to_string(F) +
                          " (only F=1 and F=2 exist in the ground state)");
    const int d = 2 * F + 1;
    MatX raise = MatX::Zero(d, d);
    MatX z = MatX::Zero(d, d);
    for (int k = 0; k < d; ++k) {
        const int m = k - F;
        z(k, k) = static_cast<double>(m);
        if (k + 1 < d) raise(k + 1, k) = std::sqrt(static_cast<double>(F * (F + 1) - m * (m + 1)));
    }
    MatX lower = raise.adjoint();
    return {(raise + lower) / 2.0, (raise - lower) / (2.0 * I), z};
}

struct OperatorSet {
    // Plain spin operators, block-diagonal per manifold (units of hbar).
    Mat8 Fx, Fy, Fz;
    // Zeeman operators: blocks weighted by g_F / |g_{F=2}|.
    Mat8 Zx, Zy, Zz;
    // Microwave coupling matrices exactly as tabulated for the rotating frame.
    Mat8 Sz, Ssigma_plus, Ssigma_minus;
    Mat8 P1, P2;
    // Alignment operator Fx^2 - Fy^2.
    Mat8 A;

    const Mat8& projector(Manifold f) const { return f == Manifold::F1 ? P1 : P2; }
};

namespace detail {

inline void embed(Mat8& dst, const MatX& block, int offset) {
    dst.block(offset, offset, block.rows(), block.cols()) = block;
}

}  // namespace detail

inline OperatorSet build_operator_set(const LevelScheme& scheme) {
    scheme.validate();
    OperatorSet ops;
    const auto s1 = angular_momentum_matrices(1);
    const auto s2 = angular_momentum_matrices(2);
    for (Mat8* m : {&ops.Fx, &ops.Fy, &ops.Fz, &ops.Zx, &ops.Zy, &ops.Zz, &ops.Sz, &ops.Ssigma_plus,
                    &ops.Ssigma_minus, &ops.P1, &ops.P2, &ops.A})
        m->setZero();

    detail::embed(ops.Fx, s1.x, 0);
    detail::embed(ops.Fy, s1.y, 0);
    detail::embed(ops.Fz, s1.z, 0);
    detail::embed(ops.Fx, s2.x, 3);
    detail::embed(ops.Fy, s2.y, 3);
    detail::embed(ops.Fz, s2.z, 3);

    const double w1 = scheme.g_f1 / std::abs(scheme.g_f2);
    const double w2 = scheme.g_f2 / std::abs(scheme.g_f2);
    detail::embed(ops.Zx, w1 * s1.x, 0);
    detail::embed(ops.Zy, w1 * s1.y, 0);
    detail::embed(ops.Zz, w1 * s1.z, 0);
    detail::embed(ops.Zx, w2 * s2.x, 3);
    detail::embed(ops.Zy, w2 * s2.y, 3);
    detail::embed(ops.Zz, w2 * s2.z, 3);

    const double r3_4 = std::sqrt(3.0) / 4.0;
    const double r3_2 = std::sqrt(3.0) / 2.0;
    const double r6_4 = std::sqrt(6.0) / 4.0;
    const double r2_4 = std::sqrt(2.0) / 4.0;

    auto& sz = ops.Sz;
    sz(0, 4) = sz(4, 0) = r3_4;
    sz(1, 5) = sz(5, 1) = 0.5;
    sz(2, 6) = sz(6, 2) = r3_4;

    auto& sp = ops.Ssigma_plus;
    sp(0, 3) = r3_2;
    sp(1, 4) = r6_4;
    sp(2, 5) = r2_4;
    sp(5, 0) = -r2_4;
    sp(6, 1) = -r6_4;
    sp(7, 2) = -r3_2;

    auto& sm = ops.Ssigma_minus;
    sm(0, 5) = -r2_4;
    sm(1, 6) = -r6_4;
    sm(2, 7) = -r3_2;
    sm(3, 0) = r3_2;
    sm(4, 1) = r6_4;
    sm(5, 2) = r2_4;

    for (int k = 0; k < 3; ++k) ops.P1(k, k) = 1.0;
    for (int k = 3; k < 8; ++k) ops.P2(k, k) = 1.0;

    ops.A = ops.Fx * ops.Fx - ops.Fy * ops.Fy;
    return ops;
}

/// Hermitian coupling carried by one microwave polarization: the F=1-row,
/// F=2-column block of the tabulated matrix plus its Hermitian conjugate.
inline Mat8 mw_coupling(const Mat8& S) {
    Mat8 upper = Mat8::Zero();
    upper.block(0, 3, 3, 5) = S.block(0, 3, 3, 5);
    return upper + upper.adjoint();
}

/// exp(-i * angle * (axis . F)), block-diagonal per manifold.
inline Mat8 manifold_rotation(const std::array<double, 3>& axis, double angle) {
    const double norm = std::sqrt(axis[0] * axis[0] + axis[1] * axis[1] + axis[2] * axis[2]);
    if (!(norm > 0.0) || !std::isfinite(norm))
        throw ConfigError("manifold_rotation: axis must be a nonzero finite vector");
    if (!std::isfinite(angle)) throw ConfigError("manifold_rotation: angle must be finite");
    const double nx = axis[0] / norm, ny = axis[1] / norm, nz = axis[2] / norm;

    Mat8 out = Mat8::Zero();
    for (int F : {1, 2}) {
        const auto s = angular_momentum_matrices(F);
        const MatX gen = nx * s.x + ny * s.y + nz * s.z;
        Eigen::SelfAdjointEigenSolver<MatX> es(gen);
        const VecX phases =
            (-I * angle * es.eigenvalues().cast<cplx>()).array().exp().matrix();
        const MatX U = es.eigenvectors() * phases.asDiagonal() * es.eigenvectors().adjoint();
        detail::embed(out, U, F == 1 ? 0 : 3);
    }
    return out;
}

enum class Axis { X, Y, Z };

inline std::array<double, 3> axis_vector(Axis a) {
    switch (a) {
        case Axis::X: return {1.0, 0.0, 0.0};
        case Axis::Y: return {0.0, 1.0, 0.0};
        case Axis::Z: return {0.0, 0.0, 1.0};
    }
    return {0.0, 0.0, 1.0};
}

/// |F,m> quantized along `axis` (rotated from the z basis).
inline Vec8 axis_state(int F, int m, Axis axis) {
    Vec8 v = Vec8::Zero();
    v(LevelScheme::index_of(F, m)) = 1.0;
    switch (axis) {
        case Axis::Z: return v;
        case Axis::X: return manifold_rotation({0.0, 1.0, 0.0}, pi / 2.0) * v;
        case Axis::Y: return manifold_rotation({1.0, 0.0, 0.0}, -pi / 2.0) * v;
    }
    return v;
}

enum class StateKind { StretchedMixture, Clock, Oriented, Thermal, Custom };

inline std::string_view to_string(StateKind k) {
    switch (k) {
        case StateKind::StretchedMixture: return "stretched-mixture";
        case StateKind::Clock: return "clock";
        case StateKind::Oriented: return "oriented";
        case StateKind::Thermal: return "thermal";
        case StateKind::Custom: return "custom";
    }
    return "?";
}

inline StateKind state_kind_from_string(std::string_view s) {
    if (s == "stretched-mixture") return StateKind::StretchedMixture;
    if (s == "clock") return StateKind::Clock;
    if (s == "oriented") return StateKind::Oriented;
    if (s == "thermal") return StateKind::Thermal;
    if (s == "custom") return StateKind::Custom;
    throw ConfigError("unknown state kind '" + std::string(s) + "'");
}

struct PreparedState {
    StateKind kind = StateKind::StretchedMixture;
    Axis axis = Axis::X;
    bool repump = true;
    /// F=2 population fraction when the repump is off.
    double f2_fraction = 0.5;
    /// Effective propagation rotation about z, radians.
    double rotation = 0.0;
    /// Used only for StateKind::Custom.
    std::optional<Mat8> custom;
};

struct PhysicalityReport {
    double hermiticity = 0.0;
    double trace_error = 0.0;
    double min_eigenvalue = 0.0;
};

inline PhysicalityReport check_density_matrix(const Mat8& rho) {
    PhysicalityReport r;
    r.hermiticity = (rho - rho.adjoint()).cwiseAbs().maxCoeff();
    r.trace_error = std::abs(rho.trace() - 1.0);
    const Mat8 herm = 0.5 * (rho + rho.adjoint());
    Eigen::SelfAdjointEigenSolver<Mat8> es(herm, Eigen::EigenvaluesOnly);
    r.min_eigenvalue = es.eigenvalues().minCoeff();
    return r;
}

/// Target-state projector onto the prepared state(s) for `kind` along `axis`.
inline Mat8 target_projector(StateKind kind, Axis axis = Axis::X) {
    auto proj = [&](int m) {
        const Vec8 v = axis_state(2, m, axis);
        return Mat8(v * v.adjoint());
    };
    switch (kind) {
        case StateKind::StretchedMixture: return proj(2) + proj(-2);
        case StateKind::Clock: return proj(0);
        case StateKind::Oriented: return proj(2);
        case StateKind::Thermal: return Mat8::Identity();
        case StateKind::Custom: break;
    }
    throw ConfigError("target_projector: no target projector for kind 'custom'");
}

inline Mat8 prepare_input_state(const PreparedState& spec) {
    if (!(spec.f2_fraction >= 0.0 && spec.f2_fraction <= 1.0))
        throw ConfigError("prepare_input_state: f2_fraction must lie in [0,1]");
    if (!std::isfinite(spec.rotation))
        throw ConfigError("prepare_input_state: rotation angle must be finite");

    Mat8 rho = Mat8::Zero();
    auto pure = [&](int m) {
        const Vec8 v = axis_state(2, m, spec.axis);
        return Mat8(v * v.adjoint());
    };

    switch (spec.kind) {
        case StateKind::Thermal:
            rho = Mat8::Identity() / 8.0;
            break;
        case StateKind::Custom: {
            if (!spec.custom) throw ConfigError("prepare_input_state: custom kind needs a matrix");
            const auto rep = check_density_matrix(*spec.custom);
            if (rep.hermiticity > 1e-10) throw ConfigError("prepare_input_state: custom matrix is not Hermitian");
            if (rep.trace_error > 1e-10) throw ConfigError("prepare_input_state: custom matrix trace != 1");
            if (rep.min_eigenvalue < -1e-10) throw ConfigError("prepare_input_state: custom matrix is not PSD");
            rho = *spec.custom;
            break;
        }
        case StateKind::StretchedMixture:
            rho = 0.5 * (pure(2) + pure(-2));
            break;
        case StateKind::Clock:
            rho = pure(0);
            break;
        case StateKind::Oriented:
            rho = pure(2);
            break;
    }

    if (!spec.repump && spec.kind != StateKind::Thermal && spec.kind != StateKind::Custom) {
        Mat8 p1 = Mat8::Zero();
        for (int k = 0; k < 3; ++k) p1(k, k) = 1.0;
        rho = spec.f2_fraction * rho + (1.0 - spec.f2_fraction) * p1 / 3.0;
    }

    if (spec.rotation != 0.0) {
        const Mat8 R = manifold_rotation({0.0, 0.0, 1.0}, spec.rotation);
        rho = R * rho * R.adjoint();
    }
    return rho;
}

}  // namespace fmw
