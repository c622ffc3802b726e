// types.hpp: shared numeric aliases and physical constants.
#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <complex>
#include <numbers>
#include <stdexcept>
#include <string>

namespace fmw {

using cplx = std::complex<double>;

inline constexpr double pi = std::numbers::pi;
inline constexpr double two_pi = 2.0 * std::numbers::pi;
inline constexpr cplx I{0.0, 1.0};

/// Number of ground-state levels (F=1 triplet + F=2 quintet).
inline constexpr int kLevels = 8;
/// Dimension of Liouville space for the 8-level density matrix.
inline constexpr int kLiouville = kLevels * kLevels;

using Mat8 = Eigen::Matrix<cplx, kLevels, kLevels>;
using Vec8 = Eigen::Matrix<cplx, kLevels, 1>;
// 64x64 blocks are kept dynamic to stay off the stack.
using MatX = Eigen::MatrixXcd;
using VecX = Eigen::VectorXcd;
using SparseMat = Eigen::SparseMatrix<cplx, Eigen::RowMajor>;

/// Bohr magneton over Planck constant, Hz/T (CODATA 2018).
inline constexpr double kBohrOverPlanckHzPerTesla = 13.996245e9;

inline double hz_to_rad_s(double hz) { return two_pi * hz; }
inline double rad_s_to_hz(double w) { return w / two_pi; }

/// Thrown for configurations that violate a documented precondition.
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Thrown when a numerical kernel cannot deliver its accuracy contract.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace fmw
