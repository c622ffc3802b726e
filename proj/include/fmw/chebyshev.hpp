// chebyshev.hpp: Chebyshev expansion of exp(A t) and its affine companion
// for generators A = -iK - gamma with K Hermitian and known spectral bounds.
#pragma once

#include "fmw/types.hpp"

#include <unsupported/Eigen/FFT>

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

namespace fmw {

/// Chebyshev coefficients a_k of f on [-1,1] (interpolation at 2M Lobatto
/// nodes via FFT); the degree is doubled until the tail is below `tol`.
template <class F>
std::vector<cplx> chebyshev_coefficients(F&& f, int min_degree, double tol = 1e-15) {
    int M = 16;
    while (M < min_degree) M *= 2;
    Eigen::FFT<double> fft;
    for (int attempt = 0; attempt < 8; ++attempt, M *= 2) {
        std::vector<cplx> samples(static_cast<std::size_t>(2 * M));
        for (int j = 0; j <= M; ++j) samples[static_cast<std::size_t>(j)] = f(std::cos(pi * j / M));
        for (int j = 1; j < M; ++j) samples[static_cast<std::size_t>(2 * M - j)] = samples[static_cast<std::size_t>(j)];
        std::vector<cplx> spec;
        fft.fwd(spec, samples);
        std::vector<cplx> a(static_cast<std::size_t>(M + 1));
        for (int k = 0; k <= M; ++k) a[static_cast<std::size_t>(k)] = spec[static_cast<std::size_t>(k)] / static_cast<double>(M);
        a.front() *= 0.5;
        a.back() *= 0.5;

        double total = 0.0;
        for (const auto& c : a) total += std::abs(c);
        double tail = 0.0;
        for (int k = M - M / 8; k <= M; ++k) tail = std::max(tail, std::abs(a[static_cast<std::size_t>(k)]));
        if (tail <= tol * std::max(total, 1e-300)) {
            int last = M;
            while (last > 0 && std::abs(a[static_cast<std::size_t>(last)]) <= 0.1 * tol * total) --last;
            a.resize(static_cast<std::size_t>(last + 1));
            return a;
        }
    }
    throw NumericalError("chebyshev_coefficients: expansion did not converge (degree " +
                         std::to_string(M) + ")");
}

/// (1 - exp(-w t)) / w, continuous at w = 0.
inline cplx affine_kernel(cplx w, double t) {
    const cplx z = w * t;
    if (std::abs(z) < 1e-4) return t * (1.0 - z / 2.0 + z * z / 6.0 - z * z * z / 24.0);
    return (1.0 - std::exp(-z)) / w;
}

/// y = exp(A t) v + (int_0^t exp(A s) ds) b for A = C - gamma I, where C is
/// anti-Hermitian with the spectrum of K = iC inside [k_min, k_max].
class ChebyshevPropagator {
public:
    using Apply = std::function<void(const VecX&, VecX&)>;

    ChebyshevPropagator(Apply apply_c, double k_min, double k_max, double gamma, double t, bool with_affine)
        : apply_c_(std::move(apply_c)), gamma_(gamma), t_(t) {
        if (!(k_max >= k_min)) throw NumericalError("ChebyshevPropagator: invalid spectral bounds");
        centre_ = 0.5 * (k_max + k_min);
        half_width_ = std::max(0.5 * (k_max - k_min) * 1.01, 1e-12 + 1e-9 * std::abs(centre_));
        const double z = half_width_ * std::abs(t_);
        const int degree = static_cast<int>(z + 10.0 * std::cbrt(z) + 24.0);
        const double c = centre_, h = half_width_;
        exp_coeffs_ = chebyshev_coefficients(
            [&](double x) { return std::exp((-gamma - I * (c + h * x)) * t); }, degree);
        if (with_affine)
            affine_coeffs_ = chebyshev_coefficients(
                [&](double x) {
                    const cplx w = gamma + I * (c + h * x);
                    return affine_kernel(w, t);
                },
                degree);
    }

    int degree() const { return static_cast<int>(std::max(exp_coeffs_.size(), affine_coeffs_.size())); }
    double centre() const { return centre_; }
    double half_width() const { return half_width_; }

    VecX apply(const VecX& v) const { return evaluate(v, nullptr); }
    VecX apply(const VecX& v, const VecX& b) const { return evaluate(v, &b); }

private:
    // x -> (K - c) x / h with K x = i C x.
    void scaled(const VecX& x, VecX& out, VecX& scratch) const {
        apply_c_(x, scratch);
        out = (I * scratch - centre_ * x) / half_width_;
    }

    VecX evaluate(const VecX& v, const VecX* b) const {
        const Eigen::Index n = v.size();
        VecX result = VecX::Zero(n);
        VecX scratch(n);
        auto run = [&](const std::vector<cplx>& coeffs, const VecX& start) {
            if (coeffs.empty()) return;
            VecX prev = start;
            result += coeffs[0] * prev;
            if (coeffs.size() == 1) return;
            VecX cur(n);
            scaled(prev, cur, scratch);
            result += coeffs[1] * cur;
            VecX next(n);
            for (std::size_t k = 2; k < coeffs.size(); ++k) {
                scaled(cur, next, scratch);
                next = 2.0 * next - prev;
                result += coeffs[k] * next;
                prev.swap(cur);
                cur.swap(next);
            }
        };
        run(exp_coeffs_, v);
        if (b != nullptr && b->squaredNorm() > 0.0) {
            if (affine_coeffs_.empty())
                throw NumericalError("ChebyshevPropagator: built without the affine expansion");
            run(affine_coeffs_, *b);
        }
        return result;
    }

    Apply apply_c_;
    double gamma_;
    double t_;
    double centre_ = 0.0;
    double half_width_ = 1.0;
    std::vector<cplx> exp_coeffs_;
    std::vector<cplx> affine_coeffs_;
};

}  // namespace fmw
