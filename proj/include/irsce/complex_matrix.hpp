// Dense complex matrix arithmetic: products, conjugate transpose, right
// pseudoinverse and Hermitian positive definite solves. Everything the
// pilot protocol and the linear estimators need, nothing more. Matrices in
// this project top out around 8x33, so dense row-major storage is the right
// tool.

#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <stdexcept>
#include <string>
#include <vector>

namespace irsce {

using cxd = std::complex<double>;

class CMatrix {
  public:
    CMatrix() : rows_(0), cols_(0) {}

    CMatrix(std::size_t rows, std::size_t cols)
        : rows_(rows), cols_(cols), v_(rows * cols, cxd(0.0, 0.0)) {
        if (rows == 0 || cols == 0)
            throw std::invalid_argument("CMatrix: dimensions must be >= 1");
    }

    static CMatrix identity(std::size_t n) {
        CMatrix m(n, n);
        for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }

    cxd& operator()(std::size_t r, std::size_t c) { return v_[r * cols_ + c]; }
    const cxd& operator()(std::size_t r, std::size_t c) const { return v_[r * cols_ + c]; }

    const std::vector<cxd>& data() const { return v_; }
    std::vector<cxd>& data() { return v_; }

    CMatrix col(std::size_t c) const {
        CMatrix out(rows_, 1);
        for (std::size_t r = 0; r < rows_; ++r) out(r, 0) = (*this)(r, c);
        return out;
    }

    void set_col(std::size_t c, const CMatrix& v) {
        if (v.rows() != rows_ || v.cols() != 1)
            throw std::invalid_argument("CMatrix::set_col: shape mismatch");
        for (std::size_t r = 0; r < rows_; ++r) (*this)(r, c) = v(r, 0);
    }

    bool finite() const {
        for (const auto& z : v_)
            if (!std::isfinite(z.real()) || !std::isfinite(z.imag())) return false;
        return true;
    }

    friend bool operator==(const CMatrix& a, const CMatrix& b) {
        return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.v_ == b.v_;
    }

  private:
    std::size_t rows_, cols_;
    std::vector<cxd> v_;
};

inline CMatrix operator+(const CMatrix& a, const CMatrix& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw std::invalid_argument("CMatrix: addition shape mismatch");
    CMatrix out(a.rows(), a.cols());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) out(i, j) = a(i, j) + b(i, j);
    return out;
}

inline CMatrix operator-(const CMatrix& a, const CMatrix& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw std::invalid_argument("CMatrix: subtraction shape mismatch");
    CMatrix out(a.rows(), a.cols());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) out(i, j) = a(i, j) - b(i, j);
    return out;
}

inline CMatrix operator*(cxd s, const CMatrix& a) {
    CMatrix out(a.rows(), a.cols());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) out(i, j) = s * a(i, j);
    return out;
}

inline CMatrix matmul(const CMatrix& a, const CMatrix& b) {
    if (a.cols() != b.rows())
        throw std::invalid_argument("matmul: inner dimensions mismatch (" +
                                    std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + ")");
    CMatrix out(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const cxd aik = a(i, k);
            if (aik == cxd(0.0, 0.0)) continue;
            for (std::size_t j = 0; j < b.cols(); ++j) out(i, j) += aik * b(k, j);
        }
    }
    return out;
}

inline CMatrix conj_transpose(const CMatrix& a) {
    CMatrix out(a.cols(), a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) out(j, i) = std::conj(a(i, j));
    return out;
}

inline double fro_norm_sq(const CMatrix& a) {
    double s = 0.0;
    for (const auto& z : a.data()) s += std::norm(z);
    return s;
}

inline double max_abs(const CMatrix& a) {
    double s = 0.0;
    for (const auto& z : a.data()) s = std::max(s, std::abs(z));
    return s;
}

namespace detail {

// In-place Cholesky factorization A = L L^H of a Hermitian positive definite
// matrix; returns the lower factor. Throws if a pivot is not strictly
// positive.
inline CMatrix cholesky(const CMatrix& a) {
    const std::size_t n = a.rows();
    if (a.cols() != n) throw std::invalid_argument("cholesky: matrix must be square");
    CMatrix l(n, n);
    for (std::size_t j = 0; j < n; ++j) {
        double diag = a(j, j).real();
        for (std::size_t k = 0; k < j; ++k) diag -= std::norm(l(j, k));
        if (!(diag > 0.0) || !std::isfinite(diag))
            throw std::runtime_error("cholesky: matrix is not positive definite");
        l(j, j) = std::sqrt(diag);
        for (std::size_t i = j + 1; i < n; ++i) {
            cxd s = a(i, j);
            for (std::size_t k = 0; k < j; ++k) s -= l(i, k) * std::conj(l(j, k));
            l(i, j) = s / l(j, j).real();
        }
    }
    return l;
}

}  // namespace detail

// Solves a x = b for Hermitian positive definite a via Cholesky
// factorization. Never forms an explicit inverse.
inline CMatrix hermitian_solve(const CMatrix& a, const CMatrix& b) {
    const std::size_t n = a.rows();
    if (a.cols() != n) throw std::invalid_argument("hermitian_solve: matrix must be square");
    if (b.rows() != n) throw std::invalid_argument("hermitian_solve: rhs row count mismatch");

    // Hermitian-within-tolerance precondition.
    double scale = 0.0, asym = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            scale = std::max(scale, std::abs(a(i, j)));
            asym = std::max(asym, std::abs(a(i, j) - std::conj(a(j, i))));
        }
    if (scale > 0.0 && asym > 1e-8 * scale)
        throw std::invalid_argument("hermitian_solve: matrix is not Hermitian");

    const CMatrix l = detail::cholesky(a);

    // Forward substitution L y = b, then backward L^H x = y.
    CMatrix x = b;
    for (std::size_t c = 0; c < b.cols(); ++c) {
        for (std::size_t i = 0; i < n; ++i) {
            cxd s = x(i, c);
            for (std::size_t k = 0; k < i; ++k) s -= l(i, k) * x(k, c);
            x(i, c) = s / l(i, i).real();
        }
        for (std::size_t ii = n; ii-- > 0;) {
            cxd s = x(ii, c);
            for (std::size_t k = ii + 1; k < n; ++k) s -= std::conj(l(k, ii)) * x(k, c);
            x(ii, c) = s / l(ii, ii).real();
        }
    }
    return x;
}

// Reciprocal condition estimate for a Hermitian positive definite matrix from
// its Cholesky factor: (min_i L_ii / max_i L_ii)^2. Cheap and adequate for
// gating degenerate training matrices.
inline double rcond_estimate(const CMatrix& a) {
    CMatrix l;
    try {
        l = detail::cholesky(a);
    } catch (const std::runtime_error&) {
        return 0.0;
    }
    double lo = l(0, 0).real(), hi = l(0, 0).real();
    for (std::size_t i = 1; i < a.rows(); ++i) {
        lo = std::min(lo, l(i, i).real());
        hi = std::max(hi, l(i, i).real());
    }
    if (!(hi > 0.0)) return 0.0;
    const double r = lo / hi;
    return r * r;
}

inline constexpr double kPinvRcondThreshold = 1e-12;

// Right pseudoinverse p^H (p p^H)^{-1} of a full-row-rank matrix with
// r <= c. p * right_pseudoinverse(p) = I_r.
inline CMatrix right_pseudoinverse(const CMatrix& p) {
    if (p.rows() > p.cols())
        throw std::invalid_argument("right_pseudoinverse: requires rows <= cols");
    const CMatrix gram = matmul(p, conj_transpose(p));
    if (rcond_estimate(gram) < kPinvRcondThreshold)
        throw std::runtime_error("right_pseudoinverse: matrix is rank deficient (condition estimate too large)");
    // p^H (p p^H)^{-1} = (solve(p p^H, p))^H since the Gram matrix is Hermitian.
    return conj_transpose(hermitian_solve(gram, p));
}

}  // namespace irsce
