// Classical channel estimators (pseudoinverse-based and linear Bayesian),
// the sample correlation they need, the denoiser input transform and the
// normalized-error metric.

#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "irsce/complex_matrix.hpp"
#include "irsce/pilot_protocol.hpp"

namespace irsce {

struct CorrelationEstimate {
    CMatrix R;  // (N+1) x (N+1), Hermitian PSD
    std::size_t sample_count = 0;
};

enum class Slice { kFull, kDirect, kCascaded };

inline const char* slice_name(Slice s) {
    switch (s) {
        case Slice::kDirect: return "direct";
        case Slice::kCascaded: return "cascaded";
        default: return "full";
    }
}

struct EstimateReport {
    std::string estimator_id;
    CMatrix H_hat;
    Slice slice = Slice::kFull;
};

// H_hat = X P^+ with P^+ = P^H (P P^H)^{-1}. Exact on noise-free
// observations for any full-row-rank schedule.
inline CMatrix ls_estimate(const Observation& obs, const ReflectionSchedule& sched) {
    if (obs.X.cols() != sched.P.cols())
        throw std::invalid_argument("ls_estimate: observation / schedule sub-frame mismatch");
    return matmul(obs.X, right_pseudoinverse(sched.P));
}

// Identical to ls_estimate by definition; kept as the named transform that
// produces the denoiser input (channel plus additive correlated noise).
inline CMatrix denoise_observation(const Observation& obs, const ReflectionSchedule& sched) {
    return ls_estimate(obs, sched);
}

// Sample average of H^H H, Hermitian-symmetrized.
inline CorrelationEstimate estimate_correlation(const std::vector<CMatrix>& h_draws) {
    if (h_draws.empty())
        throw std::invalid_argument("estimate_correlation: need at least one sample");
    const std::size_t n = h_draws.front().cols();
    CMatrix r(n, n);
    for (const auto& h : h_draws) {
        if (h.cols() != n || h.rows() != h_draws.front().rows())
            throw std::invalid_argument("estimate_correlation: inconsistent sample shapes");
        const CMatrix hh = matmul(conj_transpose(h), h);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) r(i, j) += hh(i, j);
    }
    const double inv = 1.0 / double(h_draws.size());
    for (auto& z : r.data()) z *= inv;
    // Symmetrize away rounding asymmetry.
    CMatrix sym(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            sym(i, j) = 0.5 * (r(i, j) + std::conj(r(j, i)));
    return {std::move(sym), h_draws.size()};
}

// H_hat = X (P^H R P + M sigma_z^2 I)^{-1} P^H R, computed with a Hermitian
// solve rather than an explicit inverse.
inline CMatrix lmmse_estimate(const Observation& obs, const ReflectionSchedule& sched,
                              const CorrelationEstimate& corr, std::size_t bs_antennas) {
    const std::size_t c_total = sched.P.cols();
    if (obs.X.cols() != c_total)
        throw std::invalid_argument("lmmse_estimate: observation / schedule sub-frame mismatch");
    if (corr.R.rows() != sched.P.rows())
        throw std::invalid_argument("lmmse_estimate: correlation size mismatch");

    const CMatrix ph = conj_transpose(sched.P);
    const CMatrix ph_r = matmul(ph, corr.R);            // C x (N+1)
    CMatrix a = matmul(ph_r, sched.P);                  // C x C
    const double ridge = double(bs_antennas) * obs.noise_var_z;
    for (std::size_t i = 0; i < c_total; ++i) a(i, i) += ridge;
    // a is Hermitian by construction up to rounding; symmetrize before the solve.
    for (std::size_t i = 0; i < c_total; ++i)
        for (std::size_t j = i; j < c_total; ++j) {
            const cxd v = 0.5 * (a(i, j) + std::conj(a(j, i)));
            a(i, j) = v;
            a(j, i) = std::conj(v);
        }
    const CMatrix w = hermitian_solve(a, ph_r);         // C x (N+1)
    return matmul(obs.X, w);
}

struct NmseResult {
    double db = 0.0;
    bool floored = false;  // perfect recovery clipped to the floor value
};

inline constexpr double kNmseFloorDb = -300.0;

namespace detail {

inline double slice_err_sq(const CMatrix& a, const CMatrix& b, Slice slice) {
    const std::size_t c0 = (slice == Slice::kCascaded) ? 1 : 0;
    const std::size_t c1 = (slice == Slice::kDirect) ? 1 : a.cols();
    double s = 0.0;
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = c0; j < c1; ++j) s += std::norm(a(i, j) - b(i, j));
    return s;
}

inline double slice_norm_sq(const CMatrix& a, Slice slice) {
    const std::size_t c0 = (slice == Slice::kCascaded) ? 1 : 0;
    const std::size_t c1 = (slice == Slice::kDirect) ? 1 : a.cols();
    double s = 0.0;
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = c0; j < c1; ++j) s += std::norm(a(i, j));
    return s;
}

}  // namespace detail

// 10 log10( sum ||est - true||_F^2 / sum ||true||_F^2 ) over the selected
// column slice. Perfect estimates return the floor value with a flag instead
// of -inf.
inline NmseResult nmse(const std::vector<CMatrix>& truth, const std::vector<CMatrix>& est, Slice slice) {
    if (truth.empty() || truth.size() != est.size())
        throw std::invalid_argument("nmse: need matching nonempty lists");
    double err = 0.0, sig = 0.0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        if (truth[i].rows() != est[i].rows() || truth[i].cols() != est[i].cols())
            throw std::invalid_argument("nmse: shape mismatch at sample " + std::to_string(i));
        err += detail::slice_err_sq(est[i], truth[i], slice);
        sig += detail::slice_norm_sq(truth[i], slice);
    }
    if (!(sig > 0.0))
        throw std::invalid_argument("nmse: all-zero truth");
    const double ratio_db = 10.0 * std::log10(err / sig);
    if (!(ratio_db > kNmseFloorDb)) return {kNmseFloorDb, true};
    return {ratio_db, false};
}

inline NmseResult nmse_from_sums(double err_sq, double sig_sq) {
    if (!(sig_sq > 0.0)) throw std::invalid_argument("nmse: zero signal energy");
    const double ratio_db = 10.0 * std::log10(err_sq / sig_sq);
    if (!(ratio_db > kNmseFloorDb)) return {kNmseFloorDb, true};
    return {ratio_db, false};
}

}  // namespace irsce
