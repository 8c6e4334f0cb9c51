// Uplink training phase: reflection schedules, orthogonal pilot books,
// per-sub-frame transmission and despreading into per-user observations.

#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

#include "irsce/channel_model.hpp"
#include "irsce/complex_matrix.hpp"
#include "irsce/rng.hpp"

namespace irsce {

enum class ScheduleKind { kDft, kBinary };

// Training matrix P of shape (N+1) x C. Column c is the phase vector applied
// during sub-frame c: entry 0 multiplies the direct link and is 1 whenever
// the direct path is active; entries 1..N are the surface element
// coefficients.
struct ReflectionSchedule {
    CMatrix P;
    ScheduleKind kind = ScheduleKind::kDft;

    std::size_t subframes() const { return P.cols(); }
    std::size_t elements() const { return P.rows() - 1; }

    CMatrix phase_vector(std::size_t c) const { return P.col(c); }

    // Surface coefficients r_c (without the leading direct-link entry).
    CMatrix element_phases(std::size_t c) const {
        CMatrix r(P.rows() - 1, 1);
        for (std::size_t n = 1; n < P.rows(); ++n) r(n - 1, 0) = P(n, c);
        return r;
    }
};

// K mutually orthogonal pilot columns, u_k^H u_k = power * length.
struct PilotBook {
    CMatrix U;  // L x K
    double power = 1.0;

    std::size_t length() const { return U.rows(); }
    std::size_t users() const { return U.cols(); }
    CMatrix pilot(std::size_t k) const { return U.col(k); }
};

// Stacked despread vectors for one user, X = [x_1, ..., x_C], M x C.
struct Observation {
    CMatrix X;
    double noise_var_z = 0.0;  // per-entry variance after despreading
};

// P[n][c] = W_C^(n c), W_C = exp(j 2 pi / C). Satisfies P P^H = C I.
inline ReflectionSchedule build_dft_schedule(std::size_t n_elements, std::size_t subframes) {
    if (subframes < n_elements + 1)
        throw std::invalid_argument("build_dft_schedule: need subframes >= elements + 1");
    CMatrix p(n_elements + 1, subframes);
    for (std::size_t n = 0; n <= n_elements; ++n)
        for (std::size_t c = 0; c < subframes; ++c) {
            const double phase = 2.0 * M_PI * double(n) * double(c) / double(subframes);
            p(n, c) = cxd(std::cos(phase), std::sin(phase));
        }
    return {std::move(p), ScheduleKind::kDft};
}

// One-element-at-a-time baseline: sub-frame 0 has every surface element off,
// sub-frame c switches on element c-1 alone with unit coefficient. Always
// N+1 sub-frames; the resulting matrix is invertible but carries far less
// training energy than the DFT design.
inline ReflectionSchedule build_binary_schedule(std::size_t n_elements) {
    const std::size_t c_total = n_elements + 1;
    CMatrix p(n_elements + 1, c_total);
    for (std::size_t c = 0; c < c_total; ++c) p(0, c) = 1.0;
    for (std::size_t c = 1; c < c_total; ++c) p(c, c) = 1.0;
    return {std::move(p), ScheduleKind::kBinary};
}

// First K columns of an L x L DFT matrix scaled by sqrt(power): unit-modulus
// symbols, exact orthogonality, u_k^H u_k = power * L.
inline PilotBook build_pilot_book(std::size_t users, std::size_t length, double power) {
    if (length < users)
        throw std::invalid_argument("build_pilot_book: need length >= users");
    if (!(power > 0.0))
        throw std::invalid_argument("build_pilot_book: power must be > 0");
    const double amp = std::sqrt(power);
    CMatrix u(length, users);
    for (std::size_t l = 0; l < length; ++l)
        for (std::size_t k = 0; k < users; ++k) {
            const double phase = 2.0 * M_PI * double(l) * double(k) / double(length);
            u(l, k) = amp * cxd(std::cos(phase), std::sin(phase));
        }
    return {std::move(u), power};
}

// Received block for one sub-frame: S_c = sum_k H_k p_c u_k^H + V_c with
// i.i.d. CN(0, noise_var_v) noise entries.
inline CMatrix simulate_subframe(const ChannelRealization& chan, const CMatrix& p_c,
                                 const PilotBook& pilots, double noise_var_v, RngStream& rng) {
    const std::size_t m = chan.G.rows();
    const std::size_t l = pilots.length();
    if (p_c.rows() != chan.G.cols() + 1 || p_c.cols() != 1)
        throw std::invalid_argument("simulate_subframe: phase vector must be (N+1) x 1");
    if (pilots.users() != chan.H.size())
        throw std::invalid_argument("simulate_subframe: pilot book user count mismatch");

    CMatrix s(m, l);
    for (std::size_t k = 0; k < chan.H.size(); ++k) {
        const CMatrix hp = matmul(chan.H[k], p_c);  // M x 1
        for (std::size_t row = 0; row < m; ++row)
            for (std::size_t col = 0; col < l; ++col)
                s(row, col) += hp(row, 0) * std::conj(pilots.U(col, k));
    }
    if (noise_var_v > 0.0) {
        const double sd = std::sqrt(noise_var_v);
        for (auto& z : s.data()) z += sd * rng.complex_normal();
    }
    return s;
}

// x_{c,k} = S_c u_k / (power * L). With orthogonal pilots this isolates
// H_k p_c plus noise of per-entry variance noise_var_v / (power * L).
inline CMatrix despread(const CMatrix& s_c, const CMatrix& u_k, double power, std::size_t length) {
    if (u_k.rows() != s_c.cols() || u_k.cols() != 1)
        throw std::invalid_argument("despread: pilot length mismatch");
    CMatrix x = matmul(s_c, u_k);
    const double scale = 1.0 / (power * double(length));
    for (auto& z : x.data()) z *= scale;
    return x;
}

inline Observation assemble_observation(const std::vector<CMatrix>& x_list, double noise_var_z) {
    if (x_list.empty())
        throw std::invalid_argument("assemble_observation: empty sub-frame list");
    const std::size_t m = x_list.front().rows();
    for (const auto& x : x_list)
        if (x.rows() != m || x.cols() != 1)
            throw std::invalid_argument("assemble_observation: sub-frame vector shape mismatch");
    Observation out{CMatrix(m, x_list.size()), noise_var_z};
    for (std::size_t c = 0; c < x_list.size(); ++c) out.X.set_col(c, x_list[c]);
    return out;
}

inline double despread_noise_var(double noise_var_v, double power, std::size_t length) {
    return noise_var_v / (power * double(length));
}

// Full training phase for all users: C simulated sub-frames, despread per
// user, stacked into per-user observations.
inline std::vector<Observation> simulate_training_phase(const ChannelRealization& chan,
                                                        const ReflectionSchedule& sched,
                                                        const PilotBook& pilots, double noise_var_v,
                                                        RngStream& rng) {
    const std::size_t k_users = chan.H.size();
    const std::size_t c_total = sched.subframes();
    std::vector<std::vector<CMatrix>> per_user(k_users);
    for (std::size_t c = 0; c < c_total; ++c) {
        const CMatrix s_c = simulate_subframe(chan, sched.phase_vector(c), pilots, noise_var_v, rng);
        for (std::size_t k = 0; k < k_users; ++k)
            per_user[k].push_back(despread(s_c, pilots.pilot(k), pilots.power, pilots.length()));
    }
    const double var_z = despread_noise_var(noise_var_v, pilots.power, pilots.length());
    std::vector<Observation> out;
    out.reserve(k_users);
    for (std::size_t k = 0; k < k_users; ++k) out.push_back(assemble_observation(per_user[k], var_z));
    return out;
}

}  // namespace irsce
