// Random channel generation for the reflecting-surface uplink: Rician links
// with distance-based path loss, the cascaded user-surface-base matrix and
// the composite estimation target.

#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

#include "irsce/complex_matrix.hpp"
#include "irsce/rng.hpp"

namespace irsce {

struct SystemConfig {
    std::size_t bs_antennas = 4;      // M
    std::size_t irs_elements = 8;     // N
    std::size_t users = 2;            // K
    std::size_t subframes = 9;        // C, >= N+1
    std::size_t pilot_length = 4;     // L, >= K
    double pilot_power = 1.0;         // per-symbol pilot power, linear
    double noise_var_v = 0.1;         // receiver noise variance, linear
    std::uint64_t seed = 1;

    void validate() const {
        if (bs_antennas < 1 || irs_elements < 1 || users < 1 || subframes < 1 || pilot_length < 1)
            throw std::invalid_argument("SystemConfig: all counts must be >= 1");
        if (subframes < irs_elements + 1)
            throw std::invalid_argument("SystemConfig: subframes must be >= irs_elements + 1");
        if (pilot_length < users)
            throw std::invalid_argument("SystemConfig: pilot_length must be >= users");
        if (!(pilot_power > 0.0))
            throw std::invalid_argument("SystemConfig: pilot_power must be > 0");
        if (!(noise_var_v >= 0.0))
            throw std::invalid_argument("SystemConfig: noise_var_v must be >= 0");
    }
};

struct LinkParams {
    double distance_m = 10.0;
    double exponent = 2.0;
    double rician_factor = 0.0;   // linear, >= 0
    double ref_loss = 0.0316227766016838;  // -15 dB
    double ref_distance_m = 10.0;

    void validate() const {
        if (!(distance_m > 0.0) || !(ref_distance_m > 0.0))
            throw std::invalid_argument("LinkParams: distances must be > 0");
        if (!(exponent >= 0.0))
            throw std::invalid_argument("LinkParams: exponent must be >= 0");
        if (!(rician_factor >= 0.0))
            throw std::invalid_argument("LinkParams: rician_factor must be >= 0");
        if (!(ref_loss > 0.0))
            throw std::invalid_argument("LinkParams: ref_loss must be > 0");
    }
};

// user-to-base (direct), surface-to-base, user-to-surface
struct LinkSet {
    LinkParams user_bs;
    LinkParams irs_bs;
    LinkParams user_irs;
};

// One draw of all channels plus the derived composites.
struct ChannelRealization {
    CMatrix G;               // M x N, surface to base
    std::vector<CMatrix> f;  // K of N x 1, user to surface
    std::vector<CMatrix> d;  // K of M x 1, user to base
    std::vector<CMatrix> B;  // K of M x N, cascaded: G * diag(f_k)
    std::vector<CMatrix> H;  // K of M x (N+1), [d_k, B_k]
};

inline double path_loss(const LinkParams& link) {
    link.validate();
    return link.ref_loss * std::pow(link.distance_m / link.ref_distance_m, -link.exponent);
}

struct RicianComponents {
    CMatrix los;   // deterministic per draw, every entry unit modulus, rank one
    CMatrix nlos;  // i.i.d. CN(0,1)
};

// Draws the two Rician components with a fixed stream-consumption pattern:
// two angles first, then rows*cols complex Gaussians. The line-of-sight part
// is a uniform-linear-array steering outer product with half-wavelength
// spacing and per-draw uniform angles.
inline RicianComponents sample_rician_components(std::size_t rows, std::size_t cols, RngStream& rng) {
    const double theta_rx = 2.0 * M_PI * rng.uniform01();
    const double theta_tx = 2.0 * M_PI * rng.uniform01();
    RicianComponents out{CMatrix(rows, cols), CMatrix(rows, cols)};
    for (std::size_t m = 0; m < rows; ++m) {
        const double phase_rx = M_PI * double(m) * std::sin(theta_rx);
        for (std::size_t n = 0; n < cols; ++n) {
            const double phase = phase_rx - M_PI * double(n) * std::sin(theta_tx);
            out.los(m, n) = cxd(std::cos(phase), std::sin(phase));
        }
    }
    for (std::size_t m = 0; m < rows; ++m)
        for (std::size_t n = 0; n < cols; ++n) out.nlos(m, n) = rng.complex_normal();
    return out;
}

// sqrt(beta/(beta+1)) * LOS + sqrt(1/(beta+1)) * NLOS; unit per-entry power
// for every beta >= 0.
inline CMatrix sample_rician(std::size_t rows, std::size_t cols, double beta, RngStream& rng) {
    if (!(beta >= 0.0)) throw std::invalid_argument("sample_rician: beta must be >= 0");
    const RicianComponents parts = sample_rician_components(rows, cols, rng);
    const double w_los = std::sqrt(beta / (beta + 1.0));
    const double w_nlos = std::sqrt(1.0 / (beta + 1.0));
    CMatrix out(rows, cols);
    for (std::size_t m = 0; m < rows; ++m)
        for (std::size_t n = 0; n < cols; ++n)
            out(m, n) = w_los * parts.los(m, n) + w_nlos * parts.nlos(m, n);
    return out;
}

// Builds the composites from given per-link draws. Split out so tests can
// force specific f_k / d_k values.
inline ChannelRealization assemble_realization(CMatrix G, std::vector<CMatrix> f, std::vector<CMatrix> d) {
    const std::size_t m = G.rows();
    const std::size_t n = G.cols();
    if (f.size() != d.size() || f.empty())
        throw std::invalid_argument("assemble_realization: need matching nonempty f and d lists");
    ChannelRealization out;
    out.G = std::move(G);
    out.f = std::move(f);
    out.d = std::move(d);
    const std::size_t k_users = out.f.size();
    out.B.reserve(k_users);
    out.H.reserve(k_users);
    for (std::size_t k = 0; k < k_users; ++k) {
        if (out.f[k].rows() != n || out.f[k].cols() != 1)
            throw std::invalid_argument("assemble_realization: f_k must be N x 1");
        if (out.d[k].rows() != m || out.d[k].cols() != 1)
            throw std::invalid_argument("assemble_realization: d_k must be M x 1");
        CMatrix b(m, n);
        for (std::size_t col = 0; col < n; ++col)
            for (std::size_t row = 0; row < m; ++row)
                b(row, col) = out.G(row, col) * out.f[k](col, 0);
        CMatrix h(m, n + 1);
        for (std::size_t row = 0; row < m; ++row) {
            h(row, 0) = out.d[k](row, 0);
            for (std::size_t col = 0; col < n; ++col) h(row, col + 1) = b(row, col);
        }
        out.B.push_back(std::move(b));
        out.H.push_back(std::move(h));
    }
    return out;
}

// Draw order is fixed (G, then all f_k, then all d_k) so a given stream
// always produces the same realization.
inline ChannelRealization realize_channels(const SystemConfig& cfg, const LinkSet& links, RngStream& rng) {
    cfg.validate();
    links.user_bs.validate();
    links.irs_bs.validate();
    links.user_irs.validate();

    const double a_ib = std::sqrt(path_loss(links.irs_bs));
    const double a_ui = std::sqrt(path_loss(links.user_irs));
    const double a_ub = std::sqrt(path_loss(links.user_bs));

    CMatrix g = sample_rician(cfg.bs_antennas, cfg.irs_elements, links.irs_bs.rician_factor, rng);
    for (auto& z : g.data()) z *= a_ib;

    std::vector<CMatrix> f;
    f.reserve(cfg.users);
    for (std::size_t k = 0; k < cfg.users; ++k) {
        CMatrix fk = sample_rician(cfg.irs_elements, 1, links.user_irs.rician_factor, rng);
        for (auto& z : fk.data()) z *= a_ui;
        f.push_back(std::move(fk));
    }

    std::vector<CMatrix> d;
    d.reserve(cfg.users);
    for (std::size_t k = 0; k < cfg.users; ++k) {
        CMatrix dk = sample_rician(cfg.bs_antennas, 1, links.user_bs.rician_factor, rng);
        for (auto& z : dk.data()) z *= a_ub;
        d.push_back(std::move(dk));
    }

    return assemble_realization(std::move(g), std::move(f), std::move(d));
}

}  // namespace irsce
