#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "irsce/pilot_protocol.hpp"

using namespace irsce;

TEST_CASE("two-subframe DFT schedule is [[1,1],[1,-1]]") {
    const auto sched = build_dft_schedule(1, 2);
    CHECK(std::abs(sched.P(0, 0) - cxd(1, 0)) < 1e-15);
    CHECK(std::abs(sched.P(0, 1) - cxd(1, 0)) < 1e-15);
    CHECK(std::abs(sched.P(1, 0) - cxd(1, 0)) < 1e-15);
    CHECK(std::abs(sched.P(1, 1) - cxd(-1, 0)) < 1e-12);
}

TEST_CASE("DFT schedule orthogonality and structure") {
    for (auto [n, c] : {std::pair<std::size_t, std::size_t>{4, 5}, {4, 8}, {8, 9}}) {
        const auto sched = build_dft_schedule(n, c);
        CHECK(sched.subframes() == c);
        CHECK(sched.elements() == n);

        CMatrix target = CMatrix::identity(n + 1);
        for (auto& z : target.data()) z *= double(c);
        CHECK(max_abs(matmul(sched.P, conj_transpose(sched.P)) - target) < 1e-9);

        for (std::size_t j = 0; j < c; ++j) CHECK(std::abs(sched.P(0, j) - cxd(1, 0)) < 1e-15);
        for (const auto& z : sched.P.data()) CHECK(std::abs(z) == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("DFT schedule rejects too few subframes") {
    CHECK_THROWS_AS(build_dft_schedule(4, 4), std::invalid_argument);
}

TEST_CASE("phase vector accessors") {
    const auto sched = build_dft_schedule(3, 4);
    const CMatrix p1 = sched.phase_vector(1);
    CHECK(p1.rows() == 4);
    CHECK(std::abs(p1(0, 0) - cxd(1, 0)) < 1e-15);
    const CMatrix r1 = sched.element_phases(1);
    CHECK(r1.rows() == 3);
    for (std::size_t i = 0; i < 3; ++i) CHECK(r1(i, 0) == p1(i + 1, 0));
}

TEST_CASE("pilot book hand case K=2 L=2") {
    const auto book = build_pilot_book(2, 2, 1.0);
    CHECK(std::abs(book.U(0, 0) - cxd(1, 0)) < 1e-15);
    CHECK(std::abs(book.U(1, 0) - cxd(1, 0)) < 1e-15);
    CHECK(std::abs(book.U(0, 1) - cxd(1, 0)) < 1e-15);
    CHECK(std::abs(book.U(1, 1) - cxd(-1, 0)) < 1e-12);
    const CMatrix gram = matmul(conj_transpose(book.U), book.U);
    CHECK(std::abs(gram(0, 1)) < 1e-12);
    CHECK(gram(0, 0).real() == doctest::Approx(2.0));
}

TEST_CASE("pilot book gram matrix is power*L times identity") {
    const double power = 2.5;
    const auto book = build_pilot_book(3, 5, power);
    const CMatrix gram = matmul(conj_transpose(book.U), book.U);
    CMatrix target = CMatrix::identity(3);
    for (auto& z : target.data()) z *= power * 5.0;
    CHECK(max_abs(gram - target) < 1e-9);
}

TEST_CASE("single-user pilot book has unit-modulus symbols scaled by sqrt(power)") {
    const auto book = build_pilot_book(1, 4, 4.0);
    for (const auto& z : book.U.data()) CHECK(std::abs(z) == doctest::Approx(2.0));
    CHECK_THROWS_AS(build_pilot_book(3, 2, 1.0), std::invalid_argument);
}

namespace {

SystemConfig test_system(std::size_t users) {
    SystemConfig sys;
    sys.bs_antennas = 3;
    sys.irs_elements = 4;
    sys.users = users;
    sys.subframes = 5;
    sys.pilot_length = users;
    return sys;
}

ChannelRealization draw_channels(const SystemConfig& sys, std::uint64_t idx) {
    LinkSet links;  // defaults are fine; magnitudes do not matter here
    RngStream rng = make_stream(100, SeedDomain::kMisc, idx);
    return realize_channels(sys, links, rng);
}

}  // namespace

TEST_CASE("noise-free subframe is the exact rank-one superposition") {
    const SystemConfig one = test_system(1);
    const auto chan1 = draw_channels(one, 0);
    const auto sched = build_dft_schedule(one.irs_elements, one.subframes);
    const auto pilots1 = build_pilot_book(1, 1, 1.0);
    RngStream rng = make_stream(101, SeedDomain::kMisc, 0);

    const CMatrix s = simulate_subframe(chan1, sched.phase_vector(2), pilots1, 0.0, rng);
    const CMatrix expect = matmul(matmul(chan1.H[0], sched.phase_vector(2)), conj_transpose(pilots1.pilot(0)));
    CHECK(max_abs(s - expect) < 1e-12);

    const SystemConfig two = test_system(2);
    const auto chan2 = draw_channels(two, 1);
    const auto pilots2 = build_pilot_book(2, 2, 1.0);
    const CMatrix s2 = simulate_subframe(chan2, sched.phase_vector(1), pilots2, 0.0, rng);
    CMatrix expect2 =
        matmul(matmul(chan2.H[0], sched.phase_vector(1)), conj_transpose(pilots2.pilot(0))) +
        matmul(matmul(chan2.H[1], sched.phase_vector(1)), conj_transpose(pilots2.pilot(1)));
    CHECK(max_abs(s2 - expect2) < 1e-12);
}

TEST_CASE("zero channel leaves pure noise of the configured variance") {
    CMatrix g(3, 4);
    CMatrix f(4, 1), d(3, 1);
    const auto chan = assemble_realization(g, {f}, {d});
    const auto sched = build_dft_schedule(4, 5);
    const auto pilots = build_pilot_book(1, 1, 1.0);
    const double var_v = 0.7;

    RngStream rng = make_stream(102, SeedDomain::kMisc, 0);
    double power = 0.0;
    std::size_t count = 0;
    for (int t = 0; t < 40000; ++t) {
        const CMatrix s = simulate_subframe(chan, sched.phase_vector(0), pilots, var_v, rng);
        power += fro_norm_sq(s);
        count += s.rows() * s.cols();
    }
    CHECK(power / double(count) == doctest::Approx(var_v).epsilon(0.01));
}

TEST_CASE("despreading cancels cross-user terms exactly without noise") {
    const SystemConfig sys = test_system(2);
    const auto chan = draw_channels(sys, 2);
    const auto sched = build_dft_schedule(sys.irs_elements, sys.subframes);
    const auto pilots = build_pilot_book(2, 2, 1.0);
    RngStream rng = make_stream(103, SeedDomain::kMisc, 0);
    const CMatrix s = simulate_subframe(chan, sched.phase_vector(3), pilots, 0.0, rng);
    for (std::size_t k = 0; k < 2; ++k) {
        const CMatrix x = despread(s, pilots.pilot(k), pilots.power, pilots.length());
        const CMatrix expect = matmul(chan.H[k], sched.phase_vector(3));
        CHECK(max_abs(x - expect) < 1e-10);
    }
}

TEST_CASE("despread noise variance is var_v / (power * L)") {
    CMatrix g(3, 4), f(4, 1), d(3, 1);
    const auto chan = assemble_realization(g, {f}, {d});
    const auto sched = build_dft_schedule(4, 5);
    const double power = 2.0;
    const std::size_t length = 4;
    const auto pilots = build_pilot_book(1, length, power);
    const double var_v = 0.5;
    const double expect = despread_noise_var(var_v, power, length);
    CHECK(expect == doctest::Approx(var_v / (power * double(length))));

    RngStream rng = make_stream(104, SeedDomain::kMisc, 0);
    double acc = 0.0;
    std::size_t count = 0;
    for (int t = 0; t < 30000; ++t) {
        const CMatrix s = simulate_subframe(chan, sched.phase_vector(1), pilots, var_v, rng);
        const CMatrix x = despread(s, pilots.pilot(0), power, length);
        acc += fro_norm_sq(x);
        count += x.rows();
    }
    CHECK(acc / double(count) == doctest::Approx(expect).epsilon(0.02));
}

TEST_CASE("unit normalizer degenerate case: despread is plain correlation") {
    RngStream rng = make_stream(105, SeedDomain::kMisc, 0);
    CMatrix s(3, 1);
    for (auto& z : s.data()) z = rng.complex_normal();
    CMatrix u(1, 1);
    u(0, 0) = 1.0;
    const CMatrix x = despread(s, u, 1.0, 1);
    CHECK(max_abs(x - matmul(s, u)) == 0.0);
}

TEST_CASE("assemble_observation stacks columns in order") {
    RngStream rng = make_stream(106, SeedDomain::kMisc, 0);
    std::vector<CMatrix> cols;
    for (int c = 0; c < 3; ++c) {
        CMatrix v(2, 1);
        for (auto& z : v.data()) z = rng.complex_normal();
        cols.push_back(v);
    }
    const Observation obs = assemble_observation(cols, 0.25);
    CHECK(obs.X.cols() == 3);
    CHECK(obs.noise_var_z == 0.25);
    for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t r = 0; r < 2; ++r) CHECK(obs.X(r, c) == cols[c](r, 0));

    const Observation single = assemble_observation({cols[0]}, 0.0);
    CHECK(single.X == cols[0]);

    CHECK_THROWS_AS(assemble_observation({}, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(assemble_observation({cols[0], CMatrix(3, 1)}, 0.0), std::invalid_argument);
}

TEST_CASE("noise-free end-to-end pipeline gives X_k = H_k P for every user") {
    const SystemConfig sys = test_system(2);
    const auto chan = draw_channels(sys, 5);
    const auto sched = build_dft_schedule(sys.irs_elements, sys.subframes);
    const auto pilots = build_pilot_book(sys.users, sys.pilot_length, sys.pilot_power);
    RngStream rng = make_stream(107, SeedDomain::kMisc, 0);
    const auto obs = simulate_training_phase(chan, sched, pilots, 0.0, rng);
    for (std::size_t k = 0; k < sys.users; ++k)
        CHECK(max_abs(obs[k].X - matmul(chan.H[k], sched.P)) < 1e-10);
}

TEST_CASE("binary schedule structure for N=2") {
    const auto sched = build_binary_schedule(2);
    CHECK(sched.kind == ScheduleKind::kBinary);
    REQUIRE(sched.P.rows() == 3);
    REQUIRE(sched.P.cols() == 3);
    const double expect[3][3] = {{1, 1, 1}, {0, 1, 0}, {0, 0, 1}};
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 3; ++j) {
            CHECK(sched.P(i, j).real() == doctest::Approx(expect[i][j]));
            CHECK(sched.P(i, j).imag() == 0.0);
        }
}

TEST_CASE("binary schedule is invertible and carries little training energy") {
    const std::size_t n = 5;
    const auto sched = build_binary_schedule(n);
    // Full rank: the pseudoinverse of a square full-rank matrix exists.
    const CMatrix pinv = right_pseudoinverse(sched.P);
    CHECK(max_abs(matmul(sched.P, pinv) - CMatrix::identity(n + 1)) < 1e-9);

    double energy = 0.0;
    for (const auto& z : sched.P.data()) energy += std::norm(z);
    CHECK(energy == doctest::Approx(double(n + 1) + double(n)));

    const auto dft = build_dft_schedule(n, n + 1);
    double dft_energy = 0.0;
    for (const auto& z : dft.P.data()) dft_energy += std::norm(z);
    CHECK(dft_energy == doctest::Approx(double((n + 1) * (n + 1))));
    CHECK(energy < dft_energy);

    // Entries beyond row 0 are 0/1 valued.
    for (std::size_t i = 1; i < sched.P.rows(); ++i)
        for (std::size_t j = 0; j < sched.P.cols(); ++j) {
            const double re = sched.P(i, j).real();
            CHECK(sched.P(i, j).imag() == 0.0);
            CHECK((re == 0.0 || re == 1.0));
        }
}
