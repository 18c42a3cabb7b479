#include <doctest.h>

#include "oracles.hpp"

using namespace cmpstomo;
using oracles::set_distance;

namespace {

Matrix mat2(Complex a, Complex b, Complex c, Complex d) {
    Matrix m(2, 2);
    m << a, b, c, d;
    return m;
}

} // namespace

TEST_CASE("build_transfer: scalar case") {
    Matrix q(1, 1), r(1, 1);
    q << Complex(0.3, -0.7);
    r << Complex(0.5, 0.5);
    TransferMatrix tm = build_transfer(Cmps(q, r));
    CHECK(tm.T.rows() == 1);
    CHECK(tm.T(0, 0).real() == doctest::Approx(2 * 0.3 + 0.5).epsilon(1e-14));
    CHECK(tm.T(0, 0).imag() == doctest::Approx(0.0).epsilon(1e-14));
}

TEST_CASE("build_transfer: K=diag(1,2), R=E12 spectrum") {
    Matrix K = mat2(1, 0, 0, 2);
    Matrix R = mat2(0, 1, 0, 0);
    Matrix Q = q_from_kr(AuxiliaryHamiltonian(K), R);
    CHECK(std::abs(Q(0, 0) - Complex(0, -1)) < 1e-15);
    CHECK(std::abs(Q(1, 1) - Complex(-0.5, -2)) < 1e-15);
    CHECK(std::abs(Q(0, 1)) < 1e-15);

    TransferMatrix tm = build_transfer(Cmps(Q, R));
    std::vector<Complex> expected = {Complex(0, 0), Complex(-0.5, -1), Complex(-0.5, 1),
                                     Complex(-1, 0)};
    CHECK(set_distance(oracles::eigenvalues_of(tm.T), expected) < 1e-12);
}

TEST_CASE("build_transfer: R=0 gives the Kronecker-sum spectrum") {
    Rng rng(11);
    Matrix Q(3, 3);
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) Q(i, j) = rng.cgauss(0, 1);
    TransferMatrix tm = build_transfer(Cmps(Q, Matrix::Zero(3, 3)));
    std::vector<Complex> qe = oracles::eigenvalues_of(Q);
    std::vector<Complex> expected;
    for (auto a : qe)
        for (auto b : qe) expected.push_back(std::conj(a) + b);
    CHECK(set_distance(oracles::eigenvalues_of(tm.T), expected) < 1e-10);
}

TEST_CASE("q_from_kr / k_from_qr invert each other") {
    SUBCASE("zero case") {
        Matrix z = Matrix::Zero(2, 2);
        CHECK(q_from_kr(AuxiliaryHamiltonian(z), z).cwiseAbs().maxCoeff() == 0.0);
        CHECK(k_from_qr(z, z).K.cwiseAbs().maxCoeff() == 0.0);
    }
    SUBCASE("worked example") {
        Matrix Q = mat2(Complex(0, -1), 0, 0, Complex(-0.5, -2));
        Matrix R = mat2(0, 1, 0, 0);
        Matrix K = k_from_qr(Q, R).K;
        CHECK(std::abs(K(0, 0) - Complex(1, 0)) < 1e-14);
        CHECK(std::abs(K(1, 1) - Complex(2, 0)) < 1e-14);
        Matrix Q2 = q_from_kr(AuxiliaryHamiltonian(K), R);
        CHECK((Q2 - Q).cwiseAbs().maxCoeff() < 1e-14);
    }
    SUBCASE("pure Hamiltonian case") {
        Matrix K0 = mat2(1, Complex(0, 2), Complex(0, -2), -3);
        Matrix Q = Complex(0, -1) * K0;
        Matrix K = k_from_qr(Q, Matrix::Zero(2, 2)).K;
        CHECK((K - K0).cwiseAbs().maxCoeff() < 1e-14);
    }
    SUBCASE("gauge identity holds for every output of q_from_kr") {
        Rng rng(5);
        for (int trial = 0; trial < 10; ++trial) {
            int d = 1 + static_cast<int>(rng.next_u64() % 4);
            Matrix A(d, d), R(d, d);
            for (int i = 0; i < d; ++i)
                for (int j = 0; j < d; ++j) {
                    A(i, j) = rng.cgauss(0, 1);
                    R(i, j) = rng.cgauss(0, 1);
                }
            Matrix K = 0.5 * (A + A.adjoint());
            Matrix Q = q_from_kr(AuxiliaryHamiltonian(K), R);
            CHECK((Q + Q.adjoint() + R.adjoint() * R).cwiseAbs().maxCoeff() < 1e-12);
        }
    }
}

TEST_CASE("k_from_qr rejects gauge violations, projects on request") {
    Matrix Q = mat2(1, 0, 0, 1); // Q + Q^dag = 2, far off the manifold
    Matrix R = Matrix::Zero(2, 2);
    CHECK_THROWS_AS(k_from_qr(Q, R), std::invalid_argument);
    Matrix K = k_from_qr(Q, R, 1e-10, true).K;
    CHECK((K - K.adjoint()).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("non-Hermitian K is rejected") {
    Matrix K = mat2(1, 2, 3, 4);
    CHECK_THROWS_AS(AuxiliaryHamiltonian{K}, std::invalid_argument);
}

TEST_CASE("gauge_transform preserves the transfer spectrum") {
    Cmps state = oracles::seeded_state(2, 42);
    SUBCASE("identity leaves the state alone") {
        Cmps g = gauge_transform(state, Matrix::Identity(2, 2));
        CHECK((g.Q - state.Q).cwiseAbs().maxCoeff() == 0.0);
        CHECK((g.R - state.R).cwiseAbs().maxCoeff() == 0.0);
    }
    SUBCASE("scalar multiples of G act identically") {
        Rng rng(3);
        Matrix G(2, 2);
        for (int i = 0; i < 2; ++i)
            for (int j = 0; j < 2; ++j) G(i, j) = rng.cgauss(0, 1);
        Cmps a = gauge_transform(state, G);
        Cmps b = gauge_transform(state, Complex(2.5, -1.0) * G);
        CHECK((a.Q - b.Q).cwiseAbs().maxCoeff() < 1e-12);
        CHECK((a.R - b.R).cwiseAbs().maxCoeff() < 1e-12);
    }
    SUBCASE("spectrum invariance under random G") {
        Rng rng(7);
        Matrix G(2, 2);
        for (int i = 0; i < 2; ++i)
            for (int j = 0; j < 2; ++j) G(i, j) = rng.cgauss(0, 1);
        Cmps g = gauge_transform(state, G);
        CHECK(set_distance(oracles::eigenvalues_of(build_transfer(state).T),
                           oracles::eigenvalues_of(build_transfer(g).T)) < 1e-10);
    }
    SUBCASE("singular G is rejected") {
        Matrix G = Matrix::Zero(2, 2);
        G(0, 0) = 1;
        CHECK_THROWS_AS(gauge_transform(state, G), std::invalid_argument);
    }
}

TEST_CASE("stationarize") {
    SUBCASE("scalar: q=1, r=0 maps to q=0") {
        Matrix q(1, 1), r(1, 1);
        q << 1.0;
        r << 0.0;
        Cmps s = stationarize(Cmps(q, r));
        CHECK(std::abs(s.Q(0, 0)) < 1e-14);
    }
    SUBCASE("stationary states stay put") {
        Cmps s = oracles::seeded_state(3, 9);
        Cmps s2 = stationarize(s);
        CHECK((s2.Q - s.Q).cwiseAbs().maxCoeff() < 1e-12);
    }
    SUBCASE("random d=3 state lands on max Re = 0") {
        EnsembleSpec spec;
        spec.d = 3;
        spec.mode = EnsembleMode::NaiveQR;
        spec.seed = 1234;
        Cmps s = random_cmps(spec);
        auto ev = oracles::eigenvalues_of(build_transfer(s).T);
        double max_re = -1e300;
        for (auto z : ev) max_re = std::max(max_re, z.real());
        CHECK(std::abs(max_re) < 1e-12);
    }
}

TEST_CASE("symmetry maps square to the identity and pair correctly") {
    SymmetryMaps maps(2, 2);
    Matrix L = maps.lambda_matrix();
    Matrix X = maps.xi_matrix();
    CHECK((L * L - Matrix::Identity(4, 4)).cwiseAbs().maxCoeff() == 0.0);
    CHECK((X * X - Matrix::Identity(4, 4)).cwiseAbs().maxCoeff() == 0.0);
    CHECK_THROWS_AS(SymmetryMaps(2, 1), std::invalid_argument); // d^2-kappa odd
}

TEST_CASE("Lambda conj(T) Lambda = T holds entrywise exactly") {
    for (std::uint64_t seed : {1u, 2u, 3u}) {
        for (int d : {1, 2, 3, 4}) {
            EnsembleSpec spec;
            spec.d = d;
            spec.mode = (seed % 2) ? EnsembleMode::NaiveQR : EnsembleMode::RefinedKR;
            spec.sigma = (spec.mode == EnsembleMode::NaiveQR) ? 1.0 : 0.01;
            spec.eta = 0.1;
            spec.seed = seed * 100 + d;
            Cmps s = random_cmps(spec);
            Matrix T = build_transfer(s).T;
            SymmetryMaps maps(d, d * d % 2 ? 1 : 0); // only lambda_perm is used
            bool exact = true;
            for (int i = 0; i < d * d && exact; ++i)
                for (int j = 0; j < d * d && exact; ++j)
                    exact = (T(i, j) ==
                             std::conj(T(maps.lambda_perm[i], maps.lambda_perm[j])));
            CHECK(exact);
        }
    }
}

TEST_CASE("spectrum of T is closed under conjugation") {
    Cmps s = oracles::seeded_state(3, 77, 0.5, 1.0);
    auto ev = oracles::eigenvalues_of(build_transfer(s).T);
    for (auto z : ev) {
        if (std::abs(z.imag()) < 1e-9 * (1 + std::abs(z))) continue;
        double best = 1e300;
        for (auto w : ev) best = std::min(best, std::abs(w - std::conj(z)));
        CHECK(best < 1e-8 * (1 + std::abs(z)));
    }
}

TEST_CASE("order_spectrum: stationary first, reals block, adjacent pairs") {
    std::vector<Complex> ev = {Complex(-0.5, 1.2), Complex(-1, 0), Complex(0, 0),
                               Complex(-0.5, -1.2), Complex(-0.2, 0.4), Complex(-0.2, -0.4)};
    SpectrumOrder so = order_spectrum(ev);
    CHECK(so.kappa == 2);
    CHECK(ev[so.perm[0]] == Complex(0, 0));
    CHECK(ev[so.perm[1]] == Complex(-1, 0));
    CHECK(ev[so.perm[2]] == Complex(-0.2, 0.4));
    CHECK(ev[so.perm[3]] == Complex(-0.2, -0.4));
    CHECK(ev[so.perm[4]] == Complex(-0.5, 1.2));
    CHECK(ev[so.perm[5]] == Complex(-0.5, -1.2));
}
