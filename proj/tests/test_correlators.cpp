#include <doctest.h>

#include "oracles.hpp"

using namespace cmpstomo;

namespace {

SpectralData decompose(const Cmps& s) {
    return spectral_decompose(build_transfer(s), s.R);
}

Cmps scalar_state(double r_abs) {
    Matrix q(1, 1), r(1, 1);
    r << r_abs;
    q << -0.5 * r_abs * r_abs;
    return Cmps(q, r);
}

} // namespace

TEST_CASE("spectral_decompose: scalar stationary state") {
    SpectralData sd = decompose(scalar_state(0.8));
    CHECK(sd.pole_count() == 1);
    CHECK(std::abs(sd.poles[0]) < 1e-14);
    CHECK(sd.density == doctest::Approx(0.64).epsilon(1e-12));
    CHECK(std::abs(sd.M(0, 0) - Complex(0.64, 0)) < 1e-14);
}

TEST_CASE("spectral_decompose: stationary pole first, Xi symmetry of M") {
    for (std::uint64_t seed : {4u, 9u, 23u}) {
        Cmps s = oracles::seeded_state(2, seed);
        SpectralData sd = decompose(s);
        CHECK(std::abs(sd.poles[0]) < 1e-10);
        CHECK(sd.density > 0);

        SymmetryMaps maps(sd.d, sd.kappa);
        double defect = 0;
        for (int i = 0; i < 4; ++i)
            for (int j = 0; j < 4; ++j)
                defect = std::max(defect,
                                  std::abs(std::conj(sd.M(maps.xi_perm[i], maps.xi_perm[j])) -
                                           sd.M(i, j)));
        CHECK(defect < 1e-8 * sd.M.cwiseAbs().maxCoeff());
    }
}

TEST_CASE("spectral_decompose: gauge-transformed state keeps poles and residues") {
    Cmps s = oracles::seeded_state(2, 31);
    Rng rng(8);
    Matrix G(2, 2);
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) G(i, j) = rng.cgauss(0, 1);
    Cmps g = gauge_transform(s, G);

    SpectralData sa = decompose(s), sb = decompose(g);
    for (int k = 0; k < 4; ++k)
        CHECK(std::abs(sa.poles[k] - sb.poles[k]) < 1e-9 * (1 + std::abs(sa.poles[k])));
    // residues are gauge invariant even though M itself may differ by a
    // diagonal conjugation
    for (int k1 = 0; k1 < 4; ++k1)
        for (int k2 = 0; k2 < 4; ++k2) {
            Complex ra = residue(sa, {k1, k2});
            Complex rb = residue(sb, {k1, k2});
            CHECK(std::abs(ra - rb) < 1e-8 * (1 + std::abs(ra)));
        }
}

TEST_CASE("spectral_decompose rejects degenerate spectra") {
    // R = 0 and Q = diag(0, -1) give T eigenvalues {0,-1,-1,-2}.
    Matrix Q = Matrix::Zero(2, 2);
    Q(1, 1) = -1;
    Matrix R = Matrix::Zero(2, 2);
    CHECK_THROWS_WITH_AS(decompose(Cmps(Q, R)),
                         doctest::Contains("degenerate"), std::runtime_error);
}

TEST_CASE("residue: definition cases") {
    Cmps s = oracles::seeded_state(2, 5);
    SpectralData sd = decompose(s);
    SUBCASE("n=2 is M(0,k) M(k,0)") {
        for (int k = 0; k < 4; ++k)
            CHECK(std::abs(residue(sd, {k}) - sd.M(0, k) * sd.M(k, 0)) < 1e-15);
    }
    SUBCASE("all-ones index gives density^n") {
        CHECK(std::abs(residue(sd, {0, 0, 0}) - std::pow(Complex(sd.density, 0), 4)) <
              1e-12);
    }
    SUBCASE("explicit 2x2 chain") {
        SpectralData toy;
        toy.d = 1; // shape only; residue never touches d
        toy.poles = {Complex(0, 0), Complex(-1, 0)};
        toy.M = Matrix(2, 2);
        toy.M << 1, 1, 2, 3;
        // rho^{(3)}_{2,2} = M_{1,2} M_{2,2} M_{2,1} = 1*3*2
        CHECK(residue(toy, {1, 1}) == Complex(6, 0));
    }
    SUBCASE("index out of range") {
        CHECK_THROWS_AS(residue(sd, {4}), std::invalid_argument);
    }
}

TEST_CASE("correlate: analytic scalar and asymptotic limits") {
    SpectralData sd = decompose(scalar_state(0.9));
    const double rho4 = std::pow(0.9, 4);
    for (double tau : {0.0, 0.5, 10.0})
        CHECK(std::abs(correlate(sd, {tau}) - Complex(rho4, 0)) < 1e-13);

    Cmps s = oracles::seeded_state(2, 12);
    SpectralData sd2 = decompose(s);
    // all separations large: only the stationary pole survives
    double tail = 60.0 / std::abs(sd2.poles[1].real());
    Complex far = correlate(sd2, {tail, tail});
    CHECK(std::abs(far - std::pow(Complex(sd2.density, 0), 3)) <
          1e-8 * std::pow(sd2.density, 3));
}

TEST_CASE("correlate matches the matrix-exponential trace oracle") {
    Cmps s = oracles::seeded_state(2, 77);
    SpectralData sd = decompose(s);
    double gap = 1e300;
    for (int k = 1; k < 4; ++k) gap = std::min(gap, -sd.poles[k].real());
    const double tau_long = 60.0 / gap;

    for (auto taus : std::vector<std::vector<double>>{{0.7}, {0.7, 1.3}, {0.4, 2.0, 1.1}}) {
        Complex direct = correlate(sd, taus);
        Complex ref = oracles::correlator_expm(s, taus, tau_long);
        CHECK(std::abs(direct - ref) < 1e-8 * (1 + std::abs(ref)));
    }
}

TEST_CASE("correlate agrees with the brute-force residue sum") {
    Cmps s = oracles::seeded_state(2, 99);
    SpectralData sd = decompose(s);
    std::vector<double> taus = {0.3, 1.7};
    Complex a = correlate(sd, taus);
    Complex b = oracles::correlator_sum(sd, taus);
    CHECK(std::abs(a - b) < 1e-12 * (1 + std::abs(b)));
}

TEST_CASE("sample: layout, consistency with correlate, realness") {
    Cmps s = oracles::seeded_state(2, 3);
    SpectralData sd = decompose(s);

    SUBCASE("n=2, N=1 is the residue sum at zero") {
        CorrelationTensor ct = sample(sd, 2, 1, 0.5);
        Complex total = 0;
        for (int k = 0; k < 4; ++k) total += residue(sd, {k});
        CHECK(std::abs(ct.values[0] - total) < 1e-12);
    }
    SUBCASE("n=3 grid matches pointwise correlate, last index fastest") {
        const int N = 4;
        const double dt = 0.35;
        CorrelationTensor ct = sample(sd, 3, N, dt);
        REQUIRE(ct.size() == 16);
        for (int l1 = 0; l1 < N; ++l1)
            for (int l2 = 0; l2 < N; ++l2) {
                Complex direct = correlate(sd, {l1 * dt, l2 * dt});
                CHECK(std::abs(ct.values[static_cast<size_t>(l1 * N + l2)] - direct) <
                      1e-13 * (1 + std::abs(direct)));
            }
    }
    SUBCASE("d=1: every entry equals density^n") {
        SpectralData sc = decompose(scalar_state(0.7));
        CorrelationTensor ct = sample(sc, 4, 3, 0.2);
        for (const auto& v : ct.values)
            CHECK(std::abs(v - std::pow(Complex(sc.density, 0), 4)) < 1e-13);
    }
    SUBCASE("sampled density correlators of stationarized states are real") {
        CorrelationTensor ct = sample(sd, 3, 8, 0.4);
        for (const auto& v : ct.values)
            CHECK(std::abs(v.imag()) <= 1e-10 * (1 + std::abs(v.real())));
    }
    SUBCASE("entry cap guards runaway grids") {
        CHECK_THROWS_AS(sample(sd, 6, 100, 0.1), std::invalid_argument);
    }
}

TEST_CASE("amputate removes the stationary contribution") {
    SUBCASE("scalar state amputates to zero") {
        SpectralData sd = decompose(scalar_state(0.6));
        CorrelationTensor ct = amputate(sample(sd, 2, 5, 0.3), sd.density);
        for (const auto& v : ct.values) CHECK(std::abs(v) < 1e-14);
    }
    SUBCASE("second amputation is an error") {
        SpectralData sd = decompose(scalar_state(0.6));
        CorrelationTensor ct = amputate(sample(sd, 2, 5, 0.3), sd.density);
        CHECK_THROWS_AS(amputate(ct, sd.density), std::invalid_argument);
    }
    SUBCASE("amputated signal decays to zero") {
        Cmps s = oracles::seeded_state(2, 21);
        SpectralData sd = decompose(s);
        const double tail = 50.0 / std::abs(sd.poles[1].real());
        CorrelationTensor ct = sample(sd, 2, 2, tail);
        CorrelationTensor amp = amputate(ct, sd.density);
        CHECK(std::abs(amp.values[1]) < 1e-8 * std::abs(ct.values[0]));
    }
}

TEST_CASE("laplace_eval") {
    SUBCASE("d=1 closed form") {
        SpectralData sd = decompose(scalar_state(0.8));
        Complex s(1.5, 0.3);
        Complex expect = residue(sd, {0}) / (sd.poles[0] - s);
        CHECK(std::abs(laplace_eval(sd, {s}) - expect) < 1e-13);
    }
    SUBCASE("large |Re s| asymptotics") {
        Cmps st = oracles::seeded_state(2, 14);
        SpectralData sd = decompose(st);
        Complex total = 0;
        for (int k = 0; k < 4; ++k) total += residue(sd, {k});
        const double big = 1e6;
        CHECK(std::abs(laplace_eval(sd, {Complex(big, 0)}) - (-total / big)) <
              1e-4 * std::abs(total) / big + 1e-18);
    }
    SUBCASE("quadrature oracle at n=2") {
        Cmps st = oracles::seeded_state(2, 14);
        SpectralData sd = decompose(st);
        Complex s(0.05, 0.01);
        Complex quad = oracles::laplace_quadrature(sd, s, 400.0, 200000);
        CHECK(std::abs(laplace_eval(sd, {s}) - quad) < 1e-4 * (1 + std::abs(quad)));
    }
    SUBCASE("evaluation at a pole is rejected") {
        SpectralData sd = decompose(scalar_state(0.8));
        CHECK_THROWS_AS(laplace_eval(sd, {sd.poles[0]}), std::invalid_argument);
    }
}

TEST_CASE("model-level Wick identity on the residues") {
    Cmps s = oracles::seeded_state(2, 55);
    SpectralData sd = decompose(s);
    // rho^(n) factorises through 3- and 2-point residues whenever the
    // denominators are nonzero
    for (int k1 = 0; k1 < 4; ++k1)
        for (int k2 = 0; k2 < 4; ++k2)
            for (int k3 = 0; k3 < 4; ++k3) {
                Complex lhs = residue(sd, {k1, k2, k3});
                Complex den = residue(sd, {k2});
                if (std::abs(den) < 1e-14) continue;
                Complex rhs = residue(sd, {k1, k2}) * residue(sd, {k2, k3}) / den;
                CHECK(std::abs(lhs - rhs) < 1e-10 * (1 + std::abs(lhs)));
            }
}
