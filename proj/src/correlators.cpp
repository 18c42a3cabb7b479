#include "cmpstomo/correlators.hpp"

#include <cmath>

#include <Eigen/Eigenvalues>
#include <Eigen/LU>

namespace cmpstomo {

namespace {

// Deterministic eigenvector scaling compatible with the conjugation
// symmetry: real-pole columns are fixed points of v -> Lambda conj(v),
// complex pairs store the positive-Im member and its mapped partner.
// This makes Lambda conj(X) Xi = X hold by construction, which in turn
// gives Xi conj(M) Xi = M up to roundoff.
void canonicalize_columns(Matrix& X, const std::vector<Complex>& poles, int d,
                          int kappa, double /*real_tol*/) {
    const int p = d * d;
    for (int k = 0; k < kappa; ++k) {
        Vector v = X.col(k);
        Vector w = lambda_conj(v, d);
        Vector u = v + w;
        if (u.norm() < 1e-8 * v.norm()) u = Complex(0, 1) * (v - w);
        u.normalize();
        // Only a real sign is free here; pick the one making the first
        // significant entry point into the right half plane.
        for (int i = 0; i < p; ++i) {
            if (std::abs(u[i]) > 1e-12) {
                if (u[i].real() < 0 || (u[i].real() == 0 && u[i].imag() < 0)) u = -u;
                break;
            }
        }
        X.col(k) = u;
    }
    for (int k = kappa; k < p; k += 2) {
        Vector v = X.col(k);
        v.normalize();
        int anchor = 0;
        for (int i = 0; i < p; ++i)
            if (std::abs(v[i]) > 1e-12) { anchor = i; break; }
        const Complex ph = v[anchor] / std::abs(v[anchor]);
        v /= ph;
        X.col(k) = v;
        X.col(k + 1) = lambda_conj(v, d);
    }
    (void)poles;
}

} // namespace

SpectralData spectral_decompose(const TransferMatrix& tm, const Matrix& R,
                                const SpectralOptions& opts) {
    const int d = tm.d;
    const int p = d * d;
    require(R.rows() == d && R.cols() == d, "R must be d x d");
    require(tm.T.rows() == p && tm.T.cols() == p, "T must be d^2 x d^2");

    Eigen::ComplexEigenSolver<Matrix> es(tm.T);
    if (es.info() != Eigen::Success)
        throw std::runtime_error("transfer matrix eigendecomposition failed");

    std::vector<Complex> evals(p);
    for (int k = 0; k < p; ++k) evals[k] = es.eigenvalues()[k];

    double scale = 1.0;
    for (auto z : evals) scale = std::max(scale, std::abs(z));
    for (int a = 0; a < p; ++a)
        for (int b = a + 1; b < p; ++b)
            if (std::abs(evals[a] - evals[b]) < opts.degeneracy_rtol * scale)
                throw std::runtime_error(
                    "degenerate transfer spectrum: eigenvalue gap below tolerance");

    SpectrumOrder order = order_spectrum(evals, opts.real_tol);

    SpectralData sd;
    sd.d = d;
    sd.kappa = order.kappa;
    sd.poles.resize(p);
    Matrix X(p, p);
    for (int k = 0; k < p; ++k) {
        sd.poles[k] = evals[order.perm[k]];
        X.col(k) = es.eigenvectors().col(order.perm[k]);
    }
    canonicalize_columns(X, sd.poles, d, sd.kappa, opts.real_tol);

    Eigen::PartialPivLU<Matrix> lu(X);
    sd.M = lu.solve(kron(R.conjugate(), R) * X);
    sd.density = sd.M(0, 0).real();
    return sd;
}

Complex residue(const SpectralData& sd, const std::vector<int>& idx) {
    const int p = sd.pole_count();
    require(!idx.empty(), "index must have at least one component");
    for (int k : idx) require(k >= 0 && k < p, "residue index out of range");
    // rho = M(0, k_{n-1}) M(k_{n-1}, k_{n-2}) ... M(k_1, 0)
    Complex acc = sd.M(0, idx.back());
    for (int j = static_cast<int>(idx.size()) - 1; j >= 1; --j)
        acc *= sd.M(idx[j], idx[j - 1]);
    acc *= sd.M(idx.front(), 0);
    return acc;
}

Complex correlate_model(const std::vector<Complex>& poles, const Matrix& M,
                        const std::vector<double>& taus) {
    const int p = static_cast<int>(poles.size());
    require(M.rows() == p && M.cols() == p, "M must match the pole count");
    require(!taus.empty(), "need at least one separation");
    for (double t : taus) require(t >= 0.0, "separations must be nonnegative");
    Vector v = M.col(0);
    for (double tau : taus) {
        for (int k = 0; k < p; ++k) v[k] *= std::exp(poles[k] * tau);
        v = (M * v).eval();
    }
    return v[0];
}

Complex correlate(const SpectralData& sd, const std::vector<double>& taus) {
    return correlate_model(sd.poles, sd.M, taus);
}

CorrelationTensor sample_model(const std::vector<Complex>& poles, const Matrix& M,
                               int n, int N, double delta_tau, std::int64_t entry_cap) {
    const int p = static_cast<int>(poles.size());
    require(M.rows() == p && M.cols() == p, "M must match the pole count");
    require(n >= 2, "correlator order must be at least 2");
    require(N >= 1, "need at least one sample per axis");
    require(delta_tau > 0.0, "delta_tau must be positive");

    std::int64_t total = 1;
    for (int j = 0; j < n - 1; ++j) {
        total *= N;
        if (total > entry_cap)
            throw std::invalid_argument("requested tensor exceeds the entry cap");
    }

    // Pole-power table P(l,k) = exp(lambda_k * l * dt), shared by all axes.
    Matrix powers(N, p);
    for (int l = 0; l < N; ++l)
        for (int k = 0; k < p; ++k)
            powers(l, k) = std::exp(poles[k] * (l * delta_tau));

    // Chain evaluation C[l...] = e_1^T M E(l_{n-1}) M ... M E(l_1) M e_1,
    // carried axis by axis as a (prefix x p) state matrix.
    Matrix state = M.col(0).transpose(); // 1 x p
    const Matrix Mt = M.transpose();
    std::int64_t prefixes = 1;
    for (int axis = 0; axis < n - 2; ++axis) {
        Matrix next(prefixes * N, p);
        for (int l = 0; l < N; ++l) {
            Matrix block = state * powers.row(l).asDiagonal() * Mt;
            for (std::int64_t f = 0; f < prefixes; ++f)
                next.row(f * N + l) = block.row(f);
        }
        state = std::move(next);
        prefixes *= N;
    }

    CorrelationTensor ct;
    ct.n = n;
    ct.N = N;
    ct.delta_tau = delta_tau;
    ct.amputated = false;
    ct.values.resize(static_cast<size_t>(total));
    const Eigen::RowVectorXcd row0 = M.row(0);
    for (int l = 0; l < N; ++l) {
        Vector weights = (row0.array() * powers.row(l).array()).matrix().transpose();
        Vector out = state * weights;
        for (std::int64_t f = 0; f < prefixes; ++f)
            ct.values[static_cast<size_t>(f * N + l)] = out[f];
    }
    return ct;
}

CorrelationTensor sample(const SpectralData& sd, int n, int N, double delta_tau,
                         std::int64_t entry_cap) {
    return sample_model(sd.poles, sd.M, n, N, delta_tau, entry_cap);
}

CorrelationTensor amputate(const CorrelationTensor& ct, double density) {
    require(ct.n == 2, "amputation is defined for 2-point tensors");
    if (ct.amputated) throw std::invalid_argument("tensor already amputated");
    CorrelationTensor out = ct;
    const double d2 = density * density;
    for (auto& v : out.values) v -= d2;
    out.amputated = true;
    return out;
}

Complex laplace_eval(const SpectralData& sd, const std::vector<Complex>& s) {
    const int p = sd.pole_count();
    require(!s.empty(), "need at least one frequency");
    for (const Complex& sj : s)
        for (const Complex& pole : sd.poles)
            if (std::abs(pole - sj) <= 1e-12)
                throw std::invalid_argument("Laplace transform evaluated at a pole");
    Vector v = sd.M.col(0);
    for (const Complex& sj : s) {
        for (int k = 0; k < p; ++k) v[k] /= (sd.poles[k] - sj);
        v = (sd.M * v).eval();
    }
    return v[0];
}

} // namespace cmpstomo
