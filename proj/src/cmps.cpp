#include "cmpstomo/cmps.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Eigenvalues>
#include <Eigen/LU>
#include <Eigen/SVD>

namespace cmpstomo {

Cmps::Cmps(Matrix Q_, Matrix R_) : Q(std::move(Q_)), R(std::move(R_)) {
    require(Q.rows() == Q.cols(), "Q must be square");
    require(R.rows() == R.cols(), "R must be square");
    require(Q.rows() == R.rows(), "Q and R must have identical dimension");
    require(Q.rows() >= 1, "bond dimension must be positive");
    d = static_cast<int>(Q.rows());
}

AuxiliaryHamiltonian::AuxiliaryHamiltonian(Matrix K_, double tol) : K(std::move(K_)) {
    require(K.rows() == K.cols(), "K must be square");
    const double scale = K.cwiseAbs().maxCoeff();
    const double defect = (K - K.adjoint()).cwiseAbs().maxCoeff();
    if (defect > tol * std::max(1.0, scale))
        throw std::invalid_argument("K is not Hermitian: defect " + std::to_string(defect));
}

Matrix kron(const Matrix& A, const Matrix& B) {
    const Eigen::Index ar = A.rows(), ac = A.cols(), br = B.rows(), bc = B.cols();
    Matrix out(ar * br, ac * bc);
    for (Eigen::Index i = 0; i < ar; ++i)
        for (Eigen::Index j = 0; j < ac; ++j)
            out.block(i * br, j * bc, br, bc) = A(i, j) * B;
    return out;
}

Vector lambda_conj(const Vector& v, int d) {
    Vector out(v.size());
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j)
            out[j * d + i] = std::conj(v[i * d + j]);
    return out;
}

SymmetryMaps::SymmetryMaps(int d_, int kappa_) : d(d_), kappa(kappa_) {
    const int p = d * d;
    require(d >= 1, "d must be positive");
    require(kappa >= 0 && kappa <= p, "kappa out of range");
    require((p - kappa) % 2 == 0, "d^2 - kappa must be even");
    lambda_perm.resize(p);
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j)
            lambda_perm[i * d + j] = j * d + i;
    xi_perm.resize(p);
    for (int k = 0; k < kappa; ++k) xi_perm[k] = k;
    for (int k = kappa; k < p; k += 2) {
        xi_perm[k] = k + 1;
        xi_perm[k + 1] = k;
    }
}

Matrix SymmetryMaps::lambda_matrix() const {
    const int p = d * d;
    Matrix L = Matrix::Zero(p, p);
    for (int c = 0; c < p; ++c) L(lambda_perm[c], c) = 1.0;
    return L;
}

Matrix SymmetryMaps::xi_matrix() const {
    const int p = d * d;
    Matrix X = Matrix::Zero(p, p);
    for (int c = 0; c < p; ++c) X(xi_perm[c], c) = 1.0;
    return X;
}

TransferMatrix build_transfer(const Cmps& state) {
    require(state.Q.rows() == state.R.rows() && state.Q.cols() == state.R.cols(),
            "dimension mismatch between Q and R");
    const int d = state.d;
    Matrix id = Matrix::Identity(d, d);
    TransferMatrix tm;
    tm.d = d;
    tm.T = kron(state.Q.conjugate(), id) + kron(id, state.Q) +
           kron(state.R.conjugate(), state.R);
    return tm;
}

Matrix q_from_kr(const AuxiliaryHamiltonian& K, const Matrix& R) {
    require(K.K.rows() == R.rows() && K.K.cols() == R.cols(),
            "K and R must have identical dimension");
    return Complex(0, -1) * K.K - 0.5 * (R.adjoint() * R);
}

AuxiliaryHamiltonian k_from_qr(const Matrix& Q, const Matrix& R, double tol, bool project) {
    require(Q.rows() == R.rows() && Q.cols() == R.cols(), "Q and R must have identical dimension");
    const Matrix gauge = Q + Q.adjoint() + R.adjoint() * R;
    const double scale = std::max({1.0, Q.cwiseAbs().maxCoeff(), (R.adjoint() * R).cwiseAbs().maxCoeff()});
    const double residual = gauge.cwiseAbs().maxCoeff();
    if (residual > tol * scale && !project)
        throw std::invalid_argument(
            "gauge condition Q + Q^dag + R^dag R = 0 violated, residual " +
            std::to_string(residual));
    Matrix K = Complex(0, 1) * (Q + 0.5 * (R.adjoint() * R));
    if (project) K = 0.5 * (K + K.adjoint());
    return AuxiliaryHamiltonian(K, project ? 1e300 : 1e-8);
}

Cmps gauge_transform(const Cmps& state, const Matrix& G) {
    require(G.rows() == state.d && G.cols() == state.d, "G must be d x d");
    Eigen::JacobiSVD<Matrix> svd(G);
    const double smin = svd.singularValues()[svd.singularValues().size() - 1];
    const double smax = svd.singularValues()[0];
    if (!(smin > 1e-14 * smax) || smax == 0.0)
        throw std::invalid_argument("G is singular or too ill-conditioned (cond " +
                                    std::to_string(smax / std::max(smin, 1e-300)) + ")");
    Eigen::PartialPivLU<Matrix> lu(G);
    return Cmps(lu.solve(state.Q * G), lu.solve(state.R * G));
}

Cmps stationarize(const Cmps& state) {
    TransferMatrix tm = build_transfer(state);
    Eigen::ComplexEigenSolver<Matrix> es(tm.T, false);
    const double max_re = es.eigenvalues().real().maxCoeff();
    // T(Q - c 1, R) = T(Q, R) - 2c 1, so the shift on Q is half the spectral bound.
    Matrix Q = state.Q - (max_re / 2.0) * Matrix::Identity(state.d, state.d);
    return Cmps(std::move(Q), state.R);
}

bool is_real_eigenvalue(Complex z, double real_tol) {
    return std::abs(z.imag()) <= real_tol * (1.0 + std::abs(z));
}

SpectrumOrder order_spectrum(const std::vector<Complex>& evals, double real_tol) {
    const int p = static_cast<int>(evals.size());
    std::vector<int> reals, pos, neg;
    for (int k = 0; k < p; ++k) {
        if (is_real_eigenvalue(evals[k], real_tol)) reals.push_back(k);
        else if (evals[k].imag() > 0) pos.push_back(k);
        else neg.push_back(k);
    }
    // A spectrum closed under conjugation pairs every positive-Im eigenvalue
    // with a negative-Im partner; if the counts disagree, reclassify the
    // smallest-|Im| leftovers as real so that the ordering stays total.
    while (pos.size() != neg.size()) {
        auto& longer = pos.size() > neg.size() ? pos : neg;
        auto worst = std::min_element(longer.begin(), longer.end(), [&](int a, int b) {
            return std::abs(evals[a].imag()) < std::abs(evals[b].imag());
        });
        reals.push_back(*worst);
        longer.erase(worst);
    }
    std::sort(reals.begin(), reals.end(), [&](int a, int b) {
        if (evals[a].real() != evals[b].real()) return evals[a].real() > evals[b].real();
        return a < b;
    });

    std::vector<std::pair<int, int>> pairs;
    std::vector<bool> used(evals.size(), false);
    std::sort(pos.begin(), pos.end(), [&](int a, int b) {
        if (evals[a].real() != evals[b].real()) return evals[a].real() > evals[b].real();
        if (evals[a].imag() != evals[b].imag()) return evals[a].imag() < evals[b].imag();
        return a < b;
    });
    for (int k : pos) {
        int best = -1;
        double best_dist = 0;
        for (int m : neg) {
            if (used[m]) continue;
            const double dist = std::abs(std::conj(evals[k]) - evals[m]);
            if (best < 0 || dist < best_dist) {
                best = m;
                best_dist = dist;
            }
        }
        used[best] = true;
        pairs.emplace_back(k, best);
    }

    SpectrumOrder out;
    out.kappa = static_cast<int>(reals.size());
    out.perm = reals;
    for (auto& pr : pairs) {
        out.perm.push_back(pr.first);
        out.perm.push_back(pr.second);
    }
    return out;
}

} // namespace cmpstomo
