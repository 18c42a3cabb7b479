#ifndef CMPSTOMO_CMPS_HPP
#define CMPSTOMO_CMPS_HPP

#include <optional>

#include "cmpstomo/types.hpp"

namespace cmpstomo {

/// Translationally invariant cMPS in the thermodynamic limit, parameterised
/// by the variational matrices Q and R on the d-dimensional auxiliary space.
struct Cmps {
    int d = 0;
    Matrix Q;
    Matrix R;

    Cmps() = default;
    Cmps(Matrix Q_, Matrix R_);
};

/// Hermitian generator K of the auxiliary-space evolution, with
/// Q = -iK - (1/2) R^dag R.
struct AuxiliaryHamiltonian {
    Matrix K;

    explicit AuxiliaryHamiltonian(Matrix K_, double tol = 1e-12);
};

/// Transfer matrix T = conj(Q) (x) 1 + 1 (x) Q + conj(R) (x) R of size d^2.
struct TransferMatrix {
    Matrix T;
    int d = 0;
};

/// Permutation maps encoding the conjugation symmetries of the spectrum:
/// Lambda swaps the Kronecker factors, Xi pairs complex-conjugate eigenvalue
/// slots once the spectrum is in canonical order (kappa real ones first).
struct SymmetryMaps {
    int d = 0;
    int kappa = 0;
    Eigen::VectorXi lambda_perm; // index map (i,j) -> (j,i), size d^2
    Eigen::VectorXi xi_perm;     // identity on the first kappa, 2-swaps after

    SymmetryMaps(int d_, int kappa_);

    Matrix lambda_matrix() const;
    Matrix xi_matrix() const;
};

Matrix kron(const Matrix& A, const Matrix& B);

/// Applies Lambda * conj(v) entrywise, i.e. the antilinear map fixing T.
Vector lambda_conj(const Vector& v, int d);

TransferMatrix build_transfer(const Cmps& state);

Matrix q_from_kr(const AuxiliaryHamiltonian& K, const Matrix& R);

/// Inverse of q_from_kr on the gauge manifold Q + Q^dag + R^dag R = 0.
/// Off the manifold the call is rejected unless `project` is set, in which
/// case the Hermitian projection i(Q + R^dag R / 2 + h.c.)/2 is returned.
AuxiliaryHamiltonian k_from_qr(const Matrix& Q, const Matrix& R,
                               double tol = 1e-10, bool project = false);

Cmps gauge_transform(const Cmps& state, const Matrix& G);

/// Shifts Q by a real multiple of the identity so that the transfer
/// spectrum has maximal real part zero.
Cmps stationarize(const Cmps& state);

/// Canonical ordering of a transfer spectrum: the stationary eigenvalue
/// (largest real part) first, remaining real eigenvalues by descending real
/// part, then conjugate pairs by descending real part with the positive
/// imaginary member first. Returns the permutation and the real count kappa.
struct SpectrumOrder {
    std::vector<int> perm;
    int kappa = 0;
};
SpectrumOrder order_spectrum(const std::vector<Complex>& evals,
                             double real_tol = 1e-9);

/// Tolerance used to classify an eigenvalue as real: |Im| <= tol * (1+|z|).
bool is_real_eigenvalue(Complex z, double real_tol = 1e-9);

} // namespace cmpstomo

#endif
