#ifndef CMPSTOMO_CORRELATORS_HPP
#define CMPSTOMO_CORRELATORS_HPP

#include <cstdint>

#include "cmpstomo/cmps.hpp"

namespace cmpstomo {

/// Spectral form of the forward model: ordered transfer-matrix eigenvalues
/// (the poles of every density-like correlator) together with
/// M = X^-1 (conj(R) (x) R) X in the same ordering. All residues are chain
/// products of M entries.
struct SpectralData {
    int d = 0;
    std::vector<Complex> poles; // d^2, stationary pole first
    Matrix M;                   // d^2 x d^2
    int kappa = 0;              // number of real poles
    double density = 0.0;       // <Psi^dag Psi> = M(0,0)

    int pole_count() const { return static_cast<int>(poles.size()); }
};

/// Uniformly sampled n-point correlator: values on an (n-1)-dimensional grid
/// with spacing delta_tau, stored row-major with the last index fastest.
struct CorrelationTensor {
    int n = 2;
    int N = 0;
    double delta_tau = 0.0;
    bool amputated = false;
    std::vector<Complex> values; // N^(n-1) entries

    std::int64_t size() const { return static_cast<std::int64_t>(values.size()); }
};

struct SpectralOptions {
    double degeneracy_rtol = 1e-8;
    double real_tol = 1e-9;
};

SpectralData spectral_decompose(const TransferMatrix& tm, const Matrix& R,
                                const SpectralOptions& opts = {});

/// Residue rho_{k1..k_{n-1}} = M(0,k_{n-1}) M(k_{n-1},k_{n-2}) ... M(k1,0),
/// indices zero-based into the ordered pole list.
Complex residue(const SpectralData& sd, const std::vector<int>& idx);

/// Exact n-point correlator at separations taus (n-1 entries, nonnegative).
Complex correlate(const SpectralData& sd, const std::vector<double>& taus);

/// Evaluates the full grid C(l1*dt, ..., l_{n-1}*dt) by per-axis pole-power
/// tables; cost O(N^{n-1} d^2) once N exceeds d^2, never the naive
/// d^{2(n-1)} sum per point.
CorrelationTensor sample(const SpectralData& sd, int n, int N, double delta_tau,
                         std::int64_t entry_cap = 1 << 26);

/// Subtracts the squared density from a 2-point tensor, removing the
/// stationary-pole contribution.
CorrelationTensor amputate(const CorrelationTensor& ct, double density);

/// Laplace transform L(s) = sum rho / prod (lambda_kj - s_j); diagnostic only.
Complex laplace_eval(const SpectralData& sd, const std::vector<Complex>& s);

/// Grid evaluation for an arbitrary (poles, M) pair; spectral_decompose and
/// the reconstruction pipeline both funnel through this.
CorrelationTensor sample_model(const std::vector<Complex>& poles, const Matrix& M,
                               int n, int N, double delta_tau,
                               std::int64_t entry_cap = 1 << 26);
Complex correlate_model(const std::vector<Complex>& poles, const Matrix& M,
                        const std::vector<double>& taus);

} // namespace cmpstomo

#endif
