#ifndef CMPSTOMO_SPECTRAL_ESTIMATION_HPP
#define CMPSTOMO_SPECTRAL_ESTIMATION_HPP

#include "cmpstomo/correlators.hpp"

namespace cmpstomo {

/// Shifted Hankel pair built from N uniform samples; the pencil
/// C2 - gamma C1 drops rank exactly at the exponentiated poles.
struct HankelPair {
    Matrix C1; // (N-P) x P, C1(j,k) = C_{j+k}
    Matrix C2; // (N-P) x P, C2(j,k) = C_{j+k+1}
    int N = 0;
    int P = 0;
};

struct PoleEstimate {
    std::vector<Complex> mus;     // exponentiated poles e^{lambda dt}
    std::vector<Complex> lambdas; // principal-branch logs / dt
    int order = 0;
    double delta_tau = 0.0;
    std::string note; // non-fatal diagnostics (fallbacks etc.)
};

/// Poles plus the residue tensor fitted on a sampled correlator.
struct ResidueModel {
    std::vector<Complex> poles;
    std::vector<Complex> mus;
    std::vector<Complex> residues; // order^(n-1), row-major, last index fastest
    int n = 2;
    int order = 0;
    double delta_tau = 0.0;
    double rms_fit_error = 0.0;
    double condition = 1.0; // Vandermonde design condition estimate

    Complex at(const std::vector<int>& idx) const;
};

enum class PronyVariant { Solve, Kernel };
enum class Estimator { Prony, PronyKernel, Mpm, Ssmpm };

HankelPair build_hankel(const std::vector<Complex>& samples, int P);

/// Default pencil parameter P = round(0.4 N), clamped to (order, N-order).
int default_pencil_parameter(int N, int order);

/// Number of singular values of C1 above rel_threshold * sigma_1.
int estimate_order(const HankelPair& hp, double rel_threshold);

PoleEstimate prony_poles(const std::vector<Complex>& samples, int order,
                         double delta_tau, PronyVariant variant = PronyVariant::Solve);

PoleEstimate mpm_poles(const HankelPair& hp, int order, double delta_tau);

/// State-space matrix pencil: joint SVD of (C1,C2), double rank truncation,
/// then an ordinary eigenvalue problem on the order x order blocks.
PoleEstimate ssmpm_poles(const HankelPair& hp, int order, double delta_tau);

PoleEstimate estimate_poles(Estimator which, const std::vector<Complex>& samples,
                            int order, double delta_tau, int P = 0);

/// Axis-projection averaging of an n-point tensor (n >= 3): sums out all but
/// one index per axis and adds the axes up, yielding a 2-point-like signal
/// with the same poles and reduced white noise.
std::vector<Complex> project_average(const CorrelationTensor& ct);

/// Least-squares residue fit: the design is the (n-1)-fold Kronecker power
/// of the per-axis Vandermonde matrix, solved mode by mode.
ResidueModel solve_residues(const PoleEstimate& poles, const CorrelationTensor& ct);

/// Enforces conjugation closure on an estimated pole set by greedily pairing
/// poles with their best conjugate partner and averaging each pair.
PoleEstimate symmetrize_conjugate_pairs(const PoleEstimate& pe, double real_tol = 1e-9);

/// Keeps the `target_order` poles with the largest fitted residue magnitude
/// on a 1-d signal; used after deliberate order overestimation.
PoleEstimate prune_poles_by_residue(const PoleEstimate& pe,
                                    const std::vector<Complex>& samples,
                                    int target_order);

std::vector<Complex> polynomial_roots(const std::vector<Complex>& coeffs);

} // namespace cmpstomo

#endif
