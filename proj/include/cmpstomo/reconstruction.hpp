#ifndef CMPSTOMO_RECONSTRUCTION_HPP
#define CMPSTOMO_RECONSTRUCTION_HPP

#include <optional>

#include "cmpstomo/spectral_estimation.hpp"

namespace cmpstomo {

/// The robust intermediate product of a reconstruction: ordered poles plus
/// the M matrix normalised to a first row of ones, with the density
/// Mhat11 kept separately. Sufficient to predict every density-like
/// n-point function; (Q,R) recovery needs pole_count = d^2 on top.
struct MDModel {
    int d = 0; // 0 when the pole count is not a perfect square
    std::vector<Complex> poles;
    Matrix M;
    double Mhat11 = 0.0;
    int kappa = 0;
    double symmetry_defect = 0.0;        // |Xi conj(M) Xi - M| relative
    std::vector<std::pair<int, int>> unknown_entries; // block-tolerant fills

    int pole_count() const { return static_cast<int>(poles.size()); }
    Matrix renormalized() const { return Mhat11 * M; }
};

struct GaugeNote {
    std::string phi = "phase fixed: leading diagonal entry of R real nonnegative";
    std::string chi = "shift fixed: Im Q(0,0) = 0";
};

struct QualityReport {
    double symmetry_defect = 0.0;
    double kron_defect = 0.0;
    double rms_fit_error_c3 = 0.0;
    double rms_fit_error_c2 = 0.0;
    double pairing_residual = 0.0;
    double gauge_residual = 0.0;     // K extraction only
    double hermiticity_defect = 0.0; // K extraction only
    std::string notes;
};

struct ReconstructedCmps {
    Matrix R_rec; // diagonal
    Matrix Q_rec;
    std::optional<Matrix> K_rec;
    GaugeNote gauge_note;
    QualityReport quality;
};

struct ExtractOptions {
    double match_rtol = 1e-3;      // pole matching across tensors
    double zero_tol = 1e-12;       // vanishing-denominator threshold
    bool block_tolerant = false;   // fill unknown M entries with zero
    double pair_rtol = 1e-2;       // Kronecker-spectrum pairing tolerance
    double kron_defect_threshold = std::numeric_limits<double>::infinity();
    double real_tol = 1e-9;
};

/// Builds the normalised (D, M) model from fitted residues. rm2 and higher
/// are optional refinements; with rm2 absent the 2-point residues come from
/// the 3-point marginal rho_{j,1}.
MDModel extract_M(const ResidueModel& rm3, const ResidueModel* rm2 = nullptr,
                  const ResidueModel* higher = nullptr, const ExtractOptions& opts = {});

/// Exact MDModel of a forward model; mirrors what a perfect estimation of
/// the correlators would deliver.
MDModel md_from_spectral(const SpectralData& sd);

/// Composes the n-point residue tensor from the 3- and 2-point content of M.
ResidueModel wick_predict(const MDModel& md, int n);

struct RExtraction {
    Matrix R_rec;            // diagonal d x d
    Matrix Y;                // eigenvector matrix of Mhat11 * M
    std::vector<int> order;  // permutation O: kron slot (i,j) -> eigen column
    double pairing_residual = 0.0;
    std::string note;
};

/// Diagonalises the renormalised M, identifies the spectrum {conj(r_i) r_j}
/// and the permutation onto conj(R) (x) R form; the reference eigenvalue is
/// made real nonnegative, fixing the overall phase of R.
RExtraction extract_R(const MDModel& md, const ExtractOptions& opts = {});

struct QExtraction {
    Matrix Q_rec;
    double kron_defect = 0.0;
};

/// Reads Q off the Kronecker-sum structure of (YO)^-1 (D - Mhat11 M) (YO),
/// fixing Im Q(0,0) = 0.
QExtraction extract_Q(const MDModel& md, const RExtraction& rx,
                      const ExtractOptions& opts = {});

struct KExtraction {
    Matrix K;
    double gauge_residual = 0.0;
    double hermiticity_defect = 0.0;
};

/// Gauge-transforms (Q,R) onto the manifold Q + Q^dag + R^dag R = 0 via the
/// left stationary eigenvector of T, then reads K = i(Q + R^dag R / 2).
/// Only eigenvalue differences of K are physical.
KExtraction extract_K(const Matrix& Q, const Matrix& R, int max_iter = 200,
                      double target_residual = 1e-10);

struct ReconstructOptions {
    Estimator estimator = Estimator::Ssmpm;
    int order = 0;             // 0: estimate from the Hankel spectrum
    double order_threshold = 1e-8;
    int pencil_P = 0;          // 0: default 0.4 N
    double overestimate = 1.0; // >1: estimate with ceil(f*order), then prune
    bool md_only = false;
    bool compute_K = true;
    ExtractOptions extract;
};

struct ReconstructionResult {
    MDModel md;
    std::optional<ReconstructedCmps> cmps;
    int estimated_order = 0;
};

/// Full pipeline: projection averaging, pole estimation, residue fits on the
/// supplied tensors, M extraction and, unless md_only, (Q,R[,K]) recovery.
ReconstructionResult reconstruct(const CorrelationTensor& c3,
                                 const CorrelationTensor* c2 = nullptr,
                                 const ReconstructOptions& opts = {});

struct ConsistencyReport {
    double rel_sup = 0.0;
    double rms = 0.0;
    bool pass = false;
    double threshold = 0.0;
};

/// Predicts the observed grid from the model and reports the deviation.
ConsistencyReport consistency_check(const MDModel& md, const CorrelationTensor& observed,
                                    double threshold = 1e-6);

} // namespace cmpstomo

#endif
