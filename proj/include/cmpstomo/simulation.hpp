#ifndef CMPSTOMO_SIMULATION_HPP
#define CMPSTOMO_SIMULATION_HPP

#include <cstdint>

#include "cmpstomo/reconstruction.hpp"

namespace cmpstomo {

/// Counter-seeded xoshiro256** stream with Box-Muller gaussians; identical
/// bits for identical seeds on every build of this project.
class Rng {
public:
    explicit Rng(std::uint64_t seed);
    std::uint64_t next_u64();
    double uniform01(); // in (0,1)
    double gauss();     // standard normal
    Complex cgauss(double mean, double sigma); // independent re/im parts

private:
    std::uint64_t s_[4];
    bool have_spare_ = false;
    double spare_ = 0.0;
};

/// Derives an independent stream seed from (master, stream, substream).
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream,
                          std::uint64_t substream = 0);

enum class EnsembleMode { NaiveQR, RefinedKR };

struct EnsembleSpec {
    int d = 2;
    EnsembleMode mode = EnsembleMode::RefinedKR;
    double mu = 0.0;
    double sigma = 1.0;
    double eta = 1.0;
    std::uint64_t seed = 0;
};

struct NoiseSpec {
    double snr = std::numeric_limits<double>::infinity();
    std::uint64_t seed = 0;
};

struct BenchmarkReport {
    double grid_value = 0.0;
    int trials = 0;
    double success_rate_mean_criterion = 0.0;
    double success_rate_max_criterion = 0.0;
    std::vector<double> error_quantiles; // of the mean relative error
    int failures = 0;                    // trials aborted by a pipeline error
    std::string config_echo;
};

struct BlockPartition {
    std::vector<int> visible; // ascending, always contains index 0
    std::vector<int> hidden;
    std::vector<int> permutation; // visible first, then hidden
};

Cmps random_cmps(const EnsembleSpec& spec);

/// Adds white gaussian noise with std = mean(|values|)/snr; the noise is
/// real when the tensor is real, complex (independent parts) otherwise.
CorrelationTensor add_noise(const CorrelationTensor& ct, const NoiseSpec& ns);

/// Symmetric perturbation M + eps * Delta with Xi conj(Delta) Xi = Delta and
/// an untouched first row.
Matrix perturb_M(const Matrix& M, int kappa, double eps, std::uint64_t seed);

/// Transfer matrix of a system coupled to a second field of strength eps,
/// shifted to stationarity.
TransferMatrix additional_field_transfer(const Matrix& K, const Matrix& R1,
                                         const Matrix& R2, double eps);

struct PoleErrors {
    double mean_rel = 0.0;
    double max_rel = 0.0;
};

/// Greedy-matches the sets and reports mean/max relative deviations over the
/// non-stationary poles.
PoleErrors pole_error(const std::vector<Complex>& true_poles,
                      const std::vector<Complex>& est_poles,
                      bool exclude_stationary);

enum class BenchmarkKind { NoiseSnr, PerturbM, AdditionalField };

struct BenchConfig {
    int n_samples = 200;            // 2-point sample count per trial
    Estimator estimator = Estimator::Ssmpm;
    double success_threshold = 0.1; // the 10% criteria
    double nyquist_factor = 0.5;    // dt = nyquist_factor * pi / omega_sup
    int threads = 0;                // 0: hardware, capped by CMPS_TOMO_THREADS
    ExtractOptions extract;
};

/// Seeded Monte Carlo sweep over the grid; one report per grid value,
/// deterministic for a fixed spec.seed regardless of thread count.
std::vector<BenchmarkReport> run_benchmark(BenchmarkKind kind,
                                           const std::vector<double>& grid,
                                           int trials, const EnsembleSpec& spec,
                                           const BenchConfig& config = {});

/// Sampling step respecting the Nyquist bound for the given pole set.
double nyquist_delta_tau(const std::vector<Complex>& poles, double factor = 0.5);

/// Splits indices into the block reachable from and reaching index 0 (the
/// visible block of M) and the complement.
BlockPartition detect_blocks(const Matrix& M, double tol);

struct LLStructureReport {
    double phi = 0.0;
    double chi = 0.0;
    int q_pairs = 0;
    int r_pairs = 0;
    int q_unpaired = 0;
    int r_unpaired = 0;
    std::vector<int> m_multiplicities; // cluster sizes, descending
    bool degeneracy_pattern = false;   // d simple + (d^2-d)/2 doubles
    BlockPartition blocks;
    int degenerate_pairs_split = 0; // pairs with one eigenvalue per block
    int degenerate_pairs_total = 0;
};

/// Applies the phase/shift normalisation and reports the pairing,
/// degeneracy and block structure characteristic of integrable states.
LLStructureReport analyze_ll_structure(const Cmps& state, double tol = 1e-6);

} // namespace cmpstomo

#endif
