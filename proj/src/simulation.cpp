#include "cmpstomo/simulation.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <functional>
#include <numeric>
#include <sstream>
#include <thread>

#include <Eigen/Eigenvalues>

namespace cmpstomo {

namespace {

std::uint64_t splitmix64(std::uint64_t& x) {
    x += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = x;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

std::uint64_t rotl(std::uint64_t v, int k) { return (v << k) | (v >> (64 - k)); }

} // namespace

Rng::Rng(std::uint64_t seed) {
    std::uint64_t x = seed;
    for (auto& s : s_) s = splitmix64(x);
}

std::uint64_t Rng::next_u64() {
    const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
}

double Rng::uniform01() {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
}

double Rng::gauss() {
    if (have_spare_) {
        have_spare_ = false;
        return spare_;
    }
    const double u1 = uniform01();
    const double u2 = uniform01();
    const double mag = std::sqrt(-2.0 * std::log(u1));
    spare_ = mag * std::sin(2.0 * M_PI * u2);
    have_spare_ = true;
    return mag * std::cos(2.0 * M_PI * u2);
}

Complex Rng::cgauss(double mean, double sigma) {
    const double re = mean + sigma * gauss();
    const double im = mean + sigma * gauss();
    return Complex(re, im);
}

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream, std::uint64_t substream) {
    std::uint64_t x = master;
    std::uint64_t a = splitmix64(x);
    x = a ^ (0x5851f42d4c957f2dULL * (stream + 1));
    a = splitmix64(x);
    x = a ^ (0x14057b7ef767814fULL * (substream + 1));
    return splitmix64(x);
}

Cmps random_cmps(const EnsembleSpec& spec) {
    require(spec.d >= 1, "bond dimension must be positive");
    require(spec.sigma >= 0.0, "sigma must be nonnegative");
    Rng rng(spec.seed);
    const int d = spec.d;
    Matrix Q(d, d), R(d, d);
    if (spec.mode == EnsembleMode::NaiveQR) {
        for (int i = 0; i < d; ++i)
            for (int j = 0; j < d; ++j) Q(i, j) = rng.cgauss(spec.mu, spec.sigma);
        for (int i = 0; i < d; ++i)
            for (int j = 0; j < d; ++j) R(i, j) = rng.cgauss(spec.mu, spec.sigma);
    } else {
        require(spec.eta > 0.0, "eta must be positive in refined mode");
        Matrix A(d, d);
        for (int i = 0; i < d; ++i)
            for (int j = 0; j < d; ++j) A(i, j) = rng.cgauss(spec.mu, spec.sigma);
        Matrix K = 0.5 * (A + A.adjoint());
        for (int i = 0; i < d; ++i)
            for (int j = 0; j < d; ++j) R(i, j) = rng.cgauss(spec.mu, spec.sigma);
        K *= spec.eta;
        R *= spec.eta;
        Q = q_from_kr(AuxiliaryHamiltonian(K), R);
    }
    return stationarize(Cmps(std::move(Q), std::move(R)));
}

CorrelationTensor add_noise(const CorrelationTensor& ct, const NoiseSpec& ns) {
    require(ns.snr > 0.0, "snr must be positive");
    if (std::isinf(ns.snr)) return ct;

    double mean_abs = 0.0, max_im = 0.0, max_re = 0.0;
    for (const Complex& v : ct.values) {
        mean_abs += std::abs(v);
        max_im = std::max(max_im, std::abs(v.imag()));
        max_re = std::max(max_re, std::abs(v.real()));
    }
    mean_abs /= static_cast<double>(ct.values.size());
    const double sigma = mean_abs / ns.snr;
    const bool real_signal = max_im <= 1e-10 * (1.0 + max_re);

    Rng rng(ns.seed);
    CorrelationTensor out = ct;
    for (auto& v : out.values) {
        if (real_signal)
            v += sigma * rng.gauss();
        else
            v += rng.cgauss(0.0, sigma);
    }
    return out;
}

Matrix perturb_M(const Matrix& M, int kappa, double eps, std::uint64_t seed) {
    const int p = static_cast<int>(M.rows());
    require(M.cols() == p, "M must be square");
    require(eps >= 0.0, "eps must be nonnegative");
    if (eps == 0.0) return M;

    const double mean_abs = M.cwiseAbs().mean();
    Rng rng(seed);
    Matrix delta0(p, p);
    for (int i = 0; i < p; ++i)
        for (int j = 0; j < p; ++j)
            delta0(i, j) = rng.cgauss(0.0, mean_abs / std::sqrt(2.0));
    delta0.row(0).setZero();

    std::vector<int> xi(static_cast<size_t>(p));
    for (int k = 0; k < kappa; ++k) xi[static_cast<size_t>(k)] = k;
    for (int k = kappa; k + 1 < p; k += 2) {
        xi[static_cast<size_t>(k)] = k + 1;
        xi[static_cast<size_t>(k + 1)] = k;
    }
    Matrix delta(p, p);
    for (int i = 0; i < p; ++i)
        for (int j = 0; j < p; ++j)
            delta(i, j) = 0.5 * (delta0(i, j) +
                                 std::conj(delta0(xi[static_cast<size_t>(i)],
                                                  xi[static_cast<size_t>(j)])));
    return M + eps * delta;
}

TransferMatrix additional_field_transfer(const Matrix& K, const Matrix& R1,
                                         const Matrix& R2, double eps) {
    const int d = static_cast<int>(K.rows());
    require(K.cols() == d, "K must be square");
    require(R1.rows() == d && R1.cols() == d && R2.rows() == d && R2.cols() == d,
            "dimension mismatch between K and the field operators");
    require(eps >= 0.0, "eps must be nonnegative");
    Matrix id = Matrix::Identity(d, d);
    auto dissipator = [&](const Matrix& R) -> Matrix {
        Matrix RdR = R.adjoint() * R;
        return 0.5 * (2.0 * kron(R.conjugate(), R) - kron(RdR.conjugate(), id) -
                      kron(id, RdR));
    };
    Matrix T = Complex(0, 1) * kron(K.conjugate(), id) -
               Complex(0, 1) * kron(id, K) + dissipator(R1) + eps * dissipator(R2);
    Eigen::ComplexEigenSolver<Matrix> es(T, false);
    T -= es.eigenvalues().real().maxCoeff() * Matrix::Identity(d * d, d * d);
    TransferMatrix tm;
    tm.T = std::move(T);
    tm.d = d;
    return tm;
}

PoleErrors pole_error(const std::vector<Complex>& true_poles,
                      const std::vector<Complex>& est_poles, bool exclude_stationary) {
    std::vector<Complex> ref = true_poles;
    std::vector<Complex> est = est_poles;
    if (exclude_stationary) {
        auto drop_max_re = [](std::vector<Complex>& v) {
            size_t top = 0;
            for (size_t k = 1; k < v.size(); ++k)
                if (v[k].real() > v[top].real()) top = k;
            v.erase(v.begin() + static_cast<std::ptrdiff_t>(top));
        };
        drop_max_re(ref);
        if (est.size() == ref.size() + 1) drop_max_re(est);
    }
    require(ref.size() == est.size(),
            "pole counts differ after optional stationary exclusion");

    struct Cand {
        double cost;
        int a, b;
    };
    const int p = static_cast<int>(ref.size());
    std::vector<Cand> cands;
    for (int a = 0; a < p; ++a)
        for (int b = 0; b < p; ++b)
            cands.push_back({std::abs(ref[static_cast<size_t>(a)] - est[static_cast<size_t>(b)]), a, b});
    std::sort(cands.begin(), cands.end(), [](const Cand& x, const Cand& y) {
        if (x.cost != y.cost) return x.cost < y.cost;
        if (x.a != y.a) return x.a < y.a;
        return x.b < y.b;
    });
    std::vector<bool> adone(static_cast<size_t>(p), false), bdone(static_cast<size_t>(p), false);
    PoleErrors pe;
    int matched = 0;
    for (const Cand& c : cands) {
        if (matched == p) break;
        if (adone[static_cast<size_t>(c.a)] || bdone[static_cast<size_t>(c.b)]) continue;
        adone[static_cast<size_t>(c.a)] = bdone[static_cast<size_t>(c.b)] = true;
        ++matched;
        const double rel = c.cost / std::max(std::abs(ref[static_cast<size_t>(c.a)]), 1e-300);
        pe.mean_rel += rel;
        pe.max_rel = std::max(pe.max_rel, rel);
    }
    pe.mean_rel /= std::max(1, p);
    return pe;
}

double nyquist_delta_tau(const std::vector<Complex>& poles, double factor) {
    double omega = 0.0;
    for (size_t k = 0; k < poles.size(); ++k)
        omega = std::max({omega, std::abs(poles[k].imag()), std::abs(poles[k].real())});
    if (omega < 1e-12) return 1.0;
    return factor * M_PI / omega;
}

namespace {

struct TrialOutcome {
    bool mean_ok = false;
    bool max_ok = false;
    bool failed = false;
    double mean_err = std::numeric_limits<double>::infinity();
};

TrialOutcome noise_trial(double snr, const EnsembleSpec& base, std::uint64_t seed,
                         const BenchConfig& cfg) {
    TrialOutcome out;
    try {
        EnsembleSpec spec = base;
        spec.seed = derive_seed(seed, 1);
        Cmps state = random_cmps(spec);
        SpectralData sd = spectral_decompose(build_transfer(state), state.R);
        const int p = sd.pole_count();
        if (p < 2) throw std::runtime_error("need d >= 2");

        const double dt = nyquist_delta_tau(sd.poles, cfg.nyquist_factor);
        CorrelationTensor c2 = sample(sd, 2, cfg.n_samples, dt);
        CorrelationTensor amp = amputate(c2, sd.density);
        NoiseSpec ns;
        ns.snr = snr;
        ns.seed = derive_seed(seed, 2);
        CorrelationTensor noisy = add_noise(amp, ns);

        PoleEstimate pe = estimate_poles(cfg.estimator, noisy.values, p - 1, dt);
        pe = symmetrize_conjugate_pairs(pe);
        PoleErrors err = pole_error(sd.poles, pe.lambdas, true);
        out.mean_err = err.mean_rel;
        out.mean_ok = err.mean_rel < cfg.success_threshold;
        out.max_ok = err.max_rel < cfg.success_threshold;
    } catch (const std::exception&) {
        out.failed = true;
    }
    return out;
}

TrialOutcome perturb_trial(double eps, const EnsembleSpec& base, std::uint64_t seed,
                           const BenchConfig& cfg) {
    TrialOutcome out;
    try {
        EnsembleSpec spec = base;
        spec.seed = derive_seed(seed, 1);
        Cmps state = random_cmps(spec);
        SpectralData sd = spectral_decompose(build_transfer(state), state.R);
        MDModel md = md_from_spectral(sd);
        md.M = perturb_M(md.M, md.kappa, eps, derive_seed(seed, 2));

        RExtraction rx = extract_R(md, cfg.extract);
        QExtraction qx = extract_Q(md, rx, cfg.extract);
        TransferMatrix rebuilt = build_transfer(Cmps(qx.Q_rec, rx.R_rec));
        Eigen::ComplexEigenSolver<Matrix> es(rebuilt.T, false);
        std::vector<Complex> est(static_cast<size_t>(es.eigenvalues().size()));
        for (Eigen::Index k = 0; k < es.eigenvalues().size(); ++k)
            est[static_cast<size_t>(k)] = es.eigenvalues()[k];

        // The criteria run over the non-stationary poles; drop the
        // stationary one from both sets before matching.
        std::vector<Complex> truth = sd.poles;
        int stat_true = 0;
        for (size_t k = 1; k < truth.size(); ++k)
            if (truth[k].real() > truth[static_cast<size_t>(stat_true)].real())
                stat_true = static_cast<int>(k);
        int stat_est = 0;
        for (size_t k = 1; k < est.size(); ++k)
            if (est[k].real() > est[static_cast<size_t>(stat_est)].real())
                stat_est = static_cast<int>(k);
        truth.erase(truth.begin() + stat_true);
        est.erase(est.begin() + stat_est);
        PoleErrors err = pole_error(truth, est, false);
        out.mean_err = err.mean_rel;
        out.mean_ok = err.mean_rel < cfg.success_threshold;
        out.max_ok = err.max_rel < cfg.success_threshold;
    } catch (const std::exception&) {
        out.failed = true;
    }
    return out;
}

TrialOutcome field_trial(double eps, const EnsembleSpec& base, std::uint64_t seed,
                         const BenchConfig& cfg) {
    TrialOutcome out;
    try {
        const int d = base.d;
        if (d < 2) throw std::runtime_error("need d >= 2 for K differences");
        Rng rng(derive_seed(seed, 1));
        Matrix A(d, d), R1(d, d), R2(d, d);
        for (int i = 0; i < d; ++i)
            for (int j = 0; j < d; ++j) A(i, j) = rng.cgauss(base.mu, base.sigma);
        Matrix K = 0.5 * (A + A.adjoint());
        for (int i = 0; i < d; ++i)
            for (int j = 0; j < d; ++j) R1(i, j) = rng.cgauss(base.mu, base.sigma);
        for (int i = 0; i < d; ++i)
            for (int j = 0; j < d; ++j) R2(i, j) = rng.cgauss(base.mu, base.sigma);

        TransferMatrix tm = additional_field_transfer(K, R1, R2, eps);
        SpectralData sd = spectral_decompose(tm, R1);
        MDModel md = md_from_spectral(sd);
        RExtraction rx = extract_R(md, cfg.extract);
        QExtraction qx = extract_Q(md, rx, cfg.extract);
        KExtraction kx = extract_K(qx.Q_rec, rx.R_rec);

        Eigen::SelfAdjointEigenSolver<Matrix> ktrue(K), krec(kx.K);
        // Density correlators leave the conjugation branch of (Q,R) open,
        // which negates the K spectrum and reverses its difference sequence;
        // judge against the better of the two orientations.
        double mean_err = std::numeric_limits<double>::infinity();
        double max_err = std::numeric_limits<double>::infinity();
        for (int flip = 0; flip < 2; ++flip) {
            double mean = 0.0, worst = 0.0;
            for (int j = 0; j + 1 < d; ++j) {
                const double dk = ktrue.eigenvalues()[j + 1] - ktrue.eigenvalues()[j];
                const int jj = flip ? d - 2 - j : j;
                const double dkr = krec.eigenvalues()[jj + 1] - krec.eigenvalues()[jj];
                const double rel = std::abs(dkr - dk) / std::max(std::abs(dk), 1e-300);
                mean += rel;
                worst = std::max(worst, rel);
            }
            mean /= (d - 1);
            if (worst < max_err) {
                max_err = worst;
                mean_err = mean;
            }
        }
        out.mean_err = mean_err;
        out.mean_ok = mean_err < cfg.success_threshold;
        out.max_ok = max_err < cfg.success_threshold;
    } catch (const std::exception&) {
        out.failed = true;
    }
    return out;
}

int thread_count(int requested) {
    int n = requested;
    if (n <= 0) {
        n = static_cast<int>(std::thread::hardware_concurrency());
        if (n <= 0) n = 1;
    }
    if (const char* env = std::getenv("CMPS_TOMO_THREADS")) {
        const int cap = std::atoi(env);
        if (cap >= 1) n = std::min(n, cap);
    }
    return n;
}

} // namespace

std::vector<BenchmarkReport> run_benchmark(BenchmarkKind kind,
                                           const std::vector<double>& grid, int trials,
                                           const EnsembleSpec& spec,
                                           const BenchConfig& config) {
    require(trials >= 1, "trials must be positive");
    require(!grid.empty(), "grid must not be empty");
    for (size_t g = 0; g < grid.size(); ++g) {
        if (kind == BenchmarkKind::NoiseSnr)
            require(grid[g] > 0.0, "SNR grid values must be positive");
        else
            require(grid[g] >= 0.0, "grid values must be nonnegative");
    }

    std::ostringstream echo;
    echo << "kind=" << (kind == BenchmarkKind::NoiseSnr      ? "noise_snr"
                        : kind == BenchmarkKind::PerturbM    ? "perturb_M"
                                                             : "additional_field")
         << " d=" << spec.d << " mode="
         << (spec.mode == EnsembleMode::NaiveQR ? "naive" : "refined")
         << " mu=" << spec.mu << " sigma=" << spec.sigma << " eta=" << spec.eta
         << " seed=" << spec.seed << " trials=" << trials
         << " n_samples=" << config.n_samples
         << " threshold=" << config.success_threshold;

    std::vector<BenchmarkReport> reports;
    for (size_t g = 0; g < grid.size(); ++g) {
        std::vector<TrialOutcome> outcomes(static_cast<size_t>(trials));
        std::atomic<int> cursor{0};
        const int nthreads = std::min(thread_count(config.threads), trials);
        auto worker = [&]() {
            for (;;) {
                const int t = cursor.fetch_add(1);
                if (t >= trials) break;
                const std::uint64_t seed = derive_seed(spec.seed, g, static_cast<std::uint64_t>(t));
                TrialOutcome o;
                switch (kind) {
                    case BenchmarkKind::NoiseSnr: o = noise_trial(grid[g], spec, seed, config); break;
                    case BenchmarkKind::PerturbM: o = perturb_trial(grid[g], spec, seed, config); break;
                    case BenchmarkKind::AdditionalField: o = field_trial(grid[g], spec, seed, config); break;
                }
                outcomes[static_cast<size_t>(t)] = o;
            }
        };
        std::vector<std::thread> pool;
        for (int t = 1; t < nthreads; ++t) pool.emplace_back(worker);
        worker();
        for (auto& th : pool) th.join();

        BenchmarkReport rep;
        rep.grid_value = grid[g];
        rep.trials = trials;
        rep.config_echo = echo.str();
        std::vector<double> errs;
        for (const TrialOutcome& o : outcomes) {
            if (o.failed) ++rep.failures;
            if (o.mean_ok) rep.success_rate_mean_criterion += 1.0;
            if (o.max_ok) rep.success_rate_max_criterion += 1.0;
            errs.push_back(o.mean_err);
        }
        rep.success_rate_mean_criterion /= trials;
        rep.success_rate_max_criterion /= trials;
        std::sort(errs.begin(), errs.end());
        for (double q : {0.05, 0.25, 0.5, 0.75, 0.95}) {
            const size_t ix = std::min(errs.size() - 1,
                                       static_cast<size_t>(q * static_cast<double>(errs.size())));
            rep.error_quantiles.push_back(errs[ix]);
        }
        reports.push_back(std::move(rep));
    }
    return reports;
}

BlockPartition detect_blocks(const Matrix& M, double tol) {
    const int p = static_cast<int>(M.rows());
    require(M.cols() == p, "M must be square");
    const double cutoff = tol * M.cwiseAbs().maxCoeff();

    // Edge a -> b when M(b,a) is nonzero: index a can feed index b inside a
    // residue chain. Visible indices close a loop through index 0.
    auto reach = [&](bool forward) {
        std::vector<bool> seen(static_cast<size_t>(p), false);
        std::vector<int> stack{0};
        seen[0] = true;
        while (!stack.empty()) {
            const int a = stack.back();
            stack.pop_back();
            for (int b = 0; b < p; ++b) {
                const double w = forward ? std::abs(M(b, a)) : std::abs(M(a, b));
                if (!seen[static_cast<size_t>(b)] && w > cutoff) {
                    seen[static_cast<size_t>(b)] = true;
                    stack.push_back(b);
                }
            }
        }
        return seen;
    };
    const std::vector<bool> fwd = reach(true);
    const std::vector<bool> bwd = reach(false);

    BlockPartition bp;
    for (int k = 0; k < p; ++k) {
        if (fwd[static_cast<size_t>(k)] && bwd[static_cast<size_t>(k)])
            bp.visible.push_back(k);
        else
            bp.hidden.push_back(k);
    }
    bp.permutation = bp.visible;
    bp.permutation.insert(bp.permutation.end(), bp.hidden.begin(), bp.hidden.end());
    return bp;
}

namespace {

// Pairs each eigenvalue with its best conjugate partner; returns the number
// of strict (non-real) pairs and of unpaired values.
void conj_pair_count(const std::vector<Complex>& vals, double tol, int& pairs, int& unpaired) {
    std::vector<bool> used(vals.size(), false);
    pairs = 0;
    unpaired = 0;
    for (size_t a = 0; a < vals.size(); ++a) {
        if (used[a]) continue;
        if (std::abs(vals[a].imag()) <= tol) {
            used[a] = true;
            continue; // real values pair with themselves
        }
        int best = -1;
        double best_d = 0;
        for (size_t b = a + 1; b < vals.size(); ++b) {
            if (used[b]) continue;
            const double dd = std::abs(std::conj(vals[a]) - vals[b]);
            if (best < 0 || dd < best_d) {
                best = static_cast<int>(b);
                best_d = dd;
            }
        }
        if (best >= 0 && best_d <= tol) {
            used[a] = used[static_cast<size_t>(best)] = true;
            ++pairs;
        } else {
            used[a] = true;
            ++unpaired;
        }
    }
}

std::vector<std::vector<int>> cluster_values(const std::vector<Complex>& vals, double tol) {
    std::vector<int> owner(vals.size());
    std::iota(owner.begin(), owner.end(), 0);
    std::function<int(int)> find = [&](int x) {
        while (owner[static_cast<size_t>(x)] != x) x = owner[static_cast<size_t>(x)] = owner[static_cast<size_t>(owner[static_cast<size_t>(x)])];
        return x;
    };
    for (size_t a = 0; a < vals.size(); ++a)
        for (size_t b = a + 1; b < vals.size(); ++b)
            if (std::abs(vals[a] - vals[b]) <= tol)
                owner[static_cast<size_t>(find(static_cast<int>(a)))] = find(static_cast<int>(b));
    std::vector<std::vector<int>> clusters;
    std::vector<int> where(vals.size(), -1);
    for (size_t a = 0; a < vals.size(); ++a) {
        const int root = find(static_cast<int>(a));
        if (where[static_cast<size_t>(root)] < 0) {
            where[static_cast<size_t>(root)] = static_cast<int>(clusters.size());
            clusters.emplace_back();
        }
        clusters[static_cast<size_t>(where[static_cast<size_t>(root)])].push_back(static_cast<int>(a));
    }
    return clusters;
}

} // namespace

LLStructureReport analyze_ll_structure(const Cmps& state, double tol) {
    LLStructureReport rep;
    const int d = state.d;

    // Normalisation: phi from det(R)^(1/d), chi from the mean imaginary part
    // of the Q spectrum; both leave every density-like correlator invariant.
    Eigen::ComplexEigenSolver<Matrix> esr(state.R, false);
    Eigen::ComplexEigenSolver<Matrix> esq(state.Q, false);
    const Complex detR = state.R.determinant();
    rep.phi = (std::abs(detR) > 0) ? std::arg(detR) / d : 0.0;
    double chi = 0.0;
    for (int k = 0; k < d; ++k) chi += esq.eigenvalues()[k].imag();
    rep.chi = chi / d;

    std::vector<Complex> rvals(static_cast<size_t>(d)), qvals(static_cast<size_t>(d));
    const Complex rphase = std::exp(Complex(0, -rep.phi));
    for (int k = 0; k < d; ++k) {
        rvals[static_cast<size_t>(k)] = esr.eigenvalues()[k] * rphase;
        qvals[static_cast<size_t>(k)] = esq.eigenvalues()[k] - Complex(0, rep.chi);
    }
    double rscale = 1e-300, qscale = 1e-300;
    for (auto z : rvals) rscale = std::max(rscale, std::abs(z));
    for (auto z : qvals) qscale = std::max(qscale, std::abs(z));
    conj_pair_count(rvals, tol * rscale, rep.r_pairs, rep.r_unpaired);
    conj_pair_count(qvals, tol * qscale, rep.q_pairs, rep.q_unpaired);

    SpectralData sd = spectral_decompose(build_transfer(state), state.R,
                                         SpectralOptions{0.0, 1e-9});
    std::vector<Complex> mvals(static_cast<size_t>(d * d));
    Eigen::ComplexEigenSolver<Matrix> esm(sd.M, false);
    double mscale = 1e-300;
    for (int k = 0; k < d * d; ++k) {
        mvals[static_cast<size_t>(k)] = esm.eigenvalues()[k];
        mscale = std::max(mscale, std::abs(mvals[static_cast<size_t>(k)]));
    }
    auto clusters = cluster_values(mvals, tol * mscale);
    for (auto& c : clusters) rep.m_multiplicities.push_back(static_cast<int>(c.size()));
    std::sort(rep.m_multiplicities.begin(), rep.m_multiplicities.end(), std::greater<int>());
    int singles = 0, doubles = 0;
    for (int m : rep.m_multiplicities) {
        if (m == 1) ++singles;
        if (m == 2) ++doubles;
    }
    rep.degeneracy_pattern = (singles == d) && (doubles == (d * d - d) / 2) &&
                             (singles + 2 * doubles == d * d);

    rep.blocks = detect_blocks(sd.M, tol);

    // A degenerate pair is split when one copy sits in each block spectrum.
    if (!rep.blocks.hidden.empty()) {
        auto submatrix = [&](const std::vector<int>& ix) {
            Matrix S(ix.size(), ix.size());
            for (size_t a = 0; a < ix.size(); ++a)
                for (size_t b = 0; b < ix.size(); ++b)
                    S(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) =
                        sd.M(ix[a], ix[b]);
            return S;
        };
        Eigen::ComplexEigenSolver<Matrix> e1(submatrix(rep.blocks.visible), false);
        Eigen::ComplexEigenSolver<Matrix> e2(submatrix(rep.blocks.hidden), false);
        for (const auto& c : clusters) {
            if (c.size() != 2) continue;
            ++rep.degenerate_pairs_total;
            const Complex v = mvals[static_cast<size_t>(c[0])];
            bool in1 = false, in2 = false;
            for (Eigen::Index k = 0; k < e1.eigenvalues().size(); ++k)
                if (std::abs(e1.eigenvalues()[k] - v) <= tol * mscale) in1 = true;
            for (Eigen::Index k = 0; k < e2.eigenvalues().size(); ++k)
                if (std::abs(e2.eigenvalues()[k] - v) <= tol * mscale) in2 = true;
            if (in1 && in2) ++rep.degenerate_pairs_split;
        }
    } else {
        for (const auto& c : clusters)
            if (c.size() == 2) ++rep.degenerate_pairs_total;
    }
    return rep;
}

} // namespace cmpstomo
