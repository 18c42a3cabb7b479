#include "cmpstomo/spectral_estimation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <Eigen/Eigenvalues>
#include <Eigen/QR>
#include <Eigen/SVD>

namespace cmpstomo {

Complex ResidueModel::at(const std::vector<int>& idx) const {
    require(static_cast<int>(idx.size()) == n - 1, "index length must be n-1");
    std::int64_t flat = 0;
    for (int k : idx) {
        require(k >= 0 && k < order, "residue index out of range");
        flat = flat * order + k;
    }
    return residues[static_cast<size_t>(flat)];
}

HankelPair build_hankel(const std::vector<Complex>& samples, int P) {
    const int N = static_cast<int>(samples.size());
    require(P >= 1 && P <= N - 1, "pencil parameter P out of range [1, N-1]");
    HankelPair hp;
    hp.N = N;
    hp.P = P;
    const int rows = N - P;
    hp.C1.resize(rows, P);
    hp.C2.resize(rows, P);
    for (int j = 0; j < rows; ++j)
        for (int k = 0; k < P; ++k) {
            hp.C1(j, k) = samples[static_cast<size_t>(j + k)];
            hp.C2(j, k) = samples[static_cast<size_t>(j + k + 1)];
        }
    return hp;
}

int default_pencil_parameter(int N, int order) {
    int P = static_cast<int>(std::lround(0.4 * N));
    P = std::max(P, order + 1);
    P = std::min(P, N - order - 1);
    require(P >= 1 && P <= N - 1, "too few samples for the requested order");
    return P;
}

int estimate_order(const HankelPair& hp, double rel_threshold) {
    require(rel_threshold > 0.0 && rel_threshold < 1.0, "rel_threshold must lie in (0,1)");
    if (hp.C1.cwiseAbs().maxCoeff() == 0.0)
        throw std::invalid_argument("Hankel matrix is identically zero");
    Eigen::JacobiSVD<Matrix> svd(hp.C1);
    const auto& sv = svd.singularValues();
    int count = 0;
    for (Eigen::Index k = 0; k < sv.size(); ++k)
        if (sv[k] > rel_threshold * sv[0]) ++count;
    return count;
}

namespace {

// Parlett-Reinsch balancing keeps the companion eigenproblem well scaled.
void balance(Matrix& A) {
    const Eigen::Index n = A.rows();
    bool converged = false;
    while (!converged) {
        converged = true;
        for (Eigen::Index i = 0; i < n; ++i) {
            double c = A.col(i).cwiseAbs().sum() - std::abs(A(i, i));
            double r = A.row(i).cwiseAbs().sum() - std::abs(A(i, i));
            if (c == 0.0 || r == 0.0) continue;
            double f = 1.0;
            const double s = c + r;
            while (c < r / 2.0) {
                c *= 2.0;
                r /= 2.0;
                f *= 2.0;
            }
            while (c > r * 2.0) {
                c /= 2.0;
                r *= 2.0;
                f /= 2.0;
            }
            if (c + r < 0.95 * s && f != 1.0) {
                converged = false;
                A.col(i) *= f;
                A.row(i) /= f;
            }
        }
    }
}

std::vector<Complex> lambdas_from_mus(const std::vector<Complex>& mus, double dt) {
    std::vector<Complex> out(mus.size());
    for (size_t k = 0; k < mus.size(); ++k) {
        Complex mu = mus[k];
        if (std::abs(mu) < 1e-300) mu = Complex(1e-300, 0);
        out[k] = std::log(mu) / dt;
    }
    return out;
}

} // namespace

std::vector<Complex> polynomial_roots(const std::vector<Complex>& coeffs) {
    require(coeffs.size() >= 2, "polynomial must have degree >= 1");
    const int deg = static_cast<int>(coeffs.size()) - 1;
    const Complex lead = coeffs.back();
    double maxc = 0;
    for (auto c : coeffs) maxc = std::max(maxc, std::abs(c));
    if (std::abs(lead) < 1e-14 * maxc)
        throw std::runtime_error("leading polynomial coefficient vanishes");
    Matrix C = Matrix::Zero(deg, deg);
    for (int i = 1; i < deg; ++i) C(i, i - 1) = 1.0;
    for (int i = 0; i < deg; ++i) C(i, deg - 1) = -coeffs[static_cast<size_t>(i)] / lead;
    balance(C);
    Eigen::ComplexEigenSolver<Matrix> es(C, false);
    if (es.info() != Eigen::Success)
        throw std::runtime_error("companion eigenvalue iteration failed");
    std::vector<Complex> roots(static_cast<size_t>(deg));
    for (int k = 0; k < deg; ++k) roots[static_cast<size_t>(k)] = es.eigenvalues()[k];
    return roots;
}

PoleEstimate prony_poles(const std::vector<Complex>& samples, int order,
                         double delta_tau, PronyVariant variant) {
    const int N = static_cast<int>(samples.size());
    require(order >= 1, "order must be positive");
    require(delta_tau > 0.0, "delta_tau must be positive");
    require(N >= 2 * order, "Prony needs at least 2*order samples");

    std::vector<Complex> coeffs(static_cast<size_t>(order) + 1);
    if (variant == PronyVariant::Solve) {
        // Hankel recurrence sum_l a_l C_{l+m} = -C_{order+m}, a_order = 1.
        const int rows = N - order;
        Matrix A(rows, order);
        Vector b(rows);
        for (int m = 0; m < rows; ++m) {
            for (int l = 0; l < order; ++l) A(m, l) = samples[static_cast<size_t>(m + l)];
            b[m] = -samples[static_cast<size_t>(m + order)];
        }
        Eigen::JacobiSVD<Matrix> svd(A, Eigen::ComputeThinU | Eigen::ComputeThinV);
        const double smax = svd.singularValues()[0];
        const double smin = svd.singularValues()[svd.singularValues().size() - 1];
        if (!(smax > 0.0) || smin < 1e-14 * smax)
            throw std::runtime_error("Prony Hankel system numerically singular (cond " +
                                     std::to_string(smax / std::max(smin, 1e-300)) + ")");
        Vector a = svd.solve(b);
        for (int l = 0; l < order; ++l) coeffs[static_cast<size_t>(l)] = a[l];
        coeffs[static_cast<size_t>(order)] = 1.0;
    } else {
        // Kernel variant: smallest right singular vector of the
        // (order+1)-column Hankel matrix, scale-invariant.
        const int rows = N - order;
        Matrix H(rows, order + 1);
        for (int m = 0; m < rows; ++m)
            for (int l = 0; l <= order; ++l) H(m, l) = samples[static_cast<size_t>(m + l)];
        Eigen::JacobiSVD<Matrix> svd(H, Eigen::ComputeThinU | Eigen::ComputeFullV);
        Vector a = svd.matrixV().col(order);
        for (int l = 0; l <= order; ++l) coeffs[static_cast<size_t>(l)] = a[l];
    }

    PoleEstimate pe;
    pe.order = order;
    pe.delta_tau = delta_tau;
    pe.mus = polynomial_roots(coeffs);
    pe.lambdas = lambdas_from_mus(pe.mus, delta_tau);
    return pe;
}

PoleEstimate mpm_poles(const HankelPair& hp, int order, double delta_tau) {
    require(order >= 1, "order must be positive");
    require(delta_tau > 0.0, "delta_tau must be positive");
    require(hp.P > order && hp.N - hp.P > order, "need N-P, P > order");

    Eigen::JacobiSVD<Matrix> svd(hp.C1, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const auto& sv = svd.singularValues();
    int rank = 0;
    for (Eigen::Index k = 0; k < sv.size(); ++k)
        if (sv[k] > 1e-13 * sv[0]) ++rank;
    if (rank < order)
        throw std::runtime_error("Hankel matrix rank " + std::to_string(rank) +
                                 " below requested order " + std::to_string(order));

    // Pseudoinverse truncated at the model order: with noisy data the full
    // pinv promotes noise directions to dominant eigenvalues, while the
    // rank-`order` version leaves the exponentiated poles as the only
    // nonzero spectrum.
    rank = order;
    Matrix pinvC2 = svd.matrixV().leftCols(rank) *
                    sv.head(rank).cwiseInverse().asDiagonal() *
                    (svd.matrixU().leftCols(rank).adjoint() * hp.C2);
    Eigen::ComplexEigenSolver<Matrix> es(pinvC2, false);
    std::vector<Complex> evs(static_cast<size_t>(es.eigenvalues().size()));
    for (Eigen::Index k = 0; k < es.eigenvalues().size(); ++k)
        evs[static_cast<size_t>(k)] = es.eigenvalues()[k];
    std::sort(evs.begin(), evs.end(),
              [](Complex a, Complex b) { return std::abs(a) > std::abs(b); });
    evs.resize(static_cast<size_t>(order));

    PoleEstimate pe;
    pe.order = order;
    pe.delta_tau = delta_tau;
    pe.mus = std::move(evs);
    pe.lambdas = lambdas_from_mus(pe.mus, delta_tau);
    return pe;
}

PoleEstimate ssmpm_poles(const HankelPair& hp, int order, double delta_tau) {
    require(order >= 1, "order must be positive");
    require(delta_tau > 0.0, "delta_tau must be positive");
    require(hp.P > order && hp.N - hp.P > order, "need N-P, P > order");
    const int P = hp.P;

    Matrix joint(hp.C1.rows(), 2 * P);
    joint << hp.C1, hp.C2;
    Eigen::JacobiSVD<Matrix> svd1(joint, Eigen::ComputeThinV);
    if (svd1.matrixV().cols() < order)
        throw std::runtime_error("joint SVD rank below requested order");
    Matrix VT = svd1.matrixV().leftCols(order); // 2P x order
    Matrix V1 = VT.topRows(P);
    Matrix V2 = VT.bottomRows(P);

    Matrix joint2(P, 2 * order);
    joint2 << V1, V2;
    Eigen::JacobiSVD<Matrix> svd2(joint2, Eigen::ComputeThinV);
    Matrix VTp = svd2.matrixV().leftCols(order); // 2*order x order
    Matrix V1p = VTp.topRows(order);
    Matrix V2p = VTp.bottomRows(order);

    PoleEstimate pe;
    pe.order = order;
    pe.delta_tau = delta_tau;

    Eigen::PartialPivLU<Matrix> lu(V1p);
    Matrix pencil;
    if (lu.rcond() > 1e-13) {
        pencil = lu.solve(V2p);
    } else {
        pencil = V1p.completeOrthogonalDecomposition().solve(V2p);
        pe.note = "truncated block singular; used pseudoinverse";
    }
    Eigen::ComplexEigenSolver<Matrix> es(pencil, false);
    pe.mus.resize(static_cast<size_t>(order));
    for (int k = 0; k < order; ++k) pe.mus[static_cast<size_t>(k)] = es.eigenvalues()[k];
    pe.lambdas = lambdas_from_mus(pe.mus, delta_tau);
    return pe;
}

PoleEstimate estimate_poles(Estimator which, const std::vector<Complex>& samples,
                            int order, double delta_tau, int P) {
    switch (which) {
        case Estimator::Prony:
            return prony_poles(samples, order, delta_tau, PronyVariant::Solve);
        case Estimator::PronyKernel:
            return prony_poles(samples, order, delta_tau, PronyVariant::Kernel);
        case Estimator::Mpm: {
            const int N = static_cast<int>(samples.size());
            HankelPair hp = build_hankel(samples, P > 0 ? P : default_pencil_parameter(N, order));
            return mpm_poles(hp, order, delta_tau);
        }
        case Estimator::Ssmpm: {
            const int N = static_cast<int>(samples.size());
            HankelPair hp = build_hankel(samples, P > 0 ? P : default_pencil_parameter(N, order));
            return ssmpm_poles(hp, order, delta_tau);
        }
    }
    throw std::invalid_argument("unknown estimator");
}

std::vector<Complex> project_average(const CorrelationTensor& ct) {
    require(ct.n >= 3, "projection averaging needs n >= 3");
    const int axes = ct.n - 1;
    const int N = ct.N;
    std::vector<Complex> hat(static_cast<size_t>(N), Complex(0, 0));
    std::vector<int> idx(static_cast<size_t>(axes), 0);
    for (std::int64_t flat = 0; flat < ct.size(); ++flat) {
        std::int64_t rem = flat;
        for (int a = axes - 1; a >= 0; --a) {
            idx[static_cast<size_t>(a)] = static_cast<int>(rem % N);
            rem /= N;
        }
        const Complex v = ct.values[static_cast<size_t>(flat)];
        for (int a = 0; a < axes; ++a) hat[static_cast<size_t>(idx[static_cast<size_t>(a)])] += v;
    }
    return hat;
}

ResidueModel solve_residues(const PoleEstimate& poles, const CorrelationTensor& ct) {
    require(!poles.mus.empty(), "pole estimate is empty");
    require(std::abs(poles.delta_tau - ct.delta_tau) <=
                1e-12 * std::max(1.0, std::abs(ct.delta_tau)),
            "mismatched delta_tau between poles and tensor");
    const int p = static_cast<int>(poles.mus.size());
    const int N = ct.N;
    const int axes = ct.n - 1;

    Matrix V(N, p);
    for (int k = 0; k < p; ++k) {
        Complex acc = 1.0;
        for (int l = 0; l < N; ++l) {
            V(l, k) = acc;
            acc *= poles.mus[static_cast<size_t>(k)];
        }
    }
    Eigen::JacobiSVD<Matrix> svd(V, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const auto& sv = svd.singularValues();
    const double cond = sv[0] / std::max(sv[sv.size() - 1], 1e-300);

    // Mode-by-mode least squares; the Kronecker pseudoinverse factorises.
    std::vector<Complex> work(ct.values);
    std::int64_t lead = 1;
    for (int a = 0; a < axes - 1; ++a) lead *= N;
    std::int64_t trail = 1;
    std::vector<Complex> next;
    for (int a = axes - 1; a >= 0; --a) {
        // Axis a has stride `trail` and there are lead*trail fibers.
        next.assign(static_cast<size_t>(lead * static_cast<std::int64_t>(p) * trail), Complex(0, 0));
        Vector fiber(N);
        for (std::int64_t hi = 0; hi < lead; ++hi)
            for (std::int64_t lo = 0; lo < trail; ++lo) {
                for (int l = 0; l < N; ++l)
                    fiber[l] = work[static_cast<size_t>((hi * N + l) * trail + lo)];
                Vector sol = svd.solve(fiber);
                for (int k = 0; k < p; ++k)
                    next[static_cast<size_t>((hi * p + k) * trail + lo)] = sol[k];
            }
        work.swap(next);
        trail *= p;
        lead /= (a > 0) ? N : 1;
    }

    ResidueModel rm;
    rm.poles = poles.lambdas;
    rm.mus = poles.mus;
    rm.residues = std::move(work);
    rm.n = ct.n;
    rm.order = p;
    rm.delta_tau = ct.delta_tau;
    rm.condition = std::pow(cond, axes);

    // Fit quality: push the residues back through the design.
    std::vector<Complex> recon(rm.residues);
    std::int64_t lead2 = 1;
    for (int a = 0; a < axes - 1; ++a) lead2 *= p;
    std::int64_t trail2 = 1;
    for (int a = axes - 1; a >= 0; --a) {
        next.assign(static_cast<size_t>(lead2 * static_cast<std::int64_t>(N) * trail2), Complex(0, 0));
        Vector fiber(p);
        for (std::int64_t hi = 0; hi < lead2; ++hi)
            for (std::int64_t lo = 0; lo < trail2; ++lo) {
                for (int k = 0; k < p; ++k)
                    fiber[k] = recon[static_cast<size_t>((hi * p + k) * trail2 + lo)];
                Vector out = V * fiber;
                for (int l = 0; l < N; ++l)
                    next[static_cast<size_t>((hi * N + l) * trail2 + lo)] = out[l];
            }
        recon.swap(next);
        trail2 *= N;
        lead2 /= (a > 0) ? p : 1;
    }
    double acc = 0.0;
    for (size_t i = 0; i < recon.size(); ++i) {
        const double dv = std::abs(recon[i] - ct.values[i]);
        acc += dv * dv;
    }
    rm.rms_fit_error = std::sqrt(acc / static_cast<double>(recon.size()));
    return rm;
}

PoleEstimate symmetrize_conjugate_pairs(const PoleEstimate& pe, double real_tol) {
    (void)real_tol; // self-pairs zero the imaginary part outright
    const int p = static_cast<int>(pe.lambdas.size());
    std::vector<Complex> out(pe.lambdas);
    std::vector<bool> done(static_cast<size_t>(p), false);

    struct Cand {
        double cost;
        int a, b;
    };
    std::vector<Cand> cands;
    for (int a = 0; a < p; ++a)
        for (int b = a; b < p; ++b)
            cands.push_back({std::abs(out[static_cast<size_t>(a)] -
                                      std::conj(out[static_cast<size_t>(b)])),
                             a, b});
    std::sort(cands.begin(), cands.end(), [](const Cand& x, const Cand& y) {
        if (x.cost != y.cost) return x.cost < y.cost;
        if (x.a != y.a) return x.a < y.a;
        return x.b < y.b;
    });
    for (const Cand& c : cands) {
        if (done[static_cast<size_t>(c.a)] || done[static_cast<size_t>(c.b)]) continue;
        if (c.a == c.b) {
            // (lambda + conj(lambda))/2: a self-paired pole is declared real.
            out[static_cast<size_t>(c.a)] = Complex(out[static_cast<size_t>(c.a)].real(), 0.0);
            done[static_cast<size_t>(c.a)] = true;
        } else {
            const Complex mean =
                0.5 * (out[static_cast<size_t>(c.a)] + std::conj(out[static_cast<size_t>(c.b)]));
            out[static_cast<size_t>(c.a)] = mean;
            out[static_cast<size_t>(c.b)] = std::conj(mean);
            done[static_cast<size_t>(c.a)] = done[static_cast<size_t>(c.b)] = true;
        }
    }

    PoleEstimate res = pe;
    res.lambdas = std::move(out);
    for (int k = 0; k < p; ++k)
        res.mus[static_cast<size_t>(k)] =
            std::exp(res.lambdas[static_cast<size_t>(k)] * pe.delta_tau);
    return res;
}

PoleEstimate prune_poles_by_residue(const PoleEstimate& pe,
                                    const std::vector<Complex>& samples,
                                    int target_order) {
    require(target_order >= 1 && target_order <= pe.order,
            "target order out of range");
    CorrelationTensor ct;
    ct.n = 2;
    ct.N = static_cast<int>(samples.size());
    ct.delta_tau = pe.delta_tau;
    ct.values = samples;
    ResidueModel rm = solve_residues(pe, ct);

    std::vector<int> idx(static_cast<size_t>(pe.order));
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](int a, int b) {
        return std::abs(rm.residues[static_cast<size_t>(a)]) >
               std::abs(rm.residues[static_cast<size_t>(b)]);
    });
    idx.resize(static_cast<size_t>(target_order));
    std::sort(idx.begin(), idx.end());

    PoleEstimate out;
    out.order = target_order;
    out.delta_tau = pe.delta_tau;
    out.note = pe.note;
    for (int k : idx) {
        out.mus.push_back(pe.mus[static_cast<size_t>(k)]);
        out.lambdas.push_back(pe.lambdas[static_cast<size_t>(k)]);
    }
    return out;
}

} // namespace cmpstomo
