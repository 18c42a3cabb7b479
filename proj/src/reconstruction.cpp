#include "cmpstomo/reconstruction.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include <Eigen/Eigenvalues>
#include <Eigen/LU>

namespace cmpstomo {

namespace {

double pole_scale(const std::vector<Complex>& a, const std::vector<Complex>& b) {
    double s = 0.0;
    for (auto z : a) s = std::max(s, std::abs(z));
    for (auto z : b) s = std::max(s, std::abs(z));
    return std::max(s, 1e-300);
}

// Greedy minimal-distance assignment between two equally sized sets;
// returns map[i] = index in `to` matched with from[i].
std::vector<int> greedy_match(const std::vector<Complex>& from,
                              const std::vector<Complex>& to) {
    require(from.size() == to.size(), "pole sets differ in size");
    const int p = static_cast<int>(from.size());
    struct Cand {
        double cost;
        int a, b;
    };
    std::vector<Cand> cands;
    cands.reserve(static_cast<size_t>(p) * p);
    for (int a = 0; a < p; ++a)
        for (int b = 0; b < p; ++b)
            cands.push_back({std::abs(from[static_cast<size_t>(a)] - to[static_cast<size_t>(b)]), a, b});
    std::sort(cands.begin(), cands.end(), [](const Cand& x, const Cand& y) {
        if (x.cost != y.cost) return x.cost < y.cost;
        if (x.a != y.a) return x.a < y.a;
        return x.b < y.b;
    });
    std::vector<int> map(static_cast<size_t>(p), -1);
    std::vector<bool> used(static_cast<size_t>(p), false);
    int placed = 0;
    for (const Cand& c : cands) {
        if (placed == p) break;
        if (map[static_cast<size_t>(c.a)] >= 0 || used[static_cast<size_t>(c.b)]) continue;
        map[static_cast<size_t>(c.a)] = c.b;
        used[static_cast<size_t>(c.b)] = true;
        ++placed;
    }
    return map;
}

// Reorders a residue tensor by applying `perm` (new index -> old index)
// to every axis.
std::vector<Complex> permute_tensor(const std::vector<Complex>& t, int p, int axes,
                                    const std::vector<int>& perm) {
    std::vector<Complex> out(t.size());
    std::vector<int> idx(static_cast<size_t>(axes), 0);
    const std::int64_t total = static_cast<std::int64_t>(t.size());
    for (std::int64_t flat = 0; flat < total; ++flat) {
        std::int64_t rem = flat, src = 0;
        for (int a = axes - 1; a >= 0; --a) {
            idx[static_cast<size_t>(a)] = static_cast<int>(rem % p);
            rem /= p;
        }
        for (int a = 0; a < axes; ++a)
            src = src * p + perm[static_cast<size_t>(idx[static_cast<size_t>(a)])];
        out[static_cast<size_t>(flat)] = t[static_cast<size_t>(src)];
    }
    return out;
}

double symmetry_defect_of(const Matrix& M, int kappa, int d_for_maps) {
    SymmetryMaps maps(d_for_maps, kappa);
    const int p = static_cast<int>(M.rows());
    double defect = 0.0;
    for (int i = 0; i < p; ++i)
        for (int j = 0; j < p; ++j)
            defect = std::max(defect,
                              std::abs(std::conj(M(maps.xi_perm[i], maps.xi_perm[j])) - M(i, j)));
    return defect / std::max(1.0, M.cwiseAbs().maxCoeff());
}

// Xi conj(.) Xi defect for a pole list that may not have square count: build
// the permutation directly from kappa.
std::vector<int> xi_perm_for(int p, int kappa) {
    std::vector<int> xi(static_cast<size_t>(p));
    for (int k = 0; k < kappa; ++k) xi[static_cast<size_t>(k)] = k;
    for (int k = kappa; k + 1 < p; k += 2) {
        xi[static_cast<size_t>(k)] = k + 1;
        xi[static_cast<size_t>(k + 1)] = k;
    }
    if ((p - kappa) % 2 != 0) xi[static_cast<size_t>(p - 1)] = p - 1;
    return xi;
}

} // namespace

MDModel md_from_spectral(const SpectralData& sd) {
    const int p = sd.pole_count();
    MDModel md;
    md.d = sd.d;
    md.poles = sd.poles;
    md.kappa = sd.kappa;
    md.Mhat11 = sd.density;
    require(md.Mhat11 > 0, "density must be positive");
    for (int j = 0; j < p; ++j)
        if (std::abs(sd.M(0, j)) == 0.0)
            throw std::runtime_error("M has a vanishing first-row entry; "
                                     "normalisation impossible (hidden block?)");
    md.M.resize(p, p);
    for (int i = 0; i < p; ++i)
        for (int j = 0; j < p; ++j)
            md.M(i, j) = sd.M(i, j) * sd.M(0, i) / (sd.M(0, j) * sd.density);
    md.M.row(0).setOnes();
    md.symmetry_defect = symmetry_defect_of(md.M, md.kappa, md.d);
    return md;
}

MDModel extract_M(const ResidueModel& rm3, const ResidueModel* rm2,
                  const ResidueModel* higher, const ExtractOptions& opts) {
    require(rm3.n == 3, "rm3 must be a 3-point residue model");
    if (rm2) require(rm2->n == 2, "rm2 must be a 2-point residue model");
    if (higher) require(higher->n > 3, "higher must have n > 3");
    const int p = rm3.order;

    // Canonical pole order: stationary first, then the conjugate structure.
    SpectrumOrder order = order_spectrum(rm3.poles, opts.real_tol);
    MDModel md;
    md.poles.resize(static_cast<size_t>(p));
    for (int k = 0; k < p; ++k) md.poles[static_cast<size_t>(k)] = rm3.poles[static_cast<size_t>(order.perm[k])];
    md.kappa = order.kappa;

    std::vector<Complex> r3 = permute_tensor(rm3.residues, p, 2, order.perm);

    std::vector<Complex> r2;
    if (rm2) {
        const double scale = pole_scale(md.poles, rm2->poles);
        std::vector<int> match = greedy_match(md.poles, rm2->poles);
        for (int k = 0; k < p; ++k) {
            const double dist = std::abs(md.poles[static_cast<size_t>(k)] -
                                         rm2->poles[static_cast<size_t>(match[static_cast<size_t>(k)])]);
            if (dist > opts.match_rtol * scale) {
                std::ostringstream os;
                os << "pole sets of the 2- and 3-point models disagree: pole " << k
                   << " mismatch " << dist << " exceeds tolerance " << opts.match_rtol * scale;
                throw std::runtime_error(os.str());
            }
        }
        r2.resize(static_cast<size_t>(p));
        for (int k = 0; k < p; ++k)
            r2[static_cast<size_t>(k)] = rm2->residues[static_cast<size_t>(match[static_cast<size_t>(k)])];
    }

    std::vector<Complex> rh;
    int hn = 0;
    std::vector<int> hmatch;
    if (higher) {
        hn = higher->n;
        require(higher->order == p, "higher-order model has a different pole count");
        const double scale = pole_scale(md.poles, higher->poles);
        hmatch = greedy_match(md.poles, higher->poles);
        for (int k = 0; k < p; ++k)
            if (std::abs(md.poles[static_cast<size_t>(k)] -
                         higher->poles[static_cast<size_t>(hmatch[static_cast<size_t>(k)])]) >
                opts.match_rtol * scale)
                throw std::runtime_error("pole sets of the 3-point and higher-order models disagree");
        rh = permute_tensor(higher->residues, p, hn - 1, hmatch);
    }

    // Density Mhat11 from rho_{1,...,1} = Mhat11^n; prefer the 2-point model.
    double density;
    if (rm2) {
        const Complex r0 = r2[0];
        if (!(r0.real() > 0.0))
            throw std::runtime_error("stationary 2-point residue is not positive; "
                                     "cannot recover the density");
        density = std::sqrt(r0.real());
    } else {
        const Complex r0 = r3[0];
        if (!(r0.real() > 0.0))
            throw std::runtime_error("stationary 3-point residue is not positive; "
                                     "cannot recover the density");
        density = std::cbrt(r0.real());
    }
    md.Mhat11 = density;

    // Normalised residues: rho' = rho / density^n, making M_{1,j} = 1.
    const double n3 = density * density * density;
    for (auto& v : r3) v /= n3;
    if (rm2)
        for (auto& v : r2) v /= density * density;
    if (higher) {
        const double nh = std::pow(density, hn);
        for (auto& v : rh) v /= nh;
    }

    double max3 = 0.0;
    for (auto& v : r3) max3 = std::max(max3, std::abs(v));
    double max2 = 0.0;
    for (auto& v : r2) max2 = std::max(max2, std::abs(v));
    double maxh = 0.0;
    for (auto& v : rh) maxh = std::max(maxh, std::abs(v));

    md.M.resize(p, p);
    std::vector<std::pair<int, int>> unknown;
    for (int i = 0; i < p; ++i) {
        for (int j = 0; j < p; ++j) {
            Complex acc = 0.0;
            int count = 0;
            // rho^(3)_{j,i} / rho^(2)_j with normalised residues.
            {
                const Complex num = r3[static_cast<size_t>(j * p + i)];
                const Complex den = rm2 ? r2[static_cast<size_t>(j)]
                                        : r3[static_cast<size_t>(j * p + 0)];
                const double dscale = rm2 ? max2 : max3;
                if (std::abs(den) > opts.zero_tol * dscale) {
                    acc += num / den;
                    ++count;
                }
            }
            if (higher) {
                // rho^(n)_{k...,j,i} / rho^(n)_{k...,j,1} over all leading k.
                std::int64_t lead = 1;
                for (int a = 0; a < hn - 3; ++a) lead *= p;
                for (std::int64_t kflat = 0; kflat < lead; ++kflat) {
                    const std::int64_t base = (kflat * p + j) * p;
                    const Complex num = rh[static_cast<size_t>(base + i)];
                    const Complex den = rh[static_cast<size_t>(base + 0)];
                    if (std::abs(den) > opts.zero_tol * maxh) {
                        acc += num / den;
                        ++count;
                    }
                }
            }
            if (count == 0) {
                if (!opts.block_tolerant) {
                    std::ostringstream os;
                    os << "all ratio prescriptions for M(" << i << "," << j
                       << ") have vanishing denominators; enable block-tolerant "
                          "mode to continue with the visible block";
                    throw std::runtime_error(os.str());
                }
                md.M(i, j) = 0.0;
                unknown.emplace_back(i, j);
            } else {
                md.M(i, j) = acc / static_cast<double>(count);
            }
        }
    }
    md.M.row(0).setOnes();
    md.unknown_entries = std::move(unknown);

    const int d = static_cast<int>(std::lround(std::sqrt(static_cast<double>(p))));
    md.d = (d * d == p) ? d : 0;

    // Symmetry defect via the kappa-built pairing permutation.
    std::vector<int> xi = xi_perm_for(p, md.kappa);
    double defect = 0.0;
    for (int i = 0; i < p; ++i)
        for (int j = 0; j < p; ++j)
            defect = std::max(defect, std::abs(std::conj(md.M(xi[static_cast<size_t>(i)],
                                                              xi[static_cast<size_t>(j)])) -
                                               md.M(i, j)));
    md.symmetry_defect = defect / std::max(1.0, md.M.cwiseAbs().maxCoeff());
    return md;
}

ResidueModel wick_predict(const MDModel& md, int n) {
    require(n >= 2, "correlator order must be at least 2");
    const int p = md.pole_count();
    const int axes = n - 1;
    std::int64_t total = 1;
    for (int a = 0; a < axes; ++a) total *= p;

    ResidueModel rm;
    rm.poles = md.poles;
    rm.mus.assign(static_cast<size_t>(p), Complex(0, 0));
    rm.n = n;
    rm.order = p;
    rm.residues.resize(static_cast<size_t>(total));
    const double scale = std::pow(md.Mhat11, n);

    std::vector<int> idx(static_cast<size_t>(axes), 0);
    for (std::int64_t flat = 0; flat < total; ++flat) {
        std::int64_t rem = flat;
        for (int a = axes - 1; a >= 0; --a) {
            idx[static_cast<size_t>(a)] = static_cast<int>(rem % p);
            rem /= p;
        }
        Complex acc = md.M(0, idx[static_cast<size_t>(axes - 1)]);
        for (int a = axes - 1; a >= 1; --a)
            acc *= md.M(idx[static_cast<size_t>(a)], idx[static_cast<size_t>(a - 1)]);
        acc *= md.M(idx[0], 0);
        rm.residues[static_cast<size_t>(flat)] = scale * acc;
    }
    return rm;
}

RExtraction extract_R(const MDModel& md, const ExtractOptions& opts) {
    const int p = md.pole_count();
    if (md.d == 0)
        throw std::runtime_error("pole count " + std::to_string(p) +
                                 " is not a perfect square; re-estimate the order "
                                 "before attempting (Q,R) recovery");
    const int d = md.d;
    const Matrix Mren = md.renormalized();

    Eigen::ComplexEigenSolver<Matrix> es(Mren);
    if (es.info() != Eigen::Success)
        throw std::runtime_error("eigendecomposition of M failed");
    std::vector<Complex> mdiag(static_cast<size_t>(p));
    for (int k = 0; k < p; ++k) mdiag[static_cast<size_t>(k)] = es.eigenvalues()[k];
    Matrix Y = es.eigenvectors();
    for (int k = 0; k < p; ++k) {
        Vector v = Y.col(k);
        v.normalize();
        int anchor = 0;
        double best = 0.0;
        for (int i = 0; i < p; ++i)
            if (std::abs(v[i]) > best) { best = std::abs(v[i]); anchor = i; }
        v /= v[anchor] / std::abs(v[anchor]);
        Y.col(k) = v;
    }

    double scale = 0.0;
    for (auto z : mdiag) scale = std::max(scale, std::abs(z));
    scale = std::max(scale, 1e-300);
    const double tol = opts.pair_rtol * scale;

    // Reference: largest-modulus (nearly) real positive eigenvalue = |r_max|^2.
    int ref = -1;
    for (int k = 0; k < p; ++k) {
        const Complex m = mdiag[static_cast<size_t>(k)];
        if (std::abs(m.imag()) <= tol && m.real() > 0.0)
            if (ref < 0 || m.real() > mdiag[static_cast<size_t>(ref)].real()) ref = k;
    }
    if (ref < 0)
        throw std::runtime_error("spectrum of M has no real positive entry; "
                                 "not of Kronecker-product form");
    const double r_ref = std::sqrt(mdiag[static_cast<size_t>(ref)].real());

    // Candidate r's from the reference row; |m/r_ref|^2 must reappear.
    std::vector<Complex> rs;
    for (int k = 0; k < p; ++k) {
        const Complex cand = mdiag[static_cast<size_t>(k)] / r_ref;
        const double want = std::norm(cand);
        bool found = false;
        for (int j = 0; j < p && !found; ++j)
            if (std::abs(mdiag[static_cast<size_t>(j)] - want) <= tol) found = true;
        if (found) rs.push_back(cand);
    }
    if (static_cast<int>(rs.size()) < d)
        throw std::runtime_error("Kronecker pairing failed: spectrum of M is not of "
                                 "product form at this bond dimension");

    // Validate a d-subset whose pairwise products reproduce the spectrum;
    // the plain candidate list is usually exact, so try it first.
    std::sort(rs.begin(), rs.end(), [](Complex a, Complex b) {
        if (std::abs(a) != std::abs(b)) return std::abs(a) > std::abs(b);
        return std::arg(a) < std::arg(b);
    });

    auto try_assign = [&](const std::vector<Complex>& r_set,
                          std::vector<int>& assign_out, double& residual_out) {
        std::vector<Complex> prod(static_cast<size_t>(p));
        for (int i = 0; i < d; ++i)
            for (int j = 0; j < d; ++j)
                prod[static_cast<size_t>(i * d + j)] =
                    std::conj(r_set[static_cast<size_t>(i)]) * r_set[static_cast<size_t>(j)];
        std::vector<int> match = greedy_match(prod, mdiag);
        double worst = 0.0;
        for (int s = 0; s < p; ++s)
            worst = std::max(worst, std::abs(prod[static_cast<size_t>(s)] -
                                             mdiag[static_cast<size_t>(match[static_cast<size_t>(s)])]));
        assign_out = std::move(match);
        residual_out = worst;
        return worst <= tol;
    };

    // Density-like correlators cannot tell (Q,R) from their conjugates, so
    // the r multiset carries a two-fold branch ambiguity. Fix it by making
    // the largest-|Im| eigenvalue point into the upper half plane.
    auto canonical_branch = [&](std::vector<Complex>& set) {
        int arg = -1;
        double best_im = 0.0;
        for (size_t i = 0; i < set.size(); ++i)
            if (std::abs(set[i].imag()) > best_im) {
                best_im = std::abs(set[i].imag());
                arg = static_cast<int>(i);
            }
        if (arg >= 0 && set[static_cast<size_t>(arg)].imag() < 0)
            for (auto& r : set) r = std::conj(r);
    };

    std::vector<int> assign;
    double residual = 0.0;
    std::vector<Complex> r_final;
    bool ok = false;
    if (static_cast<int>(rs.size()) == d) {
        r_final = rs;
        canonical_branch(r_final);
        ok = try_assign(r_final, assign, residual);
    } else {
        // More candidates than d: search the subsets (small p keeps this cheap).
        std::vector<int> pick(static_cast<size_t>(d));
        std::iota(pick.begin(), pick.end(), 0);
        double best_res = std::numeric_limits<double>::infinity();
        std::vector<Complex> best_set;
        std::vector<int> best_assign;
        const int m = static_cast<int>(rs.size());
        while (true) {
            std::vector<Complex> cur;
            for (int i : pick) cur.push_back(rs[static_cast<size_t>(i)]);
            canonical_branch(cur);
            std::vector<int> a;
            double res;
            try_assign(cur, a, res);
            if (res < best_res) {
                best_res = res;
                best_set = cur;
                best_assign = a;
            }
            int i = d - 1;
            while (i >= 0 && pick[static_cast<size_t>(i)] == m - d + i) --i;
            if (i < 0) break;
            ++pick[static_cast<size_t>(i)];
            for (int j = i + 1; j < d; ++j) pick[static_cast<size_t>(j)] = pick[static_cast<size_t>(j - 1)] + 1;
        }
        r_final = best_set;
        assign = best_assign;
        residual = best_res;
        ok = best_res <= tol;
    }
    if (!ok)
        throw std::runtime_error("Kronecker pairing failed: product spectrum deviates by " +
                                 std::to_string(residual));

    RExtraction rx;
    rx.R_rec = Matrix::Zero(d, d);
    for (int j = 0; j < d; ++j) rx.R_rec(j, j) = r_final[static_cast<size_t>(j)];
    rx.order = assign;
    rx.pairing_residual = residual;

    // Column order O, then the symmetry average (Z + Xi conj(Z) Lambda)/2,
    // which suppresses eigenvector noise without moving the eigenvalues.
    Matrix Z(p, p);
    for (int s = 0; s < p; ++s) Z.col(s) = Y.col(assign[static_cast<size_t>(s)]);
    SymmetryMaps maps(d, md.kappa);
    Matrix Zs(p, p);
    for (int c = 0; c < p; ++c) {
        // (Xi conj(Z) Lambda) col c = Xi applied to conj of Z col lambda(c).
        Vector v = Z.col(maps.lambda_perm[c]).conjugate();
        Vector w(p);
        for (int i = 0; i < p; ++i) w[maps.xi_perm[i]] = v[i];
        Zs.col(c) = 0.5 * (Z.col(c) + w);
        if (Zs.col(c).norm() < 1e-8 * Z.col(c).norm()) {
            Zs.col(c) = Z.col(c);
            rx.note = "symmetry averaging collapsed a column; kept the raw eigenvector";
        }
    }
    // Store Y with the original eigencolumn order so that Y * O = Zs.
    rx.Y = Matrix(p, p);
    for (int s = 0; s < p; ++s) rx.Y.col(assign[static_cast<size_t>(s)]) = Zs.col(s);
    return rx;
}

QExtraction extract_Q(const MDModel& md, const RExtraction& rx, const ExtractOptions& opts) {
    const int p = md.pole_count();
    const int d = md.d;
    require(d > 0 && d * d == p, "MDModel lacks a valid bond dimension");

    Matrix Z(p, p);
    for (int s = 0; s < p; ++s) Z.col(s) = rx.Y.col(rx.order[static_cast<size_t>(s)]);

    Matrix D = Matrix::Zero(p, p);
    for (int k = 0; k < p; ++k) D(k, k) = md.poles[static_cast<size_t>(k)];
    Eigen::PartialPivLU<Matrix> lu(Z);
    if (!(lu.rcond() > 1e-14))
        throw std::runtime_error("eigenvector matrix of M is numerically singular");
    Matrix S = lu.solve((D - md.renormalized()) * Z);

    // The eigensolver fixes each column of Z only up to a scalar, which
    // conjugates the ideal Kronecker sum by an arbitrary diagonal and mixes
    // up the off-diagonal readout. Two correction passes restore a
    // Kronecker-compatible scaling from the data itself: the first makes
    // the within-block entries (the 1 (x) Q part) agree across blocks, the
    // second aligns the conj(Q) (x) 1 part with them.
    if (d > 1) {
        const double floor = 1e-12 * S.cwiseAbs().maxCoeff();
        int anchor = 0;
        double best = -1.0;
        for (int l = 0; l < d; ++l) {
            double worst = std::numeric_limits<double>::infinity();
            for (int j = 0; j < d; ++j)
                if (j != l) worst = std::min(worst, std::abs(S(l, j)));
            if (worst > best) {
                best = worst;
                anchor = l;
            }
        }
        Vector scale(p);
        for (int i = 0; i < d; ++i)
            for (int j = 0; j < d; ++j) {
                Complex u(1, 0);
                if (i > 0 && j != anchor) {
                    const Complex den = S(anchor, j);
                    const Complex num = S(i * d + anchor, i * d + j);
                    if (std::abs(den) > floor && std::abs(num) > floor) u = num / den;
                }
                scale[i * d + j] = 1.0 / u;
            }
        for (int a = 0; a < p; ++a)
            for (int b = 0; b < p; ++b) S(a, b) *= scale[b] / scale[a];

        Vector gamma = Vector::Ones(p);
        for (int k = 0; k < d; ++k) {
            if (k == anchor) continue;
            Complex acc = 0.0;
            int cnt = 0;
            for (int j = 0; j < d; ++j) {
                const Complex bkj = S(anchor * d + j, k * d + j); // conj(Q)(anchor,k)
                const Complex akj = S(anchor * d + anchor, anchor * d + k); // Q(anchor,k)
                if (std::abs(bkj) > floor && std::abs(akj) > floor) {
                    acc += akj / std::conj(bkj);
                    ++cnt;
                }
            }
            if (cnt > 0) {
                Complex g = acc / static_cast<double>(cnt);
                for (int i = 0; i < d; ++i) gamma[i * d + k] = g;
            }
        }
        for (int a = 0; a < p; ++a)
            for (int b = 0; b < p; ++b) S(a, b) *= gamma[a] / gamma[b];
    }

    // S should be conj(Q) (+) Q; read the entries off the block structure.
    Matrix Q = Matrix::Zero(d, d);
    for (int j = 0; j < d; ++j)
        for (int l = 0; l < d; ++l) {
            if (j == l) continue;
            Complex acc = 0.0;
            for (int i = 0; i < d; ++i) acc += S(i * d + j, i * d + l);
            Q(j, l) = acc / static_cast<double>(d);
        }
    const double q00 = S(0, 0).real() / 2.0; // Im Q(0,0) fixed to zero
    Q(0, 0) = q00;
    for (int j = 1; j < d; ++j) Q(j, j) = S(j, j) - q00;

    Matrix id = Matrix::Identity(d, d);
    Matrix ideal = kron(Q.conjugate(), id) + kron(id, Q);
    const double defect = (S - ideal).cwiseAbs().maxCoeff() /
                          (1.0 + S.cwiseAbs().maxCoeff());
    if (defect > opts.kron_defect_threshold)
        throw std::runtime_error("Kronecker-sum defect " + std::to_string(defect) +
                                 " exceeds threshold; eigenvectors of M too perturbed");
    QExtraction qx;
    qx.Q_rec = std::move(Q);
    qx.kron_defect = defect;
    return qx;
}

KExtraction extract_K(const Matrix& Q0, const Matrix& R0, int max_iter,
                      double target_residual) {
    const int d = static_cast<int>(Q0.rows());
    Matrix Q = Q0, R = R0;
    double residual = std::numeric_limits<double>::infinity();

    for (int iter = 0; iter < max_iter; ++iter) {
        residual = (Q + Q.adjoint() + R.adjoint() * R).cwiseAbs().maxCoeff();
        if (residual < target_residual) break;

        TransferMatrix tm = build_transfer(Cmps(Q, R));
        Eigen::ComplexEigenSolver<Matrix> es(tm.T);
        int top = 0;
        for (int k = 1; k < d * d; ++k)
            if (es.eigenvalues()[k].real() > es.eigenvalues()[top].real()) top = k;
        const Complex lam = es.eigenvalues()[top];
        Q -= (lam.real() / 2.0) * Matrix::Identity(d, d);

        // Left stationary eigenvector of T = fixed point of the adjoint
        // channel; its Hermitian square root is the gauge that zeroes
        // Q + Q^dag + R^dag R.
        Eigen::ComplexEigenSolver<Matrix> esl(tm.T.adjoint());
        int best = 0;
        for (int k = 1; k < d * d; ++k)
            if (std::abs(esl.eigenvalues()[k] - std::conj(lam)) <
                std::abs(esl.eigenvalues()[best] - std::conj(lam)))
                best = k;
        Vector v = esl.eigenvectors().col(best);
        Matrix sigma(d, d);
        for (int c = 0; c < d; ++c)
            for (int r = 0; r < d; ++r) sigma(r, c) = v[c * d + r];
        const Complex tr = sigma.trace();
        if (std::abs(tr) < 1e-300)
            throw std::runtime_error("gauge transformation failure: traceless fixed point");
        sigma *= std::conj(tr) / std::abs(tr);
        sigma = 0.5 * (sigma + sigma.adjoint()).eval();

        Eigen::SelfAdjointEigenSolver<Matrix> sa(sigma);
        if (sa.eigenvalues().minCoeff() <= 0.0)
            throw std::runtime_error(
                "gauge transformation failure: fixed point not positive definite");
        Matrix half = sa.eigenvectors() *
                      sa.eigenvalues().cwiseSqrt().asDiagonal().toDenseMatrix().cast<Complex>() *
                      sa.eigenvectors().adjoint();
        Matrix halfinv = sa.eigenvectors() *
                         sa.eigenvalues().cwiseSqrt().cwiseInverse().asDiagonal().toDenseMatrix().cast<Complex>() *
                         sa.eigenvectors().adjoint();
        // G = sigma^{-1/2}: G^{-1} X G = sigma^{1/2} X sigma^{-1/2}.
        Q = (half * Q * halfinv).eval();
        R = (half * R * halfinv).eval();
    }
    if (!(residual < target_residual))
        throw std::runtime_error("gauge iteration did not converge; residual " +
                                 std::to_string(residual));

    Matrix Kraw = Complex(0, 1) * (Q + 0.5 * (R.adjoint() * R));
    KExtraction kx;
    kx.gauge_residual = residual;
    kx.hermiticity_defect = (Kraw - Kraw.adjoint()).cwiseAbs().maxCoeff() /
                            std::max(1.0, Kraw.cwiseAbs().maxCoeff());
    kx.K = 0.5 * (Kraw + Kraw.adjoint());
    return kx;
}

ReconstructionResult reconstruct(const CorrelationTensor& c3, const CorrelationTensor* c2,
                                 const ReconstructOptions& opts) {
    require(c3.n == 3, "reconstruction needs a 3-point tensor");
    if (c2) {
        require(c2->n == 2, "secondary tensor must be 2-point");
        if (std::abs(c2->delta_tau - c3.delta_tau) >
            1e-12 * std::max(1.0, std::abs(c3.delta_tau)))
            throw std::invalid_argument(
                "mismatched delta_tau between the 3-point and 2-point tensors");
    }

    std::vector<Complex> signal;
    try {
        signal = project_average(c3);
    } catch (const std::exception& e) {
        throw StageError("project_average", e.what());
    }

    ReconstructionResult result;
    PoleEstimate poles;
    try {
        const int N = static_cast<int>(signal.size());
        int order = opts.order;
        if (order == 0) {
            const int P0 = opts.pencil_P > 0 ? opts.pencil_P
                                             : std::max(1, std::min(N - 1, static_cast<int>(std::lround(0.4 * N))));
            order = estimate_order(build_hankel(signal, P0), opts.order_threshold);
        }
        result.estimated_order = order;
        int est_order = order;
        if (opts.overestimate > 1.0)
            est_order = std::min(N / 2, static_cast<int>(std::ceil(opts.overestimate * order)));
        poles = estimate_poles(opts.estimator, signal, est_order, c3.delta_tau, opts.pencil_P);
        if (est_order > order) poles = prune_poles_by_residue(poles, signal, order);
        poles = symmetrize_conjugate_pairs(poles, opts.extract.real_tol);
    } catch (const StageError&) {
        throw;
    } catch (const std::exception& e) {
        throw StageError("pole_estimation", e.what());
    }

    ResidueModel rm3;
    std::optional<ResidueModel> rm2;
    try {
        rm3 = solve_residues(poles, c3);
        if (c2) rm2 = solve_residues(poles, *c2);
    } catch (const std::exception& e) {
        throw StageError("residue_fit", e.what());
    }

    try {
        result.md = extract_M(rm3, rm2 ? &*rm2 : nullptr, nullptr, opts.extract);
    } catch (const std::exception& e) {
        throw StageError("extract_M", e.what());
    }

    if (opts.md_only) return result;

    ReconstructedCmps rec;
    rec.quality.symmetry_defect = result.md.symmetry_defect;
    rec.quality.rms_fit_error_c3 = rm3.rms_fit_error;
    rec.quality.rms_fit_error_c2 = rm2 ? rm2->rms_fit_error : 0.0;

    RExtraction rx;
    try {
        rx = extract_R(result.md, opts.extract);
    } catch (const std::exception& e) {
        throw StageError("extract_R", e.what());
    }
    rec.R_rec = rx.R_rec;
    rec.quality.pairing_residual = rx.pairing_residual;

    try {
        QExtraction qx = extract_Q(result.md, rx, opts.extract);
        rec.Q_rec = qx.Q_rec;
        rec.quality.kron_defect = qx.kron_defect;
    } catch (const std::exception& e) {
        throw StageError("extract_Q", e.what());
    }

    if (opts.compute_K) {
        try {
            KExtraction kx = extract_K(rec.Q_rec, rec.R_rec);
            rec.K_rec = kx.K;
            rec.quality.gauge_residual = kx.gauge_residual;
            rec.quality.hermiticity_defect = kx.hermiticity_defect;
        } catch (const std::exception& e) {
            rec.quality.notes = std::string("K extraction skipped: ") + e.what();
        }
    }
    if (!rx.note.empty())
        rec.quality.notes += (rec.quality.notes.empty() ? "" : "; ") + rx.note;

    result.cmps = std::move(rec);
    return result;
}

ConsistencyReport consistency_check(const MDModel& md, const CorrelationTensor& observed,
                                    double threshold) {
    require(observed.n >= 2, "observed tensor must have n >= 2");
    require(observed.N >= 1 && observed.delta_tau > 0, "grid mismatch: invalid observed grid");
    if (observed.amputated && observed.n != 2)
        throw std::invalid_argument("grid mismatch: amputated tensors are 2-point only");

    CorrelationTensor pred =
        sample_model(md.poles, md.renormalized(), observed.n, observed.N, observed.delta_tau);
    if (observed.amputated) pred = amputate(pred, md.Mhat11);

    double sup = 0.0, ref = 0.0, acc = 0.0;
    for (size_t i = 0; i < pred.values.size(); ++i) {
        sup = std::max(sup, std::abs(pred.values[i] - observed.values[i]));
        ref = std::max(ref, std::abs(observed.values[i]));
        const double dv = std::abs(pred.values[i] - observed.values[i]);
        acc += dv * dv;
    }
    ConsistencyReport rep;
    rep.rel_sup = sup / std::max(ref, 1e-300);
    rep.rms = std::sqrt(acc / static_cast<double>(pred.values.size()));
    rep.threshold = threshold;
    rep.pass = rep.rel_sup <= threshold;
    return rep;
}

} // namespace cmpstomo
