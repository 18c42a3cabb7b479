#include <cstdio>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "cmpstomo/io.hpp"

using namespace cmpstomo;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitIo = 1;
constexpr int kExitUsage = 2;
constexpr int kExitPipeline = 3;

Estimator parse_estimator(const std::string& name) {
    if (name == "prony") return Estimator::Prony;
    if (name == "prony-kernel") return Estimator::PronyKernel;
    if (name == "mpm") return Estimator::Mpm;
    if (name == "ssmpm") return Estimator::Ssmpm;
    throw CLI::ValidationError("--estimator", "unknown estimator " + name);
}

void print_pole_table(const SpectralData& sd, bool verbose) {
    std::printf("%-4s %-22s %-22s %-12s\n", "k", "Re(lambda)", "Im(lambda)", "|rho2|");
    for (int k = 0; k < sd.pole_count(); ++k) {
        const Complex rho = sd.M(0, k) * sd.M(k, 0);
        std::printf("%-4d %-22.14g %-22.14g %-12.6g\n", k + 1, sd.poles[k].real(),
                    sd.poles[k].imag(), std::abs(rho));
    }
    if (verbose)
        std::printf("density %.14g, kappa %d\n", sd.density, sd.kappa);
}

json ll_report_to_json(const LLStructureReport& rep) {
    json j{{"phi", rep.phi},
           {"chi", rep.chi},
           {"q_pairs", rep.q_pairs},
           {"r_pairs", rep.r_pairs},
           {"q_unpaired", rep.q_unpaired},
           {"r_unpaired", rep.r_unpaired},
           {"m_multiplicities", rep.m_multiplicities},
           {"degeneracy_pattern", rep.degeneracy_pattern},
           {"blocks", {{"visible", rep.blocks.visible}, {"hidden", rep.blocks.hidden}}},
           {"degenerate_pairs_total", rep.degenerate_pairs_total},
           {"degenerate_pairs_split", rep.degenerate_pairs_split}};
    return j;
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    out << text;
}

struct Cli {
    // generate
    int d = 2;
    std::string mode = "refined";
    double mu = 0.0, sigma = 0.01, eta = 0.1;
    std::uint64_t seed = 0;
    std::string out, out_csv, input;
    bool verbose = false;

    // correlate / predict
    int n = 2, N = 200;
    double delta_tau = 0.0;
    bool amputated = false;

    // noise
    double snr = std::numeric_limits<double>::infinity();

    // reconstruct
    std::string c3_path, c2_path, md_out, report_path, estimator = "ssmpm";
    int order = 0, pencil_P = 0;
    double overestimate = 1.0, order_threshold = 1e-8, match_rtol = 1e-3,
           pair_rtol = 1e-2;
    bool md_only = false, no_k = false, block_tolerant = false;

    // predict
    std::string compare_path;

    // benchmark
    std::string kind = "noise_snr";
    std::vector<double> grid;
    int trials = 200, points = 200;

    double tol = 1e-6;
};

int run(int argc, char** argv) {
    CLI::App app{"cMPS tomography: forward correlators, pole/residue estimation, "
                 "state reconstruction and robustness benchmarks"};
    app.require_subcommand(1);
    Cli c;

    app.add_flag("--verbose", c.verbose, "chattier output");

    auto* gen = app.add_subcommand("generate", "draw a random cMPS and write it as JSON");
    gen->add_option("--d", c.d, "bond dimension")->check(CLI::PositiveNumber);
    gen->add_option("--mode", c.mode, "naive | refined")
        ->check(CLI::IsMember({"naive", "refined"}));
    gen->add_option("--mu", c.mu, "entry mean");
    gen->add_option("--sigma", c.sigma, "entry standard deviation")
        ->check(CLI::NonNegativeNumber);
    gen->add_option("--eta", c.eta, "refined-mode scale")->check(CLI::PositiveNumber);
    gen->add_option("--seed", c.seed, "rng seed");
    gen->add_option("-o,--out", c.out, "output cMPS file")->required();

    auto* cor = app.add_subcommand("correlate", "sample an n-point correlator from a cMPS");
    cor->add_option("-i,--in", c.input, "input cMPS file")->required();
    cor->add_option("-o,--out", c.out, "output tensor file (.json)")->required();
    cor->add_option("--csv", c.out_csv, "also write a CSV copy (2-point only)");
    cor->add_option("--n", c.n, "correlator order")->check(CLI::Range(2, 8));
    cor->add_option("--N", c.N, "samples per axis")->check(CLI::PositiveNumber);
    cor->add_option("--delta-tau", c.delta_tau,
                    "grid spacing (default: Nyquist-derived from the poles)");
    cor->add_flag("--amputate", c.amputated, "subtract the squared density (n=2)");

    auto* noi = app.add_subcommand("noise", "add white gaussian noise to a tensor");
    noi->add_option("-i,--in", c.input, "input tensor file")->required();
    noi->add_option("-o,--out", c.out, "output tensor file")->required();
    noi->add_option("--snr", c.snr, "signal-to-noise ratio")->check(CLI::PositiveNumber);
    noi->add_option("--seed", c.seed, "rng seed");

    auto* rec = app.add_subcommand("reconstruct", "recover (D,M) and (Q,R[,K]) from tensors");
    rec->add_option("--c3", c.c3_path, "3-point tensor file")->required();
    rec->add_option("--c2", c.c2_path, "optional 2-point tensor file");
    rec->add_option("-o,--out", c.out, "reconstructed cMPS output file");
    rec->add_option("--md-out", c.md_out, "MD-model output file");
    rec->add_option("--report", c.report_path, "quality report JSON");
    rec->add_option("--estimator", c.estimator, "prony | prony-kernel | mpm | ssmpm");
    rec->add_option("--order", c.order, "pole count (0 = estimate)")
        ->check(CLI::NonNegativeNumber);
    rec->add_option("--P", c.pencil_P, "pencil parameter (0 = 0.4 N)")
        ->check(CLI::NonNegativeNumber);
    rec->add_option("--overestimate", c.overestimate,
                    "order overestimation factor, surplus poles pruned by residue")
        ->check(CLI::Range(1.0, 4.0));
    rec->add_option("--order-threshold", c.order_threshold,
                    "relative singular-value threshold for order estimation");
    rec->add_option("--match-rtol", c.match_rtol, "pole matching tolerance");
    rec->add_option("--pair-rtol", c.pair_rtol, "Kronecker pairing tolerance");
    rec->add_flag("--md-only", c.md_only, "stop after the (D,M) model");
    rec->add_flag("--no-K", c.no_k, "skip the K extraction");
    rec->add_flag("--block-tolerant", c.block_tolerant,
                  "fill unknown M entries with zero instead of failing");

    auto* pre = app.add_subcommand("predict", "evaluate an n-point tensor from an MD model");
    pre->add_option("-i,--in", c.input, "input MD-model file")->required();
    pre->add_option("-o,--out", c.out, "output tensor file");
    pre->add_option("--n", c.n, "correlator order")->check(CLI::Range(2, 8));
    pre->add_option("--N", c.N, "samples per axis")->check(CLI::PositiveNumber);
    pre->add_option("--delta-tau", c.delta_tau, "grid spacing")->check(CLI::PositiveNumber);
    pre->add_option("--compare", c.compare_path,
                    "tensor file to compare against; prints the deviation");
    pre->add_option("--tol", c.tol, "pass threshold for --compare");

    auto* ben = app.add_subcommand("benchmark", "seeded Monte Carlo robustness sweeps");
    ben->add_option("--kind", c.kind, "noise_snr | perturb_M | additional_field")
        ->check(CLI::IsMember({"noise_snr", "perturb_M", "additional_field"}));
    ben->add_option("--grid", c.grid, "grid values (SNR or eps)")->required();
    ben->add_option("--trials", c.trials, "trials per grid point")->check(CLI::PositiveNumber);
    ben->add_option("--d", c.d, "bond dimension")->check(CLI::PositiveNumber);
    ben->add_option("--mode", c.mode, "naive | refined")
        ->check(CLI::IsMember({"naive", "refined"}));
    ben->add_option("--mu", c.mu, "entry mean");
    ben->add_option("--sigma", c.sigma, "entry std")->check(CLI::NonNegativeNumber);
    ben->add_option("--eta", c.eta, "refined scale")->check(CLI::PositiveNumber);
    ben->add_option("--seed", c.seed, "master seed");
    ben->add_option("--points", c.points, "2-point samples per trial")
        ->check(CLI::PositiveNumber);
    ben->add_option("--estimator", c.estimator, "pole estimator for noise_snr");
    ben->add_option("-o,--out", c.out, "report JSON file");
    ben->add_option("--csv", c.out_csv, "report CSV file");

    auto* ana = app.add_subcommand("analyze", "degeneracy and block structure of a cMPS");
    ana->add_option("-i,--in", c.input, "input cMPS file")->required();
    ana->add_option("-o,--out", c.out, "report JSON file");
    ana->add_option("--tol", c.tol, "clustering tolerance");

    auto* val = app.add_subcommand("validate", "check any project file against its schema");
    val->add_option("file", c.input, "file to validate")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (gen->parsed()) {
            EnsembleSpec spec;
            spec.d = c.d;
            spec.mode = c.mode == "naive" ? EnsembleMode::NaiveQR : EnsembleMode::RefinedKR;
            spec.mu = c.mu;
            spec.sigma = c.sigma;
            spec.eta = c.eta;
            spec.seed = c.seed;
            Cmps state = random_cmps(spec);
            CmpsFile file;
            file.state = state;
            file.meta["seed"] = static_cast<double>(c.seed);
            file.meta["sigma"] = c.sigma;
            file.meta["eta"] = c.eta;
            save_cmps(c.out, file);
            print_pole_table(spectral_decompose(build_transfer(state), state.R), c.verbose);
        } else if (cor->parsed()) {
            CmpsFile file = load_cmps(c.input);
            SpectralData sd = spectral_decompose(build_transfer(file.state), file.state.R);
            const double dt = c.delta_tau > 0 ? c.delta_tau : nyquist_delta_tau(sd.poles);
            CorrelationTensor ct = sample(sd, c.n, c.N, dt);
            if (c.amputated) ct = amputate(ct, sd.density);
            save_tensor(c.out, ct);
            if (!c.out_csv.empty()) save_tensor_csv(c.out_csv, ct);
            if (c.verbose)
                std::printf("sampled n=%d N=%d delta_tau=%.12g amputated=%d\n", c.n, c.N,
                            dt, int(ct.amputated));
        } else if (noi->parsed()) {
            CorrelationTensor ct = load_tensor(c.input);
            NoiseSpec ns;
            ns.snr = c.snr;
            ns.seed = c.seed;
            save_tensor(c.out, add_noise(ct, ns));
        } else if (rec->parsed()) {
            CorrelationTensor c3 = load_tensor(c.c3_path);
            std::optional<CorrelationTensor> c2;
            if (!c.c2_path.empty()) c2 = load_tensor(c.c2_path);

            ReconstructOptions opts;
            opts.estimator = parse_estimator(c.estimator);
            opts.order = c.order;
            opts.pencil_P = c.pencil_P;
            opts.overestimate = c.overestimate;
            opts.order_threshold = c.order_threshold;
            opts.md_only = c.md_only;
            opts.compute_K = !c.no_k;
            opts.extract.match_rtol = c.match_rtol;
            opts.extract.pair_rtol = c.pair_rtol;
            opts.extract.block_tolerant = c.block_tolerant;
            ReconstructionResult res = reconstruct(c3, c2 ? &*c2 : nullptr, opts);

            if (!c.md_out.empty()) save_mdmodel(c.md_out, res.md);
            if (res.cmps && !c.out.empty()) save_reconstructed(c.out, *res.cmps, res.md.d);
            if (c.md_only && !c.out.empty() && c.md_out.empty())
                save_mdmodel(c.out, res.md);

            json rep{{"estimated_order", res.estimated_order},
                     {"symmetry_defect", res.md.symmetry_defect},
                     {"Mhat11", res.md.Mhat11},
                     {"kappa", res.md.kappa},
                     {"poles", json::array()}};
            for (const auto& z : res.md.poles)
                rep["poles"].push_back(json::array({z.real(), z.imag()}));
            if (res.cmps) {
                rep["kron_defect"] = res.cmps->quality.kron_defect;
                rep["pairing_residual"] = res.cmps->quality.pairing_residual;
                rep["rms_fit_error_c3"] = res.cmps->quality.rms_fit_error_c3;
                rep["rms_fit_error_c2"] = res.cmps->quality.rms_fit_error_c2;
                rep["notes"] = res.cmps->quality.notes;
            }
            if (!c.report_path.empty())
                write_text(c.report_path, rep.dump(2) + "\n");
            else
                std::cout << rep.dump(2) << "\n";
        } else if (pre->parsed()) {
            MDModel md = load_mdmodel(c.input);
            require(c.delta_tau > 0, "--delta-tau is required for predict");
            CorrelationTensor pred =
                sample_model(md.poles, md.renormalized(), c.n, c.N, c.delta_tau);
            if (!c.out.empty()) save_tensor(c.out, pred);
            if (!c.compare_path.empty()) {
                CorrelationTensor obs = load_tensor(c.compare_path);
                ConsistencyReport rep = consistency_check(md, obs, c.tol);
                std::printf("rel_sup %.6g rms %.6g pass %d\n", rep.rel_sup, rep.rms,
                            int(rep.pass));
                if (!rep.pass) return kExitPipeline;
            }
        } else if (ben->parsed()) {
            EnsembleSpec spec;
            spec.d = c.d;
            spec.mode = c.mode == "naive" ? EnsembleMode::NaiveQR : EnsembleMode::RefinedKR;
            spec.mu = c.mu;
            spec.sigma = c.sigma;
            spec.eta = c.eta;
            spec.seed = c.seed;
            BenchmarkKind kind = c.kind == "noise_snr" ? BenchmarkKind::NoiseSnr
                                 : c.kind == "perturb_M" ? BenchmarkKind::PerturbM
                                                         : BenchmarkKind::AdditionalField;
            BenchConfig cfg;
            cfg.n_samples = c.points;
            cfg.estimator = parse_estimator(c.estimator);
            auto reports = run_benchmark(kind, c.grid, c.trials, spec, cfg);
            for (const auto& r : reports)
                std::printf("grid %.6g: mean-criterion %.4f, max-criterion %.4f (%d trials)\n",
                            r.grid_value, r.success_rate_mean_criterion,
                            r.success_rate_max_criterion, r.trials);
            if (!c.out.empty()) save_benchmark_json(c.out, reports);
            if (!c.out_csv.empty()) save_benchmark_csv(c.out_csv, reports);
        } else if (ana->parsed()) {
            CmpsFile file = load_cmps(c.input);
            LLStructureReport rep = analyze_ll_structure(file.state, c.tol);
            std::printf("blocks: %d, degenerate pairs: %d\n",
                        rep.blocks.hidden.empty() ? 1 : 2, rep.degenerate_pairs_total);
            if (!c.out.empty()) write_text(c.out, ll_report_to_json(rep).dump(2) + "\n");
            else if (c.verbose) std::cout << ll_report_to_json(rep).dump(2) << "\n";
        } else if (val->parsed()) {
            ValidationResult res = validate_file(c.input);
            std::cout << (res.ok ? "OK: " : "INVALID: ") << res.message << "\n";
            if (!res.ok) {
                // distinguish unreadable files from schema violations
                std::ifstream probe(c.input);
                return probe ? kExitPipeline : kExitIo;
            }
        }
    } catch (const IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitIo;
    } catch (const StageError& e) {
        std::cerr << "error in stage " << e.stage << ": " << e.what() << "\n";
        return kExitPipeline;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitPipeline;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitPipeline;
    }
    return kExitOk;
}

} // namespace

int main(int argc, char** argv) { return run(argc, argv); }
