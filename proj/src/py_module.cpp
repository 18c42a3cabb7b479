#include <pybind11/complex.h>
#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "cmpstomo/io.hpp"

namespace py = pybind11;
using namespace cmpstomo;

namespace {

EnsembleSpec make_spec(int d, const std::string& mode, double mu, double sigma,
                       double eta, std::uint64_t seed) {
    EnsembleSpec spec;
    spec.d = d;
    spec.mode = mode == "naive" ? EnsembleMode::NaiveQR : EnsembleMode::RefinedKR;
    spec.mu = mu;
    spec.sigma = sigma;
    spec.eta = eta;
    spec.seed = seed;
    return spec;
}

Estimator estimator_from(const std::string& name) {
    if (name == "prony") return Estimator::Prony;
    if (name == "prony-kernel") return Estimator::PronyKernel;
    if (name == "mpm") return Estimator::Mpm;
    if (name == "ssmpm") return Estimator::Ssmpm;
    throw std::invalid_argument("unknown estimator " + name);
}

} // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "cMPS tomography core: forward correlators, damped-exponential "
              "estimators and state reconstruction";

    py::class_<Cmps>(m, "Cmps")
        .def(py::init<Matrix, Matrix>(), py::arg("Q"), py::arg("R"))
        .def_readonly("d", &Cmps::d)
        .def_readonly("Q", &Cmps::Q)
        .def_readonly("R", &Cmps::R);

    py::class_<TransferMatrix>(m, "TransferMatrix")
        .def_readonly("T", &TransferMatrix::T)
        .def_readonly("d", &TransferMatrix::d);

    py::class_<SpectralData>(m, "SpectralData")
        .def_readonly("d", &SpectralData::d)
        .def_readonly("poles", &SpectralData::poles)
        .def_readonly("M", &SpectralData::M)
        .def_readonly("kappa", &SpectralData::kappa)
        .def_readonly("density", &SpectralData::density);

    py::class_<CorrelationTensor>(m, "CorrelationTensor")
        .def(py::init<>())
        .def_readwrite("n", &CorrelationTensor::n)
        .def_readwrite("N", &CorrelationTensor::N)
        .def_readwrite("delta_tau", &CorrelationTensor::delta_tau)
        .def_readwrite("amputated", &CorrelationTensor::amputated)
        .def_readwrite("values", &CorrelationTensor::values);

    py::class_<PoleEstimate>(m, "PoleEstimate")
        .def_readonly("mus", &PoleEstimate::mus)
        .def_readonly("lambdas", &PoleEstimate::lambdas)
        .def_readonly("order", &PoleEstimate::order)
        .def_readonly("delta_tau", &PoleEstimate::delta_tau);

    py::class_<ResidueModel>(m, "ResidueModel")
        .def_readonly("poles", &ResidueModel::poles)
        .def_readonly("residues", &ResidueModel::residues)
        .def_readonly("n", &ResidueModel::n)
        .def_readonly("order", &ResidueModel::order)
        .def_readonly("rms_fit_error", &ResidueModel::rms_fit_error);

    py::class_<MDModel>(m, "MDModel")
        .def_readonly("d", &MDModel::d)
        .def_readonly("poles", &MDModel::poles)
        .def_readonly("M", &MDModel::M)
        .def_readonly("Mhat11", &MDModel::Mhat11)
        .def_readonly("kappa", &MDModel::kappa)
        .def_readonly("symmetry_defect", &MDModel::symmetry_defect);

    py::class_<QualityReport>(m, "QualityReport")
        .def_readonly("symmetry_defect", &QualityReport::symmetry_defect)
        .def_readonly("kron_defect", &QualityReport::kron_defect)
        .def_readonly("rms_fit_error_c3", &QualityReport::rms_fit_error_c3)
        .def_readonly("rms_fit_error_c2", &QualityReport::rms_fit_error_c2)
        .def_readonly("pairing_residual", &QualityReport::pairing_residual)
        .def_readonly("notes", &QualityReport::notes);

    py::class_<ReconstructedCmps>(m, "ReconstructedCmps")
        .def_readonly("R_rec", &ReconstructedCmps::R_rec)
        .def_readonly("Q_rec", &ReconstructedCmps::Q_rec)
        .def_property_readonly("K_rec",
                               [](const ReconstructedCmps& r) -> py::object {
                                   if (!r.K_rec) return py::none();
                                   return py::cast(*r.K_rec);
                               })
        .def_readonly("quality", &ReconstructedCmps::quality);

    py::class_<ReconstructionResult>(m, "ReconstructionResult")
        .def_readonly("md", &ReconstructionResult::md)
        .def_property_readonly("cmps",
                               [](const ReconstructionResult& r) -> py::object {
                                   if (!r.cmps) return py::none();
                                   return py::cast(*r.cmps);
                               })
        .def_readonly("estimated_order", &ReconstructionResult::estimated_order);

    py::class_<ConsistencyReport>(m, "ConsistencyReport")
        .def_readonly("rel_sup", &ConsistencyReport::rel_sup)
        .def_readonly("rms", &ConsistencyReport::rms)
        .def_readonly("passed", &ConsistencyReport::pass)
        .def_readonly("threshold", &ConsistencyReport::threshold);

    py::class_<BenchmarkReport>(m, "BenchmarkReport")
        .def_readonly("grid_value", &BenchmarkReport::grid_value)
        .def_readonly("trials", &BenchmarkReport::trials)
        .def_readonly("success_rate_mean_criterion",
                      &BenchmarkReport::success_rate_mean_criterion)
        .def_readonly("success_rate_max_criterion",
                      &BenchmarkReport::success_rate_max_criterion)
        .def_readonly("error_quantiles", &BenchmarkReport::error_quantiles)
        .def_readonly("failures", &BenchmarkReport::failures);

    py::class_<BlockPartition>(m, "BlockPartition")
        .def_readonly("visible", &BlockPartition::visible)
        .def_readonly("hidden", &BlockPartition::hidden)
        .def_readonly("permutation", &BlockPartition::permutation);

    py::class_<LLStructureReport>(m, "LLStructureReport")
        .def_readonly("phi", &LLStructureReport::phi)
        .def_readonly("chi", &LLStructureReport::chi)
        .def_readonly("q_pairs", &LLStructureReport::q_pairs)
        .def_readonly("r_pairs", &LLStructureReport::r_pairs)
        .def_readonly("m_multiplicities", &LLStructureReport::m_multiplicities)
        .def_readonly("degeneracy_pattern", &LLStructureReport::degeneracy_pattern)
        .def_readonly("blocks", &LLStructureReport::blocks)
        .def_readonly("degenerate_pairs_total", &LLStructureReport::degenerate_pairs_total)
        .def_readonly("degenerate_pairs_split", &LLStructureReport::degenerate_pairs_split);

    m.def("build_transfer", &build_transfer, py::arg("state"));
    m.def("q_from_kr",
          [](const Matrix& K, const Matrix& R) {
              return q_from_kr(AuxiliaryHamiltonian(K), R);
          },
          py::arg("K"), py::arg("R"));
    m.def("k_from_qr",
          [](const Matrix& Q, const Matrix& R, double tol, bool project) {
              return k_from_qr(Q, R, tol, project).K;
          },
          py::arg("Q"), py::arg("R"), py::arg("tol") = 1e-10, py::arg("project") = false);
    m.def("gauge_transform", &gauge_transform, py::arg("state"), py::arg("G"));
    m.def("stationarize", &stationarize, py::arg("state"));

    m.def("spectral_decompose",
          [](const Cmps& state) {
              return spectral_decompose(build_transfer(state), state.R);
          },
          py::arg("state"));
    m.def("residue", &residue, py::arg("sd"), py::arg("idx"));
    m.def("correlate", &correlate, py::arg("sd"), py::arg("taus"));
    m.def("sample",
          [](const SpectralData& sd, int n, int N, double delta_tau) {
              return sample(sd, n, N, delta_tau);
          },
          py::arg("sd"), py::arg("n"), py::arg("N"), py::arg("delta_tau"));
    m.def("amputate", &amputate, py::arg("ct"), py::arg("density"));
    m.def("laplace_eval", &laplace_eval, py::arg("sd"), py::arg("s"));

    m.def("estimate_order",
          [](const std::vector<Complex>& samples, int P, double rel_threshold) {
              return estimate_order(build_hankel(samples, P), rel_threshold);
          },
          py::arg("samples"), py::arg("P"), py::arg("rel_threshold") = 1e-8);
    m.def("estimate_poles",
          [](const std::string& estimator, const std::vector<Complex>& samples, int order,
             double delta_tau, int P) {
              return estimate_poles(estimator_from(estimator), samples, order, delta_tau, P);
          },
          py::arg("estimator"), py::arg("samples"), py::arg("order"), py::arg("delta_tau"),
          py::arg("P") = 0);
    m.def("project_average", &project_average, py::arg("ct"));
    m.def("solve_residues", &solve_residues, py::arg("poles"), py::arg("ct"));
    m.def("symmetrize_conjugate_pairs", &symmetrize_conjugate_pairs, py::arg("poles"),
          py::arg("real_tol") = 1e-9);

    m.def("extract_M",
          [](const ResidueModel& rm3, const ResidueModel* rm2, const ResidueModel* higher,
             bool block_tolerant) {
              ExtractOptions opts;
              opts.block_tolerant = block_tolerant;
              return extract_M(rm3, rm2, higher, opts);
          },
          py::arg("rm3"), py::arg("rm2") = nullptr, py::arg("higher") = nullptr,
          py::arg("block_tolerant") = false);
    m.def("md_from_spectral", &md_from_spectral, py::arg("sd"));
    m.def("wick_predict", &wick_predict, py::arg("md"), py::arg("n"));
    m.def("reconstruct",
          [](const CorrelationTensor& c3, const CorrelationTensor* c2,
             const std::string& estimator, int order, bool md_only, bool compute_K) {
              ReconstructOptions opts;
              opts.estimator = estimator_from(estimator);
              opts.order = order;
              opts.md_only = md_only;
              opts.compute_K = compute_K;
              return reconstruct(c3, c2, opts);
          },
          py::arg("c3"), py::arg("c2") = nullptr, py::arg("estimator") = "ssmpm",
          py::arg("order") = 0, py::arg("md_only") = false, py::arg("compute_K") = true);
    m.def("consistency_check", &consistency_check, py::arg("md"), py::arg("observed"),
          py::arg("threshold") = 1e-6);
    m.def("predict_tensor",
          [](const MDModel& md, int n, int N, double delta_tau) {
              return sample_model(md.poles, md.renormalized(), n, N, delta_tau);
          },
          py::arg("md"), py::arg("n"), py::arg("N"), py::arg("delta_tau"));

    m.def("random_cmps",
          [](int d, const std::string& mode, double mu, double sigma, double eta,
             std::uint64_t seed) {
              return random_cmps(make_spec(d, mode, mu, sigma, eta, seed));
          },
          py::arg("d"), py::arg("mode") = "refined", py::arg("mu") = 0.0,
          py::arg("sigma") = 0.01, py::arg("eta") = 0.1, py::arg("seed") = 0);
    m.def("add_noise",
          [](const CorrelationTensor& ct, double snr, std::uint64_t seed) {
              NoiseSpec ns;
              ns.snr = snr;
              ns.seed = seed;
              return add_noise(ct, ns);
          },
          py::arg("ct"), py::arg("snr"), py::arg("seed") = 0);
    m.def("perturb_M", &perturb_M, py::arg("M"), py::arg("kappa"), py::arg("eps"),
          py::arg("seed") = 0);
    m.def("additional_field_transfer", &additional_field_transfer, py::arg("K"),
          py::arg("R1"), py::arg("R2"), py::arg("eps"));
    m.def("pole_error",
          [](const std::vector<Complex>& a, const std::vector<Complex>& b,
             bool exclude_stationary) {
              PoleErrors pe = pole_error(a, b, exclude_stationary);
              return py::make_tuple(pe.mean_rel, pe.max_rel);
          },
          py::arg("true_poles"), py::arg("est_poles"), py::arg("exclude_stationary") = true);
    m.def("run_benchmark",
          [](const std::string& kind, const std::vector<double>& grid, int trials, int d,
             const std::string& mode, double mu, double sigma, double eta,
             std::uint64_t seed, int points, const std::string& estimator) {
              BenchmarkKind bk = kind == "noise_snr" ? BenchmarkKind::NoiseSnr
                                 : kind == "perturb_M" ? BenchmarkKind::PerturbM
                                                       : BenchmarkKind::AdditionalField;
              BenchConfig cfg;
              cfg.n_samples = points;
              cfg.estimator = estimator_from(estimator);
              return run_benchmark(bk, grid, trials, make_spec(d, mode, mu, sigma, eta, seed),
                                   cfg);
          },
          py::arg("kind"), py::arg("grid"), py::arg("trials"), py::arg("d"),
          py::arg("mode") = "refined", py::arg("mu") = 0.0, py::arg("sigma") = 0.01,
          py::arg("eta") = 0.1, py::arg("seed") = 0, py::arg("points") = 200,
          py::arg("estimator") = "ssmpm");
    m.def("nyquist_delta_tau", &nyquist_delta_tau, py::arg("poles"), py::arg("factor") = 0.5);
    m.def("detect_blocks", &detect_blocks, py::arg("M"), py::arg("tol"));
    m.def("analyze_ll_structure", &analyze_ll_structure, py::arg("state"),
          py::arg("tol") = 1e-6);

    m.def("load_cmps", [](const std::string& path) { return load_cmps(path).state; },
          py::arg("path"));
    m.def("save_cmps",
          [](const std::string& path, const Cmps& state) {
              CmpsFile file;
              file.state = state;
              save_cmps(path, file);
          },
          py::arg("path"), py::arg("state"));
    m.def("load_tensor", &load_tensor, py::arg("path"));
    m.def("save_tensor", &save_tensor, py::arg("path"), py::arg("ct"));
    m.def("load_mdmodel", &load_mdmodel, py::arg("path"));
    m.def("save_mdmodel", &save_mdmodel, py::arg("path"), py::arg("md"));
}
