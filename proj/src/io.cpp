#include "cmpstomo/io.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

namespace cmpstomo {

using nlohmann::json;

namespace {

json complex_to_json(const Complex& z) { return json::array({z.real(), z.imag()}); }

Complex complex_from_json(const json& j) {
    if (!j.is_array() || j.size() != 2 || !j[0].is_number() || !j[1].is_number())
        throw IoError("complex value must be a [re, im] pair");
    return Complex(j[0].get<double>(), j[1].get<double>());
}

json matrix_to_json(const Matrix& m) {
    json data = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j)
            data.push_back(complex_to_json(m(i, j)));
    return json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::move(data)}};
}

Matrix matrix_from_json(const json& j) {
    if (!j.is_object() || !j.contains("rows") || !j.contains("cols") || !j.contains("data"))
        throw IoError("matrix object needs rows, cols and data fields");
    const Eigen::Index rows = j.at("rows").get<Eigen::Index>();
    const Eigen::Index cols = j.at("cols").get<Eigen::Index>();
    const json& data = j.at("data");
    if (rows < 0 || cols < 0 || static_cast<Eigen::Index>(data.size()) != rows * cols)
        throw IoError("matrix data length does not match rows*cols");
    Matrix m(rows, cols);
    Eigen::Index k = 0;
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index jj = 0; jj < cols; ++jj)
            m(i, jj) = complex_from_json(data[static_cast<size_t>(k++)]);
    return m;
}

json read_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw IoError("parse error in " + path + ": " + e.what());
    }
}

void write_json(const std::string& path, const json& j) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    out << j.dump(2) << "\n";
    if (!out) throw IoError("write failed for " + path);
}

} // namespace

std::string matrix_to_json_string(const Matrix& m) { return matrix_to_json(m).dump(); }

void save_cmps(const std::string& path, const CmpsFile& file) {
    json j{{"d", file.state.d},
           {"Q", matrix_to_json(file.state.Q)},
           {"R", matrix_to_json(file.state.R)},
           {"K", file.K ? matrix_to_json(*file.K) : json(nullptr)},
           {"meta", json::object()}};
    for (const auto& [k, v] : file.meta) j["meta"][k] = v;
    write_json(path, j);
}

CmpsFile load_cmps(const std::string& path) {
    const json j = read_json(path);
    if (!j.contains("d") || !j.contains("Q") || !j.contains("R"))
        throw IoError(path + ": cMPS file needs d, Q and R fields");
    CmpsFile file;
    Matrix Q = matrix_from_json(j.at("Q"));
    Matrix R = matrix_from_json(j.at("R"));
    const int d = j.at("d").get<int>();
    if (Q.rows() != d || R.rows() != d)
        throw IoError(path + ": matrix dimensions disagree with d");
    file.state = Cmps(std::move(Q), std::move(R));
    if (j.contains("K") && !j.at("K").is_null()) file.K = matrix_from_json(j.at("K"));
    if (j.contains("meta") && j.at("meta").is_object())
        for (const auto& [k, v] : j.at("meta").items())
            if (v.is_number()) file.meta[k] = v.get<double>();
    return file;
}

void save_tensor(const std::string& path, const CorrelationTensor& ct) {
    json values = json::array();
    for (const Complex& v : ct.values) values.push_back(complex_to_json(v));
    write_json(path, json{{"n", ct.n},
                          {"N", ct.N},
                          {"delta_tau", ct.delta_tau},
                          {"amputated", ct.amputated},
                          {"values", std::move(values)}});
}

CorrelationTensor load_tensor(const std::string& path) {
    const json j = read_json(path);
    for (const char* f : {"n", "N", "delta_tau", "amputated", "values"})
        if (!j.contains(f)) throw IoError(path + ": tensor file missing field " + f);
    CorrelationTensor ct;
    ct.n = j.at("n").get<int>();
    ct.N = j.at("N").get<int>();
    ct.delta_tau = j.at("delta_tau").get<double>();
    ct.amputated = j.at("amputated").get<bool>();
    if (ct.n < 2 || ct.N < 1 || !(ct.delta_tau > 0))
        throw IoError(path + ": invalid tensor header");
    std::int64_t expect = 1;
    for (int a = 0; a < ct.n - 1; ++a) expect *= ct.N;
    const json& values = j.at("values");
    if (static_cast<std::int64_t>(values.size()) != expect)
        throw IoError(path + ": tensor needs N^(n-1) values");
    ct.values.reserve(values.size());
    for (const auto& v : values) ct.values.push_back(complex_from_json(v));
    return ct;
}

void save_tensor_csv(const std::string& path, const CorrelationTensor& ct) {
    require(ct.n == 2, "CSV export is defined for 2-point tensors");
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    out << "tau,re,im\n";
    out.precision(17);
    for (int l = 0; l < ct.N; ++l)
        out << l * ct.delta_tau << "," << ct.values[static_cast<size_t>(l)].real() << ","
            << ct.values[static_cast<size_t>(l)].imag() << "\n";
}

CorrelationTensor load_tensor_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    std::string line;
    if (!std::getline(in, line) || line.rfind("tau,re,im", 0) != 0)
        throw IoError(path + ": expected header tau,re,im");
    std::vector<double> taus;
    CorrelationTensor ct;
    ct.n = 2;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        double tau, re, im;
        char c1, c2;
        if (!(ls >> tau >> c1 >> re >> c2 >> im) || c1 != ',' || c2 != ',')
            throw IoError(path + ": malformed CSV row '" + line + "'");
        taus.push_back(tau);
        ct.values.emplace_back(re, im);
    }
    if (taus.size() < 2) throw IoError(path + ": need at least two samples");
    ct.N = static_cast<int>(taus.size());
    ct.delta_tau = taus[1] - taus[0];
    if (!(ct.delta_tau > 0)) throw IoError(path + ": non-increasing tau column");
    return ct;
}

void save_mdmodel(const std::string& path, const MDModel& md) {
    json poles = json::array();
    for (const Complex& z : md.poles) poles.push_back(complex_to_json(z));
    write_json(path, json{{"d", md.d},
                          {"poles", std::move(poles)},
                          {"M", matrix_to_json(md.M)},
                          {"Mhat11", md.Mhat11},
                          {"kappa", md.kappa},
                          {"symmetry_defect", md.symmetry_defect}});
}

MDModel load_mdmodel(const std::string& path) {
    const json j = read_json(path);
    for (const char* f : {"d", "poles", "M", "Mhat11", "kappa"})
        if (!j.contains(f)) throw IoError(path + ": MD model missing field " + f);
    MDModel md;
    md.d = j.at("d").get<int>();
    md.kappa = j.at("kappa").get<int>();
    md.Mhat11 = j.at("Mhat11").get<double>();
    for (const auto& v : j.at("poles")) md.poles.push_back(complex_from_json(v));
    md.M = matrix_from_json(j.at("M"));
    if (j.contains("symmetry_defect")) md.symmetry_defect = j.at("symmetry_defect").get<double>();
    if (md.M.rows() != static_cast<Eigen::Index>(md.poles.size()))
        throw IoError(path + ": M dimension disagrees with the pole count");
    if (!(md.Mhat11 > 0)) throw IoError(path + ": Mhat11 must be positive");
    return md;
}

void save_reconstructed(const std::string& path, const ReconstructedCmps& rec, int d) {
    json j{{"d", d},
           {"Q", matrix_to_json(rec.Q_rec)},
           {"R", matrix_to_json(rec.R_rec)},
           {"K", rec.K_rec ? matrix_to_json(*rec.K_rec) : json(nullptr)},
           {"meta", json::object()},
           {"gauge_note", {{"phi", rec.gauge_note.phi}, {"chi", rec.gauge_note.chi}}},
           {"quality",
            {{"symmetry_defect", rec.quality.symmetry_defect},
             {"kron_defect", rec.quality.kron_defect},
             {"rms_fit_error_c3", rec.quality.rms_fit_error_c3},
             {"rms_fit_error_c2", rec.quality.rms_fit_error_c2},
             {"pairing_residual", rec.quality.pairing_residual},
             {"gauge_residual", rec.quality.gauge_residual},
             {"hermiticity_defect", rec.quality.hermiticity_defect},
             {"notes", rec.quality.notes}}}};
    write_json(path, j);
}

ReconstructedCmps load_reconstructed(const std::string& path) {
    const json j = read_json(path);
    for (const char* f : {"d", "Q", "R", "gauge_note", "quality"})
        if (!j.contains(f)) throw IoError(path + ": reconstructed file missing field " + f);
    ReconstructedCmps rec;
    rec.Q_rec = matrix_from_json(j.at("Q"));
    rec.R_rec = matrix_from_json(j.at("R"));
    if (j.contains("K") && !j.at("K").is_null()) rec.K_rec = matrix_from_json(j.at("K"));
    const json& q = j.at("quality");
    rec.quality.symmetry_defect = q.value("symmetry_defect", 0.0);
    rec.quality.kron_defect = q.value("kron_defect", 0.0);
    rec.quality.rms_fit_error_c3 = q.value("rms_fit_error_c3", 0.0);
    rec.quality.rms_fit_error_c2 = q.value("rms_fit_error_c2", 0.0);
    rec.quality.pairing_residual = q.value("pairing_residual", 0.0);
    rec.quality.gauge_residual = q.value("gauge_residual", 0.0);
    rec.quality.hermiticity_defect = q.value("hermiticity_defect", 0.0);
    rec.quality.notes = q.value("notes", std::string());
    return rec;
}

void save_benchmark_json(const std::string& path, const std::vector<BenchmarkReport>& reports) {
    json arr = json::array();
    for (const auto& r : reports)
        arr.push_back(json{{"grid_value", r.grid_value},
                           {"trials", r.trials},
                           {"success_rate_mean_criterion", r.success_rate_mean_criterion},
                           {"success_rate_max_criterion", r.success_rate_max_criterion},
                           {"error_quantiles", r.error_quantiles},
                           {"failures", r.failures},
                           {"config", r.config_echo}});
    write_json(path, arr);
}

void save_benchmark_csv(const std::string& path, const std::vector<BenchmarkReport>& reports) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    out << "grid_value,rate_mean_criterion,rate_max_criterion,trials\n";
    out.precision(17);
    for (const auto& r : reports)
        out << r.grid_value << "," << r.success_rate_mean_criterion << ","
            << r.success_rate_max_criterion << "," << r.trials << "\n";
}

ValidationResult validate_file(const std::string& path) {
    ValidationResult res;
    json j;
    try {
        j = read_json(path);
    } catch (const IoError& e) {
        // Fall back to the CSV readers before giving up.
        try {
            load_tensor_csv(path);
            res.ok = true;
            res.type = "tensor-csv";
            res.message = "valid 2-point CSV tensor";
            return res;
        } catch (...) {
        }
        res.message = e.what();
        return res;
    }
    try {
        if (j.is_array()) {
            res.type = "benchmark";
            for (const auto& r : j)
                for (const char* f :
                     {"grid_value", "trials", "success_rate_mean_criterion",
                      "success_rate_max_criterion"})
                    if (!r.contains(f)) throw IoError(std::string("missing field ") + f);
        } else if (j.contains("values")) {
            res.type = "tensor";
            load_tensor(path);
        } else if (j.contains("poles")) {
            res.type = "mdmodel";
            load_mdmodel(path);
        } else if (j.contains("gauge_note")) {
            res.type = "reconstructed";
            load_reconstructed(path);
        } else if (j.contains("Q")) {
            res.type = "cmps";
            load_cmps(path);
        } else {
            res.message = "unrecognised file type";
            return res;
        }
    } catch (const std::exception& e) {
        res.message = e.what();
        return res;
    }
    res.ok = true;
    res.message = "valid " + res.type + " file";
    return res;
}

} // namespace cmpstomo
