#ifndef CMPSTOMO_IO_HPP
#define CMPSTOMO_IO_HPP

#include <map>
#include <string>

#include "cmpstomo/simulation.hpp"

namespace cmpstomo {

// All complex numbers are stored as [re, im] pairs; matrices row-major as
// {"rows", "cols", "data"}. See README for the full schemas.

struct CmpsFile {
    Cmps state;
    std::optional<Matrix> K;
    std::map<std::string, double> meta;
};

std::string matrix_to_json_string(const Matrix& m);

void save_cmps(const std::string& path, const CmpsFile& file);
CmpsFile load_cmps(const std::string& path);

void save_tensor(const std::string& path, const CorrelationTensor& ct);
CorrelationTensor load_tensor(const std::string& path);

// CSV alternative for 2-point tensors: header "tau,re,im".
void save_tensor_csv(const std::string& path, const CorrelationTensor& ct);
CorrelationTensor load_tensor_csv(const std::string& path);

void save_mdmodel(const std::string& path, const MDModel& md);
MDModel load_mdmodel(const std::string& path);

void save_reconstructed(const std::string& path, const ReconstructedCmps& rec, int d);
ReconstructedCmps load_reconstructed(const std::string& path);

void save_benchmark_json(const std::string& path, const std::vector<BenchmarkReport>& reports);
void save_benchmark_csv(const std::string& path, const std::vector<BenchmarkReport>& reports);

struct ValidationResult {
    bool ok = false;
    std::string type; // cmps | tensor | mdmodel | reconstructed | benchmark
    std::string message;
};

/// Identifies the file by its fields and checks it against the schema.
ValidationResult validate_file(const std::string& path);

} // namespace cmpstomo

#endif
