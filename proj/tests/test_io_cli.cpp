#include <doctest.h>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "cmpstomo/io.hpp"
#include "oracles.hpp"

using namespace cmpstomo;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               ("cmpstomo_test_" + std::to_string(std::rand()) +
                std::to_string(std::chrono::steady_clock::now().time_since_epoch().count() % 100000));
        fs::create_directories(path);
    }
    ~TempDir() { std::error_code ec; fs::remove_all(path, ec); }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

#ifdef CMPSTOMO_CLI_PATH
int run_cli(const std::string& args) {
    const std::string cmd = std::string(CMPSTOMO_CLI_PATH) + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WEXITSTATUS(status);
}
#endif

std::string read_file(const std::string& path) {
    std::ifstream in(path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

} // namespace

TEST_CASE("cMPS file round trip preserves every bit") {
    TempDir dir;
    Cmps s = oracles::seeded_state(3, 12345);
    CmpsFile file;
    file.state = s;
    file.meta["c"] = 1.25;
    save_cmps(dir.file("s.json"), file);
    CmpsFile back = load_cmps(dir.file("s.json"));
    CHECK((back.state.Q - s.Q).cwiseAbs().maxCoeff() == 0.0);
    CHECK((back.state.R - s.R).cwiseAbs().maxCoeff() == 0.0);
    CHECK(back.meta.at("c") == 1.25);
    CHECK(!back.K.has_value());

    file.K = Matrix::Identity(3, 3);
    save_cmps(dir.file("sk.json"), file);
    CHECK(load_cmps(dir.file("sk.json")).K.has_value());
}

TEST_CASE("tensor JSON and CSV round trips") {
    TempDir dir;
    Cmps s = oracles::seeded_state(2, 6);
    SpectralData sd = spectral_decompose(build_transfer(s), s.R);
    CorrelationTensor ct = sample(sd, 2, 16, 0.3);

    save_tensor(dir.file("t.json"), ct);
    CorrelationTensor back = load_tensor(dir.file("t.json"));
    CHECK(back.n == 2);
    CHECK(back.N == 16);
    CHECK(back.delta_tau == 0.3);
    for (size_t i = 0; i < ct.values.size(); ++i) CHECK(back.values[i] == ct.values[i]);

    save_tensor_csv(dir.file("t.csv"), ct);
    CorrelationTensor csv = load_tensor_csv(dir.file("t.csv"));
    CHECK(csv.N == 16);
    for (size_t i = 0; i < ct.values.size(); ++i)
        CHECK(std::abs(csv.values[i] - ct.values[i]) < 1e-15 * (1 + std::abs(ct.values[i])));
}

TEST_CASE("tensor schema violations are reported") {
    TempDir dir;
    {
        std::ofstream out(dir.file("bad.json"));
        out << R"({"n": 3, "N": 4, "delta_tau": 0.1, "amputated": false, "values": [[1,0]]})";
    }
    CHECK_THROWS_WITH_AS(load_tensor(dir.file("bad.json")),
                         doctest::Contains("N^(n-1)"), IoError);
    {
        std::ofstream out(dir.file("trunc.json"));
        out << R"({"n": 2, )";
    }
    CHECK_THROWS_WITH_AS(load_tensor(dir.file("trunc.json")),
                         doctest::Contains("parse error"), IoError);
    CHECK_THROWS_AS(load_tensor(dir.file("missing.json")), IoError);
}

TEST_CASE("mdmodel and reconstructed files round trip") {
    TempDir dir;
    Cmps s = oracles::seeded_state(2, 31);
    SpectralData sd = spectral_decompose(build_transfer(s), s.R);
    MDModel md = md_from_spectral(sd);
    save_mdmodel(dir.file("md.json"), md);
    MDModel back = load_mdmodel(dir.file("md.json"));
    CHECK(back.d == md.d);
    CHECK(back.kappa == md.kappa);
    CHECK(back.Mhat11 == md.Mhat11);
    CHECK((back.M - md.M).cwiseAbs().maxCoeff() == 0.0);

    ReconstructedCmps rec;
    rec.R_rec = Matrix::Identity(2, 2);
    rec.Q_rec = Matrix::Zero(2, 2);
    rec.quality.kron_defect = 1e-9;
    save_reconstructed(dir.file("rec.json"), rec, 2);
    ReconstructedCmps rback = load_reconstructed(dir.file("rec.json"));
    CHECK(rback.quality.kron_defect == 1e-9);
    CHECK(!rback.K_rec.has_value());
}

TEST_CASE("validate_file identifies and checks all formats") {
    TempDir dir;
    Cmps s = oracles::seeded_state(2, 77);
    CmpsFile file;
    file.state = s;
    save_cmps(dir.file("s.json"), file);
    SpectralData sd = spectral_decompose(build_transfer(s), s.R);
    save_tensor(dir.file("t.json"), sample(sd, 2, 8, 0.2));
    save_mdmodel(dir.file("md.json"), md_from_spectral(sd));

    CHECK(validate_file(dir.file("s.json")).type == "cmps");
    CHECK(validate_file(dir.file("s.json")).ok);
    CHECK(validate_file(dir.file("t.json")).type == "tensor");
    CHECK(validate_file(dir.file("t.json")).ok);
    CHECK(validate_file(dir.file("md.json")).type == "mdmodel");

    {
        std::ofstream out(dir.file("junk.json"));
        out << R"({"foo": 1})";
    }
    CHECK(!validate_file(dir.file("junk.json")).ok);
}

#ifdef CMPSTOMO_CLI_PATH

TEST_CASE("cli: generate is deterministic and validates flags") {
    TempDir dir;
    const std::string out1 = dir.file("a.json"), out2 = dir.file("b.json");
    CHECK(run_cli("generate --d 2 --mode refined --sigma 0.01 --eta 0.1 --seed 7 -o " + out1) == 0);
    CHECK(run_cli("generate --d 2 --mode refined --sigma 0.01 --eta 0.1 --seed 7 -o " + out2) == 0);
    CHECK(read_file(out1) == read_file(out2));
    CHECK(read_file(out1).find("\"Q\"") != std::string::npos);

    CHECK(run_cli("generate --d 0 -o " + dir.file("x.json")) == 2);
    CHECK(run_cli("generate --bogus-flag 1 -o " + dir.file("y.json")) == 2);
    CHECK(run_cli("generate --d 2 -o /nonexistent_dir_zz/x.json") == 1);
}

TEST_CASE("cli: correlate, noise, reconstruct, predict chain") {
    TempDir dir;
    const std::string s = dir.file("s.json");
    REQUIRE(run_cli("generate --d 2 --seed 17 -o " + s) == 0);
    REQUIRE(run_cli("correlate -i " + s + " -o " + dir.file("c3.json") + " --n 3 --N 40") == 0);
    REQUIRE(run_cli("correlate -i " + s + " -o " + dir.file("c2.json") + " --n 2 --N 40") == 0);

    CHECK(run_cli("reconstruct --c3 " + dir.file("c3.json") + " --c2 " + dir.file("c2.json") +
                  " -o " + dir.file("rec.json") + " --md-out " + dir.file("md.json") +
                  " --report " + dir.file("rep.json")) == 0);
    CHECK(validate_file(dir.file("rec.json")).ok);
    CHECK(validate_file(dir.file("md.json")).ok);

    // predictions reproduce a held-out 4-point function
    CorrelationTensor c3 = load_tensor(dir.file("c3.json"));
    char dt[64];
    std::snprintf(dt, sizeof dt, "%.17g", c3.delta_tau);
    REQUIRE(run_cli("correlate -i " + s + " -o " + dir.file("c4.json") +
                    " --n 4 --N 8 --delta-tau " + dt) == 0);
    CHECK(run_cli("predict -i " + dir.file("md.json") + " --n 4 --N 8 --delta-tau " +
                  std::string(dt) + " --compare " + dir.file("c4.json")) == 0);

    // corrupted input -> exit 1; delta_tau mismatch -> exit 3
    {
        std::ofstream bad(dir.file("broken.json"));
        bad << "{ not json";
    }
    CHECK(run_cli("reconstruct --c3 " + dir.file("broken.json")) == 1);
    CHECK(run_cli("correlate -i " + s + " -o " + dir.file("c2b.json") +
                  " --n 2 --N 40 --delta-tau 0.12345") == 0);
    CHECK(run_cli("reconstruct --c3 " + dir.file("c3.json") + " --c2 " + dir.file("c2b.json")) == 3);

    REQUIRE(run_cli("noise -i " + dir.file("c2.json") + " -o " + dir.file("c2n.json") +
                    " --snr 1000 --seed 3") == 0);
    CHECK(validate_file(dir.file("c2n.json")).ok);
}

TEST_CASE("cli: analyze and validate") {
    TempDir dir;
    REQUIRE(run_cli("generate --d 2 --seed 4 -o " + dir.file("s.json")) == 0);
    CHECK(run_cli("analyze -i " + dir.file("s.json") + " -o " + dir.file("ll.json")) == 0);
    CHECK(read_file(dir.file("ll.json")).find("degenerate_pairs_total") != std::string::npos);
    CHECK(run_cli("validate " + dir.file("s.json")) == 0);
    CHECK(run_cli("validate " + dir.file("nope.json")) == 1);
    {
        std::ofstream out(dir.file("junk.json"));
        out << R"({"foo": 1})";
    }
    CHECK(run_cli("validate " + dir.file("junk.json")) == 3);
}

#endif // CMPSTOMO_CLI_PATH
