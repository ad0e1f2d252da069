#include "doctest.h"

#include "aggrekit/errors.hpp"
#include "aggrekit/experiment.hpp"

#include "json.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace aggrekit;
using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    fs::path p = fs::temp_directory_path() / ("aggrekit_test_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

std::string config_dir() { return AGGREKIT_CONFIG_DIR; }

json heat_json() {
    return json::parse(R"({
      "version": 1, "model": "heat",
      "grid": {"ndim": 2, "points": [16, 16]},
      "params": {"n_species": 1, "d": [0.05]},
      "initial": {"u0": [{"kind": "gaussian", "center": [0.5, 0.5], "width": 0.1}]},
      "schedule": {"T": 0.02, "dt": 0.001, "snapshots": [0.0, 0.01, 0.02]}
    })");
}

std::string stage_of(const json& j) {
    try {
        parse_config(j.dump());
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::config);
        return e.stage();
    }
    FAIL("expected a config error");
    return {};
}

int cli(const std::string& args) {
    const std::string cmd = std::string(AGGREKIT_CLI) + " " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WEXITSTATUS(status);
}

} // namespace

TEST_CASE("config round trip is byte-identical") {
    for (const char* name : {"heat.json", "m1_mu.json", "m2_nu_zero.json", "m2_w_cosine.json", "diffusion_bump.json"}) {
        ScenarioConfig c = load_config(config_dir() + "/" + name);
        const std::string once = serialize_config(c);
        const std::string twice = serialize_config(parse_config(once));
        CHECK(once == twice);
        CHECK(config_hash(c) == config_hash(parse_config(once)));
    }
    ScenarioConfig c = parse_config(heat_json().dump());
    c.schedule.T = 0.1 + 0.2; // not representable as a short decimal
    CHECK(parse_config(serialize_config(c)).schedule.T == c.schedule.T);
    ScenarioConfig moved = c;
    moved.output = "/elsewhere";
    CHECK(config_hash(moved) == config_hash(c));
    moved.seed = 7;
    CHECK(config_hash(moved) != config_hash(c));
}

TEST_CASE("malformed configs name the field path") {
    json j = heat_json();
    j["params"]["colour"] = 1;
    CHECK(stage_of(j) == "config.params.colour");

    j = heat_json();
    j["version"] = 2;
    CHECK(stage_of(j) == "config.version");

    j = heat_json();
    j["params"]["d"][0] = "fast";
    CHECK(stage_of(j) == "config.params.d[0]");

    j = heat_json();
    j.erase("grid");
    CHECK(stage_of(j) == "config.grid");

    j = heat_json();
    j["initial"]["u0"][0]["kind"] = "square";
    CHECK(stage_of(j) == "config.initial.u0[0].kind");

    json m1 = json::parse(slurp(config_dir() + "/m1_mu.json"));
    m1["params"]["kernels"][0][1]["width"] = "wide";
    CHECK(stage_of(m1) == "config.params.kernels[0][1].width");
    m1 = json::parse(slurp(config_dir() + "/m1_mu.json"));
    m1["params"]["kernels"][1][0]["role"] = "scalar_potential_w";
    CHECK(stage_of(m1).rfind("config.params.kernels", 0) == 0);

    j = heat_json();
    j["grid"]["points"] = json::array({12, 16});
    CHECK(stage_of(j).rfind("config.grid", 0) == 0);

    try {
        parse_config("{ not json");
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::config);
    }
}

TEST_CASE("simulate persists one file per snapshot and reruns identically") {
    const fs::path a = scratch("sim_a"), b = scratch("sim_b");
    ScenarioConfig c = parse_config(heat_json().dump());
    RunManifest m = run_simulate(c, {a.string(), 1, std::nullopt});
    CHECK(m.config_hash == config_hash(c));
    CHECK(fs::path(m.directory).filename() == m.config_hash);
    int grd = 0;
    for (const auto& f : m.artifacts) {
        CHECK(fs::exists(fs::path(m.directory) / f));
        grd += f.ends_with(".grd1");
    }
    CHECK(grd == 3);
    CHECK(json::parse(slurp(fs::path(m.directory) / "report.json"))["config_hash"] == m.config_hash);
    CHECK(json::parse(slurp(fs::path(m.directory) / "trajectory.json"))["config_hash"] == m.config_hash);
    const RunManifest back = read_manifest(m.directory);
    CHECK(back.artifacts == m.artifacts);

    RunManifest n = run_simulate(c, {b.string(), 1, std::nullopt});
    CHECK(n.config_hash == m.config_hash);
    CHECK(slurp(fs::path(m.directory) / "manifest.json") == slurp(fs::path(n.directory) / "manifest.json"));
    for (const auto& f : m.artifacts) CHECK(slurp(fs::path(m.directory) / f) == slurp(fs::path(n.directory) / f));
}

TEST_CASE("M2 with a constant potential reproduces the heat run") {
    const fs::path root = scratch("m2_const");
    json h = heat_json();
    ScenarioConfig heat = parse_config(h.dump());
    json m2 = h;
    m2["model"] = "M2";
    m2["params"]["nu"] = json::array({json::array({0.9})});
    m2["params"]["kernels"] = json::parse(
        R"([[{"kind": "gaussian_bump", "role": "scalar_potential_w", "amplitude": 0.0, "offset": 2.5}]])");
    RunManifest a = run_simulate(heat, {root.string(), 1, std::nullopt});
    RunManifest b = run_simulate(parse_config(m2.dump()), {root.string(), 1, std::nullopt});
    CHECK(a.config_hash != b.config_hash);
    for (const auto& f : a.artifacts)
        if (f.ends_with(".grd1")) CHECK(slurp(fs::path(a.directory) / f) == slurp(fs::path(b.directory) / f));
}

TEST_CASE("tables match the report exactly") {
    const fs::path root = scratch("tables");
    ScenarioConfig c = load_config(config_dir() + "/m1_mu.json");
    RunManifest m = run_invert(c, "mu", {root.string(), 1, std::nullopt});
    json rep = json::parse(slurp(fs::path(m.directory) / "report.json"));
    std::ifstream csv(fs::path(m.directory) / "tables.csv");
    std::string line;
    std::getline(csv, line);
    CHECK(line == "quantity,truth,recovered,abs_err,rel_err");
    int rows = 0;
    while (std::getline(csv, line)) {
        std::vector<std::string> cells;
        std::stringstream ss(line);
        for (std::string cell; std::getline(ss, cell, ',');) cells.push_back(cell);
        const json& r = rep["rows"][rows];
        CHECK(cells[0] == r["quantity"].get<std::string>());
        CHECK(std::stod(cells[1]) == r["truth"].get<double>());
        CHECK(std::stod(cells[2]) == r["recovered"].get<double>());
        ++rows;
    }
    CHECK(rows == 4);
    for (const auto& r : rep["rows"]) CHECK(std::abs(r["recovered"].get<double>() - r["truth"].get<double>()) < 1e-10);

    // Empty report: header only.
    const fs::path empty = scratch("tables_empty");
    std::ofstream(empty / "report.json") << R"({"rows": [], "figures": {}})";
    CHECK(emit_tables(empty.string()) == std::vector<std::string>{"tables.csv"});
    CHECK(slurp(empty / "tables.csv") == "quantity,truth,recovered,abs_err,rel_err\n");
    CHECK(format_number(0.1) == "0.10000000000000001");
}

TEST_CASE("thread count does not change outputs") {
    const fs::path a = scratch("threads_a"), b = scratch("threads_b");
    ScenarioConfig c = load_config(config_dir() + "/m2_w_cosine.json");
    RunManifest one = run_invert(c, "w", {a.string(), 1, std::nullopt});
    RunManifest three = run_invert(c, "w", {b.string(), 3, std::nullopt});
    CHECK(one.artifacts == three.artifacts);
    for (const auto& f : one.artifacts) CHECK(slurp(fs::path(one.directory) / f) == slurp(fs::path(three.directory) / f));

    // Cosine potential: the reconstruction carries exactly the +-xi pair.
    Grd1 w = read_grd1((fs::path(one.directory) / "w/w_0_0.grd1").string());
    Spectrum s = dft_forward(w.field);
    const double peak = s.coefficients.abs().maxCoeff();
    int dominant = 0;
    double spurious = 0.0;
    for (Eigen::Index k = 0; k < s.coefficients.size(); ++k) {
        if (std::abs(s.coefficients[k]) > 1e-3 * peak) ++dominant;
        else spurious += std::norm(s.coefficients[k]);
    }
    CHECK(dominant == 2);
    CHECK(spurious <= 1e-8 * peak * peak);
}

TEST_CASE("inversion runs: uniform diffusion and a zero nu entry") {
    const fs::path root = scratch("invert");
    json d = json::parse(slurp(config_dir() + "/diffusion_bump.json"));
    d["diffusion"]["d_kind"] = "uniform";
    RunManifest m = run_invert(parse_config(d.dump()), "diffusion", {root.string(), 1, std::nullopt});
    json rep = json::parse(slurp(fs::path(m.directory) / "report.json"));
    CHECK(rep["status"] == "ok");
    for (const auto& r : rep["rows"]) CHECK(std::abs(r["recovered"].get<double>()) < 1e-2);
    Grd1 dg = read_grd1((fs::path(m.directory) / "d_recovered.grd1").string());
    CHECK((dg.field.values.real() - 1.0).abs().maxCoeff() < 1e-2);

    ScenarioConfig nu = load_config(config_dir() + "/m2_nu_zero.json");
    std::string dir;
    try {
        run_invert(nu, "nu", {root.string(), 1, std::nullopt});
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::non_identifiable);
        CHECK(e.exit_code() == 4);
    }
    json bad = json::parse(slurp(root / config_hash(nu) / "report.json"));
    CHECK(bad["status"] == "error");
    CHECK(bad["error"]["kind"] == "non_identifiable");
    CHECK(bad["rows"].size() == 4);
    CHECK(fs::exists(root / config_hash(nu) / "manifest.json"));

    try {
        run_invert(nu, "mu", {root.string(), 1, std::nullopt});
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::config);
    }
}

TEST_CASE("output root resolution") {
    ScenarioConfig c = parse_config(heat_json().dump());
    ::setenv("AGGREKIT_OUT", "/tmp/from_env", 1);
    CHECK(resolve_out_root(c, {}) == "/tmp/from_env");
    c.output = "/tmp/from_config";
    CHECK(resolve_out_root(c, {}) == "/tmp/from_config");
    CHECK(resolve_out_root(c, {"/tmp/from_flag", 1, std::nullopt}) == "/tmp/from_flag");
    ::unsetenv("AGGREKIT_OUT");
    c.output.clear();
    CHECK(resolve_out_root(c, {}) == "out");
}

TEST_CASE("command line exit codes") {
    const fs::path root = scratch("cli");
    const std::string cfg = config_dir();
    const std::string out = " --out " + root.string();
    CHECK(cli("simulate --config " + cfg + "/heat.json" + out) == 0);
    CHECK(cli("report --config " + cfg + "/heat.json" + out) == 0);
    CHECK(cli("simulate" + out) == 2);
    CHECK(cli("no-such-verb") == 2);
    CHECK(cli("invert-advection --config " + cfg + "/m2_nu_zero.json" + out) == 4);
    CHECK(cli("invert-kernel --kind mu --config " + cfg + "/m1_mu.json" + out) == 2);

    // A malformed config is a structured error, not a crash.
    std::ofstream(root / "broken.json") << R"({"version": 1, "model": "M3"})";
    CHECK(cli("simulate --config " + (root / "broken.json").string() + out) == 2);

    // Drift far beyond the CFL bound is a numerical failure.
    json m1 = json::parse(slurp(cfg + "/m1_mu.json"));
    m1["params"]["mu"] = json::array({json::array({5e4, 0.0}), json::array({0.0, 5e4})});
    m1["initial"] = json::parse(R"({"u0": [{"kind": "constant", "value": 1.0},
                                            {"kind": "gaussian", "center": [0.5, 0.5], "width": 0.1}]})");
    m1["schedule"] = json::parse(R"({"T": 0.01, "dt": 0.001})");
    std::ofstream(root / "cfl.json") << m1.dump();
    CHECK(cli("simulate --config " + (root / "cfl.json").string() + out) == 3);
}
