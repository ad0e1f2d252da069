#pragma once

#include "aggrekit/diffusion_inversion.hpp"
#include "aggrekit/forward_solver.hpp"
#include "aggrekit/kernel_inversion.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace aggrekit {

constexpr const char* tool_version = "aggrekit 0.1.0";
constexpr int config_version = 1;

// Analytic initial pattern sampled on the grid.
//   zero, constant(value), gaussian(amplitude, center, width),
//   cosine(background + amplitude cos(xi.x)) with xi the lattice mode.
struct FieldSpec {
    std::string kind = "zero";
    double value = 0.0;
    double amplitude = 1.0;
    Point center{0.5, 0.5};
    double width = 0.1;
    std::array<int, 2> mode{1, 0};
    double background = 0.0;

    Field sample(const TorusGrid& g) const;
};

struct ProbeConfig {
    std::string kind = "mu"; // mu, normalization, nu, w
    std::vector<std::array<int, 2>> modes{{1, 0}};
    bool constant_probes = false;
    Realization realization = Realization::complex_wave;
    bool extracted = false;
    double T = 0.05;
    double dt = 1e-3;
    std::vector<double> epsilons{1e-2, 5e-3, 2.5e-3};
    double background = 1.0;
    std::optional<int> cutoff;
};

struct DiffusionScenario {
    std::string d_kind = "bump"; // bump or uniform
    double amplitude = 0.1;
    double radius = 0.5;
    int receivers = 12;
    double receiver_radius = 0.85;
    double receiver_phase = 0.1;
    int sources = 8;
    double source_radius = 1.3;
    double jitter = 0.0; // random angular jitter of the rings, drawn from the seed
    std::vector<double> p_values = default_p_values();
    std::optional<double> alpha;
    double recon_radius = 0.6;
    double recon_spacing = 0.1;
    double omega_radius = 1.0;
    int remainder_columns = 3;
    double fine_h = 0.025;
    int species = 0;

    std::function<double(const Point&)> d() const;
};

struct ScenarioConfig {
    int version = config_version;
    Model model = Model::heat;
    TorusGrid grid = TorusGrid::square(32);
    ModelParams params;
    std::vector<FieldSpec> u0, f1, f2;
    std::vector<double> epsilons{1e-2, 5e-3, 2.5e-3};
    Schedule schedule;
    std::optional<ProbeConfig> probes;
    std::optional<DiffusionScenario> diffusion;
    std::string output;
    std::uint64_t seed = 0;
};

// Strict parse: unknown fields and type mismatches raise a config error naming
// the field path, e.g. "config.params.kernels[0][1].width".
ScenarioConfig parse_config(const std::string& text);
ScenarioConfig load_config(const std::string& path);
// Canonical text: sorted keys, two-space indent, shortest round-trip numbers.
std::string serialize_config(const ScenarioConfig& cfg);
// FNV-1a 64 of the canonical text with the output directory blanked, as 16 hex digits.
std::string config_hash(const ScenarioConfig& cfg);

struct RunContext {
    std::string out_root; // empty: config output, then AGGREKIT_OUT, then "out"
    int threads = 1;
    std::optional<std::uint64_t> seed;
};

struct RunManifest {
    std::string config_hash;
    std::string tool_version = aggrekit::tool_version;
    std::string verb;
    std::string directory;                                 // <root>/<config_hash>
    std::vector<std::string> artifacts;                    // relative to directory
    std::vector<std::pair<std::string, double>> timings;   // written to timings.json only
};

std::string resolve_out_root(const ScenarioConfig& cfg, const RunContext& ctx);

RunManifest run_simulate(const ScenarioConfig& cfg, const RunContext& ctx);
RunManifest run_linearize(const ScenarioConfig& cfg, const RunContext& ctx);
// kind: diffusion, mu, normalization, nu, w. Stage errors are written into
// report.json before they propagate.
RunManifest run_invert(const ScenarioConfig& cfg, const std::string& kind, const RunContext& ctx);

// Reads report.json in the run directory and writes tables.csv plus one
// fig_<name>.csv per figure series. Returns the written file names.
std::vector<std::string> emit_tables(const std::string& directory);

std::string format_number(double v); // 17 significant digits
RunManifest read_manifest(const std::string& directory);

} // namespace aggrekit
