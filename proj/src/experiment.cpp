#include "aggrekit/experiment.hpp"

#include "aggrekit/errors.hpp"
#include "aggrekit/variation.hpp"

#include "json.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>
#include <set>
#include <sstream>

namespace aggrekit {

using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr double pi = std::numbers::pi;

[[noreturn]] void bad(const std::string& path, const std::string& what) { throw config_error(path, what); }

void check_keys(const json& j, const std::string& path, std::initializer_list<const char*> allowed,
                std::initializer_list<const char*> required = {}) {
    if (!j.is_object()) bad(path, "expected an object");
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool ok = false;
        for (const char* a : allowed) ok = ok || it.key() == a;
        if (!ok) bad(path + "." + it.key(), "unknown field");
    }
    for (const char* r : required)
        if (!j.contains(r)) bad(path + "." + r, "missing required field");
}

double number(const json& j, const std::string& path) {
    if (!j.is_number()) bad(path, "expected a number");
    const double v = j.get<double>();
    if (!std::isfinite(v)) bad(path, "expected a finite number");
    return v;
}

int integer(const json& j, const std::string& path) {
    if (!j.is_number_integer()) bad(path, "expected an integer");
    const auto v = j.get<std::int64_t>();
    if (v < std::numeric_limits<int>::min() || v > std::numeric_limits<int>::max()) bad(path, "integer out of range");
    return int(v);
}

bool boolean(const json& j, const std::string& path) {
    if (!j.is_boolean()) bad(path, "expected true or false");
    return j.get<bool>();
}

std::string text(const json& j, const std::string& path) {
    if (!j.is_string()) bad(path, "expected a string");
    return j.get<std::string>();
}

const json& array(const json& j, const std::string& path) {
    if (!j.is_array()) bad(path, "expected an array");
    return j;
}

std::vector<double> numbers(const json& j, const std::string& path) {
    std::vector<double> v;
    for (std::size_t k = 0; k < array(j, path).size(); ++k) v.push_back(number(j[k], path + "[" + std::to_string(k) + "]"));
    return v;
}

std::array<int, 2> int_pair(const json& j, const std::string& path) {
    if (!j.is_array() || j.size() != 2) bad(path, "expected two integers");
    return {integer(j[0], path + "[0]"), integer(j[1], path + "[1]")};
}

Point point(const json& j, const std::string& path) {
    if (!j.is_array() || j.size() != 2) bad(path, "expected two numbers");
    return {number(j[0], path + "[0]"), number(j[1], path + "[1]")};
}

Eigen::MatrixXd matrix(const json& j, const std::string& path) {
    array(j, path);
    const Eigen::Index r = Eigen::Index(j.size());
    if (r == 0) return {};
    const Eigen::Index c = Eigen::Index(array(j[0], path + "[0]").size());
    Eigen::MatrixXd m(r, c);
    for (Eigen::Index i = 0; i < r; ++i) {
        const std::string pi_ = path + "[" + std::to_string(i) + "]";
        if (!j[i].is_array() || Eigen::Index(j[i].size()) != c) bad(pi_, "rows must have equal length");
        for (Eigen::Index k = 0; k < c; ++k) m(i, k) = number(j[i][k], pi_ + "[" + std::to_string(k) + "]");
    }
    return m;
}

template <typename T, typename F>
void opt(const json& j, const char* key, const std::string& path, T& out, F read) {
    if (j.contains(key)) out = read(j.at(key), path + "." + key);
}

// Library validation errors carry short stage names; re-anchor them under the config root.
template <typename F>
void rebase(F&& f) {
    try {
        f();
    } catch (const Error& e) {
        std::string what = e.what();
        if (!e.stage().empty() && what.rfind(e.stage() + ": ", 0) == 0) what = what.substr(e.stage().size() + 2);
        throw Error(e.kind(), "config." + e.stage(), what);
    }
}

FieldSpec read_field(const json& j, const std::string& path) {
    check_keys(j, path, {"kind", "value", "amplitude", "center", "width", "mode", "background"}, {"kind"});
    FieldSpec f;
    f.kind = text(j["kind"], path + ".kind");
    if (f.kind != "zero" && f.kind != "constant" && f.kind != "gaussian" && f.kind != "cosine")
        bad(path + ".kind", "expected zero, constant, gaussian or cosine");
    opt(j, "value", path, f.value, number);
    opt(j, "amplitude", path, f.amplitude, number);
    opt(j, "center", path, f.center, point);
    opt(j, "width", path, f.width, number);
    opt(j, "mode", path, f.mode, int_pair);
    opt(j, "background", path, f.background, number);
    if (f.kind == "gaussian" && !(f.width > 0.0)) bad(path + ".width", "must be positive");
    return f;
}

std::vector<FieldSpec> read_fields(const json& j, const std::string& path) {
    std::vector<FieldSpec> v;
    for (std::size_t k = 0; k < array(j, path).size(); ++k) v.push_back(read_field(j[k], path + "[" + std::to_string(k) + "]"));
    return v;
}

KernelSpec read_kernel(const json& j, const std::string& path) {
    check_keys(j, path, {"kind", "role", "amplitude", "width", "radius", "mode", "offset"}, {"kind", "role"});
    KernelSpec k;
    rebase([&] { k.kind = kernel_kind_from(text(j["kind"], path + ".kind")); });
    if (k.kind == KernelKind::grid_sampled) bad(path + ".kind", "grid_sampled kernels cannot be configured");
    rebase([&] { k.role = kernel_role_from(text(j["role"], path + ".role")); });
    opt(j, "amplitude", path, k.amplitude, number);
    opt(j, "width", path, k.width, number);
    opt(j, "radius", path, k.radius, number);
    opt(j, "mode", path, k.mode, int_pair);
    opt(j, "offset", path, k.offset, number);
    return k;
}

Realization realization_from(const std::string& s, const std::string& path) {
    if (s == "complex_wave") return Realization::complex_wave;
    if (s == "cosine") return Realization::cosine;
    bad(path, "expected complex_wave or cosine");
}

std::string to_string(Realization r) { return r == Realization::cosine ? "cosine" : "complex_wave"; }

ProbeConfig read_probes(const json& j, const std::string& path) {
    check_keys(j, path,
               {"kind", "modes", "constant_probes", "realization", "extracted", "T", "dt", "epsilons", "background",
                "cutoff"},
               {"kind"});
    ProbeConfig p;
    p.kind = text(j["kind"], path + ".kind");
    if (p.kind != "mu" && p.kind != "normalization" && p.kind != "nu" && p.kind != "w")
        bad(path + ".kind", "expected mu, normalization, nu or w");
    if (j.contains("modes")) {
        p.modes.clear();
        const json& m = array(j["modes"], path + ".modes");
        for (std::size_t k = 0; k < m.size(); ++k) p.modes.push_back(int_pair(m[k], path + ".modes[" + std::to_string(k) + "]"));
    }
    opt(j, "constant_probes", path, p.constant_probes, boolean);
    if (j.contains("realization")) p.realization = realization_from(text(j["realization"], path + ".realization"), path + ".realization");
    opt(j, "extracted", path, p.extracted, boolean);
    opt(j, "T", path, p.T, number);
    opt(j, "dt", path, p.dt, number);
    opt(j, "epsilons", path, p.epsilons, numbers);
    opt(j, "background", path, p.background, number);
    if (j.contains("cutoff")) p.cutoff = integer(j["cutoff"], path + ".cutoff");
    if (!(p.T > 0.0)) bad(path + ".T", "must be positive");
    if (!(p.dt > 0.0)) bad(path + ".dt", "must be positive");
    return p;
}

DiffusionScenario read_diffusion(const json& j, const std::string& path) {
    check_keys(j, path,
               {"d_kind", "amplitude", "radius", "receivers", "receiver_radius", "receiver_phase", "sources",
                "source_radius", "jitter", "p_values", "alpha", "recon_radius", "recon_spacing", "omega_radius",
                "remainder_columns", "fine_h", "species"});
    DiffusionScenario d;
    opt(j, "d_kind", path, d.d_kind, text);
    if (d.d_kind != "bump" && d.d_kind != "uniform") bad(path + ".d_kind", "expected bump or uniform");
    opt(j, "amplitude", path, d.amplitude, number);
    opt(j, "radius", path, d.radius, number);
    opt(j, "receivers", path, d.receivers, integer);
    opt(j, "receiver_radius", path, d.receiver_radius, number);
    opt(j, "receiver_phase", path, d.receiver_phase, number);
    opt(j, "sources", path, d.sources, integer);
    opt(j, "source_radius", path, d.source_radius, number);
    opt(j, "jitter", path, d.jitter, number);
    opt(j, "p_values", path, d.p_values, numbers);
    if (j.contains("alpha")) d.alpha = number(j["alpha"], path + ".alpha");
    opt(j, "recon_radius", path, d.recon_radius, number);
    opt(j, "recon_spacing", path, d.recon_spacing, number);
    opt(j, "omega_radius", path, d.omega_radius, number);
    opt(j, "remainder_columns", path, d.remainder_columns, integer);
    opt(j, "fine_h", path, d.fine_h, number);
    opt(j, "species", path, d.species, integer);
    if (!(d.radius > 0.0)) bad(path + ".radius", "must be positive");
    if (d.radius > d.omega_radius) bad(path + ".radius", "support of m must lie inside the measurement region");
    if (d.receivers < 1) bad(path + ".receivers", "must be positive");
    if (d.sources < 1) bad(path + ".sources", "must be positive");
    if (!(d.receiver_radius > d.radius) || d.receiver_radius > d.omega_radius)
        bad(path + ".receiver_radius", "receivers must lie in the measurement region, off the support of m");
    if (!(d.source_radius > d.radius)) bad(path + ".source_radius", "sources must lie off the support of m");
    if (d.jitter < 0.0 || d.jitter > 0.5) bad(path + ".jitter", "must lie in [0, 0.5]");
    if (d.alpha && !(*d.alpha > 0.0)) bad(path + ".alpha", "must be positive");
    if (d.species < 0) bad(path + ".species", "must be non-negative");
    return d;
}

json write_field(const FieldSpec& f) {
    return {{"kind", f.kind},   {"value", f.value},         {"amplitude", f.amplitude},  {"center", f.center},
            {"width", f.width}, {"mode", f.mode},           {"background", f.background}};
}

json write_matrix(const Eigen::MatrixXd& m) {
    json a = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        json r = json::array();
        for (Eigen::Index k = 0; k < m.cols(); ++k) r.push_back(m(i, k));
        a.push_back(r);
    }
    return a;
}

json write_config(const ScenarioConfig& c) {
    json kernels = json::array();
    for (const auto& row : c.params.kernels) {
        json r = json::array();
        for (const auto& k : row)
            r.push_back({{"kind", to_string(k.kind)},
                         {"role", to_string(k.role)},
                         {"amplitude", k.amplitude},
                         {"width", k.width},
                         {"radius", k.radius},
                         {"mode", k.mode},
                         {"offset", k.offset}});
        kernels.push_back(r);
    }
    auto fields = [](const std::vector<FieldSpec>& v) {
        json a = json::array();
        for (const auto& f : v) a.push_back(write_field(f));
        return a;
    };
    json j = {
        {"version", c.version},
        {"model", to_string(c.model)},
        {"grid", {{"ndim", c.grid.ndim}, {"points", c.grid.points}, {"period", c.grid.period}}},
        {"params",
         {{"n_species", c.params.n_species},
          {"d", c.params.d},
          {"mu", write_matrix(c.params.mu)},
          {"nu", write_matrix(c.params.nu)},
          {"clamp", c.params.clamp_enabled},
          {"kernels", kernels}}},
        {"initial", {{"u0", fields(c.u0)}, {"f1", fields(c.f1)}, {"f2", fields(c.f2)}, {"epsilons", c.epsilons}}},
        {"schedule", {{"T", c.schedule.T}, {"dt", c.schedule.dt}, {"snapshots", c.schedule.snapshots}}},
        {"output", c.output},
        {"seed", c.seed},
    };
    if (c.probes) {
        const auto& p = *c.probes;
        j["probes"] = {{"kind", p.kind},
                       {"modes", p.modes},
                       {"constant_probes", p.constant_probes},
                       {"realization", to_string(p.realization)},
                       {"extracted", p.extracted},
                       {"T", p.T},
                       {"dt", p.dt},
                       {"epsilons", p.epsilons},
                       {"background", p.background}};
        if (p.cutoff) j["probes"]["cutoff"] = *p.cutoff;
    }
    if (c.diffusion) {
        const auto& d = *c.diffusion;
        j["diffusion"] = {{"d_kind", d.d_kind},
                          {"amplitude", d.amplitude},
                          {"radius", d.radius},
                          {"receivers", d.receivers},
                          {"receiver_radius", d.receiver_radius},
                          {"receiver_phase", d.receiver_phase},
                          {"sources", d.sources},
                          {"source_radius", d.source_radius},
                          {"jitter", d.jitter},
                          {"p_values", d.p_values},
                          {"recon_radius", d.recon_radius},
                          {"recon_spacing", d.recon_spacing},
                          {"omega_radius", d.omega_radius},
                          {"remainder_columns", d.remainder_columns},
                          {"fine_h", d.fine_h},
                          {"species", d.species}};
        if (d.alpha) j["diffusion"]["alpha"] = *d.alpha;
    }
    return j;
}

void write_file(const fs::path& p, const std::string& body) {
    fs::create_directories(p.parent_path());
    std::ofstream out(p, std::ios::binary);
    if (!out) throw Error(ErrorKind::io, "write", "cannot open " + p.string());
    out << body;
    if (!out) throw Error(ErrorKind::io, "write", "failed writing " + p.string());
}

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw Error(ErrorKind::io, "read", "cannot open " + p.string());
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

class Run {
public:
    Run(const ScenarioConfig& cfg, const RunContext& ctx, std::string verb) : cfg_(cfg) {
        if (ctx.seed) cfg_.seed = *ctx.seed;
        manifest_.verb = std::move(verb);
        manifest_.config_hash = config_hash(cfg_);
        manifest_.directory = (fs::path(resolve_out_root(cfg_, ctx)) / manifest_.config_hash).string();
        fs::create_directories(manifest_.directory);
        save("config.json", serialize_config(cfg_));
        start_ = std::chrono::steady_clock::now();
    }

    const ScenarioConfig& cfg() const { return cfg_; }
    const std::string& hash() const { return manifest_.config_hash; }

    void save(const std::string& name, const std::string& body) {
        write_file(fs::path(manifest_.directory) / name, body);
        artifacts_.insert(name);
    }
    void save_field(const std::string& name, const Field& f, double t) {
        fs::path p = fs::path(manifest_.directory) / name;
        fs::create_directories(p.parent_path());
        write_grd1(p.string(), f, t);
        artifacts_.insert(name);
    }
    void stage(const std::string& name) {
        auto now = std::chrono::steady_clock::now();
        manifest_.timings.push_back({name, std::chrono::duration<double>(now - start_).count()});
        start_ = now;
    }

    json report(const std::string& kind) const {
        return {{"config_hash", hash()}, {"kind", kind}, {"status", "ok"}, {"rows", json::array()},
                {"figures", json::object()}, {"details", json::object()}};
    }

    bool finished() const { return finished_; }

    RunManifest finish(const json& report) {
        finished_ = true;
        save("report.json", report.dump(2) + "\n");
        for (const auto& f : emit_tables(manifest_.directory)) artifacts_.insert(f);
        manifest_.artifacts.assign(artifacts_.begin(), artifacts_.end());
        json m = {{"config_hash", manifest_.config_hash},
                  {"tool_version", manifest_.tool_version},
                  {"verb", manifest_.verb},
                  {"artifacts", manifest_.artifacts}};
        write_file(fs::path(manifest_.directory) / "manifest.json", m.dump(2) + "\n");
        json t = json::object();
        t["config_hash"] = manifest_.config_hash;
        t["stages"] = json::array();
        for (const auto& [name, sec] : manifest_.timings) t["stages"].push_back({{"stage", name}, {"seconds", sec}});
        write_file(fs::path(manifest_.directory) / "timings.json", t.dump(2) + "\n");
        return manifest_;
    }

private:
    ScenarioConfig cfg_;
    RunManifest manifest_;
    std::set<std::string> artifacts_;
    std::chrono::steady_clock::time_point start_;
    bool finished_ = false;
};

json row(const std::string& quantity, std::optional<double> truth, double recovered) {
    json r = {{"quantity", quantity}, {"recovered", recovered}};
    r["truth"] = truth ? json(*truth) : json(nullptr);
    return r;
}

json figure(const std::string& x_label, const std::string& y_label, const std::vector<double>& x,
            const std::vector<double>& y) {
    return {{"x_label", x_label}, {"y_label", y_label}, {"x", x}, {"y", y}};
}

json error_json(const Error& e) {
    return {{"kind", e.kind() == ErrorKind::config             ? "config"
                     : e.kind() == ErrorKind::numerical        ? "numerical"
                     : e.kind() == ErrorKind::non_identifiable ? "non_identifiable"
                                                               : "io"},
            {"stage", e.stage()},
            {"message", e.what()},
            {"exit_code", e.exit_code()}};
}

std::string padded(int k) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d", k);
    return buf;
}

std::vector<Field> sample_all(const std::vector<FieldSpec>& specs, const TorusGrid& g) {
    std::vector<Field> out;
    for (const auto& s : specs) out.push_back(s.sample(g));
    return out;
}

std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

// Uniform draw in [-1, 1) from the top 53 bits; independent of the standard library's distributions.
double symmetric_draw(std::mt19937_64& rng) { return 2.0 * double(rng() >> 11) * 0x1.0p-53 - 1.0; }

json invert_diffusion_run(Run& run) {
    const auto& cfg = run.cfg();
    if (!cfg.diffusion) throw config_error("config.diffusion", "missing diffusion section");
    const DiffusionScenario& sc = *cfg.diffusion;
    std::mt19937_64 rng(cfg.seed);
    const double jr = sc.jitter * symmetric_draw(rng) * 2.0 * pi / sc.receivers;
    const double js = sc.jitter * symmetric_draw(rng) * 2.0 * pi / sc.sources;
    const auto receivers = ring(sc.receivers, sc.receiver_radius, sc.receiver_phase + jr);
    const auto sources = ring(sc.sources, sc.source_radius, js);
    auto d = sc.d();

    LaplaceData data = synthesize_laplace_data(d, sc.radius, receivers, sources, sc.p_values, sc.fine_h);
    data.species = sc.species;
    run.stage("synthesize");

    DiffusionConfig dc;
    dc.p_values = sc.p_values;
    dc.remainder_columns = sc.remainder_columns;
    dc.recon_radius = sc.recon_radius;
    dc.recon_spacing = sc.recon_spacing;
    dc.omega_radius = sc.omega_radius;
    dc.alpha = sc.alpha;
    InversionReport rep = invert_diffusion(data, dc, d);
    run.stage("invert");

    json r = run.report("diffusion");
    for (std::size_t k = 0; k < rep.nodes.points.size(); ++k) {
        const auto& l = rep.nodes.lattice[k];
        r["rows"].push_back(row("m[" + std::to_string(l[0]) + "][" + std::to_string(l[1]) + "]",
                                1.0 - 1.0 / d(rep.nodes.points[k]), rep.m[Eigen::Index(k)]));
    }
    std::vector<double> alpha, res, semi, norm;
    for (const auto& s : rep.sweep.solutions) {
        alpha.push_back(s.alpha);
        res.push_back(s.residual);
        semi.push_back(s.seminorm);
        norm.push_back(s.norm);
    }
    r["figures"]["lcurve"] = figure("residual", "seminorm", res, semi);
    r["figures"]["norm_vs_alpha"] = figure("alpha", "norm", alpha, norm);
    std::vector<double> idx, h2;
    for (Eigen::Index k = 0; k < rep.H2.size(); ++k) {
        idx.push_back(double(k));
        h2.push_back(rep.H2[k]);
    }
    r["figures"]["H2"] = figure("pair", "H2", idx, h2);

    double fit = 0.0;
    for (const auto& c : rep.coefficients) fit = std::max(fit, c.residual.maxCoeff());
    json geo_r = json::array(), geo_s = json::array();
    for (const auto& x : receivers) geo_r.push_back(x);
    for (const auto& x : sources) geo_s.push_back(x);
    r["details"] = {{"species", rep.species},
                    {"provenance", rep.provenance},
                    {"alpha", rep.alpha},
                    {"lcurve_corner", rep.sweep.corner},
                    {"forward_consistency", *rep.forward_consistency},
                    {"recovery_error", *rep.recovery_error},
                    {"max_abs_h", rep.max_h},
                    {"max_abs_H2", rep.H2.cwiseAbs().maxCoeff()},
                    {"max_fit_residual", fit},
                    {"p_values", sc.p_values},
                    {"receivers", geo_r},
                    {"sources", geo_s},
                    {"log", rep.log}};

    // Recovered d on a square lattice centred on the origin; d = 1 off the nodes.
    int k = 0;
    for (const auto& l : rep.nodes.lattice) k = std::max({k, std::abs(l[0]), std::abs(l[1])});
    int n = 1;
    while (n < 2 * k + 1) n *= 2;
    TorusGrid g = TorusGrid::square(n, n * sc.recon_spacing);
    Field df = Field::constant(g, 1.0);
    for (std::size_t q = 0; q < rep.nodes.lattice.size(); ++q) {
        const auto& l = rep.nodes.lattice[q];
        df.values[g.index(l[0] + n / 2, l[1] + n / 2)] = rep.d[Eigen::Index(q)];
    }
    run.save_field("d_recovered.grd1", df, 0.0);
    r["details"]["d_grid_origin_index"] = n / 2;
    return r;
}

json invert_probe_run(Run& run, const std::string& kind, int threads) {
    const auto& cfg = run.cfg();
    if (!cfg.probes) throw config_error("config.probes", "missing probes section");
    const ProbeConfig& pc = *cfg.probes;
    const bool m1 = kind == "mu" || kind == "normalization";
    if (cfg.model != (m1 ? Model::M1 : Model::M2))
        throw config_error("config.model", "kind " + kind + " needs model " + (m1 ? "M1" : "M2"));
    const int n = cfg.params.n_species;
    const int cutoff = pc.cutoff ? *pc.cutoff : default_w_cutoff(cfg.grid);
    auto probes = kind == "w" ? w_schedule(n, cfg.grid, cutoff) : advection_schedule(n, pc.modes, pc.constant_probes);
    ProbeRun pr{pc.realization, pc.extracted, pc.T, pc.dt, pc.epsilons, pc.background};
    auto data = measure_probes(cfg.model, cfg.params, probes, pr, cfg.grid, threads);
    run.stage("measure");

    json r = run.report(kind);
    {
        RecoveryReport rep = kind == "mu"              ? recover_mu(cfg.params, data)
                             : kind == "normalization" ? recover_normalization(cfg.params, data)
                             : kind == "nu"            ? recover_nu(cfg.params, data)
                                                       : recover_w(cfg.params, data, cutoff);
        run.stage("recover");
        if (kind == "mu" || kind == "nu") {
            const Eigen::MatrixXd& truth = kind == "mu" ? cfg.params.mu : cfg.params.nu;
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < n; ++j)
                    r["rows"].push_back(row(kind + "[" + std::to_string(i) + "][" + std::to_string(j) + "]",
                                            truth(i, j), rep.matrix(i, j)));
        } else if (kind == "normalization") {
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < n; ++j) {
                    const std::string q = "N[" + std::to_string(i) + "][" + std::to_string(j) + "]";
                    r["rows"].push_back(row(q + ".re", std::nullopt, rep.normalization(i, j).real()));
                    r["rows"].push_back(row(q + ".im", std::nullopt, rep.normalization(i, j).imag()));
                }
        } else {
            std::map<std::pair<int, int>, Spectrum> truth;
            std::map<std::pair<int, int>, std::pair<std::vector<double>, std::vector<double>>> fig;
            for (const auto& c : rep.w_table) {
                auto key = std::make_pair(c.i, c.j);
                if (!truth.count(key)) truth[key] = dft_forward(sample_kernel(cfg.params.kernels[c.i][c.j], cfg.grid)[0]);
                const cplx t = truth[key].at(c.mode[0], c.mode[1]);
                const std::string q = "w[" + std::to_string(c.i) + "][" + std::to_string(c.j) + "](" +
                                      std::to_string(c.mode[0]) + ";" + std::to_string(c.mode[1]) + ")";
                r["rows"].push_back(row(q + ".re", t.real(), c.value.real()));
                r["rows"].push_back(row(q + ".im", t.imag(), c.value.imag()));
                const Point xi = cfg.grid.frequency(cfg.grid.mode_index(c.mode[0], c.mode[1]));
                fig[key].first.push_back(std::hypot(xi[0], xi[1]));
                fig[key].second.push_back(std::abs(c.value));
            }
            for (const auto& [key, xy] : fig)
                r["figures"]["w_" + std::to_string(key.first) + "_" + std::to_string(key.second)] =
                    figure("frequency", "modulus", xy.first, xy.second);
            for (std::size_t i = 0; i < rep.w.size(); ++i)
                for (std::size_t j = 0; j < rep.w[i].size(); ++j)
                    run.save_field("w/w_" + std::to_string(i) + "_" + std::to_string(j) + ".grd1", rep.w[i][j], 0.0);
        }
        json entries = json::array();
        for (const auto& e : rep.entries)
            entries.push_back({{"i", e.i}, {"j", e.j}, {"re", e.value.real()}, {"im", e.value.imag()},
                               {"residual", e.residual}, {"probe", e.probe}});
        r["details"] = {{"probes", probes.size()}, {"entries", entries}, {"gaps", rep.gaps}, {"flags", rep.flags}};
        if (kind == "w") r["details"]["cutoff"] = cutoff;
        if (kind == "nu") {
            // nu_ij = 0 removes w_ij from every response; no probe can restore it.
            const double scale = std::max(1.0, rep.matrix.cwiseAbs().maxCoeff());
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < n; ++j)
                    if (std::abs(rep.matrix(i, j)) <= 1e-10 * scale) {
                        Error e = identifiability_error(
                            "invert_nu/w", "nu_" + std::to_string(i) + std::to_string(j) +
                                               " = 0 leaves w_ij unobservable and no alternate probe exists");
                        r["status"] = "error";
                        r["error"] = error_json(e);
                        run.finish(r);
                        throw e;
                    }
        }
    }
    return r;
}

} // namespace

Field FieldSpec::sample(const TorusGrid& g) const {
    if (kind == "zero") return Field(g);
    if (kind == "constant") return Field::constant(g, value);
    if (kind == "gaussian")
        return Field::sample(g, [&](const Point& x) {
            double r2 = 0.0;
            for (int a = 0; a < g.ndim; ++a) {
                double dx = std::remainder(x[a] - center[a], g.period[a]);
                r2 += dx * dx;
            }
            return amplitude * std::exp(-r2 / (2.0 * width * width));
        });
    if (kind == "cosine") {
        Field f = Field::plane_wave(g, mode[0], mode[1]);
        Field out(g);
        out.values = background + amplitude * f.values.real();
        return out;
    }
    throw config_error("field", "unknown field kind '" + kind + "'");
}

std::function<double(const Point&)> DiffusionScenario::d() const {
    if (d_kind == "uniform") return [](const Point&) { return 1.0; };
    return bump_diffusion(amplitude, radius);
}

ScenarioConfig parse_config(const std::string& body) {
    json j;
    try {
        j = json::parse(body);
    } catch (const json::parse_error& e) {
        throw config_error("config", std::string("malformed JSON: ") + e.what());
    }
    const std::string root = "config";
    check_keys(j, root,
               {"version", "model", "grid", "params", "initial", "schedule", "probes", "diffusion", "output", "seed"},
               {"version", "model", "grid", "params"});
    ScenarioConfig c;
    c.version = integer(j["version"], "config.version");
    if (c.version != config_version) bad("config.version", "unsupported version " + std::to_string(c.version));
    const std::string model = text(j["model"], "config.model");
    if (model != "M1" && model != "M2" && model != "heat") bad("config.model", "expected M1, M2 or heat");
    c.model = model_from(model);

    const json& g = j["grid"];
    check_keys(g, "config.grid", {"ndim", "points", "period"}, {"ndim", "points"});
    const int ndim = integer(g["ndim"], "config.grid.ndim");
    std::array<int, 2> pts = int_pair(g["points"], "config.grid.points");
    std::array<double, 2> per{1.0, 1.0};
    if (g.contains("period")) {
        Point p = point(g["period"], "config.grid.period");
        per = {p[0], p[1]};
    }
    rebase([&] { c.grid = TorusGrid::make(ndim, pts, per); });

    const json& p = j["params"];
    check_keys(p, "config.params", {"n_species", "d", "mu", "nu", "clamp", "kernels"}, {"n_species", "d"});
    c.params.n_species = integer(p["n_species"], "config.params.n_species");
    c.params.d = numbers(p["d"], "config.params.d");
    opt(p, "mu", "config.params", c.params.mu, matrix);
    opt(p, "nu", "config.params", c.params.nu, matrix);
    opt(p, "clamp", "config.params", c.params.clamp_enabled, boolean);
    if (p.contains("kernels")) {
        const json& ks = array(p["kernels"], "config.params.kernels");
        for (std::size_t i = 0; i < ks.size(); ++i) {
            const std::string pi_ = "config.params.kernels[" + std::to_string(i) + "]";
            c.params.kernels.emplace_back();
            for (std::size_t k = 0; k < array(ks[i], pi_).size(); ++k)
                c.params.kernels.back().push_back(read_kernel(ks[i][k], pi_ + "[" + std::to_string(k) + "]"));
        }
    }
    rebase([&] { c.params.validate(c.model, c.grid); });

    if (j.contains("initial")) {
        const json& in = j["initial"];
        check_keys(in, "config.initial", {"u0", "f1", "f2", "epsilons"});
        opt(in, "u0", "config.initial", c.u0, read_fields);
        opt(in, "f1", "config.initial", c.f1, read_fields);
        opt(in, "f2", "config.initial", c.f2, read_fields);
        opt(in, "epsilons", "config.initial", c.epsilons, numbers);
        const int n = c.params.n_species;
        for (auto [name, v] : {std::pair{"u0", &c.u0}, {"f1", &c.f1}, {"f2", &c.f2}})
            if (!v->empty() && int(v->size()) != n) bad(std::string("config.initial.") + name, "one field per species");
    }
    if (j.contains("schedule")) {
        const json& s = j["schedule"];
        check_keys(s, "config.schedule", {"T", "dt", "snapshots"}, {"T", "dt"});
        c.schedule.T = number(s["T"], "config.schedule.T");
        c.schedule.dt = number(s["dt"], "config.schedule.dt");
        opt(s, "snapshots", "config.schedule", c.schedule.snapshots, numbers);
        rebase([&] { snapshot_steps(c.schedule); });
    }
    if (j.contains("probes")) c.probes = read_probes(j["probes"], "config.probes");
    if (j.contains("diffusion")) c.diffusion = read_diffusion(j["diffusion"], "config.diffusion");
    opt(j, "output", "config", c.output, text);
    if (j.contains("seed")) {
        if (!j["seed"].is_number_unsigned()) bad("config.seed", "expected a non-negative integer");
        c.seed = j["seed"].get<std::uint64_t>();
    }
    return c;
}

ScenarioConfig load_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw config_error("config", "cannot read " + path);
    std::ostringstream s;
    s << in.rdbuf();
    return parse_config(s.str());
}

std::string serialize_config(const ScenarioConfig& cfg) { return write_config(cfg).dump(2) + "\n"; }

std::string config_hash(const ScenarioConfig& cfg) {
    ScenarioConfig c = cfg;
    c.output.clear();
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(serialize_config(c))));
    return buf;
}

std::string resolve_out_root(const ScenarioConfig& cfg, const RunContext& ctx) {
    if (!ctx.out_root.empty()) return ctx.out_root;
    if (!cfg.output.empty()) return cfg.output;
    if (const char* env = std::getenv("AGGREKIT_OUT"); env && *env) return env;
    return "out";
}

std::string format_number(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

RunManifest run_simulate(const ScenarioConfig& cfg, const RunContext& ctx) {
    Run run(cfg, ctx, "simulate");
    const auto& c = run.cfg();
    if (c.u0.empty()) throw config_error("config.initial.u0", "simulate needs initial data");
    auto u0 = sample_all(c.u0, c.grid);
    Trajectory traj = simulate(c.model, c.params, u0, c.schedule);
    run.stage("simulate");

    json files = json::array();
    json r = run.report("simulate");
    for (std::size_t k = 0; k < traj.times.size(); ++k) {
        json row_files = json::array();
        for (int i = 0; i < c.params.n_species; ++i) {
            const std::string name = "fields/u" + std::to_string(i) + "_" + padded(int(k)) + ".grd1";
            run.save_field(name, traj.states[k][i], traj.times[k]);
            row_files.push_back(name);
        }
        files.push_back(row_files);
    }
    for (int i = 0; i < c.params.n_species; ++i) {
        std::vector<double> m;
        for (const auto& s : traj.states) m.push_back(mass(s[i]));
        r["rows"].push_back(row("mass[" + std::to_string(i) + "]", m.front(), m.back()));
        r["figures"]["mass_" + std::to_string(i)] = figure("time", "mass", traj.times, m);
    }
    json t = {{"config_hash", run.hash()}, {"times", traj.times}, {"species", c.params.n_species},
              {"mask", "full"}, {"files", files}};
    run.save("trajectory.json", t.dump(2) + "\n");
    run.stage("write");
    return run.finish(r);
}

RunManifest run_linearize(const ScenarioConfig& cfg, const RunContext& ctx) {
    Run run(cfg, ctx, "linearize");
    const auto& c = run.cfg();
    if (c.f1.empty()) throw config_error("config.initial.f1", "linearize needs first-order data");
    const int n = c.params.n_species;
    VariationInput in{sample_all(c.f1, c.grid), {}, c.epsilons};
    in.f2 = c.f2.empty() ? std::vector<Field>(n, Field(c.grid)) : sample_all(c.f2, c.grid);
    VariationPair ext = extract_variations(c.model, c.params, in, c.schedule, ctx.threads);
    run.stage("extract");
    Trajectory uI_full = solve_first_variation(c.params.d, in.f1, Schedule::every_step(c.schedule.T, c.schedule.dt));
    Trajectory uI = solve_first_variation(c.params.d, in.f1, c.schedule);
    Trajectory uII = solve_second_variation(c.model, c.params, uI_full, in.f2, c.schedule);
    run.stage("direct");

    auto save = [&](const std::string& tag, const Trajectory& tr) {
        for (std::size_t k = 0; k < tr.times.size(); ++k)
            for (int i = 0; i < n; ++i)
                run.save_field("variation/" + tag + "_s" + std::to_string(i) + "_" + padded(int(k)) + ".grd1",
                               tr.states[k][i], tr.times[k]);
    };
    save("uI", uI);
    save("uII", uII);
    save("uI_eps", ext.uI);
    save("uII_eps", ext.uII);

    json r = run.report("linearize");
    r["rows"].push_back(row("uI_distance", 0.0, trajectory_distance(ext.uI, uI)));
    r["rows"].push_back(row("uII_distance", 0.0, trajectory_distance(ext.uII, uII)));
    r["rows"].push_back(row("quadratic_residual", std::nullopt, ext.residual));
    r["details"] = {{"epsilons", c.epsilons}, {"times", uI.times}};
    run.stage("write");
    return run.finish(r);
}

RunManifest run_invert(const ScenarioConfig& cfg, const std::string& kind, const RunContext& ctx) {
    if (kind != "diffusion" && kind != "mu" && kind != "normalization" && kind != "nu" && kind != "w")
        throw config_error("kind", "expected diffusion, mu, normalization, nu or w");
    Run run(cfg, ctx, "invert-" + kind);
    json r;
    try {
        r = kind == "diffusion" ? invert_diffusion_run(run) : invert_probe_run(run, kind, ctx.threads);
    } catch (const Error& e) {
        // The failure is part of the run record: persist it, then propagate.
        if (run.finished()) throw;
        json f = run.report(kind);
        f["status"] = "error";
        f["error"] = error_json(e);
        run.finish(f);
        throw;
    }
    return run.finish(r);
}

std::vector<std::string> emit_tables(const std::string& directory) {
    json rep;
    try {
        rep = json::parse(read_file(fs::path(directory) / "report.json"));
    } catch (const json::parse_error& e) {
        throw Error(ErrorKind::io, "emit_tables", std::string("malformed report: ") + e.what());
    }
    std::vector<std::string> written;
    std::string csv = "quantity,truth,recovered,abs_err,rel_err\n";
    const json rows = rep.value("rows", json::array());
    const json figures = rep.value("figures", json::object());
    for (const auto& r : rows) {
        const double rec = r.at("recovered").get<double>();
        csv += r.at("quantity").get<std::string>() + ",";
        if (r.at("truth").is_null()) {
            csv += "," + format_number(rec) + ",,\n";
            continue;
        }
        const double t = r.at("truth").get<double>();
        const double ae = std::abs(rec - t);
        csv += format_number(t) + "," + format_number(rec) + "," + format_number(ae) + ",";
        csv += (t != 0.0 ? format_number(ae / std::abs(t)) : std::string()) + "\n";
    }
    write_file(fs::path(directory) / "tables.csv", csv);
    written.push_back("tables.csv");
    for (const auto& [name, fig] : figures.items()) {
        std::string body = "x,y\n";
        const auto& x = fig.at("x");
        const auto& y = fig.at("y");
        for (std::size_t k = 0; k < x.size() && k < y.size(); ++k)
            body += format_number(x[k].get<double>()) + "," + format_number(y[k].get<double>()) + "\n";
        write_file(fs::path(directory) / ("fig_" + name + ".csv"), body);
        written.push_back("fig_" + name + ".csv");
    }
    return written;
}

RunManifest read_manifest(const std::string& directory) {
    json m;
    try {
        m = json::parse(read_file(fs::path(directory) / "manifest.json"));
    } catch (const json::parse_error& e) {
        throw Error(ErrorKind::io, "manifest", std::string("malformed manifest: ") + e.what());
    }
    RunManifest out;
    out.config_hash = m.at("config_hash").get<std::string>();
    out.tool_version = m.at("tool_version").get<std::string>();
    out.verb = m.at("verb").get<std::string>();
    out.directory = directory;
    out.artifacts = m.at("artifacts").get<std::vector<std::string>>();
    return out;
}

} // namespace aggrekit
