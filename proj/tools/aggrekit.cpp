#include "aggrekit/errors.hpp"
#include "aggrekit/experiment.hpp"

#include "CLI11.hpp"

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

using namespace aggrekit;

namespace {

struct Options {
    std::string config;
    std::string out;
    int threads = 1;
    std::optional<std::uint64_t> seed;
    std::string kind;
};

RunContext context(const Options& o) { return {o.out, o.threads, o.seed}; }

int report(const Options& o) {
    std::string dir = o.out;
    if (!o.config.empty()) {
        ScenarioConfig cfg = load_config(o.config);
        if (o.seed) cfg.seed = *o.seed;
        dir = (std::filesystem::path(resolve_out_root(cfg, context(o))) / config_hash(cfg)).string();
    }
    if (dir.empty()) throw config_error("report", "give --config or the run directory with --out");
    read_manifest(dir);
    for (const auto& f : emit_tables(dir)) std::cout << (std::filesystem::path(dir) / f).string() << "\n";
    return 0;
}

std::string pick_kind(const Options& o, const ScenarioConfig& cfg, std::initializer_list<const char*> allowed) {
    std::string k = o.kind;
    if (k.empty()) {
        if (!cfg.probes) throw config_error("config.probes", "missing probes section");
        k = cfg.probes->kind;
    }
    for (const char* a : allowed)
        if (k == a) return k;
    throw config_error("kind", "'" + k + "' is not valid for this verb");
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Nonlocal aggregation experiments: simulation, linearization and inversion"};
    app.require_subcommand(1);
    Options o;
    auto common = [&](CLI::App* sub, bool need_config) {
        auto* c = sub->add_option("--config", o.config, "scenario JSON")->check(CLI::ExistingFile);
        if (need_config) c->required();
        sub->add_option("--out", o.out, "output root (default: config output, then $AGGREKIT_OUT, then ./out)");
        sub->add_option("--threads", o.threads, "worker threads")->check(CLI::PositiveNumber);
        sub->add_option("--seed", o.seed, "override the config seed");
    };
    auto* simulate = app.add_subcommand("simulate", "run the forward model and persist snapshots");
    auto* linearize = app.add_subcommand("linearize", "first and second variations, direct and extracted");
    auto* diffusion = app.add_subcommand("invert-diffusion", "recover 1 - 1/d from transform-domain data");
    auto* advection = app.add_subcommand("invert-advection", "recover mu (M1) or nu (M2)");
    auto* kernel = app.add_subcommand("invert-kernel", "recover kernel normalizations (M1) or potentials w (M2)");
    auto* rep = app.add_subcommand("report", "rewrite tables from a finished run");
    for (auto* s : {simulate, linearize, diffusion, advection, kernel}) common(s, true);
    common(rep, false);
    advection->add_option("--kind", o.kind, "mu or nu (default: probes.kind)");
    kernel->add_option("--kind", o.kind, "normalization or w (default: probes.kind)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (rep->parsed()) return report(o);
        ScenarioConfig cfg = load_config(o.config);
        RunManifest m;
        if (simulate->parsed()) m = run_simulate(cfg, context(o));
        else if (linearize->parsed()) m = run_linearize(cfg, context(o));
        else if (diffusion->parsed()) m = run_invert(cfg, "diffusion", context(o));
        else if (advection->parsed()) m = run_invert(cfg, pick_kind(o, cfg, {"mu", "nu"}), context(o));
        else m = run_invert(cfg, pick_kind(o, cfg, {"normalization", "w"}), context(o));
        std::cout << m.directory << "\n";
        return 0;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return e.exit_code();
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
