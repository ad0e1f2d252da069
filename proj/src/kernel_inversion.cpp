#include "aggrekit/kernel_inversion.hpp"

#include "aggrekit/errors.hpp"
#include "aggrekit/parallel.hpp"
#include "aggrekit/variation.hpp"

#include <cmath>
#include <map>
#include <sstream>

namespace aggrekit {

namespace {

// One Fourier component of a probe's first-order data.
struct Component {
    int species = 0;
    int pattern = -1; // -1 for a constant part
    int index = 0;
    cplx amp{};
    double rate = 0.0;
};

double lattice_rate(const TorusGrid& g, double d, int idx) { return -d * g.frequency_sq(idx); }

std::vector<Component> components(const ProbeSpec& probe, const std::vector<double>& d, const TorusGrid& g,
                                  Realization r, double background) {
    std::vector<Component> out;
    std::map<int, bool> has_background;
    for (std::size_t k = 0; k < probe.species.size(); ++k) {
        const int s = probe.species[k];
        const ProbePattern& p = probe.patterns[k];
        const double ds = d.empty() ? 0.0 : d[s];
        if (p.constant_one) {
            out.push_back({s, int(k), 0, 1.0, 0.0});
            continue;
        }
        const int idx = g.mode_index(p.mode[0], p.mode[1]);
        const double lam = lattice_rate(g, ds, idx);
        if (r == Realization::complex_wave) {
            out.push_back({s, int(k), idx, 1.0, lam});
        } else {
            if (!has_background[s]) out.push_back({s, -1, 0, background, 0.0});
            has_background[s] = true;
            out.push_back({s, int(k), idx, 0.5, lam});
            out.push_back({s, -2 - int(k), g.mode_index(-p.mode[0], -p.mode[1]), 0.5, lam});
        }
    }
    return out;
}

int add_modes(const TorusGrid& g, int a, int b) {
    auto ma = g.mode(a), mb = g.mode(b);
    return g.mode_index(ma[0] + mb[0], ma[1] + mb[1]);
}

// Frequency the discrete divergence applies at idx: Nyquist components vanish.
Point divergence_frequency(const TorusGrid& g, int idx) {
    Point f = g.frequency(idx);
    auto m = g.mode(idx);
    for (int c = 0; c < 2; ++c)
        if (2 * std::abs(m[c]) == g.points[c]) f[c] = 0.0;
    return f;
}

Point lattice_frequency(const TorusGrid& g, const std::array<int, 2>& k) { return g.frequency(g.mode_index(k[0], k[1])); }

double dot(const Point& a, const Point& b) { return a[0] * b[0] + a[1] * b[1]; }

struct TargetRule {
    Target target;
    std::vector<std::pair<int, int>> allowed; // (pattern of row term, pattern of column term)
};

std::vector<TargetRule> target_rules(const ProbeSpec& probe, const std::vector<double>& d, const TorusGrid& g,
                                     Realization r, double background) {
    const auto comps = components(probe, d, g, r, background);
    auto wave_of = [&](int k) -> const Component& {
        for (const auto& c : comps)
            if (c.pattern == k) return c;
        throw config_error("probe", "pattern has no component");
    };
    std::vector<TargetRule> rules;
    const int np = int(probe.species.size());
    auto make = [&](int ka, int kb) {
        const Component &a = wave_of(ka), &b = wave_of(kb);
        TargetRule tr;
        tr.target.row = a.species;
        tr.target.col = b.species;
        tr.target.index = add_modes(g, a.index, b.index);
        tr.target.rate = a.rate + b.rate;
        tr.target.amplitude = a.amp * b.amp;
        tr.allowed.push_back({ka, kb});
        return tr;
    };
    if (np == 1) {
        rules.push_back(make(0, 0));
    } else if (probe.species[0] != probe.species[1]) {
        rules.push_back(make(0, 1));
        rules.push_back(make(1, 0));
    } else {
        TargetRule tr = make(0, 1);
        tr.allowed.push_back({1, 0});
        rules.push_back(tr);
    }
    return rules;
}

void validate_probe_shape(const ProbeSpec& probe, int n_species) {
    const std::size_t np = probe.species.size();
    if (np < 1 || np > 2 || probe.patterns.size() != np)
        throw config_error("probe", "a probe activates one or two species with one pattern each");
    for (int s : probe.species)
        if (s < 0 || (n_species > 0 && s >= n_species)) throw config_error("probe", "species index out of range");
    bool any_const = false, all_const = true;
    for (const auto& p : probe.patterns) {
        any_const = any_const || p.constant_one;
        all_const = all_const && p.constant_one;
    }
    if (any_const && !all_const) throw config_error("probe", "constant and wave patterns cannot be mixed");
    if (all_const && np == 2 && probe.species[0] == probe.species[1])
        throw config_error("probe", "repeated species needs two wave patterns");
}

bool constant_probe(const ProbeSpec& p) { return p.patterns[0].constant_one; }

const ProbePattern& column_pattern(const ProbeSpec& p, const Target& t) {
    if (p.species.size() == 1) return p.patterns[0];
    if (p.species[0] != p.species[1]) return p.species[1] == t.col ? p.patterns[1] : p.patterns[0];
    return p.patterns[1];
}

} // namespace

std::string ProbeSpec::label() const {
    std::ostringstream os;
    for (std::size_t k = 0; k < species.size(); ++k) {
        if (k) os << "+";
        os << "u" << species[k];
        if (patterns[k].constant_one)
            os << "[1]";
        else
            os << "[" << patterns[k].mode[0] << "," << patterns[k].mode[1] << "]";
    }
    return os.str();
}

std::vector<Field> probe_initial(const ProbeSpec& probe, int n_species, const TorusGrid& g, Realization r,
                                 double background) {
    validate_probe_shape(probe, n_species);
    const bool real = r == Realization::cosine || constant_probe(probe);
    std::vector<Field> f(n_species, Field(g, real));
    std::vector<bool> seeded(n_species, false);
    for (std::size_t k = 0; k < probe.species.size(); ++k) {
        const int s = probe.species[k];
        const ProbePattern& p = probe.patterns[k];
        if (p.constant_one) {
            f[s].values.setConstant(1.0);
        } else if (r == Realization::complex_wave) {
            f[s].values += Field::plane_wave(g, p.mode[0], p.mode[1]).values;
        } else {
            if (!seeded[s]) f[s].values += background;
            f[s].values += Field::plane_wave(g, p.mode[0], p.mode[1]).values.real();
        }
        seeded[s] = true;
    }
    return f;
}

void check_probe(const ProbeSpec& probe, const TorusGrid& g, Realization r) {
    validate_probe_shape(probe, 0);
    if (constant_probe(probe)) return;
    const auto comps = components(probe, {}, g, r, 1.0);
    for (const auto& rule : target_rules(probe, {}, g, r, 1.0)) {
        const Target& t = rule.target;
        if (t.index == 0) throw config_error("probe " + probe.label(), "target lands on the zero mode");
        for (const auto& a : comps) {
            if (a.species != t.row) continue;
            for (const auto& b : comps) {
                if (b.index == 0) continue; // a constant drives no drift
                if (add_modes(g, a.index, b.index) != t.index) continue;
                bool ok = false;
                if (b.species == t.col)
                    for (auto [pa, pb] : rule.allowed) ok = ok || (a.pattern == pa && b.pattern == pb);
                if (!ok)
                    throw config_error("probe " + probe.label(),
                                       "frequency collision at the target mode of entry (" + std::to_string(t.row) +
                                           "," + std::to_string(t.col) + ")");
            }
        }
    }
}

std::vector<Target> probe_targets(const ProbeSpec& probe, const std::vector<double>& d, const TorusGrid& g,
                                  Realization r, double background) {
    validate_probe_shape(probe, int(d.size()));
    std::vector<Target> out;
    if (constant_probe(probe)) {
        // Constant data: the kernel constant shows up in the zero mode.
        if (probe.species.size() == 1)
            out.push_back({probe.species[0], probe.species[0], 0, 0.0, 1.0});
        else {
            out.push_back({probe.species[0], probe.species[1], 0, 0.0, 1.0});
            out.push_back({probe.species[1], probe.species[0], 0, 0.0, 1.0});
        }
        return out;
    }
    check_probe(probe, g, r);
    for (const auto& rule : target_rules(probe, d, g, r, background)) out.push_back(rule.target);
    return out;
}

ProbeMeasurement measure_probe(Model model, const ModelParams& truth, const ProbeSpec& probe, const ProbeRun& run,
                               const TorusGrid& g) {
    if (model == Model::heat) throw config_error("measure_probe", "model must be M1 or M2");
    const int n = truth.n_species;
    if (!constant_probe(probe)) check_probe(probe, g, run.realization);
    if (run.extracted && run.realization != Realization::cosine)
        throw config_error("measure_probe", "eps extraction needs real (cosine) probes");
    ProbeMeasurement m;
    m.probe = probe;
    m.realization = run.realization;
    m.background = run.background;
    m.T = run.T;
    m.dt = run.dt;
    m.d = truth.d;
    auto f1 = probe_initial(probe, n, g, run.realization, run.background);
    std::vector<Field> f2;
    for (int i = 0; i < n; ++i) f2.emplace_back(g, true);
    Schedule terminal{run.T, run.dt, {run.T}};
    if (run.extracted) {
        VariationInput in{f1, f2, run.epsilons};
        m.uII = extract_variations(model, truth, in, terminal, 1).uII.back();
    } else {
        Trajectory uI = solve_first_variation(truth.d, f1, Schedule::every_step(run.T, run.dt));
        m.uII = solve_second_variation(model, truth, uI, f2, terminal).back();
    }
    return m;
}

std::vector<ProbeMeasurement> measure_probes(Model model, const ModelParams& truth,
                                             const std::vector<ProbeSpec>& probes, const ProbeRun& run,
                                             const TorusGrid& g, int threads) {
    std::vector<ProbeMeasurement> out(probes.size());
    parallel_for(int(probes.size()), threads,
                 [&](int k) { out[k] = measure_probe(model, truth, probes[k], run, g); });
    return out;
}

SourceField deconvolve_source(const Field& uII_T, double d, double T, double rate, double dt, bool check_mean) {
    if (!(T > 0.0)) throw config_error("deconvolve_source", "T must be positive");
    Spectrum u = dft_forward(uII_T);
    const TorusGrid& g = uII_T.grid;
    SourceField out{u, rate, {}};
    const int m = dt > 0.0 ? std::max(1, int(std::lround(T / dt))) : 0;
    const double h = m ? T / m : 0.0;
    for (int idx = 0; idx < g.size(); ++idx) {
        const double a = d * g.frequency_sq(idx);
        const double z = (a + rate) * T;
        double I;
        if (m) {
            // h sum_k e^{-a (T - s_k)} e^{rate s_k}, s_k = (k + 1/2) h
            const double y = (a + rate) * h;
            const double lead = h * std::exp(0.5 * y);
            if (y == 0.0)
                I = T * std::exp(-a * T);
            else if (std::abs(z) < 1.0)
                I = lead * std::exp(-a * T) * std::expm1(z) / std::expm1(y);
            else
                I = lead * (std::exp(rate * T) - std::exp(-a * T)) / std::expm1(y);
        } else if (z == 0.0) {
            I = T * std::exp(-a * T);
        } else if (std::abs(z) < 1.0) {
            I = std::exp(-a * T) * std::expm1(z) / (a + rate);
        } else {
            I = (std::exp(rate * T) - std::exp(-a * T)) / (a + rate);
        }
        const bool flat = rate == 0.0 && idx != 0 && -std::expm1(-a * T) < 1e-12;
        if (flat || !(std::abs(I) > 1e-300) || !std::isfinite(I)) {
            out.S.coefficients[idx] = 0.0;
            out.flagged.push_back(idx);
        } else {
            out.S.coefficients[idx] = u.coefficients[idx] / I;
        }
    }
    // Late responses of fast modes are tiny, so the mean is judged on the source itself.
    if (check_mean && std::abs(out.S.coefficients[0]) > 1e-8 * out.S.coefficients.abs().maxCoeff() + 1e-300)
        throw numerical_error("deconvolve_source", "non-divergence source: response has a nonzero mean");
    return out;
}

std::vector<ProbeSpec> advection_schedule(int n_species, const std::vector<std::array<int, 2>>& modes,
                                          bool constant_probes) {
    if (n_species < 1) throw config_error("advection_schedule", "need at least one species");
    std::vector<ProbeSpec> out;
    if (constant_probes) {
        for (int i = 0; i < n_species; ++i) out.push_back({{i}, {ProbePattern::constant()}});
        for (int i = 0; i < n_species; ++i)
            for (int j = i + 1; j < n_species; ++j)
                out.push_back({{i, j}, {ProbePattern::constant(), ProbePattern::constant()}});
        return out;
    }
    if (modes.empty()) throw config_error("advection_schedule", "need at least one probe mode");
    for (const auto& m : modes)
        for (int i = 0; i < n_species; ++i) out.push_back({{i}, {ProbePattern::wave(m[0], m[1])}});
    for (const auto& m : modes)
        for (int i = 0; i < n_species; ++i)
            for (int j = i + 1; j < n_species; ++j)
                out.push_back({{i, j}, {ProbePattern::wave(m[0], m[1]), ProbePattern::wave(2 * m[0], 2 * m[1])}});
    return out;
}

cplx measured_target(const ProbeMeasurement& m, const Target& t) {
    const bool zero = t.index == 0;
    SourceField src = deconvolve_source(m.uII.at(t.row), m.d.at(t.row), m.T, t.rate, m.dt, !zero);
    for (int f : src.flagged)
        if (f == t.index) throw identifiability_error("deconvolve_source", "target mode is unrecoverable");
    if (zero) return dft_forward(m.uII.at(t.row)).coefficients[0] / m.T;
    return src.S.coefficients[t.index];
}

cplx reference_target(const DriftOperator& unit, const ProbeMeasurement& m, const Target& t, int n_species) {
    const TorusGrid& g = unit.grid();
    auto f = probe_initial(m.probe, n_species, g, m.realization, m.background);
    Eigen::ArrayXcd s = 2.0 * unit.entry_flux(t.row, t.col, f[t.row].values, f[t.col].values);
    fft_forward_inplace(g, s);
    return s[t.index] / double(g.size());
}

namespace {

ModelParams unit_params(const ModelParams& known) {
    ModelParams p = known;
    p.mu = Eigen::MatrixXd::Ones(known.n_species, known.n_species);
    p.nu = Eigen::MatrixXd::Ones(known.n_species, known.n_species);
    return p;
}

const TorusGrid& data_grid(const std::vector<ProbeMeasurement>& data, const char* stage) {
    if (data.empty()) throw config_error(stage, "no probe measurements");
    return data[0].uII.at(0).grid;
}

std::string entry_name(const char* sym, int i, int j) {
    return std::string(sym) + "_" + std::to_string(i) + std::to_string(j);
}

// Runs diagonal probes before pair probes so pair targets can subtract known diagonal parts.
std::vector<std::size_t> diagonal_first(const std::vector<ProbeMeasurement>& data) {
    std::vector<std::size_t> order;
    for (int pass = 0; pass < 2; ++pass)
        for (std::size_t k = 0; k < data.size(); ++k) {
            const auto& sp = data[k].probe.species;
            const bool single = sp.size() == 1 || sp[0] == sp[1];
            if (single == (pass == 0)) order.push_back(k);
        }
    return order;
}

} // namespace

RecoveryReport recover_mu(const ModelParams& known, const std::vector<ProbeMeasurement>& data) {
    const TorusGrid& g = data_grid(data, "recover_mu");
    const int n = known.n_species;
    DriftOperator unit(Model::M1, unit_params(known), g);
    RecoveryReport rep;
    rep.kind = "mu";
    rep.matrix = Eigen::MatrixXd::Constant(n, n, std::nan(""));
    Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> done = Eigen::Matrix<bool, -1, -1>::Constant(n, n, false);
    std::vector<std::string> tried;

    for (std::size_t k : diagonal_first(data)) {
        const auto& m = data[k];
        for (const Target& t : probe_targets(m.probe, m.d, g, m.realization, m.background)) {
            if (done(t.row, t.col)) continue;
            cplx meas = measured_target(m, t);
            // Remove contributions of entries already known in this row.
            for (int c = 0; c < n; ++c)
                if (c != t.col && done(t.row, c))
                    meas -= rep.matrix(t.row, c) * reference_target(unit, m, {t.row, c, t.index, t.rate, t.amplitude}, n);
            const cplx ref = reference_target(unit, m, t, n);
            const double scale = std::abs(meas) + std::abs(ref);
            if (std::abs(ref) <= 1e-12 * std::max(1.0, scale)) {
                tried.push_back(entry_name("mu", t.row, t.col) + " via " + m.probe.label());
                continue;
            }
            const double mu = std::real(meas * std::conj(ref)) / std::norm(ref);
            rep.matrix(t.row, t.col) = mu;
            done(t.row, t.col) = true;
            const double res = std::abs(meas - mu * ref) / std::max(std::abs(meas), 1e-300);
            rep.entries.push_back({t.row, t.col, mu, res, m.probe.label()});
        }
    }
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            if (!done(i, j)) {
                std::string why = "zero kernel normalization: the reference pattern of " + entry_name("mu", i, j) +
                                  " vanishes at every probe";
                if (!tried.empty()) why += " (tried " + tried.front() + (tried.size() > 1 ? ", ..." : "") + ")";
                throw identifiability_error("recover_mu", why);
            }
    return rep;
}

RecoveryReport recover_normalization(const ModelParams& known, const std::vector<ProbeMeasurement>& data) {
    const TorusGrid& g = data_grid(data, "recover_normalization");
    const int n = known.n_species;
    if (known.mu.rows() != n || known.mu.cols() != n)
        throw config_error("recover_normalization", "mu must be known and n x n");
    RecoveryReport rep;
    rep.kind = "normalization";
    rep.normalization = Eigen::MatrixXcd::Constant(n, n, cplx(std::nan(""), 0.0));
    Eigen::Matrix<bool, -1, -1> done = Eigen::Matrix<bool, -1, -1>::Constant(n, n, false);
    for (std::size_t k : diagonal_first(data)) {
        const auto& m = data[k];
        for (const Target& t : probe_targets(m.probe, m.d, g, m.realization, m.background)) {
            if (done(t.row, t.col)) continue;
            const double mu = known.mu(t.row, t.col);
            if (mu == 0.0)
                throw identifiability_error("recover_normalization",
                                            entry_name("mu", t.row, t.col) + " = 0 hides the kernel constant");
            cplx meas = measured_target(m, t);
            cplx factor = 2.0 * mu * t.amplitude;
            if (!constant_probe(m.probe)) {
                // Collinear modes: i xi_t . k^ = (xi_t . xi_j / |xi_j|^2) N(xi_j) exactly.
                const auto& pc = column_pattern(m.probe, t);
                const Point xj = lattice_frequency(g, pc.mode);
                const Point xt = divergence_frequency(g, t.index);
                const double cross = xt[0] * xj[1] - xt[1] * xj[0];
                if (std::abs(cross) > 1e-9 * (std::hypot(xt[0], xt[1]) * std::hypot(xj[0], xj[1])))
                    throw config_error("recover_normalization", "probe modes must be collinear");
                const double c = dot(xt, xj) / dot(xj, xj);
                if (std::abs(c) < 1e-12) continue;
                factor *= c;
            }
            const cplx N = meas / factor;
            rep.normalization(t.row, t.col) = N;
            done(t.row, t.col) = true;
            rep.entries.push_back({t.row, t.col, N, 0.0, m.probe.label()});
            if (std::abs(N) < 1e-10)
                rep.flags.push_back("zero normalization for " + entry_name("N", t.row, t.col) + " from " +
                                    m.probe.label());
        }
    }
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            if (!done(i, j))
                throw identifiability_error("recover_normalization",
                                            "no usable probe for " + entry_name("N", i, j));
    return rep;
}

namespace {

// |Omega| w^_ij at every mode, from the sampled potential.
std::vector<std::vector<Eigen::ArrayXcd>> potential_spectra(const ModelParams& known, const TorusGrid& g) {
    const int n = known.n_species;
    std::vector<std::vector<Eigen::ArrayXcd>> out(n, std::vector<Eigen::ArrayXcd>(n));
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) out[i][j] = dft_forward(sample_kernel(known.kernels[i][j], g)[0]).coefficients * g.volume();
    return out;
}

} // namespace

RecoveryReport recover_nu(const ModelParams& known, const std::vector<ProbeMeasurement>& data) {
    const TorusGrid& g = data_grid(data, "recover_nu");
    const int n = known.n_species;
    if (int(known.kernels.size()) != n) throw config_error("recover_nu", "potentials must be known");
    const auto W = potential_spectra(known, g);
    RecoveryReport rep;
    rep.kind = "nu";
    rep.matrix = Eigen::MatrixXd::Constant(n, n, std::nan(""));
    Eigen::Matrix<bool, -1, -1> done = Eigen::Matrix<bool, -1, -1>::Constant(n, n, false);
    for (std::size_t k : diagonal_first(data)) {
        const auto& m = data[k];
        if (constant_probe(m.probe)) throw config_error("recover_nu", "constant probes carry no drift in M2");
        if (m.probe.species.size() == 2 && m.probe.species[0] == m.probe.species[1])
            throw config_error("recover_nu", "repeated-species probes are for potential recovery");
        for (const Target& t : probe_targets(m.probe, m.d, g, m.realization, m.background)) {
            if (done(t.row, t.col)) continue;
            const ProbePattern& pc = column_pattern(m.probe, t);
            const int jdx = g.mode_index(pc.mode[0], pc.mode[1]);
            const Point xj = divergence_frequency(g, jdx);
            const Point xt = divergence_frequency(g, t.index);
            const cplx w = W[t.row][t.col][jdx];
            const double wmax = W[t.row][t.col].abs().maxCoeff();
            const cplx F = 2.0 * t.amplitude * (-dot(xt, xj)) * w;
            if (std::abs(w) <= 1e-10 * wmax || std::abs(dot(xt, xj)) < 1e-12) continue;
            const cplx meas = measured_target(m, t);
            const double nu = std::real(meas * std::conj(F)) / std::norm(F);
            rep.matrix(t.row, t.col) = nu;
            done(t.row, t.col) = true;
            rep.entries.push_back({t.row, t.col, nu, std::abs(meas - nu * F) / std::max(std::abs(meas), 1e-300),
                                   m.probe.label()});
        }
    }
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            if (!done(i, j))
                throw identifiability_error("recover_nu", "w^ of " + entry_name("w", i, j) +
                                                              " vanishes at every probed frequency; " +
                                                              entry_name("nu", i, j) + " is not identifiable there");
    return rep;
}

int default_w_cutoff(const TorusGrid& g) {
    int c = g.points[0] / 2 - 2;
    if (g.ndim == 2) c = std::min(c, g.points[1] / 2 - 2);
    return std::max(c, 1);
}

namespace {

std::vector<std::array<int, 2>> half_lattice(const TorusGrid& g, int cutoff) {
    std::vector<std::array<int, 2>> out;
    std::vector<bool> seen(g.size(), false);
    const int c1 = g.ndim == 2 ? cutoff : 0;
    for (int k0 = 0; k0 <= cutoff; ++k0)
        for (int k1 = -c1; k1 <= c1; ++k1) {
            if (k0 == 0 && k1 <= 0) continue;
            // At cutoff N/2 several lattice labels alias one grid mode.
            const int idx = g.mode_index(k0, k1), cdx = g.mode_index(-k0, -k1);
            if (seen[idx] || seen[cdx]) continue;
            seen[idx] = seen[cdx] = true;
            out.push_back({k0, k1});
        }
    return out;
}

std::vector<std::array<int, 2>> auxiliary_modes(const TorusGrid& g) {
    if (g.ndim == 1) return {{1, 0}, {2, 0}, {3, 0}, {-1, 0}};
    return {{1, 0}, {0, 1}, {1, 1}, {1, -1}, {-1, 0}, {0, -1}, {2, 0}, {0, 2}};
}

bool probe_ok(const ProbeSpec& p, const TorusGrid& g, const std::array<int, 2>& xi) {
    try {
        check_probe(p, g, Realization::complex_wave);
    } catch (const Error&) {
        return false;
    }
    const Target t = probe_targets(p, {}, g, Realization::complex_wave, 1.0).front();
    return std::abs(dot(divergence_frequency(g, t.index), divergence_frequency(g, g.mode_index(xi[0], xi[1])))) > 1e-9;
}

} // namespace

std::vector<ProbeSpec> w_schedule(int n_species, const TorusGrid& g, int cutoff) {
    const int nyq = g.ndim == 2 ? std::min(g.points[0], g.points[1]) / 2 : g.points[0] / 2;
    if (cutoff < 1 || cutoff > nyq) throw config_error("w_schedule", "cutoff must lie in [1, N/2]");
    std::vector<ProbeSpec> out;
    const auto aux = auxiliary_modes(g);
    for (int i = 0; i < n_species; ++i)
        for (int j = 0; j < n_species; ++j)
            for (const auto& xi : half_lattice(g, cutoff)) {
                const ProbePattern pw = ProbePattern::wave(xi[0], xi[1]);
                if (i == j) {
                    ProbeSpec single{{i}, {pw}};
                    if (probe_ok(single, g, xi)) {
                        out.push_back(single);
                        continue;
                    }
                }
                // The unknown mode is always the last pattern.
                for (const auto& a : aux) {
                    if (a == xi) continue;
                    ProbeSpec p{{i, j}, {ProbePattern::wave(a[0], a[1]), pw}};
                    if (probe_ok(p, g, xi)) {
                        out.push_back(p);
                        break;
                    }
                }
            }
    return out;
}

RecoveryReport recover_w(const ModelParams& known, const std::vector<ProbeMeasurement>& data, int cutoff) {
    const TorusGrid& g = data_grid(data, "recover_w");
    const int n = known.n_species;
    if (known.nu.rows() != n || known.nu.cols() != n) throw config_error("recover_w", "nu must be known and n x n");
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            if (known.nu(i, j) == 0.0)
                throw identifiability_error("recover_w", entry_name("nu", i, j) + " = 0 leaves " +
                                                             entry_name("w", i, j) +
                                                             " unobservable and no alternate probe exists");
    RecoveryReport rep;
    rep.kind = "w";
    rep.matrix = known.nu;
    const double vol = g.volume();
    // table[i][j][flat index] for half-lattice modes recovered so far.
    std::vector<std::vector<std::map<int, cplx>>> table(n, std::vector<std::map<int, cplx>>(n));

    for (int pass = 0; pass < 3; ++pass)
        for (const auto& m : data) {
            const auto& sp = m.probe.species;
            if (m.realization != Realization::complex_wave || constant_probe(m.probe))
                throw config_error("recover_w", "potential recovery uses direct complex wave probes");
            const int kind = sp.size() == 1 ? 0 : (sp[0] == sp[1] ? 1 : 2);
            if (kind != pass) continue;
            const Target t = probe_targets(m.probe, m.d, g, m.realization, m.background).front();
            const auto& xi = m.probe.patterns.back().mode;
            const int xdx = g.mode_index(xi[0], xi[1]);
            const Point xt = divergence_frequency(g, t.index);
            const double c = -dot(xt, divergence_frequency(g, xdx));
            const double nu = known.nu(t.row, t.col);
            if (std::abs(c) < 1e-9) continue;
            cplx rhs = measured_target(m, t) / (2.0 * nu * t.amplitude * vol);
            if (kind == 1) {
                const auto& a = m.probe.patterns[0].mode;
                const int adx = g.mode_index(a[0], a[1]);
                auto& row = table[t.row][t.col];
                cplx wa;
                if (row.count(adx))
                    wa = row[adx];
                else if (row.count(g.mode_index(-a[0], -a[1])))
                    wa = std::conj(row[g.mode_index(-a[0], -a[1])]);
                else
                    continue;
                rhs -= -dot(xt, divergence_frequency(g, adx)) * wa;
            }
            table[t.row][t.col][xdx] = rhs / c;
        }

    for (int i = 0; i < n; ++i) {
        std::vector<Field> row;
        for (int j = 0; j < n; ++j) {
            Spectrum s{g, Eigen::ArrayXcd::Zero(g.size()), true};
            for (const auto& xi : half_lattice(g, cutoff)) {
                const int idx = g.mode_index(xi[0], xi[1]);
                auto it = table[i][j].find(idx);
                if (it == table[i][j].end()) {
                    rep.gaps.push_back(entry_name("w", i, j) + "(" + std::to_string(xi[0]) + "," +
                                       std::to_string(xi[1]) + ")");
                    continue;
                }
                s.coefficients[idx] = it->second;
                s.coefficients[g.mode_index(-xi[0], -xi[1])] = std::conj(it->second);
                rep.w_table.push_back({i, j, xi, it->second});
            }
            Field w = dft_inverse(s);
            w.is_real = true;
            w.settle();
            row.push_back(std::move(w));
        }
        rep.w.push_back(std::move(row));
    }
    return rep;
}

} // namespace aggrekit
