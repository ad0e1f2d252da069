#include "aggrekit/variation.hpp"

#include "aggrekit/errors.hpp"
#include "aggrekit/parallel.hpp"

#include <set>

namespace aggrekit {

namespace {

void require_nonnegative(const std::vector<Field>& f, const char* stage) {
    for (const auto& fi : f)
        if (fi.is_real && fi.real().minCoeff() < 0.0) throw config_error(stage, "f1 must be non-negative");
}

} // namespace

void VariationInput::validate(int n_species) const {
    if (int(f1.size()) != n_species || int(f2.size()) != n_species)
        throw config_error("variation", "one f1 and one f2 per species");
    require_nonnegative(f1, "variation.f1");
    for (const auto& f : f1)
        if (!f.is_real) throw config_error("variation.f1", "nonlinear runs need real f1");
    if (epsilons.size() < 2) throw config_error("variation.epsilons", "need at least two epsilon values");
    std::set<double> seen;
    for (double e : epsilons) {
        if (!(e > 0.0) || !(e < 1.0)) throw config_error("variation.epsilons", "each epsilon must lie in (0, 1)");
        if (!seen.insert(e).second) throw config_error("variation.epsilons", "epsilon values must be distinct");
    }
}

Trajectory solve_first_variation(const std::vector<double>& d, const std::vector<Field>& f1, const Schedule& s) {
    require_nonnegative(f1, "solve_first_variation");
    ModelParams p;
    p.n_species = int(d.size());
    p.d = d;
    return simulate_heat(p, f1, s);
}

Trajectory solve_second_variation(Model model, const ModelParams& params, const Trajectory& uI,
                                  const std::vector<Field>& f2, const Schedule& s) {
    const int n = params.n_species;
    if (int(f2.size()) != n) throw config_error("solve_second_variation", "one f2 per species");
    const TorusGrid& g = f2[0].grid;
    DriftOperator op(model, params, g);
    const int m = s.steps();
    const double dt = s.step();

    std::vector<const std::vector<Field>*> first(m + 1);
    for (int k = 0; k <= m; ++k) {
        try {
            first[k] = &uI.at(k * dt);
        } catch (const Error&) {
            throw config_error("solve_second_variation", "time-grid mismatch: uI lacks t = " + std::to_string(k * dt));
        }
        if (int(first[k]->size()) != n) throw config_error("solve_second_variation", "uI species count mismatch");
    }

    bool real = (*first[0])[0].is_real;
    for (int i = 0; i < n; ++i) real = real && f2[i].is_real && (*first[0])[i].is_real;

    std::vector<Field> v;
    for (int i = 0; i < n; ++i) {
        Field fi = 2.0 * f2[i];
        fi.is_real = real;
        v.push_back(fi);
    }

    std::vector<int> plan = snapshot_steps(s);
    std::size_t next = 0;
    Trajectory out;
    auto emit = [&](int step) {
        while (next < plan.size() && plan[next] == step) {
            out.times.push_back(step * dt);
            out.states.push_back(v);
            ++next;
        }
    };
    emit(0);

    std::vector<Eigen::ArrayXcd> mid(n);
    for (int step = 1; step <= m; ++step) {
        for (int i = 0; i < n; ++i) {
            v[i] = step_heat(v[i], params.d[i], dt / 2);
            mid[i] = step_heat((*first[step - 1])[i], params.d[i], dt / 2).values;
        }
        auto src = op.flux(mid, mid, nullptr);
        for (int i = 0; i < n; ++i) {
            v[i].values += (2.0 * dt) * src[i];
            v[i] = step_heat(v[i].settle(), params.d[i], dt / 2);
        }
        emit(step);
    }
    return out;
}

Trajectory solve_second_variation_m1(const ModelParams& params, const Trajectory& uI, const std::vector<Field>& f2,
                                     const Schedule& s) {
    return solve_second_variation(Model::M1, params, uI, f2, s);
}

Trajectory solve_second_variation_m2(const ModelParams& params, const Trajectory& uI, const std::vector<Field>& f2,
                                     const Schedule& s) {
    return solve_second_variation(Model::M2, params, uI, f2, s);
}

VariationPair extract_variations(Model model, const ModelParams& params, const VariationInput& input,
                                 const Schedule& s, int threads) {
    if (model == Model::heat) throw config_error("extract_variations", "model must be M1 or M2");
    input.validate(params.n_species);
    const int ne = int(input.epsilons.size()), n = params.n_species;

    std::vector<Trajectory> runs(ne);
    parallel_for(ne, threads, [&](int k) {
        double e = input.epsilons[k];
        std::vector<Field> f;
        for (int i = 0; i < n; ++i) f.push_back(e * input.f1[i] + (e * e) * input.f2[i]);
        try {
            runs[k] = simulate(model, params, f, s);
        } catch (const Error& err) {
            throw Error(err.kind(), "extract_variations", "solver failed at eps=" + std::to_string(e) + ": " + err.what());
        }
    });

    // Same design for every node and time: u(eps) = eps a + eps^2/2 b.
    Eigen::MatrixXd X(ne, 2);
    for (int k = 0; k < ne; ++k) {
        double e = input.epsilons[k];
        X(k, 0) = e;
        X(k, 1) = 0.5 * e * e;
    }
    Eigen::MatrixXd P = X.completeOrthogonalDecomposition().pseudoInverse();

    VariationPair pair;
    pair.uI.times = runs[0].times;
    pair.uII.times = runs[0].times;
    double res2 = 0.0, ref2 = 0.0;
    for (std::size_t t = 0; t < runs[0].times.size(); ++t) {
        std::vector<Field> a, b;
        for (int i = 0; i < n; ++i) {
            const TorusGrid& g = input.f1[i].grid;
            Field fa(g, true), fb(g, true);
            for (int k = 0; k < ne; ++k) {
                const Eigen::ArrayXcd& u = runs[k].states[t][i].values;
                fa.values += P(0, k) * u;
                fb.values += P(1, k) * u;
            }
            for (int k = 0; k < ne; ++k) {
                const Eigen::ArrayXcd& u = runs[k].states[t][i].values;
                Eigen::ArrayXcd r = u - X(k, 0) * fa.values - X(k, 1) * fb.values;
                res2 += r.abs2().sum();
                ref2 += u.abs2().sum();
            }
            a.push_back(std::move(fa));
            b.push_back(std::move(fb));
        }
        pair.uI.states.push_back(std::move(a));
        pair.uII.states.push_back(std::move(b));
    }
    pair.residual = ref2 > 0.0 ? std::sqrt(res2 / ref2) : 0.0;
    return pair;
}

double trajectory_distance(const Trajectory& a, const Trajectory& ref) {
    if (a.times.size() != ref.times.size()) throw config_error("trajectory_distance", "snapshot count mismatch");
    double num = 0.0, den = 0.0;
    for (std::size_t t = 0; t < a.times.size(); ++t)
        for (std::size_t i = 0; i < a.states[t].size(); ++i) {
            num += (a.states[t][i].values - ref.states[t][i].values).abs2().sum();
            den += ref.states[t][i].values.abs2().sum();
        }
    return den > 0.0 ? std::sqrt(num / den) : std::sqrt(num);
}

} // namespace aggrekit
