#include "aggrekit/forward_solver.hpp"

#include "aggrekit/errors.hpp"

#include <cmath>
#include <sstream>

namespace aggrekit {

std::string to_string(Model m) {
    switch (m) {
    case Model::M1: return "M1";
    case Model::M2: return "M2";
    case Model::heat: return "heat";
    }
    return "?";
}

Model model_from(const std::string& s) {
    if (s == "M1") return Model::M1;
    if (s == "M2") return Model::M2;
    if (s == "heat") return Model::heat;
    throw config_error("model", "unknown model '" + s + "'");
}

void ModelParams::validate(Model model, const TorusGrid& grid) const {
    if (n_species < 1) throw config_error("params", "need at least one species");
    if (int(d.size()) != n_species) throw config_error("params.d", "one diffusion value per species");
    for (double di : d)
        if (!(di > 0.0)) throw config_error("params.d", "diffusion must be positive");
    if (d_field) {
        if (model != Model::heat) throw config_error("params.d_field", "variable diffusion is heat-only");
        require_same_grid(d_field->grid, grid, "d_field");
        if (!(d_field->real().minCoeff() > 0.0)) throw config_error("params.d_field", "diffusion must be positive");
    }
    if (model == Model::heat) return;
    const Eigen::MatrixXd& c = model == Model::M1 ? mu : nu;
    const char* name = model == Model::M1 ? "params.mu" : "params.nu";
    if (c.rows() != n_species || c.cols() != n_species) throw config_error(name, "must be N x N");
    if (!c.allFinite()) throw config_error(name, "non-finite entry");
    if (int(kernels.size()) != n_species) throw config_error("params.kernels", "must be N x N");
    KernelRole want = model == Model::M1 ? KernelRole::vector_kernel_k : KernelRole::scalar_potential_w;
    for (int i = 0; i < n_species; ++i) {
        if (int(kernels[i].size()) != n_species) throw config_error("params.kernels", "must be N x N");
        for (int j = 0; j < n_species; ++j) {
            if (kernels[i][j].role != want) {
                std::ostringstream os;
                os << "kernel (" << i << "," << j << ") role does not match model " << to_string(model);
                throw config_error("params.kernels", os.str());
            }
            validate_kernel(kernels[i][j], grid);
        }
    }
}

int Schedule::steps() const {
    if (!(T > 0.0) || !(dt > 0.0)) throw config_error("schedule", "T and dt must be positive");
    return std::max(1, int(std::ceil(T / dt - 1e-9)));
}

Schedule Schedule::every_step(double T, double dt) {
    Schedule s{T, dt, {}};
    int m = s.steps();
    for (int k = 0; k <= m; ++k) s.snapshots.push_back(T * k / m);
    return s;
}

const std::vector<Field>& Trajectory::at(double t) const {
    for (std::size_t k = 0; k < times.size(); ++k)
        if (std::abs(times[k] - t) <= 1e-12 * std::max(1.0, std::abs(t))) return states[k];
    throw config_error("trajectory", "requested time not simulated");
}

Field apply_clamp(const Field& u) {
    Field out = u;
    out.values = u.values.real().max(0.0).cast<cplx>();
    out.is_real = true;
    return out;
}

Field step_heat(const Field& u, double d, double dt) {
    if (!(d > 0.0)) throw config_error("step_heat", "diffusion must be positive");
    if (!(dt > 0.0)) throw config_error("step_heat", "dt must be positive");
    const TorusGrid& g = u.grid;
    Field out = u;
    fft_forward_inplace(g, out.values);
    for (int i = 0; i < g.size(); ++i) out.values[i] *= std::exp(-d * g.frequency_sq(i) * dt) / double(g.size());
    fft_inverse_inplace(g, out.values);
    return out.settle();
}

Field step_heat_variable(const Field& u, const Field& d, double dt) {
    require_same_grid(u.grid, d.grid, "step_heat_variable");
    const double d0 = d.real().maxCoeff();
    Field excess = d;
    excess.values -= d0;
    auto rhs = [&](const Field& v) { return hadamard(excess, laplacian(v)); };
    Field v = step_heat(u, d0, dt / 2);
    Field k1 = rhs(v);
    Field mid = v + dt * k1;
    Field k2 = rhs(mid);
    v = v + (dt / 2) * (k1 + k2);
    return step_heat(v, d0, dt / 2);
}

DriftOperator::DriftOperator(Model model, const ModelParams& params, const TorusGrid& grid)
    : model_(model), grid_(grid), n_(params.n_species) {
    if (model == Model::heat) throw config_error("drift", "heat model has no drift");
    params.validate(model, grid);
    coef_ = model == Model::M1 ? params.mu : params.nu;
    const int N = grid.size();
    deriv_.assign(grid.ndim, Eigen::ArrayXcd::Zero(N));
    for (int c = 0; c < grid.ndim; ++c)
        for (int i = 0; i < N; ++i) {
            bool nyq = 2 * std::abs(grid.mode(i)[c]) == grid.points[c];
            deriv_[c][i] = nyq ? cplx(0.0) : cplx(0.0, grid.frequency(i)[c] / N);
        }
    mult_.assign(n_, std::vector<std::vector<Eigen::ArrayXcd>>(n_));
    for (int i = 0; i < n_; ++i)
        for (int j = 0; j < n_; ++j) {
            auto comps = sample_kernel(params.kernels[i][j], grid);
            auto& m = mult_[i][j];
            if (model == Model::M1) {
                for (auto& k : comps) {
                    Eigen::ArrayXcd a = k.values;
                    fft_forward_inplace(grid, a);
                    m.push_back(a * (grid.cell_volume() / N));
                }
            } else {
                // A uniform potential has zero gradient; keep FFT round-off out of it.
                const auto& w = comps[0].values;
                if ((w == w[0]).all()) {
                    for (int c = 0; c < grid.ndim; ++c) m.push_back(Eigen::ArrayXcd::Zero(N));
                    continue;
                }
                Eigen::ArrayXcd a = comps[0].values;
                fft_forward_inplace(grid, a);
                a *= grid.cell_volume();
                for (int c = 0; c < grid.ndim; ++c) m.push_back(a * deriv_[c]);
            }
        }
}

bool DriftOperator::vanishes() const {
    for (int i = 0; i < n_; ++i)
        for (int j = 0; j < n_; ++j) {
            if (coef_(i, j) == 0.0) continue;
            for (const auto& m : mult_[i][j])
                if ((m != cplx(0.0)).any()) return false;
        }
    return true;
}

void DriftOperator::velocity(const std::vector<Eigen::ArrayXcd>& u_hat,
                             std::vector<std::vector<Eigen::ArrayXcd>>& v) const {
    const int N = grid_.size();
    v.assign(n_, std::vector<Eigen::ArrayXcd>(grid_.ndim, Eigen::ArrayXcd::Zero(N)));
    for (int i = 0; i < n_; ++i) {
        for (int c = 0; c < grid_.ndim; ++c) {
            Eigen::ArrayXcd acc = Eigen::ArrayXcd::Zero(N);
            for (int j = 0; j < n_; ++j)
                if (coef_(i, j) != 0.0) acc += coef_(i, j) * mult_[i][j][c] * u_hat[j];
            fft_inverse_inplace(grid_, acc);
            v[i][c] = std::move(acc);
        }
    }
}

Eigen::ArrayXcd DriftOperator::divergence_raw(const std::vector<Eigen::ArrayXcd>& comps) const {
    Eigen::ArrayXcd acc = Eigen::ArrayXcd::Zero(grid_.size());
    for (int c = 0; c < grid_.ndim; ++c) {
        Eigen::ArrayXcd a = comps[c];
        fft_forward_inplace(grid_, a);
        acc += deriv_[c] * a;
    }
    fft_inverse_inplace(grid_, acc);
    return acc;
}

std::vector<Eigen::ArrayXcd> DriftOperator::flux(const std::vector<Eigen::ArrayXcd>& g,
                                                 const std::vector<Eigen::ArrayXcd>& v, double* max_speed) const {
    std::vector<Eigen::ArrayXcd> v_hat(n_);
    for (int j = 0; j < n_; ++j) {
        v_hat[j] = v[j];
        fft_forward_inplace(grid_, v_hat[j]);
    }
    std::vector<std::vector<Eigen::ArrayXcd>> vel;
    velocity(v_hat, vel);
    if (max_speed) {
        double m = 0.0;
        for (int i = 0; i < n_; ++i) {
            Eigen::ArrayXd sq = Eigen::ArrayXd::Zero(grid_.size());
            for (int c = 0; c < grid_.ndim; ++c) sq += vel[i][c].abs2();
            m = std::max(m, std::sqrt(sq.maxCoeff()));
        }
        *max_speed = m;
    }
    std::vector<Eigen::ArrayXcd> out(n_);
    for (int i = 0; i < n_; ++i) {
        std::vector<Eigen::ArrayXcd> comps(grid_.ndim);
        for (int c = 0; c < grid_.ndim; ++c) comps[c] = g[i] * vel[i][c];
        out[i] = divergence_raw(comps);
    }
    return out;
}

std::vector<Eigen::ArrayXcd> DriftOperator::flux(const std::vector<Eigen::ArrayXcd>& u, bool clamp,
                                                 double* max_speed) const {
    if (!clamp) return flux(u, u, max_speed);
    std::vector<Eigen::ArrayXcd> g(n_);
    for (int i = 0; i < n_; ++i) g[i] = u[i].real().max(0.0).cast<cplx>();
    return flux(g, u, max_speed);
}

Eigen::ArrayXcd DriftOperator::entry_flux(int i, int j, const Eigen::ArrayXcd& g, const Eigen::ArrayXcd& v) const {
    Eigen::ArrayXcd vh = v;
    fft_forward_inplace(grid_, vh);
    std::vector<Eigen::ArrayXcd> comps(grid_.ndim);
    for (int c = 0; c < grid_.ndim; ++c) {
        Eigen::ArrayXcd a = mult_[i][j][c] * vh;
        fft_inverse_inplace(grid_, a);
        comps[c] = g * a;
    }
    return divergence_raw(comps);
}

namespace {

} // namespace

std::vector<int> snapshot_steps(const Schedule& s) {
    std::vector<int> at_step;
    const int m = s.steps();
    const double h = s.step();
    std::vector<double> times = s.snapshots.empty() ? std::vector<double>{s.T} : s.snapshots;
    double prev = -1.0;
    for (double t : times) {
        if (t <= prev) throw config_error("schedule.snapshots", "snapshot times must be strictly increasing");
        if (t < 0.0 || t > s.T * (1 + 1e-12)) throw config_error("schedule.snapshots", "snapshot outside [0, T]");
        int k = int(std::llround(t / h));
        if (std::abs(k * h - t) > 1e-9 * std::max(1.0, s.T))
            throw config_error("schedule.snapshots", "snapshot time is not on the step grid");
        at_step.push_back(std::min(k, m));
        prev = t;
    }
    return at_step;
}

namespace {

std::vector<Field> to_fields(const TorusGrid& g, const std::vector<Eigen::ArrayXcd>& u, bool real) {
    std::vector<Field> out;
    for (const auto& a : u) {
        Field f(g, real);
        f.values = a;
        out.push_back(std::move(f.settle()));
    }
    return out;
}

void check_initial(const std::vector<Field>& f, int n) {
    if (int(f.size()) != n) throw config_error("initial", "one initial field per species");
    for (const auto& fi : f) require_same_grid(f[0].grid, fi.grid, "initial");
}

Trajectory run_nonlinear(Model model, const ModelParams& params, const std::vector<Field>& f, const Schedule& s,
                         const Observer& observer, bool record) {
    check_initial(f, params.n_species);
    const TorusGrid& g = f[0].grid;
    DriftOperator op(model, params, g);
    if (!params.clamp_enabled)
        for (const auto& fi : f)
            if (fi.real().minCoeff() < 0.0) throw config_error("initial", "negative initial data with clamp disabled");
    // No drift at all: the splitting reduces to the heat flow, so take the exact stepper.
    if (op.vanishes()) return simulate_heat(params, f, s, observer, record);

    const int n = params.n_species, N = g.size(), m = s.steps();
    const double dt = s.step();
    double h_min = g.spacing(0);
    if (g.ndim == 2) h_min = std::min(h_min, g.spacing(1));

    std::vector<Eigen::ArrayXd> half(n, Eigen::ArrayXd(N));
    for (int i = 0; i < n; ++i)
        for (int k = 0; k < N; ++k) half[i][k] = std::exp(-params.d[i] * g.frequency_sq(k) * dt / 2) / N;
    auto diffuse = [&](std::vector<Eigen::ArrayXcd>& u) {
        for (int i = 0; i < n; ++i) {
            fft_forward_inplace(g, u[i]);
            u[i] *= half[i];
            fft_inverse_inplace(g, u[i]);
            u[i] = u[i].real().cast<cplx>();
        }
    };

    std::vector<int> plan = snapshot_steps(s);
    Trajectory traj;
    std::size_t next = 0;
    std::vector<Eigen::ArrayXcd> u(n);
    for (int i = 0; i < n; ++i) u[i] = f[i].values.real().cast<cplx>();
    auto emit = [&](int step) {
        while (next < plan.size() && plan[next] == step) {
            double t = step * dt;
            auto fields = to_fields(g, u, true);
            if (observer) observer(t, fields);
            if (record) {
                traj.times.push_back(t);
                traj.states.push_back(std::move(fields));
            }
            ++next;
        }
    };
    emit(0);

    auto cfl = [&](double speed, int step) {
        double c = speed * dt / h_min;
        if (c > 0.5) {
            std::ostringstream os;
            os << "CFL violation at step " << step << ": drift speed " << speed << " * dt / cell = " << c
               << " > 0.5";
            throw numerical_error("simulate_" + to_string(model), os.str());
        }
    };

    std::vector<Eigen::ArrayXcd> star(n);
    for (int step = 1; step <= m; ++step) {
        diffuse(u);
        double speed = 0.0;
        auto F0 = op.flux(u, params.clamp_enabled, &speed);
        cfl(speed, step);
        for (int i = 0; i < n; ++i) star[i] = u[i] + dt * F0[i];
        auto F1 = op.flux(star, params.clamp_enabled, &speed);
        cfl(speed, step);
        for (int i = 0; i < n; ++i) u[i] += (dt / 2) * (F0[i] + F1[i]);
        diffuse(u);
        for (int i = 0; i < n; ++i)
            if (!u[i].isFinite().all())
                throw numerical_error("simulate_" + to_string(model),
                                      "non-finite value at step " + std::to_string(step));
        emit(step);
    }
    return traj;
}

} // namespace

Trajectory simulate_heat(const ModelParams& params, const std::vector<Field>& f, const Schedule& s,
                         const Observer& observer, bool record) {
    check_initial(f, params.n_species);
    const TorusGrid& g = f[0].grid;
    params.validate(Model::heat, g);
    std::vector<int> plan = snapshot_steps(s);
    const int m = s.steps();
    const double dt = s.step();
    Trajectory traj;
    std::vector<Field> u = f;
    std::size_t next = 0;
    auto emit = [&](int step) {
        while (next < plan.size() && plan[next] == step) {
            if (observer) observer(step * dt, u);
            if (record) {
                traj.times.push_back(step * dt);
                traj.states.push_back(u);
            }
            ++next;
        }
    };
    emit(0);
    for (int step = 1; step <= m; ++step) {
        for (int i = 0; i < params.n_species; ++i) {
            if (i == 0 && params.d_field) u[i] = step_heat_variable(u[i], *params.d_field, dt);
            else u[i] = step_heat(u[i], params.d[i], dt);
            if (!u[i].values.isFinite().all())
                throw numerical_error("simulate_heat", "non-finite value at step " + std::to_string(step));
        }
        emit(step);
    }
    return traj;
}

Trajectory simulate_m1(const ModelParams& params, const std::vector<Field>& f, const Schedule& s,
                       const Observer& observer, bool record) {
    return run_nonlinear(Model::M1, params, f, s, observer, record);
}

Trajectory simulate_m2(const ModelParams& params, const std::vector<Field>& f, const Schedule& s,
                       const Observer& observer, bool record) {
    return run_nonlinear(Model::M2, params, f, s, observer, record);
}

Trajectory simulate(Model model, const ModelParams& params, const std::vector<Field>& f, const Schedule& s,
                    const Observer& observer, bool record) {
    switch (model) {
    case Model::M1: return simulate_m1(params, f, s, observer, record);
    case Model::M2: return simulate_m2(params, f, s, observer, record);
    case Model::heat: return simulate_heat(params, f, s, observer, record);
    }
    throw config_error("simulate", "unknown model");
}

MeasurementSet observe(const Trajectory& traj, const Mask& mask, const std::vector<double>& times,
                       bool with_terminal) {
    if (mask.count() == 0) throw config_error("observe", "empty measurement region");
    MeasurementSet ms;
    ms.mask = mask;
    ms.T = traj.times.empty() ? 0.0 : traj.times.back();
    double prev = -1.0;
    const double nan = std::numeric_limits<double>::quiet_NaN();
    for (double t : times) {
        if (t <= prev) throw config_error("observe", "times must be strictly increasing");
        prev = t;
        const auto& state = traj.at(t);
        std::vector<Field> snap;
        for (const auto& f : state) {
            require_same_grid(f.grid, mask.grid, "observe");
            Field r = f;
            for (int k = 0; k < r.size(); ++k)
                if (!mask.inside[k]) r.values[k] = cplx(nan, r.is_real ? 0.0 : nan);
            snap.push_back(std::move(r));
        }
        ms.times.push_back(t);
        ms.snapshots.push_back(std::move(snap));
    }
    if (with_terminal) ms.terminal = traj.back();
    return ms;
}

} // namespace aggrekit
