#pragma once

#include "aggrekit/kernels.hpp"
#include "aggrekit/torus_field.hpp"

#include <Eigen/Dense>

#include <functional>
#include <optional>
#include <vector>

namespace aggrekit {

enum class Model { M1, M2, heat };

std::string to_string(Model m);
Model model_from(const std::string& s);

struct ModelParams {
    int n_species = 1;
    std::vector<double> d;
    // Variable diffusion for species 0, heat path only.
    std::optional<Field> d_field;
    Eigen::MatrixXd mu;
    Eigen::MatrixXd nu;
    std::vector<std::vector<KernelSpec>> kernels;
    bool clamp_enabled = true;

    void validate(Model model, const TorusGrid& grid) const;
};

// Step grid and snapshot request. Snapshots must sit on multiples of the
// effective step T / ceil(T / dt); an empty list records only t = T.
struct Schedule {
    double T = 1.0;
    double dt = 1e-3;
    std::vector<double> snapshots;

    int steps() const;
    double step() const { return T / steps(); }
    static Schedule every_step(double T, double dt);
};

// Step index of every requested snapshot.
std::vector<int> snapshot_steps(const Schedule& s);

struct Trajectory {
    std::vector<double> times;
    std::vector<std::vector<Field>> states; // states[k][species]

    const std::vector<Field>& at(double t) const;
    const std::vector<Field>& back() const { return states.back(); }
};

// Called at every requested snapshot; must not keep references to the fields.
using Observer = std::function<void(double t, const std::vector<Field>& u)>;

Field step_heat(const Field& u, double d, double dt);
// Strang step of u_t = d(x) Lap u: exact half steps at d_max around an RK2 correction.
Field step_heat_variable(const Field& u, const Field& d, double dt);
Field apply_clamp(const Field& u);

Trajectory simulate_heat(const ModelParams& params, const std::vector<Field>& f, const Schedule& s,
                         const Observer& observer = {}, bool record = true);
Trajectory simulate_m1(const ModelParams& params, const std::vector<Field>& f, const Schedule& s,
                       const Observer& observer = {}, bool record = true);
Trajectory simulate_m2(const ModelParams& params, const std::vector<Field>& f, const Schedule& s,
                       const Observer& observer = {}, bool record = true);
Trajectory simulate(Model model, const ModelParams& params, const std::vector<Field>& f, const Schedule& s,
                    const Observer& observer = {}, bool record = true);

// Drift assembly shared by the nonlinear solvers and the variation systems.
// velocity_i = sum_j mu_ij (k_ij * u_j) for M1, sum_j nu_ij grad(w_ij * u_j) for M2.
class DriftOperator {
public:
    DriftOperator(Model model, const ModelParams& params, const TorusGrid& grid);

    const TorusGrid& grid() const { return grid_; }
    int species() const { return n_; }
    // True when every weighted multiplier is exactly zero.
    bool vanishes() const;

    // Raw (unnormalized) transforms of each species in, velocity components out.
    void velocity(const std::vector<Eigen::ArrayXcd>& u_hat, std::vector<std::vector<Eigen::ArrayXcd>>& v) const;
    // div(g_i velocity_i) with g_i = max(u_i, 0) when clamp is set, else u_i.
    std::vector<Eigen::ArrayXcd> flux(const std::vector<Eigen::ArrayXcd>& u, bool clamp, double* max_speed) const;
    // div(g_i velocity_i(v)) for separate carrier g and transported state v.
    std::vector<Eigen::ArrayXcd> flux(const std::vector<Eigen::ArrayXcd>& g, const std::vector<Eigen::ArrayXcd>& v,
                                      double* max_speed) const;
    // Single entry (i, j) with unit coefficient: div(g_i (unit drift from v_j)).
    Eigen::ArrayXcd entry_flux(int i, int j, const Eigen::ArrayXcd& g, const Eigen::ArrayXcd& v) const;

private:
    Eigen::ArrayXcd divergence_raw(const std::vector<Eigen::ArrayXcd>& comps) const;

    Model model_;
    TorusGrid grid_;
    int n_;
    Eigen::MatrixXd coef_;
    // mult_[i][j][c]: multiplies raw transform of u_j, inverse gives drift component c.
    std::vector<std::vector<std::vector<Eigen::ArrayXcd>>> mult_;
    std::vector<Eigen::ArrayXcd> deriv_; // i xi_c / N with Nyquist removed
};

struct MeasurementSet {
    Mask mask;
    std::vector<double> times;
    std::vector<std::vector<Field>> snapshots; // sentinel NaN outside the mask
    std::optional<std::vector<Field>> terminal; // full torus at T when map 2 is used
    double T = 0.0;
};

MeasurementSet observe(const Trajectory& traj, const Mask& mask, const std::vector<double>& times,
                       bool with_terminal = false);

} // namespace aggrekit
