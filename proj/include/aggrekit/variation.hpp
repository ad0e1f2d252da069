#pragma once

#include "aggrekit/forward_solver.hpp"

namespace aggrekit {

// Initial data of the nonlinear runs is eps f1 + eps^2 f2, so with
// u = eps uI + eps^2/2 uII the second variation starts from 2 f2.
struct VariationInput {
    std::vector<Field> f1;
    std::vector<Field> f2;
    std::vector<double> epsilons{1e-2, 5e-3, 2.5e-3};

    void validate(int n_species) const;
};

struct VariationPair {
    Trajectory uI;
    Trajectory uII;
    double residual = 0.0; // relative l2 misfit of the quadratic model over all runs
};

Trajectory solve_first_variation(const std::vector<double>& d, const std::vector<Field>& f1, const Schedule& s);

// uI must carry a snapshot at every step of s. The source is
// 2 div(uI_i sum_j c_ij drift_ij(uI_j)), evaluated at step midpoints as in the
// nonlinear splitting. Output snapshots follow s.snapshots.
Trajectory solve_second_variation(Model model, const ModelParams& params, const Trajectory& uI,
                                  const std::vector<Field>& f2, const Schedule& s);
Trajectory solve_second_variation_m1(const ModelParams& params, const Trajectory& uI, const std::vector<Field>& f2,
                                     const Schedule& s);
Trajectory solve_second_variation_m2(const ModelParams& params, const Trajectory& uI, const std::vector<Field>& f2,
                                     const Schedule& s);

VariationPair extract_variations(Model model, const ModelParams& params, const VariationInput& input,
                                 const Schedule& s, int threads = 1);

// Relative l2 distance between two trajectories on the same snapshots.
double trajectory_distance(const Trajectory& a, const Trajectory& ref);

} // namespace aggrekit
