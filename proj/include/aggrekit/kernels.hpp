#pragma once

#include "aggrekit/torus_field.hpp"

#include <string>
#include <vector>

namespace aggrekit {

enum class KernelKind { gaussian_bump, cosine_mode, compact_radial_vector, compact_radial_potential, grid_sampled };
enum class KernelRole { vector_kernel_k, scalar_potential_w };

// Analytic kernel families sampled onto the grid by minimal-image offset.
//   gaussian_bump            A exp(-|x|^2 / 2 width^2); vector role multiplies by x/|x|
//   cosine_mode              A cos(xi.x); vector role is A sin(xi.x) xi/|xi|
//   compact_radial_vector    x/|x| K(|x|), K(r) = A (r/R) b(r/R)
//   compact_radial_potential W(r) = -A b(r/R), so grad W = x/|x| w with w >= 0
// with b(t) = exp(1 - 1/(1 - t^2)) on t < 1. `offset` adds a constant to
// scalar kernels.
struct KernelSpec {
    KernelKind kind = KernelKind::gaussian_bump;
    KernelRole role = KernelRole::scalar_potential_w;
    double amplitude = 1.0;
    double width = 0.1;
    double radius = 0.25;
    std::array<int, 2> mode{1, 0};
    double offset = 0.0;
    std::vector<Field> samples;

    static KernelSpec zero(KernelRole role);
};

std::string to_string(KernelKind k);
std::string to_string(KernelRole r);
KernelKind kernel_kind_from(const std::string& s);
KernelRole kernel_role_from(const std::string& s);

double smooth_bump(double t);

// One Field for the scalar role, ndim Fields for the vector role.
std::vector<Field> sample_kernel(const KernelSpec& spec, const TorusGrid& grid);
void validate_kernel(const KernelSpec& spec, const TorusGrid& grid);

// Pointwise divergence of the analytic vector families, used as a quadrature oracle.
double kernel_divergence(const KernelSpec& spec, const TorusGrid& grid, const Point& x);

} // namespace aggrekit
