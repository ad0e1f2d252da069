#include "aggrekit/kernels.hpp"

#include "aggrekit/errors.hpp"

#include <cmath>
#include <numbers>

namespace aggrekit {

namespace {

constexpr double two_pi = 2.0 * std::numbers::pi;

Point lattice_frequency(const KernelSpec& s, const TorusGrid& g) {
    return {two_pi * s.mode[0] / g.period[0], g.ndim == 2 ? two_pi * s.mode[1] / g.period[1] : 0.0};
}

double bump_derivative(double t) {
    if (t >= 1.0) return 0.0;
    double q = 1.0 - t * t;
    return smooth_bump(t) * (-2.0 * t / (q * q));
}

} // namespace

double smooth_bump(double t) {
    t = std::abs(t);
    if (t >= 1.0) return 0.0;
    return std::exp(1.0 - 1.0 / (1.0 - t * t));
}

KernelSpec KernelSpec::zero(KernelRole role) {
    KernelSpec s;
    s.role = role;
    s.amplitude = 0.0;
    return s;
}

std::string to_string(KernelKind k) {
    switch (k) {
    case KernelKind::gaussian_bump: return "gaussian_bump";
    case KernelKind::cosine_mode: return "cosine_mode";
    case KernelKind::compact_radial_vector: return "compact_radial_vector";
    case KernelKind::compact_radial_potential: return "compact_radial_potential";
    case KernelKind::grid_sampled: return "grid_sampled";
    }
    return "?";
}

std::string to_string(KernelRole r) {
    return r == KernelRole::vector_kernel_k ? "vector_kernel_k" : "scalar_potential_w";
}

KernelKind kernel_kind_from(const std::string& s) {
    for (auto k : {KernelKind::gaussian_bump, KernelKind::cosine_mode, KernelKind::compact_radial_vector,
                   KernelKind::compact_radial_potential, KernelKind::grid_sampled})
        if (to_string(k) == s) return k;
    throw config_error("kernel", "unknown kernel kind '" + s + "'");
}

KernelRole kernel_role_from(const std::string& s) {
    if (s == "vector_kernel_k") return KernelRole::vector_kernel_k;
    if (s == "scalar_potential_w") return KernelRole::scalar_potential_w;
    throw config_error("kernel", "unknown kernel role '" + s + "'");
}

void validate_kernel(const KernelSpec& s, const TorusGrid& g) {
    const bool vec = s.role == KernelRole::vector_kernel_k;
    switch (s.kind) {
    case KernelKind::gaussian_bump:
        if (!(s.width > 0.0)) throw config_error("kernel", "gaussian width must be positive");
        if (s.amplitude < 0.0 && !vec)
            throw config_error("kernel", "scalar gaussian must be non-increasing in |x| (amplitude >= 0)");
        break;
    case KernelKind::cosine_mode:
        if (s.mode[0] == 0 && s.mode[1] == 0 && vec)
            throw config_error("kernel", "vector cosine mode needs a nonzero lattice frequency");
        break;
    case KernelKind::compact_radial_vector:
    case KernelKind::compact_radial_potential: {
        if (vec != (s.kind == KernelKind::compact_radial_vector))
            throw config_error("kernel", to_string(s.kind) + " cannot take role " + to_string(s.role));
        if (s.amplitude < 0.0) throw config_error("kernel", "radial profile must be non-negative");
        double half = g.period[0] / 2;
        if (g.ndim == 2) half = std::min(half, g.period[1] / 2);
        if (!(s.radius > 0.0) || s.radius > half)
            throw config_error("kernel", "support radius must lie in (0, period/2]");
        break;
    }
    case KernelKind::grid_sampled: {
        std::size_t want = vec ? std::size_t(g.ndim) : 1;
        if (s.samples.size() != want) throw config_error("kernel", "grid_sampled component count mismatch");
        for (const auto& f : s.samples) require_same_grid(f.grid, g, "grid_sampled kernel");
        break;
    }
    }
}

std::vector<Field> sample_kernel(const KernelSpec& s, const TorusGrid& g) {
    validate_kernel(s, g);
    const bool vec = s.role == KernelRole::vector_kernel_k;
    if (s.kind == KernelKind::grid_sampled) return s.samples;

    // Scalar radial profile along with the x/|x| direction for the vector role.
    auto radial = [&](double r) -> double {
        switch (s.kind) {
        case KernelKind::gaussian_bump: return s.amplitude * std::exp(-r * r / (2 * s.width * s.width));
        case KernelKind::compact_radial_vector: return s.amplitude * (r / s.radius) * smooth_bump(r / s.radius);
        case KernelKind::compact_radial_potential: return -s.amplitude * smooth_bump(r / s.radius);
        default: return 0.0;
        }
    };

    if (!vec) {
        Field w(g, true);
        Point xi = lattice_frequency(s, g);
        for (int i = 0; i < g.size(); ++i) {
            Point x = g.offset(i);
            double v = s.kind == KernelKind::cosine_mode ? s.amplitude * std::cos(xi[0] * x[0] + xi[1] * x[1])
                                                         : radial(std::hypot(x[0], x[1]));
            w.values[i] = v + s.offset;
        }
        return {w};
    }

    std::vector<Field> k(g.ndim, Field(g, true));
    if (s.kind == KernelKind::cosine_mode) {
        Point xi = lattice_frequency(s, g);
        double n = std::hypot(xi[0], xi[1]);
        for (int i = 0; i < g.size(); ++i) {
            Point x = g.offset(i);
            double sn = s.amplitude * std::sin(xi[0] * x[0] + xi[1] * x[1]);
            for (int a = 0; a < g.ndim; ++a) k[a].values[i] = sn * xi[a] / n;
        }
        return k;
    }
    for (int i = 0; i < g.size(); ++i) {
        Point x = g.offset(i);
        double r = std::hypot(x[0], x[1]);
        if (r == 0.0) continue; // origin node regularized to zero
        double K = radial(r);
        for (int a = 0; a < g.ndim; ++a) k[a].values[i] = K * x[a] / r;
    }
    return k;
}

double kernel_divergence(const KernelSpec& s, const TorusGrid& g, const Point& x) {
    if (s.role != KernelRole::vector_kernel_k) throw config_error("kernel", "divergence needs a vector kernel");
    double r = std::hypot(x[0], x[1]);
    const double n = g.ndim;
    switch (s.kind) {
    case KernelKind::cosine_mode: {
        Point xi = lattice_frequency(s, g);
        double q = std::hypot(xi[0], xi[1]);
        return s.amplitude * q * std::cos(xi[0] * x[0] + xi[1] * x[1]);
    }
    case KernelKind::compact_radial_vector: {
        // K(r) = A (r/R) b(r/R) makes x/|x| K = (A/R) x b(r/R), smooth through the origin.
        double t = r / s.radius;
        if (t >= 1.0) return 0.0;
        return s.amplitude / s.radius * (n * smooth_bump(t) + t * bump_derivative(t));
    }
    case KernelKind::gaussian_bump: {
        if (r == 0.0) return 0.0;
        double K = s.amplitude * std::exp(-r * r / (2 * s.width * s.width));
        double dK = -r / (s.width * s.width) * K;
        return dK + (n - 1) * K / r;
    }
    default: throw config_error("kernel", "no analytic divergence for " + to_string(s.kind));
    }
}

} // namespace aggrekit
