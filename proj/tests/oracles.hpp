#pragma once

// Brute-force reference computations kept apart from the library code paths.

#include "aggrekit/torus_field.hpp"

#include <cmath>
#include <numbers>
#include <random>

namespace oracle {

using aggrekit::cplx;
using aggrekit::Field;
using aggrekit::TorusGrid;

inline Field random_field(const TorusGrid& g, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> u(lo, hi);
    Field f(g, true);
    for (int i = 0; i < g.size(); ++i) f.values[i] = u(rng);
    return f;
}

// c(xi) = (1/N) sum_x f(x) e^{-i xi.x}, direct double loop.
inline Eigen::ArrayXcd direct_dft(const Field& f) {
    const TorusGrid& g = f.grid;
    Eigen::ArrayXcd c = Eigen::ArrayXcd::Zero(g.size());
    for (int k = 0; k < g.size(); ++k) {
        auto xi = g.frequency(k);
        cplx acc = 0.0;
        for (int n = 0; n < g.size(); ++n) {
            auto x = g.node(n);
            acc += f.values[n] * std::polar(1.0, -(xi[0] * x[0] + xi[1] * x[1]));
        }
        c[k] = acc / double(g.size());
    }
    return c;
}

// (k * u)(x_a) = sum_b k(x_a - x_b) u(x_b) dV with periodic index wrap.
inline Field direct_convolution(const Field& k, const Field& u) {
    const TorusGrid& g = u.grid;
    Field out(g, k.is_real && u.is_real);
    const int n0 = g.points[0], n1 = g.points[1];
    for (int a0 = 0; a0 < n0; ++a0)
        for (int a1 = 0; a1 < n1; ++a1) {
            cplx acc = 0.0;
            for (int b0 = 0; b0 < n0; ++b0)
                for (int b1 = 0; b1 < n1; ++b1) {
                    int d0 = ((a0 - b0) % n0 + n0) % n0, d1 = ((a1 - b1) % n1 + n1) % n1;
                    acc += k.values[g.index(d0, d1)] * u.values[g.index(b0, b1)];
                }
            out.values[g.index(a0, a1)] = acc * g.cell_volume();
        }
    return out;
}

inline double max_abs_diff(const Field& a, const Field& b) { return (a.values - b.values).abs().maxCoeff(); }

inline double rel_l2(const Eigen::ArrayXcd& a, const Eigen::ArrayXcd& ref) {
    return std::sqrt((a - ref).abs2().sum() / ref.abs2().sum());
}

// K0(z) = int_0^inf exp(-z cosh t) dt by composite Simpson.
inline double bessel_k0(double z) {
    const double tmax = std::acosh(std::max(60.0 / z, 1.0)) + 1.0;
    const int n = 40000;
    const double h = tmax / n;
    double acc = 0.0;
    for (int k = 0; k <= n; ++k) {
        const double w = (k == 0 || k == n) ? 1.0 : (k % 2 ? 4.0 : 2.0);
        acc += w * std::exp(-z * std::cosh(k * h));
    }
    return acc * h / 3.0;
}

} // namespace oracle
