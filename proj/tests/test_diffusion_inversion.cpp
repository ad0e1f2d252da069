#include "doctest.h"

#include "aggrekit/diffusion_inversion.hpp"
#include "aggrekit/errors.hpp"
#include "aggrekit/kernels.hpp"
#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

using namespace aggrekit;
using namespace oracle;
constexpr double pi = std::numbers::pi;
constexpr double gam = 0.5772156649015329;

namespace {

ErrorKind kind_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.kind();
    }
    FAIL("expected an error");
    return ErrorKind::io;
}

double heat_kernel(double r, double t) { return t > 0.0 ? std::exp(-r * r / (4.0 * t)) / (4.0 * pi * t) : 0.0; }

Eigen::VectorXd heat_series(double r, double dt, double T) {
    const int n = int(std::lround(T / dt));
    Eigen::VectorXd s(n + 1);
    for (int k = 0; k <= n; ++k) s[k] = heat_kernel(r, k * dt);
    return s;
}

double s_of(double p) { return 1.0 / (std::log(p) + 2.0 * gam); }

double weighted_l2(const NodeSet& nodes, const std::function<double(const Point&)>& f) {
    double acc = 0.0;
    for (const auto& x : nodes.points) acc += f(x) * f(x) * nodes.weight();
    return std::sqrt(acc);
}

} // namespace

TEST_CASE("laplace transform of exponential decay and of the planar heat kernel") {
    const double dt = 1e-3, T = 40.0;
    Eigen::VectorXd e(int(T / dt) + 1);
    for (int k = 0; k < e.size(); ++k) e[k] = std::exp(-k * dt);
    const TailModel off{false};
    for (double p : {1e-6, 1e-3, 0.1}) CHECK(std::abs(laplace_transform(e, dt, p, off) * (1.0 + p) - 1.0) < 1e-6);

    CHECK(laplace_transform(Eigen::VectorXd::Zero(100), 0.1, 1e-4) == 0.0);

    // Point source, d = 1: the transform is K0(sqrt(p) r) / (2 pi).
    const double r = 0.85;
    Eigen::VectorXd s = heat_series(r, 0.01, 2000.0);
    for (double p : {1e-6, 1e-5, 1e-4, 1e-3}) {
        const double want = bessel_k0(std::sqrt(p) * r) / (2.0 * pi);
        CHECK(std::abs(laplace_transform(s, 0.01, p) / want - 1.0) < 1e-3);
    }
    // Without the tail the small-p transform is badly truncated.
    CHECK(std::abs(laplace_transform(s, 0.01, 1e-6, off) / (bessel_k0(1e-3 * r) / (2 * pi)) - 1.0) > 0.1);

    CHECK(kind_of([&] { laplace_transform(s, 0.01, 0.0); }) == ErrorKind::config);
    CHECK(kind_of([&] { laplace_transform(Eigen::VectorXd::Ones(3), 0.1, 1e-3); }) == ErrorKind::config);
}

TEST_CASE("green function and cell log integrals") {
    for (double z : {1e-4, 0.03, 1.0}) CHECK(std::abs(green_p(z, 1.0) * 2.0 * pi / bessel_k0(z) - 1.0) < 1e-9);
    // Brute midpoint quadrature of ln|y| over an off-centre cell.
    const Point c{0.3, -0.2};
    const double h = 0.1;
    const int n = 400;
    double acc = 0.0;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            const double u = c[0] - h / 2 + (i + 0.5) * h / n, v = c[1] - h / 2 + (j + 0.5) * h / n;
            acc += std::log(std::hypot(u, v) / 2.0);
        }
    CHECK(std::abs(cell_log_mean(c, h) - acc / (n * n)) < 1e-7);
    // Centred cell: the singular integral has the closed form h^2 (ln(h/sqrt 2) - 3/2 + pi/4).
    const double centred = std::log(h / std::sqrt(2.0)) - 1.5 + pi / 4.0 - std::log(2.0);
    CHECK(std::abs(cell_log_mean({0.0, 0.0}, h) - centred) < 1e-12);
}

TEST_CASE("source comparison term") {
    const Point x{0.85, 0.0};
    const double p = 1e-4, lp = std::log(p), rho = 0.85 + 1.3;
    const SourceDensity q = SourceDensity::point({-1.3, 0.0});
    const double L = std::log(rho / 2.0);
    const double expansion = -(0.5 * lp + gam + L + rho * rho * p * lp / 8.0 + rho * rho / 4.0 * p * L +
                               (gam - 1.0) * rho * rho / 4.0 * p) /
                             (2.0 * pi * lp);
    CHECK(std::abs(compute_g0(q, x, p, G0Mode::expansion) / expansion - 1.0) < 1e-12);
    CHECK(std::abs(compute_g0(q, x, p, G0Mode::exact) * 2.0 * pi * lp / bessel_k0(std::sqrt(p) * rho) - 1.0) < 1e-9);

    SourceDensity none = q;
    none.weights = {0.0};
    CHECK(compute_g0(none, x, p) == 0.0);

    // A narrow Gaussian approaches the point mass as the width shrinks.
    double prev = 1.0;
    for (double w : {0.1, 0.05, 0.025}) {
        const double gap = std::abs(compute_g0(SourceDensity::gaussian({-1.3, 0.0}, w, w / 2), x, p) /
                                        compute_g0(q, x, p) -
                                    1.0);
        CHECK(gap < prev);
        prev = gap;
    }
    CHECK(prev < 1e-3);

    CHECK(kind_of([&] { compute_g0(q, {-1.3, 0.0}, p); }) == ErrorKind::numerical);
    CHECK(kind_of([&] { compute_g0(q, x, 0.5); }) == ErrorKind::config);
}

TEST_CASE("h vanishes for the unperturbed response") {
    const SourceDensity q = SourceDensity::point({1.3, 0.0});
    for (double p : default_p_values()) {
        const double u = bessel_k0(std::sqrt(p) * 2.15) / (2.0 * pi);
        CHECK(std::abs(compute_h(u, compute_g0(q, {-0.85, 0.0}, p, G0Mode::exact), p)) < 1e-5);
    }
}

TEST_CASE("asymptotic coefficient fit") {
    const auto P = default_p_values();
    const int np = int(P.size());
    Eigen::MatrixXd h(3, np);
    for (int k = 0; k < np; ++k) {
        const double s = s_of(P[k]);
        h(0, k) = 2.0 + 3.0 * s + 4.0 * s * s;
        h(1, k) = 0.0;
        h(2, k) = 2.0 + 3.0 * s + 4.0 * s * s + 0.7 * P[k] - 0.2 * P[k] / s;
    }
    auto c = extract_H(P, h);
    CHECK(c.remainder_columns == 3);
    for (int i : {0, 2}) {
        CHECK(std::abs(c.H0[i] - 2.0) < 1e-8);
        CHECK(std::abs(c.H1[i] - 3.0) < 1e-8);
        CHECK(std::abs(c.H2[i] - 4.0) < 1e-8);
    }
    CHECK(c.H2[1] == 0.0);
    CHECK(c.flagged.empty());

    // Square-root contamination outside the model. It is nearly collinear with
    // s^2 on this ladder, so the bound only holds for small amplitudes.
    for (int k = 0; k < np; ++k) h(0, k) += 1e-2 * std::sqrt(P[k]);
    auto d = extract_H(P, h.topRows(1));
    CHECK(std::abs(d.H0[0] / 2.0 - 1.0) < 1e-2);
    CHECK(std::abs(d.H1[0] / 3.0 - 1.0) < 1e-2);
    CHECK(std::abs(d.H2[0] / 4.0 - 1.0) < 1e-2);

    CHECK(extract_H({P[0], P[1], P[2], P[3], P[4]}, h.leftCols(5)).remainder_columns == 1);
    std::vector<double> clustered(np, 1e-4);
    CHECK(kind_of([&] { extract_H(clustered, h); }) == ErrorKind::config);
    CHECK(kind_of([&] { extract_H({1e-3, 1e-4, 1e-5}, h.leftCols(3)); }) == ErrorKind::config);
}

TEST_CASE("fredholm assembly and regularized solve") {
    NodeSet one;
    one.spacing = 0.1;
    one.points = {{0.1, 0.2}};
    one.lattice = {{1, 2}};
    const Point x{0.9, 0.0}, q{-1.3, 0.4};
    auto sys = assemble_fredholm({x}, {q}, one);
    const double want = 4.0 * std::log(std::hypot(0.8, 0.2) / 2.0) * std::log(std::hypot(1.4, 0.2) / 2.0) * 0.01;
    CHECK(std::abs(sys.A(0, 0) - want) < 1e-14);

    auto nodes = NodeSet::disc(0.6, 0.1);
    CHECK(nodes.points.size() == 113);
    auto full = assemble_fredholm(ring(12, 0.85, 0.1), ring(8, 1.3), nodes, Eigen::VectorXd::Zero(96));
    CHECK(full.A.rows() == 96);
    CHECK((full.A * Eigen::VectorXd::Zero(113)).norm() == 0.0);
    auto zero = solve_tikhonov(full, 1e-6);
    CHECK(zero.m.norm() == 0.0);
    CHECK((zero.d.array() == 1.0).all());

    // Near-coincident points use the cell integral.
    auto near = assemble_fredholm({{0.1, 0.21}}, {q}, one);
    CHECK(near.replaced == 1);
    CHECK(std::abs(near.A(0, 0) - 4.0 * cell_log_mean({0.0, 0.01}, 0.1) * std::log(std::hypot(1.4, 0.2) / 2.0) * 0.01) <
          1e-14);

    // Orthogonal rows: vanishing alpha returns the least-squares solution.
    FredholmSystem id{{}, {}, NodeSet::disc(0.25, 0.1), {}, {}, 0};
    const int n = int(id.nodes.points.size());
    id.A = Eigen::MatrixXd::Identity(n, n);
    id.rhs = Eigen::VectorXd::LinSpaced(n, -0.3, 0.4);
    CHECK((solve_tikhonov(id, 1e-12).m - id.rhs).norm() < 1e-9);

    id.rhs[3] = 1.5;
    try {
        solve_tikhonov(id, 1e-12);
        FAIL("expected nonphysical diffusion");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::numerical);
        CHECK(std::string(e.what()).find("nonphysical diffusion") != std::string::npos);
    }
    CHECK(kind_of([&] { solve_tikhonov(id, 0.0); }) == ErrorKind::config);
}

TEST_CASE("gradient operator penalizes only variation") {
    auto nodes = NodeSet::disc(0.3, 0.1);
    auto L = gradient_operator(nodes);
    // Zero extension: a constant is penalized only across the outer edge.
    Eigen::VectorXd one = Eigen::VectorXd::Ones(nodes.points.size());
    int boundary_edges = 0;
    for (std::size_t k = 0; k < nodes.points.size(); ++k)
        for (auto [a, b] : {std::pair{1, 0}, {0, 1}, {-1, 0}, {0, -1}}) {
            std::array<int, 2> nb{nodes.lattice[k][0] + a, nodes.lattice[k][1] + b};
            if (std::find(nodes.lattice.begin(), nodes.lattice.end(), nb) == nodes.lattice.end()) ++boundary_edges;
        }
    CHECK(std::abs((L * one).squaredNorm() - boundary_edges / 0.01) < 1e-9);
}

TEST_CASE("time-domain route reproduces the free-space transform") {
    const TorusGrid g = TorusGrid::square(2, 1.7);
    MeasurementSet run;
    run.mask = Mask::full(g);
    const double dt = 0.01, T = 2000.0;
    const Point origin{0.0, 0.0};
    const Point x = g.node(1);
    const double r = std::hypot(x[0], x[1]);
    for (int k = 0; k * dt <= T + 1e-9; ++k) {
        run.times.push_back(k * dt);
        Field f(g);
        for (int i = 0; i < g.size(); ++i) {
            auto y = g.node(i);
            f.values[i] = heat_kernel(std::hypot(y[0], y[1]), k * dt);
        }
        run.snapshots.push_back({f});
    }
    const std::vector<double> P{1e-3, 1e-4, 1e-5, 1e-6};
    auto data = laplace_data_from_measurements({run}, {SourceDensity::point(origin)}, {1}, origin, P);
    CHECK(data.receivers[0] == x);
    for (int k = 0; k < 4; ++k)
        CHECK(std::abs(data.u_tilde[0](0, k) * 2.0 * pi / bessel_k0(std::sqrt(P[k]) * r) - 1.0) < 1e-3);
    CHECK(data.provenance.find("species 0") != std::string::npos);
}

TEST_CASE("pipeline null test and configuration errors") {
    const auto rec = ring(12, 0.85, 0.1), src = ring(8, 1.3);
    auto data = synthesize_laplace_data([](const Point&) { return 1.0; }, 0.5, rec, src, default_p_values());
    DiffusionConfig cfg;
    auto rep = invert_diffusion(data, cfg, [](const Point&) { return 1.0; });
    CHECK(rep.H2.cwiseAbs().maxCoeff() <= 1e-3 * std::max(rep.max_h, 1e-300) + 1e-12);
    CHECK((rep.d.array() - 1.0).abs().maxCoeff() < 1e-2);

    DiffusionConfig three = cfg;
    three.ndim = 3;
    CHECK(kind_of([&] { invert_diffusion(data, three); }) == ErrorKind::config);
    DiffusionConfig wide = cfg;
    wide.recon_radius = 1.2;
    CHECK(kind_of([&] { invert_diffusion(data, wide); }) == ErrorKind::config);
    DiffusionConfig unsorted = cfg;
    std::swap(unsorted.p_values[0], unsorted.p_values[1]);
    auto swapped = data;
    swapped.p_values = unsorted.p_values;
    CHECK(kind_of([&] { invert_diffusion(swapped, unsorted); }) == ErrorKind::config);

    try {
        auto bad = data;
        for (auto& u : bad.u_tilde) u.setConstant(std::nan(""));
        DiffusionConfig fixed = cfg;
        fixed.alpha = 1e-8;
        invert_diffusion(bad, fixed);
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(e.stage().rfind("invert_diffusion/", 0) == 0);
    }
}

TEST_CASE("bump recovery, forward consistency and uniqueness witness") {
    const auto rec = ring(12, 0.85, 0.1), src = ring(8, 1.3);
    auto d1 = bump_diffusion(0.1, 0.5);
    auto data = synthesize_laplace_data(d1, 0.5, rec, src, default_p_values());
    data.species = 1;
    DiffusionConfig cfg;
    auto rep = invert_diffusion(data, cfg, d1);
    CHECK(rep.species == 1);
    CHECK(*rep.forward_consistency <= 0.05);
    CHECK(*rep.recovery_error <= 0.2);
    for (const auto& c : rep.coefficients) CHECK(c.flagged.empty());
    // The penalized seminorm is non-increasing along the sweep.
    for (std::size_t k = 1; k < rep.sweep.solutions.size(); ++k)
        CHECK(rep.sweep.solutions[k].seminorm <= rep.sweep.solutions[k - 1].seminorm * (1.0 + 1e-9));

    auto d2 = [](const Point& x) {
        return 1.0 - 0.1 * smooth_bump(std::hypot(x[0] - 0.15, x[1] + 0.1) / 0.35);
    };
    auto fine = NodeSet::disc(0.7, 0.01);
    CHECK(weighted_l2(fine, [&](const Point& x) { return d1(x) - d2(x); }) >= 0.05);
    auto other = invert_diffusion(synthesize_laplace_data(d2, 0.5, rec, src, default_p_values()), cfg, d2);
    CHECK((other.H2 - rep.H2).norm() / rep.H2.norm() >= 0.01);
}
