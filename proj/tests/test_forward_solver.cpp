#include "doctest.h"

#include "aggrekit/errors.hpp"
#include "aggrekit/forward_solver.hpp"
#include "oracles.hpp"

#include <numbers>

using namespace aggrekit;
constexpr double pi = std::numbers::pi;

namespace {

KernelSpec radial_k(double amp = 1.0, double radius = 0.25) {
    KernelSpec k;
    k.kind = KernelKind::compact_radial_vector;
    k.role = KernelRole::vector_kernel_k;
    k.amplitude = amp;
    k.radius = radius;
    return k;
}

KernelSpec gauss_w(double amp = 1.0, double width = 0.1, double offset = 0.0) {
    KernelSpec k;
    k.kind = KernelKind::gaussian_bump;
    k.role = KernelRole::scalar_potential_w;
    k.amplitude = amp;
    k.width = width;
    k.offset = offset;
    return k;
}

ModelParams two_species(Model model, double scale) {
    ModelParams p;
    p.n_species = 2;
    p.d = {0.05, 0.08};
    Eigen::MatrixXd c(2, 2);
    c << 0.3, -0.1, 0.2, 0.4;
    (model == Model::M1 ? p.mu : p.nu) = scale * c;
    for (int i = 0; i < 2; ++i) {
        p.kernels.emplace_back();
        for (int j = 0; j < 2; ++j)
            p.kernels[i].push_back(model == Model::M1 ? radial_k(1.0 + 0.2 * i, 0.2 + 0.05 * j)
                                                      : gauss_w(1.0 + 0.1 * j, 0.08 + 0.02 * i));
    }
    return p;
}

std::vector<Field> bumps(const TorusGrid& g, double floor) {
    auto blob = [&](double cx, double cy, double s) {
        return Field::sample(g, [=](const Point& x) {
            double dx = x[0] - cx, dy = x[1] - cy;
            return floor + std::exp(-(dx * dx + dy * dy) / (2 * s * s));
        });
    };
    return {blob(0.4, 0.5, 0.12), blob(0.6, 0.45, 0.1)};
}

} // namespace

TEST_CASE("heat step is the exact spectral propagator") {
    TorusGrid g = TorusGrid::square(64);
    Field u = Field::plane_wave(g, 3, -2);
    double d = 0.07, dt = 0.013;
    Field v = step_heat(u, d, dt);
    double q = std::pow(2 * pi, 2) * (9 + 4);
    CHECK(oracle::rel_l2(v.values, std::exp(-d * q * dt) * u.values) < 1e-12);

    Field c = Field::constant(g, 2.0);
    CHECK(oracle::max_abs_diff(step_heat(c, d, dt), c) < 1e-14);

    std::mt19937_64 rng(1);
    Field r = oracle::random_field(g, rng, 0.0, 1.0);
    CHECK(std::abs(mass(step_heat(r, d, dt)) - mass(r)) < 1e-14);
    CHECK_THROWS_AS(step_heat(r, 0.0, dt), Error);
    CHECK_THROWS_AS(step_heat(r, d, -1.0), Error);
}

TEST_CASE("zero advection reduces to repeated heat steps") {
    TorusGrid g = TorusGrid::square(32);
    ModelParams p = two_species(Model::M1, 0.0);
    auto f = bumps(g, 0.1);
    Schedule s{0.05, 0.005, {}};
    Trajectory t = simulate_m1(p, f, s);
    for (int i = 0; i < 2; ++i) {
        Field h = f[i];
        for (int k = 0; k < s.steps(); ++k) h = step_heat(h, p.d[i], s.step());
        CHECK(oracle::max_abs_diff(t.back()[i], h) < 1e-12);
    }
}

TEST_CASE("zero initial data stays zero") {
    TorusGrid g = TorusGrid::square(16);
    for (Model m : {Model::M1, Model::M2}) {
        ModelParams p = two_species(m, 1.0);
        std::vector<Field> f(2, Field(g));
        Trajectory t = simulate(m, p, f, Schedule{0.1, 0.01, {}});
        for (const auto& u : t.back()) CHECK(u.max_abs() == 0.0);
    }
}

TEST_CASE("mass is conserved by both nonlinear models") {
    TorusGrid g = TorusGrid::square(32);
    for (Model m : {Model::M1, Model::M2}) {
        ModelParams p = two_species(m, 0.5);
        auto f = bumps(g, 0.05);
        Schedule s{0.2, 0.002, {}};
        Trajectory t = simulate(m, p, f, s);
        for (int i = 0; i < 2; ++i) {
            CHECK(std::abs(mass(t.back()[i]) - mass(f[i])) <= 1e-10 * mass(f[i]));
            CHECK(t.back()[i].real().minCoeff() > 0.0);
        }
        // Same conservation at half the step.
        Trajectory t2 = simulate(m, p, f, Schedule{0.2, 0.001, {}});
        for (int i = 0; i < 2; ++i) CHECK(std::abs(mass(t2.back()[i]) - mass(f[i])) <= 1e-10 * mass(f[i]));
    }
}

TEST_CASE("constant potentials give pure heat, shifted potentials give the same trajectory") {
    TorusGrid g = TorusGrid::square(32);
    auto f = bumps(g, 0.1);
    Schedule s{0.05, 0.005, {}};

    ModelParams p = two_species(Model::M2, 1.0);
    ModelParams flat = p;
    for (auto& row : flat.kernels)
        for (auto& k : row) k = gauss_w(0.0, 0.1, 0.7);
    Trajectory t = simulate_m2(flat, f, s);
    ModelParams heat = p;
    Trajectory h = simulate_heat(heat, f, s);
    for (int i = 0; i < 2; ++i) CHECK(oracle::max_abs_diff(t.back()[i], h.back()[i]) < 1e-12);

    ModelParams shifted = p;
    for (auto& row : shifted.kernels)
        for (auto& k : row) k.offset = 3.5;
    Trajectory a = simulate_m2(p, f, s), b = simulate_m2(shifted, f, s);
    for (int i = 0; i < 2; ++i) CHECK(oracle::max_abs_diff(a.back()[i], b.back()[i]) < 1e-12);
}

TEST_CASE("clamp") {
    TorusGrid g = TorusGrid::square(16);
    std::mt19937_64 rng(2);
    Field pos = oracle::random_field(g, rng, 0.0, 1.0);
    CHECK(oracle::max_abs_diff(apply_clamp(pos), pos) == 0.0);
    Field mixed = oracle::random_field(g, rng, -1.0, 1.0);
    CHECK(apply_clamp(mixed).real().minCoeff() == 0.0);

    // Entirely negative data never feeds the flux.
    ModelParams p = two_species(Model::M1, 2.0);
    std::vector<Field> f{-1.0 * pos, -1.0 * oracle::random_field(g, rng, 0.0, 1.0)};
    Schedule s{0.05, 0.005, {}};
    Trajectory t = simulate_m1(p, f, s);
    Trajectory h = simulate_heat(p, f, s);
    for (int i = 0; i < 2; ++i) CHECK(oracle::max_abs_diff(t.back()[i], h.back()[i]) < 1e-12);

    p.clamp_enabled = false;
    CHECK_THROWS_AS(simulate_m1(p, f, s), Error);
}

TEST_CASE("CFL and non-finite guards") {
    TorusGrid g = TorusGrid::square(32);
    ModelParams p = two_species(Model::M1, 500.0);
    auto f = bumps(g, 0.1);
    try {
        simulate_m1(p, f, Schedule{0.1, 0.01, {}});
        FAIL("expected CFL rejection");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::numerical);
        CHECK(std::string(e.what()).find("CFL") != std::string::npos);
    }
    ModelParams q = two_species(Model::M1, 0.1);
    f[0].values[5] = std::numeric_limits<double>::quiet_NaN();
    try {
        simulate_m1(q, f, Schedule{0.1, 0.01, {}});
        FAIL("expected NaN abort");
    } catch (const Error& e) {
        CHECK(std::string(e.what()).find("step 1") != std::string::npos);
    }
}

TEST_CASE("splitting is second order") {
    TorusGrid g = TorusGrid::square(32);
    for (Model m : {Model::M1, Model::M2}) {
        ModelParams p = two_species(m, 2.0);
        auto f = bumps(g, 0.05);
        double dt = 0.004, T = 0.16;
        auto run = [&](double h) { return simulate(m, p, f, Schedule{T, h, {}}).back(); };
        auto a = run(dt), b = run(dt / 2), c = run(dt / 4);
        double e1 = 0, e2 = 0;
        for (int i = 0; i < 2; ++i) {
            // Quarter-step reference sharpened by one Richardson step.
            Eigen::ArrayXcd ref = c[i].values + (c[i].values - b[i].values) / 3.0;
            e1 += (a[i].values - ref).abs2().sum();
            e2 += (b[i].values - ref).abs2().sum();
        }
        double ratio = std::sqrt(e1 / e2);
        CHECK(ratio >= 3.5);
        CHECK(ratio <= 4.5);
    }
}

TEST_CASE("parameter validation") {
    TorusGrid g = TorusGrid::square(16);
    ModelParams p = two_species(Model::M1, 1.0);
    CHECK_THROWS_AS(p.validate(Model::M2, g), Error);
    p.d[1] = -1.0;
    CHECK_THROWS_AS(p.validate(Model::M1, g), Error);
    KernelSpec bad = radial_k();
    bad.role = KernelRole::scalar_potential_w;
    CHECK_THROWS_AS(validate_kernel(bad, g), Error);
}

TEST_CASE("snapshots and observer") {
    TorusGrid g = TorusGrid::square(16);
    ModelParams p = two_species(Model::M2, 0.5);
    auto f = bumps(g, 0.1);
    std::vector<double> seen;
    Schedule s{0.1, 0.01, {0.0, 0.05, 0.1}};
    Trajectory t = simulate_m2(p, f, s, [&](double tt, const std::vector<Field>&) { seen.push_back(tt); });
    CHECK(seen.size() == 3);
    CHECK(t.times.size() == 3);
    CHECK(oracle::max_abs_diff(t.states[0][0], f[0]) == 0.0);
    CHECK_THROWS_AS(simulate_m2(p, f, Schedule{0.1, 0.01, {0.033}}), Error);

    MeasurementSet full = observe(t, Mask::full(g), {0.05, 0.1});
    CHECK(oracle::max_abs_diff(full.snapshots[1][1], t.back()[1]) == 0.0);
    CHECK_THROWS_AS(observe(t, Mask::none(g), {0.1}), Error);
    CHECK_THROWS_AS(observe(t, Mask::full(g), {0.07}), Error);

    Mask half = Mask::where(g, [](const Point& x) { return x[0] < 0.5; });
    MeasurementSet hs = observe(t, half, {0.1}, true);
    for (int k = 0; k < g.size(); ++k) {
        double v = hs.snapshots[0][0].values[k].real();
        CHECK(half.inside[k] == !std::isnan(v));
    }
    CHECK(hs.terminal.has_value());
}

TEST_CASE("variable diffusion heat step") {
    TorusGrid g = TorusGrid::square(32);
    std::mt19937_64 rng(4);
    Field u = bumps(g, 0.0)[0];
    Field flat = Field::constant(g, 0.06);
    CHECK(oracle::max_abs_diff(step_heat_variable(u, flat, 0.01), step_heat(u, 0.06, 0.01)) < 1e-13);

    Field d = Field::sample(g, [](const Point& x) { return 0.05 + 0.02 * std::cos(2 * pi * x[0]); });
    auto run = [&](int n) {
        Field v = u;
        for (int k = 0; k < n; ++k) v = step_heat_variable(v, d, 0.08 / n);
        return v;
    };
    Field a = run(20), b = run(40), c = run(80);
    double r = (a.values - b.values).abs().maxCoeff() / (b.values - c.values).abs().maxCoeff();
    CHECK(r > 3.5);
    CHECK(r < 4.5);
}
