#pragma once

#include "aggrekit/forward_solver.hpp"

#include <Eigen/Dense>

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace aggrekit {

constexpr double euler_gamma = 0.5772156649015329;

// Free-space 2-D Green's function of -Lap + p.
double green_p(double r, double p);

// Exact integral of ln sqrt(u^2 + v^2) over [u0,u1] x [v0,v1].
double rect_log_integral(double u0, double u1, double v0, double v1);
// Mean of ln(|y| / 2) over the square of side h centred at c.
double cell_log_mean(const Point& c, double h);

struct TailModel {
    bool enabled = true;
    double fit_start = 0.1; // fit c/t on [fit_start T, T]
};

// int_0^inf u e^{-pt} dt for a uniform series starting at t = 0: trapezoid on
// the data plus c E1(pT) for the fitted c/t tail.
double laplace_transform(const Eigen::Ref<const Eigen::VectorXd>& series, double dt, double p,
                         const TailModel& tail = {});

// Quadrature representation of a first-order source on the plane.
struct SourceDensity {
    Point center{0.0, 0.0};
    std::vector<Point> nodes;
    std::vector<double> weights;
    double cell = 0.0; // node spacing; 0 for point masses

    static SourceDensity point(const Point& q);
    static SourceDensity gaussian(const Point& q, double width, double h);
};

enum class G0Mode { expansion, exact };

// Source comparison term g0(x, p). `expansion` integrates the small-p K0
// bracket; `exact` uses K0 itself, which removes the source's own O(p) remainder.
double compute_g0(const SourceDensity& f1, const Point& x, double p, G0Mode mode = G0Mode::expansion);

double compute_h(double u_tilde, double g0, double p);

struct AsymptoticCoefficients {
    Eigen::VectorXd H0, H1, H2;
    Eigen::VectorXd residual; // relative fit residual per receiver
    std::vector<int> flagged;
    int remainder_columns = 0;
};

// Fits h(p) = H0 + H1 s + H2 s^2 (+ p / s^k remainder terms), s = 1 / (ln p + 2 gamma).
// Rows of h are receivers, columns follow p_values.
AsymptoticCoefficients extract_H(const std::vector<double>& p_values, const Eigen::MatrixXd& h,
                                 int remainder_columns = 3, double tolerance = 1e-2);

// Reconstruction nodes: square lattice of spacing h inside a disc.
struct NodeSet {
    std::vector<Point> points;
    std::vector<std::array<int, 2>> lattice;
    double spacing = 0.1;
    double weight() const { return spacing * spacing; }

    static NodeSet disc(double radius, double spacing);
};

struct FredholmSystem {
    std::vector<Point> receivers, sources;
    NodeSet nodes;
    Eigen::MatrixXd A;   // rows: receiver-major (receiver, source) pairs
    Eigen::VectorXd rhs; // stacked H2
    int replaced = 0;    // entries using the cell-averaged log
};

FredholmSystem assemble_fredholm(const std::vector<Point>& receivers, const std::vector<Point>& sources,
                                 const NodeSet& nodes, const Eigen::VectorXd& rhs = {});

// Discrete gradient with zero extension outside the node set.
Eigen::MatrixXd gradient_operator(const NodeSet& nodes);

struct TikhonovSolution {
    double alpha = 0.0;
    Eigen::VectorXd m, d;
    double residual = 0.0; // |A m - rhs|
    double seminorm = 0.0; // |L m|
    double norm = 0.0;     // |m|
};

TikhonovSolution solve_tikhonov(const FredholmSystem& sys, double alpha);

struct AlphaSweep {
    std::vector<TikhonovSolution> solutions;
    int corner = 0;
};

std::vector<double> default_alphas();
AlphaSweep alpha_sweep(const FredholmSystem& sys, const std::vector<double>& alphas);
// Corner of the log-log L-curve (residual, seminorm).
int lcurve_corner(const std::vector<double>& residual, const std::vector<double>& seminorm);

// Laplace-domain data at receivers for every source and p.
struct LaplaceData {
    int species = 0;
    std::string provenance;
    std::vector<double> p_values;
    std::vector<Point> receivers;
    std::vector<SourceDensity> sources;
    std::vector<Eigen::MatrixXd> u_tilde; // [source](receiver, p)
};

std::vector<double> default_p_values();

// Transform-domain data generator: solves (I - p G m) u = G f1 on a fine
// lattice over the support of m = 1 - 1/d (point sources, d = 1 outside).
LaplaceData synthesize_laplace_data(const std::function<double(const Point&)>& d, double support_radius,
                                    const std::vector<Point>& receivers, const std::vector<Point>& sources,
                                    const std::vector<double>& p_values, double fine_h = 0.025);

// Time-domain route: one measurement set per source, receivers are mask nodes.
// Coordinates are shifted so `origin` maps to the plane origin.
LaplaceData laplace_data_from_measurements(const std::vector<MeasurementSet>& runs,
                                           const std::vector<SourceDensity>& sources, const std::vector<int>& receiver_nodes,
                                           const Point& origin, const std::vector<double>& p_values,
                                           int species = 0, const TailModel& tail = {});

struct DiffusionConfig {
    int ndim = 2;
    std::vector<double> p_values = default_p_values();
    int remainder_columns = 3;
    G0Mode g0_mode = G0Mode::exact;
    double recon_radius = 0.6;
    double recon_spacing = 0.1;
    double omega_radius = 1.0;
    std::vector<double> alphas = default_alphas();
    std::optional<double> alpha; // overrides the L-curve choice
    double fit_tolerance = 1e-2;
};

struct InversionReport {
    int species = 0;
    std::string provenance;
    NodeSet nodes;
    Eigen::VectorXd m, d;
    double alpha = 0.0;
    AlphaSweep sweep;
    std::vector<AsymptoticCoefficients> coefficients; // per source
    Eigen::VectorXd H2;
    std::optional<double> forward_consistency; // |A m_true - H2| / |H2|
    std::optional<double> recovery_error;      // |m - m_true| / |m_true|
    double max_h = 0.0;
    std::vector<std::string> log;
};

InversionReport invert_diffusion(const LaplaceData& data, const DiffusionConfig& cfg,
                                 const std::function<double(const Point&)>& d_true = {});

// Geometry used by the default scenario: receivers on r = 0.85, sources on r = 1.3.
std::vector<Point> ring(int count, double radius, double phase = 0.0);

// d = 1 + amplitude * b(|x| / radius), b the smooth bump.
std::function<double(const Point&)> bump_diffusion(double amplitude, double radius);

} // namespace aggrekit
