#include "aggrekit/diffusion_inversion.hpp"

#include "aggrekit/errors.hpp"
#include "aggrekit/kernels.hpp"

#include <cmath>
#include <map>
#include <numbers>
#include <sstream>

namespace aggrekit {

namespace {

constexpr double pi = std::numbers::pi;

double dist(const Point& a, const Point& b) { return std::hypot(a[0] - b[0], a[1] - b[1]); }

// Antiderivative of ln(u^2 + v^2) in both variables.
double log_antiderivative(double u, double v) {
    double f = -3.0 * u * v;
    if (u != 0.0 || v != 0.0) f += u * v * std::log(u * u + v * v);
    if (u != 0.0) f += u * u * std::atan(v / u);
    if (v != 0.0) f += v * v * std::atan(u / v);
    return f;
}

void require_small_p(double p, const char* stage) {
    if (!(p > 0.0) || !(p < std::exp(-2.0 * euler_gamma)))
        throw config_error(stage, "p must lie in (0, exp(-2 gamma))");
}

Error tagged(const Error& e, const std::string& stage) {
    std::string what = e.what();
    if (!e.stage().empty() && what.rfind(e.stage() + ": ", 0) == 0) what = what.substr(e.stage().size() + 2);
    return Error(e.kind(), "invert_diffusion/" + stage, what);
}

} // namespace

double green_p(double r, double p) { return std::cyl_bessel_k(0.0, std::sqrt(p) * r) / (2.0 * pi); }

double rect_log_integral(double u0, double u1, double v0, double v1) {
    return 0.5 * (log_antiderivative(u1, v1) - log_antiderivative(u0, v1) - log_antiderivative(u1, v0) +
                  log_antiderivative(u0, v0));
}

double cell_log_mean(const Point& c, double h) {
    const double a = h / 2;
    return rect_log_integral(c[0] - a, c[0] + a, c[1] - a, c[1] + a) / (h * h) - std::log(2.0);
}

double laplace_transform(const Eigen::Ref<const Eigen::VectorXd>& series, double dt, double p, const TailModel& tail) {
    if (!(p > 0.0)) throw config_error("laplace_transform", "p must be positive");
    if (!(dt > 0.0)) throw config_error("laplace_transform", "dt must be positive");
    const Eigen::Index n = series.size() - 1;
    if (n < 1) throw config_error("laplace_transform", "series too short");
    double acc = 0.0;
    for (Eigen::Index k = 0; k <= n; ++k) {
        const double w = (k == 0 || k == n) ? 0.5 : 1.0;
        acc += w * series[k] * std::exp(-p * k * dt);
    }
    acc *= dt;
    if (!tail.enabled) return acc;
    const double T = n * dt;
    double num = 0.0, den = 0.0;
    int used = 0;
    for (Eigen::Index k = 1; k <= n; ++k) {
        const double t = k * dt;
        if (t < tail.fit_start * T) continue;
        num += series[k] / t;
        den += 1.0 / (t * t);
        ++used;
    }
    if (used < 3) throw config_error("laplace_transform", "series too short to fit the tail");
    const double c = num / den;
    return acc + c * -std::expint(-p * T); // E1(pT)
}

SourceDensity SourceDensity::point(const Point& q) { return {q, {q}, {1.0}, 0.0}; }

SourceDensity SourceDensity::gaussian(const Point& q, double width, double h) {
    if (!(width > 0.0) || !(h > 0.0)) throw config_error("source", "width and spacing must be positive");
    SourceDensity s{q, {}, {}, h};
    const int k = int(std::ceil(6.0 * width / h));
    double total = 0.0;
    for (int i = -k; i <= k; ++i)
        for (int j = -k; j <= k; ++j) {
            const double r2 = (i * h) * (i * h) + (j * h) * (j * h);
            if (r2 > 36.0 * width * width) continue;
            const double w = std::exp(-r2 / (2.0 * width * width));
            s.nodes.push_back({q[0] + i * h, q[1] + j * h});
            s.weights.push_back(w);
            total += w;
        }
    for (double& w : s.weights) w /= total;
    return s;
}

double compute_g0(const SourceDensity& f1, const Point& x, double p, G0Mode mode) {
    require_small_p(p, "compute_g0");
    const double lp = std::log(p);
    double acc = 0.0;
    for (std::size_t k = 0; k < f1.nodes.size(); ++k) {
        const double rho = dist(x, f1.nodes[k]);
        double L, rho2;
        if (rho < 1e-12) {
            // Receiver on a quadrature node: use the cell average of the log.
            if (f1.cell <= 0.0) throw numerical_error("compute_g0", "receiver coincides with a point source");
            L = cell_log_mean({0.0, 0.0}, f1.cell);
            rho2 = f1.cell * f1.cell / 6.0;
        } else {
            L = std::log(rho / 2.0);
            rho2 = rho * rho;
        }
        double term;
        if (mode == G0Mode::exact)
            term = rho < 1e-12 ? -(0.5 * lp + L + euler_gamma) / (2.0 * pi) : green_p(rho, p);
        else
            term = -(0.5 * lp + euler_gamma + L + rho2 * p * lp / 8.0 + rho2 / 4.0 * p * L +
                     (euler_gamma - 1.0) * rho2 / 4.0 * p) /
                   (2.0 * pi);
        acc += f1.weights[k] * term;
    }
    return acc / lp;
}

double compute_h(double u_tilde, double g0, double p) {
    require_small_p(p, "compute_h");
    const double lp = std::log(p);
    const double b = 0.5 + euler_gamma / lp;
    const double den = p * lp / (4.0 * pi * pi) * b * b;
    if (std::abs(den) < 1e-300) throw numerical_error("compute_h", "vanishing denominator");
    return (u_tilde / lp - g0) / den;
}

AsymptoticCoefficients extract_H(const std::vector<double>& p_values, const Eigen::MatrixXd& h, int remainder_columns,
                                 double tolerance) {
    const int np = int(p_values.size());
    if (np < 4) throw config_error("extract_H", "need at least 4 p values");
    if (h.cols() != np) throw config_error("extract_H", "h columns must follow p_values");
    for (double p : p_values) require_small_p(p, "extract_H");
    const int r = std::clamp((np - 3) / 2, 0, std::max(remainder_columns, 0));
    Eigen::MatrixXd V(np, 3 + r);
    for (int k = 0; k < np; ++k) {
        const double p = p_values[k];
        const double s = 1.0 / (std::log(p) + 2.0 * euler_gamma);
        V(k, 0) = 1.0;
        V(k, 1) = s;
        V(k, 2) = s * s;
        for (int c = 0; c < r; ++c) V(k, 3 + c) = p / std::pow(s, c);
    }
    Eigen::VectorXd scale = V.colwise().norm().transpose();
    Eigen::MatrixXd Vs = V * scale.cwiseInverse().asDiagonal();
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(Vs);
    const auto& sv = svd.singularValues();
    if (!(sv(sv.size() - 1) > 1e-12 * sv(0)))
        throw config_error("extract_H", "rank-deficient design: p values too clustered");
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(Vs);

    AsymptoticCoefficients out;
    out.remainder_columns = r;
    const Eigen::Index nr = h.rows();
    out.H0.resize(nr);
    out.H1.resize(nr);
    out.H2.resize(nr);
    out.residual.resize(nr);
    for (Eigen::Index i = 0; i < nr; ++i) {
        Eigen::VectorXd y = h.row(i).transpose();
        Eigen::VectorXd c = qr.solve(y).cwiseQuotient(scale);
        out.H0[i] = c[0];
        out.H1[i] = c[1];
        out.H2[i] = c[2];
        const double ny = y.norm();
        const double res = (V * c - y).norm();
        out.residual[i] = ny > 0.0 ? res / ny : res;
        if (out.residual[i] > tolerance) out.flagged.push_back(int(i));
    }
    return out;
}

NodeSet NodeSet::disc(double radius, double spacing) {
    if (!(radius > 0.0) || !(spacing > 0.0)) throw config_error("nodes", "radius and spacing must be positive");
    NodeSet s;
    s.spacing = spacing;
    const int k = int(std::floor(radius / spacing + 1e-9));
    for (int i = -k; i <= k; ++i)
        for (int j = -k; j <= k; ++j) {
            Point p{i * spacing, j * spacing};
            if (std::hypot(p[0], p[1]) <= radius + 1e-12) {
                s.points.push_back(p);
                s.lattice.push_back({i, j});
            }
        }
    return s;
}

FredholmSystem assemble_fredholm(const std::vector<Point>& receivers, const std::vector<Point>& sources,
                                 const NodeSet& nodes, const Eigen::VectorXd& rhs) {
    const int nr = int(receivers.size()), ns = int(sources.size()), nk = int(nodes.points.size());
    if (!nr || !ns || !nk) throw config_error("assemble_fredholm", "need receivers, sources and nodes");
    FredholmSystem sys{receivers, sources, nodes, Eigen::MatrixXd(nr * ns, nk), rhs, 0};
    if (rhs.size() && rhs.size() != nr * ns) throw config_error("assemble_fredholm", "rhs size must be receivers x sources");
    const double h = nodes.spacing, w = nodes.weight();
    auto log_factor = [&](const Point& a, const Point& r) {
        const double rho = dist(a, r);
        if (rho < h / 2) {
            ++sys.replaced;
            return cell_log_mean({a[0] - r[0], a[1] - r[1]}, h);
        }
        return std::log(rho / 2.0);
    };
    Eigen::MatrixXd Lx(nr, nk), Lq(ns, nk);
    for (int k = 0; k < nk; ++k) {
        for (int i = 0; i < nr; ++i) Lx(i, k) = log_factor(receivers[i], nodes.points[k]);
        for (int j = 0; j < ns; ++j) Lq(j, k) = log_factor(sources[j], nodes.points[k]);
    }
    for (int i = 0; i < nr; ++i)
        for (int j = 0; j < ns; ++j) sys.A.row(i * ns + j) = 4.0 * w * Lx.row(i).cwiseProduct(Lq.row(j));
    if (!sys.A.allFinite()) throw numerical_error("assemble_fredholm", "non-finite matrix entry");
    return sys;
}

Eigen::MatrixXd gradient_operator(const NodeSet& nodes) {
    const int n = int(nodes.points.size());
    std::map<std::array<int, 2>, int> at;
    for (int k = 0; k < n; ++k) at[nodes.lattice[k]] = k;
    std::vector<Eigen::VectorXd> rows;
    const double h = nodes.spacing;
    const std::array<int, 2> dirs[4] = {{1, 0}, {0, 1}, {-1, 0}, {0, -1}};
    for (int k = 0; k < n; ++k)
        for (int d = 0; d < 4; ++d) {
            const auto& l = nodes.lattice[k];
            auto it = at.find({l[0] + dirs[d][0], l[1] + dirs[d][1]});
            if (it != at.end() && d >= 2) continue; // interior edge already counted
            Eigen::VectorXd r = Eigen::VectorXd::Zero(n);
            r[k] = -1.0 / h;
            if (it != at.end()) r[it->second] = 1.0 / h;
            rows.push_back(r);
        }
    Eigen::MatrixXd L(rows.size(), n);
    for (std::size_t i = 0; i < rows.size(); ++i) L.row(i) = rows[i].transpose();
    return L;
}

namespace {

TikhonovSolution tikhonov_raw(const FredholmSystem& sys, const Eigen::MatrixXd& L, const Eigen::MatrixXd& AtA,
                              const Eigen::MatrixXd& LtL, const Eigen::VectorXd& Atb, double alpha) {
    TikhonovSolution s;
    s.alpha = alpha;
    s.m = (AtA + alpha * LtL).ldlt().solve(Atb);
    s.residual = (sys.A * s.m - sys.rhs).norm();
    s.seminorm = (L * s.m).norm();
    s.norm = s.m.norm();
    s.d = (1.0 - s.m.array()).inverse().matrix();
    return s;
}

void require_rhs(const FredholmSystem& sys, const char* stage) {
    if (sys.rhs.size() != sys.A.rows()) throw config_error(stage, "system has no right-hand side");
}

} // namespace

TikhonovSolution solve_tikhonov(const FredholmSystem& sys, double alpha) {
    if (!(alpha > 0.0)) throw config_error("solve_tikhonov", "alpha must be positive");
    require_rhs(sys, "solve_tikhonov");
    Eigen::MatrixXd L = gradient_operator(sys.nodes);
    TikhonovSolution s =
        tikhonov_raw(sys, L, sys.A.transpose() * sys.A, L.transpose() * L, sys.A.transpose() * sys.rhs, alpha);
    std::ostringstream bad;
    int count = 0;
    for (Eigen::Index k = 0; k < s.m.size(); ++k)
        if (!(s.m[k] < 1.0)) {
            if (count++ < 5) bad << " (" << sys.nodes.points[k][0] << "," << sys.nodes.points[k][1] << ")";
        }
    if (count)
        throw numerical_error("solve_tikhonov", "nonphysical diffusion: m >= 1 at " + std::to_string(count) +
                                                    " node(s):" + bad.str());
    return s;
}

std::vector<double> default_alphas() {
    std::vector<double> a;
    for (int k = 0; k <= 40; ++k) a.push_back(std::pow(10.0, -12.0 + 0.25 * k));
    return a;
}

int lcurve_corner(const std::vector<double>& residual, const std::vector<double>& seminorm) {
    const int n = int(residual.size());
    if (n < 5) return n / 2;
    std::vector<double> x(n), y(n);
    for (int k = 0; k < n; ++k) {
        x[k] = std::log(std::max(residual[k], 1e-300));
        y[k] = std::log(std::max(seminorm[k], 1e-300));
    }
    auto grad = [&](const std::vector<double>& f) {
        std::vector<double> g(n);
        for (int k = 0; k < n; ++k) {
            if (k == 0) g[k] = f[1] - f[0];
            else if (k == n - 1) g[k] = f[n - 1] - f[n - 2];
            else g[k] = 0.5 * (f[k + 1] - f[k - 1]);
        }
        return g;
    };
    auto dx = grad(x), dy = grad(y), ddx = grad(dx), ddy = grad(dy);
    int best = 2;
    double kbest = -1e300;
    for (int k = 2; k < n - 2; ++k) {
        const double den = std::pow(dx[k] * dx[k] + dy[k] * dy[k], 1.5);
        if (den <= 0.0) continue;
        const double kappa = (dx[k] * ddy[k] - dy[k] * ddx[k]) / den;
        if (kappa > kbest) {
            kbest = kappa;
            best = k;
        }
    }
    return best;
}

AlphaSweep alpha_sweep(const FredholmSystem& sys, const std::vector<double>& alphas) {
    require_rhs(sys, "alpha_sweep");
    if (alphas.empty()) throw config_error("alpha_sweep", "empty alpha list");
    for (std::size_t k = 0; k < alphas.size(); ++k)
        if (!(alphas[k] > 0.0) || (k && !(alphas[k] > alphas[k - 1])))
            throw config_error("alpha_sweep", "alphas must be positive and increasing");
    Eigen::MatrixXd L = gradient_operator(sys.nodes);
    const Eigen::MatrixXd AtA = sys.A.transpose() * sys.A, LtL = L.transpose() * L;
    const Eigen::VectorXd Atb = sys.A.transpose() * sys.rhs;
    AlphaSweep out;
    std::vector<double> res, semi;
    for (double a : alphas) {
        out.solutions.push_back(tikhonov_raw(sys, L, AtA, LtL, Atb, a));
        res.push_back(out.solutions.back().residual);
        semi.push_back(out.solutions.back().seminorm);
    }
    out.corner = lcurve_corner(res, semi);
    return out;
}

std::vector<double> default_p_values() {
    std::vector<double> p;
    for (int k = 0; k < 12; ++k) p.push_back(std::pow(10.0, -3.0 - 3.0 * k / 11.0));
    return p;
}

LaplaceData synthesize_laplace_data(const std::function<double(const Point&)>& d, double support_radius,
                                    const std::vector<Point>& receivers, const std::vector<Point>& sources,
                                    const std::vector<double>& p_values, double fine_h) {
    if (!(support_radius > 0.0) || !(fine_h > 0.0)) throw config_error("synthesize", "bad support or spacing");
    LaplaceData out;
    out.provenance = "transform-domain Lippmann-Schwinger solve, fine h = " + std::to_string(fine_h);
    out.p_values = p_values;
    out.receivers = receivers;
    for (const auto& q : sources) out.sources.push_back(SourceDensity::point(q));

    std::vector<Point> nodes;
    std::vector<double> m;
    const int k = int(std::ceil(support_radius / fine_h));
    for (int i = -k; i < k; ++i)
        for (int j = -k; j < k; ++j) {
            Point r{(i + 0.5) * fine_h, (j + 0.5) * fine_h};
            const double di = d(r);
            if (!(di > 0.0)) throw config_error("synthesize", "d must be positive");
            const double mi = 1.0 - 1.0 / di;
            if (mi != 0.0) {
                nodes.push_back(r);
                m.push_back(mi);
            }
        }
    const int n = int(nodes.size());
    const double w = fine_h * fine_h;
    const double self_log = rect_log_integral(-fine_h / 2, fine_h / 2, -fine_h / 2, fine_h / 2);
    const int nr = int(receivers.size()), ns = int(sources.size()), np = int(p_values.size());
    for (int j = 0; j < ns; ++j) out.u_tilde.push_back(Eigen::MatrixXd::Zero(nr, np));

    for (int ip = 0; ip < np; ++ip) {
        const double p = p_values[ip];
        require_small_p(p, "synthesize");
        for (int j = 0; j < ns; ++j)
            for (int i = 0; i < nr; ++i) out.u_tilde[j](i, ip) = green_p(dist(receivers[i], sources[j]), p);
        if (!n) continue;
        Eigen::MatrixXd A(n, n);
        const double self = -((0.5 * std::log(p) + euler_gamma - std::log(2.0)) * w + self_log) / (2.0 * pi);
        for (int a = 0; a < n; ++a)
            for (int b = 0; b < n; ++b) {
                const double K = a == b ? self : green_p(dist(nodes[a], nodes[b]), p) * w;
                A(a, b) = (a == b ? 1.0 : 0.0) - p * K * m[b];
            }
        Eigen::MatrixXd rhs(n, ns);
        for (int j = 0; j < ns; ++j)
            for (int a = 0; a < n; ++a) rhs(a, j) = green_p(dist(nodes[a], sources[j]), p);
        Eigen::MatrixXd u = A.partialPivLu().solve(rhs);
        for (int i = 0; i < nr; ++i) {
            Eigen::VectorXd gx(n);
            for (int a = 0; a < n; ++a) gx[a] = green_p(dist(receivers[i], nodes[a]), p) * m[a] * w;
            for (int j = 0; j < ns; ++j) out.u_tilde[j](i, ip) += p * gx.dot(u.col(j));
        }
    }
    return out;
}

LaplaceData laplace_data_from_measurements(const std::vector<MeasurementSet>& runs,
                                           const std::vector<SourceDensity>& sources,
                                           const std::vector<int>& receiver_nodes, const Point& origin,
                                           const std::vector<double>& p_values, int species, const TailModel& tail) {
    if (runs.size() != sources.size()) throw config_error("laplace_data", "one measurement set per source");
    if (runs.empty() || receiver_nodes.empty()) throw config_error("laplace_data", "need sources and receivers");
    LaplaceData out;
    out.species = species;
    out.provenance = "time series of species " + std::to_string(species) + " at " +
                     std::to_string(receiver_nodes.size()) + " receiver nodes";
    out.p_values = p_values;
    out.sources = sources;
    const TorusGrid& g = runs[0].mask.grid;
    for (int idx : receiver_nodes) {
        Point x = g.node(idx);
        out.receivers.push_back({x[0] - origin[0], x[1] - origin[1]});
    }
    for (const auto& run : runs) {
        const auto& t = run.times;
        if (t.size() < 2 || t[0] != 0.0) throw config_error("laplace_data", "series must start at t = 0");
        const double dt = t[1] - t[0];
        for (std::size_t k = 1; k < t.size(); ++k)
            if (std::abs(t[k] - t[k - 1] - dt) > 1e-9 * dt) throw config_error("laplace_data", "series must be uniform");
        Eigen::MatrixXd U(receiver_nodes.size(), p_values.size());
        for (std::size_t i = 0; i < receiver_nodes.size(); ++i) {
            const int idx = receiver_nodes[i];
            if (!run.mask.inside[idx]) throw config_error("laplace_data", "receiver outside the measurement region");
            Eigen::VectorXd s(t.size());
            for (std::size_t k = 0; k < t.size(); ++k) s[k] = run.snapshots[k][species].values[idx].real();
            for (std::size_t ip = 0; ip < p_values.size(); ++ip) U(i, ip) = laplace_transform(s, dt, p_values[ip], tail);
        }
        out.u_tilde.push_back(U);
    }
    return out;
}

InversionReport invert_diffusion(const LaplaceData& data, const DiffusionConfig& cfg,
                                 const std::function<double(const Point&)>& d_true) {
    if (cfg.ndim != 2) throw config_error("invert_diffusion", "diffusion recovery is implemented for n = 2 only");
    const auto& P = data.p_values;
    if (P != cfg.p_values) throw config_error("invert_diffusion", "data and config p ladders differ");
    for (std::size_t k = 1; k < P.size(); ++k)
        if (!(P[k] < P[k - 1])) throw config_error("invert_diffusion", "p values must be strictly decreasing");
    if (cfg.recon_radius > cfg.omega_radius)
        throw config_error("invert_diffusion", "reconstruction nodes must lie inside the measurement region");
    const int nr = int(data.receivers.size()), ns = int(data.sources.size()), np = int(P.size());
    if (int(data.u_tilde.size()) != ns) throw config_error("invert_diffusion", "one transform table per source");

    InversionReport rep;
    rep.species = data.species;
    rep.provenance = data.provenance;
    Eigen::VectorXd H2(nr * ns);
    for (int j = 0; j < ns; ++j) {
        Eigen::MatrixXd h(nr, np);
        try {
            for (int i = 0; i < nr; ++i)
                for (int k = 0; k < np; ++k) {
                    const double g0 = compute_g0(data.sources[j], data.receivers[i], P[k], cfg.g0_mode);
                    h(i, k) = compute_h(data.u_tilde[j](i, k), g0, P[k]);
                }
        } catch (const Error& e) {
            throw tagged(e, "compute_h");
        }
        rep.max_h = std::max(rep.max_h, h.cwiseAbs().maxCoeff());
        try {
            rep.coefficients.push_back(extract_H(P, h, cfg.remainder_columns, cfg.fit_tolerance));
        } catch (const Error& e) {
            throw tagged(e, "extract_H");
        }
        for (int i = 0; i < nr; ++i) H2[i * ns + j] = rep.coefficients.back().H2[i];
    }
    rep.H2 = H2;

    std::vector<Point> centers;
    for (const auto& s : data.sources) centers.push_back(s.center);
    rep.nodes = NodeSet::disc(cfg.recon_radius, cfg.recon_spacing);
    FredholmSystem sys;
    try {
        sys = assemble_fredholm(data.receivers, centers, rep.nodes, H2);
        rep.sweep = alpha_sweep(sys, cfg.alphas);
        rep.alpha = cfg.alpha ? *cfg.alpha : rep.sweep.solutions[rep.sweep.corner].alpha;
    } catch (const Error& e) {
        throw tagged(e, "fredholm");
    }
    rep.log.push_back("alpha " + std::to_string(rep.alpha) + (cfg.alpha ? " (configured)" : " (L-curve corner)"));

    if (d_true) {
        Eigen::VectorXd mt(rep.nodes.points.size());
        for (Eigen::Index k = 0; k < mt.size(); ++k) mt[k] = 1.0 - 1.0 / d_true(rep.nodes.points[k]);
        const double nh = H2.norm();
        const double r = (sys.A * mt - H2).norm();
        rep.forward_consistency = nh > 0.0 ? r / nh : r;
        rep.log.push_back("forward consistency " + std::to_string(*rep.forward_consistency));
        // The solve below may throw; recovery error is filled after it.
        try {
            TikhonovSolution s = solve_tikhonov(sys, rep.alpha);
            rep.m = s.m;
            rep.d = s.d;
        } catch (const Error& e) {
            throw tagged(e, "solve_tikhonov");
        }
        const double nm = mt.norm();
        rep.recovery_error = nm > 0.0 ? (rep.m - mt).norm() / nm : rep.m.norm();
        return rep;
    }
    try {
        TikhonovSolution s = solve_tikhonov(sys, rep.alpha);
        rep.m = s.m;
        rep.d = s.d;
    } catch (const Error& e) {
        throw tagged(e, "solve_tikhonov");
    }
    return rep;
}

std::vector<Point> ring(int count, double radius, double phase) {
    std::vector<Point> out;
    for (int k = 0; k < count; ++k) {
        const double a = phase + 2.0 * pi * k / count;
        out.push_back({radius * std::cos(a), radius * std::sin(a)});
    }
    return out;
}

std::function<double(const Point&)> bump_diffusion(double amplitude, double radius) {
    return [=](const Point& x) { return 1.0 + amplitude * smooth_bump(std::hypot(x[0], x[1]) / radius); };
}

} // namespace aggrekit
