#pragma once

#include "aggrekit/forward_solver.hpp"

#include <Eigen/Dense>

#include <array>
#include <string>
#include <vector>

namespace aggrekit {

// Initial pattern of one active species: the constant 1 or the lattice wave xi.
struct ProbePattern {
    bool constant_one = false;
    std::array<int, 2> mode{0, 0};

    static ProbePattern constant() { return {true, {0, 0}}; }
    static ProbePattern wave(int k0, int k1 = 0) { return {false, {k0, k1}}; }
};

struct ProbeSpec {
    std::vector<int> species;            // one or two active species
    std::vector<ProbePattern> patterns;  // aligned with species

    std::string label() const;
};

// complex_wave: f1 = e^{i xi.x}, usable with direct data only.
// cosine: f1 = background + cos(xi.x), real and non-negative, usable with eps extraction.
enum class Realization { complex_wave, cosine };

struct ProbeRun {
    Realization realization = Realization::complex_wave;
    bool extracted = false;
    double T = 0.05;
    double dt = 1e-3;
    std::vector<double> epsilons{1e-2, 5e-3, 2.5e-3};
    double background = 1.0;
};

// Terminal second-order response of one probe experiment.
struct ProbeMeasurement {
    ProbeSpec probe;
    Realization realization = Realization::complex_wave;
    double background = 1.0;
    double T = 0.0;
    double dt = 0.0;
    std::vector<double> d;
    std::vector<Field> uII; // every species at t = T
};

// Initial first-order data of a probe for every species (zeros for inactive ones).
std::vector<Field> probe_initial(const ProbeSpec& probe, int n_species, const TorusGrid& g, Realization r,
                                 double background);

// Throws a config error when another bilinear term of the probe lands on a target mode.
void check_probe(const ProbeSpec& probe, const TorusGrid& g, Realization r);

ProbeMeasurement measure_probe(Model model, const ModelParams& truth, const ProbeSpec& probe, const ProbeRun& run,
                               const TorusGrid& g);
std::vector<ProbeMeasurement> measure_probes(Model model, const ModelParams& truth,
                                             const std::vector<ProbeSpec>& probes, const ProbeRun& run,
                                             const TorusGrid& g, int threads);

// Source recovered from a terminal response under the profile S(t) = S e^{rate t}.
// Each mode is divided by int_0^T e^{-d|xi|^2 (T-t)} e^{rate t} dt; with dt > 0
// the integral is replaced by the midpoint sum the direct solver actually applies.
struct SourceField {
    Spectrum S;
    double rate = 0.0;        // 0 is the constant profile
    std::vector<int> flagged; // modes whose response factor vanished
};

SourceField deconvolve_source(const Field& uII_T, double d, double T, double rate, double dt = 0.0,
                              bool check_mean = true);

// Probe schedule: one single-species probe per diagonal entry, then one pair
// probe per unordered species pair. Modes are collinear so the pair target is
// xi_i + xi_j. Each entry of `modes` gives one alternate probe set.
std::vector<ProbeSpec> advection_schedule(int n_species, const std::vector<std::array<int, 2>>& modes,
                                          bool constant_probes = false);

struct EntryEstimate {
    int i = 0, j = 0;
    cplx value{};
    double residual = 0.0;
    std::string probe;
};

struct WCoefficient {
    int i = 0, j = 0;
    std::array<int, 2> mode{0, 0};
    cplx value{};
};

struct RecoveryReport {
    std::string kind;
    Eigen::MatrixXd matrix;          // mu or nu
    Eigen::MatrixXcd normalization;  // N_ij at the probe frequency of species j
    std::vector<EntryEstimate> entries;
    std::vector<WCoefficient> w_table;
    std::vector<std::vector<Field>> w;  // reconstructed zero-mean potentials
    std::vector<std::string> gaps;
    std::vector<std::string> flags;
};

// Target mode of entry (i, j) in a probe, and the decay rate of its source.
struct Target {
    int row = 0;      // responding species
    int col = 0;      // driving species
    int index = 0;    // flat mode index on the grid
    double rate = 0.0;
    cplx amplitude{}; // product of the two pattern amplitudes
};

std::vector<Target> probe_targets(const ProbeSpec& probe, const std::vector<double>& d, const TorusGrid& g,
                                  Realization r, double background);

// Measured and reference source coefficients of entry (i, j) at its target.
cplx measured_target(const ProbeMeasurement& m, const Target& t);
cplx reference_target(const DriftOperator& unit, const ProbeMeasurement& m, const Target& t, int n_species);

// M1 interaction strengths by projection on the reference pattern, kernels known.
RecoveryReport recover_mu(const ModelParams& known, const std::vector<ProbeMeasurement>& data);

// M1 kernel constants N_ij(xi) = int div k_ij(y) e^{-i xi.y} dy, mu known.
// Constant probes read the zero mode and give N_ij(0).
RecoveryReport recover_normalization(const ModelParams& known, const std::vector<ProbeMeasurement>& data);

// M2 strengths, potentials known. Entries with a vanishing factor fall through
// to later probes; none left is a non-identifiability error.
RecoveryReport recover_nu(const ModelParams& known, const std::vector<ProbeMeasurement>& data);

// Probe set covering every half-lattice mode inside the cutoff for each entry.
std::vector<ProbeSpec> w_schedule(int n_species, const TorusGrid& g, int cutoff);
int default_w_cutoff(const TorusGrid& g);

// M2 potentials, nu known. Returns mean-free reconstructions.
RecoveryReport recover_w(const ModelParams& known, const std::vector<ProbeMeasurement>& data, int cutoff);

} // namespace aggrekit
