#pragma once

#include <Eigen/Dense>

#include <array>
#include <complex>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace aggrekit {

using cplx = std::complex<double>;
using Point = std::array<double, 2>;

// Periodic box [0,L0) x [0,L1) with power-of-two node counts. 1-D grids keep
// points[1] == 1 so a single row-major layout serves both cases.
struct TorusGrid {
    int ndim = 2;
    std::array<int, 2> points{1, 1};
    std::array<double, 2> period{1.0, 1.0};

    static TorusGrid line(int n, double period = 1.0);
    static TorusGrid square(int n, double period = 1.0);
    static TorusGrid make(int ndim, std::array<int, 2> points, std::array<double, 2> period);

    void validate() const;

    int size() const { return points[0] * points[1]; }
    int index(int i0, int i1 = 0) const { return i0 * points[1] + i1; }
    double spacing(int axis) const { return period[axis] / points[axis]; }
    double cell_volume() const;
    double volume() const;

    Point node(int idx) const;
    // Minimal-image displacement of node idx from node 0.
    Point offset(int idx) const;
    // Signed lattice integer of an axis index; the Nyquist index maps to -n/2.
    int wavenumber(int axis, int i) const;
    std::array<int, 2> mode(int idx) const;
    Point frequency(int idx) const;
    double frequency_sq(int idx) const;
    // Flat index of the lattice mode (k0, k1), wrapped into the grid.
    int mode_index(int k0, int k1 = 0) const;

    bool operator==(const TorusGrid& o) const {
        return ndim == o.ndim && points == o.points && period == o.period;
    }
};

struct Field {
    TorusGrid grid;
    Eigen::ArrayXcd values;
    bool is_real = true;

    Field() = default;
    explicit Field(const TorusGrid& g, bool real = true)
        : grid(g), values(Eigen::ArrayXcd::Zero(g.size())), is_real(real) {}

    static Field constant(const TorusGrid& g, double c);
    static Field sample(const TorusGrid& g, const std::function<double(const Point&)>& f);
    static Field sample_complex(const TorusGrid& g, const std::function<cplx(const Point&)>& f);
    // e^{i xi.x} for the lattice mode (k0, k1).
    static Field plane_wave(const TorusGrid& g, int k0, int k1 = 0);

    int size() const { return int(values.size()); }
    Eigen::ArrayXd real() const { return values.real(); }
    double max_abs() const { return values.size() ? values.abs().maxCoeff() : 0.0; }
    // Drop imaginary parts when the field is flagged real.
    Field& settle();
};

// Normalized Fourier coefficients: f(x) = sum_xi c(xi) e^{i xi.x}, so c(0) is the mean.
struct Spectrum {
    TorusGrid grid;
    Eigen::ArrayXcd coefficients;
    bool from_real = true;

    cplx at(int k0, int k1 = 0) const { return coefficients[grid.mode_index(k0, k1)]; }
};

Spectrum dft_forward(const Field& f);
Field dft_inverse(const Spectrum& s);

// In-place unnormalized transforms on a raw row-major buffer; plans are cached per thread.
void fft_forward_inplace(const TorusGrid& g, Eigen::ArrayXcd& data);
void fft_inverse_inplace(const TorusGrid& g, Eigen::ArrayXcd& data);

Field convolve(const Field& kernel, const Field& u);
std::vector<Field> gradient(const Field& u);
Field divergence(std::span<const Field> v);
Field laplacian(const Field& u);

double mass(const Field& u);
cplx mass_complex(const Field& u);
// Cell-volume weighted <a, b> with a conjugated.
cplx inner(const Field& a, const Field& b);
double l2_norm(const Field& a);

Field operator+(const Field& a, const Field& b);
Field operator-(const Field& a, const Field& b);
Field operator*(double s, const Field& a);
Field operator*(cplx s, const Field& a);
Field hadamard(const Field& a, const Field& b);

void require_same_grid(const TorusGrid& a, const TorusGrid& b, const char* what);

// Boolean node mask.
struct Mask {
    TorusGrid grid;
    Eigen::Array<bool, Eigen::Dynamic, 1> inside;

    static Mask full(const TorusGrid& g);
    static Mask none(const TorusGrid& g);
    static Mask where(const TorusGrid& g, const std::function<bool(const Point&)>& pred);
    int count() const { return int(inside.count()); }
};

// GRD1 binary container.
struct Grd1 {
    Field field;
    double timestamp = 0.0;
};

std::vector<std::uint8_t> encode_grd1(const Field& f, double timestamp);
Grd1 decode_grd1(std::span<const std::uint8_t> bytes);
void write_grd1(const std::string& path, const Field& f, double timestamp);
Grd1 read_grd1(const std::string& path);

} // namespace aggrekit
