#include "aggrekit/torus_field.hpp"

#include "aggrekit/errors.hpp"
#include "aggrekit/fft.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <numbers>

namespace aggrekit {

namespace {

constexpr double two_pi = 2.0 * std::numbers::pi;

fft::Plan<double>& plan_for(const TorusGrid& g) {
    thread_local std::map<std::pair<int, int>, fft::Plan<double>> cache;
    auto key = std::make_pair(g.points[0], g.points[1]);
    auto it = cache.find(key);
    if (it == cache.end()) it = cache.emplace(key, fft::Plan<double>(key.first, key.second)).first;
    return it->second;
}

} // namespace

TorusGrid TorusGrid::line(int n, double period) { return make(1, {n, 1}, {period, 1.0}); }

TorusGrid TorusGrid::square(int n, double period) { return make(2, {n, n}, {period, period}); }

TorusGrid TorusGrid::make(int ndim, std::array<int, 2> points, std::array<double, 2> period) {
    TorusGrid g;
    g.ndim = ndim;
    g.points = points;
    g.period = period;
    if (ndim == 1) {
        g.points[1] = 1;
        g.period[1] = 1.0;
    }
    g.validate();
    return g;
}

void TorusGrid::validate() const {
    if (ndim != 1 && ndim != 2) throw config_error("grid", "ndim must be 1 or 2");
    for (int a = 0; a < ndim; ++a) {
        if (!fft::is_pow2(points[a]))
            throw config_error("grid", "points per axis must be a power of two");
        if (!(period[a] > 0.0)) throw config_error("grid", "period must be positive");
    }
}

double TorusGrid::cell_volume() const {
    double v = 1.0;
    for (int a = 0; a < ndim; ++a) v *= spacing(a);
    return v;
}

double TorusGrid::volume() const {
    double v = 1.0;
    for (int a = 0; a < ndim; ++a) v *= period[a];
    return v;
}

Point TorusGrid::node(int idx) const {
    int i0 = idx / points[1], i1 = idx % points[1];
    return {i0 * spacing(0), ndim == 2 ? i1 * spacing(1) : 0.0};
}

Point TorusGrid::offset(int idx) const {
    int i0 = idx / points[1], i1 = idx % points[1];
    Point p{0.0, 0.0};
    p[0] = wavenumber(0, i0) * spacing(0);
    if (ndim == 2) p[1] = wavenumber(1, i1) * spacing(1);
    return p;
}

int TorusGrid::wavenumber(int axis, int i) const {
    int n = points[axis];
    return i < n / 2 ? i : i - n;
}

std::array<int, 2> TorusGrid::mode(int idx) const {
    int i0 = idx / points[1], i1 = idx % points[1];
    return {wavenumber(0, i0), ndim == 2 ? wavenumber(1, i1) : 0};
}

Point TorusGrid::frequency(int idx) const {
    auto k = mode(idx);
    return {two_pi * k[0] / period[0], ndim == 2 ? two_pi * k[1] / period[1] : 0.0};
}

double TorusGrid::frequency_sq(int idx) const {
    Point xi = frequency(idx);
    return xi[0] * xi[0] + xi[1] * xi[1];
}

int TorusGrid::mode_index(int k0, int k1) const {
    auto wrap = [](int k, int n) { return ((k % n) + n) % n; };
    return index(wrap(k0, points[0]), ndim == 2 ? wrap(k1, points[1]) : 0);
}

Field Field::constant(const TorusGrid& g, double c) {
    Field f(g, true);
    f.values.setConstant(cplx(c, 0.0));
    return f;
}

Field Field::sample(const TorusGrid& g, const std::function<double(const Point&)>& fn) {
    Field f(g, true);
    for (int i = 0; i < g.size(); ++i) f.values[i] = fn(g.node(i));
    return f;
}

Field Field::sample_complex(const TorusGrid& g, const std::function<cplx(const Point&)>& fn) {
    Field f(g, false);
    for (int i = 0; i < g.size(); ++i) f.values[i] = fn(g.node(i));
    return f;
}

Field Field::plane_wave(const TorusGrid& g, int k0, int k1) {
    const double a0 = two_pi * k0 / g.period[0], a1 = two_pi * k1 / g.period[1];
    return sample_complex(g, [&](const Point& x) { return std::polar(1.0, a0 * x[0] + a1 * x[1]); });
}

Field& Field::settle() {
    if (is_real) values = values.real().cast<cplx>();
    return *this;
}

void require_same_grid(const TorusGrid& a, const TorusGrid& b, const char* what) {
    if (!(a == b)) throw config_error("torus_field", std::string(what) + ": grid mismatch");
}

void fft_forward_inplace(const TorusGrid& g, Eigen::ArrayXcd& data) {
    plan_for(g).run(data.data(), false);
}

void fft_inverse_inplace(const TorusGrid& g, Eigen::ArrayXcd& data) {
    plan_for(g).run(data.data(), true);
}

Spectrum dft_forward(const Field& f) {
    if (f.values.size() != f.grid.size())
        throw config_error("dft_forward", "field length does not match grid");
    Spectrum s{f.grid, f.values, f.is_real};
    fft_forward_inplace(f.grid, s.coefficients);
    s.coefficients /= double(f.grid.size());
    return s;
}

Field dft_inverse(const Spectrum& s) {
    if (s.coefficients.size() != s.grid.size())
        throw config_error("dft_inverse", "spectrum length does not match grid");
    Field f(s.grid, s.from_real);
    f.values = s.coefficients;
    fft_inverse_inplace(s.grid, f.values);
    return f.settle();
}

Field convolve(const Field& kernel, const Field& u) {
    require_same_grid(kernel.grid, u.grid, "convolve");
    Spectrum a = dft_forward(kernel), b = dft_forward(u);
    a.coefficients *= b.coefficients * u.grid.volume();
    a.from_real = kernel.is_real && u.is_real;
    return dft_inverse(a);
}

std::vector<Field> gradient(const Field& u) {
    const TorusGrid& g = u.grid;
    Spectrum s = dft_forward(u);
    std::vector<Field> out;
    for (int a = 0; a < g.ndim; ++a) {
        Spectrum d = s;
        for (int i = 0; i < g.size(); ++i) {
            // The Nyquist mode has no symmetric partner; its derivative is dropped.
            int k = g.mode(i)[a];
            bool nyq = 2 * std::abs(k) == g.points[a];
            d.coefficients[i] *= nyq ? cplx(0.0) : cplx(0.0, g.frequency(i)[a]);
        }
        out.push_back(dft_inverse(d));
    }
    return out;
}

Field divergence(std::span<const Field> v) {
    if (v.empty()) throw config_error("divergence", "empty vector field");
    const TorusGrid& g = v[0].grid;
    if (int(v.size()) != g.ndim) throw config_error("divergence", "component count != ndim");
    Spectrum acc{g, Eigen::ArrayXcd::Zero(g.size()), true};
    for (int a = 0; a < g.ndim; ++a) {
        require_same_grid(g, v[a].grid, "divergence");
        Spectrum s = dft_forward(v[a]);
        acc.from_real = acc.from_real && v[a].is_real;
        for (int i = 0; i < g.size(); ++i) {
            int k = g.mode(i)[a];
            bool nyq = 2 * std::abs(k) == g.points[a];
            if (!nyq) acc.coefficients[i] += cplx(0.0, g.frequency(i)[a]) * s.coefficients[i];
        }
    }
    return dft_inverse(acc);
}

Field laplacian(const Field& u) {
    Spectrum s = dft_forward(u);
    const TorusGrid& g = u.grid;
    // Match divergence(gradient(u)): Nyquist components carry no derivative.
    for (int i = 0; i < g.size(); ++i) {
        Point xi = g.frequency(i);
        auto k = g.mode(i);
        double q = 0.0;
        for (int a = 0; a < g.ndim; ++a)
            if (2 * std::abs(k[a]) != g.points[a]) q += xi[a] * xi[a];
        s.coefficients[i] *= -q;
    }
    return dft_inverse(s);
}

cplx mass_complex(const Field& u) {
    cplx acc = 0.0;
    for (Eigen::Index i = 0; i < u.values.size(); ++i) acc += u.values[i];
    return acc * u.grid.cell_volume();
}

double mass(const Field& u) { return mass_complex(u).real(); }

cplx inner(const Field& a, const Field& b) {
    require_same_grid(a.grid, b.grid, "inner");
    cplx acc = 0.0;
    for (Eigen::Index i = 0; i < a.values.size(); ++i) acc += std::conj(a.values[i]) * b.values[i];
    return acc * a.grid.cell_volume();
}

double l2_norm(const Field& a) { return std::sqrt(std::abs(inner(a, a))); }

Field operator+(const Field& a, const Field& b) {
    require_same_grid(a.grid, b.grid, "add");
    Field f(a.grid, a.is_real && b.is_real);
    f.values = a.values + b.values;
    return f;
}

Field operator-(const Field& a, const Field& b) {
    require_same_grid(a.grid, b.grid, "subtract");
    Field f(a.grid, a.is_real && b.is_real);
    f.values = a.values - b.values;
    return f;
}

Field operator*(double s, const Field& a) {
    Field f = a;
    f.values *= s;
    return f;
}

Field operator*(cplx s, const Field& a) {
    Field f = a;
    f.values *= s;
    f.is_real = a.is_real && s.imag() == 0.0;
    return f;
}

Field hadamard(const Field& a, const Field& b) {
    require_same_grid(a.grid, b.grid, "hadamard");
    Field f(a.grid, a.is_real && b.is_real);
    f.values = a.values * b.values;
    return f;
}

Mask Mask::full(const TorusGrid& g) {
    return Mask{g, Eigen::Array<bool, Eigen::Dynamic, 1>::Constant(g.size(), true)};
}

Mask Mask::none(const TorusGrid& g) {
    return Mask{g, Eigen::Array<bool, Eigen::Dynamic, 1>::Constant(g.size(), false)};
}

Mask Mask::where(const TorusGrid& g, const std::function<bool(const Point&)>& pred) {
    Mask m = none(g);
    for (int i = 0; i < g.size(); ++i) m.inside[i] = pred(g.node(i));
    return m;
}

// GRD1 layout, all little-endian: "GRD1", u32 version, u8 ndim, u8 complex,
// u32 dims[ndim], f64 period[ndim], f64 timestamp, f64 payload.
namespace {

static_assert(std::endian::native == std::endian::little, "GRD1 writer assumes a little-endian host");

template <typename T>
void put(std::vector<std::uint8_t>& out, T v) {
    std::uint8_t buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    out.insert(out.end(), buf, buf + sizeof(T));
}

template <typename T>
T take(std::span<const std::uint8_t> in, std::size_t& pos) {
    if (pos + sizeof(T) > in.size()) throw Error(ErrorKind::io, "grd1", "truncated file");
    T v;
    std::memcpy(&v, in.data() + pos, sizeof(T));
    pos += sizeof(T);
    return v;
}

} // namespace

std::vector<std::uint8_t> encode_grd1(const Field& f, double timestamp) {
    std::vector<std::uint8_t> out{'G', 'R', 'D', '1'};
    put<std::uint32_t>(out, 1);
    put<std::uint8_t>(out, std::uint8_t(f.grid.ndim));
    put<std::uint8_t>(out, f.is_real ? 0 : 1);
    for (int a = 0; a < f.grid.ndim; ++a) put<std::uint32_t>(out, std::uint32_t(f.grid.points[a]));
    for (int a = 0; a < f.grid.ndim; ++a) put<double>(out, f.grid.period[a]);
    put<double>(out, timestamp);
    for (Eigen::Index i = 0; i < f.values.size(); ++i) {
        put<double>(out, f.values[i].real());
        if (!f.is_real) put<double>(out, f.values[i].imag());
    }
    return out;
}

Grd1 decode_grd1(std::span<const std::uint8_t> in) {
    std::size_t pos = 0;
    if (in.size() < 4 || std::memcmp(in.data(), "GRD1", 4) != 0)
        throw Error(ErrorKind::io, "grd1", "bad magic");
    pos = 4;
    if (take<std::uint32_t>(in, pos) != 1) throw Error(ErrorKind::io, "grd1", "unsupported version");
    int ndim = take<std::uint8_t>(in, pos);
    bool is_complex = take<std::uint8_t>(in, pos) != 0;
    if (ndim != 1 && ndim != 2) throw Error(ErrorKind::io, "grd1", "bad ndim");
    std::array<int, 2> pts{1, 1};
    std::array<double, 2> per{1.0, 1.0};
    for (int a = 0; a < ndim; ++a) pts[a] = int(take<std::uint32_t>(in, pos));
    for (int a = 0; a < ndim; ++a) per[a] = take<double>(in, pos);
    Grd1 r;
    r.timestamp = take<double>(in, pos);
    r.field = Field(TorusGrid::make(ndim, pts, per), !is_complex);
    for (int i = 0; i < r.field.size(); ++i) {
        double re = take<double>(in, pos);
        double im = is_complex ? take<double>(in, pos) : 0.0;
        r.field.values[i] = cplx(re, im);
    }
    if (pos != in.size()) throw Error(ErrorKind::io, "grd1", "trailing bytes");
    return r;
}

void write_grd1(const std::string& path, const Field& f, double timestamp) {
    auto bytes = encode_grd1(f, timestamp);
    std::ofstream os(path, std::ios::binary);
    if (!os) throw Error(ErrorKind::io, "grd1", "cannot open " + path);
    os.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
}

Grd1 read_grd1(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw Error(ErrorKind::io, "grd1", "cannot open " + path);
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    return decode_grd1(bytes);
}

} // namespace aggrekit
