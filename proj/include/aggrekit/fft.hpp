#pragma once

#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

namespace aggrekit::fft {

inline bool is_pow2(int n) { return n > 0 && (n & (n - 1)) == 0; }

// Iterative radix-2 transform of one length. Unnormalized in both directions:
// forward uses e^{-i...}, inverse uses e^{+i...}.
template <typename T>
class Plan1 {
public:
    using C = std::complex<T>;

    explicit Plan1(int n = 1) : n_(n), rev_(n), tw_(n / 2 > 0 ? n / 2 : 1) {
        int bits = 0;
        while ((1 << bits) < n) ++bits;
        for (int i = 0; i < n; ++i) {
            int r = 0;
            for (int b = 0; b < bits; ++b)
                if (i & (1 << b)) r |= 1 << (bits - 1 - b);
            rev_[i] = r;
        }
        for (int k = 0; k < n / 2; ++k) {
            T a = -2 * std::numbers::pi_v<T> * T(k) / T(n);
            tw_[k] = C(std::cos(a), std::sin(a));
        }
    }

    int size() const { return n_; }

    void run(C* x, bool inverse) const {
        for (int i = 0; i < n_; ++i)
            if (i < rev_[i]) std::swap(x[i], x[rev_[i]]);
        for (int len = 2; len <= n_; len <<= 1) {
            const int half = len / 2, step = n_ / len;
            for (int s = 0; s < n_; s += len) {
                for (int k = 0; k < half; ++k) {
                    C w = tw_[k * step];
                    if (inverse) w = std::conj(w);
                    C a = x[s + k], b = w * x[s + k + half];
                    x[s + k] = a + b;
                    x[s + k + half] = a - b;
                }
            }
        }
    }

private:
    int n_;
    std::vector<int> rev_;
    std::vector<C> tw_;
};

// Row-major transform over up to two axes, axis 0 slowest.
template <typename T>
class Plan {
public:
    using C = std::complex<T>;

    Plan() = default;
    Plan(int n0, int n1) : n0_(n0), n1_(n1), p0_(n0), p1_(n1), col_(n0) {}

    void run(C* x, bool inverse) {
        if (n1_ > 1)
            for (int i = 0; i < n0_; ++i) p1_.run(x + std::size_t(i) * n1_, inverse);
        if (n0_ > 1) {
            for (int j = 0; j < n1_; ++j) {
                for (int i = 0; i < n0_; ++i) col_[i] = x[std::size_t(i) * n1_ + j];
                p0_.run(col_.data(), inverse);
                for (int i = 0; i < n0_; ++i) x[std::size_t(i) * n1_ + j] = col_[i];
            }
        }
    }

private:
    int n0_ = 1, n1_ = 1;
    Plan1<T> p0_, p1_;
    std::vector<C> col_;
};

} // namespace aggrekit::fft
