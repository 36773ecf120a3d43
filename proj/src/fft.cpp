#include "stablekit/fft.hpp"

#include <cmath>

namespace stablekit {

bool is_power_of_two(int n) { return n > 0 && (n & (n - 1)) == 0; }

void fft_inplace(std::vector<Complex>& a, bool inverse) {
    const size_t n = a.size();
    if (!is_power_of_two(static_cast<int>(n)))
        throw Error("fft: size must be a power of two");
    // Bit reversal.
    for (size_t i = 1, j = 0; i < n; ++i) {
        size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    for (size_t len = 2; len <= n; len <<= 1) {
        const double ang = 2.0 * 3.14159265358979323846 / static_cast<double>(len) *
                           (inverse ? 1.0 : -1.0);
        const Complex wl(std::cos(ang), std::sin(ang));
        for (size_t i = 0; i < n; i += len) {
            Complex w(1.0, 0.0);
            for (size_t k = 0; k < len / 2; ++k) {
                const Complex u = a[i + k];
                const Complex v = a[i + k + len / 2] * w;
                a[i + k] = u + v;
                a[i + k + len / 2] = u - v;
                w *= wl;
            }
        }
    }
    if (inverse) {
        const double inv = 1.0 / static_cast<double>(n);
        for (auto& x : a) x *= inv;
    }
}

void fft2_inplace(std::vector<Complex>& a, int n0, int n1, bool inverse) {
    if (a.size() != static_cast<size_t>(n0) * static_cast<size_t>(n1))
        throw Error("fft2: size mismatch");
    std::vector<Complex> row(static_cast<size_t>(n1));
    for (int i = 0; i < n0; ++i) {
        for (int j = 0; j < n1; ++j) row[static_cast<size_t>(j)] = a[static_cast<size_t>(i) * n1 + j];
        fft_inplace(row, inverse);
        for (int j = 0; j < n1; ++j) a[static_cast<size_t>(i) * n1 + j] = row[static_cast<size_t>(j)];
    }
    std::vector<Complex> col(static_cast<size_t>(n0));
    for (int j = 0; j < n1; ++j) {
        for (int i = 0; i < n0; ++i) col[static_cast<size_t>(i)] = a[static_cast<size_t>(i) * n1 + j];
        fft_inplace(col, inverse);
        for (int i = 0; i < n0; ++i) a[static_cast<size_t>(i) * n1 + j] = col[static_cast<size_t>(i)];
    }
}

} // namespace stablekit
