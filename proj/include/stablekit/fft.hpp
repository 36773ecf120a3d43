#pragma once

#include <vector>

#include "stablekit/common.hpp"

namespace stablekit {

/// In-place radix-2 complex FFT; size must be a power of two.
/// forward: sum_j a_j e^{-2 pi i jk/N};  inverse: (1/N) sum_j a_j e^{+2 pi i jk/N}.
void fft_inplace(std::vector<Complex>& a, bool inverse);

/// 2-D transform on row-major (n0 x n1) data.
void fft2_inplace(std::vector<Complex>& a, int n0, int n1, bool inverse);

bool is_power_of_two(int n);

} // namespace stablekit
