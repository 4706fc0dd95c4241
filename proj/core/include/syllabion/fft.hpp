#pragma once

#include <complex>
#include <span>
#include <vector>

namespace syllabion {

using Complex = std::complex<double>;

// In-place iterative radix-2 FFT. Size must be a power of two.
void fft_radix2(std::vector<Complex>& data, bool inverse = false);

// Exact N-point DFT of any length, X[k] = sum_n x[n] e^{-2 pi i k n / N}.
std::vector<Complex> dft(std::span<const Complex> x);

// Non-negative frequency half X[0..N/2] of the N-point DFT of a real frame.
std::vector<Complex> dft_real(std::span<const double> frame);

std::size_t next_pow2(std::size_t n);

}  // namespace syllabion
