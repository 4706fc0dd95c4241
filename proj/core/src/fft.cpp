#include "syllabion/fft.hpp"

#include <cmath>
#include <numbers>

#include "syllabion/error.hpp"

namespace syllabion {

std::size_t next_pow2(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

void fft_radix2(std::vector<Complex>& a, bool inverse) {
  const std::size_t n = a.size();
  check(n != 0 && (n & (n - 1)) == 0, "radix-2 FFT size must be a power of two");
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = 2.0 * std::numbers::pi / static_cast<double>(len) * (inverse ? 1.0 : -1.0);
    for (std::size_t i = 0; i < n; i += len) {
      for (std::size_t k = 0; k < len / 2; ++k) {
        // Twiddles are evaluated directly rather than by recurrence to keep
        // the error at machine precision for long transforms.
        const Complex w(std::cos(ang * static_cast<double>(k)), std::sin(ang * static_cast<double>(k)));
        const Complex u = a[i + k];
        const Complex v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
      }
    }
  }
  if (inverse)
    for (auto& v : a) v /= static_cast<double>(n);
}

std::vector<Complex> dft(std::span<const Complex> x) {
  const std::size_t n = x.size();
  if (n == 0) return {};
  if ((n & (n - 1)) == 0) {
    std::vector<Complex> a(x.begin(), x.end());
    fft_radix2(a);
    return a;
  }
  // Bluestein: express the DFT as a convolution with a chirp and evaluate it
  // with zero-padded power-of-two transforms.
  const std::size_t m = next_pow2(2 * n - 1);
  std::vector<Complex> chirp(n);
  for (std::size_t k = 0; k < n; ++k) {
    const auto kk = static_cast<unsigned long long>(k) * k % (2 * n);
    const double ang = std::numbers::pi * static_cast<double>(kk) / static_cast<double>(n);
    chirp[k] = Complex(std::cos(ang), -std::sin(ang));
  }
  std::vector<Complex> a(m), b(m);
  for (std::size_t k = 0; k < n; ++k) a[k] = x[k] * chirp[k];
  b[0] = std::conj(chirp[0]);
  for (std::size_t k = 1; k < n; ++k) b[k] = b[m - k] = std::conj(chirp[k]);
  fft_radix2(a);
  fft_radix2(b);
  for (std::size_t i = 0; i < m; ++i) a[i] *= b[i];
  fft_radix2(a, true);
  std::vector<Complex> out(n);
  for (std::size_t k = 0; k < n; ++k) out[k] = a[k] * chirp[k];
  return out;
}

std::vector<Complex> dft_real(std::span<const double> frame) {
  std::vector<Complex> x(frame.begin(), frame.end());
  auto full = dft(x);
  full.resize(frame.size() / 2 + 1);
  return full;
}

}  // namespace syllabion
