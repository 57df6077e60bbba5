#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <vector>

#include "lgtse/common/error.hpp"

namespace lgtse {

// Iterative radix-2 FFT. Window lengths here are always powers of two
// (32 ms at 8 kHz -> 256 samples), so no general-length fallback is needed.
template <class T>
void fft_inplace(std::vector<std::complex<T>>& a, bool inverse) {
  const std::size_t n = a.size();
  if (n == 0 || (n & (n - 1)) != 0)
    throw InvalidInputError("fft: length must be a nonzero power of two");

  std::size_t j = 0;
  for (std::size_t i = 1; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }

  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = (inverse ? 2.0 : -2.0) * M_PI / static_cast<double>(len);
    const std::complex<T> wlen(static_cast<T>(std::cos(ang)), static_cast<T>(std::sin(ang)));
    for (std::size_t i = 0; i < n; i += len) {
      std::complex<T> w(T(1), T(0));
      const std::size_t half = len >> 1;
      for (std::size_t k = 0; k < half; ++k) {
        std::complex<T> u = a[i + k];
        std::complex<T> v = a[i + k + half] * w;
        a[i + k] = u + v;
        a[i + k + half] = u - v;
        w *= wlen;
      }
    }
  }
  if (inverse) {
    const T inv_n = T(1) / static_cast<T>(n);
    for (auto& z : a) z *= inv_n;
  }
}

// Periodic Hann, w[n] = 0.5 (1 - cos(2 pi n / N)). With hop N/4 the squared
// windows overlap-add to the constant 3/2, which makes iSTFT exact.
template <class T>
std::vector<T> hann_periodic(std::size_t n) {
  std::vector<T> w(n);
  for (std::size_t i = 0; i < n; ++i)
    w[i] = static_cast<T>(0.5 * (1.0 - std::cos(2.0 * M_PI * static_cast<double>(i) /
                                                static_cast<double>(n))));
  return w;
}

}  // namespace lgtse
