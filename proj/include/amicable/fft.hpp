#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <numbers>
#include <span>
#include <vector>

#include "amicable/error.hpp"

namespace amicable {

inline bool is_power_of_two(std::size_t n) { return n > 0 && (n & (n - 1)) == 0; }

// Iterative radix-2 complex FFT. Both directions are unnormalized.
class Fft {
 public:
  explicit Fft(std::size_t n) : n_(n), bitrev_(n), twiddle_(n / 2) {
    if (!is_power_of_two(n)) throw DomainError("FFT size must be a power of two, got " + std::to_string(n));
    std::size_t bits = 0;
    while ((std::size_t{1} << bits) < n) ++bits;
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t r = 0;
      for (std::size_t b = 0; b < bits; ++b) r |= ((i >> b) & 1u) << (bits - 1 - b);
      bitrev_[i] = r;
    }
    for (std::size_t k = 0; k < n / 2; ++k) {
      const double a = -2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n);
      twiddle_[k] = {std::cos(a), std::sin(a)};
    }
  }

  std::size_t size() const { return n_; }

  // X[k] = sum_n x[n] exp(-2 pi i k n / N)
  void forward(std::span<std::complex<double>> buf) const { run(buf, false); }
  // x[n] = sum_k X[k] exp(+2 pi i k n / N)
  void inverse(std::span<std::complex<double>> buf) const { run(buf, true); }

 private:
  void run(std::span<std::complex<double>> buf, bool inverse) const {
    if (buf.size() != n_) throw ShapeError("FFT buffer size mismatch");
    for (std::size_t i = 0; i < n_; ++i) {
      if (i < bitrev_[i]) std::swap(buf[i], buf[bitrev_[i]]);
    }
    // Plain arithmetic instead of std::complex operator* avoids the slow NaN-recovery path.
    auto* d = reinterpret_cast<double*>(buf.data());
    const double sign = inverse ? -1.0 : 1.0;
    for (std::size_t len = 2; len <= n_; len <<= 1) {
      const std::size_t half = len / 2;
      const std::size_t stride = n_ / len;
      for (std::size_t start = 0; start < n_; start += len) {
        for (std::size_t j = 0; j < half; ++j) {
          const double wr = twiddle_[j * stride].real();
          const double wi = sign * twiddle_[j * stride].imag();
          double* u = d + 2 * (start + j);
          double* v = d + 2 * (start + j + half);
          const double vr = v[0] * wr - v[1] * wi;
          const double vi = v[0] * wi + v[1] * wr;
          v[0] = u[0] - vr;
          v[1] = u[1] - vi;
          u[0] += vr;
          u[1] += vi;
        }
      }
    }
  }

  std::size_t n_;
  std::vector<std::size_t> bitrev_;
  std::vector<std::complex<double>> twiddle_;
};

}  // namespace amicable
