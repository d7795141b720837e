#pragma once

// Short-time Fourier analysis/synthesis.
//
// Framing: the signal is zero-padded with (window - hop) samples at the front
// and at the tail up to a whole number of frames, so every real sample is
// covered by the same number of frames. Synthesis is weighted overlap-add
// normalized by the per-sample sum of squared windows.

#include <algorithm>
#include <complex>
#include <cstddef>
#include <memory>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "amicable/error.hpp"
#include "amicable/fft.hpp"
#include "amicable/tensor.hpp"
#include "amicable/wave.hpp"

namespace amicable {

enum class WindowKind { hann, rectangular };

inline std::string to_string(WindowKind w) { return w == WindowKind::hann ? "hann" : "rectangular"; }

inline WindowKind window_from_string(const std::string& s) {
  if (s == "hann") return WindowKind::hann;
  if (s == "rectangular") return WindowKind::rectangular;
  throw ConfigError("unknown window kind '" + s + "'");
}

struct StftGeometry {
  std::size_t window_size = 512;
  std::size_t hop = 256;
  WindowKind window = WindowKind::hann;

  std::size_t bins() const { return window_size / 2 + 1; }

  void validate() const {
    if (!is_power_of_two(window_size) || window_size < 2) {
      throw DomainError("window size must be a power of two >= 2, got " + std::to_string(window_size));
    }
    if (hop == 0 || window_size % hop != 0) {
      throw DomainError("hop " + std::to_string(hop) + " must divide window size " +
                        std::to_string(window_size));
    }
  }

  friend bool operator==(const StftGeometry&, const StftGeometry&) = default;
};

struct FrameLayout {
  std::size_t length = 0;     // real samples
  std::size_t front_pad = 0;  // zeros before sample 0
  std::size_t frames = 0;
  std::size_t padded_length() const { return front_pad + length; }
};

struct ComplexSpectrogram {
  std::size_t frames = 0;
  StftGeometry geometry;
  std::vector<std::complex<double>> values;  // frame-major, frames x bins

  std::size_t bins() const { return geometry.bins(); }
  std::complex<double>& at(std::size_t f, std::size_t k) { return values[f * bins() + k]; }
  const std::complex<double>& at(std::size_t f, std::size_t k) const { return values[f * bins() + k]; }
};

class StftEngine {
 public:
  explicit StftEngine(StftGeometry geometry)
      : geometry_(geometry), fft_((geometry.validate(), geometry.window_size)),
        window_(geometry.window_size, 1.0) {
    const std::size_t n = geometry_.window_size;
    if (geometry_.window == WindowKind::hann) {
      for (std::size_t i = 0; i < n; ++i) {
        window_[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) /
                                          static_cast<double>(n));
      }
    }
  }

  const StftGeometry& geometry() const { return geometry_; }
  std::span<const double> window() const { return window_; }
  std::size_t bins() const { return geometry_.bins(); }

  FrameLayout layout(std::size_t length) const {
    const std::size_t n = geometry_.window_size, hop = geometry_.hop;
    if (length < n) {
      throw DomainError("signal length " + std::to_string(length) + " is shorter than window " +
                        std::to_string(n));
    }
    FrameLayout l;
    l.length = length;
    l.front_pad = n - hop;
    const std::size_t span = length + n - 2 * hop;  // >= 0 because length >= n >= hop
    l.frames = (span + hop - 1) / hop + 1;
    return l;
  }

  // signal[length] -> out[frames * bins]
  void analyze(std::span<const double> signal, std::span<std::complex<double>> out) const {
    const FrameLayout l = layout(signal.size());
    const std::size_t n = geometry_.window_size, b = bins();
    if (out.size() != l.frames * b) throw ShapeError("stft output size mismatch");
    Scratch w(n);
    auto load = [&](std::size_t f, std::vector<double>& dst) {
      for (std::size_t i = 0; i < n; ++i) {
        const std::ptrdiff_t t = sample_index(l, f, i);
        dst[i] = (t >= 0 && static_cast<std::size_t>(t) < l.length) ? signal[static_cast<std::size_t>(t)] * window_[i] : 0.0;
      }
    };
    for (std::size_t f = 0; f < l.frames; f += 2) {
      const bool pair = f + 1 < l.frames;
      load(f, w.a);
      if (pair) load(f + 1, w.b); else std::fill(w.b.begin(), w.b.end(), 0.0);
      real_fft_pair(w, out.data() + f * b, pair ? out.data() + (f + 1) * b : w.spare.data());
    }
  }

  // Accumulates d(loss)/d(signal) given d(loss)/d(Re X) + i d(loss)/d(Im X).
  void analyze_adjoint(std::span<const std::complex<double>> grad_spec,
                       std::span<double> grad_signal) const {
    const FrameLayout l = layout(grad_signal.size());
    const std::size_t n = geometry_.window_size, b = bins();
    if (grad_spec.size() != l.frames * b) throw ShapeError("stft adjoint size mismatch");
    Scratch w(n);
    // Re(ifft(G)) for G supported on bins 0..n/2 equals the inverse of the
    // Hermitian spectrum with halved interior bins.
    auto herm = [&](std::size_t f, std::vector<std::complex<double>>& dst) {
      const std::complex<double>* g = grad_spec.data() + f * b;
      dst[0] = {g[0].real(), 0.0};
      dst[n / 2] = {g[n / 2].real(), 0.0};
      for (std::size_t k = 1; k < n / 2; ++k) dst[k] = 0.5 * g[k];
    };
    auto store = [&](std::size_t f, const std::vector<double>& src) {
      for (std::size_t i = 0; i < n; ++i) {
        const std::ptrdiff_t t = sample_index(l, f, i);
        if (t >= 0 && static_cast<std::size_t>(t) < l.length) grad_signal[static_cast<std::size_t>(t)] += window_[i] * src[i];
      }
    };
    for (std::size_t f = 0; f < l.frames; f += 2) {
      const bool pair = f + 1 < l.frames;
      herm(f, w.ha);
      if (pair) herm(f + 1, w.hb); else std::fill(w.hb.begin(), w.hb.end(), std::complex<double>{});
      hermitian_ifft_pair(w);
      store(f, w.a);
      if (pair) store(f + 1, w.b);
    }
  }

  // spec[frames * bins] -> out[out_len]. Extra trailing frames are ignored.
  void synthesize(std::span<const std::complex<double>> spec, std::size_t frames,
                  std::span<double> out) const {
    const FrameLayout l = checked_layout(frames, out.size(), spec.size());
    const std::size_t n = geometry_.window_size, b = bins(), hop = geometry_.hop;
    std::vector<double> acc(l.padded_length(), 0.0);
    Scratch w(n);
    const double inv_n = 1.0 / static_cast<double>(n);
    auto add = [&](std::size_t f, const std::vector<double>& src) {
      for (std::size_t i = 0; i < n; ++i) {
        const std::size_t t = f * hop + i;
        if (t < acc.size()) acc[t] += window_[i] * src[i] * inv_n;
      }
    };
    for (std::size_t f = 0; f < l.frames; f += 2) {
      const bool pair = f + 1 < l.frames;
      std::copy_n(spec.begin() + static_cast<std::ptrdiff_t>(f * b), b, w.ha.begin());
      if (pair) {
        std::copy_n(spec.begin() + static_cast<std::ptrdiff_t>((f + 1) * b), b, w.hb.begin());
      } else {
        std::fill(w.hb.begin(), w.hb.end(), std::complex<double>{});
      }
      hermitian_ifft_pair(w);
      add(f, w.a);
      if (pair) add(f + 1, w.b);
    }
    const std::vector<double> norm = overlap_norm(l);
    for (std::size_t i = 0; i < l.length; ++i) out[i] = acc[i + l.front_pad] / norm[i];
  }

  // Accumulates d(loss)/d(spec) (as Re + i Im) given d(loss)/d(out).
  void synthesize_adjoint(std::span<const double> grad_out, std::size_t frames,
                          std::span<std::complex<double>> grad_spec) const {
    const FrameLayout l = checked_layout(frames, grad_out.size(), grad_spec.size());
    const std::size_t n = geometry_.window_size, b = bins();
    const std::vector<double> norm = overlap_norm(l);
    Scratch w(n);
    std::vector<std::complex<double>> fa(b), fb(b);
    auto load = [&](std::size_t f, std::vector<double>& dst) {
      for (std::size_t i = 0; i < n; ++i) {
        const std::ptrdiff_t t = sample_index(l, f, i);
        double g = 0.0;
        if (t >= 0 && static_cast<std::size_t>(t) < l.length) {
          g = grad_out[static_cast<std::size_t>(t)] / norm[static_cast<std::size_t>(t)];
        }
        dst[i] = window_[i] * g;
      }
    };
    const double inv_n = 1.0 / static_cast<double>(n);
    auto store = [&](std::size_t f, const std::vector<std::complex<double>>& src) {
      for (std::size_t k = 0; k < b; ++k) {
        const bool edge = k == 0 || k == n / 2;
        const double c = (edge ? 1.0 : 2.0) * inv_n;
        grad_spec[f * b + k] += std::complex<double>(c * src[k].real(), edge ? 0.0 : c * src[k].imag());
      }
    };
    for (std::size_t f = 0; f < l.frames; f += 2) {
      const bool pair = f + 1 < l.frames;
      load(f, w.a);
      if (pair) load(f + 1, w.b); else std::fill(w.b.begin(), w.b.end(), 0.0);
      real_fft_pair(w, fa.data(), fb.data());
      store(f, fa);
      if (pair) store(f + 1, fb);
    }
  }

 private:
  FrameLayout checked_layout(std::size_t frames, std::size_t out_len, std::size_t spec_size) const {
    if (spec_size != frames * bins()) throw ShapeError("spectrogram size does not match frame count");
    FrameLayout l = layout(out_len);
    if (frames < l.frames) {
      throw ShapeError("spectrogram has " + std::to_string(frames) + " frames, output length " +
                       std::to_string(out_len) + " needs " + std::to_string(l.frames));
    }
    return l;
  }

  // Sum of squared windows at each real sample.
  std::vector<double> overlap_norm(const FrameLayout& l) const {
    const std::size_t n = geometry_.window_size, hop = geometry_.hop;
    std::vector<double> norm(l.length, 0.0);
    for (std::size_t f = 0; f < l.frames; ++f) {
      for (std::size_t i = 0; i < n; ++i) {
        const std::ptrdiff_t t = sample_index(l, f, i);
        if (t >= 0 && static_cast<std::size_t>(t) < l.length) norm[static_cast<std::size_t>(t)] += window_[i] * window_[i];
      }
    }
    return norm;
  }

  // Per-call buffers for the two-frames-per-FFT packing.
  struct Scratch {
    explicit Scratch(std::size_t n) : a(n), b(n), ha(n / 2 + 1), hb(n / 2 + 1), spare(n / 2 + 1), buf(n) {}
    std::vector<double> a, b;                     // real frames
    std::vector<std::complex<double>> ha, hb;     // half spectra
    std::vector<std::complex<double>> spare;      // sink for a missing second frame
    std::vector<std::complex<double>> buf;        // full-length FFT buffer
  };

  std::ptrdiff_t sample_index(const FrameLayout& l, std::size_t f, std::size_t i) const {
    return static_cast<std::ptrdiff_t>(f * geometry_.hop + i) - static_cast<std::ptrdiff_t>(l.front_pad);
  }

  // Spectra (bins 0..n/2) of the real frames w.a and w.b from one complex FFT.
  void real_fft_pair(Scratch& w, std::complex<double>* out_a, std::complex<double>* out_b) const {
    const std::size_t n = geometry_.window_size;
    for (std::size_t i = 0; i < n; ++i) w.buf[i] = {w.a[i], w.b[i]};
    fft_.forward(w.buf);
    for (std::size_t k = 0; k <= n / 2; ++k) {
      const std::complex<double> z = w.buf[k];
      const std::complex<double> zc = std::conj(w.buf[(n - k) % n]);
      out_a[k] = {0.5 * (z.real() + zc.real()), 0.5 * (z.imag() + zc.imag())};
      // (z - zc) / 2i
      out_b[k] = {0.5 * (z.imag() - zc.imag()), -0.5 * (z.real() - zc.real())};
    }
  }

  // Unnormalized inverse FFTs of the Hermitian spectra given by halves w.ha
  // and w.hb (imaginary parts at DC and Nyquist ignored) into w.a and w.b.
  void hermitian_ifft_pair(Scratch& w) const {
    const std::size_t n = geometry_.window_size;
    auto z = [](std::complex<double> a, std::complex<double> b) {  // a + i b
      return std::complex<double>(a.real() - b.imag(), a.imag() + b.real());
    };
    w.buf[0] = {w.ha[0].real(), w.hb[0].real()};
    w.buf[n / 2] = {w.ha[n / 2].real(), w.hb[n / 2].real()};
    for (std::size_t k = 1; k < n / 2; ++k) {
      w.buf[k] = z(w.ha[k], w.hb[k]);
      w.buf[n - k] = z(std::conj(w.ha[k]), std::conj(w.hb[k]));
    }
    fft_.inverse(w.buf);
    for (std::size_t i = 0; i < n; ++i) {
      w.a[i] = w.buf[i].real();
      w.b[i] = w.buf[i].imag();
    }
  }

  StftGeometry geometry_;
  Fft fft_;
  std::vector<double> window_;
};

inline std::shared_ptr<const StftEngine> make_stft_engine(const StftGeometry& g) {
  return std::make_shared<const StftEngine>(g);
}

// ---------------------------------------------------------------------------
// Plain (untracked) transforms

inline ComplexSpectrogram stft(const WaveBuffer& w, const StftGeometry& g) {
  const StftEngine eng(g);
  ComplexSpectrogram s;
  s.geometry = g;
  s.frames = eng.layout(w.size()).frames;
  s.values.resize(s.frames * g.bins());
  eng.analyze(w.samples(), s.values);
  return s;
}

inline ComplexSpectrogram stft(const WaveBuffer& w, std::size_t window_size, std::size_t hop,
                               WindowKind window = WindowKind::hann) {
  return stft(w, StftGeometry{window_size, hop, window});
}

inline WaveBuffer istft(const ComplexSpectrogram& s, std::size_t out_len, int sample_rate) {
  const StftEngine eng(s.geometry);
  std::vector<double> out(out_len);
  eng.synthesize(s.values, s.frames, out);
  return WaveBuffer(std::move(out), sample_rate);
}

// ---------------------------------------------------------------------------
// Tape ops. Spectrogram tensors have shape [frames, bins, 2] (re, im).

namespace detail {

inline std::span<const std::complex<double>> as_complex(std::span<const double> v) {
  return {reinterpret_cast<const std::complex<double>*>(v.data()), v.size() / 2};
}
inline std::span<std::complex<double>> as_complex(std::span<double> v) {
  return {reinterpret_cast<std::complex<double>*>(v.data()), v.size() / 2};
}

}  // namespace detail

inline Tensor stft(const Tensor& signal, std::shared_ptr<const StftEngine> eng) {
  if (signal.rank() != 1) throw ShapeError("stft expects a 1-D signal, got " + shape_str(signal.shape()));
  const std::size_t frames = eng->layout(signal.size()).frames;
  const std::size_t b = eng->bins();
  std::vector<double> out(frames * b * 2);
  eng->analyze(signal.values(), detail::as_complex(std::span<double>(out)));
  return record("stft", Shape{frames, b, 2}, std::move(out), {&signal},
                [eng](std::span<const double> g, std::span<std::vector<double>* const> pg) {
                  eng->analyze_adjoint(detail::as_complex(g), *pg[0]);
                });
}

inline Tensor istft(const Tensor& spec, std::shared_ptr<const StftEngine> eng, std::size_t out_len) {
  if (spec.rank() != 3 || spec.shape()[1] != eng->bins() || spec.shape()[2] != 2) {
    throw ShapeError("istft expects [frames, " + std::to_string(eng->bins()) + ", 2], got " +
                     shape_str(spec.shape()));
  }
  const std::size_t frames = spec.shape()[0];
  std::vector<double> out(out_len);
  eng->synthesize(detail::as_complex(spec.values()), frames, out);
  return record("istft", Shape{out_len}, std::move(out), {&spec},
                [eng, frames](std::span<const double> g, std::span<std::vector<double>* const> pg) {
                  eng->synthesize_adjoint(g, frames, detail::as_complex(std::span<double>(*pg[0])));
                });
}

// |X| per bin: [frames, bins, 2] -> [frames, bins]. Gradient at |X| = 0 is taken as 0.
inline Tensor magnitude(const Tensor& spec) {
  if (spec.rank() != 3 || spec.shape()[2] != 2) {
    throw ShapeError("magnitude expects [frames, bins, 2], got " + shape_str(spec.shape()));
  }
  auto sd = spec.storage();
  const std::size_t n = spec.size() / 2;
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = std::sqrt((*sd)[2 * i] * (*sd)[2 * i] + (*sd)[2 * i + 1] * (*sd)[2 * i + 1]);
  auto od = std::make_shared<const std::vector<double>>(out);
  return record("magnitude", Shape{spec.shape()[0], spec.shape()[1]}, std::move(out), {&spec},
                [sd, od](std::span<const double> g, std::span<std::vector<double>* const> pg) {
                  auto& gs = *pg[0];
                  for (std::size_t i = 0; i < g.size(); ++i) {
                    const double m = (*od)[i];
                    if (m == 0.0) continue;
                    gs[2 * i] += g[i] * (*sd)[2 * i] / m;
                    gs[2 * i + 1] += g[i] * (*sd)[2 * i + 1] / m;
                  }
                });
}

// Real mask times complex spectrogram: [frames, bins, 2] x [frames, bins].
inline Tensor apply_mask(const Tensor& spec, const Tensor& mask) {
  if (spec.rank() != 3 || spec.shape()[2] != 2 || mask.rank() != 2 ||
      mask.shape()[0] != spec.shape()[0] || mask.shape()[1] != spec.shape()[1]) {
    throw ShapeError("apply_mask: shape mismatch " + shape_str(spec.shape()) + " vs " +
                     shape_str(mask.shape()));
  }
  auto sd = spec.storage();
  auto md = mask.storage();
  std::vector<double> out(spec.size());
  for (std::size_t i = 0; i < mask.size(); ++i) {
    out[2 * i] = (*md)[i] * (*sd)[2 * i];
    out[2 * i + 1] = (*md)[i] * (*sd)[2 * i + 1];
  }
  return record("apply_mask", spec.shape(), std::move(out), {&spec, &mask},
                [sd, md](std::span<const double> g, std::span<std::vector<double>* const> pg) {
                  const std::size_t n = md->size();
                  if (auto* gs = pg[0]) {
                    for (std::size_t i = 0; i < n; ++i) {
                      (*gs)[2 * i] += g[2 * i] * (*md)[i];
                      (*gs)[2 * i + 1] += g[2 * i + 1] * (*md)[i];
                    }
                  }
                  if (auto* gm = pg[1]) {
                    for (std::size_t i = 0; i < n; ++i) {
                      (*gm)[i] += g[2 * i] * (*sd)[2 * i] + g[2 * i + 1] * (*sd)[2 * i + 1];
                    }
                  }
                });
}

}  // namespace amicable
