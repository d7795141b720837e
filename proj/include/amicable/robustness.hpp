#pragma once

// Lossy compression proxies and the sweep that measures how much of a
// perturbation's effect survives them.
//
// quantize-bits: uniform mid-tread quantizer on [-1, 1) with step 2^(1 - bits).
// mdct-topk: MDCT with frame 256 (hop 128), sine window; per frame the given
// fraction of largest-magnitude coefficients is kept and the rest zeroed.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <numeric>
#include <string>
#include <vector>

#include "amicable/error.hpp"
#include "amicable/metrics.hpp"
#include "amicable/separator.hpp"
#include "amicable/wave.hpp"

namespace amicable {

struct CompressionProxy {
  enum class Kind { quantize_bits, mdct_topk };
  Kind kind = Kind::quantize_bits;
  double strength = 16.0;  // bits, or kept fraction in (0, 1]

  static CompressionProxy quantize(int bits) { return {Kind::quantize_bits, static_cast<double>(bits)}; }
  static CompressionProxy mdct_topk(double fraction) { return {Kind::mdct_topk, fraction}; }

  void validate() const {
    if (kind == Kind::quantize_bits) {
      if (strength < 4.0 || strength > 16.0 || strength != std::floor(strength)) {
        throw DomainError("quantize-bits needs an integer bit depth in [4, 16], got " + std::to_string(strength));
      }
    } else if (!(strength > 0.0 && strength <= 1.0)) {
      throw DomainError("mdct-topk needs a kept fraction in (0, 1], got " + std::to_string(strength));
    }
  }

  friend bool operator==(const CompressionProxy&, const CompressionProxy&) = default;
};

inline std::string kind_name(CompressionProxy::Kind k) {
  return k == CompressionProxy::Kind::quantize_bits ? "quantize-bits" : "mdct-topk";
}

// "quantize-bits:12", "mdct-topk:0.25"
inline std::string to_string(const CompressionProxy& p) {
  if (p.kind == CompressionProxy::Kind::quantize_bits) {
    return kind_name(p.kind) + ":" + std::to_string(static_cast<int>(p.strength));
  }
  std::string s = std::to_string(p.strength);
  while (s.size() > 1 && s.back() == '0') s.pop_back();
  if (s.back() == '.') s.pop_back();
  return kind_name(p.kind) + ":" + s;
}

inline CompressionProxy proxy_from_string(const std::string& s) {
  const auto colon = s.find(':');
  if (colon == std::string::npos) throw ConfigError("proxy '" + s + "' must look like kind:strength");
  const std::string kind = s.substr(0, colon);
  CompressionProxy p;
  if (kind == "quantize-bits") {
    p.kind = CompressionProxy::Kind::quantize_bits;
  } else if (kind == "mdct-topk") {
    p.kind = CompressionProxy::Kind::mdct_topk;
  } else {
    throw ConfigError("unknown proxy kind '" + kind + "'");
  }
  std::size_t used = 0;
  try {
    p.strength = std::stod(s.substr(colon + 1), &used);
  } catch (const std::exception&) {
    throw ConfigError("proxy '" + s + "' has no numeric strength");
  }
  if (used != s.size() - colon - 1) throw ConfigError("proxy '" + s + "' has trailing characters");
  try {
    p.validate();
  } catch (const DomainError& e) {
    throw ConfigError(e.what());
  }
  return p;
}

namespace detail {

inline std::vector<double> quantize(std::span<const double> x, int bits) {
  const double step = std::ldexp(1.0, 1 - bits);
  const double top = 1.0 - step;
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    out[i] = std::clamp(step * std::round(x[i] / step), -1.0, top);
  }
  return out;
}

class Mdct {
 public:
  static constexpr std::size_t kFrame = 256;
  static constexpr std::size_t kHop = kFrame / 2;

  Mdct() : window_(kFrame), basis_(kHop * kFrame) {
    const double m = static_cast<double>(kHop);
    for (std::size_t n = 0; n < kFrame; ++n) {
      window_[n] = std::sin(std::numbers::pi * (static_cast<double>(n) + 0.5) / static_cast<double>(kFrame));
    }
    for (std::size_t k = 0; k < kHop; ++k) {
      for (std::size_t n = 0; n < kFrame; ++n) {
        basis_[k * kFrame + n] = std::cos(std::numbers::pi / m * (static_cast<double>(n) + 0.5 + m / 2.0) *
                                          (static_cast<double>(k) + 0.5));
      }
    }
  }

  // Keeps `keep` coefficients per frame; keep == kHop reconstructs x.
  std::vector<double> roundtrip_topk(std::span<const double> x, std::size_t keep) const {
    // One hop of zeros in front; tail padded so the last real sample sits in two frames.
    const std::size_t frames = (x.size() + kHop - 1) / kHop + 1;
    std::vector<double> padded((frames + 1) * kHop, 0.0);
    std::copy(x.begin(), x.end(), padded.begin() + kHop);
    std::vector<double> acc(padded.size(), 0.0);
    std::vector<double> coef(kHop), frame(kFrame);
    std::vector<std::size_t> order(kHop);
    for (std::size_t f = 0; f < frames; ++f) {
      const double* src = padded.data() + f * kHop;
      for (std::size_t n = 0; n < kFrame; ++n) frame[n] = src[n] * window_[n];
      for (std::size_t k = 0; k < kHop; ++k) {
        const double* b = basis_.data() + k * kFrame;
        double s = 0.0;
        for (std::size_t n = 0; n < kFrame; ++n) s += b[n] * frame[n];
        coef[k] = s;
      }
      if (keep < kHop) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::stable_sort(order.begin(), order.end(),
                         [&](std::size_t a, std::size_t b) { return std::fabs(coef[a]) > std::fabs(coef[b]); });
        for (std::size_t r = keep; r < kHop; ++r) coef[order[r]] = 0.0;
      }
      std::fill(frame.begin(), frame.end(), 0.0);
      for (std::size_t k = 0; k < kHop; ++k) {
        if (coef[k] == 0.0) continue;
        const double* b = basis_.data() + k * kFrame;
        for (std::size_t n = 0; n < kFrame; ++n) frame[n] += coef[k] * b[n];
      }
      const double scale = 2.0 / static_cast<double>(kHop);
      for (std::size_t n = 0; n < kFrame; ++n) acc[f * kHop + n] += scale * window_[n] * frame[n];
    }
    return {acc.begin() + kHop, acc.begin() + static_cast<std::ptrdiff_t>(kHop + x.size())};
  }

 private:
  std::vector<double> window_;
  std::vector<double> basis_;  // [k][n]
};

}  // namespace detail

inline WaveBuffer compress(const WaveBuffer& w, const CompressionProxy& proxy) {
  proxy.validate();
  if (proxy.kind == CompressionProxy::Kind::quantize_bits) {
    return WaveBuffer(detail::quantize(w.samples(), static_cast<int>(proxy.strength)), w.sample_rate());
  }
  static const detail::Mdct mdct;
  const auto keep = static_cast<std::size_t>(
      std::ceil(proxy.strength * static_cast<double>(detail::Mdct::kHop) - 1e-9));
  return WaveBuffer(mdct.roundtrip_topk(w.samples(), std::max<std::size_t>(keep, 1)), w.sample_rate());
}

struct ProxyOutcome {
  CompressionProxy proxy;
  std::vector<double> sdr_before;  // per source: separate(compress(x))
  std::vector<double> sdr_after;   // per source: separate(compress(x + nu))
  std::vector<double> delta;       // after - before
  double mean_delta() const { return mean(delta); }
};

// Separates compress(x) and compress(x + nu) with `model` and reports the
// per-source SDR change. Both inputs go through the same proxy, so codec
// distortion affects both sides and only the survival of nu is measured.
inline std::vector<ProxyOutcome> robustness_sweep(const SeparatorModel& model, const WaveBuffer& x,
                                                  const std::vector<WaveBuffer>& y, const WaveBuffer& nu,
                                                  const std::vector<CompressionProxy>& proxies) {
  if (proxies.empty()) throw ConfigError("robustness sweep needs at least one proxy");
  if (nu.size() != x.size()) throw ShapeError("perturbation length does not match mixture length");
  if (y.size() != model.n_sources()) throw ShapeError("source count does not match the model");
  std::vector<double> perturbed(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) perturbed[i] = x[i] + nu[i];
  const WaveBuffer xp(std::move(perturbed), x.sample_rate());

  std::vector<ProxyOutcome> out;
  for (const auto& p : proxies) {
    ProxyOutcome r{p, {}, {}, {}};
    const auto before = separate(model, compress(x, p));
    const auto after = separate(model, compress(xp, p));
    for (std::size_t i = 0; i < y.size(); ++i) {
      r.sdr_before.push_back(sdr(y[i], before[i]));
      r.sdr_after.push_back(sdr(y[i], after[i]));
      r.delta.push_back(r.sdr_after.back() - r.sdr_before.back());
    }
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace amicable
