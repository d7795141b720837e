#pragma once

// Deterministic synthetic corpus: a harmonic, note-based source and a
// band-passed noise-burst source per track, mixed with joint headroom scaling.
//
// Seed ranges: evaluation tracks use seeds kEvalSeedBase + k, training tracks
// kTrainSeedBase + k, so the two corpora never share a track.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "amicable/error.hpp"
#include "amicable/wave.hpp"

namespace amicable {

inline constexpr std::uint64_t kEvalSeedBase = 1;
inline constexpr std::uint64_t kTrainSeedBase = 1'000'001;
inline constexpr double kPeakLimit = 0.99;

struct SynthTrack {
  std::string id;
  std::uint64_t seed = 0;
  double duration = 0.0;
  int sample_rate = 0;
  std::vector<WaveBuffer> sources;
  WaveBuffer mixture{std::vector<double>{0.0}, 1};
};

struct SynthOptions {
  double duration = 10.0;  // seconds
  int sample_rate = 8000;
  std::size_t n_sources = 2;
};

namespace detail {

// RBJ band-pass biquad (0 dB peak gain), direct form I.
class Biquad {
 public:
  Biquad(double center, double q, int sample_rate) {
    const double w0 = 2.0 * std::numbers::pi * center / sample_rate;
    const double alpha = std::sin(w0) / (2.0 * q);
    const double a0 = 1.0 + alpha;
    b0_ = alpha / a0;
    b2_ = -alpha / a0;
    a1_ = -2.0 * std::cos(w0) / a0;
    a2_ = (1.0 - alpha) / a0;
  }
  double operator()(double x) {
    const double y = b0_ * x + b2_ * x2_ - a1_ * y1_ - a2_ * y2_;
    x2_ = x1_;
    x1_ = x;
    y2_ = y1_;
    y1_ = y;
    return y;
  }

 private:
  double b0_, b2_, a1_, a2_;
  double x1_ = 0, x2_ = 0, y1_ = 0, y2_ = 0;
};

// Notes with random f0, a fixed harmonic count and an attack/decay envelope.
inline std::vector<double> harmonic_source(std::mt19937_64& rng, std::size_t n, int sr,
                                           double f0_lo, double f0_hi) {
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  const int harmonics = 3 + static_cast<int>(rng() % 3);
  std::vector<double> amp(static_cast<std::size_t>(harmonics));
  for (int h = 0; h < harmonics; ++h) amp[static_cast<std::size_t>(h)] = (0.5 + 0.5 * uni(rng)) / (h + 1);

  std::vector<double> out(n, 0.0);
  std::size_t t = 0;
  while (t < n) {
    const auto len = static_cast<std::size_t>((0.25 + 0.55 * uni(rng)) * sr);
    const bool rest = uni(rng) < 0.15;
    const double f0 = f0_lo * std::pow(f0_hi / f0_lo, uni(rng));
    const double level = 0.6 + 0.4 * uni(rng);
    const double attack = 0.02 * sr, release = 0.03 * sr;
    const double decay = (0.3 + 0.7 * uni(rng)) * sr;
    for (std::size_t i = 0; i < len && t + i < n && !rest; ++i) {
      const double di = static_cast<double>(i);
      double env = std::min(1.0, di / attack) * std::exp(-di / decay);
      env *= std::min(1.0, static_cast<double>(len - i) / release);
      double s = 0.0;
      for (int h = 0; h < harmonics; ++h) {
        const double f = f0 * (h + 1);
        if (f >= 0.45 * sr) break;
        s += amp[static_cast<std::size_t>(h)] * std::sin(2.0 * std::numbers::pi * f * di / sr);
      }
      out[t + i] = level * env * s;
    }
    t += len;
  }
  return out;
}

// Exponentially decaying white-noise bursts over a quiet noise bed, band-passed by two cascaded biquads.
inline std::vector<double> noise_source(std::mt19937_64& rng, std::size_t n, int sr, double fc_lo,
                                        double fc_hi) {
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  // Continuous bed about 30 dB below the bursts keeps the source from going silent.
  std::vector<double> raw(n);
  for (double& x : raw) x = 0.03 * gauss(rng);
  std::size_t t = static_cast<std::size_t>(0.1 * sr * uni(rng));
  while (t < n) {
    const double tau = (0.03 + 0.09 * uni(rng)) * sr;
    const double level = 0.5 + 0.5 * uni(rng);
    const auto len = static_cast<std::size_t>(5.0 * tau);
    for (std::size_t i = 0; i < len && t + i < n; ++i) {
      raw[t + i] += level * std::exp(-static_cast<double>(i) / tau) * gauss(rng);
    }
    t += static_cast<std::size_t>((0.15 + 0.35 * uni(rng)) * sr);
  }
  const double center = fc_lo * std::pow(fc_hi / fc_lo, uni(rng));
  Biquad stage1(center, 1.5, sr), stage2(center, 1.5, sr);
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = stage2(stage1(raw[i]));
  return out;
}

inline double peak(const std::vector<double>& v) {
  double p = 0.0;
  for (double x : v) p = std::max(p, std::fabs(x));
  return p;
}

inline double rms(const std::vector<double>& v) {
  double e = 0.0;
  for (double x : v) e += x * x;
  return v.empty() ? 0.0 : std::sqrt(e / static_cast<double>(v.size()));
}

}  // namespace detail

inline SynthTrack gen_track(std::uint64_t seed, const SynthOptions& opt = {}) {
  if (opt.duration < 1.0) throw DomainError("track duration must be at least 1 s");
  if (opt.sample_rate <= 0) throw DomainError("sample rate must be positive");
  if (opt.n_sources < 1) throw DomainError("need at least one source");
  const int sr = opt.sample_rate;
  const auto n = static_cast<std::size_t>(std::llround(opt.duration * sr));
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);

  std::vector<std::vector<double>> raw;
  for (std::size_t k = 0; k < opt.n_sources; ++k) {
    // Additional sources move up an octave per pair.
    const double octave = std::pow(2.0, static_cast<double>(k / 2));
    std::vector<double> s = k % 2 == 0
                                ? detail::harmonic_source(rng, n, sr, 110.0 * octave, 440.0 * octave)
                                : detail::noise_source(rng, n, sr, 1000.0 * octave, 2800.0 * octave);
    // Balance sources by RMS, then a random +-3 dB offset.
    const double r = detail::rms(s);
    const double gain = std::pow(10.0, (6.0 * uni(rng) - 3.0) / 20.0);
    if (r > 0.0) {
      for (double& x : s) x *= gain / r;
    }
    raw.push_back(std::move(s));
  }

  std::vector<double> mix(n, 0.0);
  for (const auto& s : raw)
    for (std::size_t i = 0; i < n; ++i) mix[i] += s[i];
  double p = detail::peak(mix);
  for (const auto& s : raw) p = std::max(p, detail::peak(s));
  // Slightly under the limit so re-summing scaled sources cannot round past it.
  const double g = p > 0.0 ? (kPeakLimit * (1.0 - 1e-9)) / p : 1.0;

  SynthTrack track;
  track.id = "s" + std::to_string(seed);
  track.seed = seed;
  track.duration = opt.duration;
  track.sample_rate = sr;
  std::fill(mix.begin(), mix.end(), 0.0);
  for (auto& s : raw) {
    for (double& x : s) x *= g;
    for (std::size_t i = 0; i < n; ++i) mix[i] += s[i];
    track.sources.emplace_back(s, sr);
  }
  track.mixture = WaveBuffer(std::move(mix), sr);
  return track;
}

inline std::vector<SynthTrack> gen_corpus(std::size_t n_tracks, std::uint64_t base_seed,
                                          const SynthOptions& opt = {}) {
  if (n_tracks < 1) throw DomainError("corpus needs at least one track");
  std::vector<SynthTrack> out;
  out.reserve(n_tracks);
  for (std::size_t k = 0; k < n_tracks; ++k) out.push_back(gen_track(base_seed + k, opt));
  return out;
}

}  // namespace amicable
