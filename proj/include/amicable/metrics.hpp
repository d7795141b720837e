#pragma once

// Energy-ratio SDR (not the framewise, filter-projected BSS-eval variant):
//   SDR(ref, est) = 10 log10(sum ref^2 / sum (ref - est)^2), capped to [-120, 120] dB.
// Scores are computed over the whole clip.

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "amicable/error.hpp"
#include "amicable/wave.hpp"

namespace amicable {

inline constexpr double kSdrCap = 120.0;

inline double sdr(std::span<const double> ref, std::span<const double> est) {
  if (ref.size() != est.size()) {
    throw ShapeError("sdr: length mismatch " + std::to_string(ref.size()) + " vs " +
                     std::to_string(est.size()));
  }
  double signal = 0.0, error = 0.0;
  for (std::size_t i = 0; i < ref.size(); ++i) {
    signal += ref[i] * ref[i];
    const double e = ref[i] - est[i];
    error += e * e;
  }
  if (signal == 0.0) throw DomainError("sdr: reference is all zero");
  if (error == 0.0) return kSdrCap;
  return std::clamp(10.0 * std::log10(signal / error), -kSdrCap, kSdrCap);
}

inline double sdr(const WaveBuffer& ref, const WaveBuffer& est) { return sdr(ref.samples(), est.samples()); }

// Degradation of input: SDR between the clean and the perturbed mixture.
inline double di_sdr(std::span<const double> x, std::span<const double> nu) {
  if (x.size() != nu.size()) {
    throw ShapeError("di_sdr: length mismatch " + std::to_string(x.size()) + " vs " +
                     std::to_string(nu.size()));
  }
  std::vector<double> perturbed(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) perturbed[i] = x[i] + nu[i];
  return sdr(x, perturbed);
}

inline double di_sdr(const WaveBuffer& x, const WaveBuffer& nu) { return di_sdr(x.samples(), nu.samples()); }

// Midpoint convention for even counts.
inline double median(std::vector<double> v) {
  if (v.empty()) throw DomainError("median of empty list");
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

inline double mean(const std::vector<double>& v) {
  if (v.empty()) throw DomainError("mean of empty list");
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

struct TrackScores {
  std::string track_id;
  std::vector<double> source_sdr;  // dB, one per source
  double di_sdr = kSdrCap;
};

struct AggregateScores {
  std::vector<double> source_median;  // median over tracks, per source
  double average = 0.0;               // mean of the per-source medians
  double di_sdr_median = 0.0;
  std::size_t tracks = 0;
};

inline AggregateScores aggregate(const std::vector<TrackScores>& scores) {
  if (scores.empty()) throw DomainError("aggregate: no track scores");
  const std::size_t n = scores.front().source_sdr.size();
  AggregateScores out;
  out.tracks = scores.size();
  std::vector<double> di;
  for (const auto& s : scores) {
    if (s.source_sdr.size() != n) throw ShapeError("aggregate: tracks disagree on source count");
    di.push_back(s.di_sdr);
  }
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> col;
    for (const auto& s : scores) col.push_back(s.source_sdr[i]);
    out.source_median.push_back(median(col));
  }
  out.average = n ? mean(out.source_median) : 0.0;
  out.di_sdr_median = median(di);
  return out;
}

}  // namespace amicable
