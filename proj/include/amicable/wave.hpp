#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <span>
#include <string>
#include <vector>

#include "amicable/error.hpp"

namespace amicable {

// Mono sampled signal. Samples are nominally in [-1, 1].
class WaveBuffer {
 public:
  WaveBuffer(std::vector<double> samples, int sample_rate)
      : samples_(std::move(samples)), sample_rate_(sample_rate) {
    if (samples_.empty()) throw DomainError("wave buffer must not be empty");
    if (sample_rate_ <= 0) throw DomainError("sample rate must be positive");
    for (double s : samples_) {
      if (!std::isfinite(s)) throw NumericError("wave buffer contains a non-finite sample");
    }
  }

  static WaveBuffer zeros(std::size_t n, int sample_rate) {
    return WaveBuffer(std::vector<double>(n, 0.0), sample_rate);
  }

  std::span<const double> samples() const { return samples_; }
  std::size_t size() const { return samples_.size(); }
  int sample_rate() const { return sample_rate_; }
  double operator[](std::size_t i) const { return samples_[i]; }

  friend bool operator==(const WaveBuffer&, const WaveBuffer&) = default;

 private:
  std::vector<double> samples_;
  int sample_rate_;
};

enum class WavEncoding { pcm16, float32, float64 };

namespace detail {

static_assert(std::endian::native == std::endian::little, "WAV I/O assumes a little-endian host");

inline void put_u32(std::vector<char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}
inline void put_u16(std::vector<char>& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xFF));
  out.push_back(static_cast<char>((v >> 8) & 0xFF));
}
inline void put_tag(std::vector<char>& out, const char* tag) { out.insert(out.end(), tag, tag + 4); }

inline std::uint32_t get_u32(const std::vector<char>& in, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[at + i])) << (8 * i);
  return v;
}
inline std::uint16_t get_u16(const std::vector<char>& in, std::size_t at) {
  return static_cast<std::uint16_t>(static_cast<unsigned char>(in[at]) |
                                    (static_cast<unsigned char>(in[at + 1]) << 8));
}

}  // namespace detail

// 16-bit samples are scaled by 2^15 and clipped to [-32768, 32767], no dither.
inline void wav_write(const std::filesystem::path& path, const WaveBuffer& w, WavEncoding enc) {
  const std::uint16_t bits = enc == WavEncoding::pcm16 ? 16 : enc == WavEncoding::float32 ? 32 : 64;
  const std::uint16_t format = enc == WavEncoding::pcm16 ? 1 : 3;
  const std::uint32_t bytes_per_sample = bits / 8;
  const auto data_bytes = static_cast<std::uint32_t>(w.size() * bytes_per_sample);

  std::vector<char> out;
  out.reserve(44 + data_bytes);
  detail::put_tag(out, "RIFF");
  detail::put_u32(out, 36 + data_bytes);
  detail::put_tag(out, "WAVE");
  detail::put_tag(out, "fmt ");
  detail::put_u32(out, 16);
  detail::put_u16(out, format);
  detail::put_u16(out, 1);
  detail::put_u32(out, static_cast<std::uint32_t>(w.sample_rate()));
  detail::put_u32(out, static_cast<std::uint32_t>(w.sample_rate()) * bytes_per_sample);
  detail::put_u16(out, static_cast<std::uint16_t>(bytes_per_sample));
  detail::put_u16(out, bits);
  detail::put_tag(out, "data");
  detail::put_u32(out, data_bytes);
  for (double s : w.samples()) {
    if (enc == WavEncoding::pcm16) {
      const double q = std::clamp(std::round(s * 32768.0), -32768.0, 32767.0);
      detail::put_u16(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(q)));
    } else if (enc == WavEncoding::float32) {
      detail::put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(s)));
    } else {
      const auto v = std::bit_cast<std::uint64_t>(s);
      detail::put_u32(out, static_cast<std::uint32_t>(v & 0xFFFFFFFFu));
      detail::put_u32(out, static_cast<std::uint32_t>(v >> 32));
    }
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open for writing: " + path.string());
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw IoError("write failed: " + path.string());
}

inline WaveBuffer wav_read(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open WAV file: " + path.string());
  const std::vector<char> in((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  const std::string where = " (" + path.string() + ")";
  if (in.size() < 12 || std::memcmp(in.data(), "RIFF", 4) != 0 ||
      std::memcmp(in.data() + 8, "WAVE", 4) != 0) {
    throw IoError("not a RIFF/WAVE file" + where);
  }
  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  bool have_fmt = false;
  std::size_t pos = 12;
  while (pos + 8 <= in.size()) {
    const std::string tag(in.data() + pos, 4);
    const std::uint32_t len = detail::get_u32(in, pos + 4);
    const std::size_t body = pos + 8;
    if (body + len > in.size()) throw IoError("truncated chunk '" + tag + "'" + where);
    if (tag == "fmt ") {
      if (len < 16) throw IoError("malformed fmt chunk" + where);
      format = detail::get_u16(in, body);
      channels = detail::get_u16(in, body + 2);
      rate = detail::get_u32(in, body + 4);
      bits = detail::get_u16(in, body + 14);
      if (format == 0xFFFE && len >= 26) format = detail::get_u16(in, body + 24);
      have_fmt = true;
    } else if (tag == "data") {
      if (!have_fmt) throw IoError("data chunk before fmt chunk" + where);
      if (channels != 1) throw IoError("mono required, file has " + std::to_string(channels) + " channels" + where);
      const bool pcm16 = format == 1 && bits == 16;
      const bool f32 = format == 3 && bits == 32;
      const bool f64 = format == 3 && bits == 64;
      if (!pcm16 && !f32 && !f64) {
        throw IoError("unsupported WAV format " + std::to_string(format) + " with " +
                      std::to_string(bits) + " bits; need PCM-16, float-32 or float-64" + where);
      }
      const std::size_t width = bits / 8;
      std::vector<double> samples(len / width);
      for (std::size_t i = 0; i < samples.size(); ++i) {
        const std::size_t at = body + i * width;
        if (pcm16) {
          samples[i] = static_cast<std::int16_t>(detail::get_u16(in, at)) / 32768.0;
        } else if (f32) {
          samples[i] = std::bit_cast<float>(detail::get_u32(in, at));
        } else {
          const std::uint64_t v = detail::get_u32(in, at) | (std::uint64_t{detail::get_u32(in, at + 4)} << 32);
          samples[i] = std::bit_cast<double>(v);
        }
      }
      return WaveBuffer(std::move(samples), static_cast<int>(rate));
    }
    pos = body + len + (len & 1u);
  }
  throw IoError("no data chunk" + where);
}

}  // namespace amicable
