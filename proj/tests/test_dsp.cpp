#include <gtest/gtest.h>

#include <complex>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>

#include "amicable/stft.hpp"
#include "amicable/wave.hpp"

namespace amicable {
namespace {

WaveBuffer white_noise(std::size_t n, std::uint64_t seed, double amp = 0.5) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> d(-amp, amp);
  std::vector<double> s(n);
  for (double& x : s) x = d(rng);
  return WaveBuffer(std::move(s), 8000);
}

// Padded-domain frame f exactly as the framing contract states it.
std::vector<double> frame_of(const WaveBuffer& w, const StftGeometry& g, std::size_t f) {
  const std::size_t front = g.window_size - g.hop;
  std::vector<double> out(g.window_size, 0.0);
  for (std::size_t i = 0; i < g.window_size; ++i) {
    const std::ptrdiff_t t = static_cast<std::ptrdiff_t>(f * g.hop + i) - static_cast<std::ptrdiff_t>(front);
    if (t >= 0 && static_cast<std::size_t>(t) < w.size()) out[i] = w[static_cast<std::size_t>(t)];
  }
  return out;
}

std::vector<std::complex<double>> direct_dft(const std::vector<double>& x) {
  const std::size_t n = x.size();
  std::vector<std::complex<double>> out(n / 2 + 1);
  for (std::size_t k = 0; k <= n / 2; ++k) {
    std::complex<double> acc;
    for (std::size_t t = 0; t < n; ++t) {
      const double a = -2.0 * std::numbers::pi * static_cast<double>(k * t) / static_cast<double>(n);
      acc += x[t] * std::complex<double>(std::cos(a), std::sin(a));
    }
    out[k] = acc;
  }
  return out;
}

TEST(Stft, ZeroSignalGivesZeroSpectrogram) {
  const auto s = stft(WaveBuffer::zeros(2000, 8000), 512, 256);
  for (const auto& v : s.values) EXPECT_EQ(std::abs(v), 0.0);
  EXPECT_EQ(s.bins(), 257u);
}

TEST(Stft, BinCenteredSinusoidMatchesDirectDft) {
  const std::size_t n = 512, k = 37;
  std::vector<double> x(4 * n);
  for (std::size_t t = 0; t < x.size(); ++t) {
    x[t] = std::cos(2.0 * std::numbers::pi * static_cast<double>(k * t) / static_cast<double>(n));
  }
  const WaveBuffer w(x, 8000);
  const StftGeometry g{n, n / 2, WindowKind::rectangular};
  const auto s = stft(w, g);
  const std::size_t f = 2;  // fully interior frame
  const auto oracle = direct_dft(frame_of(w, g, f));
  double total = 0.0;
  for (std::size_t b = 0; b < g.bins(); ++b) {
    EXPECT_NEAR(std::abs(s.at(f, b) - oracle[b]), 0.0, 1e-9);
    total += std::norm(s.at(f, b));
  }
  EXPECT_GT(std::norm(s.at(f, k)) / total, 0.99);
}

TEST(Stft, RoundTripOnWhiteNoise) {
  const WaveBuffer w = white_noise(8000 + 123, 1);
  const auto back = istft(stft(w, 512, 256), w.size(), 8000);
  double worst = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) worst = std::max(worst, std::fabs(back[i] - w[i]));
  EXPECT_LT(worst, 1e-6);
}

TEST(Stft, RoundTripOtherGeometries) {
  const WaveBuffer w = white_noise(1000, 2);
  for (const StftGeometry g : {StftGeometry{64, 16, WindowKind::hann}, StftGeometry{128, 128, WindowKind::rectangular},
                               StftGeometry{32, 16, WindowKind::rectangular}}) {
    const auto back = istft(stft(w, g), w.size(), 8000);
    for (std::size_t i = 0; i < w.size(); ++i) ASSERT_NEAR(back[i], w[i], 1e-9);
  }
}

TEST(Stft, ParsevalPerFrame) {
  const WaveBuffer w = white_noise(3000, 3);
  const StftGeometry g;
  const StftEngine eng(g);
  const auto s = stft(w, g);
  for (std::size_t f = 0; f < s.frames; ++f) {
    const auto frame = frame_of(w, g, f);
    double time_energy = 0.0;
    for (std::size_t i = 0; i < frame.size(); ++i) time_energy += std::pow(frame[i] * eng.window()[i], 2);
    double spec_energy = 0.0;
    for (std::size_t k = 0; k < g.bins(); ++k) {
      const double weight = (k == 0 || k == g.window_size / 2) ? 1.0 : 2.0;
      spec_energy += weight * std::norm(s.at(f, k));
    }
    spec_energy /= static_cast<double>(g.window_size);
    EXPECT_LT(std::fabs(time_energy - spec_energy) / time_energy, 1e-8) << "frame " << f;
  }
}

TEST(Stft, IsLinear) {
  const WaveBuffer a = white_noise(2048, 4), b = white_noise(2048, 5);
  std::vector<double> sum(a.size());
  for (std::size_t i = 0; i < sum.size(); ++i) sum[i] = a[i] + b[i];
  const auto sa = stft(a, 512, 256), sb = stft(b, 512, 256), ss = stft(WaveBuffer(sum, 8000), 512, 256);
  for (std::size_t i = 0; i < ss.values.size(); ++i) {
    EXPECT_LT(std::abs(ss.values[i] - sa.values[i] - sb.values[i]), 1e-10);
  }
}

TEST(Istft, ZeroAndLinearity) {
  const WaveBuffer w = white_noise(2048, 6);
  auto s = stft(w, 512, 256);
  const auto y = istft(s, w.size(), 8000);
  for (auto& v : s.values) v *= 2.0;
  const auto y2 = istft(s, w.size(), 8000);
  for (std::size_t i = 0; i < w.size(); ++i) EXPECT_NEAR(y2[i], 2.0 * y[i], 1e-10);
  for (auto& v : s.values) v = 0.0;
  const auto z = istft(s, w.size(), 8000);
  for (double v : z.samples()) EXPECT_EQ(v, 0.0);
}

TEST(Istft, TruncatesToRequestedLength) {
  const WaveBuffer w = white_noise(2048, 7);
  const auto s = stft(w, 512, 256);
  const auto y = istft(s, 1500, 8000);
  ASSERT_EQ(y.size(), 1500u);
  for (std::size_t i = 0; i < y.size(); ++i) EXPECT_NEAR(y[i], w[i], 1e-9);
}

TEST(StftErrors, Contracts) {
  EXPECT_THROW(stft(WaveBuffer::zeros(100, 8000), 512, 256), DomainError);
  EXPECT_THROW(stft(WaveBuffer::zeros(1000, 8000), 500, 250), DomainError);
  EXPECT_THROW(stft(WaveBuffer::zeros(1000, 8000), 512, 200), DomainError);
  const auto s = stft(WaveBuffer::zeros(1000, 8000), 512, 256);
  EXPECT_THROW(istft(s, 5000, 8000), ShapeError);
}

// Adjoint correctness of the differentiable spectral ops.
TEST(SpectralOps, GradCheck) {
  auto eng = make_stft_engine(StftGeometry{16, 8, WindowKind::hann});
  std::mt19937_64 rng(8);
  std::normal_distribution<double> d;
  const std::size_t len = 40;
  std::vector<double> weights(len);
  for (double& x : weights) x = d(rng);
  const Tensor wt = Tensor::vector(weights);

  const std::vector<std::pair<std::string, ScalarFn>> cases = {
      {"stft", [&](const Tensor& x) { return sum(square(stft(x, eng))); }},
      {"stft_istft", [&](const Tensor& x) { return sum(mul(istft(stft(x, eng), eng, len), wt)); }},
      {"magnitude", [&](const Tensor& x) { return sum(magnitude(stft(x, eng))); }},
      {"apply_mask",
       [&](const Tensor& x) {
         const Tensor s = stft(x, eng);
         const Tensor m = sigmoid(magnitude(s));
         return sum(square(istft(apply_mask(s, m), eng, len)));
       }},
  };
  for (const auto& [name, f] : cases) {
    for (int trial = 0; trial < 10; ++trial) {
      std::vector<double> p(len);
      for (double& x : p) x = d(rng);
      EXPECT_LT(grad_check(f, Tensor::vector(p), 1e-5), 1e-4) << name << " trial " << trial;
    }
  }
}

TEST(SpectralOps, TapeMatchesPlainTransforms) {
  const WaveBuffer w = white_noise(1024, 9);
  auto eng = make_stft_engine(StftGeometry{});
  const Tensor x = Tensor::vector(std::vector<double>(w.samples().begin(), w.samples().end()));
  const Tensor s = stft(x, eng);
  const auto plain = stft(w, StftGeometry{});
  ASSERT_EQ(s.size(), plain.values.size() * 2);
  for (std::size_t i = 0; i < plain.values.size(); ++i) {
    EXPECT_EQ(s[2 * i], plain.values[i].real());
    EXPECT_EQ(s[2 * i + 1], plain.values[i].imag());
  }
  const Tensor y = istft(s, eng, w.size());
  for (std::size_t i = 0; i < w.size(); ++i) EXPECT_NEAR(y[i], w[i], 1e-9);
}

class WavTest : public ::testing::Test {
 protected:
  std::filesystem::path dir_ = std::filesystem::temp_directory_path() / "amicable_wav_test";
  void SetUp() override { std::filesystem::create_directories(dir_); }
  void TearDown() override { std::filesystem::remove_all(dir_); }
};

TEST_F(WavTest, Float32RoundTrip) {
  const WaveBuffer w = white_noise(5000, 10, 0.99);
  wav_write(dir_ / "f.wav", w, WavEncoding::float32);
  const WaveBuffer r = wav_read(dir_ / "f.wav");
  ASSERT_EQ(r.size(), w.size());
  EXPECT_EQ(r.sample_rate(), 8000);
  for (std::size_t i = 0; i < w.size(); ++i) EXPECT_LT(std::fabs(r[i] - w[i]), 1e-7);
}

TEST_F(WavTest, Float64RoundTripIsExact) {
  const WaveBuffer w = white_noise(3000, 11, 0.99);
  wav_write(dir_ / "d.wav", w, WavEncoding::float64);
  EXPECT_EQ(wav_read(dir_ / "d.wav"), w);
}

TEST_F(WavTest, Pcm16QuantizerBound) {
  std::vector<double> s(4000);
  for (std::size_t i = 0; i < s.size(); ++i) s[i] = std::sin(2.0 * std::numbers::pi * 440.0 * static_cast<double>(i) / 8000.0);
  s[0] = 1.0;
  s[1] = -1.0;
  const WaveBuffer w(s, 8000);
  wav_write(dir_ / "p.wav", w, WavEncoding::pcm16);
  const WaveBuffer r = wav_read(dir_ / "p.wav");
  for (std::size_t i = 0; i < w.size(); ++i) EXPECT_LE(std::fabs(r[i] - w[i]), std::ldexp(1.0, -15));
}

void write_raw_wav(const std::filesystem::path& p, std::uint16_t format, std::uint16_t channels,
                   std::uint16_t bits) {
  std::vector<char> out;
  detail::put_tag(out, "RIFF");
  detail::put_u32(out, 36 + 8);
  detail::put_tag(out, "WAVE");
  detail::put_tag(out, "fmt ");
  detail::put_u32(out, 16);
  detail::put_u16(out, format);
  detail::put_u16(out, channels);
  detail::put_u32(out, 8000);
  detail::put_u32(out, 8000u * channels * bits / 8);
  detail::put_u16(out, static_cast<std::uint16_t>(channels * bits / 8));
  detail::put_u16(out, bits);
  detail::put_tag(out, "data");
  detail::put_u32(out, 8);
  for (int i = 0; i < 8; ++i) out.push_back(0);
  std::ofstream(p, std::ios::binary).write(out.data(), static_cast<std::streamsize>(out.size()));
}

TEST_F(WavTest, StereoRejected) {
  write_raw_wav(dir_ / "s.wav", 1, 2, 16);
  try {
    wav_read(dir_ / "s.wav");
    FAIL() << "expected IoError";
  } catch (const IoError& e) {
    EXPECT_NE(std::string(e.what()).find("mono required"), std::string::npos);
  }
}

TEST_F(WavTest, UnsupportedEncodingRejected) {
  write_raw_wav(dir_ / "u8.wav", 1, 1, 8);
  EXPECT_THROW(wav_read(dir_ / "u8.wav"), IoError);
  EXPECT_THROW(wav_read(dir_ / "missing.wav"), IoError);
}

}  // namespace
}  // namespace amicable
