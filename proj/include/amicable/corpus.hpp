#pragma once

// On-disk corpus: a directory with manifest.json and 64-bit float WAVs
//   <id>/mixture.wav, <id>/source1.wav ... <id>/sourceN.wav
// Float-64 storage keeps mixture == sum of sources exact after a reload.
//
// manifest.json:
//   {"format": "amicable-corpus", "version": 1, "split": "eval",
//    "base_seed": 1, "duration": 10, "sample_rate": 8000, "n_sources": 2,
//    "tracks": [{"id": "s1", "seed": 1, "mixture": "s1/mixture.wav",
//                "sources": ["s1/source1.wav", "s1/source2.wav"]}, ...]}

#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

#include "amicable/datagen.hpp"
#include "amicable/error.hpp"
#include "amicable/report.hpp"
#include "amicable/wave.hpp"

namespace amicable {

inline constexpr int kCorpusVersion = 1;

struct CorpusInfo {
  std::string split = "eval";
  std::uint64_t base_seed = kEvalSeedBase;
  SynthOptions options;
};

inline nlohmann::json write_corpus(const std::filesystem::path& dir, const std::vector<SynthTrack>& tracks,
                                   const CorpusInfo& info) {
  nlohmann::json manifest;
  manifest["format"] = "amicable-corpus";
  manifest["version"] = kCorpusVersion;
  manifest["split"] = info.split;
  manifest["base_seed"] = info.base_seed;
  manifest["duration"] = info.options.duration;
  manifest["sample_rate"] = info.options.sample_rate;
  manifest["n_sources"] = info.options.n_sources;
  nlohmann::json list = nlohmann::json::array();
  for (const auto& t : tracks) {
    std::filesystem::create_directories(dir / t.id);
    const std::string mix = t.id + "/mixture.wav";
    wav_write(dir / mix, t.mixture, WavEncoding::float64);
    nlohmann::json sources = nlohmann::json::array();
    for (std::size_t i = 0; i < t.sources.size(); ++i) {
      const std::string src = t.id + "/source" + std::to_string(i + 1) + ".wav";
      wav_write(dir / src, t.sources[i], WavEncoding::float64);
      sources.push_back(src);
    }
    list.push_back({{"id", t.id}, {"seed", t.seed}, {"mixture", mix}, {"sources", sources}});
  }
  manifest["tracks"] = std::move(list);
  write_json(dir / "manifest.json", manifest);
  return manifest;
}

inline std::vector<SynthTrack> load_corpus(const std::filesystem::path& dir) {
  const auto manifest_path = dir / "manifest.json";
  if (!std::filesystem::exists(manifest_path)) throw MissingInputError("corpus manifest not found", manifest_path.string());
  const nlohmann::json m = read_json(manifest_path);
  auto wave = [&](const std::string& rel) {
    const auto p = dir / rel;
    if (!std::filesystem::exists(p)) throw MissingInputError("corpus file not found", p.string());
    return wav_read(p);
  };
  std::vector<SynthTrack> out;
  try {
    if (m.at("format") != "amicable-corpus") throw ConfigError(manifest_path.string() + " is not a corpus manifest");
    if (m.at("version").get<int>() != kCorpusVersion) {
      throw ConfigError("unsupported corpus version " + m.at("version").dump());
    }
    for (const auto& t : m.at("tracks")) {
      SynthTrack track;
      track.id = t.at("id").get<std::string>();
      track.seed = t.at("seed").get<std::uint64_t>();
      track.duration = m.at("duration").get<double>();
      track.mixture = wave(t.at("mixture").get<std::string>());
      track.sample_rate = track.mixture.sample_rate();
      for (const auto& s : t.at("sources")) {
        track.sources.push_back(wave(s.get<std::string>()));
        if (track.sources.back().size() != track.mixture.size()) {
          throw ShapeError("track " + track.id + ": source length differs from the mixture");
        }
      }
      out.push_back(std::move(track));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("malformed corpus manifest " + manifest_path.string() + ": " + e.what());
  }
  if (out.empty()) throw ConfigError("corpus " + dir.string() + " has no tracks");
  return out;
}

}  // namespace amicable
