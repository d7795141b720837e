#pragma once

// Frame-wise mask separators. Per STFT frame the log-compressed magnitude
// vector is mapped to N sigmoid masks (one per source); estimate i is
// istft(mask_i * STFT(x)).
//
//   mask-mlp:    masks = sigmoid([tanh([feat, 1] W1), 1] W2)
//   mask-linear: masks = sigmoid([feat, 1] W)
//
// Biases are folded into the last row of each weight matrix.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <memory>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"

#include "amicable/datagen.hpp"
#include "amicable/error.hpp"
#include "amicable/stft.hpp"
#include "amicable/tensor.hpp"
#include "amicable/wave.hpp"

namespace amicable {

enum class Arch { mask_mlp, mask_linear };

inline std::string to_string(Arch a) { return a == Arch::mask_mlp ? "mask-mlp" : "mask-linear"; }

inline Arch arch_from_string(const std::string& s) {
  if (s == "mask-mlp") return Arch::mask_mlp;
  if (s == "mask-linear") return Arch::mask_linear;
  throw ConfigError("unknown separator architecture '" + s + "' (expected mask-mlp or mask-linear)");
}

using ParamMap = std::map<std::string, Tensor>;

struct ModelOptions {
  StftGeometry geometry;
  std::size_t n_sources = 2;
  std::size_t hidden = 64;
};

class SeparatorModel {
 public:
  SeparatorModel(Arch arch, ModelOptions opt, ParamMap params)
      : arch_(arch), opt_(opt), params_(std::move(params)), engine_(make_stft_engine(opt.geometry)) {
    if (opt_.n_sources < 1) throw DomainError("separator needs at least one source");
    const std::size_t b = opt_.geometry.bins(), n = opt_.n_sources * b;
    if (arch_ == Arch::mask_mlp) {
      expect_param("w1", {b + 1, opt_.hidden});
      expect_param("w2", {opt_.hidden + 1, n});
    } else {
      expect_param("w", {b + 1, n});
    }
  }

  Arch arch() const { return arch_; }
  const ModelOptions& options() const { return opt_; }
  const StftGeometry& geometry() const { return opt_.geometry; }
  std::size_t n_sources() const { return opt_.n_sources; }
  const ParamMap& params() const { return params_; }
  const std::shared_ptr<const StftEngine>& engine() const { return engine_; }

  SeparatorModel with_params(ParamMap params) const { return SeparatorModel(arch_, opt_, std::move(params)); }

 private:
  void expect_param(const std::string& name, const Shape& shape) const {
    auto it = params_.find(name);
    if (it == params_.end()) throw ConfigError("separator is missing parameter '" + name + "'");
    if (it->second.shape() != shape) {
      throw ShapeError("parameter '" + name + "' has shape " + shape_str(it->second.shape()) +
                       ", expected " + shape_str(shape));
    }
  }

  Arch arch_;
  ModelOptions opt_;
  ParamMap params_;
  std::shared_ptr<const StftEngine> engine_;
};

// Random initialization; output-layer bias rows start at zero (masks near 0.5).
inline SeparatorModel make_model(Arch arch, std::uint64_t seed, const ModelOptions& opt = {}) {
  opt.geometry.validate();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  auto init = [&](std::size_t rows, std::size_t cols, double stddev) {
    std::vector<double> v(rows * cols, 0.0);
    for (std::size_t r = 0; r + 1 < rows; ++r)
      for (std::size_t c = 0; c < cols; ++c) v[r * cols + c] = stddev * gauss(rng);
    return Tensor(Shape{rows, cols}, std::move(v));
  };
  const std::size_t b = opt.geometry.bins(), n = opt.n_sources * b;
  ParamMap p;
  if (arch == Arch::mask_mlp) {
    p.emplace("w1", init(b + 1, opt.hidden, 1.0 / std::sqrt(static_cast<double>(b))));
    p.emplace("w2", init(opt.hidden + 1, n, 1.0 / std::sqrt(static_cast<double>(opt.hidden))));
  } else {
    p.emplace("w", init(b + 1, n, 0.1 / std::sqrt(static_cast<double>(b))));
  }
  return SeparatorModel(arch, opt, std::move(p));
}

// Sigmoid masks [frames, n_sources * bins] for the spectrogram tensor `spec`.
inline Tensor mask_logits(const SeparatorModel& m, const ParamMap& params, const Tensor& spec) {
  const std::size_t frames = spec.shape()[0];
  const Tensor ones = Tensor::filled({frames, 1}, 1.0);
  const Tensor feat = concat({log1p(magnitude(spec)), ones}, 1);
  if (m.arch() == Arch::mask_mlp) {
    const Tensor hidden = tanh(matmul(feat, params.at("w1")));
    return matmul(concat({hidden, ones}, 1), params.at("w2"));
  }
  return matmul(feat, params.at("w"));
}

// N estimates, each the length of x. Differentiable in x and in `params`.
inline std::vector<Tensor> forward(const SeparatorModel& m, const ParamMap& params, const Tensor& x) {
  if (x.rank() != 1) throw ShapeError("separator input must be 1-D, got " + shape_str(x.shape()));
  const auto& eng = m.engine();
  const Tensor spec = stft(x, eng);
  const Tensor masks = sigmoid(mask_logits(m, params, spec));
  const std::size_t b = eng->bins();
  std::vector<Tensor> out;
  for (std::size_t i = 0; i < m.n_sources(); ++i) {
    out.push_back(istft(apply_mask(spec, slice(masks, 1, i * b, (i + 1) * b)), eng, x.size()));
  }
  return out;
}

inline std::vector<Tensor> forward(const SeparatorModel& m, const Tensor& x) {
  return forward(m, m.params(), x);
}

inline Tensor to_tensor(const WaveBuffer& w) {
  return Tensor::vector(std::vector<double>(w.samples().begin(), w.samples().end()));
}

inline WaveBuffer to_wave(const Tensor& t, int sample_rate) {
  return WaveBuffer(std::vector<double>(t.values().begin(), t.values().end()), sample_rate);
}

inline std::vector<WaveBuffer> separate(const SeparatorModel& m, const WaveBuffer& x) {
  std::vector<WaveBuffer> out;
  for (const Tensor& e : forward(m, to_tensor(x))) out.push_back(to_wave(e, x.sample_rate()));
  return out;
}

// Squared error summed over sources and samples.
inline Tensor separation_error(const std::vector<Tensor>& estimates, const std::vector<Tensor>& sources) {
  if (estimates.size() != sources.size()) {
    throw ShapeError("separation_error: " + std::to_string(estimates.size()) + " estimates vs " +
                     std::to_string(sources.size()) + " sources");
  }
  std::vector<Tensor> terms;
  for (std::size_t i = 0; i < estimates.size(); ++i) terms.push_back(sum(square(sub(estimates[i], sources[i]))));
  Tensor total = terms.front();
  for (std::size_t i = 1; i < terms.size(); ++i) total = add(total, terms[i]);
  return total;
}

// Per-sample mean of the separation error; the training objective.
inline Tensor mean_separation_error(const std::vector<Tensor>& estimates, const std::vector<Tensor>& sources) {
  const Tensor total = separation_error(estimates, sources);
  return scale(total, 1.0 / static_cast<double>(estimates.size() * estimates.front().size()));
}

// ---------------------------------------------------------------------------
// Training: minibatch gradient descent with a fixed learning rate on the
// per-sample mean squared error. That error is around 1e-4 for a trained
// model, hence the large default step.

struct TrainConfig {
  std::size_t epochs = 60;
  double learning_rate = 2000.0;
  std::size_t batch_size = 4;
  std::uint64_t seed = 1;
  std::size_t jobs = 1;
};

struct TrainResult {
  SeparatorModel model;
  std::vector<double> loss_curve;  // mean item loss per epoch
};

namespace detail {

struct ItemGrad {
  double loss = 0.0;
  std::map<std::string, std::vector<double>> grads;
};

inline ItemGrad item_gradient(const SeparatorModel& m, const SynthTrack& item) {
  Tape tape;
  ParamMap watched;
  for (const auto& [name, t] : m.params()) watched.emplace(name, tape.watch(t));
  std::vector<Tensor> targets;
  for (const auto& s : item.sources) targets.push_back(to_tensor(s));
  const Tensor loss = mean_separation_error(forward(m, watched, to_tensor(item.mixture)), targets);
  const Gradients g = backward(loss);
  ItemGrad out;
  out.loss = loss.item();
  for (const auto& [name, t] : watched) {
    auto v = g.of(t).values();
    out.grads.emplace(name, std::vector<double>(v.begin(), v.end()));
  }
  return out;
}

}  // namespace detail

inline void check_dataset(const std::vector<SynthTrack>& data, std::size_t n_sources) {
  if (data.empty()) throw DomainError("training dataset is empty");
  for (const auto& item : data) {
    if (item.sources.size() != n_sources) {
      throw ShapeError("item " + item.id + " has " + std::to_string(item.sources.size()) +
                       " sources, model separates " + std::to_string(n_sources));
    }
    double peak = 1.0;
    for (double v : item.mixture.samples()) peak = std::max(peak, std::fabs(v));
    for (std::size_t t = 0; t < item.mixture.size(); ++t) {
      double s = 0.0;
      for (const auto& src : item.sources) s += src[t];
      if (std::fabs(s - item.mixture[t]) > 1e-6 * peak) {
        throw DomainError("item " + item.id + ": sources do not sum to the mixture");
      }
    }
  }
}

inline TrainResult train(const SeparatorModel& model, const std::vector<SynthTrack>& data,
                         const TrainConfig& cfg) {
  if (cfg.learning_rate <= 0.0 || cfg.batch_size == 0 || cfg.jobs == 0) {
    throw ConfigError("learning rate, batch size and jobs must be positive");
  }
  check_dataset(data, model.n_sources());
  TrainResult result{model, {}};
  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order(data.size());
  for (std::size_t e = 0; e < cfg.epochs; ++e) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t count = std::min(cfg.batch_size, order.size() - start);
      std::vector<detail::ItemGrad> items(count);
      std::vector<std::string> failures(count);
      auto work = [&](std::size_t lane) {
        for (std::size_t k = lane; k < count; k += cfg.jobs) {
          try {
            items[k] = detail::item_gradient(result.model, data[order[start + k]]);
          } catch (const NumericError& err) {
            failures[k] = err.what();
          }
        }
      };
      if (cfg.jobs == 1 || count == 1) {
        work(0);
      } else {
        std::vector<std::jthread> pool;
        for (std::size_t lane = 0; lane < std::min(cfg.jobs, count); ++lane) pool.emplace_back(work, lane);
      }
      for (const auto& f : failures) {
        if (!f.empty()) throw NumericError("training diverged in epoch " + std::to_string(e) + ": " + f);
      }
      // Reduce in item order so results do not depend on scheduling.
      ParamMap next;
      for (const auto& [name, t] : result.model.params()) {
        std::vector<double> v(t.values().begin(), t.values().end());
        for (const auto& item : items) {
          const auto& g = item.grads.at(name);
          for (std::size_t i = 0; i < v.size(); ++i) v[i] -= cfg.learning_rate * g[i] / static_cast<double>(count);
        }
        if (!all_finite(v)) throw NumericError("training diverged in epoch " + std::to_string(e));
        next.emplace(name, Tensor(t.shape(), std::move(v)));
      }
      for (const auto& item : items) epoch_loss += item.loss;
      result.model = result.model.with_params(std::move(next));
    }
    epoch_loss /= static_cast<double>(data.size());
    if (!std::isfinite(epoch_loss)) throw NumericError("training diverged in epoch " + std::to_string(e));
    result.loss_curve.push_back(epoch_loss);
  }
  return result;
}

// ---------------------------------------------------------------------------
// Checkpoints: JSON document
//   {"format": "amicable-separator", "version": 1, "arch": "mask-mlp",
//    "n_sources": 2, "hidden": 64,
//    "stft": {"window_size": 512, "hop": 256, "window": "hann"},
//    "params": {"w1": {"shape": [258, 64], "data": [...]}, ...}}
// Doubles are written in shortest round-trip form, so a load restores the
// exact parameter bits.

inline constexpr int kCheckpointVersion = 1;

inline nlohmann::json checkpoint_json(const SeparatorModel& m) {
  nlohmann::json j;
  j["format"] = "amicable-separator";
  j["version"] = kCheckpointVersion;
  j["arch"] = to_string(m.arch());
  j["n_sources"] = m.n_sources();
  j["hidden"] = m.options().hidden;
  j["stft"] = {{"window_size", m.geometry().window_size},
               {"hop", m.geometry().hop},
               {"window", to_string(m.geometry().window)}};
  nlohmann::json params = nlohmann::json::object();
  for (const auto& [name, t] : m.params()) {
    params[name] = {{"shape", t.shape()},
                    {"data", std::vector<double>(t.values().begin(), t.values().end())}};
  }
  j["params"] = std::move(params);
  return j;
}

inline SeparatorModel model_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format") != "amicable-separator") throw ConfigError("not a separator checkpoint");
    if (j.at("version").get<int>() != kCheckpointVersion) {
      throw ConfigError("unsupported checkpoint version " + j.at("version").dump());
    }
    ModelOptions opt;
    opt.n_sources = j.at("n_sources").get<std::size_t>();
    opt.hidden = j.at("hidden").get<std::size_t>();
    opt.geometry.window_size = j.at("stft").at("window_size").get<std::size_t>();
    opt.geometry.hop = j.at("stft").at("hop").get<std::size_t>();
    opt.geometry.window = window_from_string(j.at("stft").at("window").get<std::string>());
    opt.geometry.validate();
    ParamMap params;
    for (const auto& [name, p] : j.at("params").items()) {
      params.emplace(name, Tensor(p.at("shape").get<Shape>(), p.at("data").get<std::vector<double>>()));
    }
    return SeparatorModel(arch_from_string(j.at("arch").get<std::string>()), opt, std::move(params));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed checkpoint: ") + e.what());
  }
}

inline void save_checkpoint(const std::filesystem::path& path, const SeparatorModel& m) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError("cannot write checkpoint: " + path.string());
  f << checkpoint_json(m).dump() << '\n';
}

inline SeparatorModel load_checkpoint(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw MissingInputError("checkpoint not found", path.string());
  std::ifstream f(path);
  nlohmann::json j;
  try {
    f >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("checkpoint " + path.string() + " is not valid JSON: " + e.what());
  }
  return model_from_json(j);
}

}  // namespace amicable
