#pragma once

// Amicable / adversarial perturbation of a mixture against frozen separators.
//
//   C(nu)  = sum_n ||nu_n||_2 / (||x_n||_2 + floor)       patches of length l
//   L(nu)  = sum_i alpha_i * d(f_i(x + nu), y) + lambda * C(nu)
//
// d is the separation error: squared error summed over sources and samples.
// Both d and C grow linearly with the clip length, so lambda does not depend on it.
// alpha_i > 0 makes nu amicable for model i, alpha_i < 0 adversarial. The
// perturbation starts as uniform noise in [-epsilon, epsilon] and is refined
// with Adam; there is no projection onto an epsilon ball.

#include <cmath>
#include <cstdint>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "amicable/error.hpp"
#include "amicable/metrics.hpp"
#include "amicable/separator.hpp"
#include "amicable/tensor.hpp"
#include "amicable/wave.hpp"

namespace amicable {

inline constexpr std::size_t kDefaultPatchLen = 256;
inline constexpr double kStprFloorScale = 1e-8;

// ---------------------------------------------------------------------------
// STPR

// L2 norm of each length-l patch of a 1-D tensor; the tail patch is zero-padded.
// The gradient of a zero-norm patch is taken as 0.
inline Tensor patch_norms(const Tensor& v, std::size_t patch_len) {
  if (v.rank() != 1) throw ShapeError("patch_norms expects a 1-D tensor, got " + shape_str(v.shape()));
  if (patch_len == 0) throw DomainError("patch length must be positive");
  const std::size_t n = v.size();
  const std::size_t patches = (n + patch_len - 1) / patch_len;
  auto vd = v.storage();
  std::vector<double> out(patches, 0.0);
  for (std::size_t t = 0; t < n; ++t) out[t / patch_len] += (*vd)[t] * (*vd)[t];
  for (double& x : out) x = std::sqrt(x);
  auto od = std::make_shared<const std::vector<double>>(out);
  return record("patch_norms", Shape{patches}, std::move(out), {&v},
                [vd, od, patch_len](std::span<const double> g, std::span<std::vector<double>* const> pg) {
                  auto& gv = *pg[0];
                  for (std::size_t t = 0; t < gv.size(); ++t) {
                    const double norm = (*od)[t / patch_len];
                    if (norm > 0.0) gv[t] += g[t / patch_len] * (*vd)[t] / norm;
                  }
                });
}

// Per-patch denominators ||x_n|| + floor, floor = 1e-8 * RMS(x) * sqrt(l).
inline std::vector<double> stpr_denominators(std::span<const double> x, std::size_t patch_len, bool use_floor) {
  if (patch_len == 0) throw DomainError("patch length must be positive");
  const Tensor norms = patch_norms(Tensor::vector(std::vector<double>(x.begin(), x.end())), patch_len);
  double energy = 0.0;
  for (double s : x) energy += s * s;
  if (energy == 0.0) throw DomainError("stpr: mixture is identically zero");
  const double floor = use_floor ? kStprFloorScale * std::sqrt(energy / static_cast<double>(x.size())) *
                                       std::sqrt(static_cast<double>(patch_len))
                                 : 0.0;
  std::vector<double> den(norms.values().begin(), norms.values().end());
  for (std::size_t i = 0; i < den.size(); ++i) {
    den[i] += floor;
    if (den[i] == 0.0) {
      throw DomainError("stpr: mixture patch " + std::to_string(i) + " is silent and the floor is disabled");
    }
  }
  return den;
}

// Differentiable in nu.
inline Tensor stpr(const Tensor& nu, std::span<const double> x, std::size_t patch_len, bool use_floor = true) {
  if (nu.size() != x.size()) {
    throw ShapeError("stpr: perturbation length " + std::to_string(nu.size()) + " vs mixture length " +
                     std::to_string(x.size()));
  }
  std::vector<double> inv = stpr_denominators(x, patch_len, use_floor);
  for (double& d : inv) d = 1.0 / d;
  return sum(mul(patch_norms(nu, patch_len), Tensor::vector(std::move(inv))));
}

inline double stpr(const WaveBuffer& nu, const WaveBuffer& x, std::size_t patch_len, bool use_floor = true) {
  return stpr(to_tensor(nu), x.samples(), patch_len, use_floor).item();
}

// ---------------------------------------------------------------------------
// Losses

inline std::vector<Tensor> source_tensors(const std::vector<WaveBuffer>& y) {
  std::vector<Tensor> out;
  for (const auto& s : y) out.push_back(to_tensor(s));
  return out;
}

// d(f(x + nu), y) for one model.
inline Tensor separation_term(const SeparatorModel& model, const Tensor& x, const std::vector<Tensor>& y,
                              const Tensor& nu) {
  return separation_error(forward(model, add(x, nu)), y);
}

inline Tensor amicable_loss(const SeparatorModel& model, const WaveBuffer& x, const std::vector<WaveBuffer>& y,
                            const Tensor& nu, double lambda, std::size_t patch_len) {
  const Tensor xt = to_tensor(x);
  Tensor sep;
  try {
    sep = separation_term(model, xt, source_tensors(y), nu);
  } catch (const NumericError& e) {
    throw NumericError(std::string("amicable loss: non-finite separator output: ") + e.what());
  }
  return add(sep, scale(stpr(nu, x.samples(), patch_len), lambda));
}

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct PerturbJob {
  std::vector<std::shared_ptr<const SeparatorModel>> models;
  std::vector<double> alphas;
  double lambda = 0.1;
  double epsilon = 0.01;
  std::size_t iterations = 300;
  std::size_t patch_len = kDefaultPatchLen;
  std::uint64_t seed = 0;
  AdamConfig adam;

  void validate(std::size_t signal_length) const {
    if (models.empty()) throw ConfigError("perturbation job needs at least one model");
    if (models.size() != alphas.size()) {
      throw ConfigError("perturbation job has " + std::to_string(models.size()) + " models but " +
                        std::to_string(alphas.size()) + " alpha weights");
    }
    for (const auto& m : models) {
      if (!m) throw ConfigError("perturbation job holds a null model");
    }
    if (!(lambda >= 0.0)) throw ConfigError("lambda must be >= 0");
    if (!(epsilon >= 0.0)) throw ConfigError("epsilon must be >= 0");
    if (iterations == 0) throw ConfigError("iterations must be positive");
    if (patch_len == 0 || patch_len > signal_length) {
      throw ConfigError("patch length must be in [1, " + std::to_string(signal_length) + "]");
    }
  }

  // Models the perturbation should help (alpha > 0).
  std::vector<std::size_t> amicable_targets() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < alphas.size(); ++i)
      if (alphas[i] > 0) out.push_back(i);
    return out;
  }

  // Models the perturbation should hurt (alpha < 0).
  std::vector<std::size_t> adversarial_targets() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < alphas.size(); ++i)
      if (alphas[i] < 0) out.push_back(i);
    return out;
  }
};

inline Tensor mmpl_loss(const PerturbJob& job, const WaveBuffer& x, const std::vector<WaveBuffer>& y,
                        const Tensor& nu) {
  if (job.models.size() != job.alphas.size()) {
    throw ConfigError("mmpl loss: " + std::to_string(job.models.size()) + " models vs " +
                      std::to_string(job.alphas.size()) + " alphas");
  }
  const Tensor xt = to_tensor(x);
  const std::vector<Tensor> yt = source_tensors(y);
  Tensor total = scale(stpr(nu, x.samples(), job.patch_len), job.lambda);
  for (std::size_t i = 0; i < job.models.size(); ++i) {
    if (job.alphas[i] == 0.0) continue;
    try {
      total = add(total, scale(separation_term(*job.models[i], xt, yt, nu), job.alphas[i]));
    } catch (const NumericError& e) {
      throw NumericError("mmpl loss: model " + std::to_string(i) + " produced a non-finite value: " + e.what());
    }
  }
  return total;
}

// ---------------------------------------------------------------------------
// Adam

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::size_t t = 0;

  explicit AdamState(std::size_t n = 0) : m(n, 0.0), v(n, 0.0) {}
};

// Returns the additive update for the parameters.
inline std::vector<double> adam_step(AdamState& state, std::span<const double> grad, const AdamConfig& cfg) {
  if (state.m.size() != grad.size()) {
    throw ShapeError("adam_step: state holds " + std::to_string(state.m.size()) + " values, gradient has " +
                     std::to_string(grad.size()));
  }
  ++state.t;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
  std::vector<double> delta(grad.size());
  for (std::size_t i = 0; i < grad.size(); ++i) {
    state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * grad[i];
    state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
    const double m_hat = state.m[i] / c1;
    const double v_hat = state.v[i] / c2;
    delta[i] = -cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.eps);
  }
  return delta;
}

// ---------------------------------------------------------------------------
// Optimization

struct PerturbResult {
  WaveBuffer nu{std::vector<double>{0.0}, 1};
  std::vector<double> loss_trace;  // loss before each Adam step
  double final_loss = 0.0;         // loss at the returned nu
  double stpr = 0.0;
  double di_sdr = 0.0;
  bool converged = true;           // final_loss <= loss_trace.front()
  std::vector<std::string> warnings;
};

inline PerturbResult optimize(const PerturbJob& job, const WaveBuffer& x, const std::vector<WaveBuffer>& y) {
  job.validate(x.size());
  PerturbResult result;
  for (const auto& s : y) {
    if (s.size() != x.size()) throw ShapeError("source length does not match mixture length");
  }
  double mismatch = 0.0;
  for (std::size_t t = 0; t < x.size(); ++t) {
    double s = 0.0;
    for (const auto& src : y) s += src[t];
    mismatch = std::max(mismatch, std::fabs(s - x[t]));
  }
  if (mismatch > 1e-6) {
    result.warnings.push_back("sources differ from the mixture by up to " + std::to_string(mismatch));
  }

  std::mt19937_64 rng(job.seed);
  std::uniform_real_distribution<double> init(-job.epsilon, job.epsilon);
  std::vector<double> nu(x.size());
  for (double& v : nu) v = init(rng);

  AdamState state(nu.size());
  auto evaluate = [&](std::size_t iteration) {
    Tape tape;
    const Tensor nu_t = tape.watch(Tensor::vector(nu));
    Tensor loss;
    try {
      loss = mmpl_loss(job, x, y, nu_t);
    } catch (const NumericError& e) {
      throw DivergenceError(std::string("perturbation loss is not finite (") + e.what() + ")", iteration);
    }
    if (!std::isfinite(loss.item())) throw DivergenceError("perturbation loss is not finite", iteration);
    auto g = backward(loss).of(nu_t);
    return std::pair{loss.item(), std::vector<double>(g.values().begin(), g.values().end())};
  };

  for (std::size_t it = 0; it < job.iterations; ++it) {
    auto [loss, grad] = evaluate(it);
    result.loss_trace.push_back(loss);
    const std::vector<double> delta = adam_step(state, grad, job.adam);
    for (std::size_t i = 0; i < nu.size(); ++i) nu[i] += delta[i];
  }
  {
    const Tensor final_loss = mmpl_loss(job, x, y, Tensor::vector(nu));
    if (!std::isfinite(final_loss.item())) throw DivergenceError("perturbation loss is not finite", job.iterations);
    result.final_loss = final_loss.item();
  }
  result.converged = result.final_loss <= result.loss_trace.front();
  result.nu = WaveBuffer(std::move(nu), x.sample_rate());
  result.stpr = stpr(result.nu, x, job.patch_len);
  result.di_sdr = di_sdr(x, result.nu);
  return result;
}

}  // namespace amicable
