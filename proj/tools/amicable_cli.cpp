// amicable: command-line driver for corpus generation, training and the
// perturbation experiments. See README.md for usage.

#include <functional>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "amicable/experiments.hpp"
#include "amicable/runtime.hpp"

namespace {

using amicable::RunConfig;
using Setter = std::function<void(RunConfig&)>;

// Registers --name on `app`; when given, its value is applied to the config
// after the config file, so flags win.
template <typename T>
void flag(CLI::App& app, std::vector<Setter>& setters, const std::string& name, const std::string& help,
          std::function<void(RunConfig&, const T&)> apply) {
  auto value = std::make_shared<T>();
  CLI::Option* opt = app.add_option(name, *value, help);
  setters.push_back([opt, value, apply](RunConfig& c) {
    if (opt->count() > 0) apply(c, *value);
  });
}

int run(int argc, char** argv) {
  CLI::App app{"Amicable-example perturbations for informed source separation", "amicable"};
  app.set_version_flag("--version", std::string(amicable::kVersion));
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  app.add_option("--config", config_path, "JSON config file; flags override its keys")->check(CLI::ExistingFile);
  std::vector<Setter> s;
  using P = std::filesystem::path;
  flag<std::string>(app, s, "--out", "output directory (must not exist)", [](RunConfig& c, const std::string& v) { c.out = v; });
  flag<std::uint64_t>(app, s, "--seed", "master seed", [](RunConfig& c, const std::uint64_t& v) { c.seed = v; });
  flag<std::size_t>(app, s, "--jobs", "worker threads over tracks", [](RunConfig& c, const std::size_t& v) { c.jobs = v; });
  flag<std::string>(app, s, "--corpus", "corpus directory", [](RunConfig& c, const std::string& v) { c.corpus = v; });
  flag<std::vector<std::string>>(app, s, "--checkpoint", "model checkpoint (repeat for several models)",
                                 [](RunConfig& c, const std::vector<std::string>& v) {
                                   c.checkpoints.assign(v.begin(), v.end());
                                 });
  flag<std::string>(app, s, "--perturbations", "eval: output directory of a perturb run",
                    [](RunConfig& c, const std::string& v) { c.perturbations = P(v); });
  flag<std::string>(app, s, "--split", "gen: eval or train", [](RunConfig& c, const std::string& v) { c.split = v; });
  flag<std::size_t>(app, s, "--n-tracks", "gen: number of tracks", [](RunConfig& c, const std::size_t& v) { c.n_tracks = v; });
  flag<std::uint64_t>(app, s, "--base-seed", "gen: seed of the first track (0: split default)",
                      [](RunConfig& c, const std::uint64_t& v) { c.base_seed = v; });
  flag<double>(app, s, "--duration", "gen: seconds per track (0: split default)",
               [](RunConfig& c, const double& v) { c.duration = v; });
  flag<int>(app, s, "--sample-rate", "gen: sample rate in Hz", [](RunConfig& c, const int& v) { c.sample_rate = v; });
  flag<std::size_t>(app, s, "--n-sources", "gen: sources per track", [](RunConfig& c, const std::size_t& v) { c.n_sources = v; });
  flag<std::string>(app, s, "--arch", "train: mask-mlp or mask-linear", [](RunConfig& c, const std::string& v) { c.arch = v; });
  flag<std::size_t>(app, s, "--epochs", "train: epochs", [](RunConfig& c, const std::size_t& v) { c.epochs = v; });
  flag<double>(app, s, "--learning-rate", "train: SGD step", [](RunConfig& c, const double& v) { c.learning_rate = v; });
  flag<std::size_t>(app, s, "--batch-size", "train: tracks per step", [](RunConfig& c, const std::size_t& v) { c.batch_size = v; });
  flag<std::size_t>(app, s, "--hidden", "train: hidden units of mask-mlp", [](RunConfig& c, const std::size_t& v) { c.hidden = v; });
  flag<std::vector<double>>(app, s, "--lambda", "STPR weight; sweep-lambda takes several",
                            [](RunConfig& c, const std::vector<double>& v) {
                              c.lambda = v.front();
                              c.lambdas = v;
                            });
  flag<std::vector<double>>(app, s, "--alphas", "per-model weights, e.g. --alphas 1 -1",
                            [](RunConfig& c, const std::vector<double>& v) { c.alphas = v; });
  flag<std::size_t>(app, s, "--iterations", "Adam iterations", [](RunConfig& c, const std::size_t& v) { c.iterations = v; });
  flag<std::size_t>(app, s, "--patch-len", "STPR patch length", [](RunConfig& c, const std::size_t& v) { c.patch_len = v; });
  flag<double>(app, s, "--epsilon", "initial perturbation bound", [](RunConfig& c, const double& v) { c.epsilon = v; });
  flag<std::vector<std::string>>(app, s, "--proxy", "robustness: proxy such as quantize-bits:12 or mdct-topk:0.25",
                                 [](RunConfig& c, const std::vector<std::string>& v) { c.proxies = v; });

  const std::vector<std::pair<std::string, std::string>> commands{
      {"gen", "generate a synthetic corpus"},
      {"train", "train a separator on a corpus"},
      {"perturb", "optimize amicable perturbations and score every checkpoint"},
      {"eval", "score checkpoints on a corpus, optionally with stored perturbations"},
      {"sweep-lambda", "perturb over a lambda grid"},
      {"selectivity", "perturb for the first checkpoint, score all"},
      {"mmpl", "perturb against all checkpoints with signed weights"},
      {"robustness", "perturb, then score through compression proxies"}};
  for (const auto& [name, help] : commands) app.add_subcommand(name, help);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  RunConfig cfg = config_path.empty() ? RunConfig{} : amicable::load_config(config_path);
  for (const auto& set : s) set(cfg);
  const std::string command = app.get_subcommands().front()->get_name();
  amicable::run_command(command, cfg);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  amicable::tune_allocator();
  try {
    return run(argc, argv);
  } catch (const amicable::MissingInputError& e) {
    amicable::log::error(e.what());
    return 2;
  } catch (const amicable::NumericError& e) {
    amicable::log::error(e.what());
    return 3;
  } catch (const std::exception& e) {
    amicable::log::error(e.what());
    return 1;
  }
}
