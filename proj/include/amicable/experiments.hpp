#pragma once

// Experiment drivers behind the CLI subcommands. Each run_* function takes a
// RunConfig, writes its reports into a staged output directory and returns
// the summary document it wrote.
//
// Perturbation experiments share one long-format CSV (report.csv):
//   experiment,model,checkpoint,arch,track,source,lambda,alphas,proxy,
//   di_sdr,sdr_before,sdr_after,delta_sdr
// one row per model x track x source (x lambda or proxy where swept).
// summary.json holds the effective config, a reproducibility stanza and
// per-group aggregates; a group is one (model, lambda, proxy) combination.
// "delta_sdr_median" is the median over tracks of the per-track mean over
// sources; "delta_sdr_avg" is the mean of the per-source medians.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "amicable/corpus.hpp"
#include "amicable/datagen.hpp"
#include "amicable/error.hpp"
#include "amicable/log.hpp"
#include "amicable/metrics.hpp"
#include "amicable/parallel.hpp"
#include "amicable/perturb.hpp"
#include "amicable/report.hpp"
#include "amicable/robustness.hpp"
#include "amicable/separator.hpp"
#include "amicable/wave.hpp"

namespace amicable {

struct RunConfig {
  std::filesystem::path out;
  std::uint64_t seed = 1;
  std::size_t jobs = 1;

  // inputs
  std::filesystem::path corpus;
  std::vector<std::filesystem::path> checkpoints;
  std::filesystem::path perturbations;  // eval: output dir of a perturb run

  // gen
  std::string split = "eval";
  std::size_t n_tracks = 10;
  std::uint64_t base_seed = 0;  // 0: split default
  double duration = 0.0;        // 0: split default (eval 10 s, train 5 s)
  int sample_rate = 8000;
  std::size_t n_sources = 2;

  // train
  std::string arch = "mask-mlp";
  std::size_t epochs = 60;
  double learning_rate = 2000.0;
  std::size_t batch_size = 4;
  std::size_t hidden = 64;
  std::size_t window_size = 512;
  std::size_t hop = 256;

  // perturbation
  double lambda = 0.1;
  std::vector<double> lambdas{0.01, 0.03, 0.1, 0.3, 1.0};
  std::vector<double> alphas;  // empty: +1 for every model
  std::size_t iterations = 300;
  std::size_t patch_len = kDefaultPatchLen;
  double epsilon = 0.01;
  double adam_lr = 1e-3;

  // robustness
  std::vector<std::string> proxies{"quantize-bits:16", "quantize-bits:12", "quantize-bits:8", "quantize-bits:4"};
};

inline const std::vector<std::string>& command_names() {
  static const std::vector<std::string> names{"gen",         "train",       "perturb", "eval",
                                              "sweep-lambda", "selectivity", "mmpl",    "robustness"};
  return names;
}

// ---------------------------------------------------------------------------
// Config file

namespace detail {

inline std::vector<std::string> path_strings(const std::vector<std::filesystem::path>& ps) {
  std::vector<std::string> out;
  for (const auto& p : ps) out.push_back(p.string());
  return out;
}

}  // namespace detail

// Everything that influences results; `out` and `jobs` are excluded, so
// re-running elsewhere or with more threads keeps the same hash.
inline nlohmann::json config_json(const RunConfig& c) {
  return {{"seed", c.seed},
          {"corpus", c.corpus.string()},
          {"checkpoints", detail::path_strings(c.checkpoints)},
          {"perturbations", c.perturbations.string()},
          {"split", c.split},
          {"n_tracks", c.n_tracks},
          {"base_seed", c.base_seed},
          {"duration", c.duration},
          {"sample_rate", c.sample_rate},
          {"n_sources", c.n_sources},
          {"arch", c.arch},
          {"epochs", c.epochs},
          {"learning_rate", c.learning_rate},
          {"batch_size", c.batch_size},
          {"hidden", c.hidden},
          {"window_size", c.window_size},
          {"hop", c.hop},
          {"lambda", c.lambda},
          {"lambdas", c.lambdas},
          {"alphas", c.alphas},
          {"iterations", c.iterations},
          {"patch_len", c.patch_len},
          {"epsilon", c.epsilon},
          {"adam_lr", c.adam_lr},
          {"proxies", c.proxies}};
}

// Applies the keys present in `j` on top of `c`. Unknown keys are errors so
// that typos do not silently fall back to defaults.
inline void apply_config(RunConfig& c, const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  static const std::set<std::string> known = [] {
    std::set<std::string> k{"out", "jobs"};
    const nlohmann::json defaults = config_json(RunConfig{});
    for (const auto& [key, _] : defaults.items()) k.insert(key);
    return k;
  }();
  for (const auto& [key, _] : j.items()) {
    if (!known.contains(key)) throw ConfigError("unknown config key '" + key + "'");
  }
  try {
    auto get = [&](const char* key, auto& field) {
      if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
    };
    auto get_path = [&](const char* key, std::filesystem::path& field) {
      if (j.contains(key)) field = j.at(key).get<std::string>();
    };
    get_path("out", c.out);
    get("jobs", c.jobs);
    get("seed", c.seed);
    get_path("corpus", c.corpus);
    if (j.contains("checkpoints")) {
      c.checkpoints.clear();
      for (const auto& p : j.at("checkpoints")) c.checkpoints.emplace_back(p.get<std::string>());
    }
    get_path("perturbations", c.perturbations);
    get("split", c.split);
    get("n_tracks", c.n_tracks);
    get("base_seed", c.base_seed);
    get("duration", c.duration);
    get("sample_rate", c.sample_rate);
    get("n_sources", c.n_sources);
    get("arch", c.arch);
    get("epochs", c.epochs);
    get("learning_rate", c.learning_rate);
    get("batch_size", c.batch_size);
    get("hidden", c.hidden);
    get("window_size", c.window_size);
    get("hop", c.hop);
    get("lambda", c.lambda);
    get("lambdas", c.lambdas);
    get("alphas", c.alphas);
    get("iterations", c.iterations);
    get("patch_len", c.patch_len);
    get("epsilon", c.epsilon);
    get("adam_lr", c.adam_lr);
    get("proxies", c.proxies);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad config value: ") + e.what());
  }
}

inline RunConfig load_config(const std::filesystem::path& path) {
  RunConfig c;
  apply_config(c, read_json(path));
  return c;
}

// ---------------------------------------------------------------------------
// Shared pieces

namespace detail {

inline nlohmann::json reproducibility(const std::string& command, const RunConfig& c, const nlohmann::json& seeds) {
  const nlohmann::json cfg = config_json(c);
  return {{"command", command},
          {"version", kVersion},
          {"config_hash", hex64(fnv1a64(command + "\n" + cfg.dump()))},
          {"seeds", seeds}};
}

// Per-track perturbation seed derived from the master seed and the track seed.
inline std::uint64_t job_seed(std::uint64_t master, std::uint64_t track_seed) {
  std::uint64_t h = fnv1a64(std::to_string(master) + ":" + std::to_string(track_seed));
  return h;
}

struct LoadedModel {
  std::string label;       // model1, model2, ...
  std::string checkpoint;  // file name only
  std::shared_ptr<const SeparatorModel> model;
};

inline std::vector<LoadedModel> load_models(const RunConfig& c, std::size_t min_count) {
  if (c.checkpoints.size() < min_count) {
    throw ConfigError("this command needs at least " + std::to_string(min_count) + " checkpoint(s) (--checkpoint)");
  }
  std::vector<LoadedModel> out;
  for (std::size_t i = 0; i < c.checkpoints.size(); ++i) {
    out.push_back({"model" + std::to_string(i + 1), c.checkpoints[i].filename().string(),
                   std::make_shared<const SeparatorModel>(load_checkpoint(c.checkpoints[i]))});
  }
  return out;
}

inline std::vector<SynthTrack> load_tracks(const RunConfig& c) {
  if (c.corpus.empty()) throw ConfigError("no corpus given (--corpus)");
  return load_corpus(c.corpus);
}

inline std::string join(const std::vector<double>& v, char sep = ';') {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += sep;
    s += format_double(v[i]);
  }
  return s;
}

inline WaveBuffer add_waves(const WaveBuffer& x, const WaveBuffer& nu) {
  std::vector<double> v(x.samples().begin(), x.samples().end());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] += nu[i];
  return WaveBuffer(std::move(v), x.sample_rate());
}

inline std::vector<double> source_sdrs(const SeparatorModel& m, const WaveBuffer& input,
                                       const std::vector<WaveBuffer>& y) {
  const auto est = separate(m, input);
  std::vector<double> out;
  for (std::size_t i = 0; i < y.size(); ++i) out.push_back(sdr(y[i], est[i]));
  return out;
}

struct Row {
  std::string model, checkpoint, arch, track;
  std::size_t source = 1;  // 1-based
  double lambda = 0.0;
  std::string alphas, proxy = "none";
  double di_sdr = kSdrCap, sdr_before = 0.0, sdr_after = 0.0;
  double delta() const { return sdr_after - sdr_before; }
};

inline CsvTable rows_table(const std::string& experiment, const std::vector<Row>& rows) {
  CsvTable t({"experiment", "model", "checkpoint", "arch", "track", "source", "lambda", "alphas", "proxy", "di_sdr",
              "sdr_before", "sdr_after", "delta_sdr"});
  for (const auto& r : rows) {
    t.add({experiment, r.model, r.checkpoint, r.arch, r.track, std::to_string(r.source), format_double(r.lambda),
           r.alphas, r.proxy, format_double(r.di_sdr), format_double(r.sdr_before), format_double(r.sdr_after),
           format_double(r.delta())});
  }
  return t;
}

struct Group {
  std::string model, checkpoint, proxy;
  double lambda = 0.0;
  std::vector<std::string> tracks;                          // in first-seen order
  std::map<std::string, std::vector<const Row*>> by_track;  // track -> rows (one per source)
};

inline std::vector<Group> group_rows(const std::vector<Row>& rows) {
  std::vector<Group> groups;
  for (const auto& r : rows) {
    auto it = std::find_if(groups.begin(), groups.end(), [&](const Group& g) {
      return g.model == r.model && g.proxy == r.proxy && g.lambda == r.lambda;
    });
    if (it == groups.end()) {
      groups.push_back({r.model, r.checkpoint, r.proxy, r.lambda, {}, {}});
      it = std::prev(groups.end());
    }
    if (!it->by_track.contains(r.track)) it->tracks.push_back(r.track);
    it->by_track[r.track].push_back(&r);
  }
  return groups;
}

inline nlohmann::json summarize_group(const Group& g) {
  std::vector<double> di, per_track_delta;
  std::vector<std::vector<double>> before, after, delta;  // [source][track]
  std::size_t positive = 0;
  for (const auto& id : g.tracks) {
    const auto& rs = g.by_track.at(id);
    di.push_back(rs.front()->di_sdr);
    double sum = 0.0;
    for (const Row* r : rs) {
      const std::size_t s = r->source - 1;
      if (before.size() <= s) {
        before.resize(s + 1);
        after.resize(s + 1);
        delta.resize(s + 1);
      }
      before[s].push_back(r->sdr_before);
      after[s].push_back(r->sdr_after);
      delta[s].push_back(r->delta());
      sum += r->delta();
    }
    per_track_delta.push_back(sum / static_cast<double>(rs.size()));
    if (per_track_delta.back() > 0.0) ++positive;
  }
  std::vector<double> before_med, after_med, delta_med, all;
  for (std::size_t s = 0; s < delta.size(); ++s) {
    before_med.push_back(median(before[s]));
    after_med.push_back(median(after[s]));
    delta_med.push_back(median(delta[s]));
    all.insert(all.end(), delta[s].begin(), delta[s].end());
  }
  return {{"model", g.model},
          {"checkpoint", g.checkpoint},
          {"lambda", g.lambda},
          {"proxy", g.proxy},
          {"n_tracks", g.tracks.size()},
          {"di_sdr_median", median(di)},
          {"sdr_before_source_median", before_med},
          {"sdr_after_source_median", after_med},
          {"sdr_before_avg", mean(before_med)},
          {"sdr_after_avg", mean(after_med)},
          {"delta_sdr_source_median", delta_med},
          {"delta_sdr_avg", mean(delta_med)},
          {"delta_sdr_median", median(per_track_delta)},
          {"delta_sdr_mean", mean(all)},
          {"positive_tracks", positive}};
}

inline nlohmann::json summarize(const std::vector<Row>& rows) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& g : group_rows(rows)) out.push_back(summarize_group(g));
  return out;
}

// Wide per-track table: track, di_sdr, delta_sdr_<model>... and a final median row.
inline CsvTable delta_table(const std::vector<Row>& rows, const std::vector<LoadedModel>& models) {
  std::vector<std::string> header{"track", "di_sdr"};
  for (const auto& m : models) header.push_back("delta_sdr_" + m.label);
  CsvTable t(header);
  const auto groups = group_rows(rows);
  std::vector<double> di;
  std::vector<std::vector<double>> cols(models.size());
  for (const auto& id : groups.front().tracks) {
    std::vector<std::string> row{id};
    di.push_back(groups.front().by_track.at(id).front()->di_sdr);
    row.push_back(format_double(di.back()));
    for (std::size_t m = 0; m < models.size(); ++m) {
      const auto g = std::find_if(groups.begin(), groups.end(), [&](const Group& x) { return x.model == models[m].label; });
      double sum = 0.0;
      const auto& rs = g->by_track.at(id);
      for (const Row* r : rs) sum += r->delta();
      cols[m].push_back(sum / static_cast<double>(rs.size()));
      row.push_back(format_double(cols[m].back()));
    }
    t.add(row);
  }
  std::vector<std::string> med{"median", format_double(median(di))};
  for (const auto& c : cols) med.push_back(format_double(median(c)));
  t.add(med);
  return t;
}

struct TrackRun {
  std::string track;
  std::uint64_t seed = 0;
  PerturbResult result;
  std::vector<Row> rows;
};

// Optimizes one perturbation per track against `targets` with weights
// `alphas`, then scores every model in `scored` before and after.
inline std::vector<TrackRun> perturb_tracks(const RunConfig& c, const std::vector<SynthTrack>& tracks,
                                            const std::vector<LoadedModel>& targets,
                                            const std::vector<double>& alphas, double lambda,
                                            const std::vector<LoadedModel>& scored, const std::string& tag) {
  PerturbJob base;
  for (const auto& t : targets) base.models.push_back(t.model);
  base.alphas = alphas;
  base.lambda = lambda;
  base.iterations = c.iterations;
  base.patch_len = c.patch_len;
  base.epsilon = c.epsilon;
  base.adam.lr = c.adam_lr;
  base.validate(tracks.front().mixture.size());
  const std::string alpha_text = join(alphas);

  return parallel_map<TrackRun>(tracks.size(), c.jobs, [&](std::size_t k) {
    const SynthTrack& t = tracks[k];
    PerturbJob job = base;
    job.seed = job_seed(c.seed, t.seed);
    TrackRun run{t.id, job.seed, optimize(job, t.mixture, t.sources), {}};
    for (const auto& w : run.result.warnings) log::info(tag, " ", t.id, ": warning: ", w);
    const WaveBuffer perturbed = add_waves(t.mixture, run.result.nu);
    std::ostringstream msg;
    msg << tag << " " << t.id << ": DI-SDR " << run.result.di_sdr << " dB";
    for (const auto& m : scored) {
      const auto before = source_sdrs(*m.model, t.mixture, t.sources);
      const auto after = source_sdrs(*m.model, perturbed, t.sources);
      double d = 0.0;
      for (std::size_t s = 0; s < before.size(); ++s) {
        run.rows.push_back({m.label, m.checkpoint, to_string(m.model->arch()), t.id, s + 1, lambda, alpha_text, "none",
                            run.result.di_sdr, before[s], after[s]});
        d += after[s] - before[s];
      }
      msg << ", " << m.label << " dSDR " << d / static_cast<double>(before.size());
    }
    log::info(msg.str());
    return run;
  });
}

inline nlohmann::json track_seeds(const std::vector<TrackRun>& runs) {
  nlohmann::json s = nlohmann::json::object();
  for (const auto& r : runs) s[r.track] = r.seed;
  return s;
}

inline void write_perturbations(const std::filesystem::path& dir, const std::vector<TrackRun>& runs,
                                const RunConfig& c, double lambda, const std::vector<double>& alphas) {
  std::filesystem::create_directories(dir);
  for (const auto& r : runs) {
    wav_write(dir / (r.track + ".wav"), r.result.nu, WavEncoding::float32);
    nlohmann::json side{{"track", r.track},
                        {"seed", r.seed},
                        {"loss_trace", r.result.loss_trace},
                        {"final_loss", r.result.final_loss},
                        {"converged", r.result.converged},
                        {"stpr", r.result.stpr},
                        {"di_sdr", r.result.di_sdr},
                        {"warnings", r.result.warnings},
                        {"job_config",
                         {{"lambda", lambda},
                          {"alphas", alphas},
                          {"epsilon", c.epsilon},
                          {"iterations", c.iterations},
                          {"patch_len", c.patch_len},
                          {"adam", {{"lr", c.adam_lr}, {"beta1", 0.9}, {"beta2", 0.999}, {"eps", 1e-8}}}}}};
    write_json(dir / (r.track + ".json"), side);
  }
}

inline std::vector<Row> collect_rows(const std::vector<TrackRun>& runs) {
  std::vector<Row> rows;
  for (const auto& r : runs) rows.insert(rows.end(), r.rows.begin(), r.rows.end());
  return rows;
}

inline std::vector<double> resolve_alphas(const RunConfig& c, std::size_t n_models) {
  if (c.alphas.empty()) return std::vector<double>(n_models, 1.0);
  if (c.alphas.size() != n_models) {
    throw ConfigError(std::to_string(n_models) + " checkpoints but " + std::to_string(c.alphas.size()) +
                      " alpha weights");
  }
  return c.alphas;
}

inline nlohmann::json finish(StagedDir& dir, const std::string& command, const RunConfig& c,
                             const nlohmann::json& seeds, nlohmann::json body) {
  body["experiment"] = command;
  body["config"] = config_json(c);
  body["reproducibility"] = reproducibility(command, c, seeds);
  write_json(dir.path() / "summary.json", body);
  dir.commit();
  log::info(command, ": wrote ", dir.target().string());
  return body;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Commands

inline nlohmann::json run_gen(const RunConfig& c) {
  CorpusInfo info;
  if (c.split != "eval" && c.split != "train") throw ConfigError("split must be eval or train, got '" + c.split + "'");
  info.split = c.split;
  info.base_seed = c.base_seed ? c.base_seed : (c.split == "train" ? kTrainSeedBase : kEvalSeedBase);
  info.options.duration = c.duration > 0.0 ? c.duration : (c.split == "train" ? 5.0 : 10.0);
  info.options.sample_rate = c.sample_rate;
  info.options.n_sources = c.n_sources;
  StagedDir dir(c.out);
  const auto tracks = parallel_map<SynthTrack>(c.n_tracks, c.jobs, [&](std::size_t k) {
    return gen_track(info.base_seed + k, info.options);
  });
  if (tracks.empty()) throw DomainError("corpus needs at least one track");
  const auto manifest = write_corpus(dir.path(), tracks, info);
  nlohmann::json seeds = {{"base_seed", info.base_seed}};
  return detail::finish(dir, "gen", c, seeds, {{"manifest", manifest}});
}

inline nlohmann::json run_train(const RunConfig& c) {
  const auto data = detail::load_tracks(c);
  ModelOptions opt;
  opt.geometry = {c.window_size, c.hop, WindowKind::hann};
  opt.n_sources = data.front().sources.size();
  opt.hidden = c.hidden;
  TrainConfig tc;
  tc.epochs = c.epochs;
  tc.learning_rate = c.learning_rate;
  tc.batch_size = c.batch_size;
  tc.seed = c.seed;
  tc.jobs = c.jobs;
  StagedDir dir(c.out);
  log::info("train: ", c.arch, " on ", data.size(), " tracks for ", c.epochs, " epochs");
  const auto result = train(make_model(arch_from_string(c.arch), c.seed, opt), data, tc);
  save_checkpoint(dir.path() / "model.json", result.model);
  CsvTable curve({"epoch", "loss"});
  for (std::size_t e = 0; e < result.loss_curve.size(); ++e) {
    curve.add({std::to_string(e), format_double(result.loss_curve[e])});
  }
  curve.write(dir.path() / "loss_curve.csv");
  nlohmann::json body{{"checkpoint", "model.json"},
                      {"epochs", result.loss_curve.size()},
                      {"first_loss", result.loss_curve.empty() ? 0.0 : result.loss_curve.front()},
                      {"final_loss", result.loss_curve.empty() ? 0.0 : result.loss_curve.back()}};
  return detail::finish(dir, "train", c, {{"init_and_shuffle", c.seed}}, body);
}

inline nlohmann::json run_perturb(const RunConfig& c) {
  const auto models = detail::load_models(c, 1);
  const auto tracks = detail::load_tracks(c);
  const auto alphas = detail::resolve_alphas(c, models.size());
  StagedDir dir(c.out);
  const auto runs = detail::perturb_tracks(c, tracks, models, alphas, c.lambda, models, "perturb");
  detail::write_perturbations(dir.path() / "nu", runs, c, c.lambda, alphas);
  const auto rows = detail::collect_rows(runs);
  detail::rows_table("perturb", rows).write(dir.path() / "report.csv");
  return detail::finish(dir, "perturb", c, {{"master", c.seed}, {"tracks", detail::track_seeds(runs)}},
                        {{"groups", detail::summarize(rows)}});
}

inline nlohmann::json run_eval(const RunConfig& c) {
  const auto models = detail::load_models(c, 1);
  const auto tracks = detail::load_tracks(c);
  StagedDir dir(c.out);
  std::vector<detail::Row> rows;
  nlohmann::json clean = nlohmann::json::array();
  for (const auto& m : models) {
    auto per_track = parallel_map<std::vector<detail::Row>>(tracks.size(), c.jobs, [&](std::size_t k) {
      const auto& t = tracks[k];
      const auto before = detail::source_sdrs(*m.model, t.mixture, t.sources);
      std::vector<double> after = before;
      double di = kSdrCap;
      if (!c.perturbations.empty()) {
        const auto p = c.perturbations / "nu" / (t.id + ".wav");
        if (!std::filesystem::exists(p)) throw MissingInputError("perturbation not found", p.string());
        const WaveBuffer nu = wav_read(p);
        if (nu.size() != t.mixture.size()) throw ShapeError("perturbation " + p.string() + " has the wrong length");
        di = di_sdr(t.mixture, nu);
        after = detail::source_sdrs(*m.model, detail::add_waves(t.mixture, nu), t.sources);
      }
      std::vector<detail::Row> out;
      for (std::size_t s = 0; s < before.size(); ++s) {
        out.push_back({m.label, m.checkpoint, to_string(m.model->arch()), t.id, s + 1, 0.0, "", "none", di, before[s],
                       after[s]});
      }
      return out;
    });
    std::vector<TrackScores> scores;
    for (const auto& rs : per_track) {
      TrackScores ts{rs.front().track, {}, rs.front().di_sdr};
      for (const auto& r : rs) ts.source_sdr.push_back(r.sdr_before);
      scores.push_back(ts);
      rows.insert(rows.end(), rs.begin(), rs.end());
    }
    const auto agg = aggregate(scores);
    clean.push_back({{"model", m.label},
                     {"checkpoint", m.checkpoint},
                     {"arch", to_string(m.model->arch())},
                     {"sdr_source_median", agg.source_median},
                     {"sdr_avg", agg.average},
                     {"n_tracks", agg.tracks}});
  }
  detail::rows_table("eval", rows).write(dir.path() / "report.csv");
  nlohmann::json body{{"clean", clean}};
  if (!c.perturbations.empty()) body["groups"] = detail::summarize(rows);
  return detail::finish(dir, "eval", c, {{"master", c.seed}}, body);
}

inline nlohmann::json run_sweep_lambda(const RunConfig& c) {
  const auto models = detail::load_models(c, 1);
  const auto tracks = detail::load_tracks(c);
  if (c.lambdas.empty()) throw ConfigError("sweep-lambda needs a lambda grid (--lambda, repeatable)");
  const std::vector<detail::LoadedModel> target{models.front()};
  StagedDir dir(c.out);
  std::vector<detail::Row> rows;
  nlohmann::json seeds = nlohmann::json::object();
  for (double lambda : c.lambdas) {
    const auto runs = detail::perturb_tracks(c, tracks, target, {1.0}, lambda, target,
                                             "sweep-lambda " + format_double(lambda));
    const auto r = detail::collect_rows(runs);
    rows.insert(rows.end(), r.begin(), r.end());
    seeds = detail::track_seeds(runs);  // identical for every grid point
  }
  detail::rows_table("sweep-lambda", rows).write(dir.path() / "report.csv");
  const auto groups = detail::summarize(rows);
  CsvTable table({"lambda", "di_sdr_median", "delta_sdr_median", "delta_sdr_mean", "positive_tracks"});
  for (const auto& g : groups) {
    table.add({format_double(g["lambda"].get<double>()), format_double(g["di_sdr_median"].get<double>()),
               format_double(g["delta_sdr_median"].get<double>()), format_double(g["delta_sdr_mean"].get<double>()),
               std::to_string(g["positive_tracks"].get<std::size_t>())});
  }
  table.write(dir.path() / "table.csv");
  return detail::finish(dir, "sweep-lambda", c, {{"master", c.seed}, {"tracks", seeds}}, {{"groups", groups}});
}

inline nlohmann::json run_selectivity(const RunConfig& c) {
  const auto models = detail::load_models(c, 2);
  const auto tracks = detail::load_tracks(c);
  StagedDir dir(c.out);
  const std::vector<detail::LoadedModel> target{models.front()};
  const auto runs = detail::perturb_tracks(c, tracks, target, {1.0}, c.lambda, models, "selectivity");
  const auto rows = detail::collect_rows(runs);
  detail::rows_table("selectivity", rows).write(dir.path() / "report.csv");
  detail::delta_table(rows, models).write(dir.path() / "table.csv");
  return detail::finish(dir, "selectivity", c, {{"master", c.seed}, {"tracks", detail::track_seeds(runs)}},
                        {{"targeted", models.front().label}, {"groups", detail::summarize(rows)}});
}

inline nlohmann::json run_mmpl(const RunConfig& c) {
  const auto models = detail::load_models(c, 1);
  const auto tracks = detail::load_tracks(c);
  const auto alphas = detail::resolve_alphas(c, models.size());
  StagedDir dir(c.out);
  const auto runs = detail::perturb_tracks(c, tracks, models, alphas, c.lambda, models, "mmpl");
  detail::write_perturbations(dir.path() / "nu", runs, c, c.lambda, alphas);
  const auto rows = detail::collect_rows(runs);
  detail::rows_table("mmpl", rows).write(dir.path() / "report.csv");
  detail::delta_table(rows, models).write(dir.path() / "table.csv");
  return detail::finish(dir, "mmpl", c, {{"master", c.seed}, {"tracks", detail::track_seeds(runs)}},
                        {{"alphas", alphas}, {"groups", detail::summarize(rows)}});
}

inline nlohmann::json run_robustness(const RunConfig& c) {
  const auto models = detail::load_models(c, 1);
  const auto tracks = detail::load_tracks(c);
  std::vector<CompressionProxy> proxies;
  for (const auto& p : c.proxies) proxies.push_back(proxy_from_string(p));
  if (proxies.empty()) throw ConfigError("robustness needs at least one proxy (--proxy)");
  const std::vector<detail::LoadedModel> target{models.front()};
  const auto& m = models.front();
  StagedDir dir(c.out);
  const auto runs = detail::perturb_tracks(c, tracks, target, {1.0}, c.lambda, target, "robustness");
  std::vector<detail::Row> rows = detail::collect_rows(runs);
  const auto compressed = parallel_map<std::vector<detail::Row>>(runs.size(), c.jobs, [&](std::size_t k) {
    const auto& t = tracks[k];
    std::vector<detail::Row> out;
    for (const auto& o : robustness_sweep(*m.model, t.mixture, t.sources, runs[k].result.nu, proxies)) {
      for (std::size_t s = 0; s < o.delta.size(); ++s) {
        out.push_back({m.label, m.checkpoint, to_string(m.model->arch()), t.id, s + 1, c.lambda, "1", to_string(o.proxy),
                       runs[k].result.di_sdr, o.sdr_before[s], o.sdr_after[s]});
      }
    }
    return out;
  });
  for (const auto& rs : compressed) rows.insert(rows.end(), rs.begin(), rs.end());
  detail::rows_table("robustness", rows).write(dir.path() / "report.csv");
  const auto groups = detail::summarize(rows);
  CsvTable table({"proxy", "delta_sdr_median", "delta_sdr_mean", "positive_tracks"});
  for (const auto& g : groups) {
    table.add({g["proxy"].get<std::string>(), format_double(g["delta_sdr_median"].get<double>()),
               format_double(g["delta_sdr_mean"].get<double>()), std::to_string(g["positive_tracks"].get<std::size_t>())});
  }
  table.write(dir.path() / "table.csv");
  return detail::finish(dir, "robustness", c, {{"master", c.seed}, {"tracks", detail::track_seeds(runs)}},
                        {{"groups", groups}});
}

inline nlohmann::json run_command(const std::string& command, const RunConfig& c) {
  if (command == "gen") return run_gen(c);
  if (command == "train") return run_train(c);
  if (command == "perturb") return run_perturb(c);
  if (command == "eval") return run_eval(c);
  if (command == "sweep-lambda") return run_sweep_lambda(c);
  if (command == "selectivity") return run_selectivity(c);
  if (command == "mmpl") return run_mmpl(c);
  if (command == "robustness") return run_robustness(c);
  throw ConfigError("unknown command '" + command + "'");
}

}  // namespace amicable
