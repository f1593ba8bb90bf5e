#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include <nlohmann/json.hpp>

#include "unic/dataset.hpp"
#include "unic/error.hpp"
#include "unic/metrics.hpp"
#include "unic/training.hpp"

namespace fs = std::filesystem;
using namespace unic;
using nlohmann::json;

namespace {

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw_data_error("cannot open '" + path.string() + "'");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw_data_error("'" + path.string() + "': " + e.what());
  }
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw_data_error("cannot open '" + path.string() + "' for writing");
  out << text;
}

LabelGenParams labels_from_json(const json& j) {
  LabelGenParams p;
  p.sigma = j.value("sigma", p.sigma);
  p.scale = j.value("scale", p.scale);
  p.validate();
  return p;
}

json labels_to_json(const LabelGenParams& p) { return {{"sigma", p.sigma}, {"scale", p.scale}}; }

// Train/eval share one config file: {"model": {...}, "train": {...}, "labels": {...}}.
struct RunConfig {
  ModelConfig model;
  TrainConfig train;
};

RunConfig run_config(const std::optional<fs::path>& path, std::optional<std::uint64_t> seed) {
  RunConfig c;
  if (path) {
    const json j = read_json(*path);
    if (j.contains("model")) c.model = ModelConfig::from_json(j.at("model"));
    c.train = TrainConfig::for_variant(c.model.variant);
    if (j.contains("train")) c.train = TrainConfig::from_json(j.at("train"));
    if (j.contains("labels")) c.train.labels = labels_from_json(j.at("labels"));
  }
  c.train.variant = c.model.variant;
  if (seed) {
    c.model.seed = *seed;
    c.train.seed = *seed;
  }
  c.model.validate();
  c.train.validate();
  return c;
}

ModalityPresence presence_of(const std::string& drop) {
  return drop.empty() ? ModalityPresence::all() : ModalityPresence::dropping(drop);
}

int cmd_synth(const std::optional<fs::path>& config, std::uint64_t seed, const fs::path& out, int episodes,
              int frames, int points, double ratio) {
  DatasetRecipe recipe = default_recipe(episodes, frames, points);
  if (config) {
    const json j = read_json(*config);
    if (j.contains("entries")) {
      recipe = DatasetRecipe::from_json(j);
    } else {
      recipe.entries = {{SceneConfig::from_json(j), 1.0}};
      recipe.episodes = episodes;
    }
  }
  const auto eps = generate_dataset(recipe, seed);
  const auto manifest = write_dataset(eps, out, ratio, seed);
  std::cout << "wrote " << eps.size() << " episodes (" << manifest.episode_count(Split::Train) << " train, "
            << manifest.episode_count(Split::Valid) << " valid) to " << out.string() << "\n";
  return 0;
}

int cmd_label(const std::optional<fs::path>& config, const fs::path& data, const fs::path& out) {
  const LabelGenParams params = config ? labels_from_json(read_json(*config)) : LabelGenParams{};
  const auto manifest = read_manifest(data / "manifest.json");
  fs::create_directories(out);
  for (const auto& e : manifest.entries) {
    const Episode ep = read_episode(data / e.meta.file);
    json frames = json::array();
    for (const auto& f : ep.frames) frames.push_back(generate_affordance(f.cloud, f.annotation, params));
    write_text(out / (ep.id + ".labels.json"), json{{"episode", ep.id}, {"labels", labels_to_json(params)},
                                                     {"affordance", frames}}.dump());
  }
  std::cout << "labelled " << manifest.entries.size() << " episodes\n";
  return 0;
}

int cmd_train(const std::optional<fs::path>& config, std::optional<std::uint64_t> seed, const fs::path& data,
              const fs::path& out, bool f64) {
  const RunConfig c = run_config(config, seed);
  const auto dataset = LoadedDataset::load(read_manifest(data / "manifest.json"), data);
  const auto result = train(UnicModel(c.model), dataset, c.train, [](int epoch, double loss) {
    std::cerr << "epoch " << epoch << " loss " << loss << "\n";
  });
  fs::create_directories(out);
  save_checkpoint(result.model, out / "model.unic", f64 ? TensorPrecision::F64 : TensorPrecision::F32);
  write_log_csv(result.log, out / "train_log.csv");
  write_text(out / "config.json",
             json{{"model", c.model.to_json()}, {"train", c.train.to_json()}}.dump(2) + "\n");
  std::cout << "checkpoint: " << (out / "model.unic").string() << "\n";
  return 0;
}

int cmd_eval(const fs::path& checkpoint, const fs::path& data, const fs::path& out,
             const std::optional<fs::path>& config, int timing) {
  const UnicModel model = load_checkpoint(checkpoint);
  EvalOptions opt;
  opt.timing_repeats = timing;
  if (config) {
    const json j = read_json(*config);
    if (j.contains("labels")) opt.labels = labels_from_json(j.at("labels"));
  }
  const auto report = eval_matrix(model, LoadedDataset::load(read_manifest(data / "manifest.json"), data), opt);
  write_text(out / "eval_report.json", report.to_json().dump(2) + "\n");
  write_text(out / "eval_report.csv", report.to_csv());
  std::cout << report.to_csv();
  for (const auto& n : report.notices) std::cerr << "notice: " << n << "\n";
  return 0;
}

int cmd_infer(const fs::path& checkpoint, const fs::path& episode, const std::string& drop, const fs::path& out) {
  const UnicModel model = load_checkpoint(checkpoint);
  const Episode ep = read_episode(episode);
  const auto presence = presence_of(drop);
  std::string csv = "frame,point,x,y,z,affordance\n";
  char buf[160];
  for (std::size_t f = 0; f < ep.frames.size(); ++f) {
    const auto& frame = ep.frames[f];
    const auto map = predict_frame(frame, presence, model);
    for (std::size_t i = 0; i < map.size(); ++i) {
      std::snprintf(buf, sizeof buf, "%zu,%zu,%.9g,%.9g,%.9g,%.9g\n", f, i, frame.cloud[i].x(), frame.cloud[i].y(),
                    frame.cloud[i].z(), map[i]);
      csv += buf;
    }
  }
  write_text(out / (ep.id + ".affordance.csv"), csv);
  std::cout << "wrote " << (out / (ep.id + ".affordance.csv")).string() << "\n";
  return 0;
}

int cmd_bench(const std::optional<fs::path>& checkpoint, const std::string& drop, int points, int repeats,
              std::uint64_t seed, const std::optional<fs::path>& out) {
  ModelConfig mc;
  mc.points = points;
  mc.seed = seed;
  const UnicModel model = checkpoint ? load_checkpoint(*checkpoint) : UnicModel(mc);
  SceneConfig sc;
  sc.frames = 1;
  sc.points = model.config().points;
  sc.tactile_h = model.config().tactile_h;
  sc.tactile_w = model.config().tactile_w;
  const Episode ep = generate_episode(sc, seed);
  const auto b = bench_inference(model, ep.frames.front(), presence_of(drop), repeats);
  const json j{{"points", sc.points}, {"repeats", b.repeats}, {"mean_ms", b.mean_s * 1e3},
               {"stddev_ms", b.stddev_s * 1e3}};
  std::cout << j.dump(2) << "\n";
  if (out) write_text(*out / "bench.json", j.dump(2) + "\n");
  return 0;
}

int cmd_inspect(const fs::path& episode, int frame, const std::optional<fs::path>& checkpoint,
                const std::string& drop, const fs::path& out) {
  const Episode ep = read_episode(episode);
  if (frame < 0 || static_cast<std::size_t>(frame) >= ep.frames.size()) throw_usage_error("frame index out of range");
  const auto& f = ep.frames[static_cast<std::size_t>(frame)];
  const AffordanceMap map = checkpoint ? predict_frame(f, presence_of(drop), load_checkpoint(*checkpoint))
                                       : generate_affordance(f.cloud, f.annotation, LabelGenParams{});
  const fs::path path = out.extension() == ".ply" ? out : out / (ep.id + "_" + std::to_string(frame) + ".ply");
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  write_ply(f.cloud, map, path);
  std::cout << "wrote " << path.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"unic: multimodal extrinsic contact estimation"};
  app.require_subcommand(1);

  std::optional<fs::path> config, checkpoint;
  std::optional<std::uint64_t> seed;
  fs::path out = ".", data, episode;
  std::string drop;
  int episodes = 200, frames = 10, points = 1024, repeats = 100, timing = 0, frame = 0;
  double ratio = 0.8;
  bool f64 = false;

  auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
  synth->add_option("--config", config, "scene config or dataset recipe (json)");
  synth->add_option("--seed", seed, "generator seed");
  synth->add_option("--out", out, "output directory")->required();
  synth->add_option("--episodes", episodes)->check(CLI::PositiveNumber);
  synth->add_option("--frames", frames)->check(CLI::PositiveNumber);
  synth->add_option("--points", points)->check(CLI::PositiveNumber);
  synth->add_option("--split", ratio, "train fraction");

  auto* label = app.add_subcommand("label", "write dense affordance labels for a dataset");
  label->add_option("--config", config, "label params json {sigma, scale}");
  label->add_option("data", data, "dataset directory")->required();
  label->add_option("--out", out, "output directory")->required();

  auto* tr = app.add_subcommand("train", "train a model");
  tr->add_option("--config", config, "json with model/train/labels sections");
  tr->add_option("--seed", seed, "overrides model and training seeds");
  tr->add_option("data", data, "dataset directory")->required();
  tr->add_option("--out", out, "output directory")->required();
  tr->add_flag("--f64", f64, "store 64-bit tensors");

  auto* ev = app.add_subcommand("eval", "modality-removal evaluation report");
  ev->add_option("checkpoint", checkpoint)->required();
  ev->add_option("data", data, "dataset directory")->required();
  ev->add_option("--config", config, "json with an optional labels section");
  ev->add_option("--out", out, "output directory");
  ev->add_option("--timing", timing, "inference timing repeats per pattern")->check(CLI::NonNegativeNumber);

  auto* inf = app.add_subcommand("infer", "per-frame affordance export");
  inf->add_option("checkpoint", checkpoint)->required();
  inf->add_option("episode", episode)->required();
  inf->add_option("--drop", drop, "modalities to remove: rotation,tac,ft");
  inf->add_option("--out", out, "output directory");

  auto* bench = app.add_subcommand("bench", "time single-frame inference");
  bench->add_option("--checkpoint", checkpoint);
  bench->add_option("--drop", drop);
  bench->add_option("--points", points)->check(CLI::PositiveNumber);
  bench->add_option("--repeats", repeats)->check(CLI::PositiveNumber);
  bench->add_option("--seed", seed);
  std::optional<fs::path> bench_out;
  bench->add_option("--out", bench_out);

  auto* inspect = app.add_subcommand("inspect", "export a frame as PLY");
  inspect->add_option("episode", episode)->required();
  inspect->add_option("--frame", frame);
  inspect->add_option("--checkpoint", checkpoint, "predict instead of showing labels");
  inspect->add_option("--drop", drop);
  inspect->add_option("--out", out, "ply file or directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*synth) return cmd_synth(config, seed.value_or(0), out, episodes, frames, points, ratio);
    if (*label) return cmd_label(config, data, out);
    if (*tr) return cmd_train(config, seed, data, out, f64);
    if (*ev) return cmd_eval(*checkpoint, data, out, config, timing);
    if (*inf) return cmd_infer(*checkpoint, episode, drop, out);
    if (*bench) return cmd_bench(checkpoint, drop, points, repeats, seed.value_or(0), bench_out);
    if (*inspect) return cmd_inspect(episode, frame, checkpoint, drop, out);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    switch (e.kind()) {
      case ErrorKind::Usage: return 1;
      case ErrorKind::Data: return 2;
      case ErrorKind::Numeric: return 3;
    }
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const json::exception& e) {
    std::cerr << "error: bad config: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
