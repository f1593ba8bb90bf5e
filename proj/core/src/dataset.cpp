#include "unic/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>

#include "unic/binary_format.hpp"
#include "unic/error.hpp"

namespace unic {

namespace {

std::size_t floats_per_frame(std::size_t m, std::size_t h, std::size_t w) { return m * 3 + 4 + 6 + 2 * h * w * 2; }

std::size_t episode_floats(const nlohmann::json& header) {
  if (header.value("kind", std::string()) != "episode") throw_data_error("not a UNIC episode file");
  return header.at("frames").get<std::size_t>() *
         floats_per_frame(header.at("M").get<std::size_t>(), header.at("H").get<std::size_t>(),
                          header.at("W").get<std::size_t>());
}

std::string hex64(std::uint64_t v) {
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::uint64_t parse_hex64(const std::string& s) { return std::stoull(s, nullptr, 16); }

}  // namespace

std::vector<std::uint8_t> encode_episode(const Episode& ep) {
  if (ep.frames.empty()) throw_data_error("episode has no frames");
  const auto& first = ep.frames.front();
  const std::size_t m = first.cloud.size();
  const auto h = static_cast<std::size_t>(first.tactile_left.h), w = static_cast<std::size_t>(first.tactile_left.w);

  nlohmann::json ann = nlohmann::json::array();
  for (const auto& p : ep.annotation.points) ann.push_back({p.x(), p.y(), p.z()});
  const nlohmann::json header = {
      {"kind", "episode"},
      {"id", ep.id},
      {"frames", ep.frames.size()},
      {"H", h},
      {"W", w},
      {"M", m},
      {"annotation", ann},
      {"contact", ep.contact()},
      {"mode", to_string(ep.mode)},
      {"object", to_string(ep.object)},
      {"unseen", ep.unseen},
      {"rate_hz", ep.rate_hz},
      {"config_digest", hex64(ep.config_digest)},
      {"tensors", {"cloud", "quaternion", "wrench", "tactile_left", "tactile_right"}},
  };

  std::vector<float> data;
  data.reserve(ep.frames.size() * floats_per_frame(m, h, w));
  for (const auto& f : ep.frames) {
    // Size mismatches here are generator bugs, not data errors.
    if (f.cloud.size() != m || f.tactile_left.data.size() != 2 * h * w || f.tactile_right.data.size() != 2 * h * w) {
      throw std::logic_error("episode frames disagree on tensor shapes");
    }
    for (const auto& p : f.cloud) {
      for (int i = 0; i < 3; ++i) data.push_back(static_cast<float>(p[i]));
    }
    for (double v : f.rotation) data.push_back(static_cast<float>(v));
    for (double v : f.wrench) data.push_back(static_cast<float>(v));
    for (double v : f.tactile_left.data) data.push_back(static_cast<float>(v));
    for (double v : f.tactile_right.data) data.push_back(static_cast<float>(v));
  }
  return encode_container(header, data);
}

Episode decode_episode(std::span<const std::uint8_t> bytes) {
  const Container c = decode_container(bytes, "episode", &episode_floats);
  Episode ep;
  try {
    const auto& hd = c.header;
    ep.id = hd.at("id").get<std::string>();
    ep.mode = contact_mode_from_string(hd.at("mode").get<std::string>());
    ep.object = object_kind_from_string(hd.at("object").get<std::string>());
    ep.unseen = hd.value("unseen", false);
    ep.rate_hz = hd.value("rate_hz", 10.0);
    ep.config_digest = parse_hex64(hd.at("config_digest").get<std::string>());
    for (const auto& p : hd.at("annotation")) {
      ep.annotation.points.push_back(Point3(p.at(0).get<double>(), p.at(1).get<double>(), p.at(2).get<double>()));
    }
    const bool contact = hd.at("contact").get<bool>();
    if (contact != ep.annotation.is_contact()) throw_data_error("contact flag disagrees with annotation");

    const auto frames = hd.at("frames").get<std::size_t>();
    const auto m = hd.at("M").get<std::size_t>();
    const int h = hd.at("H").get<int>(), w = hd.at("W").get<int>();
    std::size_t at = 0;
    auto next = [&] { return static_cast<double>(c.tensors[at++]); };
    for (std::size_t f = 0; f < frames; ++f) {
      FrameSample fs;
      fs.cloud.reserve(m);
      for (std::size_t k = 0; k < m; ++k) {
        const double x = next(), y = next(), z = next();
        fs.cloud.push_back(Point3(x, y, z));
      }
      for (auto& v : fs.rotation) v = next();
      for (auto& v : fs.wrench) v = next();
      fs.tactile_left = TactileMap(h, w);
      fs.tactile_right = TactileMap(h, w);
      for (auto& v : fs.tactile_left.data) v = next();
      for (auto& v : fs.tactile_right.data) v = next();
      fs.annotation = ep.annotation;
      fs.contact = contact;
      fs.validate();
      ep.frames.push_back(std::move(fs));
    }
  } catch (const nlohmann::json::exception& e) {
    throw_data_error(std::string("malformed episode header: ") + e.what());
  }
  return ep;
}

void write_episode(const Episode& ep, const std::filesystem::path& path) {
  write_file_bytes(path, encode_episode(ep));
}

Episode read_episode(const std::filesystem::path& path) { return decode_episode(read_file_bytes(path)); }

EpisodeMeta EpisodeMeta::of(const Episode& ep, std::string file) {
  EpisodeMeta m;
  m.id = ep.id;
  m.file = file.empty() ? ep.id + ".unic" : std::move(file);
  m.frames = static_cast<int>(ep.frames.size());
  m.contact = ep.contact();
  m.mode = ep.mode;
  m.unseen = ep.unseen;
  return m;
}

std::size_t DatasetManifest::episode_count(Split split) const {
  return static_cast<std::size_t>(
      std::count_if(entries.begin(), entries.end(), [&](const ManifestEntry& e) { return e.split == split; }));
}

std::size_t DatasetManifest::frame_count(Split split) const {
  std::size_t n = 0;
  for (const auto& e : entries) {
    if (e.split == split) n += static_cast<std::size_t>(e.meta.frames);
  }
  return n;
}

nlohmann::json DatasetManifest::to_json() const {
  nlohmann::json eps = nlohmann::json::array();
  for (const auto& e : entries) {
    nlohmann::json tags = nlohmann::json::array();
    if (e.all_contact) tags.push_back("all_contact");
    if (e.single_contact) tags.push_back("single_contact");
    if (e.no_contact) tags.push_back("no_contact");
    nlohmann::json item = {{"id", e.meta.id},
                           {"file", e.meta.file},
                           {"frames", e.meta.frames},
                           {"contact", e.meta.contact},
                           {"unseen", e.meta.unseen},
                           {"split", e.split == Split::Train ? "train" : "valid"},
                           {"tags", tags}};
    if (e.meta.mode) item["mode"] = to_string(*e.meta.mode);
    eps.push_back(item);
  }
  return {{"seed", seed},
          {"ratio", ratio},
          {"partitioned", partitioned},
          {"episodes", eps},
          {"totals",
           {{"train", {{"episodes", episode_count(Split::Train)}, {"frames", frame_count(Split::Train)}}},
            {"valid", {{"episodes", episode_count(Split::Valid)}, {"frames", frame_count(Split::Valid)}}}}}};
}

DatasetManifest DatasetManifest::from_json(const nlohmann::json& j) {
  DatasetManifest m;
  try {
    m.seed = j.at("seed").get<std::uint64_t>();
    m.ratio = j.at("ratio").get<double>();
    m.partitioned = j.value("partitioned", false);
    for (const auto& e : j.at("episodes")) {
      ManifestEntry entry;
      entry.meta.id = e.at("id").get<std::string>();
      entry.meta.file = e.at("file").get<std::string>();
      entry.meta.frames = e.at("frames").get<int>();
      entry.meta.contact = e.at("contact").get<bool>();
      entry.meta.unseen = e.value("unseen", false);
      if (e.contains("mode")) entry.meta.mode = contact_mode_from_string(e.at("mode").get<std::string>());
      const auto split = e.at("split").get<std::string>();
      if (split != "train" && split != "valid") throw_data_error("unknown split '" + split + "'");
      entry.split = split == "train" ? Split::Train : Split::Valid;
      for (const auto& t : e.value("tags", nlohmann::json::array())) {
        const auto tag = t.get<std::string>();
        if (tag == "all_contact") entry.all_contact = true;
        else if (tag == "single_contact") entry.single_contact = true;
        else if (tag == "no_contact") entry.no_contact = true;
        else throw_data_error("unknown partition tag '" + tag + "'");
      }
      m.entries.push_back(std::move(entry));
    }
  } catch (const nlohmann::json::exception& e) {
    throw_data_error(std::string("malformed manifest: ") + e.what());
  }
  return m;
}

DatasetManifest split_dataset(const std::vector<EpisodeMeta>& episodes, double ratio, std::uint64_t seed) {
  if (!(ratio > 0.0 && ratio < 1.0)) throw_usage_error("split ratio must be in (0, 1)");
  if (episodes.size() < 2) throw_data_error("need at least 2 episodes to split");

  std::vector<std::size_t> seen;
  for (std::size_t i = 0; i < episodes.size(); ++i) {
    if (!episodes[i].unseen) seen.push_back(i);
  }
  std::mt19937_64 rng(seed);
  // Explicit Fisher-Yates keeps the order independent of std::shuffle's implementation.
  for (std::size_t i = seen.size(); i > 1; --i) {
    std::uniform_int_distribution<std::size_t> pick(0, i - 1);
    std::swap(seen[i - 1], seen[pick(rng)]);
  }
  const auto n_train = static_cast<std::size_t>(std::floor(ratio * static_cast<double>(seen.size())));

  DatasetManifest m;
  m.seed = seed;
  m.ratio = ratio;
  std::vector<Split> split(episodes.size(), Split::Valid);
  for (std::size_t i = 0; i < n_train; ++i) split[seen[i]] = Split::Train;
  for (std::size_t i = 0; i < episodes.size(); ++i) m.entries.push_back({episodes[i], split[i]});
  return m;
}

DatasetManifest partition_validation(DatasetManifest manifest) {
  if (manifest.episode_count(Split::Valid) == 0) throw_data_error("manifest has no validation split");
  for (auto& e : manifest.entries) {
    e.all_contact = e.single_contact = e.no_contact = false;
    if (e.split != Split::Valid) continue;
    if (!e.meta.mode) throw_data_error("episode '" + e.meta.id + "' carries no contact-mode tag");
    e.all_contact = e.meta.contact;
    e.no_contact = !e.meta.contact;
    e.single_contact = e.meta.contact && *e.meta.mode == ContactMode::Point;
  }
  manifest.partitioned = true;
  return manifest;
}

void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw_data_error("cannot open '" + path.string() + "' for writing");
  out << manifest.to_json().dump(2) << '\n';
}

DatasetManifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw_data_error("cannot open '" + path.string() + "'");
  try {
    return DatasetManifest::from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw_data_error(std::string("malformed manifest: ") + e.what());
  }
}

DatasetManifest write_dataset(const std::vector<Episode>& episodes, const std::filesystem::path& dir, double ratio,
                              std::uint64_t seed) {
  std::filesystem::create_directories(dir);
  std::vector<EpisodeMeta> metas;
  for (const auto& ep : episodes) {
    const std::string file = ep.id + ".unic";
    write_episode(ep, dir / file);
    metas.push_back(EpisodeMeta::of(ep, file));
  }
  auto manifest = partition_validation(split_dataset(metas, ratio, seed));
  write_manifest(manifest, dir / "manifest.json");
  return manifest;
}

}  // namespace unic
