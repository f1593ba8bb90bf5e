#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "unic/synth.hpp"

namespace unic {

std::vector<std::uint8_t> encode_episode(const Episode& ep);
Episode decode_episode(std::span<const std::uint8_t> bytes);

void write_episode(const Episode& ep, const std::filesystem::path& path);
/// Validates every FrameSample invariant on load.
Episode read_episode(const std::filesystem::path& path);

enum class Split { Train, Valid };

/// What the splitter and partitioner need to know about an episode.
struct EpisodeMeta {
  std::string id;
  std::string file;
  int frames = 0;
  bool contact = false;
  std::optional<ContactMode> mode;  // missing -> cannot be partitioned
  bool unseen = false;

  static EpisodeMeta of(const Episode& ep, std::string file = {});
};

struct ManifestEntry {
  EpisodeMeta meta;
  Split split = Split::Train;
  bool all_contact = false;
  bool single_contact = false;
  bool no_contact = false;
};

struct DatasetManifest {
  std::vector<ManifestEntry> entries;
  std::uint64_t seed = 0;
  double ratio = 0.8;
  bool partitioned = false;

  std::size_t episode_count(Split split) const;
  std::size_t frame_count(Split split) const;

  nlohmann::json to_json() const;
  static DatasetManifest from_json(const nlohmann::json& j);
};

/// Episode-level split: a seeded shuffle of the seen episodes sends
/// floor(ratio * seen) to train; unseen-tagged episodes always go to valid.
DatasetManifest split_dataset(const std::vector<EpisodeMeta>& episodes, double ratio, std::uint64_t seed);

/// Tags validation episodes as all_contact / no_contact, and single-object
/// tabletop point contacts additionally as single_contact.
DatasetManifest partition_validation(DatasetManifest manifest);

void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);
DatasetManifest read_manifest(const std::filesystem::path& path);

/// Writes every episode as <dir>/<id>.unic and returns a split + partitioned
/// manifest saved to <dir>/manifest.json.
DatasetManifest write_dataset(const std::vector<Episode>& episodes, const std::filesystem::path& dir, double ratio,
                              std::uint64_t seed);

}  // namespace unic
