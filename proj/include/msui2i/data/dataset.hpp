#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "msui2i/data/scene.hpp"
#include "msui2i/data/types.hpp"

namespace msui2i {

constexpr const char* kManifestFileName = "manifest.v1";
constexpr const char* kManifestSchemaVersion = "v1";

struct ManifestEntry {
  std::string id;
  std::string image_path;   // relative to the manifest directory
  std::string segmap_path;  // empty when the sample has no segmap
  Domain domain = Domain::A;
  uint64_t scene_seed = 0;
};

struct DatasetManifest {
  std::string root;  // directory that holds the manifest
  uint64_t seed = 0;
  SceneSpec spec;
  std::vector<std::string> class_names;
  std::vector<ManifestEntry> entries;

  const ManifestEntry& find(const std::string& id) const;
  std::vector<std::string> ids(Domain d) const;
};

// Writes n unpaired domain-A and n domain-B samples plus the manifest to
// out_dir. A- and B-side scenes are drawn from disjoint seed streams.
// emit_b_segmaps keeps the domain-B maps on disk for evaluation datasets.
DatasetManifest synth_dataset(int n, const SceneSpec& spec, uint64_t seed,
                              const std::string& out_dir, bool emit_b_segmaps = false);

DatasetManifest load_manifest(const std::string& path);
void save_manifest(const DatasetManifest& manifest, const std::string& path);

Sample load_sample(const DatasetManifest& manifest, const std::string& id);
void save_sample(const Sample& sample, const std::string& image_path,
                 const std::string& segmap_path);

// Disjoint deterministic per-sample seeds: stream 1 feeds domain A,
// stream 2 feeds domain B.
uint64_t stream_seed(uint64_t base, uint64_t stream, uint64_t index);

// SceneSpec <-> JSON (used by the manifest and the training config).
std::string scene_spec_to_json(const SceneSpec& spec);
SceneSpec scene_spec_from_json(const std::string& text);

}  // namespace msui2i
