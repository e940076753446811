#include "msui2i/data/dataset.hpp"

#include <json.hpp>

#include <filesystem>
#include <fstream>

#include "msui2i/data/imageio.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace msui2i {

namespace {

json transform_to_json(const ClassTransform& t) {
  return json{{"gain", t.gain}, {"bias", t.bias}};
}

ClassTransform transform_from_json(const json& j) {
  ClassTransform t;
  t.gain = j.at("gain").get<std::array<double, 3>>();
  t.bias = j.at("bias").get<std::array<double, 3>>();
  return t;
}

json spec_to_json_obj(const SceneSpec& s) {
  json night = json::object();
  for (int c = 0; c < kNumClasses; ++c)
    night[scene_class_names()[static_cast<size_t>(c)]] =
        transform_to_json(s.night[static_cast<size_t>(c)]);
  json lights = json::array();
  for (const auto& b : s.vehicle_lights)
    lights.push_back(json{{"rel_y", b.rel_y},
                          {"rel_x", b.rel_x},
                          {"radius_frac", b.radius_frac},
                          {"color", b.color},
                          {"intensity", b.intensity}});
  return json{{"height", s.height},
              {"width", s.width},
              {"min_buildings", s.min_buildings},
              {"max_buildings", s.max_buildings},
              {"min_vehicles", s.min_vehicles},
              {"max_vehicles", s.max_vehicles},
              {"horizon", s.horizon},
              {"building_h_min", s.building_h_min},
              {"building_h_max", s.building_h_max},
              {"building_w_min", s.building_w_min},
              {"building_w_max", s.building_w_max},
              {"vehicle_h_min", s.vehicle_h_min},
              {"vehicle_h_max", s.vehicle_h_max},
              {"vehicle_w_min", s.vehicle_w_min},
              {"vehicle_w_max", s.vehicle_w_max},
              {"texture_noise", s.texture_noise},
              {"night", night},
              {"vehicle_lights", lights}};
}

SceneSpec spec_from_json_obj(const json& j) {
  SceneSpec s;
  s.height = j.at("height").get<int>();
  s.width = j.at("width").get<int>();
  s.min_buildings = j.at("min_buildings").get<int>();
  s.max_buildings = j.at("max_buildings").get<int>();
  s.min_vehicles = j.at("min_vehicles").get<int>();
  s.max_vehicles = j.at("max_vehicles").get<int>();
  s.horizon = j.at("horizon").get<double>();
  s.building_h_min = j.at("building_h_min").get<double>();
  s.building_h_max = j.at("building_h_max").get<double>();
  s.building_w_min = j.at("building_w_min").get<double>();
  s.building_w_max = j.at("building_w_max").get<double>();
  s.vehicle_h_min = j.at("vehicle_h_min").get<double>();
  s.vehicle_h_max = j.at("vehicle_h_max").get<double>();
  s.vehicle_w_min = j.at("vehicle_w_min").get<double>();
  s.vehicle_w_max = j.at("vehicle_w_max").get<double>();
  s.texture_noise = j.at("texture_noise").get<double>();
  for (int c = 0; c < kNumClasses; ++c)
    s.night[static_cast<size_t>(c)] =
        transform_from_json(j.at("night").at(scene_class_names()[static_cast<size_t>(c)]));
  s.vehicle_lights.clear();
  for (const auto& lb : j.at("vehicle_lights")) {
    LightBlob b;
    b.rel_y = lb.at("rel_y").get<double>();
    b.rel_x = lb.at("rel_x").get<double>();
    b.radius_frac = lb.at("radius_frac").get<double>();
    b.color = lb.at("color").get<std::array<double, 3>>();
    b.intensity = lb.at("intensity").get<double>();
    s.vehicle_lights.push_back(b);
  }
  return s;
}

std::string zero_pad(int v, int width) {
  std::string s = std::to_string(v);
  while (static_cast<int>(s.size()) < width) s.insert(s.begin(), '0');
  return s;
}

}  // namespace

std::string scene_spec_to_json(const SceneSpec& spec) { return spec_to_json_obj(spec).dump(2); }

SceneSpec scene_spec_from_json(const std::string& text) {
  return spec_from_json_obj(json::parse(text));
}

uint64_t stream_seed(uint64_t base, uint64_t stream, uint64_t index) {
  uint64_t x = base + 0x9e3779b97f4a7c15ULL * (stream * 0x100000001ULL + index + 1);
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

const ManifestEntry& DatasetManifest::find(const std::string& id) const {
  for (const auto& e : entries)
    if (e.id == id) return e;
  throw InvalidArgument("sample id not in manifest: " + id);
}

std::vector<std::string> DatasetManifest::ids(Domain d) const {
  std::vector<std::string> out;
  for (const auto& e : entries)
    if (e.domain == d) out.push_back(e.id);
  return out;
}

DatasetManifest synth_dataset(int n, const SceneSpec& spec, uint64_t seed,
                              const std::string& out_dir, bool emit_b_segmaps) {
  MSUI2I_REQUIRE(n >= 1, "synth_dataset: n must be >= 1");
  spec.validate();
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  MSUI2I_FAULT_IF(ec.operator bool(), "cannot create output dir: " + out_dir);

  DatasetManifest m;
  m.root = out_dir;
  m.seed = seed;
  m.spec = spec;
  m.class_names = scene_class_names();

  for (int i = 0; i < n; ++i) {
    const uint64_t sseed = stream_seed(seed, 1, static_cast<uint64_t>(i));
    Sample s = synth_scene(spec, sseed);
    s.id = "a" + zero_pad(i, 4);
    ManifestEntry e{s.id, s.id + ".ppm", s.id + "_seg.pgm", Domain::A, sseed};
    save_sample(s, out_dir + "/" + e.image_path, out_dir + "/" + e.segmap_path);
    m.entries.push_back(std::move(e));
  }
  for (int i = 0; i < n; ++i) {
    const uint64_t sseed = stream_seed(seed, 2, static_cast<uint64_t>(i));
    Sample day = synth_scene(spec, sseed);
    Sample s;
    s.id = "b" + zero_pad(i, 4);
    s.image = day_to_night_oracle(day, spec);
    s.domain = Domain::B;
    if (emit_b_segmaps) s.segmap = day.segmap;
    ManifestEntry e{s.id, s.id + ".ppm", emit_b_segmaps ? s.id + "_seg.pgm" : std::string(),
                    Domain::B, sseed};
    save_sample(s, out_dir + "/" + e.image_path,
                e.segmap_path.empty() ? std::string() : out_dir + "/" + e.segmap_path);
    m.entries.push_back(std::move(e));
  }

  save_manifest(m, out_dir + "/" + kManifestFileName);
  return m;
}

void save_manifest(const DatasetManifest& manifest, const std::string& path) {
  json j;
  j["schema_version"] = kManifestSchemaVersion;
  j["seed"] = manifest.seed;
  j["class_names"] = manifest.class_names;
  j["scene_spec"] = spec_to_json_obj(manifest.spec);
  json samples = json::array();
  for (const auto& e : manifest.entries) {
    json je{{"id", e.id},
            {"image", e.image_path},
            {"domain", std::string(domain_name(e.domain))},
            {"scene_seed", e.scene_seed}};
    if (!e.segmap_path.empty())
      je["segmap"] = e.segmap_path;
    else
      je["segmap"] = nullptr;
    samples.push_back(std::move(je));
  }
  j["samples"] = std::move(samples);

  std::ofstream out(path, std::ios::binary);
  MSUI2I_FAULT_IF(!out, "cannot open for writing: " + path);
  out << j.dump(2) << "\n";
  MSUI2I_FAULT_IF(!out, "write failed: " + path);
}

DatasetManifest load_manifest(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  MSUI2I_FAULT_IF(!in, "cannot open: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw RuntimeFault(path + ": manifest parse error: " + e.what());
  }
  MSUI2I_FAULT_IF(j.value("schema_version", "") != kManifestSchemaVersion,
                  path + ": unsupported manifest schema version");

  DatasetManifest m;
  m.root = fs::path(path).parent_path().string();
  if (m.root.empty()) m.root = ".";
  m.seed = j.at("seed").get<uint64_t>();
  m.class_names = j.at("class_names").get<std::vector<std::string>>();
  m.spec = spec_from_json_obj(j.at("scene_spec"));
  for (const auto& je : j.at("samples")) {
    ManifestEntry e;
    e.id = je.at("id").get<std::string>();
    e.image_path = je.at("image").get<std::string>();
    if (!je.at("segmap").is_null()) e.segmap_path = je.at("segmap").get<std::string>();
    const auto dom = je.at("domain").get<std::string>();
    MSUI2I_FAULT_IF(dom != "A" && dom != "B", path + ": bad domain tag");
    e.domain = dom == "A" ? Domain::A : Domain::B;
    e.scene_seed = je.at("scene_seed").get<uint64_t>();
    m.entries.push_back(std::move(e));
  }

  for (const auto& e : m.entries) {
    MSUI2I_FAULT_IF(!fs::exists(fs::path(m.root) / e.image_path),
                    "manifest references missing file: " + e.image_path);
    MSUI2I_FAULT_IF(!e.segmap_path.empty() && !fs::exists(fs::path(m.root) / e.segmap_path),
                    "manifest references missing file: " + e.segmap_path);
  }
  return m;
}

Sample load_sample(const DatasetManifest& manifest, const std::string& id) {
  const ManifestEntry& e = manifest.find(id);
  Sample s;
  s.id = e.id;
  s.domain = e.domain;
  s.image = read_ppm((fs::path(manifest.root) / e.image_path).string());
  if (!e.segmap_path.empty()) {
    s.segmap = read_pgm((fs::path(manifest.root) / e.segmap_path).string(), manifest.class_names);
    MSUI2I_REQUIRE(s.segmap->height() == s.image.height() && s.segmap->width() == s.image.width(),
                   id + ": segmap dims do not match image dims");
  }
  return s;
}

void save_sample(const Sample& sample, const std::string& image_path,
                 const std::string& segmap_path) {
  write_ppm(image_path, sample.image);
  if (!segmap_path.empty()) {
    MSUI2I_REQUIRE(sample.segmap.has_value(), "save_sample: segmap path given but no segmap");
    write_pgm(segmap_path, *sample.segmap);
  }
}

}  // namespace msui2i
