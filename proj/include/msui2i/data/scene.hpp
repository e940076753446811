#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "msui2i/data/types.hpp"

namespace msui2i {

enum SceneClass : int { kSky = 0, kBuilding = 1, kRoad = 2, kVehicle = 3, kMarking = 4 };
constexpr int kNumClasses = 5;

const std::vector<std::string>& scene_class_names();
int scene_class_id(const std::string& name);

// Per-channel affine day->night transform for one class. Valid parameters
// keep [-1,1] inputs inside [-1,1]: |gain_c| + |bias_c| <= 1 per channel.
struct ClassTransform {
  std::array<double, 3> gain{1.0, 1.0, 1.0};
  std::array<double, 3> bias{0.0, 0.0, 0.0};
};

// Additive emission placed at a fixed relative offset inside each vehicle
// region; models headlight / taillight glow in the night domain.
struct LightBlob {
  double rel_y = 0.75;
  double rel_x = 0.2;
  double radius_frac = 0.25;  // of the larger region extent
  std::array<double, 3> color{1.0, 0.95, 0.7};
  double intensity = 1.6;
};

struct SceneSpec {
  int height = 64;
  int width = 64;

  int min_buildings = 2, max_buildings = 5;
  int min_vehicles = 1, max_vehicles = 4;

  // all size fields are fractions of the image extent
  double horizon = 0.55;
  double building_h_min = 0.18, building_h_max = 0.45;
  double building_w_min = 0.10, building_w_max = 0.28;
  double vehicle_h_min = 0.09, vehicle_h_max = 0.17;
  double vehicle_w_min = 0.12, vehicle_w_max = 0.22;
  double texture_noise = 0.03;

  std::array<ClassTransform, kNumClasses> night;
  std::vector<LightBlob> vehicle_lights;

  SceneSpec();  // fills in the default day->night transforms

  void validate() const;
};

struct SceneRect {
  int y0, x0, y1, x1;  // half-open
  std::array<double, 3> color;
  int area() const { return (y1 - y0) * (x1 - x0); }
};

// Geometry drawn for one scene; exposed so tests can re-rasterize
// primitives independently of the painter.
struct SceneLayout {
  std::vector<SceneRect> buildings;
  std::vector<SceneRect> vehicles;
  std::vector<SceneRect> markings;
  int horizon_row = 0;
};

SceneLayout layout_scene(const SceneSpec& spec, uint64_t seed);
Sample rasterize_scene(const SceneSpec& spec, const SceneLayout& layout, uint64_t seed);

// Procedural domain-A scene with an exact segmentation map. Deterministic in
// (spec, seed), bitwise.
Sample synth_scene(const SceneSpec& spec, uint64_t seed);

// Ground-truth class-conditional translation: per-class affine transform plus
// per-vehicle-region light blobs, clamped to [-1, 1]. Output at a pixel
// depends only on that pixel's value, its class, and its containing vehicle
// region's bounding box.
Image day_to_night_oracle(const Sample& sample, const SceneSpec& spec);

}  // namespace msui2i
