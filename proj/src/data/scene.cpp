#include "msui2i/data/scene.hpp"

#include <algorithm>
#include <cmath>

#include "msui2i/core/rng.hpp"

namespace msui2i {

const std::vector<std::string>& scene_class_names() {
  static const std::vector<std::string> names{"sky", "building", "road", "vehicle", "marking"};
  return names;
}

int scene_class_id(const std::string& name) {
  const auto& names = scene_class_names();
  for (size_t i = 0; i < names.size(); ++i)
    if (names[i] == name) return static_cast<int>(i);
  throw InvalidArgument("unknown scene class: " + name);
}

SceneSpec::SceneSpec() {
  night[kSky] = {{0.10, 0.10, 0.30}, {-0.75, -0.70, -0.45}};
  night[kBuilding] = {{0.30, 0.30, 0.35}, {-0.55, -0.55, -0.50}};
  night[kRoad] = {{0.20, 0.20, 0.20}, {-0.65, -0.65, -0.65}};
  night[kVehicle] = {{0.35, 0.35, 0.35}, {-0.30, -0.30, -0.30}};
  night[kMarking] = {{0.85, 0.80, 0.60}, {0.10, 0.08, -0.05}};
  vehicle_lights = {{0.78, 0.22, 0.28, {1.0, 0.95, 0.7}, 1.6},
                    {0.78, 0.78, 0.28, {1.0, 0.95, 0.7}, 1.6}};
}

void SceneSpec::validate() const {
  MSUI2I_REQUIRE(height >= 8 && width >= 8, "scene resolution below 8x8");
  MSUI2I_REQUIRE(height % 4 == 0 && width % 4 == 0, "scene resolution must be divisible by 4");
  MSUI2I_REQUIRE(min_buildings >= 0 && max_buildings >= min_buildings, "bad building counts");
  MSUI2I_REQUIRE(min_vehicles >= 0 && max_vehicles >= min_vehicles, "bad vehicle counts");
  MSUI2I_REQUIRE(horizon > 0.2 && horizon < 0.9, "horizon outside (0.2, 0.9)");
  for (const auto& t : night)
    for (int c = 0; c < 3; ++c)
      MSUI2I_REQUIRE(std::fabs(t.gain[c]) + std::fabs(t.bias[c]) <= 1.0 + 1e-12,
                     "class transform does not map [-1,1] into [-1,1]");
}

namespace {

double clamp1(double v) { return std::clamp(v, -1.0, 1.0); }

// Varied vehicle/building palettes overlap on purpose: whites and grays occur
// on buildings, markings and vehicles alike, so appearance alone does not
// identify the class.
std::array<double, 3> building_color(Rng& rng) {
  const double base = rng.uniform(-0.15, 0.75);
  return {clamp1(base + rng.uniform(-0.08, 0.08)), clamp1(base + rng.uniform(-0.08, 0.08)),
          clamp1(base + rng.uniform(-0.08, 0.08))};
}

std::array<double, 3> vehicle_color(Rng& rng) {
  switch (rng.uniform_int(4)) {
    case 0: {  // grayscale, includes near-white
      const double g = rng.uniform(-0.5, 0.8);
      return {g, g, g};
    }
    case 1:  // red-ish
      return {rng.uniform(0.2, 0.8), rng.uniform(-0.6, -0.2), rng.uniform(-0.6, -0.2)};
    case 2:  // blue-ish
      return {rng.uniform(-0.6, -0.2), rng.uniform(-0.4, 0.0), rng.uniform(0.2, 0.8)};
    default:  // dark
      return {rng.uniform(-0.8, -0.4), rng.uniform(-0.8, -0.4), rng.uniform(-0.8, -0.4)};
  }
}

void fill_rect(Image& img, SegMap& seg, const SceneRect& r, int cls) {
  for (int y = r.y0; y < r.y1; ++y)
    for (int x = r.x0; x < r.x1; ++x) {
      for (int c = 0; c < 3; ++c) img.pixels.at(c, y, x) = r.color[static_cast<size_t>(c)];
      seg.set_label(y, x, cls);
    }
}

struct Region {
  int y0, x0, y1, x1;  // bounding box, half-open
  std::vector<int64_t> pixels;
};

// 4-connected components of one class.
std::vector<Region> class_regions(const SegMap& seg, int cls) {
  const int h = seg.height(), w = seg.width();
  std::vector<int> comp(static_cast<size_t>(h) * w, -1);
  std::vector<Region> regions;
  std::vector<int64_t> stack;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const int64_t start = static_cast<int64_t>(y) * w + x;
      if (seg.label(y, x) != cls || comp[static_cast<size_t>(start)] >= 0) continue;
      Region reg{y, x, y + 1, x + 1, {}};
      const int id = static_cast<int>(regions.size());
      comp[static_cast<size_t>(start)] = id;
      stack.assign(1, start);
      while (!stack.empty()) {
        const int64_t p = stack.back();
        stack.pop_back();
        reg.pixels.push_back(p);
        const int py = static_cast<int>(p / w), px = static_cast<int>(p % w);
        reg.y0 = std::min(reg.y0, py);
        reg.x0 = std::min(reg.x0, px);
        reg.y1 = std::max(reg.y1, py + 1);
        reg.x1 = std::max(reg.x1, px + 1);
        const int ny[4] = {py - 1, py + 1, py, py};
        const int nx[4] = {px, px, px - 1, px + 1};
        for (int k = 0; k < 4; ++k) {
          if (ny[k] < 0 || ny[k] >= h || nx[k] < 0 || nx[k] >= w) continue;
          const int64_t q = static_cast<int64_t>(ny[k]) * w + nx[k];
          if (seg.label(ny[k], nx[k]) == cls && comp[static_cast<size_t>(q)] < 0) {
            comp[static_cast<size_t>(q)] = id;
            stack.push_back(q);
          }
        }
      }
      regions.push_back(std::move(reg));
    }
  return regions;
}

}  // namespace

SceneLayout layout_scene(const SceneSpec& spec, uint64_t seed) {
  spec.validate();
  Rng rng(seed ^ 0x5ce5e1a9u);
  const int h = spec.height, w = spec.width;
  SceneLayout out;
  out.horizon_row = static_cast<int>(std::lround(spec.horizon * h));

  const int n_buildings =
      spec.min_buildings + rng.uniform_int(spec.max_buildings - spec.min_buildings + 1);
  for (int i = 0; i < n_buildings; ++i) {
    const int bh = std::max(2, static_cast<int>(rng.uniform(spec.building_h_min, spec.building_h_max) * h));
    const int bw = std::max(2, static_cast<int>(rng.uniform(spec.building_w_min, spec.building_w_max) * w));
    const int x0 = rng.uniform_int(std::max(1, w - bw));
    out.buildings.push_back(
        {std::max(0, out.horizon_row - bh), x0, out.horizon_row, std::min(w, x0 + bw),
         building_color(rng)});
  }

  // dashed center line
  {
    const int lane_w = std::max(1, w / 32);
    const int cx = w / 2 - lane_w / 2;
    const int dash = std::max(2, h / 16);
    for (int y = out.horizon_row + 1; y + dash <= h; y += 2 * dash)
      out.markings.push_back({y, cx, y + dash, cx + lane_w, {0.80, 0.80, 0.72}});
  }

  const int n_vehicles =
      spec.min_vehicles + rng.uniform_int(spec.max_vehicles - spec.min_vehicles + 1);
  for (int i = 0; i < n_vehicles; ++i) {
    const int vh = std::max(2, static_cast<int>(rng.uniform(spec.vehicle_h_min, spec.vehicle_h_max) * h));
    const int vw = std::max(3, static_cast<int>(rng.uniform(spec.vehicle_w_min, spec.vehicle_w_max) * w));
    const int ymax = h - vh;
    const int y0 = out.horizon_row + rng.uniform_int(std::max(1, ymax - out.horizon_row));
    const int x0 = rng.uniform_int(std::max(1, w - vw));
    out.vehicles.push_back(
        {y0, x0, std::min(h, y0 + vh), std::min(w, x0 + vw), vehicle_color(rng)});
  }
  return out;
}

Sample rasterize_scene(const SceneSpec& spec, const SceneLayout& layout, uint64_t seed) {
  const int h = spec.height, w = spec.width;
  Image img = Image::zeros(h, w);
  SegMap seg(Tensor({h, w}), scene_class_names());

  // sky gradient
  for (int y = 0; y < layout.horizon_row; ++y) {
    const double t = layout.horizon_row > 1 ? static_cast<double>(y) / (layout.horizon_row - 1) : 0.0;
    const double r = -0.20 + 0.55 * t, g = 0.10 + 0.35 * t, b = 0.55 + 0.20 * t;
    for (int x = 0; x < w; ++x) {
      img.pixels.at(0, y, x) = r;
      img.pixels.at(1, y, x) = g;
      img.pixels.at(2, y, x) = b;
      seg.set_label(y, x, kSky);
    }
  }
  // road band
  for (int y = layout.horizon_row; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < 3; ++c) img.pixels.at(c, y, x) = -0.35;
      seg.set_label(y, x, kRoad);
    }

  for (const auto& r : layout.buildings) fill_rect(img, seg, r, kBuilding);
  for (const auto& r : layout.markings) fill_rect(img, seg, r, kMarking);
  for (const auto& r : layout.vehicles) fill_rect(img, seg, r, kVehicle);

  if (spec.texture_noise > 0) {
    Rng noise(seed ^ 0x7e37e5u);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        for (int c = 0; c < 3; ++c) {
          const double n = noise.uniform(-spec.texture_noise, spec.texture_noise);
          img.pixels.at(c, y, x) = clamp1(img.pixels.at(c, y, x) + n);
        }
  }

  Sample s;
  s.image = std::move(img);
  s.segmap = std::move(seg);
  s.domain = Domain::A;
  s.check();
  return s;
}

Sample synth_scene(const SceneSpec& spec, uint64_t seed) {
  return rasterize_scene(spec, layout_scene(spec, seed), seed);
}

Image day_to_night_oracle(const Sample& sample, const SceneSpec& spec) {
  MSUI2I_FAULT_IF(!sample.segmap.has_value(), "day_to_night_oracle: sample has no segmap");
  const SegMap& seg = *sample.segmap;
  MSUI2I_REQUIRE(seg.height() == sample.image.height() && seg.width() == sample.image.width(),
                 "day_to_night_oracle: segmap dims mismatch");
  const int h = seg.height(), w = seg.width();

  Image out = Image::zeros(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const int cls = seg.label(y, x);
      MSUI2I_REQUIRE(cls >= 0 && cls < kNumClasses, "day_to_night_oracle: class out of range");
      const auto& t = spec.night[static_cast<size_t>(cls)];
      for (int c = 0; c < 3; ++c)
        out.pixels.at(c, y, x) =
            t.gain[static_cast<size_t>(c)] * sample.image.pixels.at(c, y, x) +
            t.bias[static_cast<size_t>(c)];
    }

  for (const auto& reg : class_regions(seg, kVehicle)) {
    const int rh = reg.y1 - reg.y0, rw = reg.x1 - reg.x0;
    for (const auto& blob : spec.vehicle_lights) {
      const double cy = reg.y0 + blob.rel_y * (rh - 1);
      const double cx = reg.x0 + blob.rel_x * (rw - 1);
      const double radius = std::max(0.8, blob.radius_frac * std::max(rh, rw));
      const double inv2r2 = 1.0 / (2.0 * radius * radius);
      for (int64_t p : reg.pixels) {
        const int py = static_cast<int>(p / w), px = static_cast<int>(p % w);
        const double d2 = (py - cy) * (py - cy) + (px - cx) * (px - cx);
        const double e = blob.intensity * std::exp(-d2 * inv2r2);
        for (int c = 0; c < 3; ++c)
          out.pixels.at(c, py, px) += e * blob.color[static_cast<size_t>(c)];
      }
    }
  }

  for (int64_t i = 0; i < out.pixels.numel(); ++i) out.pixels[i] = clamp1(out.pixels[i]);
  return out;
}

}  // namespace msui2i
