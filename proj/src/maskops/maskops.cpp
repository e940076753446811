#include "msui2i/maskops/maskops.hpp"

#include <algorithm>

#include "msui2i/data/scene.hpp"

namespace msui2i {

StreamSpec StreamSpec::default_spec() {
  StreamSpec s;
  s.stream_count = 3;
  s.assignment = {{kVehicle, 0}, {kRoad, 1}, {kMarking, 1}, {kSky, 2}, {kBuilding, 2}};
  return s;
}

void StreamSpec::validate(int num_classes) const {
  MSUI2I_REQUIRE(stream_count >= 1, "StreamSpec: stream count must be >= 1");
  std::vector<bool> used(static_cast<size_t>(stream_count), false);
  for (const auto& [cls, stream] : assignment) {
    MSUI2I_REQUIRE(cls >= 0 && cls < num_classes, "StreamSpec: class id out of palette");
    MSUI2I_REQUIRE(stream >= 0 && stream < stream_count, "StreamSpec: stream index out of range");
    used[static_cast<size_t>(stream)] = true;
  }
  for (int k = 0; k < stream_count; ++k)
    MSUI2I_REQUIRE(used[static_cast<size_t>(k)], "StreamSpec: stream indices not dense");
}

int StreamSpec::stream_of(int class_id) const {
  auto it = assignment.find(class_id);
  MSUI2I_REQUIRE(it != assignment.end(),
                 "StreamSpec: class " + std::to_string(class_id) + " has no stream assignment");
  return it->second;
}

void MaskSet::check_partition() const {
  const int k = stream_count(), h = height(), w = width();
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double sum = 0.0;
      for (int s = 0; s < k; ++s) {
        const double v = masks.at(s, y, x);
        MSUI2I_REQUIRE(v == 0.0 || v == 1.0, "MaskSet: non-binary mask entry");
        sum += v;
      }
      MSUI2I_REQUIRE(sum == 1.0, "MaskSet: pixel not covered exactly once");
    }
}

MaskSet masks_from_segmap(const SegMap& segmap, const StreamSpec& spec) {
  spec.validate(segmap.num_classes());
  const int h = segmap.height(), w = segmap.width();
  MaskSet out{Tensor({spec.stream_count, h, w})};
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) out.masks.at(spec.stream_of(segmap.label(y, x)), y, x) = 1.0;
  return out;
}

StreamBundle split(const Image& image, const MaskSet& maskset) {
  const int h = image.height(), w = image.width();
  MSUI2I_REQUIRE(maskset.height() == h && maskset.width() == w, "split: shape mismatch");
  StreamBundle out;
  out.parts.reserve(static_cast<size_t>(maskset.stream_count()));
  for (int k = 0; k < maskset.stream_count(); ++k) {
    Image part = Image::zeros(h, w);
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
          part.pixels.at(c, y, x) = image.pixels.at(c, y, x) * maskset.masks.at(k, y, x);
    out.parts.push_back(std::move(part));
  }
  return out;
}

Image recombine(const StreamBundle& bundle) {
  MSUI2I_REQUIRE(!bundle.parts.empty(), "recombine: empty bundle");
  const int h = bundle.parts[0].height(), w = bundle.parts[0].width();
  Image out = Image::zeros(h, w);
  for (const auto& part : bundle.parts) {
    MSUI2I_REQUIRE(part.height() == h && part.width() == w, "recombine: shape mismatch");
    for (int64_t i = 0; i < out.pixels.numel(); ++i) out.pixels[i] += part.pixels[i];
  }
  return out;
}

MaskSet swap_streams(const MaskSet& maskset, int i, int j) {
  const int k = maskset.stream_count();
  MSUI2I_REQUIRE(i >= 0 && i < k && j >= 0 && j < k, "swap_streams: index out of range");
  MSUI2I_REQUIRE(i != j, "swap_streams: indices must differ");
  MaskSet out = maskset;
  const int64_t plane = static_cast<int64_t>(maskset.height()) * maskset.width();
  for (int64_t p = 0; p < plane; ++p) {
    std::swap(out.masks[i * plane + p], out.masks[j * plane + p]);
  }
  return out;
}

}  // namespace msui2i
