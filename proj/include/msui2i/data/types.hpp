#pragma once

#include <optional>
#include <string>
#include <vector>

#include "msui2i/core/tensor.hpp"

namespace msui2i {

enum class Domain { A, B };

inline const char* domain_name(Domain d) { return d == Domain::A ? "A" : "B"; }

// 3-channel image, CHW, canonical value range [-1, 1].
struct Image {
  Tensor pixels;

  Image() = default;
  explicit Image(Tensor t) : pixels(std::move(t)) {
    MSUI2I_REQUIRE(pixels.rank() == 3 && pixels.dim(0) == 3, "Image: expected (3,H,W)");
  }
  static Image zeros(int h, int w) { return Image(Tensor({3, h, w})); }

  int height() const { return pixels.dim(1); }
  int width() const { return pixels.dim(2); }

  void check_canonical() const {
    MSUI2I_REQUIRE(pixels.all_finite(), "Image: non-finite pixel values");
    MSUI2I_REQUIRE(pixels.min() >= -1.0 && pixels.max() <= 1.0,
                   "Image: values outside [-1, 1]");
  }
};

// Per-pixel integer class labels plus the class palette.
struct SegMap {
  Tensor labels;  // (H, W), integer ids stored as doubles
  std::vector<std::string> class_names;

  SegMap() = default;
  SegMap(Tensor l, std::vector<std::string> names)
      : labels(std::move(l)), class_names(std::move(names)) {
    MSUI2I_REQUIRE(labels.rank() == 2, "SegMap: expected (H,W)");
  }

  int height() const { return labels.dim(0); }
  int width() const { return labels.dim(1); }
  int num_classes() const { return static_cast<int>(class_names.size()); }

  int label(int y, int x) const { return static_cast<int>(labels.at(y, x)); }
  void set_label(int y, int x, int cls) { labels.at(y, x) = cls; }

  void check() const {
    for (int64_t i = 0; i < labels.numel(); ++i) {
      const int c = static_cast<int>(labels[i]);
      MSUI2I_REQUIRE(c >= 0 && c < num_classes() && labels[i] == c,
                     "SegMap: label out of range");
    }
  }

  std::vector<int64_t> histogram() const {
    std::vector<int64_t> h(class_names.size(), 0);
    for (int64_t i = 0; i < labels.numel(); ++i) ++h[static_cast<size_t>(labels[i])];
    return h;
  }
};

// The unit of every dataset. Domain-A samples always carry a segmap;
// domain-B samples usually do not (evaluation datasets may).
struct Sample {
  std::string id;
  Image image;
  std::optional<SegMap> segmap;
  Domain domain = Domain::A;

  void check() const {
    image.check_canonical();
    if (segmap) {
      MSUI2I_REQUIRE(segmap->height() == image.height() && segmap->width() == image.width(),
                     "Sample: segmap dims do not match image");
      segmap->check();
    }
    MSUI2I_REQUIRE(domain != Domain::A || segmap.has_value(),
                   "Sample: domain-A sample without segmap");
  }
};

}  // namespace msui2i
