#include "msui2i/data/resample.hpp"

#include <algorithm>
#include <cmath>

namespace msui2i {

namespace {
int reflect101(int i, int n) {
  if (i < 0) i = -i;
  if (i >= n) i = 2 * n - 2 - i;
  return i;
}
}  // namespace

std::vector<double> gaussian_taps(double sigma) {
  MSUI2I_REQUIRE(sigma > 0, "gaussian_taps: sigma must be positive");
  const int r = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> taps(static_cast<size_t>(2 * r + 1));
  double sum = 0.0;
  for (int i = -r; i <= r; ++i) {
    const double v = std::exp(-(i * i) / (2.0 * sigma * sigma));
    taps[static_cast<size_t>(i + r)] = v;
    sum += v;
  }
  for (auto& v : taps) v /= sum;
  return taps;
}

Image downsample(const Image& image, int factor) {
  MSUI2I_REQUIRE(factor >= 1, "downsample: factor must be >= 1");
  const int h = image.height(), w = image.width();
  MSUI2I_REQUIRE(h % factor == 0 && w % factor == 0, "downsample: factor does not divide dims");
  if (factor == 1) return image;
  const int oh = h / factor, ow = w / factor;
  Image out = Image::zeros(oh, ow);
  const double inv = 1.0 / (factor * factor);
  for (int c = 0; c < 3; ++c)
    for (int oy = 0; oy < oh; ++oy)
      for (int ox = 0; ox < ow; ++ox) {
        double s = 0.0;
        for (int dy = 0; dy < factor; ++dy)
          for (int dx = 0; dx < factor; ++dx)
            s += image.pixels.at(c, oy * factor + dy, ox * factor + dx);
        out.pixels.at(c, oy, ox) = s * inv;
      }
  return out;
}

Image gaussian_blur(const Image& image, double sigma) {
  const auto taps = gaussian_taps(sigma);
  const int r = static_cast<int>(taps.size() / 2);
  const int h = image.height(), w = image.width();
  MSUI2I_REQUIRE(r < h && r < w, "gaussian_blur: kernel larger than image");

  Image tmp = Image::zeros(h, w), out = Image::zeros(h, w);
  for (int c = 0; c < 3; ++c) {
    for (int y = 0; y < h; ++y)  // horizontal pass
      for (int x = 0; x < w; ++x) {
        double s = 0.0;
        for (int k = -r; k <= r; ++k)
          s += taps[static_cast<size_t>(k + r)] * image.pixels.at(c, y, reflect101(x + k, w));
        tmp.pixels.at(c, y, x) = s;
      }
    for (int y = 0; y < h; ++y)  // vertical pass
      for (int x = 0; x < w; ++x) {
        double s = 0.0;
        for (int k = -r; k <= r; ++k)
          s += taps[static_cast<size_t>(k + r)] * tmp.pixels.at(c, reflect101(y + k, h), x);
        out.pixels.at(c, y, x) = s;
      }
  }
  // unit-sum taps keep the range, up to rounding
  for (int64_t i = 0; i < out.pixels.numel(); ++i)
    out.pixels[i] = std::clamp(out.pixels[i], -1.0, 1.0);
  return out;
}

Image upsample_nearest_image(const Image& image, int factor) {
  MSUI2I_REQUIRE(factor >= 1, "upsample_nearest_image: factor must be >= 1");
  const int h = image.height(), w = image.width();
  Image out = Image::zeros(h * factor, w * factor);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < h * factor; ++y)
      for (int x = 0; x < w * factor; ++x)
        out.pixels.at(c, y, x) = image.pixels.at(c, y / factor, x / factor);
  return out;
}

SegMap segmap_downsample(const SegMap& segmap, int factor) {
  MSUI2I_REQUIRE(factor >= 1, "segmap_downsample: factor must be >= 1");
  const int h = segmap.height(), w = segmap.width();
  MSUI2I_REQUIRE(h % factor == 0 && w % factor == 0,
                 "segmap_downsample: factor does not divide dims");
  if (factor == 1) return segmap;
  const int oh = h / factor, ow = w / factor;
  SegMap out(Tensor({oh, ow}), segmap.class_names);
  std::vector<int> counts(segmap.class_names.size());
  for (int oy = 0; oy < oh; ++oy)
    for (int ox = 0; ox < ow; ++ox) {
      std::fill(counts.begin(), counts.end(), 0);
      for (int dy = 0; dy < factor; ++dy)
        for (int dx = 0; dx < factor; ++dx)
          ++counts[static_cast<size_t>(segmap.label(oy * factor + dy, ox * factor + dx))];
      int best = 0;
      for (size_t c = 1; c < counts.size(); ++c)
        if (counts[c] > counts[static_cast<size_t>(best)]) best = static_cast<int>(c);
      out.set_label(oy, ox, best);
    }
  return out;
}

}  // namespace msui2i
