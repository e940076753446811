#pragma once

#include <string>
#include <vector>

#include "msui2i/data/types.hpp"

namespace msui2i {

// Binary PPM (P6) with maxval 255; [-1,1] maps linearly to [0,255].
void write_ppm(const std::string& path, const Image& image);
Image read_ppm(const std::string& path);

// Binary PGM (P5) holding raw class ids. The palette lives in the manifest.
void write_pgm(const std::string& path, const SegMap& segmap);
SegMap read_pgm(const std::string& path, std::vector<std::string> class_names);

inline double quantize_unit(double v) {
  int q = static_cast<int>(std::lround((v + 1.0) * 127.5));
  q = q < 0 ? 0 : (q > 255 ? 255 : q);
  return q / 127.5 - 1.0;
}

}  // namespace msui2i
