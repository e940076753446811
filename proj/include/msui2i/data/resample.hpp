#pragma once

#include <vector>

#include "msui2i/data/types.hpp"

namespace msui2i {

// Area-average pooling; factor must divide both dimensions.
Image downsample(const Image& image, int factor);

// Separable Gaussian, reflect padding, kernel radius ceil(3*sigma).
Image gaussian_blur(const Image& image, double sigma);

Image upsample_nearest_image(const Image& image, int factor);

// Majority label per block; ties resolve to the lowest class id.
SegMap segmap_downsample(const SegMap& segmap, int factor);

// Normalized 1D Gaussian taps, length 2*ceil(3*sigma)+1.
std::vector<double> gaussian_taps(double sigma);

}  // namespace msui2i
