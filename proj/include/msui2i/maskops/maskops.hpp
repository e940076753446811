#pragma once

#include <map>
#include <string>
#include <vector>

#include "msui2i/data/types.hpp"

namespace msui2i {

// Class -> stream routing table. Stream indices must be dense in {0..K-1}.
struct StreamSpec {
  int stream_count = 3;
  std::map<int, int> assignment;  // class id -> stream index

  static StreamSpec default_spec();  // vehicles / roads+markings / everything else

  void validate(int num_classes) const;
  int stream_of(int class_id) const;
};

// Exact pixel partition into K binary masks.
struct MaskSet {
  Tensor masks;  // (K, H, W), entries 0 or 1

  int stream_count() const { return masks.dim(0); }
  int height() const { return masks.dim(1); }
  int width() const { return masks.dim(2); }

  // Partition invariant: binary entries summing to 1 at every pixel.
  void check_partition() const;
};

// K same-sized images; part k is zero wherever mask k is zero.
struct StreamBundle {
  std::vector<Image> parts;

  int stream_count() const { return static_cast<int>(parts.size()); }
};

MaskSet masks_from_segmap(const SegMap& segmap, const StreamSpec& spec);
StreamBundle split(const Image& image, const MaskSet& maskset);
Image recombine(const StreamBundle& bundle);
MaskSet swap_streams(const MaskSet& maskset, int i, int j);

}  // namespace msui2i
