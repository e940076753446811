#include "msui2i/data/imageio.hpp"

#include <cmath>
#include <fstream>

namespace msui2i {

namespace {

uint8_t to_byte(double v) {
  int q = static_cast<int>(std::lround((v + 1.0) * 127.5));
  return static_cast<uint8_t>(q < 0 ? 0 : (q > 255 ? 255 : q));
}

// Reads one whitespace-delimited token, skipping '#' comment lines.
std::string next_token(std::istream& in) {
  std::string tok;
  int c;
  while ((c = in.get()) != EOF) {
    if (c == '#') {
      while ((c = in.get()) != EOF && c != '\n') {
      }
      continue;
    }
    if (std::isspace(c)) {
      if (!tok.empty()) break;
      continue;
    }
    tok.push_back(static_cast<char>(c));
  }
  return tok;
}

struct PnmHeader {
  int w = 0, h = 0, maxval = 0;
};

PnmHeader read_header(std::istream& in, const std::string& magic, const std::string& path) {
  MSUI2I_FAULT_IF(next_token(in) != magic, path + ": not a " + magic + " file");
  PnmHeader hd;
  try {
    hd.w = std::stoi(next_token(in));
    hd.h = std::stoi(next_token(in));
    hd.maxval = std::stoi(next_token(in));
  } catch (const std::exception&) {
    throw RuntimeFault(path + ": malformed header");
  }
  MSUI2I_FAULT_IF(hd.w <= 0 || hd.h <= 0, path + ": bad dimensions");
  MSUI2I_FAULT_IF(hd.maxval != 255, path + ": unsupported maxval");
  return hd;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  MSUI2I_FAULT_IF(!out, "cannot open for writing: " + path);
  return out;
}

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  MSUI2I_FAULT_IF(!in, "cannot open: " + path);
  return in;
}

}  // namespace

void write_ppm(const std::string& path, const Image& image) {
  auto out = open_out(path);
  const int h = image.height(), w = image.width();
  out << "P6\n" << w << " " << h << "\n255\n";
  std::vector<uint8_t> row(static_cast<size_t>(w) * 3);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c)
        row[static_cast<size_t>(x) * 3 + c] = to_byte(image.pixels.at(c, y, x));
    out.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
  }
  MSUI2I_FAULT_IF(!out, "write failed: " + path);
}

Image read_ppm(const std::string& path) {
  auto in = open_in(path);
  const auto hd = read_header(in, "P6", path);
  Image img = Image::zeros(hd.h, hd.w);
  std::vector<uint8_t> row(static_cast<size_t>(hd.w) * 3);
  for (int y = 0; y < hd.h; ++y) {
    in.read(reinterpret_cast<char*>(row.data()), static_cast<std::streamsize>(row.size()));
    MSUI2I_FAULT_IF(!in, path + ": truncated pixel data");
    for (int x = 0; x < hd.w; ++x)
      for (int c = 0; c < 3; ++c)
        img.pixels.at(c, y, x) = row[static_cast<size_t>(x) * 3 + c] / 127.5 - 1.0;
  }
  return img;
}

void write_pgm(const std::string& path, const SegMap& segmap) {
  MSUI2I_REQUIRE(segmap.num_classes() <= 256, "write_pgm: too many classes");
  auto out = open_out(path);
  const int h = segmap.height(), w = segmap.width();
  out << "P5\n" << w << " " << h << "\n255\n";
  std::vector<uint8_t> row(static_cast<size_t>(w));
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) row[static_cast<size_t>(x)] = static_cast<uint8_t>(segmap.label(y, x));
    out.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
  }
  MSUI2I_FAULT_IF(!out, "write failed: " + path);
}

SegMap read_pgm(const std::string& path, std::vector<std::string> class_names) {
  auto in = open_in(path);
  const auto hd = read_header(in, "P5", path);
  SegMap seg(Tensor({hd.h, hd.w}), std::move(class_names));
  std::vector<uint8_t> row(static_cast<size_t>(hd.w));
  for (int y = 0; y < hd.h; ++y) {
    in.read(reinterpret_cast<char*>(row.data()), static_cast<std::streamsize>(row.size()));
    MSUI2I_FAULT_IF(!in, path + ": truncated label data");
    for (int x = 0; x < hd.w; ++x) {
      const int cls = row[static_cast<size_t>(x)];
      MSUI2I_FAULT_IF(cls >= seg.num_classes(), path + ": class id exceeds palette");
      seg.set_label(y, x, cls);
    }
  }
  return seg;
}

}  // namespace msui2i
