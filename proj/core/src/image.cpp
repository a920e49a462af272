#include "servoscope/image.hpp"

#include <algorithm>
#include <fstream>
#include <string>

#include "servoscope/errors.hpp"

namespace servoscope::vision {

StateChange modular_subtract(const ImageState& s_next, const ImageState& s_prev) {
  if (s_next.width != s_prev.width || s_next.height != s_prev.height)
    throw ShapeError("modular_subtract: frame dimensions differ");
  StateChange ds;
  ds.width = s_next.width;
  ds.height = s_next.height;
  ds.direction = ChangeDirection::kForward;
  ds.pixels.resize(s_next.pixels.size());
  for (std::size_t i = 0; i < ds.pixels.size(); ++i)
    ds.pixels[i] = static_cast<std::uint8_t>(s_next.pixels[i] - s_prev.pixels[i]);
  return ds;
}

StateChange inverse_change(const StateChange& ds) {
  if (ds.direction != ChangeDirection::kForward)
    throw UsageError("inverse_change: state change is already inverse");
  StateChange inv;
  inv.width = ds.width;
  inv.height = ds.height;
  inv.direction = ChangeDirection::kInverse;
  inv.pixels.resize(ds.pixels.size());
  for (std::size_t i = 0; i < ds.pixels.size(); ++i)
    inv.pixels[i] = static_cast<std::uint8_t>(-ds.pixels[i]);  // (256 - p) mod 256
  return inv;
}

InputVector preprocess(const StateChange& ds, int side) {
  if (side <= 0) throw ConfigError("preprocess: side must be positive");
  const int box_w = (ds.width + side - 1) / side;
  const int box_h = (ds.height + side - 1) / side;
  InputVector out;
  out.side = side;
  out.values.resize(static_cast<Eigen::Index>(side) * side);
  const double norm = 1.0 / (255.0 * box_w * box_h);
  for (int by = 0; by < side; ++by) {
    for (int bx = 0; bx < side; ++bx) {
      double sum = 0.0;
      for (int dy = 0; dy < box_h; ++dy) {
        // edge replication past the bottom/right borders
        const int y = std::min(by * box_h + dy, ds.height - 1);
        const std::uint8_t* row = ds.pixels.data() + static_cast<std::size_t>(y) * ds.width;
        for (int dx = 0; dx < box_w; ++dx) {
          const int x = std::min(bx * box_w + dx, ds.width - 1);
          sum += row[x];
        }
      }
      out.values[static_cast<Eigen::Index>(by) * side + bx] = sum * norm;
    }
  }
  return out;
}

void write_pgm(const ImageState& image, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << "P5\n" << image.width << " " << image.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(image.pixels.data()),
            static_cast<std::streamsize>(image.pixels.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

namespace {

// Reads one whitespace/comment-separated PGM header token.
int next_header_int(std::istream& in, const std::filesystem::path& path) {
  int c = in.get();
  while (c == ' ' || c == '\t' || c == '\r' || c == '\n' || c == '#') {
    if (c == '#') {
      while (c != '\n' && c != EOF) c = in.get();
    }
    c = in.get();
  }
  if (c == EOF) throw FormatError("truncated PGM header: " + path.string());
  int value = 0;
  bool any = false;
  while (c >= '0' && c <= '9') {
    value = value * 10 + (c - '0');
    any = true;
    c = in.get();
  }
  if (!any) throw FormatError("malformed PGM header: " + path.string());
  return value;
}

}  // namespace

ImageState read_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open: " + path.string());
  char m0 = 0, m1 = 0;
  in.get(m0);
  in.get(m1);
  if (m0 != 'P' || m1 != '5') throw FormatError("not a binary PGM: " + path.string());
  ImageState image;
  image.width = next_header_int(in, path);
  image.height = next_header_int(in, path);
  const int maxval = next_header_int(in, path);
  if (image.width <= 0 || image.height <= 0 || maxval != 255)
    throw FormatError("unsupported PGM header: " + path.string());
  image.pixels.resize(static_cast<std::size_t>(image.width) * image.height);
  in.read(reinterpret_cast<char*>(image.pixels.data()),
          static_cast<std::streamsize>(image.pixels.size()));
  if (in.gcount() != static_cast<std::streamsize>(image.pixels.size()))
    throw FormatError("truncated PGM payload: " + path.string());
  return image;
}

}  // namespace servoscope::vision
