#pragma once

// Grayscale image states, modular-subtraction state changes and the
// box-average encoding that feeds the task-function network.

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <vector>

namespace servoscope::vision {

struct ImageState {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;  // row-major, width*height

  std::uint8_t at(int x, int y) const { return pixels[static_cast<std::size_t>(y) * width + x]; }
};

enum class ChangeDirection { kForward, kInverse };

// Pixelwise (next - prev) mod 256 of two frames; forward and inverse
// transitions are distinct non-negative images.
struct StateChange {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;
  ChangeDirection direction = ChangeDirection::kForward;
};

// Network input encoding: side x side box averages scaled to [0, 1].
struct InputVector {
  Eigen::VectorXd values;
  int side = 0;
};

StateChange modular_subtract(const ImageState& s_next, const ImageState& s_prev);

// (256 - p) mod 256 of a forward change; equals modular_subtract with the
// frame arguments swapped.
StateChange inverse_change(const StateChange& ds);

// Box-average downsample to side x side then divide by 255. The image is
// padded bottom/right by edge replication when the box grid does not divide
// it evenly.
InputVector preprocess(const StateChange& ds, int side);

// Binary PGM (P5, maxval 255).
void write_pgm(const ImageState& image, const std::filesystem::path& path);
ImageState read_pgm(const std::filesystem::path& path);

}  // namespace servoscope::vision
