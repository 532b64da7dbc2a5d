#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pagan/rng.hpp"
#include "pagan/tensor.hpp"

namespace pagan {

// A loaded dataset: items are (N, C, H, W) with values in [-1, 1]; 2-D point
// clouds use the degenerate image shape (N, 1, 1, 2). Labels are class
// indices aligned with items, or empty for unlabeled data.
struct Dataset {
  std::string name;
  Tensor<float> items;  // empty until a loader fills it
  std::vector<int> labels;
  int num_classes = 0;
};

struct GaussianRingSpec {
  int modes = 8;
  double radius = 0.7;
  double stddev = 0.04;
  int samples = 1024;
};

// Decoded PGM/PPM payload, kept as raw bytes so round-trip tests can compare
// exactly what is on disk.
struct PgmImage {
  int width = 0;
  int height = 0;
  int channels = 1;  // 1 for P5, 3 for P6
  std::vector<std::uint8_t> bytes;
};

// IDX-format MNIST loader (big-endian headers, magic 0x803 for images and
// 0x801 for labels). Pixels map affinely from [0, 255] onto [-1, 1].
Dataset load_mnist_idx(const std::string& images_path,
                       const std::string& labels_path);

// Mixture of `modes` isotropic gaussians spaced equally on a circle. Draw
// order per sample: mode index, then x noise, then y noise. Items come out
// as (N, 1, 1, 2) with the mode index as label.
Dataset gaussian_ring(const GaussianRingSpec& spec, Rng& rng);

// Procedural labeled images (filled square / disk / cross / triangle) with
// jittered position and size, one of each class in rotation. Serves as the
// built-in labeled dataset for probe-classifier work when MNIST files are
// not on hand.
Dataset synthetic_shapes(int per_class, int side, Rng& rng);

// Tiles a batch of same-shaped images into one grid image: binary PGM (P5)
// for single-channel, PPM (P6) for three-channel. Values map from [-1, 1] to
// bytes by round-half-up; grid cells beyond the batch stay black.
void write_image_grid(const Tensor<float>& images, int cols,
                      const std::string& path);

// Reads back a binary P5/P6 file written by write_image_grid.
PgmImage read_pgm(const std::string& path);

// Interleaves two aligned batches item-wise (a0, b0, a1, b1, ...), the
// column convention for original/reconstruction display grids.
Tensor<float> interleave_pairs(const Tensor<float>& a, const Tensor<float>& b);

// The byte a stored value maps to in image files; exposed for tests.
std::uint8_t pixel_byte(float v);

// Plain-text dump of 2-D points, one "x<TAB>y" line per item, for external
// plotting of point-cloud datasets.
void write_scatter(const Tensor<float>& points, const std::string& path);

// Shortest decimal text that parses back to exactly the same double; the
// one number format used in config files, loss logs, and metric reports.
std::string format_double(double v);

}  // namespace pagan
