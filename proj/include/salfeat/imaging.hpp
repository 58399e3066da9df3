#pragma once

#include <filesystem>
#include <span>
#include <vector>

namespace salfeat {

// Row-major real-valued 2-D grid. The common currency of every map type.
struct Grid {
  int width = 0;
  int height = 0;
  std::vector<double> values;

  Grid() = default;
  Grid(int w, int h, double fill = 0.0)
      : width(w), height(h), values(static_cast<std::size_t>(w) * h, fill) {}

  std::size_t size() const { return values.size(); }
  double& at(int x, int y) { return values[static_cast<std::size_t>(y) * width + x]; }
  double at(int x, int y) const { return values[static_cast<std::size_t>(y) * width + x]; }
  bool same_shape(const Grid& o) const { return width == o.width && height == o.height; }

  double min() const;
  double max() const;
  double sum() const;
  double mean() const;
};

// Image with 1 or 3 interleaved channels in [0,1].
struct ImageBuffer {
  int width = 0;
  int height = 0;
  int channels = 1;
  std::vector<double> values;

  ImageBuffer() = default;
  ImageBuffer(int w, int h, int c, double fill = 0.0);

  double& at(int x, int y, int c = 0) {
    return values[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  double at(int x, int y, int c = 0) const {
    return values[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }

  Grid channel(int c) const;
  static ImageBuffer from_grid(const Grid& g);
};

struct Pyramid {
  std::vector<Grid> levels;
  // set when the requested level count exceeded what the source supports
  bool clipped = false;
};

// Reflect (edge-duplicating) index for any offset, valid for n >= 1.
int reflect_index(int i, int n);

// Separable convolution with reflect padding. Kernels have odd length.
Grid convolve_separable(const Grid& src, std::span<const double> kx,
                        std::span<const double> ky);
// Full 2-D convolution with reflect padding; kernel is (2r+1)x(2r+1) row-major.
Grid convolve2d(const Grid& src, const Grid& kernel);

Grid gaussian_blur(const Grid& src, double sigma);
Grid box_filter3(const Grid& src);

Grid to_grayscale(const ImageBuffer& img);

Pyramid gaussian_pyramid(const Grid& img, int levels);

Grid resize_bilinear(const Grid& img, int new_width, int new_height);
ImageBuffer resize_bilinear(const ImageBuffer& img, int new_width, int new_height);

struct GaborParams {
  double wavelength = 7.0;
  double sigma = 2.8;
  double aspect = 1.0;
};

std::vector<double> default_orientations();  // 0, 45, 90, 135 degrees

// Per orientation (degrees), the magnitude of the even/odd Gabor pair response.
std::vector<Grid> gabor_bank(const Grid& img, std::span<const double> orientations_deg,
                             const GaborParams& params = {});

struct Opponency {
  Grid red_green;
  Grid blue_yellow;
};

Opponency opponency_channels(const ImageBuffer& img);

// |level c - upsample(level c+delta)| at level-c resolution, ordered by
// center level then delta.
std::vector<Grid> center_surround(const Pyramid& pyr, std::span<const int> center_levels,
                                  std::span<const int> delta_levels);

// Itti's N(.) map normalization operator.
Grid itti_normalize(const Grid& map);

// Image decoding (PNG, JPEG, anything OpenCV reads). 8-bit channels map to [0,1].
ImageBuffer load_image(const std::filesystem::path& path);
// 8-bit PNG encoding; values are clamped and rounded.
void save_png(const ImageBuffer& img, const std::filesystem::path& path);
// 16-bit grayscale PNG of a [0,1] map.
void save_png16(const Grid& map, const std::filesystem::path& path);

}  // namespace salfeat
