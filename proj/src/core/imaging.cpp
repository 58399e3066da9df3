#include "salfeat/imaging.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "salfeat/error.hpp"

namespace salfeat {

double Grid::min() const { return values.empty() ? 0.0 : *std::min_element(values.begin(), values.end()); }
double Grid::max() const { return values.empty() ? 0.0 : *std::max_element(values.begin(), values.end()); }
double Grid::sum() const { return std::accumulate(values.begin(), values.end(), 0.0); }
double Grid::mean() const { return values.empty() ? 0.0 : sum() / static_cast<double>(values.size()); }

ImageBuffer::ImageBuffer(int w, int h, int c, double fill)
    : width(w), height(h), channels(c),
      values(static_cast<std::size_t>(w) * h * c, fill) {
  if (c != 1 && c != 3) throw Error(ErrorKind::Channel, "image must have 1 or 3 channels");
}

Grid ImageBuffer::channel(int c) const {
  if (c < 0 || c >= channels) throw Error(ErrorKind::Channel, "channel index out of range");
  Grid g(width, height);
  for (std::size_t i = 0; i < g.values.size(); ++i) g.values[i] = values[i * channels + c];
  return g;
}

ImageBuffer ImageBuffer::from_grid(const Grid& g) {
  ImageBuffer img(g.width, g.height, 1);
  img.values = g.values;
  return img;
}

int reflect_index(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * n;
  int m = i % period;
  if (m < 0) m += period;
  return m < n ? m : period - 1 - m;
}

Grid convolve_separable(const Grid& src, std::span<const double> kx, std::span<const double> ky) {
  const int rx = static_cast<int>(kx.size()) / 2;
  const int ry = static_cast<int>(ky.size()) / 2;
  Grid tmp(src.width, src.height);
  for (int y = 0; y < src.height; ++y) {
    for (int x = 0; x < src.width; ++x) {
      double acc = 0.0;
      for (int k = -rx; k <= rx; ++k) acc += kx[k + rx] * src.at(reflect_index(x + k, src.width), y);
      tmp.at(x, y) = acc;
    }
  }
  Grid out(src.width, src.height);
  for (int y = 0; y < src.height; ++y) {
    for (int x = 0; x < src.width; ++x) {
      double acc = 0.0;
      for (int k = -ry; k <= ry; ++k) acc += ky[k + ry] * tmp.at(x, reflect_index(y + k, src.height));
      out.at(x, y) = acc;
    }
  }
  return out;
}

Grid convolve2d(const Grid& src, const Grid& kernel) {
  const int rx = kernel.width / 2;
  const int ry = kernel.height / 2;
  Grid out(src.width, src.height);
  // precomputed reflected indices keep the inner loop branch-free
  std::vector<int> xs(static_cast<std::size_t>(src.width + 2 * rx));
  std::vector<int> ys(static_cast<std::size_t>(src.height + 2 * ry));
  for (int i = 0; i < static_cast<int>(xs.size()); ++i) xs[i] = reflect_index(i - rx, src.width);
  for (int i = 0; i < static_cast<int>(ys.size()); ++i) ys[i] = reflect_index(i - ry, src.height);
  for (int y = 0; y < src.height; ++y) {
    for (int x = 0; x < src.width; ++x) {
      double acc = 0.0;
      for (int ky = 0; ky < kernel.height; ++ky) {
        const double* row = &src.values[static_cast<std::size_t>(ys[y + ky]) * src.width];
        const double* krow = &kernel.values[static_cast<std::size_t>(ky) * kernel.width];
        for (int kx = 0; kx < kernel.width; ++kx) acc += krow[kx] * row[xs[x + kx]];
      }
      out.at(x, y) = acc;
    }
  }
  return out;
}

Grid gaussian_blur(const Grid& src, double sigma) {
  if (sigma <= 0.0) return src;
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> k(static_cast<std::size_t>(2 * radius + 1));
  for (int i = -radius; i <= radius; ++i) k[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
  const double total = std::accumulate(k.begin(), k.end(), 0.0);
  for (double& v : k) v /= total;
  return convolve_separable(src, k, k);
}

Grid box_filter3(const Grid& src) {
  static constexpr double k[3] = {1.0 / 3, 1.0 / 3, 1.0 / 3};
  return convolve_separable(src, k, k);
}

Grid to_grayscale(const ImageBuffer& img) {
  if (img.channels == 1) return img.channel(0);
  if (img.channels != 3) throw Error(ErrorKind::Channel, "image must have 1 or 3 channels");
  Grid g(img.width, img.height);
  for (std::size_t i = 0; i < g.values.size(); ++i) {
    const double* p = &img.values[i * 3];
    g.values[i] = 0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2];
  }
  return g;
}

Pyramid gaussian_pyramid(const Grid& img, int levels) {
  if (levels < 1) throw Error(ErrorKind::Index, "pyramid needs at least one level");
  if (img.width < 1 || img.height < 1) throw Error(ErrorKind::InvalidDimensions, "empty image");
  // halving stops once the smaller side reaches 1
  const int max_levels = static_cast<int>(std::floor(std::log2(std::min(img.width, img.height)))) + 1;
  Pyramid pyr;
  if (levels > max_levels) {
    levels = max_levels;
    pyr.clipped = true;
  }
  static constexpr double binomial[5] = {1.0 / 16, 4.0 / 16, 6.0 / 16, 4.0 / 16, 1.0 / 16};
  pyr.levels.push_back(img);
  for (int l = 1; l < levels; ++l) {
    const Grid blurred = convolve_separable(pyr.levels.back(), binomial, binomial);
    Grid next(std::max(1, blurred.width / 2), std::max(1, blurred.height / 2));
    for (int y = 0; y < next.height; ++y)
      for (int x = 0; x < next.width; ++x) next.at(x, y) = blurred.at(2 * x, 2 * y);
    pyr.levels.push_back(std::move(next));
  }
  return pyr;
}

namespace {

struct Sample {
  int i0, i1;
  double t;
};

std::vector<Sample> corner_aligned_samples(int src, int dst) {
  std::vector<Sample> s(static_cast<std::size_t>(dst));
  for (int i = 0; i < dst; ++i) {
    const double pos = dst == 1 ? 0.5 * (src - 1) : static_cast<double>(i) * (src - 1) / (dst - 1);
    int i0 = static_cast<int>(std::floor(pos));
    i0 = std::clamp(i0, 0, src - 1);
    const int i1 = std::min(i0 + 1, src - 1);
    s[i] = {i0, i1, pos - i0};
  }
  return s;
}

}  // namespace

Grid resize_bilinear(const Grid& img, int new_width, int new_height) {
  if (new_width <= 0 || new_height <= 0)
    throw Error(ErrorKind::InvalidDimensions, "resize target must be positive");
  if (new_width == img.width && new_height == img.height) return img;
  const auto sx = corner_aligned_samples(img.width, new_width);
  const auto sy = corner_aligned_samples(img.height, new_height);
  Grid out(new_width, new_height);
  for (int y = 0; y < new_height; ++y) {
    const Sample& v = sy[y];
    for (int x = 0; x < new_width; ++x) {
      const Sample& u = sx[x];
      const double top = img.at(u.i0, v.i0) + u.t * (img.at(u.i1, v.i0) - img.at(u.i0, v.i0));
      const double bot = img.at(u.i0, v.i1) + u.t * (img.at(u.i1, v.i1) - img.at(u.i0, v.i1));
      out.at(x, y) = top + v.t * (bot - top);
    }
  }
  return out;
}

ImageBuffer resize_bilinear(const ImageBuffer& img, int new_width, int new_height) {
  ImageBuffer out(new_width, new_height, img.channels);
  for (int c = 0; c < img.channels; ++c) {
    const Grid g = resize_bilinear(img.channel(c), new_width, new_height);
    for (std::size_t i = 0; i < g.values.size(); ++i) out.values[i * img.channels + c] = g.values[i];
  }
  return out;
}

std::vector<double> default_orientations() { return {0.0, 45.0, 90.0, 135.0}; }

std::vector<Grid> gabor_bank(const Grid& img, std::span<const double> orientations_deg,
                             const GaborParams& params) {
  if (orientations_deg.empty()) throw Error(ErrorKind::EmptyInput, "no Gabor orientations");
  const int radius = static_cast<int>(std::ceil(3.0 * params.sigma / std::min(1.0, params.aspect)));
  const int size = 2 * radius + 1;
  std::vector<Grid> responses;
  responses.reserve(orientations_deg.size());
  for (double deg : orientations_deg) {
    const double theta = deg * std::numbers::pi / 180.0;
    const double c = std::cos(theta), s = std::sin(theta);
    Grid even(size, size), odd(size, size), env(size, size);
    for (int y = -radius; y <= radius; ++y) {
      for (int x = -radius; x <= radius; ++x) {
        const double xr = x * c + y * s;
        const double yr = -x * s + y * c;
        const double e = std::exp(-(xr * xr + params.aspect * params.aspect * yr * yr) /
                                  (2.0 * params.sigma * params.sigma));
        const double phase = 2.0 * std::numbers::pi * xr / params.wavelength;
        env.at(x + radius, y + radius) = e;
        even.at(x + radius, y + radius) = e * std::cos(phase);
        odd.at(x + radius, y + radius) = e * std::sin(phase);
      }
    }
    // remove the DC component of the even kernel along its envelope
    const double env_sum = env.sum();
    const double dc = even.sum() / env_sum;
    for (std::size_t i = 0; i < even.values.size(); ++i) {
      even.values[i] = (even.values[i] - dc * env.values[i]) / env_sum;
      odd.values[i] /= env_sum;
    }
    const Grid re = convolve2d(img, even);
    const Grid ro = convolve2d(img, odd);
    Grid mag(img.width, img.height);
    for (std::size_t i = 0; i < mag.values.size(); ++i) mag.values[i] = std::hypot(re.values[i], ro.values[i]);
    responses.push_back(std::move(mag));
  }
  return responses;
}

Opponency opponency_channels(const ImageBuffer& img) {
  if (img.channels != 3) throw Error(ErrorKind::Channel, "opponency requires a 3-channel image");
  Opponency out{Grid(img.width, img.height), Grid(img.width, img.height)};
  for (std::size_t i = 0; i < out.red_green.values.size(); ++i) {
    const double r = img.values[i * 3], g = img.values[i * 3 + 1], b = img.values[i * 3 + 2];
    const double lum = 0.299 * r + 0.587 * g + 0.114 * b;
    if (lum < 0.1) continue;
    const double R = std::max(0.0, r - 0.5 * (g + b));
    const double G = std::max(0.0, g - 0.5 * (r + b));
    const double B = std::max(0.0, b - 0.5 * (r + g));
    out.red_green.values[i] = R - G;
    out.blue_yellow.values[i] = B - 0.5 * (R + G);
  }
  return out;
}

std::vector<Grid> center_surround(const Pyramid& pyr, std::span<const int> center_levels,
                                  std::span<const int> delta_levels) {
  const int n = static_cast<int>(pyr.levels.size());
  std::vector<Grid> maps;
  for (int c : center_levels) {
    for (int d : delta_levels) {
      if (c < 0 || d < 1 || c + d >= n)
        throw Error(ErrorKind::Index, "center-surround levels (" + std::to_string(c) + "," +
                                          std::to_string(c + d) + ") outside pyramid of " +
                                          std::to_string(n) + " levels");
      const Grid& center = pyr.levels[c];
      const Grid surround = resize_bilinear(pyr.levels[c + d], center.width, center.height);
      Grid m(center.width, center.height);
      for (std::size_t i = 0; i < m.values.size(); ++i)
        m.values[i] = std::abs(center.values[i] - surround.values[i]);
      maps.push_back(std::move(m));
    }
  }
  return maps;
}

Grid itti_normalize(const Grid& map) {
  Grid out(map.width, map.height, 0.0);
  if (map.values.empty()) return out;
  const double lo = map.min(), hi = map.max();
  // flat up to rounding noise counts as all-equal
  if (hi - lo <= 1e-10) return out;
  for (std::size_t i = 0; i < out.values.size(); ++i) out.values[i] = (map.values[i] - lo) / (hi - lo);

  constexpr int kGrid = 7;
  double local_sum = 0.0;
  int local_count = 0;
  for (int gy = 0; gy < kGrid; ++gy) {
    const int y0 = gy * map.height / kGrid, y1 = (gy + 1) * map.height / kGrid;
    for (int gx = 0; gx < kGrid; ++gx) {
      const int x0 = gx * map.width / kGrid, x1 = (gx + 1) * map.width / kGrid;
      if (y1 <= y0 || x1 <= x0) continue;
      double m = 0.0;
      for (int y = y0; y < y1; ++y)
        for (int x = x0; x < x1; ++x) m = std::max(m, out.at(x, y));
      local_sum += m;
      ++local_count;
    }
  }
  const double mean_local = local_sum / local_count;
  const double weight = (1.0 - mean_local) * (1.0 - mean_local);
  for (double& v : out.values) v *= weight;
  return out;
}

ImageBuffer load_image(const std::filesystem::path& path) {
  cv::Mat raw = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
  if (raw.empty()) throw Error(ErrorKind::Io, "cannot decode image: " + path.string());
  double full = 1.0;
  switch (raw.depth()) {
    case CV_8U: full = 255.0; break;
    case CV_16U: full = 65535.0; break;
    default: throw Error(ErrorKind::Io, "unsupported image depth: " + path.string());
  }
  cv::Mat converted;
  int channels = 1;
  switch (raw.channels()) {
    case 1: converted = raw; break;
    case 3: cv::cvtColor(raw, converted, cv::COLOR_BGR2RGB); channels = 3; break;
    case 4: cv::cvtColor(raw, converted, cv::COLOR_BGRA2RGB); channels = 3; break;
    default: throw Error(ErrorKind::Io, "unsupported channel count: " + path.string());
  }
  cv::Mat as_double;
  converted.convertTo(as_double, CV_MAKETYPE(CV_64F, channels));
  ImageBuffer img(as_double.cols, as_double.rows, channels);
  // k / 255 exactly, as quantized images hold in memory
  for (int y = 0; y < img.height; ++y) {
    const double* row = as_double.ptr<double>(y);
    std::transform(row, row + static_cast<std::size_t>(img.width) * channels,
                   img.values.begin() + static_cast<std::ptrdiff_t>(y) * img.width * channels,
                   [full](double v) { return v / full; });
  }
  return img;
}

void save_png(const ImageBuffer& img, const std::filesystem::path& path) {
  cv::Mat mat(img.height, img.width, CV_8UC(img.channels));
  for (int y = 0; y < img.height; ++y) {
    auto* row = mat.ptr<unsigned char>(y);
    for (int x = 0; x < img.width; ++x) {
      for (int c = 0; c < img.channels; ++c) {
        // OpenCV stores BGR
        const int dst_c = img.channels == 3 ? 2 - c : c;
        const double v = std::clamp(img.at(x, y, c), 0.0, 1.0);
        row[x * img.channels + dst_c] = static_cast<unsigned char>(std::lround(v * 255.0));
      }
    }
  }
  if (!cv::imwrite(path.string(), mat)) throw Error(ErrorKind::Io, "cannot write image: " + path.string());
}

void save_png16(const Grid& map, const std::filesystem::path& path) {
  cv::Mat mat(map.height, map.width, CV_16UC1);
  for (int y = 0; y < map.height; ++y) {
    auto* row = mat.ptr<std::uint16_t>(y);
    for (int x = 0; x < map.width; ++x)
      row[x] = static_cast<std::uint16_t>(std::lround(std::clamp(map.at(x, y), 0.0, 1.0) * 65535.0));
  }
  if (!cv::imwrite(path.string(), mat)) throw Error(ErrorKind::Io, "cannot write image: " + path.string());
}

}  // namespace salfeat
