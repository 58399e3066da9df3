#include "salfeat/saliency.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <numeric>
#include <set>
#include <sstream>

#include <opencv2/core.hpp>

#include "salfeat/error.hpp"
#include "salfeat/text.hpp"

namespace salfeat {

SaliencyMap SaliencyMap::from_raw(std::string model_id, Grid raw) {
  SaliencyMap s{std::move(model_id), std::move(raw), false};
  for (double v : s.grid.values)
    if (!std::isfinite(v)) throw Error(ErrorKind::Model, "model '" + s.model_id + "' produced a non-finite value");
  const double lo = s.grid.min(), hi = s.grid.max();
  if (hi - lo <= 1e-12 * std::max(1.0, std::abs(hi))) {
    std::fill(s.grid.values.begin(), s.grid.values.end(), 0.0);
    s.degenerate = true;
    return s;
  }
  for (double& v : s.grid.values) v = (v - lo) / (hi - lo);
  return s;
}

namespace {

double param(const ModelParams& p, const char* key, double fallback) {
  auto it = p.find(key);
  return it == p.end() ? fallback : it->second;
}

void check_keys(const ModelParams& p, std::initializer_list<const char*> allowed, const std::string& kind) {
  for (const auto& [k, v] : p) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || k == a;
    if (!ok) throw Error(ErrorKind::Configuration, "model kind '" + kind + "' has no parameter '" + k + "'");
  }
}

Grid run_builtin(const std::string& kind, const ImageBuffer& img, const ModelParams& p) {
  if (kind == "itti_koch") {
    IttiKochParams q;
    q.working_min_side = static_cast<int>(param(p, "working_min_side", q.working_min_side));
    return itti_koch_raw(img, q);
  }
  if (kind == "gbvs") {
    GbvsParams q;
    q.working_width = static_cast<int>(param(p, "working_width", q.working_width));
    q.sigma_fraction = param(p, "sigma_fraction", q.sigma_fraction);
    q.blur_sigma = param(p, "blur_sigma", q.blur_sigma);
    return gbvs_raw(img, q);
  }
  if (kind == "spectral_residual") {
    SpectralResidualParams q;
    q.working_width = static_cast<int>(param(p, "working_width", q.working_width));
    q.blur_sigma = param(p, "blur_sigma", q.blur_sigma);
    return spectral_residual_raw(img, q);
  }
  if (kind == "local_covariance") {
    LocalCovarianceParams q;
    q.block = static_cast<int>(param(p, "block", q.block));
    return local_covariance_raw(img, q);
  }
  if (kind == "center_gaussian") return center_gaussian_grid(img.width, img.height);
  throw Error(ErrorKind::Configuration, "unknown model kind '" + kind + "'");
}

void check_builtin_params(const std::string& kind, const ModelParams& p) {
  if (kind == "itti_koch") check_keys(p, {"working_min_side"}, kind);
  else if (kind == "gbvs") check_keys(p, {"working_width", "sigma_fraction", "blur_sigma"}, kind);
  else if (kind == "spectral_residual") check_keys(p, {"working_width", "blur_sigma"}, kind);
  else if (kind == "local_covariance") check_keys(p, {"block"}, kind);
  else if (kind == "center_gaussian") check_keys(p, {}, kind);
  else throw Error(ErrorKind::Configuration, "unknown model kind '" + kind + "'");
}

}  // namespace

std::vector<std::string> ModelRegistry::builtin_kinds() {
  return {"itti_koch", "gbvs", "spectral_residual", "local_covariance", "center_gaussian"};
}

ModelRegistry ModelRegistry::defaults() {
  ModelRegistry r;
  for (const auto& k : builtin_kinds()) r.add(k);
  return r;
}

void ModelRegistry::add(const std::string& id, const std::string& kind, ModelParams params) {
  const std::string k = kind.empty() ? id : kind;
  if (!custom_.count(k)) check_builtin_params(k, params);
  for (const auto& s : specs_)
    if (s.id == id) throw Error(ErrorKind::Configuration, "duplicate model id '" + id + "'");
  if (id.empty() || id.find_first_of(",.\n") != std::string::npos)
    throw Error(ErrorKind::Configuration, "model id '" + id + "' must be nonempty without ',' or '.'");
  specs_.push_back({id, k, std::move(params)});
}

void ModelRegistry::add_custom(const std::string& id, ModelFn fn, ModelParams params) {
  custom_[id] = std::move(fn);
  add(id, id, std::move(params));
}

std::vector<std::string> ModelRegistry::ids() const {
  std::vector<std::string> out;
  for (const auto& s : specs_) out.push_back(s.id);
  return out;
}

std::string ModelRegistry::describe(std::size_t i) const {
  const auto& s = specs_.at(i);
  std::string out = s.kind;
  for (const auto& [k, v] : s.params) out += ";" + k + "=" + format_real(v);
  return out;
}

std::string ModelRegistry::hash() const {
  std::string text;
  for (std::size_t i = 0; i < specs_.size(); ++i) text += specs_[i].id + "|" + describe(i) + "\n";
  return sha256_hex(text);
}

Grid ModelRegistry::run(std::size_t i, const ImageBuffer& img) const {
  const auto& s = specs_.at(i);
  if (auto it = custom_.find(s.kind); it != custom_.end()) return it->second(img, s.params);
  return run_builtin(s.kind, img, s.params);
}

SaliencyMap compute_model(const ModelRegistry& registry, std::size_t i, const ImageBuffer& img) {
  const auto& id = registry.specs().at(i).id;
  try {
    Grid raw = registry.run(i, img);
    if (raw.width != img.width || raw.height != img.height)
      throw Error(ErrorKind::Model, "output size differs from the image");
    return SaliencyMap::from_raw(id, std::move(raw));
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::Configuration) throw;
    throw Error(ErrorKind::Model, "saliency model '" + id + "' failed: " + e.what());
  } catch (const std::exception& e) {
    throw Error(ErrorKind::Model, "saliency model '" + id + "' failed: " + e.what());
  }
}

SaliencyBank compute_bank(const ModelRegistry& registry, const std::string& image_id, const ImageBuffer& img) {
  if (registry.empty()) throw Error(ErrorKind::Configuration, "model registry is empty");
  SaliencyBank bank{image_id, {}};
  bank.maps.reserve(registry.size());
  for (std::size_t i = 0; i < registry.size(); ++i) bank.maps.push_back(compute_model(registry, i, img));
  return bank;
}

// ---------------------------------------------------------------- Itti-Koch

namespace {

// Rounding noise from zero-sum kernels is flushed so flat inputs stay flat.
void flush_flat(Grid& g) {
  if (g.values.empty()) return;
  const double lo = g.min(), hi = g.max();
  if (hi - lo <= 1e-10) std::fill(g.values.begin(), g.values.end(), lo);
}

Grid mean_of(const std::vector<Grid>& maps, int w, int h) {
  Grid acc(w, h);
  for (const auto& m : maps) {
    const Grid r = resize_bilinear(m, w, h);
    for (std::size_t i = 0; i < acc.values.size(); ++i) acc.values[i] += r.values[i];
  }
  for (double& v : acc.values) v /= static_cast<double>(maps.size());
  return acc;
}

}  // namespace

Grid itti_koch_raw(const ImageBuffer& img, const IttiKochParams& params) {
  if (img.width < 32 || img.height < 32)
    throw Error(ErrorKind::TooSmall, "itti_koch needs at least 32x32 pixels");
  const double scale = static_cast<double>(params.working_min_side) / std::min(img.width, img.height);
  const int ww = std::max(params.working_min_side, static_cast<int>(std::lround(img.width * scale)));
  const int wh = std::max(params.working_min_side, static_cast<int>(std::lround(img.height * scale)));
  const ImageBuffer work = resize_bilinear(img, ww, wh);

  static constexpr int centers[] = {2, 3, 4};
  static constexpr int deltas[] = {3, 4};
  constexpr int levels = 9;

  const Pyramid intensity = gaussian_pyramid(to_grayscale(work), levels);
  if (intensity.clipped) throw Error(ErrorKind::TooSmall, "working image too small for a 9-level pyramid");
  const int out_w = intensity.levels[2].width, out_h = intensity.levels[2].height;

  auto channel_conspicuity = [&](const std::vector<Grid>& feature_maps) {
    std::vector<Grid> normalized;
    normalized.reserve(feature_maps.size());
    for (Grid m : feature_maps) {
      flush_flat(m);
      normalized.push_back(itti_normalize(m));
    }
    return itti_normalize(mean_of(normalized, out_w, out_h));
  };

  std::vector<Grid> conspicuity;
  conspicuity.push_back(channel_conspicuity(center_surround(intensity, centers, deltas)));

  if (work.channels == 3) {
    const Opponency opp = opponency_channels(work);
    const Pyramid rg = gaussian_pyramid(opp.red_green, levels);
    const Pyramid by = gaussian_pyramid(opp.blue_yellow, levels);
    std::vector<Grid> color = center_surround(rg, centers, deltas);
    for (auto& m : center_surround(by, centers, deltas)) color.push_back(std::move(m));
    conspicuity.push_back(channel_conspicuity(color));
  }

  const auto orientations = default_orientations();
  std::vector<Pyramid> oriented(orientations.size());
  for (auto& p : oriented) {
    for (int l = 0; l < levels; ++l)
      p.levels.emplace_back(intensity.levels[l].width, intensity.levels[l].height, 0.0);
  }
  // levels below the first center level are never read
  for (int l = centers[0]; l < levels; ++l) {
    auto responses = gabor_bank(intensity.levels[l], orientations);
    for (std::size_t o = 0; o < orientations.size(); ++o) oriented[o].levels[l] = std::move(responses[o]);
  }
  std::vector<Grid> orientation_maps;
  for (const auto& p : oriented)
    for (auto& m : center_surround(p, centers, deltas)) orientation_maps.push_back(std::move(m));
  conspicuity.push_back(channel_conspicuity(orientation_maps));

  Grid combined(out_w, out_h);
  for (const auto& c : conspicuity)
    for (std::size_t i = 0; i < combined.values.size(); ++i) combined.values[i] += c.values[i];
  for (double& v : combined.values) v /= static_cast<double>(conspicuity.size());
  return resize_bilinear(combined, img.width, img.height);
}

SaliencyMap itti_koch(const ImageBuffer& img) { return SaliencyMap::from_raw("itti_koch", itti_koch_raw(img)); }

// --------------------------------------------------------------------- GBVS

MarkovChain gbvs_chain(const Grid& feature, double sigma) {
  const int n = static_cast<int>(feature.size());
  MarkovChain chain{n, std::vector<double>(static_cast<std::size_t>(n) * n, 0.0)};
  const double inv = 1.0 / (2.0 * sigma * sigma);
  for (int i = 0; i < n; ++i) {
    const int xi = i % feature.width, yi = i / feature.width;
    double* row = &chain.transition[static_cast<std::size_t>(i) * n];
    double total = 0.0;
    for (int j = 0; j < n; ++j) {
      const int dx = xi - j % feature.width, dy = yi - j / feature.width;
      const double w = std::abs(feature.values[i] - feature.values[j]) * std::exp(-(dx * dx + dy * dy) * inv);
      row[j] = w;
      total += w;
    }
    if (total > 0.0) {
      for (int j = 0; j < n; ++j) row[j] /= total;
    } else {
      // a node indistinguishable from every other node keeps its mass
      row[i] = 1.0;
    }
  }
  return chain;
}

namespace {

// out = pi P
void left_multiply(const MarkovChain& chain, const std::vector<double>& pi, std::vector<double>& out) {
  const int n = chain.size;
  std::fill(out.begin(), out.end(), 0.0);
  for (int i = 0; i < n; ++i) {
    const double w = pi[i];
    if (w == 0.0) continue;
    const double* row = &chain.transition[static_cast<std::size_t>(i) * n];
    for (int j = 0; j < n; ++j) out[j] += w * row[j];
  }
}

}  // namespace

Equilibrium stationary_distribution(const MarkovChain& chain, double tolerance, int max_iterations) {
  const int n = chain.size;
  if (n == 0) throw Error(ErrorKind::EmptyInput, "empty Markov chain");
  std::vector<double> pi(n, 1.0 / n), next(n);
  Equilibrium eq;
  for (int it = 0; it <= max_iterations; ++it) {
    left_multiply(chain, pi, next);
    double residual = 0.0;
    for (int j = 0; j < n; ++j) residual += std::abs(next[j] - pi[j]);
    eq.residual = residual;
    eq.iterations = it;
    if (residual < tolerance) {
      eq.distribution = pi;
      return eq;
    }
    // lazy step (I + P)/2: same fixed point, immune to periodic chains
    double total = 0.0;
    for (int j = 0; j < n; ++j) {
      pi[j] = 0.5 * (pi[j] + next[j]);
      total += pi[j];
    }
    for (double& v : pi) v /= total;
  }
  std::ostringstream msg;
  msg << "power iteration did not converge after " << max_iterations << " iterations (residual "
      << eq.residual << ")";
  throw Error(ErrorKind::Convergence, msg.str());
}

std::vector<Grid> gbvs_feature_maps(const ImageBuffer& img, const GbvsParams& params) {
  const int ww = params.working_width;
  const int wh = std::max(1, static_cast<int>(std::lround(static_cast<double>(img.height) * ww / img.width)));
  const ImageBuffer work = resize_bilinear(img, ww, wh);
  std::vector<Grid> maps;
  const Grid gray = to_grayscale(work);
  maps.push_back(gray);
  if (work.channels == 3) {
    Opponency opp = opponency_channels(work);
    maps.push_back(std::move(opp.red_green));
    maps.push_back(std::move(opp.blue_yellow));
  }
  for (auto& m : gabor_bank(gray, default_orientations())) maps.push_back(std::move(m));
  for (auto& m : maps) flush_flat(m);
  return maps;
}

Grid gbvs_raw(const ImageBuffer& img, const GbvsParams& params) {
  if (params.working_width < 2) throw Error(ErrorKind::Configuration, "gbvs working width must be >= 2");
  const auto features = gbvs_feature_maps(img, params);
  const int w = features.front().width, h = features.front().height;
  const double sigma = params.sigma_fraction * std::hypot(w, h);
  Grid acc(w, h);
  for (const auto& f : features) {
    const Equilibrium eq = stationary_distribution(gbvs_chain(f, sigma), params.tolerance, params.max_iterations);
    for (std::size_t i = 0; i < acc.values.size(); ++i) acc.values[i] += eq.distribution[i];
  }
  for (double& v : acc.values) v /= static_cast<double>(features.size());
  Grid blurred = gaussian_blur(acc, params.blur_sigma);
  // a uniform equilibrium must stay exactly flat through blur and resize
  flush_flat(blurred);
  return resize_bilinear(blurred, img.width, img.height);
}

SaliencyMap gbvs(const ImageBuffer& img) { return SaliencyMap::from_raw("gbvs", gbvs_raw(img)); }

// -------------------------------------------------------- spectral residual

Grid spectral_residual_energy(const ImageBuffer& img, const SpectralResidualParams& params) {
  const int ww = params.working_width;
  const int wh = std::max(1, static_cast<int>(std::lround(static_cast<double>(img.height) * ww / img.width)));
  const Grid gray = resize_bilinear(to_grayscale(img), ww, wh);

  cv::Mat spatial(wh, ww, CV_64F);
  for (int y = 0; y < wh; ++y)
    for (int x = 0; x < ww; ++x) spatial.at<double>(y, x) = gray.at(x, y);
  cv::Mat spectrum;
  cv::dft(spatial, spectrum, cv::DFT_COMPLEX_OUTPUT);

  Grid log_amp(ww, wh), phase(ww, wh);
  for (int y = 0; y < wh; ++y) {
    for (int x = 0; x < ww; ++x) {
      const auto c = spectrum.at<cv::Vec2d>(y, x);
      log_amp.at(x, y) = std::log(std::max(std::hypot(c[0], c[1]), 1e-12));
      phase.at(x, y) = std::atan2(c[1], c[0]);
    }
  }
  const Grid smooth = box_filter3(log_amp);
  for (int y = 0; y < wh; ++y) {
    for (int x = 0; x < ww; ++x) {
      const double mag = std::exp(log_amp.at(x, y) - smooth.at(x, y));
      spectrum.at<cv::Vec2d>(y, x) = {mag * std::cos(phase.at(x, y)), mag * std::sin(phase.at(x, y))};
    }
  }
  cv::Mat back;
  cv::dft(spectrum, back, cv::DFT_INVERSE | cv::DFT_SCALE | cv::DFT_COMPLEX_OUTPUT);
  Grid energy(ww, wh);
  for (int y = 0; y < wh; ++y) {
    for (int x = 0; x < ww; ++x) {
      const auto c = back.at<cv::Vec2d>(y, x);
      energy.at(x, y) = c[0] * c[0] + c[1] * c[1];
    }
  }
  return energy;
}

Grid spectral_residual_raw(const ImageBuffer& img, const SpectralResidualParams& params) {
  Grid blurred = gaussian_blur(spectral_residual_energy(img, params), params.blur_sigma);
  return resize_bilinear(blurred, img.width, img.height);
}

SaliencyMap spectral_residual(const ImageBuffer& img) {
  return SaliencyMap::from_raw("spectral_residual", spectral_residual_raw(img));
}

// --------------------------------------------------------- local covariance

namespace {

constexpr int kCovFeatures = 5;
using Covariance = std::array<double, kCovFeatures * kCovFeatures>;

}  // namespace

Grid local_covariance_blocks(const ImageBuffer& img, const LocalCovarianceParams& params) {
  if (img.width < 24 || img.height < 24)
    throw Error(ErrorKind::TooSmall, "local_covariance needs at least 24x24 pixels");
  const int b = params.block;
  if (b < 2) throw Error(ErrorKind::Configuration, "covariance block must be >= 2");
  const Grid lum = to_grayscale(img);
  const int w = img.width, h = img.height;
  const int bw = w / b, bh = h / b;

  std::vector<Covariance> cov(static_cast<std::size_t>(bw) * bh);
  for (int by = 0; by < bh; ++by) {
    for (int bx = 0; bx < bw; ++bx) {
      std::vector<std::array<double, kCovFeatures>> samples;
      samples.reserve(static_cast<std::size_t>(b) * b);
      for (int y = by * b; y < (by + 1) * b; ++y) {
        for (int x = bx * b; x < (bx + 1) * b; ++x) {
          const double gx = 0.5 * (lum.at(reflect_index(x + 1, w), y) - lum.at(reflect_index(x - 1, w), y));
          const double gy = 0.5 * (lum.at(x, reflect_index(y + 1, h)) - lum.at(x, reflect_index(y - 1, h)));
          samples.push_back({static_cast<double>(x) / w, static_cast<double>(y) / h, lum.at(x, y),
                             std::abs(gx), std::abs(gy)});
        }
      }
      std::array<double, kCovFeatures> mean{};
      for (const auto& s : samples)
        for (int k = 0; k < kCovFeatures; ++k) mean[k] += s[k];
      for (double& m : mean) m /= static_cast<double>(samples.size());
      Covariance c{};
      for (const auto& s : samples)
        for (int i = 0; i < kCovFeatures; ++i)
          for (int j = 0; j < kCovFeatures; ++j) c[i * kCovFeatures + j] += (s[i] - mean[i]) * (s[j] - mean[j]);
      for (double& v : c) v /= static_cast<double>(samples.size());
      cov[static_cast<std::size_t>(by) * bw + bx] = c;
    }
  }

  Grid blocks(bw, bh);
  for (int by = 0; by < bh; ++by) {
    for (int bx = 0; bx < bw; ++bx) {
      const Covariance& c = cov[static_cast<std::size_t>(by) * bw + bx];
      double total = 0.0;
      int count = 0;
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          const int nx = bx + dx, ny = by + dy;
          if ((dx == 0 && dy == 0) || nx < 0 || ny < 0 || nx >= bw || ny >= bh) continue;
          const Covariance& o = cov[static_cast<std::size_t>(ny) * bw + nx];
          double frob = 0.0;
          for (int k = 0; k < kCovFeatures * kCovFeatures; ++k) frob += (c[k] - o[k]) * (c[k] - o[k]);
          total += std::sqrt(frob);
          ++count;
        }
      }
      blocks.at(bx, by) = total / count;
    }
  }
  return blocks;
}

Grid local_covariance_raw(const ImageBuffer& img, const LocalCovarianceParams& params) {
  Grid blocks = local_covariance_blocks(img, params);
  // identical covariances differ only by rounding
  flush_flat(blocks);
  return resize_bilinear(blocks, img.width, img.height);
}

SaliencyMap local_covariance(const ImageBuffer& img) {
  return SaliencyMap::from_raw("local_covariance", local_covariance_raw(img));
}

// ---------------------------------------------------------- center gaussian

Grid center_gaussian_grid(int width, int height) {
  if (width <= 0 || height <= 0) throw Error(ErrorKind::InvalidDimensions, "center_gaussian needs positive dimensions");
  Grid g(width, height);
  const double cx = 0.5 * (width - 1), cy = 0.5 * (height - 1);
  const double sigma = std::min(width, height) / 4.0;
  const double inv = 1.0 / (2.0 * sigma * sigma);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) g.at(x, y) = std::exp(-((x - cx) * (x - cx) + (y - cy) * (y - cy)) * inv);
  const double peak = g.max();
  for (double& v : g.values) v /= peak;
  return g;
}

SaliencyMap center_gaussian(int width, int height) {
  return SaliencyMap::from_raw("center_gaussian", center_gaussian_grid(width, height));
}

// --------------------------------------------------------------------- SMF1

namespace {

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint32_t get_u32(std::string_view in, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[at + i])) << (8 * i);
  return v;
}

}  // namespace

std::string encode_smf1(const Grid& map) {
  std::string out = "SMF1";
  out.reserve(12 + map.size() * 4);
  put_u32(out, static_cast<std::uint32_t>(map.width));
  put_u32(out, static_cast<std::uint32_t>(map.height));
  for (double v : map.values) put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  return out;
}

Grid decode_smf1(std::string_view bytes) {
  if (bytes.size() < 12 || bytes.substr(0, 4) != "SMF1") throw Error(ErrorKind::Format, "not an SMF1 map");
  const std::uint32_t w = get_u32(bytes, 4), h = get_u32(bytes, 8);
  if (w == 0 || h == 0 || w > (1u << 16) || h > (1u << 16)) throw Error(ErrorKind::Format, "SMF1 map has invalid dimensions");
  if (bytes.size() != 12 + static_cast<std::size_t>(w) * h * 4) throw Error(ErrorKind::Format, "SMF1 map is truncated");
  Grid g(static_cast<int>(w), static_cast<int>(h));
  for (std::size_t i = 0; i < g.size(); ++i) g.values[i] = std::bit_cast<float>(get_u32(bytes, 12 + 4 * i));
  return g;
}

void write_smf1(const Grid& map, const std::filesystem::path& path) { write_file_atomic(path, encode_smf1(map)); }

Grid read_smf1(const std::filesystem::path& path) { return decode_smf1(read_file(path)); }

}  // namespace salfeat
