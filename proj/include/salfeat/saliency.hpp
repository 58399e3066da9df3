#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "salfeat/imaging.hpp"

namespace salfeat {

// One model's prediction for one image, min-max normalized to [0,1].
// A map without contrast is stored as all zeros with `degenerate` set.
struct SaliencyMap {
  std::string model_id;
  Grid grid;
  bool degenerate = false;

  static SaliencyMap from_raw(std::string model_id, Grid raw);
};

struct SaliencyBank {
  std::string image_id;
  std::vector<SaliencyMap> maps;
};

using ModelParams = std::map<std::string, double>;
using ModelFn = std::function<Grid(const ImageBuffer&, const ModelParams&)>;

struct ModelSpec {
  std::string id;    // unique within a registry; names the feature columns
  std::string kind;  // built-in model name or a custom kind
  ModelParams params;
};

// Ordered set of models. The order defines the feature layout.
class ModelRegistry {
 public:
  // itti_koch, gbvs, spectral_residual, local_covariance, center_gaussian
  static ModelRegistry defaults();
  static std::vector<std::string> builtin_kinds();

  // Adds a built-in model; kind defaults to id.
  void add(const std::string& id, const std::string& kind = {}, ModelParams params = {});
  // Adds a custom model implementation.
  void add_custom(const std::string& id, ModelFn fn, ModelParams params = {});

  std::size_t size() const { return specs_.size(); }
  bool empty() const { return specs_.empty(); }
  const std::vector<ModelSpec>& specs() const { return specs_; }
  std::vector<std::string> ids() const;
  // Canonical text of one model (kind plus sorted parameters); used for cache keys.
  std::string describe(std::size_t i) const;
  std::string hash() const;

  // Raw (unnormalized) output of model i.
  Grid run(std::size_t i, const ImageBuffer& img) const;

 private:
  std::vector<ModelSpec> specs_;
  std::map<std::string, ModelFn> custom_;
};

// Maps in registry order; a failing model fails the whole bank.
SaliencyBank compute_bank(const ModelRegistry& registry, const std::string& image_id, const ImageBuffer& img);
SaliencyMap compute_model(const ModelRegistry& registry, std::size_t i, const ImageBuffer& img);

// --- individual models (raw grids; wrap with SaliencyMap::from_raw) -------

struct IttiKochParams {
  int working_min_side = 256;
};
Grid itti_koch_raw(const ImageBuffer& img, const IttiKochParams& params = {});
SaliencyMap itti_koch(const ImageBuffer& img);

struct GbvsParams {
  int working_width = 32;
  double sigma_fraction = 0.15;  // of the working-map diagonal
  double tolerance = 1e-8;
  int max_iterations = 10000;
  double blur_sigma = 1.5;  // working pixels
};

// Dense row-stochastic transition matrix over the pixels of one feature map.
struct MarkovChain {
  int size = 0;
  std::vector<double> transition;  // row-major size x size
  double at(int i, int j) const { return transition[static_cast<std::size_t>(i) * size + j]; }
};

struct Equilibrium {
  std::vector<double> distribution;
  double residual = 0.0;  // L1 norm of pi P - pi
  int iterations = 0;
};

MarkovChain gbvs_chain(const Grid& feature, double sigma);
// Stationary distribution by (lazy) power iteration from the uniform vector.
Equilibrium stationary_distribution(const MarkovChain& chain, double tolerance = 1e-8,
                                    int max_iterations = 10000);
// Feature maps (intensity, colour opponency when present, orientations) at the working size.
std::vector<Grid> gbvs_feature_maps(const ImageBuffer& img, const GbvsParams& params = {});
Grid gbvs_raw(const ImageBuffer& img, const GbvsParams& params = {});
SaliencyMap gbvs(const ImageBuffer& img);

struct SpectralResidualParams {
  int working_width = 64;
  double blur_sigma = 2.5;
};
// Squared-magnitude map at the working size, before blur and resize.
Grid spectral_residual_energy(const ImageBuffer& img, const SpectralResidualParams& params = {});
Grid spectral_residual_raw(const ImageBuffer& img, const SpectralResidualParams& params = {});
SaliencyMap spectral_residual(const ImageBuffer& img);

struct LocalCovarianceParams {
  int block = 8;
};
// Block-level contrast values (blocks_x by blocks_y).
Grid local_covariance_blocks(const ImageBuffer& img, const LocalCovarianceParams& params = {});
Grid local_covariance_raw(const ImageBuffer& img, const LocalCovarianceParams& params = {});
SaliencyMap local_covariance(const ImageBuffer& img);

// Gaussian centered on the image, sigma = min(w,h)/4, peak 1.
Grid center_gaussian_grid(int width, int height);
SaliencyMap center_gaussian(int width, int height);

// --- SMF1 map files -------------------------------------------------------
// "SMF1", u32 width, u32 height (little endian), then float32 values row-major.
void write_smf1(const Grid& map, const std::filesystem::path& path);
Grid read_smf1(const std::filesystem::path& path);
std::string encode_smf1(const Grid& map);
Grid decode_smf1(std::string_view bytes);

}  // namespace salfeat
