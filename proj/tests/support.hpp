#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "salfeat/gaze_data.hpp"
#include "salfeat/imaging.hpp"
#include "salfeat/random.hpp"
#include "salfeat/saliency.hpp"

namespace testing {

using salfeat::FixationMap;
using salfeat::Grid;
using salfeat::ImageBuffer;
using salfeat::Pixel;

// Fresh empty directory under the build tree.
std::filesystem::path scratch_dir(const std::string& name);

Grid random_grid(int w, int h, salfeat::Rng& rng);
// k distinct random pixels, 1 <= k < w*h.
FixationMap random_fixations(int w, int h, std::size_t k, salfeat::Rng& rng);

ImageBuffer constant_image(int w, int h, double v, int channels = 3);
ImageBuffer disk_image(int w, int h, double cx, double cy, double r);

// --- independent metric oracles (direct formulas, no shortcuts) ---
double brute_auc(const Grid& s, const FixationMap& fix);  // all pairs, ties 1/2
double direct_nss(const Grid& s, const FixationMap& fix);
double direct_cc(const Grid& a, const Grid& b);
double direct_sim(const Grid& s, const Grid& d);
double direct_kl(const Grid& s, const Grid& d);

// Stationary distribution of a row-stochastic matrix by dense eigen-decomposition.
std::vector<double> dense_stationary(const salfeat::MarkovChain& chain);

}  // namespace testing
