#include "support.hpp"

#include <cmath>
#include <set>

#include <Eigen/Eigenvalues>

namespace testing {

std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::path(SALFEAT_TEST_TMP) / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

Grid random_grid(int w, int h, salfeat::Rng& rng) {
  Grid g(w, h);
  for (double& v : g.values) v = salfeat::uniform_unit(rng);
  return g;
}

FixationMap random_fixations(int w, int h, std::size_t k, salfeat::Rng& rng) {
  std::set<Pixel> picked;
  while (picked.size() < k) {
    const int x = static_cast<int>(salfeat::uniform_index(rng, w));
    const int y = static_cast<int>(salfeat::uniform_index(rng, h));
    picked.insert({x, y});
  }
  std::vector<salfeat::FixationRecord> records;
  for (const auto& p : picked) records.push_back({"s", "i", 0, p.x + 0.5, p.y + 0.5, std::nullopt});
  return salfeat::build_fixation_map(records, w, h);
}

ImageBuffer constant_image(int w, int h, double v, int channels) { return ImageBuffer(w, h, channels, v); }

ImageBuffer disk_image(int w, int h, double cx, double cy, double r) {
  ImageBuffer img(w, h, 3, 0.0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      if (std::hypot(x + 0.5 - cx, y + 0.5 - cy) <= r)
        for (int c = 0; c < 3; ++c) img.at(x, y, c) = 1.0;
  return img;
}

double brute_auc(const Grid& s, const FixationMap& fix) {
  std::vector<double> pos, neg;
  for (int y = 0; y < s.height; ++y)
    for (int x = 0; x < s.width; ++x) (fix.contains({x, y}) ? pos : neg).push_back(s.at(x, y));
  double wins = 0;
  for (double p : pos)
    for (double n : neg) wins += p > n ? 1.0 : (p == n ? 0.5 : 0.0);
  return wins / (double(pos.size()) * double(neg.size()));
}

namespace {
double mean_of(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += x;
  return s / double(v.size());
}
double pop_std(const std::vector<double>& v) {
  const double m = mean_of(v);
  double s = 0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / double(v.size()));
}
}  // namespace

double direct_nss(const Grid& s, const FixationMap& fix) {
  const double m = mean_of(s.values), sd = pop_std(s.values);
  double acc = 0;
  for (const auto& p : fix.hits()) acc += (s.at(p.x, p.y) - m) / sd;
  return acc / double(fix.hits().size());
}

double direct_cc(const Grid& a, const Grid& b) {
  const double ma = mean_of(a.values), mb = mean_of(b.values);
  double num = 0, da = 0, db = 0;
  for (std::size_t i = 0; i < a.values.size(); ++i) {
    num += (a.values[i] - ma) * (b.values[i] - mb);
    da += (a.values[i] - ma) * (a.values[i] - ma);
    db += (b.values[i] - mb) * (b.values[i] - mb);
  }
  return num / std::sqrt(da * db);
}

double direct_sim(const Grid& s, const Grid& d) {
  double ss = 0, sd = 0;
  for (double v : s.values) ss += v;
  for (double v : d.values) sd += v;
  double acc = 0;
  for (std::size_t i = 0; i < s.values.size(); ++i) acc += std::min(s.values[i] / ss, d.values[i] / sd);
  return acc;
}

double direct_kl(const Grid& s, const Grid& d) {
  double ss = 0;
  for (double v : s.values) ss += v;
  double acc = 0;
  for (std::size_t i = 0; i < s.values.size(); ++i)
    if (d.values[i] > 0) acc += d.values[i] * std::log(d.values[i] / (s.values[i] / ss + 1e-12));
  return acc;
}

std::vector<double> dense_stationary(const salfeat::MarkovChain& chain) {
  const int n = chain.size;
  Eigen::MatrixXd pt(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) pt(j, i) = chain.at(i, j);  // transpose: pi P = pi  <=>  P^T pi^T = pi^T
  Eigen::EigenSolver<Eigen::MatrixXd> solver(pt);
  int best = 0;
  for (int k = 1; k < n; ++k)
    if (std::abs(solver.eigenvalues()[k] - 1.0) < std::abs(solver.eigenvalues()[best] - 1.0)) best = k;
  Eigen::VectorXd v = solver.eigenvectors().col(best).real();
  v /= v.sum();
  return {v.data(), v.data() + n};
}

}  // namespace testing
