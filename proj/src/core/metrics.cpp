#include "salfeat/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "salfeat/error.hpp"

namespace salfeat {

namespace {

constexpr double kEps = 1e-12;

void require_shape(const Grid& s, int w, int h, const char* what) {
  if (s.width != w || s.height != h)
    throw Error(ErrorKind::Shape, std::string(what) + ": saliency map is " + std::to_string(s.width) + "x" +
                                      std::to_string(s.height) + ", fixation data is " + std::to_string(w) + "x" +
                                      std::to_string(h));
}

void require_hits(const FixationMap& fix, const char* what) {
  if (fix.empty()) throw Error(ErrorKind::NoFixation, std::string(what) + ": fixation map has no hits");
}

struct Moments {
  double mean = 0.0;
  double stddev = 0.0;  // population
};

Moments moments(const std::vector<double>& v) {
  Moments m;
  m.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - m.mean) * (x - m.mean);
  m.stddev = std::sqrt(ss / static_cast<double>(v.size()));
  return m;
}

bool is_constant(const std::vector<double>& v) {
  return std::all_of(v.begin(), v.end(), [&](double x) { return x == v.front(); });
}

std::vector<double> to_probability(const Grid& s, const char* what) {
  const double total = s.sum();
  if (!(total > 0.0)) throw Error(ErrorKind::DegenerateMap, std::string(what) + ": saliency map has no mass");
  std::vector<double> p(s.values);
  for (double& v : p) v /= total;
  return p;
}

std::vector<double> min_max_values(const Grid& s) {
  std::vector<double> v(s.values);
  const double lo = s.min(), hi = s.max();
  if (hi > lo) {
    for (double& x : v) x = (x - lo) / (hi - lo);
  } else {
    std::fill(v.begin(), v.end(), 0.0);
  }
  return v;
}

double value_at(const Grid& s, Pixel p) { return s.at(p.x, p.y); }

}  // namespace

const char* to_string(MetricId id) {
  switch (id) {
    case MetricId::AucJudd: return "auc_judd";
    case MetricId::AucBorji: return "auc_borji";
    case MetricId::Sauc: return "sauc";
    case MetricId::Nss: return "nss";
    case MetricId::Cc: return "cc";
    case MetricId::Sim: return "sim";
    case MetricId::KlDiv: return "kl_div";
    case MetricId::InfoGain: return "info_gain";
  }
  return "unknown";
}

std::optional<MetricId> parse_metric(std::string_view name) {
  for (MetricId id : kAllMetrics)
    if (name == to_string(id)) return id;
  return std::nullopt;
}

ShuffleSet make_shuffle_set(std::vector<Pixel> points, std::size_t cap, Rng& rng) {
  std::sort(points.begin(), points.end());
  points.erase(std::unique(points.begin(), points.end()), points.end());
  if (points.size() > cap) {
    // partial Fisher-Yates
    for (std::size_t i = 0; i < cap; ++i) std::swap(points[i], points[i + uniform_index(rng, points.size() - i)]);
    points.resize(cap);
    std::sort(points.begin(), points.end());
  }
  return {std::move(points)};
}

double nss(const Grid& s, const FixationMap& fix) {
  require_shape(s, fix.width(), fix.height(), "nss");
  require_hits(fix, "nss");
  const Moments m = moments(s.values);
  if (!(m.stddev > 0.0)) throw Error(ErrorKind::DegenerateMap, "nss: saliency map is constant");
  double total = 0.0;
  for (Pixel p : fix.hits()) total += (value_at(s, p) - m.mean) / m.stddev;
  return total / static_cast<double>(fix.hits().size());
}

double cc(const Grid& a, const Grid& b) {
  if (!a.same_shape(b)) throw Error(ErrorKind::Shape, "cc: maps differ in dimensions");
  const Moments ma = moments(a.values), mb = moments(b.values);
  if (!(ma.stddev > 0.0) || !(mb.stddev > 0.0)) throw Error(ErrorKind::DegenerateMap, "cc: constant map");
  double cov = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) cov += (a.values[i] - ma.mean) * (b.values[i] - mb.mean);
  cov /= static_cast<double>(a.size());
  return std::clamp(cov / (ma.stddev * mb.stddev), -1.0, 1.0);
}

double sim(const Grid& s, const DensityMap& d) {
  require_shape(s, d.grid.width, d.grid.height, "sim");
  const auto p = to_probability(s, "sim");
  const double dsum = d.grid.sum();
  double total = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) total += std::min(p[i], d.grid.values[i] / dsum);
  return total;
}

double kl_div(const Grid& s, const DensityMap& d) {
  require_shape(s, d.grid.width, d.grid.height, "kl_div");
  const auto p = to_probability(s, "kl_div");
  const double dsum = d.grid.sum();
  double total = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double q = d.grid.values[i] / dsum;
    if (q > 0.0) total += q * std::log(q / (p[i] + kEps));
  }
  return total;
}

double auc_judd(const Grid& s, const FixationMap& fix) {
  require_shape(s, fix.width(), fix.height(), "auc_judd");
  require_hits(fix, "auc_judd");
  const std::size_t n_pos = fix.hits().size();
  const std::size_t n_neg = s.size() - n_pos;
  if (n_neg == 0) throw Error(ErrorKind::UndefinedNegative, "auc_judd: every pixel is fixated");
  std::vector<double> pos;
  pos.reserve(n_pos);
  for (Pixel p : fix.hits()) pos.push_back(value_at(s, p));
  std::sort(pos.begin(), pos.end());
  // Mann-Whitney: for every negative, positives above it count 1, ties 1/2
  const Grid marks = fix.to_grid();
  double u = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (marks.values[i] != 0.0) continue;
    const double v = s.values[i];
    const auto lo = std::lower_bound(pos.begin(), pos.end(), v);
    const auto hi = std::upper_bound(lo, pos.end(), v);
    u += static_cast<double>(pos.end() - hi) + 0.5 * static_cast<double>(hi - lo);
  }
  return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

double roc_area_fixed_thresholds(std::vector<double> positives, std::vector<double> negatives) {
  std::sort(positives.begin(), positives.end());
  std::sort(negatives.begin(), negatives.end());
  auto frac_at_least = [](const std::vector<double>& v, double t) {
    return static_cast<double>(v.end() - std::lower_bound(v.begin(), v.end(), t)) / static_cast<double>(v.size());
  };
  double area = 0.0, prev_tp = 0.0, prev_fp = 0.0;
  for (int k = 100; k >= 0; --k) {
    const double t = k / 100.0;
    const double tp = frac_at_least(positives, t), fp = frac_at_least(negatives, t);
    area += 0.5 * (fp - prev_fp) * (tp + prev_tp);
    prev_tp = tp;
    prev_fp = fp;
  }
  area += 0.5 * (1.0 - prev_fp) * (1.0 + prev_tp);
  return area;
}

double auc_borji(const Grid& s, const FixationMap& fix, int n_splits, Rng& rng) {
  require_shape(s, fix.width(), fix.height(), "auc_borji");
  require_hits(fix, "auc_borji");
  if (n_splits < 1) throw Error(ErrorKind::Configuration, "auc_borji: n_splits must be >= 1");
  const auto v = min_max_values(s);
  std::vector<double> pos;
  for (Pixel p : fix.hits()) pos.push_back(v[static_cast<std::size_t>(p.y) * s.width + p.x]);
  double total = 0.0;
  std::vector<double> neg(pos.size());
  for (int split = 0; split < n_splits; ++split) {
    for (double& n : neg) n = v[uniform_index(rng, v.size())];
    total += roc_area_fixed_thresholds(pos, neg);
  }
  return total / n_splits;
}

double sauc(const Grid& s, const FixationMap& fix, const ShuffleSet& shuffle, int n_splits, Rng& rng) {
  require_shape(s, fix.width(), fix.height(), "sauc");
  require_hits(fix, "sauc");
  if (n_splits < 1) throw Error(ErrorKind::Configuration, "sauc: n_splits must be >= 1");
  std::vector<Pixel> pool;
  for (Pixel p : shuffle.negatives) {
    if (p.x < 0 || p.y < 0 || p.x >= s.width || p.y >= s.height)
      throw Error(ErrorKind::Shape, "sauc: shuffle location outside the map");
    if (!fix.contains(p)) pool.push_back(p);
  }
  if (pool.empty()) throw Error(ErrorKind::EmptyNegative, "sauc: no shuffle locations outside the fixations");
  const auto v = min_max_values(s);
  auto at = [&](Pixel p) { return v[static_cast<std::size_t>(p.y) * s.width + p.x]; };
  std::vector<double> pos;
  for (Pixel p : fix.hits()) pos.push_back(at(p));
  double total = 0.0;
  std::vector<double> neg(pos.size());
  for (int split = 0; split < n_splits; ++split) {
    for (double& n : neg) n = at(pool[uniform_index(rng, pool.size())]);
    total += roc_area_fixed_thresholds(pos, neg);
  }
  return total / n_splits;
}

double info_gain(const Grid& s, const FixationMap& fix, const DensityMap& baseline) {
  require_shape(s, fix.width(), fix.height(), "info_gain");
  require_shape(baseline.grid, fix.width(), fix.height(), "info_gain baseline");
  require_hits(fix, "info_gain");
  const auto p = to_probability(s, "info_gain");
  const double bsum = baseline.grid.sum();
  double total = 0.0;
  for (Pixel h : fix.hits()) {
    const std::size_t i = static_cast<std::size_t>(h.y) * s.width + h.x;
    total += std::log2(kEps + p[i]) - std::log2(kEps + baseline.grid.values[i] / bsum);
  }
  return total / static_cast<double>(fix.hits().size());
}

std::vector<MetricId> MetricConfig::ordered() const {
  std::vector<MetricId> out;
  for (MetricId id : kAllMetrics)
    if (std::find(enabled.begin(), enabled.end(), id) != enabled.end()) out.push_back(id);
  return out;
}

std::string MetricConfig::describe() const {
  std::string out;
  for (MetricId id : ordered()) out += std::string(to_string(id)) + ",";
  return out + "n_splits=" + std::to_string(n_splits);
}

std::size_t EvalVector::degenerate_count() const {
  return static_cast<std::size_t>(std::count(degenerate.begin(), degenerate.end(), true));
}

EvalVector evaluate_all(const EvalInputs& in, const MetricConfig& config, std::uint64_t seed) {
  if (!in.saliency || !in.fixations) throw Error(ErrorKind::EmptyInput, "evaluate_all needs a map and fixations");
  const auto metrics = config.ordered();
  if (metrics.empty()) throw Error(ErrorKind::Configuration, "no metrics enabled");
  const Grid& s = *in.saliency;
  const FixationMap& fix = *in.fixations;
  require_shape(s, fix.width(), fix.height(), "evaluate_all");
  require_hits(fix, "evaluate_all");
  const bool flat = is_constant(s.values);
  // a flat map as a distribution is uniform
  const Grid uniform(s.width, s.height, 1.0);
  const Grid& as_distribution = flat ? uniform : s;

  auto need = [](const auto* p, const char* what) -> decltype(auto) {
    if (!p) throw Error(ErrorKind::EmptyInput, std::string("evaluate_all: missing ") + what);
    return *p;
  };

  EvalVector out;
  for (MetricId id : metrics) {
    Rng rng(derive_seed(seed, to_string(id)));
    double value = 0.0;
    bool fallback = false;
    switch (id) {
      case MetricId::AucJudd:
        fallback = flat;
        value = flat ? 0.5 : auc_judd(s, fix);
        break;
      case MetricId::AucBorji:
        fallback = flat;
        value = flat ? 0.5 : auc_borji(s, fix, config.n_splits, rng);
        break;
      case MetricId::Sauc: {
        const auto& shuffle = need(in.shuffle, "shuffle set");
        // validate the shuffle pool even when the value is a fallback
        if (flat) {
          value = 0.5;
          fallback = true;
          (void)sauc(uniform, fix, shuffle, 1, rng);
        } else {
          value = sauc(s, fix, shuffle, config.n_splits, rng);
        }
        break;
      }
      case MetricId::Nss:
        fallback = flat;
        value = flat ? 0.0 : nss(s, fix);
        break;
      case MetricId::Cc:
        try {
          value = cc(s, need(in.density, "density").grid);
        } catch (const Error& e) {
          if (e.kind() != ErrorKind::DegenerateMap) throw;
          value = 0.0;
          fallback = true;
        }
        break;
      case MetricId::Sim:
        fallback = flat;
        value = sim(as_distribution, need(in.density, "density"));
        break;
      case MetricId::KlDiv:
        fallback = flat;
        value = kl_div(as_distribution, need(in.density, "density"));
        break;
      case MetricId::InfoGain:
        fallback = flat;
        value = info_gain(as_distribution, fix, need(in.baseline, "baseline"));
        break;
    }
    if (!std::isfinite(value))
      throw Error(ErrorKind::DegenerateMap, std::string("metric ") + to_string(id) + " is not finite");
    out.metric_ids.push_back(id);
    out.values.push_back(value);
    out.degenerate.push_back(fallback);
  }
  return out;
}

}  // namespace salfeat
