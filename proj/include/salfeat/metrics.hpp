#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "salfeat/gaze_data.hpp"
#include "salfeat/random.hpp"
#include "salfeat/saliency.hpp"

namespace salfeat {

// Canonical metric order; feature columns follow it.
enum class MetricId { AucJudd, AucBorji, Sauc, Nss, Cc, Sim, KlDiv, InfoGain };

inline constexpr std::array<MetricId, 8> kAllMetrics = {
    MetricId::AucJudd, MetricId::AucBorji, MetricId::Sauc, MetricId::Nss,
    MetricId::Cc,      MetricId::Sim,      MetricId::KlDiv, MetricId::InfoGain};

const char* to_string(MetricId id);
std::optional<MetricId> parse_metric(std::string_view name);

// Negative locations for shuffled AUC, sorted and unique.
struct ShuffleSet {
  std::vector<Pixel> negatives;
};

// Deduplicates `points`; if more than `cap` remain, keeps a seeded random subset of size cap.
ShuffleSet make_shuffle_set(std::vector<Pixel> points, std::size_t cap, Rng& rng);

// All maps must share the fixation map's dimensions.
double nss(const Grid& saliency, const FixationMap& fix);
double cc(const Grid& a, const Grid& b);
double sim(const Grid& saliency, const DensityMap& density);
double kl_div(const Grid& saliency, const DensityMap& density);
double auc_judd(const Grid& saliency, const FixationMap& fix);
double auc_borji(const Grid& saliency, const FixationMap& fix, int n_splits, Rng& rng);
double sauc(const Grid& saliency, const FixationMap& fix, const ShuffleSet& shuffle, int n_splits, Rng& rng);
// Bits per fixation relative to `baseline`.
double info_gain(const Grid& saliency, const FixationMap& fix, const DensityMap& baseline);

// ROC area with 101 thresholds at 0.01 steps; inputs are values in [0,1].
double roc_area_fixed_thresholds(std::vector<double> positives, std::vector<double> negatives);

struct MetricConfig {
  std::vector<MetricId> enabled{kAllMetrics.begin(), kAllMetrics.end()};
  int n_splits = 100;

  // enabled metrics in canonical order, duplicates removed
  std::vector<MetricId> ordered() const;
  std::string describe() const;
};

struct EvalVector {
  std::vector<MetricId> metric_ids;
  std::vector<double> values;
  std::vector<bool> degenerate;  // fallback value substituted

  std::size_t degenerate_count() const;
};

struct EvalInputs {
  const Grid* saliency = nullptr;
  const FixationMap* fixations = nullptr;
  const DensityMap* density = nullptr;   // for cc, sim, kl_div
  const ShuffleSet* shuffle = nullptr;   // for sauc
  const DensityMap* baseline = nullptr;  // for info_gain
};

// Metrics in canonical order. A constant saliency map yields the documented
// fallbacks (nss, cc -> 0; AUCs -> 0.5; sim, kl_div, info_gain computed
// against a uniform map) with the degenerate flag set. Random streams are
// derived from `seed` and the metric name.
EvalVector evaluate_all(const EvalInputs& in, const MetricConfig& config, std::uint64_t seed);

}  // namespace salfeat
