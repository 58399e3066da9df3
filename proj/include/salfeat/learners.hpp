#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "salfeat/features.hpp"

namespace salfeat {

struct SvmConfig {
  double C = 0.01;
  int degree = 3;
  std::optional<double> gamma;  // 1 / n_features when unset
  double coef0 = 1.0;
  double tolerance = 1e-3;
  // Scale C per class by n / (2 n_class).
  bool balanced = true;
  long max_iterations = 10'000'000;

  void validate() const;
};

struct GbtConfig {
  int n_estimators = 100;
  int max_depth = 3;
  double learning_rate = 0.1;
  double lambda = 1.0;  // L2 penalty on leaf values, also used in the split gain

  void validate() const;
};

enum class LearnerKind { Svm, Gbt };
const char* to_string(LearnerKind kind);
std::optional<LearnerKind> parse_learner(std::string_view name);

struct LearnerConfig {
  LearnerKind kind = LearnerKind::Svm;
  SvmConfig svm;
  GbtConfig gbt;

  std::string describe() const;
};

// Per-dimension standardization computed on training rows; std 0 becomes 1.
struct Scaling {
  std::vector<double> mean;
  std::vector<double> scale;

  static Scaling fit(const std::vector<std::vector<double>>& rows);
  static Scaling identity(std::size_t n);
  std::vector<double> apply(const std::vector<double>& x) const;
};

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;  // x[feature] <= threshold goes left
  int left = -1;
  int right = -1;
  double value = 0.0;
};

struct Tree {
  std::vector<TreeNode> nodes;  // nodes[0] is the root
  double eval(const std::vector<double>& x) const;
};

struct TrainedModel {
  LearnerKind kind = LearnerKind::Svm;
  std::size_t n_features = 0;
  int positive_class = 0;
  int negative_class = 1;
  Scaling scaling;

  // svm: f(x) = sum coef_i k(sv_i, x) + bias, coef_i = alpha_i y_i
  std::vector<std::vector<double>> support;
  std::vector<double> alpha;  // 0 <= alpha_i <= C (times the class weight when balanced)
  std::vector<double> coef;
  double bias = 0.0;
  double gamma = 0.0;
  int degree = 3;
  double coef0 = 1.0;
  long iterations = 0;

  // gbt: F(x) = base_score + sum of trees; probability sigmoid(F)
  double base_score = 0.0;
  std::vector<Tree> trees;
  std::vector<double> stage_loss;  // training log-loss after the prior and each stage
};

struct Prediction {
  int label = 0;
  double score = 0.0;  // larger means more positive
};

// Binary training sets: y[i] is true for the positive class.
TrainedModel svm_fit(const std::vector<std::vector<double>>& x, const std::vector<bool>& y, const SvmConfig& cfg);
TrainedModel gbt_fit(const std::vector<std::vector<double>>& x, const std::vector<bool>& y, const GbtConfig& cfg);

TrainedModel svm_train(const DesignMatrix& m, const SvmConfig& cfg, std::uint64_t seed);
TrainedModel gbt_train(const DesignMatrix& m, const GbtConfig& cfg, std::uint64_t seed);
TrainedModel train(const DesignMatrix& m, const LearnerConfig& cfg, std::uint64_t seed);

// Raw decision value: svm margin, or gbt log-odds.
double decision_value(const TrainedModel& model, const std::vector<double>& x);
Prediction predict(const TrainedModel& model, const std::vector<double>& x);

struct ClassificationStats {
  std::size_t n = 0, tp = 0, tn = 0, fp = 0, fn = 0;
  double accuracy = 0.0;
  std::optional<double> sensitivity;  // absent without positive labels
  std::optional<double> specificity;  // absent without negative labels
  std::optional<double> auc;          // absent unless both classes occur
};

// truth / predicted are class indices; scores grow toward the positive class.
ClassificationStats classification_report(const std::vector<int>& truth, const std::vector<int>& predicted,
                                          const std::vector<double>& scores, int positive_class);

// Mann-Whitney AUC with ties counted as one half.
double mann_whitney_auc(const std::vector<double>& positive_scores, const std::vector<double>& negative_scores);

enum class Protocol { LeaveOneSubjectOut, LeaveOneImageOut, KFold10, HalfImages, HalfSubjects };
const char* to_string(Protocol p);
std::optional<Protocol> parse_protocol(std::string_view name);

// Rebuilds a design matrix restricted to some rows and shuffle pools.
struct BuildRestriction {
  std::optional<std::set<std::string>> row_images, row_subjects, pool_images, pool_subjects;
  bool operator==(const BuildRestriction&) const = default;
  bool operator<(const BuildRestriction& o) const;
};
using FoldMaterializer = std::function<DesignMatrix(const BuildRestriction&)>;

struct FoldResult {
  std::size_t index = 0;
  std::size_t n_train = 0;
  std::vector<std::string> test_samples;
  bool skipped = false;
  std::string reason;
  ClassificationStats stats;
};

struct CvReport {
  Protocol protocol = Protocol::LeaveOneSubjectOut;
  LearnerConfig learner;
  std::uint64_t seed = 0;
  std::vector<std::string> class_names;
  int positive_class = 0;
  std::vector<std::string> model_ids;
  std::vector<FoldResult> folds;
  std::size_t skipped_folds = 0;
  ClassificationStats pooled;
  std::vector<std::string> sample_ids;  // held-out predictions, in fold order
  std::vector<int> truth, predicted;
  std::vector<double> scores;
};

struct CvOptions {
  const FoldMaterializer* materializer = nullptr;  // required for split-aware task-mode protocols
  std::optional<std::vector<std::string>> model_subset;
  int jobs = 1;
};

CvReport cross_validate(const DesignMatrix& m, Protocol protocol, const LearnerConfig& cfg, std::uint64_t seed,
                        const CvOptions& options = {});

// Throws a leakage error if a training row's shuffle pool covers fixations of a test row.
void check_no_leakage(const DesignMatrix& train, const DesignMatrix& test);

std::string cv_report_json(const CvReport& report);
std::string cv_report_table(const CvReport& report);

struct AblationRow {
  std::size_t size = 0;
  std::vector<std::vector<std::string>> subsets;
  std::vector<double> accuracies;  // percent
  double mean = 0.0;
  double stdev = 0.0;  // population standard deviation over runs
};

struct AblationOptions {
  std::vector<std::size_t> sizes;
  std::size_t repeats = 10;
  CvOptions cv;
};

std::vector<AblationRow> ablation_sweep(const DesignMatrix& m, Protocol protocol, const LearnerConfig& cfg,
                                        std::uint64_t seed, const AblationOptions& options);
std::string ablation_csv(const std::vector<AblationRow>& rows);

}  // namespace salfeat
