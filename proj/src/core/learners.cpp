#include "salfeat/learners.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <mutex>
#include <numeric>
#include <sstream>
#include <tuple>

#include <json.hpp>

#include "salfeat/error.hpp"
#include "salfeat/parallel.hpp"
#include "salfeat/random.hpp"
#include "salfeat/text.hpp"
#include "salfeat/version.hpp"

namespace salfeat {

using nlohmann::ordered_json;

void SvmConfig::validate() const {
  if (!(C > 0) || !std::isfinite(C)) throw Error(ErrorKind::Configuration, "svm C must be positive");
  if (degree < 1) throw Error(ErrorKind::Configuration, "svm degree must be at least 1");
  if (gamma && !(*gamma > 0)) throw Error(ErrorKind::Configuration, "svm gamma must be positive");
  if (!std::isfinite(coef0)) throw Error(ErrorKind::Configuration, "svm coef0 must be finite");
  if (!(tolerance > 0)) throw Error(ErrorKind::Configuration, "svm tolerance must be positive");
  if (max_iterations < 1) throw Error(ErrorKind::Configuration, "svm max_iterations must be at least 1");
}

void GbtConfig::validate() const {
  if (n_estimators < 1) throw Error(ErrorKind::Configuration, "gbt n_estimators must be at least 1");
  if (max_depth < 1) throw Error(ErrorKind::Configuration, "gbt max_depth must be at least 1");
  if (!(learning_rate > 0) || !std::isfinite(learning_rate))
    throw Error(ErrorKind::Configuration, "gbt learning_rate must be positive");
  if (!(lambda >= 0) || !std::isfinite(lambda)) throw Error(ErrorKind::Configuration, "gbt lambda must be non-negative");
}

const char* to_string(LearnerKind kind) { return kind == LearnerKind::Svm ? "svm" : "gbt"; }

std::optional<LearnerKind> parse_learner(std::string_view name) {
  if (name == "svm") return LearnerKind::Svm;
  if (name == "gbt") return LearnerKind::Gbt;
  return std::nullopt;
}

std::string LearnerConfig::describe() const {
  ordered_json j;
  j["kind"] = to_string(kind);
  if (kind == LearnerKind::Svm) {
    j["C"] = svm.C;
    j["kernel"] = "polynomial";
    j["degree"] = svm.degree;
    if (svm.gamma) j["gamma"] = *svm.gamma;
    else j["gamma"] = "1/n_features";
    j["coef0"] = svm.coef0;
    j["tolerance"] = svm.tolerance;
    j["class_weight"] = svm.balanced ? "balanced" : "none";
  } else {
    j["n_estimators"] = gbt.n_estimators;
    j["max_depth"] = gbt.max_depth;
    j["learning_rate"] = gbt.learning_rate;
    j["lambda"] = gbt.lambda;
    j["loss"] = "logistic";
  }
  return j.dump();
}

// ---------------------------------------------------------------- scaling

Scaling Scaling::fit(const std::vector<std::vector<double>>& rows) {
  if (rows.empty()) throw Error(ErrorKind::EmptyInput, "cannot standardize zero rows");
  const std::size_t d = rows.front().size();
  Scaling s;
  s.mean.assign(d, 0.0);
  s.scale.assign(d, 0.0);
  for (const auto& r : rows)
    for (std::size_t k = 0; k < d; ++k) s.mean[k] += r[k];
  for (double& m : s.mean) m /= static_cast<double>(rows.size());
  for (const auto& r : rows)
    for (std::size_t k = 0; k < d; ++k) s.scale[k] += (r[k] - s.mean[k]) * (r[k] - s.mean[k]);
  for (double& v : s.scale) {
    v = std::sqrt(v / static_cast<double>(rows.size()));
    if (!(v > 1e-12)) v = 1.0;
  }
  return s;
}

Scaling Scaling::identity(std::size_t n) {
  Scaling s;
  s.mean.assign(n, 0.0);
  s.scale.assign(n, 1.0);
  return s;
}

std::vector<double> Scaling::apply(const std::vector<double>& x) const {
  std::vector<double> out(x.size());
  for (std::size_t k = 0; k < x.size(); ++k) out[k] = (x[k] - mean[k]) / scale[k];
  return out;
}

double Tree::eval(const std::vector<double>& x) const {
  int n = 0;
  while (nodes[n].feature >= 0) n = x[nodes[n].feature] <= nodes[n].threshold ? nodes[n].left : nodes[n].right;
  return nodes[n].value;
}

// ---------------------------------------------------------------- training

namespace {

void check_training_set(const std::vector<std::vector<double>>& x, const std::vector<bool>& y) {
  if (x.empty() || x.size() != y.size()) throw Error(ErrorKind::Shape, "training rows and labels differ in length");
  const std::size_t d = x.front().size();
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (x[i].size() != d) throw Error(ErrorKind::Layout, "training rows differ in length");
    for (double v : x[i])
      if (!std::isfinite(v)) throw Error(ErrorKind::Validation, "non-finite feature in training row " + std::to_string(i));
  }
  const auto pos = std::count(y.begin(), y.end(), true);
  if (pos == 0 || pos == static_cast<long>(y.size()))
    throw Error(ErrorKind::DegenerateLabel, "training labels contain a single class");
}

double poly_kernel(const std::vector<double>& a, const std::vector<double>& b, double gamma, double coef0, int degree) {
  double dot = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) dot += a[k] * b[k];
  return std::pow(gamma * dot + coef0, degree);
}

double softplus(double z) { return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }
double sigmoid(double z) { return z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z)); }

double mean_log_loss(const std::vector<double>& f, const std::vector<bool>& y) {
  double s = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i) s += y[i] ? softplus(-f[i]) : softplus(f[i]);
  return s / static_cast<double>(f.size());
}

struct TreeBuilder {
  const std::vector<std::vector<double>>& x;
  const std::vector<double>& g;
  const std::vector<double>& h;
  const GbtConfig& cfg;
  Tree tree;

  int build(std::vector<std::size_t> rows, int depth) {
    double G = 0.0, H = 0.0;
    for (std::size_t i : rows) {
      G += g[i];
      H += h[i];
    }
    const int id = static_cast<int>(tree.nodes.size());
    tree.nodes.push_back({});
    tree.nodes[id].value = -cfg.learning_rate * G / (H + cfg.lambda);
    if (depth >= cfg.max_depth || rows.size() < 2) return id;

    const double parent = G * G / (H + cfg.lambda);
    double best_gain = 1e-12;
    int best_feature = -1;
    double best_threshold = 0.0;
    std::vector<std::size_t> order = rows;
    for (std::size_t f = 0; f < x.front().size(); ++f) {
      std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return x[a][f] < x[b][f] || (x[a][f] == x[b][f] && a < b);
      });
      double GL = 0.0, HL = 0.0;
      for (std::size_t k = 0; k + 1 < order.size(); ++k) {
        GL += g[order[k]];
        HL += h[order[k]];
        const double lo = x[order[k]][f], hi = x[order[k + 1]][f];
        if (!(lo < hi)) continue;
        const double GR = G - GL, HR = H - HL;
        const double gain = GL * GL / (HL + cfg.lambda) + GR * GR / (HR + cfg.lambda) - parent;
        if (gain > best_gain) {
          best_gain = gain;
          best_feature = static_cast<int>(f);
          best_threshold = lo;
        }
      }
    }
    if (best_feature < 0) return id;

    std::vector<std::size_t> left, right;
    for (std::size_t i : rows) (x[i][best_feature] <= best_threshold ? left : right).push_back(i);
    const int l = build(std::move(left), depth + 1);
    const int r = build(std::move(right), depth + 1);
    TreeNode& node = tree.nodes[id];
    node.feature = best_feature;
    node.threshold = best_threshold;
    node.left = l;
    node.right = r;
    return id;
  }
};

std::pair<std::vector<std::vector<double>>, std::vector<bool>> binary_rows(const DesignMatrix& m) {
  if (m.class_names.size() != 2)
    throw Error(ErrorKind::Configuration, "classification is binary; the manifest declares " +
                                              std::to_string(m.class_names.size()) + " classes");
  std::vector<std::vector<double>> x;
  std::vector<bool> y;
  for (const auto& r : m.rows) {
    if (r.features.size() != m.layout.size()) throw Error(ErrorKind::Layout, "row '" + r.sample_id + "' does not match the layout");
    x.push_back(r.features);
    y.push_back(r.label == m.positive_class);
  }
  if (x.empty()) throw Error(ErrorKind::EmptyInput, "no training rows");
  return {std::move(x), std::move(y)};
}

}  // namespace

TrainedModel svm_fit(const std::vector<std::vector<double>>& raw, const std::vector<bool>& labels, const SvmConfig& cfg) {
  cfg.validate();
  check_training_set(raw, labels);
  const std::size_t l = raw.size();
  const std::size_t d = raw.front().size();

  TrainedModel model;
  model.kind = LearnerKind::Svm;
  model.n_features = d;
  model.scaling = Scaling::fit(raw);
  model.gamma = cfg.gamma ? *cfg.gamma : 1.0 / static_cast<double>(std::max<std::size_t>(d, 1));
  model.degree = cfg.degree;
  model.coef0 = cfg.coef0;

  std::vector<std::vector<double>> x;
  for (const auto& r : raw) x.push_back(model.scaling.apply(r));
  std::vector<double> y(l);
  for (std::size_t i = 0; i < l; ++i) y[i] = labels[i] ? 1.0 : -1.0;

  // Q_ij = y_i y_j k(x_i, x_j)
  std::vector<double> Q(l * l);
  for (std::size_t i = 0; i < l; ++i)
    for (std::size_t j = i; j < l; ++j)
      Q[i * l + j] = Q[j * l + i] = y[i] * y[j] * poly_kernel(x[i], x[j], model.gamma, cfg.coef0, cfg.degree);

  // Per-sample box. Balanced weights give both classes the same total
  // budget, so the class sizes of a training split do not tilt the bias.
  const double n_pos = static_cast<double>(std::count(labels.begin(), labels.end(), true));
  const double n_neg = static_cast<double>(l) - n_pos;
  std::vector<double> box(l, cfg.C);
  if (cfg.balanced)
    for (std::size_t t = 0; t < l; ++t) box[t] = cfg.C * static_cast<double>(l) / (2.0 * (labels[t] ? n_pos : n_neg));
  constexpr double kTau = 1e-12;
  std::vector<double> alpha(l, 0.0), G(l, -1.0);
  auto upper = [&](std::size_t t) { return alpha[t] >= box[t]; };
  auto lower = [&](std::size_t t) { return alpha[t] <= 0.0; };

  long iter = 0;
  for (; iter < cfg.max_iterations; ++iter) {
    // maximal violating pair with second-order choice of j
    double gmax = -std::numeric_limits<double>::infinity();
    std::ptrdiff_t i = -1;
    for (std::size_t t = 0; t < l; ++t) {
      if (y[t] > 0 ? !upper(t) : !lower(t)) {
        const double v = -y[t] * G[t];
        if (v > gmax) {
          gmax = v;
          i = static_cast<std::ptrdiff_t>(t);
        }
      }
    }
    double gmax2 = -std::numeric_limits<double>::infinity();
    std::ptrdiff_t j = -1;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t t = 0; t < l && i >= 0; ++t) {
      if (y[t] > 0 ? lower(t) : upper(t)) continue;
      const double v = y[t] * G[t];
      gmax2 = std::max(gmax2, v);
      const double grad_diff = gmax + v;
      if (grad_diff > 0) {
        double quad = Q[i * l + i] + Q[t * l + t] - 2.0 * y[i] * y[t] * Q[i * l + t];
        if (quad <= 0) quad = kTau;
        const double obj = -grad_diff * grad_diff / quad;
        if (obj < best) {
          best = obj;
          j = static_cast<std::ptrdiff_t>(t);
        }
      }
    }
    if (i < 0 || j < 0 || gmax + gmax2 < cfg.tolerance) break;

    const double ai = alpha[i], aj = alpha[j];
    const double Ci = box[i], Cj = box[j];
    if (y[i] != y[j]) {
      double quad = Q[i * l + i] + Q[j * l + j] + 2.0 * Q[i * l + j];
      if (quad <= 0) quad = kTau;
      const double delta = (-G[i] - G[j]) / quad;
      const double diff = alpha[i] - alpha[j];
      alpha[i] += delta;
      alpha[j] += delta;
      if (diff > 0) {
        if (alpha[j] < 0) {
          alpha[j] = 0;
          alpha[i] = diff;
        }
      } else if (alpha[i] < 0) {
        alpha[i] = 0;
        alpha[j] = -diff;
      }
      if (diff > Ci - Cj) {
        if (alpha[i] > Ci) {
          alpha[i] = Ci;
          alpha[j] = Ci - diff;
        }
      } else if (alpha[j] > Cj) {
        alpha[j] = Cj;
        alpha[i] = Cj + diff;
      }
    } else {
      double quad = Q[i * l + i] + Q[j * l + j] - 2.0 * Q[i * l + j];
      if (quad <= 0) quad = kTau;
      const double delta = (G[i] - G[j]) / quad;
      const double sum = alpha[i] + alpha[j];
      alpha[i] -= delta;
      alpha[j] += delta;
      if (sum > Ci) {
        if (alpha[i] > Ci) {
          alpha[i] = Ci;
          alpha[j] = sum - Ci;
        }
      } else if (alpha[j] < 0) {
        alpha[j] = 0;
        alpha[i] = sum;
      }
      if (sum > Cj) {
        if (alpha[j] > Cj) {
          alpha[j] = Cj;
          alpha[i] = sum - Cj;
        }
      } else if (alpha[i] < 0) {
        alpha[i] = 0;
        alpha[j] = sum;
      }
    }
    // snap values a rounding error away from a bound onto it, so the bias
    // is not set by a single vector that is only numerically free
    for (const std::ptrdiff_t t : {i, j}) {
      if (alpha[t] > box[t] * (1.0 - 1e-12)) alpha[t] = box[t];
      else if (alpha[t] < box[t] * 1e-12) alpha[t] = 0.0;
    }
    const double di = alpha[i] - ai, dj = alpha[j] - aj;
    for (std::size_t t = 0; t < l; ++t) G[t] += Q[i * l + t] * di + Q[j * l + t] * dj;
  }
  if (iter >= cfg.max_iterations)
    throw Error(ErrorKind::Convergence, "svm did not reach the KKT tolerance in " + std::to_string(cfg.max_iterations) + " iterations");
  model.iterations = iter;

  // rho from free vectors, or the midpoint of the feasible interval
  double ub = std::numeric_limits<double>::infinity(), lb = -ub, sum_free = 0.0;
  std::size_t n_free = 0;
  for (std::size_t t = 0; t < l; ++t) {
    const double yg = y[t] * G[t];
    if (upper(t)) {
      if (y[t] < 0) ub = std::min(ub, yg);
      else lb = std::max(lb, yg);
    } else if (lower(t)) {
      if (y[t] > 0) ub = std::min(ub, yg);
      else lb = std::max(lb, yg);
    } else {
      ++n_free;
      sum_free += yg;
    }
  }
  const double rho = n_free > 0 ? sum_free / static_cast<double>(n_free) : (ub + lb) / 2.0;
  model.bias = -rho;
  for (std::size_t t = 0; t < l; ++t) {
    if (alpha[t] <= 0.0) continue;
    model.support.push_back(x[t]);
    model.alpha.push_back(alpha[t]);
    model.coef.push_back(alpha[t] * y[t]);
  }
  return model;
}

TrainedModel gbt_fit(const std::vector<std::vector<double>>& x, const std::vector<bool>& y, const GbtConfig& cfg) {
  cfg.validate();
  check_training_set(x, y);
  const std::size_t n = x.size();
  TrainedModel model;
  model.kind = LearnerKind::Gbt;
  model.n_features = x.front().size();
  model.scaling = Scaling::identity(model.n_features);  // trees only compare ranks

  const double prior = static_cast<double>(std::count(y.begin(), y.end(), true)) / static_cast<double>(n);
  model.base_score = std::log(prior / (1.0 - prior));
  std::vector<double> f(n, model.base_score), g(n), h(n);
  model.stage_loss.push_back(mean_log_loss(f, y));
  for (int stage = 0; stage < cfg.n_estimators; ++stage) {
    for (std::size_t i = 0; i < n; ++i) {
      const double p = sigmoid(f[i]);
      g[i] = p - (y[i] ? 1.0 : 0.0);
      h[i] = std::max(p * (1.0 - p), 1e-16);
    }
    TreeBuilder builder{x, g, h, cfg, {}};
    std::vector<std::size_t> all(n);
    std::iota(all.begin(), all.end(), 0);
    builder.build(std::move(all), 0);
    for (std::size_t i = 0; i < n; ++i) f[i] += builder.tree.eval(x[i]);
    model.trees.push_back(std::move(builder.tree));
    model.stage_loss.push_back(mean_log_loss(f, y));
  }
  return model;
}

namespace {

TrainedModel with_classes(TrainedModel model, const DesignMatrix& m) {
  model.positive_class = m.positive_class;
  model.negative_class = 1 - m.positive_class;
  return model;
}

}  // namespace

TrainedModel svm_train(const DesignMatrix& m, const SvmConfig& cfg, std::uint64_t) {
  auto [x, y] = binary_rows(m);
  return with_classes(svm_fit(x, y, cfg), m);
}

TrainedModel gbt_train(const DesignMatrix& m, const GbtConfig& cfg, std::uint64_t) {
  auto [x, y] = binary_rows(m);
  return with_classes(gbt_fit(x, y, cfg), m);
}

TrainedModel train(const DesignMatrix& m, const LearnerConfig& cfg, std::uint64_t seed) {
  return cfg.kind == LearnerKind::Svm ? svm_train(m, cfg.svm, seed) : gbt_train(m, cfg.gbt, seed);
}

double decision_value(const TrainedModel& model, const std::vector<double>& raw) {
  if (raw.size() != model.n_features)
    throw Error(ErrorKind::Layout, "feature vector has " + std::to_string(raw.size()) + " entries, the model expects " +
                                       std::to_string(model.n_features));
  if (model.kind == LearnerKind::Svm) {
    const auto x = model.scaling.apply(raw);
    double f = model.bias;
    for (std::size_t t = 0; t < model.support.size(); ++t)
      f += model.coef[t] * poly_kernel(model.support[t], x, model.gamma, model.coef0, model.degree);
    return f;
  }
  double f = model.base_score;
  for (const auto& tree : model.trees) f += tree.eval(raw);
  return f;
}

Prediction predict(const TrainedModel& model, const std::vector<double>& x) {
  const double s = decision_value(model, x);
  return {s > 0 ? model.positive_class : model.negative_class, s};
}

// ---------------------------------------------------------------- reports

double mann_whitney_auc(const std::vector<double>& pos, const std::vector<double>& neg) {
  if (pos.empty() || neg.empty()) throw Error(ErrorKind::EmptyInput, "AUC needs both classes");
  std::vector<double> sorted = neg;
  std::sort(sorted.begin(), sorted.end());
  double wins = 0.0;
  for (double p : pos) {
    const auto lo = std::lower_bound(sorted.begin(), sorted.end(), p);
    const auto hi = std::upper_bound(lo, sorted.end(), p);
    wins += static_cast<double>(lo - sorted.begin()) + 0.5 * static_cast<double>(hi - lo);
  }
  return wins / (static_cast<double>(pos.size()) * static_cast<double>(neg.size()));
}

ClassificationStats classification_report(const std::vector<int>& truth, const std::vector<int>& predicted,
                                          const std::vector<double>& scores, int positive_class) {
  if (truth.empty()) throw Error(ErrorKind::EmptyInput, "classification report of zero predictions");
  if (truth.size() != predicted.size() || truth.size() != scores.size())
    throw Error(ErrorKind::Shape, "labels, predictions and scores differ in length");
  ClassificationStats s;
  s.n = truth.size();
  std::vector<double> pos, neg;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const bool actual = truth[i] == positive_class;
    const bool said = predicted[i] == positive_class;
    if (actual) {
      pos.push_back(scores[i]);
      ++(said ? s.tp : s.fn);
    } else {
      neg.push_back(scores[i]);
      ++(said ? s.fp : s.tn);
    }
  }
  s.accuracy = static_cast<double>(s.tp + s.tn) / static_cast<double>(s.n);
  if (!pos.empty()) s.sensitivity = static_cast<double>(s.tp) / static_cast<double>(s.tp + s.fn);
  if (!neg.empty()) s.specificity = static_cast<double>(s.tn) / static_cast<double>(s.tn + s.fp);
  if (!pos.empty() && !neg.empty()) s.auc = mann_whitney_auc(pos, neg);
  return s;
}

// ---------------------------------------------------------------- protocols

const char* to_string(Protocol p) {
  switch (p) {
    case Protocol::LeaveOneSubjectOut: return "leave_one_subject_out";
    case Protocol::LeaveOneImageOut: return "leave_one_image_out";
    case Protocol::KFold10: return "kfold10";
    case Protocol::HalfImages: return "half_images";
    case Protocol::HalfSubjects: return "half_subjects";
  }
  return "?";
}

std::optional<Protocol> parse_protocol(std::string_view name) {
  for (Protocol p : {Protocol::LeaveOneSubjectOut, Protocol::LeaveOneImageOut, Protocol::KFold10, Protocol::HalfImages,
                     Protocol::HalfSubjects})
    if (name == to_string(p)) return p;
  return std::nullopt;
}

bool BuildRestriction::operator<(const BuildRestriction& o) const {
  return std::tie(row_images, row_subjects, pool_images, pool_subjects) <
         std::tie(o.row_images, o.row_subjects, o.pool_images, o.pool_subjects);
}

void check_no_leakage(const DesignMatrix& train, const DesignMatrix& test) {
  const auto& metrics = train.layout.metrics;
  if (std::find(metrics.begin(), metrics.end(), MetricId::Sauc) == metrics.end()) return;
  std::set<std::pair<std::string, std::string>> test_sources;
  for (const auto& r : test.rows)
    for (const auto& s : r.subjects)
      for (const auto& i : r.images) test_sources.insert({s, i});
  for (const auto& r : train.rows) {
    const auto& subjects = train.pool.kind == PoolScope::Kind::OwnSubject ? r.subjects : train.pool.subjects;
    for (const auto& img : train.pool.images) {
      if (std::find(r.images.begin(), r.images.end(), img) != r.images.end()) continue;
      for (const auto& s : subjects)
        if (test_sources.count({s, img}))
          throw Error(ErrorKind::Leakage, "training row '" + r.sample_id + "' draws shuffled-AUC negatives from test fixations (subject '" +
                                              s + "', image '" + img + "')");
    }
  }
}

namespace {

enum class Unit { Subject, Image };

struct FoldPlan {
  std::set<std::string> train_units, test_units;
};

std::string mode_name(ManifestMode m) { return m == ManifestMode::Subject ? "subject" : "task"; }

std::vector<std::string> shuffled(std::vector<std::string> units, std::uint64_t seed, std::string_view tag) {
  Rng rng(derive_seed(seed, "crossval", tag));
  for (std::size_t i = units.size(); i > 1; --i) std::swap(units[i - 1], units[uniform_index(rng, i)]);
  return units;
}

std::vector<std::string> units_of(const DesignMatrix& m, Unit unit) {
  std::set<std::string> out;
  for (const auto& r : m.rows)
    for (const auto& u : unit == Unit::Subject ? r.subjects : r.images) out.insert(u);
  return {out.begin(), out.end()};
}

bool row_in(const LabeledSample& r, Unit unit, const std::set<std::string>& units) {
  const auto& ids = unit == Unit::Subject ? r.subjects : r.images;
  return std::any_of(ids.begin(), ids.end(), [&](const auto& id) { return units.count(id) > 0; });
}

}  // namespace

CvReport cross_validate(const DesignMatrix& m, Protocol protocol, const LearnerConfig& cfg, std::uint64_t seed,
                        const CvOptions& options) {
  if (m.class_names.size() != 2)
    throw Error(ErrorKind::Configuration, "classification is binary; the matrix has " + std::to_string(m.class_names.size()) + " classes");
  if (cfg.kind == LearnerKind::Svm) cfg.svm.validate();
  else cfg.gbt.validate();

  Unit unit = Unit::Subject;
  switch (protocol) {
    case Protocol::LeaveOneSubjectOut:
      if (m.mode != ManifestMode::Subject)
        throw Error(ErrorKind::Protocol, "leave_one_subject_out needs a subject-mode matrix, got " + mode_name(m.mode) + " mode");
      break;
    case Protocol::LeaveOneImageOut:
    case Protocol::HalfImages:
      if (m.mode != ManifestMode::Task)
        throw Error(ErrorKind::Protocol, std::string(to_string(protocol)) + " needs a task-mode matrix, got subject mode");
      unit = Unit::Image;
      break;
    case Protocol::KFold10:
      unit = m.mode == ManifestMode::Subject ? Unit::Subject : Unit::Image;
      break;
    case Protocol::HalfSubjects:
      if (m.mode == ManifestMode::Task && !options.materializer)
        throw Error(ErrorKind::Protocol, "half_subjects on a task-mode matrix needs features rebuilt per split");
      break;
  }

  const auto units = units_of(m, unit);
  std::vector<FoldPlan> plans;
  auto plan_from_test = [&](const std::set<std::string>& test) {
    FoldPlan p;
    p.test_units = test;
    for (const auto& u : units)
      if (!test.count(u)) p.train_units.insert(u);
    plans.push_back(std::move(p));
  };
  switch (protocol) {
    case Protocol::LeaveOneSubjectOut:
    case Protocol::LeaveOneImageOut:
      for (const auto& u : units) plan_from_test({u});
      break;
    case Protocol::KFold10: {
      if (units.size() < 10)
        throw Error(ErrorKind::Protocol, "kfold10 needs at least 10 " + std::string(unit == Unit::Subject ? "subjects" : "images") +
                                             ", got " + std::to_string(units.size()));
      const auto order = shuffled(units, seed, to_string(protocol));
      std::size_t start = 0;
      for (std::size_t k = 0; k < 10; ++k) {
        const std::size_t size = order.size() / 10 + (k < order.size() % 10 ? 1 : 0);
        plan_from_test({order.begin() + start, order.begin() + start + size});
        start += size;
      }
      break;
    }
    case Protocol::HalfImages:
    case Protocol::HalfSubjects: {
      if (units.size() < 2) throw Error(ErrorKind::Protocol, std::string(to_string(protocol)) + " needs at least two units");
      const auto order = shuffled(units, seed, to_string(protocol));
      plan_from_test({order.begin() + order.size() / 2, order.end()});
      break;
    }
  }

  auto slice = [&](const DesignMatrix& src) {
    return options.model_subset ? src.select_models(*options.model_subset) : src;
  };

  std::vector<FoldResult> folds(plans.size());
  std::vector<std::vector<std::size_t>> fold_rows(plans.size());
  std::vector<DesignMatrix> fold_tests(plans.size());
  std::vector<std::vector<Prediction>> fold_preds(plans.size());

  parallel_for(plans.size(), options.jobs, [&](std::size_t f) {
    const FoldPlan& plan = plans[f];
    FoldResult& res = folds[f];
    res.index = f;
    DesignMatrix train, test;
    const bool rebuild = options.materializer && m.mode == ManifestMode::Task;
    if (rebuild) {
      BuildRestriction tr, te;
      if (unit == Unit::Image) {
        tr.row_images = plan.train_units;
        tr.pool_images = plan.train_units;
        te.row_images = plan.test_units;
        te.pool_images = plan.train_units;
      } else {
        tr.row_subjects = plan.train_units;
        tr.pool_subjects = plan.train_units;
        te.row_subjects = plan.test_units;
        te.pool_subjects = plan.train_units;
      }
      train = slice((*options.materializer)(tr));
      test = slice((*options.materializer)(te));
    } else {
      std::vector<std::size_t> tr, te;
      for (std::size_t i = 0; i < m.rows.size(); ++i) (row_in(m.rows[i], unit, plan.test_units) ? te : tr).push_back(i);
      train = slice(m.select_rows(tr));
      test = slice(m.select_rows(te));
    }
    if (!(train.layout == test.layout)) throw Error(ErrorKind::Layout, "train and test matrices differ in layout");
    check_no_leakage(train, test);

    res.n_train = train.rows.size();
    for (const auto& r : test.rows) res.test_samples.push_back(r.sample_id);
    if (test.rows.empty()) {
      res.skipped = true;
      res.reason = "no test rows";
      return;
    }
    const auto pos = std::count_if(train.rows.begin(), train.rows.end(), [&](const auto& r) { return r.label == m.positive_class; });
    if (pos == 0 || pos == static_cast<long>(train.rows.size())) {
      res.skipped = true;
      res.reason = "training rows contain a single class";
      return;
    }
    const TrainedModel model =
        cfg.kind == LearnerKind::Svm ? svm_train(train, cfg.svm, seed) : gbt_train(train, cfg.gbt, seed);
    std::vector<int> truth, said;
    std::vector<double> scores;
    for (const auto& r : test.rows) {
      const Prediction p = predict(model, r.features);
      fold_preds[f].push_back(p);
      truth.push_back(r.label);
      said.push_back(p.label);
      scores.push_back(p.score);
    }
    res.stats = classification_report(truth, said, scores, m.positive_class);
    fold_tests[f] = std::move(test);
  });

  CvReport report;
  report.protocol = protocol;
  report.learner = cfg;
  report.seed = seed;
  report.class_names = m.class_names;
  report.positive_class = m.positive_class;
  report.model_ids = options.model_subset ? slice(m).layout.model_ids : m.layout.model_ids;
  for (std::size_t f = 0; f < folds.size(); ++f) {
    if (folds[f].skipped) {
      ++report.skipped_folds;
      continue;
    }
    for (std::size_t k = 0; k < fold_tests[f].rows.size(); ++k) {
      report.sample_ids.push_back(fold_tests[f].rows[k].sample_id);
      report.truth.push_back(fold_tests[f].rows[k].label);
      report.predicted.push_back(fold_preds[f][k].label);
      report.scores.push_back(fold_preds[f][k].score);
    }
  }
  report.folds = std::move(folds);
  if (report.truth.empty()) throw Error(ErrorKind::Fold, "every fold of " + std::string(to_string(protocol)) + " was skipped");
  report.pooled = classification_report(report.truth, report.predicted, report.scores, m.positive_class);
  return report;
}

namespace {

ordered_json stats_json(const ClassificationStats& s) {
  auto pct = [](const std::optional<double>& v) { return v ? ordered_json(100.0 * *v) : ordered_json(nullptr); };
  ordered_json j;
  j["n"] = s.n;
  j["tp"] = s.tp;
  j["tn"] = s.tn;
  j["fp"] = s.fp;
  j["fn"] = s.fn;
  j["accuracy"] = 100.0 * s.accuracy;
  j["sensitivity"] = pct(s.sensitivity);
  j["specificity"] = pct(s.specificity);
  j["auc"] = s.auc ? ordered_json(*s.auc) : ordered_json(nullptr);
  return j;
}

std::string pct_cell(const std::optional<double>& v) {
  if (!v) return "n/a";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", 100.0 * *v);
  return buf;
}

}  // namespace

std::string cv_report_json(const CvReport& r) {
  ordered_json doc;
  doc["artifact"] = "cv_report";
  doc["salfeat_version"] = kVersion;
  doc["protocol"] = to_string(r.protocol);
  doc["seed"] = r.seed;
  doc["learner"] = ordered_json::parse(r.learner.describe());
  doc["class_names"] = r.class_names;
  doc["positive_class"] = r.class_names.at(r.positive_class);
  doc["models"] = r.model_ids;
  doc["pooled"] = stats_json(r.pooled);
  doc["skipped_folds"] = r.skipped_folds;
  doc["folds"] = ordered_json::array();
  for (const auto& f : r.folds) {
    ordered_json j;
    j["index"] = f.index;
    j["n_train"] = f.n_train;
    j["test_samples"] = f.test_samples;
    j["skipped"] = f.skipped;
    if (f.skipped) j["reason"] = f.reason;
    else j["stats"] = stats_json(f.stats);
    doc["folds"].push_back(std::move(j));
  }
  doc["predictions"] = ordered_json::array();
  for (std::size_t i = 0; i < r.truth.size(); ++i)
    doc["predictions"].push_back({{"sample_id", r.sample_ids[i]},
                                  {"truth", r.class_names.at(r.truth[i])},
                                  {"predicted", r.class_names.at(r.predicted[i])},
                                  {"score", r.scores[i]}});
  return doc.dump(2) + "\n";
}

std::string cv_report_table(const CvReport& r) {
  std::ostringstream out;
  out << "protocol " << to_string(r.protocol) << ", learner " << to_string(r.learner.kind) << ", " << r.model_ids.size()
      << " models, " << r.folds.size() << " folds (" << r.skipped_folds << " skipped), positive class '"
      << r.class_names.at(r.positive_class) << "'\n";
  char line[160];
  std::snprintf(line, sizeof line, "%-10s %10s %12s %12s %8s\n", "", "Accuracy", "Sensitivity", "Specificity", "AUC");
  out << line;
  std::snprintf(line, sizeof line, "%-10s %10s %12s %12s %8s\n", "pooled", pct_cell(r.pooled.accuracy).c_str(),
                pct_cell(r.pooled.sensitivity).c_str(), pct_cell(r.pooled.specificity).c_str(), pct_cell(r.pooled.auc).c_str());
  out << line;
  return out.str();
}

// ---------------------------------------------------------------- ablation

std::vector<AblationRow> ablation_sweep(const DesignMatrix& m, Protocol protocol, const LearnerConfig& cfg,
                                        std::uint64_t seed, const AblationOptions& options) {
  const auto& all = m.layout.model_ids;
  const std::size_t T = all.size();
  if (options.sizes.empty()) throw Error(ErrorKind::Configuration, "ablation needs at least one subset size");
  for (std::size_t s : options.sizes)
    if (s < 1 || s > T)
      throw Error(ErrorKind::Configuration, "ablation subset size " + std::to_string(s) + " is outside 1.." + std::to_string(T));
  if (options.repeats < 1) throw Error(ErrorKind::Configuration, "ablation repeats must be at least 1");

  // fold matrices do not depend on the subset, so rebuilds are shared
  std::map<BuildRestriction, DesignMatrix> cache;
  std::mutex cache_lock;
  FoldMaterializer cached;
  CvOptions cv = options.cv;
  if (options.cv.materializer) {
    const FoldMaterializer& inner = *options.cv.materializer;
    cached = [&](const BuildRestriction& r) {
      {
        std::lock_guard guard(cache_lock);
        if (auto it = cache.find(r); it != cache.end()) return it->second;
      }
      DesignMatrix built = inner(r);
      std::lock_guard guard(cache_lock);
      return cache.emplace(r, std::move(built)).first->second;
    };
    cv.materializer = &cached;
  }

  std::vector<AblationRow> rows;
  for (std::size_t size : options.sizes) {
    AblationRow row;
    row.size = size;
    const std::size_t runs = size == T ? 1 : options.repeats;
    for (std::size_t rep = 0; rep < runs; ++rep) {
      std::vector<std::size_t> idx(T);
      std::iota(idx.begin(), idx.end(), 0);
      Rng rng(derive_seed(seed, "ablation", std::to_string(size), std::to_string(rep)));
      for (std::size_t k = 0; k < size; ++k) std::swap(idx[k], idx[k + uniform_index(rng, T - k)]);
      std::sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(size));
      std::vector<std::string> subset;
      for (std::size_t k = 0; k < size; ++k) subset.push_back(all[idx[k]]);
      cv.model_subset = subset;
      const CvReport rep_report = cross_validate(m, protocol, cfg, seed, cv);
      row.subsets.push_back(subset);
      row.accuracies.push_back(100.0 * rep_report.pooled.accuracy);
    }
    double mean = 0.0;
    for (double a : row.accuracies) mean += a;
    mean /= static_cast<double>(row.accuracies.size());
    double var = 0.0;
    for (double a : row.accuracies) var += (a - mean) * (a - mean);
    row.mean = mean;
    row.stdev = std::sqrt(var / static_cast<double>(row.accuracies.size()));
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string ablation_csv(const std::vector<AblationRow>& rows) {
  std::ostringstream out;
  out << "size,runs,mean_accuracy,std_accuracy,subsets\n";
  for (const auto& r : rows) {
    out << r.size << ',' << r.accuracies.size() << ',' << format_real(r.mean) << ',' << format_real(r.stdev) << ',';
    for (std::size_t k = 0; k < r.subsets.size(); ++k) {
      if (k) out << ';';
      for (std::size_t j = 0; j < r.subsets[k].size(); ++j) out << (j ? "+" : "") << r.subsets[k][j];
    }
    out << '\n';
  }
  return out.str();
}

}  // namespace salfeat
