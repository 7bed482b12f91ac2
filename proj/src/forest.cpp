#include "ultraqueue/forest.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <numeric>
#include <set>

#include "ultraqueue/common.hpp"
#include "ultraqueue/parallel.hpp"
#include "ultraqueue/rng.hpp"

namespace uq::forest {

void Hyperparams::validate() const {
  if (n_estimators < 1) throw InputError("n_estimators must be >= 1");
  if (max_depth < 1) throw InputError("max_depth must be >= 1");
  if (min_samples_split < 2) throw InputError("min_samples_split must be >= 2");
  if (min_samples_leaf < 1) throw InputError("min_samples_leaf must be >= 1");
}

int Hyperparams::features_per_split(int p) const {
  if (p <= 0) return 0;
  switch (max_features) {
    case MaxFeatures::sqrt_p:
      return std::clamp(static_cast<int>(std::ceil(std::sqrt(static_cast<double>(p)))), 1, p);
    case MaxFeatures::log2_p:
      return std::clamp(static_cast<int>(std::ceil(std::log2(static_cast<double>(p)))), 1, p);
    case MaxFeatures::all:
      return p;
  }
  return p;
}

Hyperparams Hyperparams::first_level() { return Hyperparams{}; }

Hyperparams Hyperparams::second_level(int room_type) {
  Hyperparams hp;
  switch (std::clamp(room_type, 0, 3)) {
    case 0:
      hp.n_estimators = 250;
      hp.criterion = Criterion::entropy;
      hp.max_features = MaxFeatures::log2_p;
      hp.min_samples_leaf = 10;
      hp.min_samples_split = 5;
      hp.max_depth = 9;
      break;
    case 1:
      hp.n_estimators = 150;
      hp.min_samples_leaf = 1;
      hp.min_samples_split = 2;
      hp.max_depth = 9;
      break;
    case 2:
      hp.n_estimators = 250;
      hp.min_samples_leaf = 1;
      hp.min_samples_split = 15;
      hp.max_depth = 10;
      break;
    case 3:
      hp.n_estimators = 300;
      hp.min_samples_leaf = 1;
      hp.min_samples_split = 11;
      hp.max_depth = 10;
      break;
  }
  return hp;
}

void FeatureSchema::add(std::string name, std::string source) {
  if (source.empty()) source = name;
  names.push_back(std::move(name));
  sources.push_back(std::move(source));
}

std::vector<std::string> FeatureSchema::source_names() const {
  std::vector<std::string> out;
  for (const auto& s : sources) {
    if (std::find(out.begin(), out.end(), s) == out.end()) out.push_back(s);
  }
  return out;
}

Dataset Dataset::subset(std::span<const int> rows) const {
  Dataset d;
  d.n_classes = n_classes;
  d.x.resize(static_cast<Eigen::Index>(rows.size()), x.cols());
  d.y.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    d.x.row(static_cast<Eigen::Index>(i)) = x.row(rows[i]);
    d.y.push_back(y[rows[i]]);
  }
  return d;
}

int DecisionTree::leaf_for(std::span<const double> x) const {
  int i = 0;
  while (!nodes_[i].is_leaf()) {
    const auto& n = nodes_[i];
    i = x[n.feature] <= n.threshold ? n.left : n.right;
  }
  return i;
}

int DecisionTree::depth() const {
  if (nodes_.empty()) return 0;
  std::vector<int> d(nodes_.size(), 0);
  int best = 0;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    const auto& n = nodes_[i];
    best = std::max(best, d[i]);
    if (!n.is_leaf()) {
      d[n.left] = d[i] + 1;
      d[n.right] = d[i] + 1;
    }
  }
  return best;
}

double impurity(std::span<const double> counts, Criterion criterion) {
  double total = 0.0;
  for (double c : counts) {
    if (c < 0.0) throw InputError("impurity: negative count");
    total += c;
  }
  if (!(total > 0.0)) throw InputError("impurity: empty count vector");
  double acc = 0.0;
  for (double c : counts) {
    const double p = c / total;
    if (criterion == Criterion::gini) {
      acc += p * p;
    } else if (p > 0.0) {
      acc -= p * std::log2(p);
    }
  }
  return criterion == Criterion::gini ? 1.0 - acc : acc;
}

namespace {

double impurity_of(const int* counts, int n_classes, int total, Criterion criterion) {
  const double inv = 1.0 / total;
  double acc = 0.0;
  for (int k = 0; k < n_classes; ++k) {
    const double p = counts[k] * inv;
    if (criterion == Criterion::gini) {
      acc += p * p;
    } else if (p > 0.0) {
      acc -= p * std::log2(p);
    }
  }
  return criterion == Criterion::gini ? 1.0 - acc : acc;
}

/// Per-column sorted distinct values and the rank code of every row.
struct ColumnCodes {
  std::vector<std::vector<double>> values;
  std::vector<std::vector<std::uint32_t>> codes;

  explicit ColumnCodes(const Eigen::MatrixXd& x) {
    const auto n = x.rows();
    values.resize(x.cols());
    codes.resize(x.cols());
    for (Eigen::Index f = 0; f < x.cols(); ++f) {
      auto& v = values[f];
      v.assign(x.col(f).data(), x.col(f).data() + n);
      std::sort(v.begin(), v.end());
      v.erase(std::unique(v.begin(), v.end()), v.end());
      auto& c = codes[f];
      c.resize(n);
      for (Eigen::Index i = 0; i < n; ++i) {
        c[i] = static_cast<std::uint32_t>(std::lower_bound(v.begin(), v.end(), x(i, f)) - v.begin());
      }
    }
  }
};

constexpr double kMinDecrease = 1e-12;

class TreeBuilder {
 public:
  TreeBuilder(const Dataset& data, const ColumnCodes& codes, const Hyperparams& hp, Rng& rng)
      : data_(data), codes_(codes), hp_(hp), rng_(rng), n_classes_(data.n_classes) {
    const int p = static_cast<int>(data.x.cols());
    mtry_ = hp.features_per_split(p);
    feature_pool_.resize(p);
  }

  std::vector<Node> build(std::vector<int> rows) {
    nodes_.clear();
    grow(std::move(rows), 0);
    return std::move(nodes_);
  }

 private:
  struct Split {
    int feature = -1;
    std::uint32_t code = 0;  // rows with code <= this go left
    double threshold = 0.0;
    double decrease = 0.0;
  };

  int grow(std::vector<int> rows, int depth) {
    const int id = static_cast<int>(nodes_.size());
    nodes_.emplace_back();
    std::vector<int> counts(n_classes_, 0);
    for (int r : rows) ++counts[data_.y[r]];
    const int n = static_cast<int>(rows.size());
    const bool pure = std::count_if(counts.begin(), counts.end(), [](int c) { return c > 0; }) <= 1;

    Split best;
    if (!pure && depth < hp_.max_depth && n >= hp_.min_samples_split &&
        n >= 2 * hp_.min_samples_leaf) {
      best = find_split(rows, counts);
    }
    if (best.feature < 0) {
      nodes_[id].counts = std::move(counts);
      return id;
    }
    std::vector<int> left, right;
    left.reserve(rows.size());
    right.reserve(rows.size());
    const auto& col = codes_.codes[best.feature];
    for (int r : rows) (col[r] <= best.code ? left : right).push_back(r);
    rows.clear();
    rows.shrink_to_fit();
    const int l = grow(std::move(left), depth + 1);
    const int rr = grow(std::move(right), depth + 1);
    auto& node = nodes_[id];
    node.feature = best.feature;
    node.threshold = best.threshold;
    node.left = l;
    node.right = rr;
    return id;
  }

  Split find_split(const std::vector<int>& rows, const std::vector<int>& parent_counts) {
    const int p = static_cast<int>(feature_pool_.size());
    std::iota(feature_pool_.begin(), feature_pool_.end(), 0);
    for (int i = 0; i < mtry_; ++i) {
      const int j = i + static_cast<int>(rng_.below(static_cast<std::uint64_t>(p - i)));
      std::swap(feature_pool_[i], feature_pool_[j]);
    }
    std::vector<int> sampled(feature_pool_.begin(), feature_pool_.begin() + mtry_);
    std::sort(sampled.begin(), sampled.end());

    const int n = static_cast<int>(rows.size());
    const double parent = impurity_of(parent_counts.data(), n_classes_, n, hp_.criterion);
    Split best;
    for (int f : sampled) scan_feature(f, rows, parent, best);
    (void)n;
    return best;
  }

  // Visits candidate thresholds of one feature in ascending order.
  void scan_feature(int f, const std::vector<int>& rows, double parent, Split& best) {
    const auto& values = codes_.values[f];
    const auto& col = codes_.codes[f];
    const int n = static_cast<int>(rows.size());
    const int C = n_classes_;
    const auto D = values.size();
    if (D < 2) return;

    // Bucket rows by code: dense histogram for low-cardinality columns, sort otherwise.
    present_.clear();
    if (D <= static_cast<std::size_t>(4 * n) + 64) {
      hist_.assign(D * C, 0);
      for (int r : rows) ++hist_[col[r] * C + data_.y[r]];
      for (std::size_t c = 0; c < D; ++c) {
        for (int k = 0; k < C; ++k) {
          if (hist_[c * C + k]) {
            present_.push_back(static_cast<std::uint32_t>(c));
            break;
          }
        }
      }
      bucket_ = [this, C](std::uint32_t code) { return &hist_[code * C]; };
    } else {
      pairs_.clear();
      for (int r : rows) pairs_.emplace_back(col[r], data_.y[r]);
      std::sort(pairs_.begin(), pairs_.end());
      sparse_.clear();
      for (auto [code, y] : pairs_) {
        if (present_.empty() || present_.back() != code) {
          present_.push_back(code);
          sparse_.resize(sparse_.size() + C, 0);
        }
        ++sparse_[(present_.size() - 1) * C + y];
      }
      sparse_index_ = 0;
      bucket_ = [this, C](std::uint32_t) { return &sparse_[sparse_index_++ * C]; };
    }
    if (present_.size() < 2) return;

    left_.assign(C, 0);
    right_.assign(C, 0);
    for (int r : rows) ++right_[data_.y[r]];
    int n_left = 0;
    for (std::size_t i = 0; i + 1 < present_.size(); ++i) {
      const int* b = bucket_(present_[i]);
      for (int k = 0; k < C; ++k) {
        left_[k] += b[k];
        right_[k] -= b[k];
        n_left += b[k];
      }
      const int n_right = n - n_left;
      if (n_left < hp_.min_samples_leaf || n_right < hp_.min_samples_leaf) continue;
      const double dec = parent -
                         (static_cast<double>(n_left) / n) *
                             impurity_of(left_.data(), C, n_left, hp_.criterion) -
                         (static_cast<double>(n_right) / n) *
                             impurity_of(right_.data(), C, n_right, hp_.criterion);
      if (dec > kMinDecrease && dec > best.decrease) {
        best.feature = f;
        best.code = present_[i];
        best.threshold = 0.5 * (values[present_[i]] + values[present_[i + 1]]);
        best.decrease = dec;
      }
    }
  }

  const Dataset& data_;
  const ColumnCodes& codes_;
  const Hyperparams& hp_;
  Rng& rng_;
  int n_classes_;
  int mtry_ = 1;
  std::vector<int> feature_pool_;
  std::vector<Node> nodes_;

  std::vector<int> hist_, sparse_, left_, right_;
  std::vector<std::uint32_t> present_;
  std::vector<std::pair<std::uint32_t, int>> pairs_;
  std::size_t sparse_index_ = 0;
  std::function<const int*(std::uint32_t)> bucket_;
};

}  // namespace

RandomForest train(const Dataset& data, const FeatureSchema& schema, const Hyperparams& hp,
                   unsigned threads, std::vector<std::string>* warnings) {
  hp.validate();
  if (data.rows() == 0) throw InputError("forest: empty training data");
  if (static_cast<std::size_t>(data.rows()) != data.y.size()) {
    throw InputError("forest: label count does not match row count");
  }
  if (schema.size() != data.x.cols()) throw InputError("forest: schema does not match columns");
  if (data.n_classes < 1) throw InputError("forest: no classes");
  for (int y : data.y) {
    if (y < 0 || y >= data.n_classes) throw InputError("forest: label out of range");
  }
  if (!data.x.allFinite()) throw InputError("forest: missing or non-finite feature values");
  std::set<int> labels(data.y.begin(), data.y.end());
  if (labels.size() < 2 && warnings) {
    warnings->push_back("forest: single-label training data, trees are single leaves");
  }

  const ColumnCodes codes(data.x);
  std::vector<DecisionTree> trees(hp.n_estimators);
  const auto n = static_cast<int>(data.rows());
  parallel_for(trees.size(), threads, [&](std::size_t t) {
    Rng rng(derive_seed(hp.seed, {t}));
    std::vector<int> rows(n);
    if (hp.bootstrap) {
      for (int i = 0; i < n; ++i) rows[i] = static_cast<int>(rng.below(n));
      std::sort(rows.begin(), rows.end());
    } else {
      std::iota(rows.begin(), rows.end(), 0);
    }
    TreeBuilder builder(data, codes, hp, rng);
    trees[t] = DecisionTree(builder.build(std::move(rows)));
  });
  return RandomForest(std::move(trees), data.n_classes, schema, hp);
}

Eigen::VectorXd RandomForest::predict_proba(std::span<const double> x) const {
  if (static_cast<int>(x.size()) != schema_.size()) {
    throw InputError("forest: feature vector does not match schema (" + std::to_string(x.size()) +
                     " vs " + std::to_string(schema_.size()) + ")");
  }
  Eigen::VectorXd p = Eigen::VectorXd::Zero(n_classes_);
  for (const auto& tree : trees_) {
    const auto& leaf = tree.nodes()[tree.leaf_for(x)];
    double total = 0.0;
    for (int c : leaf.counts) total += c;
    for (int k = 0; k < n_classes_; ++k) p[k] += leaf.counts[k] / total;
  }
  return p / static_cast<double>(trees_.size());
}

Eigen::MatrixXd RandomForest::predict_proba(const Eigen::MatrixXd& x) const {
  Eigen::MatrixXd out(x.rows(), n_classes_);
  std::vector<double> row(x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    for (Eigen::Index f = 0; f < x.cols(); ++f) row[f] = x(i, f);
    out.row(i) = predict_proba(row).transpose();
  }
  return out;
}

std::vector<int> RandomForest::predict(const Eigen::MatrixXd& x) const {
  const auto proba = predict_proba(x);
  std::vector<int> out(x.rows());
  for (Eigen::Index i = 0; i < proba.rows(); ++i) {
    Eigen::Index best;
    proba.row(i).maxCoeff(&best);
    out[i] = static_cast<int>(best);
  }
  return out;
}

bool RandomForest::uses_feature(int column) const {
  for (const auto& t : trees_) {
    for (const auto& n : t.nodes()) {
      if (n.feature == column) return true;
    }
  }
  return false;
}

double accuracy(const Eigen::MatrixXd& proba, std::span<const int> y) {
  if (y.empty()) return 0.0;
  std::size_t hits = 0;
  for (Eigen::Index i = 0; i < proba.rows(); ++i) {
    Eigen::Index best;
    proba.row(i).maxCoeff(&best);
    if (best == y[i]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(y.size());
}

double binary_auc(std::span<const double> scores, std::span<const bool> positive) {
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return scores[a] < scores[b]; });
  double rank_sum = 0.0;
  double n_pos = 0.0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const double mid_rank = 0.5 * static_cast<double>(i + 1 + j);  // mean of ranks i+1..j
    for (std::size_t k = i; k < j; ++k) {
      if (positive[order[k]]) {
        rank_sum += mid_rank;
        n_pos += 1.0;
      }
    }
    i = j;
  }
  const double n_neg = static_cast<double>(n) - n_pos;
  if (n_pos == 0.0 || n_neg == 0.0) return 0.5;
  return (rank_sum - n_pos * (n_pos + 1.0) / 2.0) / (n_pos * n_neg);
}

double ovr_auc(const Eigen::MatrixXd& proba, std::span<const int> y,
               std::vector<std::string>* warnings) {
  const auto n = static_cast<std::size_t>(proba.rows());
  std::vector<double> scores(n);
  std::unique_ptr<bool[]> positive(new bool[n]);
  double sum = 0.0;
  int used = 0;
  for (Eigen::Index c = 0; c < proba.cols(); ++c) {
    std::size_t n_pos = 0;
    for (std::size_t i = 0; i < n; ++i) {
      scores[i] = proba(static_cast<Eigen::Index>(i), c);
      positive[i] = y[i] == c;
      n_pos += positive[i];
    }
    if (n_pos == 0 || n_pos == n) {
      if (warnings) {
        warnings->push_back("ovr_auc: class " + std::to_string(c) +
                            (n_pos == 0 ? " absent from" : " covers all of") +
                            " the evaluation data, skipped");
      }
      continue;
    }
    sum += binary_auc(scores, std::span<const bool>(positive.get(), n));
    ++used;
  }
  if (used == 0) throw InputError("ovr_auc: evaluation data needs at least two labels");
  return sum / used;
}

double ovr_auc(const RandomForest& forest, const Dataset& data, std::vector<std::string>* warnings) {
  return ovr_auc(forest.predict_proba(data.x), data.y, warnings);
}

std::vector<FeatureImportance> permutation_importance(const RandomForest& forest,
                                                      const Dataset& data, Metric metric,
                                                      int n_repeats, std::uint64_t seed) {
  auto score = [&](const Eigen::MatrixXd& x) {
    const auto proba = forest.predict_proba(x);
    return metric == Metric::accuracy ? accuracy(proba, data.y) : ovr_auc(proba, data.y);
  };
  const double baseline = score(data.x);
  const auto& schema = forest.schema();
  const auto sources = schema.source_names();
  const auto n = static_cast<int>(data.rows());
  std::vector<FeatureImportance> out;
  for (std::size_t g = 0; g < sources.size(); ++g) {
    std::vector<int> cols;
    for (int c = 0; c < schema.size(); ++c) {
      if (schema.sources[c] == sources[g]) cols.push_back(c);
    }
    double total = 0.0;
    for (int r = 0; r < n_repeats; ++r) {
      Rng rng(derive_seed(seed, {g, static_cast<std::uint64_t>(r)}));
      std::vector<int> perm(n);
      std::iota(perm.begin(), perm.end(), 0);
      rng.shuffle(perm.begin(), perm.end());
      Eigen::MatrixXd x = data.x;
      for (int c : cols) {
        for (int i = 0; i < n; ++i) x(i, c) = data.x(perm[i], c);
      }
      total += baseline - score(x);
    }
    out.push_back({sources[g], n_repeats > 0 ? total / n_repeats : 0.0});
  }
  return out;
}

namespace {

std::string criterion_name(Criterion c) { return c == Criterion::gini ? "gini" : "entropy"; }
std::string max_features_name(MaxFeatures m) {
  switch (m) {
    case MaxFeatures::sqrt_p:
      return "sqrt";
    case MaxFeatures::log2_p:
      return "log2";
    case MaxFeatures::all:
      return "all";
  }
  return "all";
}

}  // namespace

nlohmann::json to_json(const Hyperparams& hp) {
  return {{"n_estimators", hp.n_estimators},
          {"bootstrap", hp.bootstrap},
          {"criterion", criterion_name(hp.criterion)},
          {"max_features", max_features_name(hp.max_features)},
          {"min_samples_leaf", hp.min_samples_leaf},
          {"min_samples_split", hp.min_samples_split},
          {"max_depth", hp.max_depth},
          {"seed", hp.seed}};
}

Hyperparams hyperparams_from_json(const nlohmann::json& j) {
  Hyperparams hp;
  hp.n_estimators = j.at("n_estimators").get<int>();
  hp.bootstrap = j.at("bootstrap").get<bool>();
  const auto crit = j.at("criterion").get<std::string>();
  if (crit == "gini") {
    hp.criterion = Criterion::gini;
  } else if (crit == "entropy") {
    hp.criterion = Criterion::entropy;
  } else {
    throw InputError("unknown criterion: " + crit);
  }
  const auto mf = j.at("max_features").get<std::string>();
  if (mf == "sqrt") {
    hp.max_features = MaxFeatures::sqrt_p;
  } else if (mf == "log2") {
    hp.max_features = MaxFeatures::log2_p;
  } else if (mf == "all") {
    hp.max_features = MaxFeatures::all;
  } else {
    throw InputError("unknown max_features: " + mf);
  }
  hp.min_samples_leaf = j.at("min_samples_leaf").get<int>();
  hp.min_samples_split = j.at("min_samples_split").get<int>();
  hp.max_depth = j.at("max_depth").get<int>();
  hp.seed = j.at("seed").get<std::uint64_t>();
  hp.validate();
  return hp;
}

nlohmann::json to_json(const RandomForest& forest) {
  nlohmann::json trees = nlohmann::json::array();
  for (const auto& t : forest.trees()) {
    std::vector<int> feature, left, right;
    std::vector<double> threshold;
    nlohmann::json counts = nlohmann::json::array();
    for (const auto& n : t.nodes()) {
      feature.push_back(n.feature);
      threshold.push_back(n.threshold);
      left.push_back(n.left);
      right.push_back(n.right);
      counts.push_back(n.counts);
    }
    trees.push_back({{"feature", feature},
                     {"threshold", threshold},
                     {"left", left},
                     {"right", right},
                     {"counts", counts}});
  }
  return {{"version", 1},
          {"n_classes", forest.n_classes()},
          {"hyperparams", to_json(forest.hyperparams())},
          {"schema", {{"names", forest.schema().names}, {"sources", forest.schema().sources}}},
          {"trees", trees}};
}

RandomForest forest_from_json(const nlohmann::json& j) {
  if (j.at("version").get<int>() != 1) throw InputError("unsupported forest version");
  const int n_classes = j.at("n_classes").get<int>();
  FeatureSchema schema;
  schema.names = j.at("schema").at("names").get<std::vector<std::string>>();
  schema.sources = j.at("schema").at("sources").get<std::vector<std::string>>();
  std::vector<DecisionTree> trees;
  for (const auto& jt : j.at("trees")) {
    const auto feature = jt.at("feature").get<std::vector<int>>();
    const auto threshold = jt.at("threshold").get<std::vector<double>>();
    const auto left = jt.at("left").get<std::vector<int>>();
    const auto right = jt.at("right").get<std::vector<int>>();
    const auto& counts = jt.at("counts");
    std::vector<Node> nodes(feature.size());
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      nodes[i].feature = feature[i];
      nodes[i].threshold = threshold[i];
      nodes[i].left = left[i];
      nodes[i].right = right[i];
      nodes[i].counts = counts[i].get<std::vector<int>>();
      if (nodes[i].is_leaf() && static_cast<int>(nodes[i].counts.size()) != n_classes) {
        throw InputError("forest: leaf count vector has wrong length");
      }
    }
    trees.emplace_back(std::move(nodes));
  }
  return RandomForest(std::move(trees), n_classes, std::move(schema),
                      hyperparams_from_json(j.at("hyperparams")));
}

}  // namespace uq::forest
