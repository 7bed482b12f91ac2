#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "nlohmann/json.hpp"

namespace uq::forest {

enum class Criterion { gini, entropy };
enum class MaxFeatures { sqrt_p, log2_p, all };

struct Hyperparams {
  int n_estimators = 100;
  bool bootstrap = false;
  Criterion criterion = Criterion::gini;
  MaxFeatures max_features = MaxFeatures::sqrt_p;
  int min_samples_leaf = 20;
  int min_samples_split = 20;
  int max_depth = 9;
  std::uint64_t seed = 0;

  /// Throws InputError when an invariant is violated.
  void validate() const;
  int features_per_split(int p) const;

  /// Routing defaults: the first-level model and the four second-level models.
  static Hyperparams first_level();
  static Hyperparams second_level(int room_type);

  bool operator==(const Hyperparams&) const = default;
};

/// Column names plus the source feature each column was expanded from
/// (one-hot columns share a source).
struct FeatureSchema {
  std::vector<std::string> names;
  std::vector<std::string> sources;

  int size() const { return static_cast<int>(names.size()); }
  void add(std::string name, std::string source = {});
  /// Distinct sources in first-appearance order.
  std::vector<std::string> source_names() const;
  bool operator==(const FeatureSchema&) const = default;
};

/// Row-major samples with integer labels in [0, n_classes).
struct Dataset {
  Eigen::MatrixXd x;
  std::vector<int> y;
  int n_classes = 0;

  Eigen::Index rows() const { return x.rows(); }
  Dataset subset(std::span<const int> rows) const;
};

struct Node {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  std::vector<int> counts;  // leaves only

  bool is_leaf() const { return feature < 0; }
  bool operator==(const Node&) const = default;
};

class DecisionTree {
 public:
  DecisionTree() = default;
  explicit DecisionTree(std::vector<Node> nodes) : nodes_(std::move(nodes)) {}

  /// Index of the leaf reached by x; samples with x[f] <= threshold go left.
  int leaf_for(std::span<const double> x) const;
  const std::vector<Node>& nodes() const { return nodes_; }
  int depth() const;
  bool operator==(const DecisionTree&) const = default;

 private:
  std::vector<Node> nodes_;
};

class RandomForest {
 public:
  RandomForest() = default;
  RandomForest(std::vector<DecisionTree> trees, int n_classes, FeatureSchema schema,
               Hyperparams hp)
      : trees_(std::move(trees)), n_classes_(n_classes), schema_(std::move(schema)), hp_(hp) {}

  /// Mean of the trees' leaf class frequencies.
  Eigen::VectorXd predict_proba(std::span<const double> x) const;
  Eigen::MatrixXd predict_proba(const Eigen::MatrixXd& x) const;
  std::vector<int> predict(const Eigen::MatrixXd& x) const;

  const std::vector<DecisionTree>& trees() const { return trees_; }
  int n_classes() const { return n_classes_; }
  const FeatureSchema& schema() const { return schema_; }
  const Hyperparams& hyperparams() const { return hp_; }
  /// Whether any tree splits on the column.
  bool uses_feature(int column) const;

  bool operator==(const RandomForest&) const = default;

 private:
  std::vector<DecisionTree> trees_;
  int n_classes_ = 0;
  FeatureSchema schema_;
  Hyperparams hp_;
};

/// Gini index or entropy in bits of a class-count vector.
double impurity(std::span<const double> counts, Criterion criterion);

RandomForest train(const Dataset& data, const FeatureSchema& schema, const Hyperparams& hp,
                   unsigned threads = 1, std::vector<std::string>* warnings = nullptr);

/// Fraction of rows whose argmax class (lowest index on ties) equals the label.
double accuracy(const Eigen::MatrixXd& proba, std::span<const int> y);

/// Binary AUC with ties counted one half (Mann-Whitney form).
double binary_auc(std::span<const double> scores, std::span<const bool> positive);

/// Macro-averaged one-vs-rest AUC; classes absent from y (or covering all of y)
/// are skipped and reported through warnings.
double ovr_auc(const Eigen::MatrixXd& proba, std::span<const int> y,
               std::vector<std::string>* warnings = nullptr);
double ovr_auc(const RandomForest& forest, const Dataset& data,
               std::vector<std::string>* warnings = nullptr);

enum class Metric { accuracy, ovr_auc };

struct FeatureImportance {
  std::string feature;
  double importance = 0.0;
};

/// Mean drop of the metric after shuffling each source feature's columns jointly.
std::vector<FeatureImportance> permutation_importance(const RandomForest& forest,
                                                      const Dataset& data, Metric metric,
                                                      int n_repeats, std::uint64_t seed);

nlohmann::json to_json(const RandomForest& forest);
RandomForest forest_from_json(const nlohmann::json& j);
nlohmann::json to_json(const Hyperparams& hp);
Hyperparams hyperparams_from_json(const nlohmann::json& j);

}  // namespace uq::forest
