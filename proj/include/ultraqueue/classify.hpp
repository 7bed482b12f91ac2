#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "nlohmann/json.hpp"
#include "ultraqueue/eventlog.hpp"

namespace uq {

/// Per-item clustering features built from single-item visits: mean and
/// sample std of service seconds, then the routing frequency over rooms.
struct ItemFeatureTable {
  std::vector<std::string> items;            // rows of `features`, sorted
  std::vector<int> rooms;                    // routing-frequency columns
  Eigen::MatrixXd features;                  // items x (2 + rooms)
  std::vector<int> observations;             // single-item visits per row
  std::map<std::string, int> insufficient;   // items with < 2 observations -> count
};

ItemFeatureTable item_features(const std::vector<PatientRecord>& log, const std::vector<int>& rooms);

/// Column standardization (zero mean, unit variance); constant columns keep scale 1.
struct Standardizer {
  Eigen::RowVectorXd mean;
  Eigen::RowVectorXd scale;

  static Standardizer fit(const Eigen::MatrixXd& x);
  Eigen::MatrixXd apply(const Eigen::MatrixXd& x) const;
};

/// Diagonal-covariance Gaussian mixture in standardized feature space.
struct GaussianMixture {
  Eigen::VectorXd weights;    // k
  Eigen::MatrixXd means;      // k x d
  Eigen::MatrixXd variances;  // k x d
  Standardizer standardizer;

  int k() const { return static_cast<int>(weights.size()); }
  /// Log density of each component (weight included) for standardized rows.
  Eigen::MatrixXd log_joint(const Eigen::MatrixXd& z) const;
  /// Component minimizing Mahalanobis distance for a raw feature row.
  int nearest(const Eigen::RowVectorXd& raw) const;
};

struct GmmFit {
  GaussianMixture mixture;
  std::vector<int> assignment;           // argmax responsibility per row
  std::vector<double> log_likelihood;    // after initialization, then per iteration
  int iterations = 0;
  int reseeds = 0;
};

struct GmmOptions {
  int max_iter = 200;
  double tol = 1e-6;
  double variance_floor = 1e-3;
};

/// EM with k-means++ seeding; features are standardized before fitting.
GmmFit fit_gmm(const Eigen::MatrixXd& features, int k, std::uint64_t seed, GmmOptions options = {});

/// Exam-item groups: k mixture clusters plus one group for multi-item visits.
struct ItemGroupModel {
  GaussianMixture mixture;
  std::vector<std::string> feature_items;     // items that had features, in table order
  Eigen::MatrixXd feature_rows;               // their raw features
  std::map<std::string, int> item_group;      // every item seen in calibration
  int n_clusters = 0;
  int multi_item_group = 0;
  int fallback_group = 0;                     // largest cluster by visits

  int n_groups() const { return n_clusters + 1; }
  std::string label(int group) const { return "P" + std::to_string(group + 1); }
  /// Group of a visit; unseen single items fall back to the largest cluster.
  int group_of(const std::vector<std::string>& items) const;
  /// Group for an unseen item whose features are known.
  int group_for_features(const Eigen::RowVectorXd& raw) const;
};

ItemGroupModel assign_item_groups(const GmmFit& fit, const ItemFeatureTable& table,
                                  const std::vector<PatientRecord>& log);

struct WardMerge {
  int a = 0;  // cluster ids: < n are leaves, n + i is the i-th merge
  int b = 0;
  double height = 0.0;
  int size = 0;
};

/// Ward linkage on Euclidean distances; ties go to the pair with the smallest
/// (min leaf of a, min leaf of b).
std::vector<WardMerge> ward_linkage(const Eigen::MatrixXd& points);
/// Cluster label per leaf after cutting into k clusters; labels ordered by smallest leaf.
std::vector<int> cut_tree(const std::vector<WardMerge>& merges, int n_leaves, int k);

struct RoomTypeModel {
  std::vector<int> rooms;                     // universe, ascending
  std::map<int, int> room_type;
  std::vector<std::vector<int>> members;      // per type, ascending room ids
  std::vector<WardMerge> merges;
  Eigen::MatrixXd features;                   // rooms x (2 + items), unstandardized
  std::vector<std::string> feature_items;

  int n_types() const { return static_cast<int>(members.size()); }
  int type_of(int room) const;
  std::string label(int type) const { return "R" + std::to_string(type + 1); }
};

/// Ward clustering of rooms on open days, mean service and item mix.
RoomTypeModel cluster_rooms(const std::vector<PatientRecord>& log, const std::vector<int>& rooms,
                            int n_types = 4);

struct PatientClass {
  int item_group = 0;
  int age_bucket = 0;
  Gender gender = Gender::female;

  auto operator<=>(const PatientClass&) const = default;
  std::string label() const;
};

std::vector<PatientClass> build_patient_classes(const ItemGroupModel& groups,
                                                const std::vector<PatientRecord>& log);

/// Position of a class in a sorted class list, or -1.
int class_index(const std::vector<PatientClass>& classes, const PatientClass& c);

nlohmann::json to_json(const ItemGroupModel& m);
ItemGroupModel item_groups_from_json(const nlohmann::json& j);
nlohmann::json to_json(const RoomTypeModel& m);
RoomTypeModel room_types_from_json(const nlohmann::json& j);

}  // namespace uq
