#pragma once

#include <string>
#include <vector>

#include "ultraqueue/forest.hpp"

namespace uq {

enum class RoutingMode { sample, argmax };

/// Learned two-level routing: a room-type forest, then one room forest per type.
struct RoutingPolicy {
  forest::RandomForest level1;                // labels: room types
  std::vector<forest::RandomForest> level2;   // per type; labels: positions in type_rooms[t]
  std::vector<std::vector<int>> type_rooms;   // room ids per type, ascending
  std::vector<std::vector<char>> eligible;    // [item group][room type]
  int n_groups = 0;

  int n_types() const { return static_cast<int>(type_rooms.size()); }
  bool admissible(int group, int type) const {
    return group >= 0 && group < static_cast<int>(eligible.size()) && eligible[group][type] != 0;
  }
  bool operator==(const RoutingPolicy&) const = default;
};

/// Held-out and training scores of the routing forests.
struct RoutingEvaluation {
  struct Row {
    std::string level;   // "L1" or "L2"
    std::string model;   // "all" for level 1, room type label for level 2
    std::string split;   // "train" or "test"
    double auc = 0.0;
    double accuracy = 0.0;
    int rows = 0;
  };
  std::vector<Row> rows;
  std::vector<forest::FeatureImportance> level1_importance;  // on the test split
};

}  // namespace uq
