#include "ultraqueue/classify.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numeric>
#include <set>

#include "ultraqueue/json_util.hpp"
#include "ultraqueue/rng.hpp"

namespace uq {

ItemFeatureTable item_features(const std::vector<PatientRecord>& log, const std::vector<int>& rooms) {
  std::map<std::string, std::vector<const PatientRecord*>> by_item;
  for (const auto& r : log) {
    if (r.exam_items.size() == 1) by_item[r.exam_items.front()].push_back(&r);
  }
  std::map<int, int> room_col;
  for (std::size_t i = 0; i < rooms.size(); ++i) room_col[rooms[i]] = static_cast<int>(i);

  ItemFeatureTable t;
  t.rooms = rooms;
  for (const auto& [item, recs] : by_item) {
    if (recs.size() < 2) {
      t.insufficient[item] = static_cast<int>(recs.size());
    } else {
      t.items.push_back(item);
    }
  }
  const auto n_rooms = static_cast<Eigen::Index>(rooms.size());
  t.features = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(t.items.size()), 2 + n_rooms);
  for (std::size_t i = 0; i < t.items.size(); ++i) {
    const auto& recs = by_item[t.items[i]];
    const double n = static_cast<double>(recs.size());
    double mean = 0.0;
    for (auto* r : recs) mean += static_cast<double>(r->service());
    mean /= n;
    double ss = 0.0;
    for (auto* r : recs) {
      const double d = static_cast<double>(r->service()) - mean;
      ss += d * d;
    }
    const auto row = static_cast<Eigen::Index>(i);
    t.features(row, 0) = mean;
    t.features(row, 1) = std::sqrt(ss / (n - 1.0));
    for (auto* r : recs) {
      auto it = room_col.find(r->room_id);
      if (it != room_col.end()) t.features(row, 2 + it->second) += 1.0 / n;
    }
    t.observations.push_back(static_cast<int>(recs.size()));
  }
  return t;
}

Standardizer Standardizer::fit(const Eigen::MatrixXd& x) {
  Standardizer s;
  const auto n = static_cast<double>(std::max<Eigen::Index>(x.rows(), 1));
  s.mean = x.colwise().sum() / n;
  s.scale.resize(x.cols());
  for (Eigen::Index c = 0; c < x.cols(); ++c) {
    const double var = (x.col(c).array() - s.mean(c)).square().sum() / n;
    const double sd = std::sqrt(var);
    s.scale(c) = sd > 1e-12 * std::max(1.0, std::abs(s.mean(c))) ? sd : 1.0;
  }
  return s;
}

Eigen::MatrixXd Standardizer::apply(const Eigen::MatrixXd& x) const {
  return (x.rowwise() - mean).array().rowwise() / scale.array();
}

Eigen::MatrixXd GaussianMixture::log_joint(const Eigen::MatrixXd& z) const {
  constexpr double kLog2Pi = 1.8378770664093453;
  const auto n = z.rows();
  const auto d = z.cols();
  Eigen::MatrixXd out(n, k());
  for (int c = 0; c < k(); ++c) {
    const Eigen::RowVectorXd mu = means.row(c);
    const Eigen::RowVectorXd var = variances.row(c);
    const double norm = -0.5 * (static_cast<double>(d) * kLog2Pi + var.array().log().sum());
    const double lw = weights(c) > 0.0 ? std::log(weights(c)) : -std::numeric_limits<double>::infinity();
    out.col(c) = ((z.rowwise() - mu).array().square().rowwise() / var.array()).rowwise().sum() * -0.5;
    out.col(c).array() += norm + lw;
  }
  return out;
}

int GaussianMixture::nearest(const Eigen::RowVectorXd& raw) const {
  const Eigen::RowVectorXd z = (raw - standardizer.mean).array() / standardizer.scale.array();
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (int c = 0; c < k(); ++c) {
    const double d = ((z - means.row(c)).array().square() / variances.row(c).array()).sum();
    if (d < best_d) {
      best_d = d;
      best = c;
    }
  }
  return best;
}

namespace {

struct EStep {
  Eigen::MatrixXd resp;
  Eigen::VectorXd point_ll;
  double total = 0.0;
};

EStep e_step(const GaussianMixture& g, const Eigen::MatrixXd& z) {
  EStep e;
  const Eigen::MatrixXd lj = g.log_joint(z);
  e.resp.resize(lj.rows(), lj.cols());
  e.point_ll.resize(lj.rows());
  for (Eigen::Index i = 0; i < lj.rows(); ++i) {
    const double m = lj.row(i).maxCoeff();
    const double lse = m + std::log((lj.row(i).array() - m).exp().sum());
    e.point_ll(i) = lse;
    e.resp.row(i) = (lj.row(i).array() - lse).exp();
  }
  e.total = e.point_ll.sum();
  return e;
}

/// Returns the index of a component whose weight collapsed, or -1.
int m_step(GaussianMixture& g, const Eigen::MatrixXd& z, const Eigen::MatrixXd& resp, double floor) {
  const auto n = static_cast<double>(z.rows());
  const int k = static_cast<int>(resp.cols());
  g.weights.resize(k);
  g.means.resize(k, z.cols());
  g.variances.resize(k, z.cols());
  int degenerate = -1;
  for (int c = 0; c < k; ++c) {
    const double nk = resp.col(c).sum();
    g.weights(c) = nk / n;
    if (g.weights(c) < 1e-6) {
      if (degenerate < 0) degenerate = c;
      g.means.row(c).setZero();
      g.variances.row(c).setOnes();
      continue;
    }
    const Eigen::RowVectorXd mu = (resp.col(c).transpose() * z) / nk;
    g.means.row(c) = mu;
    const Eigen::MatrixXd centered = z.rowwise() - mu;
    Eigen::RowVectorXd var = (resp.col(c).transpose() * centered.array().square().matrix()) / nk;
    g.variances.row(c) = var.array().max(floor);
  }
  return degenerate;
}

}  // namespace

GmmFit fit_gmm(const Eigen::MatrixXd& features, int k, std::uint64_t seed, GmmOptions options) {
  const auto n = features.rows();
  if (k < 1) throw InputError("fit_gmm: k must be >= 1");
  if (n < k) throw InputError("fit_gmm: fewer rows than components");

  GmmFit fit;
  auto& g = fit.mixture;
  g.standardizer = Standardizer::fit(features);
  const Eigen::MatrixXd z = g.standardizer.apply(features);

  // k-means++ seeding, then hard responsibilities to the nearest seed.
  Rng rng(seed);
  std::vector<Eigen::Index> centers{static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(n)))};
  std::vector<double> d2(n);
  while (static_cast<int>(centers.size()) < k) {
    for (Eigen::Index i = 0; i < n; ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (auto c : centers) best = std::min(best, (z.row(i) - z.row(c)).squaredNorm());
      d2[i] = best;
    }
    int pick = rng.categorical(d2);
    if (pick < 0) {
      // All remaining points coincide with a seed; take the first unused row.
      for (Eigen::Index i = 0; i < n; ++i) {
        if (std::find(centers.begin(), centers.end(), i) == centers.end()) {
          pick = static_cast<int>(i);
          break;
        }
      }
    }
    centers.push_back(pick);
  }
  Eigen::MatrixXd resp = Eigen::MatrixXd::Zero(n, k);
  for (Eigen::Index i = 0; i < n; ++i) {
    int best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (int c = 0; c < k; ++c) {
      const double d = (z.row(i) - z.row(centers[c])).squaredNorm();
      if (d < best_d) {
        best_d = d;
        best = c;
      }
    }
    resp(i, best) = 1.0;
  }

  auto handle_degenerate = [&](int comp, const EStep* last) {
    if (comp < 0) return;
    if (fit.reseeds > 0) {
      throw CalibrationError("fit_gmm: component " + std::to_string(comp) +
                             " collapsed twice; reduce k");
    }
    ++fit.reseeds;
    Eigen::Index worst = 0;
    if (last) last->point_ll.minCoeff(&worst);
    g.means.row(comp) = z.row(worst);
    g.variances.row(comp).setOnes();
    g.weights(comp) = 1.0 / static_cast<double>(n);
    g.weights /= g.weights.sum();
  };

  handle_degenerate(m_step(g, z, resp, options.variance_floor), nullptr);
  EStep e = e_step(g, z);
  fit.log_likelihood.push_back(e.total);
  for (int it = 0; it < options.max_iter; ++it) {
    const int degenerate = m_step(g, z, e.resp, options.variance_floor);
    handle_degenerate(degenerate, &e);
    EStep next = e_step(g, z);
    ++fit.iterations;
    const double gain = next.total - e.total;
    fit.log_likelihood.push_back(next.total);
    e = std::move(next);
    if (degenerate < 0 && !(gain >= options.tol)) break;
  }

  fit.assignment.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::Index best;
    e.resp.row(i).maxCoeff(&best);
    fit.assignment[i] = static_cast<int>(best);
  }
  return fit;
}

int ItemGroupModel::group_of(const std::vector<std::string>& items) const {
  if (items.size() > 1) return multi_item_group;
  if (items.empty()) return fallback_group;
  auto it = item_group.find(items.front());
  if (it != item_group.end()) return it->second;
  std::cerr << "warning: unseen exam item '" << items.front() << "' mapped to "
            << label(fallback_group) << "\n";
  return fallback_group;
}

int ItemGroupModel::group_for_features(const Eigen::RowVectorXd& raw) const {
  return mixture.nearest(raw);
}

ItemGroupModel assign_item_groups(const GmmFit& fit, const ItemFeatureTable& table,
                                  const std::vector<PatientRecord>& log) {
  const int k = fit.mixture.k();
  if (static_cast<std::size_t>(table.features.rows()) != fit.assignment.size()) {
    throw InputError("assign_item_groups: fit does not match feature table");
  }
  // Number clusters by ascending mean service time of their member items.
  std::vector<double> mean_service(k, std::numeric_limits<double>::infinity());
  std::vector<double> visits(k, 0.0);
  std::vector<double> weight_sum(k, 0.0);
  for (std::size_t i = 0; i < fit.assignment.size(); ++i) {
    const int c = fit.assignment[i];
    const double w = table.observations[i];
    if (!std::isfinite(mean_service[c])) mean_service[c] = 0.0;
    mean_service[c] += w * table.features(static_cast<Eigen::Index>(i), 0);
    weight_sum[c] += w;
    visits[c] += w;
  }
  for (int c = 0; c < k; ++c) {
    if (weight_sum[c] > 0) mean_service[c] /= weight_sum[c];
  }
  std::vector<int> order(k);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return mean_service[a] < mean_service[b]; });
  std::vector<int> renumber(k);
  for (int i = 0; i < k; ++i) renumber[order[i]] = i;

  ItemGroupModel m;
  m.n_clusters = k;
  m.multi_item_group = k;
  auto& mix = m.mixture;
  mix.standardizer = fit.mixture.standardizer;
  mix.weights.resize(k);
  mix.means.resize(k, fit.mixture.means.cols());
  mix.variances.resize(k, fit.mixture.variances.cols());
  for (int c = 0; c < k; ++c) {
    mix.weights(renumber[c]) = fit.mixture.weights(c);
    mix.means.row(renumber[c]) = fit.mixture.means.row(c);
    mix.variances.row(renumber[c]) = fit.mixture.variances.row(c);
  }
  m.feature_items = table.items;
  m.feature_rows = table.features;
  for (std::size_t i = 0; i < table.items.size(); ++i) {
    m.item_group[table.items[i]] = renumber[fit.assignment[i]];
  }
  int largest = 0;
  for (int c = 1; c < k; ++c) {
    if (visits[order[c]] > visits[order[largest]]) largest = c;
  }
  m.fallback_group = largest;
  for (const auto& [item, count] : table.insufficient) m.item_group[item] = m.fallback_group;
  (void)log;
  return m;
}

std::vector<WardMerge> ward_linkage(const Eigen::MatrixXd& points) {
  const int n = static_cast<int>(points.rows());
  std::vector<WardMerge> merges;
  if (n < 2) return merges;
  std::vector<std::vector<double>> d2(n, std::vector<double>(n, 0.0));
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) d2[i][j] = d2[j][i] = (points.row(i) - points.row(j)).squaredNorm();
  }
  std::vector<int> id(n), size(n, 1), min_leaf(n);
  std::vector<bool> active(n, true);
  std::iota(id.begin(), id.end(), 0);
  std::iota(min_leaf.begin(), min_leaf.end(), 0);

  for (int step = 0; step < n - 1; ++step) {
    int bi = -1, bj = -1;
    for (int i = 0; i < n; ++i) {
      if (!active[i]) continue;
      for (int j = i + 1; j < n; ++j) {
        if (!active[j]) continue;
        if (bi < 0 || d2[i][j] < d2[bi][bj]) {
          bi = i;
          bj = j;
        } else if (d2[i][j] == d2[bi][bj]) {
          auto key = [&](int a, int b) {
            return std::pair(std::min(min_leaf[a], min_leaf[b]), std::max(min_leaf[a], min_leaf[b]));
          };
          if (key(i, j) < key(bi, bj)) {
            bi = i;
            bj = j;
          }
        }
      }
    }
    if (min_leaf[bj] < min_leaf[bi]) std::swap(bi, bj);
    WardMerge m{id[bi], id[bj], std::sqrt(std::max(0.0, d2[bi][bj])), size[bi] + size[bj]};
    merges.push_back(m);
    const double dij = d2[bi][bj];
    for (int k = 0; k < n; ++k) {
      if (!active[k] || k == bi || k == bj) continue;
      const double t = size[k] + size[bi] + size[bj];
      const double v = ((size[k] + size[bi]) * d2[k][bi] + (size[k] + size[bj]) * d2[k][bj] -
                        size[k] * dij) / t;
      d2[k][bi] = d2[bi][k] = v;
    }
    active[bj] = false;
    size[bi] += size[bj];
    min_leaf[bi] = std::min(min_leaf[bi], min_leaf[bj]);
    id[bi] = n + step;
  }
  return merges;
}

std::vector<int> cut_tree(const std::vector<WardMerge>& merges, int n_leaves, int k) {
  if (k < 1 || k > n_leaves) throw InputError("cut_tree: cluster count out of range");
  std::vector<int> parent(2 * n_leaves, -1);
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](int x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  for (int s = 0; s < n_leaves - k; ++s) {
    const int node = n_leaves + s;
    parent[find(merges[s].a)] = node;
    parent[find(merges[s].b)] = node;
  }
  std::map<int, int> label_of_root;
  std::vector<int> labels(n_leaves);
  for (int i = 0; i < n_leaves; ++i) {
    const int root = find(i);
    auto [it, inserted] = label_of_root.emplace(root, static_cast<int>(label_of_root.size()));
    labels[i] = it->second;
  }
  return labels;
}

int RoomTypeModel::type_of(int room) const {
  auto it = room_type.find(room);
  return it == room_type.end() ? -1 : it->second;
}

RoomTypeModel cluster_rooms(const std::vector<PatientRecord>& log, const std::vector<int>& rooms,
                            int n_types) {
  if (n_types < 1 || n_types > static_cast<int>(rooms.size())) {
    throw InputError("cluster_rooms: n_types=" + std::to_string(n_types) + " exceeds " +
                     std::to_string(rooms.size()) + " rooms");
  }
  RoomTypeModel m;
  m.rooms = rooms;
  std::sort(m.rooms.begin(), m.rooms.end());
  std::set<std::string> items;
  for (const auto& r : log) items.insert(r.exam_items.begin(), r.exam_items.end());
  m.feature_items.assign(items.begin(), items.end());
  std::map<std::string, int> item_col;
  for (std::size_t i = 0; i < m.feature_items.size(); ++i) item_col[m.feature_items[i]] = static_cast<int>(i);
  std::map<int, int> row_of;
  for (std::size_t i = 0; i < m.rooms.size(); ++i) row_of[m.rooms[i]] = static_cast<int>(i);

  const auto n = static_cast<Eigen::Index>(m.rooms.size());
  m.features = Eigen::MatrixXd::Zero(n, 2 + static_cast<Eigen::Index>(items.size()));
  std::vector<std::set<std::string>> open_days(n);
  std::vector<double> visits(n, 0.0), item_total(n, 0.0);
  for (const auto& r : log) {
    auto it = row_of.find(r.room_id);
    if (it == row_of.end()) continue;
    const int i = it->second;
    open_days[i].insert(r.day_id);
    visits[i] += 1.0;
    m.features(i, 1) += static_cast<double>(r.service());
    for (const auto& item : r.exam_items) {
      m.features(i, 2 + item_col[item]) += 1.0;
      item_total[i] += 1.0;
    }
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    if (visits[i] == 0.0) {
      throw CalibrationError("cluster_rooms: room " + std::to_string(m.rooms[i]) +
                             " has no records");
    }
    m.features(i, 0) = static_cast<double>(open_days[i].size());
    m.features(i, 1) /= visits[i];
    m.features.row(i).tail(m.features.cols() - 2) /= item_total[i];
  }
  const Eigen::MatrixXd z = Standardizer::fit(m.features).apply(m.features);
  m.merges = ward_linkage(z);
  const auto labels = cut_tree(m.merges, static_cast<int>(n), n_types);
  m.members.assign(n_types, {});
  for (Eigen::Index i = 0; i < n; ++i) {
    m.room_type[m.rooms[i]] = labels[i];
    m.members[labels[i]].push_back(m.rooms[i]);
  }
  return m;
}

std::string PatientClass::label() const {
  return "P" + std::to_string(item_group + 1) + "/A" + std::to_string(age_bucket) + "/" +
         (gender == Gender::female ? "F" : "M");
}

std::vector<PatientClass> build_patient_classes(const ItemGroupModel& groups,
                                                const std::vector<PatientRecord>& log) {
  std::set<PatientClass> seen;
  for (const auto& r : log) seen.insert({groups.group_of(r.exam_items), age_bucket(r.age), r.gender});
  return {seen.begin(), seen.end()};
}

int class_index(const std::vector<PatientClass>& classes, const PatientClass& c) {
  auto it = std::lower_bound(classes.begin(), classes.end(), c);
  if (it == classes.end() || *it != c) return -1;
  return static_cast<int>(it - classes.begin());
}

nlohmann::json to_json(const ItemGroupModel& m) {
  nlohmann::json item_group = nlohmann::json::object();
  for (const auto& [item, g] : m.item_group) item_group[item] = g;
  return {{"n_clusters", m.n_clusters},
          {"multi_item_group", m.multi_item_group},
          {"fallback_group", m.fallback_group},
          {"weights", vector_to_json(m.mixture.weights)},
          {"means", matrix_to_json(m.mixture.means)},
          {"variances", matrix_to_json(m.mixture.variances)},
          {"feature_mean", vector_to_json(m.mixture.standardizer.mean)},
          {"feature_scale", vector_to_json(m.mixture.standardizer.scale)},
          {"feature_items", m.feature_items},
          {"feature_rows", matrix_to_json(m.feature_rows)},
          {"item_group", item_group}};
}

ItemGroupModel item_groups_from_json(const nlohmann::json& j) {
  ItemGroupModel m;
  m.n_clusters = j.at("n_clusters").get<int>();
  m.multi_item_group = j.at("multi_item_group").get<int>();
  m.fallback_group = j.at("fallback_group").get<int>();
  m.mixture.weights = vector_from_json(j.at("weights"));
  m.mixture.means = matrix_from_json(j.at("means"));
  m.mixture.variances = matrix_from_json(j.at("variances"));
  m.mixture.standardizer.mean = vector_from_json(j.at("feature_mean")).transpose();
  m.mixture.standardizer.scale = vector_from_json(j.at("feature_scale")).transpose();
  m.feature_items = j.at("feature_items").get<std::vector<std::string>>();
  m.feature_rows = matrix_from_json(j.at("feature_rows"), m.mixture.means.cols());
  for (const auto& [item, g] : j.at("item_group").items()) m.item_group[item] = g.get<int>();
  return m;
}

nlohmann::json to_json(const RoomTypeModel& m) {
  nlohmann::json merges = nlohmann::json::array();
  for (const auto& w : m.merges) merges.push_back({w.a, w.b, w.height, w.size});
  return {{"rooms", m.rooms},
          {"members", m.members},
          {"merges", merges},
          {"features", matrix_to_json(m.features)},
          {"feature_items", m.feature_items}};
}

RoomTypeModel room_types_from_json(const nlohmann::json& j) {
  RoomTypeModel m;
  m.rooms = j.at("rooms").get<std::vector<int>>();
  m.members = j.at("members").get<std::vector<std::vector<int>>>();
  for (std::size_t t = 0; t < m.members.size(); ++t) {
    for (int r : m.members[t]) m.room_type[r] = static_cast<int>(t);
  }
  for (const auto& w : j.at("merges")) {
    m.merges.push_back({w[0].get<int>(), w[1].get<int>(), w[2].get<double>(), w[3].get<int>()});
  }
  m.feature_items = j.at("feature_items").get<std::vector<std::string>>();
  m.features = matrix_from_json(j.at("features"), 2 + static_cast<Eigen::Index>(m.feature_items.size()));
  return m;
}

}  // namespace uq
