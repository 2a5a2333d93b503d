#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>
#include <map>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "scriptorium/core/coco_json.hpp"
#include "scriptorium/core/executor.hpp"
#include "scriptorium/core/types.hpp"

namespace scriptorium {

struct FeatureVector {
  ImageId image_id = 0;
  std::vector<double> values;
};

/// Rejects ragged dimensions, non-finite values, zero norms, and repeated ids.
inline void validate_features(const std::vector<FeatureVector>& feats) {
  std::set<ImageId> ids;
  for (const auto& f : feats) {
    if (!ids.insert(f.image_id).second) throw ValidationError("duplicate feature for image " + std::to_string(f.image_id));
    if (f.values.empty() || f.values.size() != feats.front().values.size())
      throw ValidationError("feature for image " + std::to_string(f.image_id) + " has mismatched dimension");
    double norm = 0.0;
    for (double v : f.values) {
      if (!std::isfinite(v)) throw ValidationError("feature for image " + std::to_string(f.image_id) + " is not finite");
      norm += v * v;
    }
    if (!(norm > 0.0)) throw ValidationError("feature for image " + std::to_string(f.image_id) + " has zero norm");
  }
}

inline double cosine_distance(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size()) throw ArgumentError("cosine distance of vectors with different dimensions");
  double dot = 0.0, nu = 0.0, nv = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    dot += u[i] * v[i];
    nu += u[i] * u[i];
    nv += v[i] * v[i];
  }
  if (!(nu > 0.0) || !(nv > 0.0)) throw ValidationError("cosine distance of a zero-norm vector");
  return std::clamp(1.0 - dot / (std::sqrt(nu) * std::sqrt(nv)), 0.0, 2.0);
}

inline double cosine_distance(const FeatureVector& u, const FeatureVector& v) {
  return cosine_distance(std::span<const double>(u.values), std::span<const double>(v.values));
}

/// One agglomeration step. Clusters are named by their smallest image id.
struct MergeStep {
  ImageId left = 0;   // smaller of the two cluster names
  ImageId right = 0;
  double distance = 0.0;
  std::size_t size = 0;  // members after the merge

  friend bool operator==(const MergeStep&, const MergeStep&) = default;
};

struct Clustering {
  std::map<ImageId, int> assignment;  // image id -> cluster index 0..K-1
  std::vector<MergeStep> merges;
};

/// Pairwise cosine distances, row-major over `feats` order.
inline std::vector<double> distance_matrix(const std::vector<FeatureVector>& feats,
                                           const Executor& exec = Executor::serial()) {
  const std::size_t n = feats.size();
  std::vector<double> d(n * n, 0.0);
  exec.parallel_for(n, [&](std::size_t i) {
    for (std::size_t j = 0; j < n; ++j)
      if (i != j) d[i * n + j] = cosine_distance(feats[i], feats[j]);
  });
  return d;
}

/// Single-linkage agglomeration down to k clusters. Each step merges the pair at the
/// smallest linkage distance; ties go to the pair whose (smaller name, larger name)
/// is lexicographically least. Cluster indices are numbered by smallest member id.
inline Clustering single_linkage_cluster(const std::vector<FeatureVector>& feats, std::size_t k,
                                         const Executor& exec = Executor::serial()) {
  const std::size_t n = feats.size();
  if (k < 1 || k > n) throw ArgumentError("cluster count must lie in [1, " + std::to_string(n) + "]");
  validate_features(feats);

  // Sort points by image id so "smaller name" is "smaller slot".
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return feats[a].image_id < feats[b].image_id; });
  std::vector<FeatureVector> pts;
  pts.reserve(n);
  for (auto i : order) pts.push_back(feats[i]);

  auto link = distance_matrix(pts, exec);  // becomes cluster-to-cluster linkage for active slots
  std::vector<bool> active(n, true);
  std::vector<std::size_t> parent(n), size(n, 1);
  for (std::size_t i = 0; i < n; ++i) parent[i] = i;

  Clustering out;
  for (std::size_t clusters = n; clusters > k; --clusters) {
    double best = std::numeric_limits<double>::infinity();
    std::size_t bi = 0, bj = 0;
    // Slot index == smallest member position, so row-major scan order is the tie-break order.
    for (std::size_t i = 0; i < n; ++i) {
      if (!active[i]) continue;
      for (std::size_t j = i + 1; j < n; ++j) {
        if (!active[j]) continue;
        if (link[i * n + j] < best) best = link[i * n + j], bi = i, bj = j;
      }
    }
    for (std::size_t m = 0; m < n; ++m) {
      if (!active[m] || m == bi || m == bj) continue;
      const double v = std::min(link[bi * n + m], link[bj * n + m]);
      link[bi * n + m] = link[m * n + bi] = v;
    }
    active[bj] = false;
    parent[bj] = bi;
    size[bi] += size[bj];
    out.merges.push_back({pts[bi].image_id, pts[bj].image_id, best, size[bi]});
  }

  auto root = [&](std::size_t i) {
    while (parent[i] != i) i = parent[i];
    return i;
  };
  std::map<std::size_t, int> index_of_root;
  for (std::size_t i = 0; i < n; ++i) {
    const auto r = root(i);
    auto [it, _] = index_of_root.emplace(r, static_cast<int>(index_of_root.size()));
    out.assignment[pts[i].image_id] = it->second;
  }
  return out;
}

/// Per cluster, the member with the least total cosine distance to its cluster mates;
/// ties to the smaller image id. Returned in cluster-index order.
inline std::vector<ImageId> select_medoids(const std::vector<FeatureVector>& feats,
                                           const std::map<ImageId, int>& assignment) {
  std::map<int, std::vector<const FeatureVector*>> members;
  for (const auto& f : feats) {
    auto it = assignment.find(f.image_id);
    if (it == assignment.end()) throw ArgumentError("image " + std::to_string(f.image_id) + " has no cluster");
    members[it->second].push_back(&f);
  }
  std::vector<ImageId> out;
  for (auto& [_, ms] : members) {
    std::sort(ms.begin(), ms.end(), [](auto* a, auto* b) { return a->image_id < b->image_id; });
    double best = std::numeric_limits<double>::infinity();
    ImageId best_id = ms.front()->image_id;
    for (const auto* a : ms) {
      double sum = 0.0;
      for (const auto* b : ms)
        if (a != b) sum += cosine_distance(*a, *b);
      if (sum < best) best = sum, best_id = a->image_id;
    }
    out.push_back(best_id);
  }
  return out;
}

struct SplitResult {
  std::set<ImageId> test_ids;
  std::set<ImageId> train_ids;
  std::map<ImageId, int> cluster_assignment;
  std::vector<MergeStep> merge_log;
  double ratio = 0.0;
};

/// Cluster count for a split ratio, rounding half up.
inline std::size_t split_cluster_count(std::size_t n, double ratio) {
  return static_cast<std::size_t>(std::floor(ratio * static_cast<double>(n) + 0.5));
}

inline SplitResult make_split(const std::vector<FeatureVector>& feats, double ratio,
                              const Executor& exec = Executor::serial()) {
  if (!(ratio > 0.0 && ratio < 1.0)) throw ArgumentError("split ratio must lie in (0, 1)");
  auto clustering = single_linkage_cluster(feats, split_cluster_count(feats.size(), ratio), exec);
  SplitResult out;
  out.ratio = ratio;
  for (const auto id : select_medoids(feats, clustering.assignment)) out.test_ids.insert(id);
  for (const auto& f : feats)
    if (!out.test_ids.count(f.image_id)) out.train_ids.insert(f.image_id);
  out.cluster_assignment = std::move(clustering.assignment);
  out.merge_log = std::move(clustering.merges);
  return out;
}

/// JSON Lines, one {"image_id": int, "vector": [float, ...]} per line. Blank lines are ignored.
inline std::vector<FeatureVector> parse_features_jsonl(const std::string& text) {
  std::vector<FeatureVector> out;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
      out.push_back({j.at("image_id").get<ImageId>(), j.at("vector").get<std::vector<double>>()});
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(std::string("bad feature record: ") + e.what(), lineno);
    }
  }
  validate_features(out);
  return out;
}

inline std::vector<FeatureVector> read_features(const std::filesystem::path& path) {
  try {
    return parse_features_jsonl(read_text_file(path));
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what(), e.line());
  }
}

inline std::string features_to_jsonl(const std::vector<FeatureVector>& feats) {
  std::string out;
  for (const auto& f : feats) {
    nlohmann::ordered_json j{{"image_id", f.image_id}, {"vector", f.values}};
    out += j.dump() + "\n";
  }
  return out;
}

inline nlohmann::ordered_json split_to_json(const SplitResult& s) {
  nlohmann::ordered_json assignment = nlohmann::ordered_json::array();
  for (const auto& [id, c] : s.cluster_assignment) assignment.push_back({{"image_id", id}, {"cluster", c}});
  nlohmann::ordered_json log = nlohmann::ordered_json::array();
  for (const auto& m : s.merge_log)
    log.push_back({{"left", m.left}, {"right", m.right}, {"distance", m.distance}, {"size", m.size}});
  return {{"ratio", s.ratio},
          {"clusters", s.test_ids.size()},
          {"test_ids", s.test_ids},
          {"train_ids", s.train_ids},
          {"cluster_assignment", assignment},
          {"merge_log", log}};
}

inline SplitResult split_from_json(const nlohmann::json& j) {
  SplitResult s;
  try {
    s.ratio = j.value("ratio", 0.0);
    s.test_ids = j.at("test_ids").get<std::set<ImageId>>();
    s.train_ids = j.at("train_ids").get<std::set<ImageId>>();
    for (const auto& a : j.value("cluster_assignment", nlohmann::json::array()))
      s.cluster_assignment[a.at("image_id").get<ImageId>()] = a.at("cluster").get<int>();
    for (const auto& m : j.value("merge_log", nlohmann::json::array()))
      s.merge_log.push_back({m.at("left").get<ImageId>(), m.at("right").get<ImageId>(), m.at("distance").get<double>(),
                             m.at("size").get<std::size_t>()});
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad split document: ") + e.what());
  }
  for (const auto id : s.test_ids)
    if (s.train_ids.count(id)) throw ValidationError("image " + std::to_string(id) + " is in both test and train sets");
  return s;
}

inline SplitResult read_split(const std::filesystem::path& path) {
  return split_from_json(parse_json_text(read_text_file(path), path.string()));
}

}  // namespace scriptorium
