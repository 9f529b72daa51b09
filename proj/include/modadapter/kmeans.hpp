/*
 * Copyright 2026 The ModAdapter Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *    http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "modadapter/modk.hpp"
#include "modadapter/tensor.hpp"

namespace modadapter {

struct KMeansResult {
  Matrix centroids;                // k x d
  std::vector<Index> assignment;  // per input point
  Scalar inertia = 0;
  int iterations = 0;
};

/// Nearest centroid by squared Euclidean distance, ties to the lowest index.
Index nearest_centroid(const Matrix& centroids, const RowVector& point);

/// k-means++ seeding followed by Lloyd iterations until the assignment stops
/// changing or `max_iterations` is reached. An emptied cluster is re-seeded
/// with the point farthest from its centroid, so every cluster keeps at least
/// one member.
KMeansResult kmeans_fit(const Matrix& points, Index k, std::uint64_t seed, int max_iterations = 100);

/// Frozen concept-word -> expert map built from k-means over neutral
/// features.
class RoutingTable {
 public:
  RoutingTable() = default;
  /// `features` row r belongs to `words[r]`.
  static RoutingTable fit(const std::vector<std::string>& words, const Matrix& features, Index n_experts,
                          std::uint64_t seed);

  Index experts() const { return centroids_.rows(); }
  const Matrix& centroids() const { return centroids_; }
  const std::map<std::string, Index>& word_map() const { return word_expert_; }
  /// Size of each cluster among the fitted words.
  std::vector<Index> cluster_sizes() const;

  std::uint64_t hash() const;
  void save(ModkFile& file, const std::string& prefix = "routing/") const;
  static RoutingTable load(const ModkFile& file, const std::string& prefix = "routing/");

  bool operator==(const RoutingTable&) const = default;

 private:
  Matrix centroids_;
  std::map<std::string, Index> word_expert_;
};

/// Parameter-free routing: nearest centroid of the neutral feature. Unseen
/// words take the same path.
Index route(const RowVector& neutral, const RoutingTable& table);

}  // namespace modadapter
