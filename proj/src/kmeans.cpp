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

#include "modadapter/kmeans.hpp"

#include <limits>

#include "modadapter/errors.hpp"
#include "modadapter/random.hpp"

namespace modadapter {

Index nearest_centroid(const Matrix& centroids, const RowVector& point) {
  if (centroids.rows() == 0) throw RangeError("routing table has no centroids");
  if (centroids.cols() != point.cols()) throw ShapeError("point width differs from centroids");
  Index best = 0;
  Scalar best_d = std::numeric_limits<Scalar>::infinity();
  for (Index j = 0; j < centroids.rows(); ++j) {
    const Scalar d = (centroids.row(j) - point).squaredNorm();
    if (d < best_d) {
      best = j;
      best_d = d;
    }
  }
  return best;
}

KMeansResult kmeans_fit(const Matrix& points, Index k, std::uint64_t seed, int max_iterations) {
  const Index n = points.rows();
  if (k < 1) throw RangeError("k-means: k must be >= 1");
  if (n < k) throw RangeError("k-means: fewer points than clusters");
  Rng rng(seed);

  // k-means++ seeding
  KMeansResult r;
  r.centroids.resize(k, points.cols());
  r.centroids.row(0) = points.row(static_cast<Index>(rng.below(static_cast<std::uint64_t>(n))));
  Vector d2 = (points.rowwise() - r.centroids.row(0)).rowwise().squaredNorm();
  for (Index c = 1; c < k; ++c) {
    const Scalar total = d2.sum();
    Index pick = 0;
    if (total > 0) {
      Scalar u = rng.uniform() * total;
      pick = n - 1;
      for (Index i = 0; i < n; ++i) {
        u -= d2(i);
        if (u < 0 && d2(i) > 0) {
          pick = i;
          break;
        }
      }
    }
    r.centroids.row(c) = points.row(pick);
    d2 = d2.cwiseMin((points.rowwise() - r.centroids.row(c)).rowwise().squaredNorm());
  }

  r.assignment.assign(static_cast<std::size_t>(n), -1);
  for (r.iterations = 0; r.iterations < max_iterations; ++r.iterations) {
    bool changed = false;
    for (Index i = 0; i < n; ++i) {
      const Index a = nearest_centroid(r.centroids, points.row(i));
      if (a != r.assignment[static_cast<std::size_t>(i)]) changed = true;
      r.assignment[static_cast<std::size_t>(i)] = a;
    }
    // keep clusters non-empty
    std::vector<Index> count(static_cast<std::size_t>(k), 0);
    for (Index a : r.assignment) ++count[static_cast<std::size_t>(a)];
    for (Index c = 0; c < k; ++c) {
      if (count[static_cast<std::size_t>(c)] > 0) continue;
      Index far = -1;
      Scalar far_d = -1;
      for (Index i = 0; i < n; ++i) {
        const Index a = r.assignment[static_cast<std::size_t>(i)];
        if (count[static_cast<std::size_t>(a)] < 2) continue;
        const Scalar d = (points.row(i) - r.centroids.row(a)).squaredNorm();
        if (d > far_d) {
          far = i;
          far_d = d;
        }
      }
      --count[static_cast<std::size_t>(r.assignment[static_cast<std::size_t>(far)])];
      r.assignment[static_cast<std::size_t>(far)] = c;
      count[static_cast<std::size_t>(c)] = 1;
      changed = true;
    }
    if (!changed && r.iterations > 0) break;
    Matrix sums = Matrix::Zero(k, points.cols());
    for (Index i = 0; i < n; ++i) sums.row(r.assignment[static_cast<std::size_t>(i)]) += points.row(i);
    for (Index c = 0; c < k; ++c) r.centroids.row(c) = sums.row(c) / static_cast<Scalar>(count[static_cast<std::size_t>(c)]);
  }
  r.inertia = 0;
  for (Index i = 0; i < n; ++i)
    r.inertia += (points.row(i) - r.centroids.row(r.assignment[static_cast<std::size_t>(i)])).squaredNorm();
  return r;
}

RoutingTable RoutingTable::fit(const std::vector<std::string>& words, const Matrix& features, Index n_experts,
                               std::uint64_t seed) {
  if (static_cast<Index>(words.size()) != features.rows()) throw ShapeError("routing: one feature row per word");
  KMeansResult km = kmeans_fit(features, n_experts, seed);
  RoutingTable t;
  t.centroids_ = km.centroids;
  for (std::size_t i = 0; i < words.size(); ++i) t.word_expert_[words[i]] = km.assignment[i];
  std::vector<Index> sizes = t.cluster_sizes();
  for (Index s : sizes) {
    if (s < 1) throw Error("routing: an expert received no cluster");
  }
  return t;
}

std::vector<Index> RoutingTable::cluster_sizes() const {
  std::vector<Index> sizes(static_cast<std::size_t>(experts()), 0);
  for (const auto& [w, e] : word_expert_) ++sizes[static_cast<std::size_t>(e)];
  return sizes;
}

std::uint64_t RoutingTable::hash() const {
  ModkFile f;
  save(f);
  const auto bytes = f.encode();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (auto b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  return h;
}

void RoutingTable::save(ModkFile& file, const std::string& prefix) const {
  file.add_f64(prefix + "centroids", Tensor::from_matrix(centroids_));
  std::string words;
  std::vector<std::int64_t> experts;
  for (const auto& [w, e] : word_expert_) {
    words += w;
    words += '\n';
    experts.push_back(e);
  }
  file.add_string(prefix + "words", words);
  file.add_i64(prefix + "experts", {experts.size()}, experts);
}

RoutingTable RoutingTable::load(const ModkFile& file, const std::string& prefix) {
  RoutingTable t;
  t.centroids_ = file.get_f64(prefix + "centroids").value();
  const std::string words = file.get_string(prefix + "words");
  const auto experts = file.get_i64(prefix + "experts");
  std::size_t start = 0, k = 0;
  while (start < words.size()) {
    const std::size_t end = words.find('\n', start);
    if (end == std::string::npos || k >= experts.size()) throw FormatError("routing: malformed word map");
    if (experts[k] < 0 || experts[k] >= t.centroids_.rows()) throw FormatError("routing: expert index out of range");
    t.word_expert_[words.substr(start, end - start)] = static_cast<Index>(experts[k++]);
    start = end + 1;
  }
  if (k != experts.size()) throw FormatError("routing: malformed word map");
  return t;
}

Index route(const RowVector& neutral, const RoutingTable& table) { return nearest_centroid(table.centroids(), neutral); }

}  // namespace modadapter
