#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "hicle/hierarchy.hpp"
#include "hicle/matrix.hpp"

namespace hicle {

// Embeddings read back from f32 files are accepted within this distance of unit norm.
inline constexpr double kEvalNormTolerance = 1e-5;

struct RetrievalReport {
  std::vector<std::pair<std::size_t, double>> topk;  // (k, accuracy), in the requested order
  std::optional<double> map_at_r;
  std::size_t excluded_queries = 0;
  bool k_clamped = false;  // some k exceeded the gallery size
};

// Gallery indices ordered by descending inner product with the query; ties
// go to the lower gallery index.
std::vector<std::size_t> rank_gallery(std::span<const double> query, const Matrix& gallery);

RetrievalReport topk_retrieval(const Matrix& queries, const Matrix& gallery,
                               std::span<const std::uint64_t> query_classes,
                               std::span<const std::uint64_t> gallery_classes, std::span<const std::size_t> ks);

struct MapAtR {
  std::optional<double> value;  // absent when every query has R = 0
  std::size_t excluded_queries = 0;
};

MapAtR map_at_r(const Matrix& queries, const Matrix& gallery, std::span<const std::uint64_t> query_classes,
                std::span<const std::uint64_t> gallery_classes);

struct KMeansResult {
  std::vector<std::size_t> assignments;
  Matrix centers;
  std::vector<double> inertia;  // after each assignment step
  std::size_t iterations = 0;
};

// Lloyd's algorithm with k-means++ seeding; empty clusters take the point
// farthest from its center.
KMeansResult kmeans(const Matrix& points, std::size_t k, std::uint64_t seed, std::size_t max_iters = 100,
                    double tolerance = 1e-8);

// Mutual information over the arithmetic mean of the two entropies (nats).
double nmi(std::span<const std::uint64_t> a, std::span<const std::uint64_t> b);

struct ClusteringReport {
  // Level 0: one clustering over all points. Deeper levels: one clustering
  // per category, averaged without weights. Absent when undefined.
  std::vector<std::optional<double>> nmi_per_level;
  std::vector<std::size_t> excluded_categories;  // per level
};

ClusteringReport clustering_report(const Matrix& embeddings, std::span<const LabelPath> paths, std::uint64_t seed);

struct ViolationReport {
  std::optional<double> violation_rate;
  std::size_t comparisons = 0;
  std::size_t violations = 0;
  std::uint64_t seed = 0;
};

// Samples pairs of pairs with different LCA levels; a violation is the pair
// with the deeper LCA sitting strictly farther apart.
ViolationReport distance_violation_rate(const Matrix& embeddings, std::span<const LabelPath> paths,
                                        std::size_t num_comparisons, std::uint64_t seed);

// Dense ids for the label prefix 0..level (level = L-1 gives finest classes).
std::vector<std::uint64_t> prefix_class_ids(std::span<const LabelPath> paths, std::size_t level);

}  // namespace hicle
