#include "hicle/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <set>

#include "hicle/error.hpp"
#include "hicle/kernels.hpp"
#include "hicle/rng.hpp"

namespace hicle {
namespace {

void require_unit_rows(const Matrix& m, const char* what) {
  for (std::size_t i = 0; i < m.rows(); ++i) {
    double sq = 0.0;
    for (double v : m.row(i)) sq += v * v;
    if (std::abs(std::sqrt(sq) - 1.0) > kEvalNormTolerance)
      fail(ErrorKind::kNormalization, std::string(what) + " row " + std::to_string(i) + " is not unit norm");
  }
}

void check_retrieval_inputs(const Matrix& queries, const Matrix& gallery, std::size_t nq, std::size_t ng) {
  if (gallery.rows() == 0) fail(ErrorKind::kEmptyInput, "gallery is empty");
  if (queries.cols() != gallery.cols()) fail(ErrorKind::kStructural, "query and gallery dims differ");
  if (queries.rows() != nq || gallery.rows() != ng) fail(ErrorKind::kStructural, "class lists differ from row counts");
  require_unit_rows(queries, "query");
  require_unit_rows(gallery, "gallery");
}

std::vector<std::size_t> rank_from_scores(std::span<const double> scores) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return a < b;
  });
  return order;
}

}  // namespace

std::vector<std::size_t> rank_gallery(std::span<const double> query, const Matrix& gallery) {
  std::vector<double> scores(gallery.rows());
  for (std::size_t g = 0; g < gallery.rows(); ++g) {
    auto r = gallery.row(g);
    double acc = 0.0;
    for (std::size_t k = 0; k < r.size(); ++k) acc += query[k] * r[k];
    scores[g] = acc;
  }
  return rank_from_scores(scores);
}

RetrievalReport topk_retrieval(const Matrix& queries, const Matrix& gallery,
                               std::span<const std::uint64_t> query_classes,
                               std::span<const std::uint64_t> gallery_classes, std::span<const std::size_t> ks) {
  check_retrieval_inputs(queries, gallery, query_classes.size(), gallery_classes.size());
  RetrievalReport report;
  if (queries.rows() == 0) fail(ErrorKind::kEmptyInput, "no queries");
  const Matrix scores = kernels::matmul_nt(queries, gallery);
  const std::size_t none = std::numeric_limits<std::size_t>::max();
  std::vector<std::size_t> first_hit(queries.rows(), none);
  const auto nq = static_cast<std::ptrdiff_t>(queries.rows());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t qi = 0; qi < nq; ++qi) {
    const auto q = static_cast<std::size_t>(qi);
    const auto order = rank_from_scores(scores.row(q));
    for (std::size_t pos = 0; pos < order.size(); ++pos) {
      if (gallery_classes[order[pos]] == query_classes[q]) {
        first_hit[q] = pos;
        break;
      }
    }
  }
  for (std::size_t k : ks) {
    std::size_t effective = k;
    if (k > gallery.rows()) {
      effective = gallery.rows();
      report.k_clamped = true;
    }
    std::size_t hits = 0;
    for (std::size_t pos : first_hit)
      if (pos != none && pos < effective) ++hits;
    report.topk.emplace_back(k, static_cast<double>(hits) / static_cast<double>(queries.rows()));
  }
  const MapAtR m = map_at_r(queries, gallery, query_classes, gallery_classes);
  report.map_at_r = m.value;
  report.excluded_queries = m.excluded_queries;
  return report;
}

MapAtR map_at_r(const Matrix& queries, const Matrix& gallery, std::span<const std::uint64_t> query_classes,
                std::span<const std::uint64_t> gallery_classes) {
  check_retrieval_inputs(queries, gallery, query_classes.size(), gallery_classes.size());
  const Matrix scores = kernels::matmul_nt(queries, gallery);
  std::vector<double> per_query(queries.rows(), -1.0);
  const auto nq = static_cast<std::ptrdiff_t>(queries.rows());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t qi = 0; qi < nq; ++qi) {
    const auto q = static_cast<std::size_t>(qi);
    const auto r = static_cast<std::size_t>(
        std::count(gallery_classes.begin(), gallery_classes.end(), query_classes[q]));
    if (r == 0) continue;
    const auto order = rank_from_scores(scores.row(q));
    std::size_t relevant = 0;
    double ap = 0.0;
    for (std::size_t pos = 0; pos < r; ++pos) {
      if (gallery_classes[order[pos]] == query_classes[q]) {
        ++relevant;
        ap += static_cast<double>(relevant) / static_cast<double>(pos + 1);
      }
    }
    per_query[q] = ap / static_cast<double>(r);
  }
  MapAtR out;
  double sum = 0.0;
  std::size_t included = 0;
  for (double v : per_query) {
    if (v < 0.0) {
      ++out.excluded_queries;
      continue;
    }
    sum += v;
    ++included;
  }
  if (included > 0) out.value = sum / static_cast<double>(included);
  return out;
}

KMeansResult kmeans(const Matrix& points, std::size_t k, std::uint64_t seed, std::size_t max_iters,
                    double tolerance) {
  const std::size_t n = points.rows();
  if (k < 1 || n < k) fail(ErrorKind::kConfiguration, "kmeans needs 1 <= K <= N (K=" + std::to_string(k) +
                                                          ", N=" + std::to_string(n) + ")");
  const std::size_t dim = points.cols();
  Rng rng(seed, "kmeans");
  KMeansResult res;
  res.centers = Matrix(k, dim);

  auto sq_dist = [&](std::span<const double> a, std::span<const double> b) {
    double acc = 0.0;
    for (std::size_t t = 0; t < dim; ++t) {
      const double d = a[t] - b[t];
      acc += d * d;
    }
    return acc;
  };

  // k-means++ seeding with D^2 sampling.
  std::size_t first = static_cast<std::size_t>(rng.below(n));
  std::copy(points.row(first).begin(), points.row(first).end(), res.centers.row(0).begin());
  std::vector<double> nearest(n);
  for (std::size_t i = 0; i < n; ++i) nearest[i] = sq_dist(points.row(i), res.centers.row(0));
  for (std::size_t c = 1; c < k; ++c) {
    double total = 0.0;
    for (double d : nearest) total += d;
    std::size_t pick = 0;
    if (total > 0.0) {
      double target = rng.uniform() * total;
      pick = n - 1;
      for (std::size_t i = 0; i < n; ++i) {
        target -= nearest[i];
        if (target < 0.0 && nearest[i] > 0.0) {
          pick = i;
          break;
        }
      }
    } else {
      pick = static_cast<std::size_t>(rng.below(n));
    }
    std::copy(points.row(pick).begin(), points.row(pick).end(), res.centers.row(c).begin());
    for (std::size_t i = 0; i < n; ++i) nearest[i] = std::min(nearest[i], sq_dist(points.row(i), res.centers.row(c)));
  }

  res.assignments.assign(n, 0);
  std::vector<double> dist_to_center(n, 0.0);
  for (std::size_t iter = 0; iter < std::max<std::size_t>(1, max_iters); ++iter) {
    const Matrix d2 = kernels::pairwise_sq_dist(points, res.centers);
    double inertia = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      auto row = d2.row(i);
      const auto best = static_cast<std::size_t>(std::min_element(row.begin(), row.end()) - row.begin());
      res.assignments[i] = best;
      dist_to_center[i] = row[best];
      inertia += row[best];
    }
    res.inertia.push_back(inertia);
    res.iterations = iter + 1;

    Matrix next(k, dim);
    std::vector<std::size_t> sizes(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      ++sizes[res.assignments[i]];
      auto dst = next.row(res.assignments[i]);
      auto src = points.row(i);
      for (std::size_t t = 0; t < dim; ++t) dst[t] += src[t];
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (sizes[c] == 0) {
        const auto far = static_cast<std::size_t>(
            std::max_element(dist_to_center.begin(), dist_to_center.end()) - dist_to_center.begin());
        std::copy(points.row(far).begin(), points.row(far).end(), next.row(c).begin());
        dist_to_center[far] = 0.0;
        continue;
      }
      for (double& v : next.row(c)) v /= static_cast<double>(sizes[c]);
    }
    double movement = 0.0;
    for (std::size_t c = 0; c < k; ++c) movement = std::max(movement, sq_dist(next.row(c), res.centers.row(c)));
    res.centers = std::move(next);
    if (std::sqrt(movement) <= tolerance) break;
  }
  return res;
}

double nmi(std::span<const std::uint64_t> a, std::span<const std::uint64_t> b) {
  if (a.size() != b.size()) fail(ErrorKind::kStructural, "nmi inputs differ in length");
  if (a.empty()) fail(ErrorKind::kEmptyInput, "nmi of empty labelings");
  const double n = static_cast<double>(a.size());
  std::map<std::uint64_t, double> ca, cb;
  std::map<std::pair<std::uint64_t, std::uint64_t>, double> joint;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ca[a[i]] += 1.0;
    cb[b[i]] += 1.0;
    joint[{a[i], b[i]}] += 1.0;
  }
  auto entropy = [n](const std::map<std::uint64_t, double>& counts) {
    double h = 0.0;
    for (const auto& [key, c] : counts) h -= (c / n) * std::log(c / n);
    return h;
  };
  const double ha = entropy(ca);
  const double hb = entropy(cb);
  double mi = 0.0;
  for (const auto& [key, c] : joint) mi += (c / n) * std::log((c * n) / (ca[key.first] * cb[key.second]));
  const double denom = 0.5 * (ha + hb);
  if (ha <= 0.0 || hb <= 0.0 || denom <= 0.0) return 0.0;
  return std::clamp(mi / denom, 0.0, 1.0);
}

std::vector<std::uint64_t> prefix_class_ids(std::span<const LabelPath> paths, std::size_t level) {
  std::map<std::vector<std::uint32_t>, std::uint64_t> ids;
  for (const auto& p : paths) {
    if (level >= p.labels.size()) fail(ErrorKind::kRange, "level beyond path length");
    ids.emplace(std::vector<std::uint32_t>(p.labels.begin(), p.labels.begin() + static_cast<std::ptrdiff_t>(level) + 1), 0);
  }
  std::uint64_t next = 0;
  for (auto& [key, id] : ids) id = next++;
  std::vector<std::uint64_t> out;
  out.reserve(paths.size());
  for (const auto& p : paths)
    out.push_back(ids.at(std::vector<std::uint32_t>(p.labels.begin(), p.labels.begin() + static_cast<std::ptrdiff_t>(level) + 1)));
  return out;
}

ClusteringReport clustering_report(const Matrix& embeddings, std::span<const LabelPath> paths, std::uint64_t seed) {
  if (embeddings.rows() != paths.size()) fail(ErrorKind::kStructural, "embeddings and paths differ in row count");
  const std::size_t levels = common_level_count(paths);
  ClusteringReport report;
  report.nmi_per_level.assign(levels, std::nullopt);
  report.excluded_categories.assign(levels, 0);

  const auto categories = prefix_class_ids(paths, 0);
  const std::size_t category_count = std::set<std::uint64_t>(categories.begin(), categories.end()).size();
  if (category_count >= 2) {
    const auto res = kmeans(embeddings, category_count, seed);
    std::vector<std::uint64_t> assigned(res.assignments.begin(), res.assignments.end());
    report.nmi_per_level[0] = nmi(assigned, categories);
  }

  for (std::size_t level = 1; level < levels; ++level) {
    const auto labels = prefix_class_ids(paths, level);
    std::map<std::uint64_t, std::vector<std::size_t>> rows_by_category;
    for (std::size_t i = 0; i < paths.size(); ++i) rows_by_category[categories[i]].push_back(i);
    double sum = 0.0;
    std::size_t used = 0;
    for (const auto& [category, rows] : rows_by_category) {
      std::vector<std::uint64_t> truth;
      for (auto r : rows) truth.push_back(labels[r]);
      const std::size_t k = std::set<std::uint64_t>(truth.begin(), truth.end()).size();
      if (k < 2) {
        ++report.excluded_categories[level];
        continue;
      }
      const Matrix pts = gather_rows(embeddings, rows);
      const auto res = kmeans(pts, k, seed ^ (category + 1) * 0x9e3779b97f4a7c15ULL);
      std::vector<std::uint64_t> assigned(res.assignments.begin(), res.assignments.end());
      sum += nmi(assigned, truth);
      ++used;
    }
    if (used > 0) report.nmi_per_level[level] = sum / static_cast<double>(used);
  }
  return report;
}

ViolationReport distance_violation_rate(const Matrix& embeddings, std::span<const LabelPath> paths,
                                        std::size_t num_comparisons, std::uint64_t seed) {
  const std::size_t n = paths.size();
  if (embeddings.rows() != n) fail(ErrorKind::kStructural, "embeddings and paths differ in row count");
  if (n < 4) fail(ErrorKind::kBatchTooSmall, "need at least four embeddings");
  ViolationReport report;
  report.seed = seed;

  std::set<int> levels_present;
  for (std::size_t i = 0; i < n && levels_present.size() < 2; ++i)
    for (std::size_t j = i + 1; j < n && levels_present.size() < 2; ++j) levels_present.insert(lca_level(paths[i], paths[j]));
  if (levels_present.size() < 2) return report;

  Rng rng(seed, "violations");
  auto draw_pair = [&]() {
    const auto i = static_cast<std::size_t>(rng.below(n));
    auto j = static_cast<std::size_t>(rng.below(n - 1));
    if (j >= i) ++j;
    return std::pair{i, j};
  };
  auto distance = [&](std::pair<std::size_t, std::size_t> p) {
    auto a = embeddings.row(p.first);
    auto b = embeddings.row(p.second);
    double acc = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) {
      const double d = a[k] - b[k];
      acc += d * d;
    }
    return std::sqrt(acc);
  };

  while (report.comparisons < num_comparisons) {
    auto u = draw_pair();
    auto v = draw_pair();
    int lu = lca_level(paths[u.first], paths[u.second]);
    int lv = lca_level(paths[v.first], paths[v.second]);
    if (lu == lv) continue;
    if (lu < lv) {
      std::swap(u, v);
      std::swap(lu, lv);
    }
    ++report.comparisons;
    if (distance(u) > distance(v)) ++report.violations;
  }
  if (report.comparisons > 0)
    report.violation_rate = static_cast<double>(report.violations) / static_cast<double>(report.comparisons);
  return report;
}

}  // namespace hicle
