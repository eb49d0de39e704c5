#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <unordered_map>
#include <vector>

namespace hicle {

// Label ids from coarsest (level 0) to finest (level L-1) for one sample.
struct LabelPath {
  std::vector<std::uint32_t> labels;
  std::uint64_t sample_id = 0;

  std::size_t level_count() const noexcept { return labels.size(); }
  friend bool operator==(const LabelPath&, const LabelPath&) = default;
};

struct TreeNode {
  int parent = -1;  // -1 only for the virtual root
  int level = -1;
  std::uint32_t label = 0;
  std::vector<int> children;
  std::vector<std::uint64_t> samples;  // sample ids in this subtree, ascending
};

// Label taxonomy materialized from the distinct prefixes of a path set.
// Node 0 is the virtual root at level -1. Node ids are assigned in
// lexicographic prefix order, so the table does not depend on input order.
class HierarchyTree {
 public:
  std::size_t level_count() const noexcept { return level_count_; }
  const std::vector<TreeNode>& nodes() const noexcept { return nodes_; }
  const TreeNode& node(int id) const { return nodes_.at(static_cast<std::size_t>(id)); }
  std::size_t nodes_at_level(int level) const;
  // Finest-level node holding the sample.
  int leaf_of(std::uint64_t sample_id) const;
  // Node reached by following labels[0..level]; -1 when absent.
  int node_for(std::span<const std::uint32_t> labels, int level) const;

  friend HierarchyTree build_tree(std::span<const LabelPath> paths);

 private:
  std::size_t level_count_ = 0;
  std::vector<TreeNode> nodes_;
  std::unordered_map<std::uint64_t, int> leaf_index_;
};

HierarchyTree build_tree(std::span<const LabelPath> paths);

// Deepest level on which the two paths agree on every entry 0..l, or -1.
int lca_level(const LabelPath& a, const LabelPath& b);

enum class PositivesMode {
  kCumulative,  // level-l positives share labels 0..l
  kExactLca,    // level-l positives share labels 0..l and diverge below
};

// Per-level positive-pair indicators for one batch. With the instance level
// enabled, rows carrying the same sample_id get LCA level L and the tensor has
// L+1 levels; otherwise it has L levels.
class PairingTensor {
 public:
  PairingTensor(std::size_t n, std::size_t levels, PositivesMode mode);

  std::size_t size() const noexcept { return n_; }
  std::size_t levels() const noexcept { return levels_; }
  PositivesMode mode() const noexcept { return mode_; }

  int lca(std::size_t i, std::size_t j) const { return lca_[i * n_ + j]; }
  bool positive(std::size_t level, std::size_t i, std::size_t j) const {
    return positive_[level][i * n_ + j] != 0;
  }
  // Positive column indices of anchor i at a level, ascending.
  std::vector<std::size_t> positives_of(std::size_t level, std::size_t i) const;
  std::size_t count_positive_pairs(std::size_t level) const;

  friend PairingTensor pairing_tensor(std::span<const LabelPath>, PositivesMode, bool);

 private:
  std::size_t n_;
  std::size_t levels_;
  PositivesMode mode_;
  std::vector<int> lca_;
  std::vector<std::vector<std::uint8_t>> positive_;
};

PairingTensor pairing_tensor(std::span<const LabelPath> batch, PositivesMode mode,
                             bool instance_level = true);

// Labels CSV: header "id,level_0,...,level_{L-1}", one row per sample, LF only.
std::vector<LabelPath> read_labels_csv(const std::filesystem::path& path);
// level_count is taken from the paths when non-empty; it only matters for an empty set.
void write_labels_csv(const std::filesystem::path& path, std::span<const LabelPath> paths,
                      std::size_t level_count = 1);

// Checks all paths have the same non-zero length; returns it.
std::size_t common_level_count(std::span<const LabelPath> paths);

}  // namespace hicle
