#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "hicle/hierarchy.hpp"

namespace hicle {

enum class SamplerStrategy { kHierarchical, kCategoryLevel, kRandom };

SamplerStrategy parse_sampler(std::string_view name);
std::string_view sampler_name(SamplerStrategy s);

struct SamplerConfig {
  // Rows per batch after view expansion.
  std::size_t batch_size = 64;
  SamplerStrategy strategy = SamplerStrategy::kHierarchical;
  std::uint64_t seed = 0;
  std::size_t views_per_sample = 2;

  // Distinct samples that fit in one batch.
  std::size_t samples_per_batch() const { return batch_size / views_per_sample; }
  void validate(std::size_t level_count) const;
};

struct Companion {
  std::size_t index = 0;
  int level = 0;  // exact LCA level with the anchor
};

struct AnchorGroup {
  std::size_t anchor = 0;
  std::vector<Companion> companions;
};

struct EpochPlan {
  // Dataset indices per batch, each at most once per epoch.
  std::vector<std::vector<std::size_t>> batches;
  // Anchor groups per batch; empty for the random strategy.
  std::vector<std::vector<AnchorGroup>> groups;
  std::size_t views_per_sample = 2;

  std::size_t planned() const;
};

// Builds one epoch. Hierarchical: each anchor (taken in seeded order) gets one
// unused companion whose LCA with it is exactly l, for l = L-1 down to 0,
// skipping levels whose sibling subtree has no unused sample left.
// Category-level: one unused companion from the anchor's category.
// Random: a seeded shuffle cut into batches.
EpochPlan plan_epoch(std::span<const LabelPath> labels, const HierarchyTree& tree, const SamplerConfig& cfg);

}  // namespace hicle
