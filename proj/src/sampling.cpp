#include "hicle/sampling.hpp"

#include <deque>
#include <numeric>
#include <unordered_map>

#include "hicle/error.hpp"
#include "hicle/rng.hpp"

namespace hicle {

SamplerStrategy parse_sampler(std::string_view name) {
  if (name == "hierarchical") return SamplerStrategy::kHierarchical;
  if (name == "category_level") return SamplerStrategy::kCategoryLevel;
  if (name == "random") return SamplerStrategy::kRandom;
  fail(ErrorKind::kConfiguration, "unknown sampler '" + std::string(name) + "'");
}

std::string_view sampler_name(SamplerStrategy s) {
  switch (s) {
    case SamplerStrategy::kHierarchical: return "hierarchical";
    case SamplerStrategy::kCategoryLevel: return "category_level";
    case SamplerStrategy::kRandom: return "random";
  }
  return "?";
}

void SamplerConfig::validate(std::size_t level_count) const {
  if (views_per_sample < 1) fail(ErrorKind::kConfiguration, "views_per_sample must be at least 1");
  std::size_t group = 1;
  if (strategy == SamplerStrategy::kHierarchical) group = level_count + 1;
  if (strategy == SamplerStrategy::kCategoryLevel) group = 2;
  if (batch_size < views_per_sample * group)
    fail(ErrorKind::kConfiguration, "batch_size " + std::to_string(batch_size) + " cannot hold one group of " +
                                        std::to_string(group) + " samples x " + std::to_string(views_per_sample) +
                                        " views");
  if (batch_size < 2) fail(ErrorKind::kConfiguration, "batch_size must be at least 2");
}

std::size_t EpochPlan::planned() const {
  std::size_t total = 0;
  for (const auto& b : batches) total += b.size();
  return total;
}

namespace {

class BatchBuilder {
 public:
  BatchBuilder(EpochPlan& plan, std::size_t capacity, std::size_t views)
      : plan_(plan), capacity_(capacity), views_(views) {}

  // Groups without a deepest-level companion wait until they can join a batch
  // that already holds one, so no batch is made of them alone while avoidable.
  void add(AnchorGroup group, bool has_fine_positive) {
    const bool fits = current_.size() + group_size(group) <= capacity_;
    if (!has_fine_positive && (!current_has_fine_ || !fits)) {
      deferred_.push_back(std::move(group));
      return;
    }
    if (!fits) flush();
    append(std::move(group));
    current_has_fine_ = current_has_fine_ || has_fine_positive;
    while (!deferred_.empty() && current_.size() + group_size(deferred_.front()) <= capacity_) {
      append(std::move(deferred_.front()));
      deferred_.pop_front();
    }
  }

  void add_plain(std::size_t index) {
    if (current_.size() + 1 > capacity_) flush();
    current_.push_back(index);
  }

  void flush() {
    // A batch must give the loss at least two rows.
    if (!current_.empty() && current_.size() * views_ >= 2) {
      plan_.batches.push_back(std::move(current_));
      plan_.groups.push_back(std::move(current_groups_));
    }
    current_.clear();
    current_groups_.clear();
    current_has_fine_ = false;
  }

  // Leftover groups go into any planned batch with room. A group too large for
  // every gap is split into single-sample groups before opening a new batch.
  void finish() {
    flush();
    while (!deferred_.empty()) {
      AnchorGroup group = std::move(deferred_.front());
      deferred_.pop_front();
      if (place_in_gap(group)) continue;
      if (!group.companions.empty()) {
        for (const auto& c : group.companions) deferred_.push_front(AnchorGroup{c.index, {}});
        group.companions.clear();
        deferred_.push_front(std::move(group));
        continue;
      }
      if (current_.size() + 1 > capacity_) flush();
      append(std::move(group));
    }
    flush();
  }

 private:
  static std::size_t group_size(const AnchorGroup& g) { return 1 + g.companions.size(); }

  bool place_in_gap(AnchorGroup& group) {
    for (std::size_t b = 0; b < plan_.batches.size(); ++b) {
      if (plan_.batches[b].size() + group_size(group) > capacity_) continue;
      plan_.batches[b].push_back(group.anchor);
      for (const auto& c : group.companions) plan_.batches[b].push_back(c.index);
      plan_.groups[b].push_back(std::move(group));
      return true;
    }
    return false;
  }

  void append(AnchorGroup group) {
    current_.push_back(group.anchor);
    for (const auto& c : group.companions) current_.push_back(c.index);
    current_groups_.push_back(std::move(group));
  }

  EpochPlan& plan_;
  std::size_t capacity_;
  std::size_t views_;
  std::vector<std::size_t> current_;
  std::vector<AnchorGroup> current_groups_;
  bool current_has_fine_ = false;
  std::deque<AnchorGroup> deferred_;
};

}  // namespace

EpochPlan plan_epoch(std::span<const LabelPath> labels, const HierarchyTree& tree, const SamplerConfig& cfg) {
  if (labels.empty()) fail(ErrorKind::kEmptyInput, "dataset has no samples");
  const std::size_t levels = common_level_count(labels);
  if (levels != tree.level_count()) fail(ErrorKind::kStructural, "tree and labels disagree on level count");
  cfg.validate(levels);

  const std::size_t n = labels.size();
  Rng rng(cfg.seed, "sampler");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  rng.shuffle(std::span<std::size_t>(order));

  EpochPlan plan;
  plan.views_per_sample = cfg.views_per_sample;
  BatchBuilder builder(plan, cfg.samples_per_batch(), cfg.views_per_sample);

  if (cfg.strategy == SamplerStrategy::kRandom) {
    for (std::size_t idx : order) builder.add_plain(idx);
    builder.flush();
    for (auto& g : plan.groups) g.clear();
    return plan;
  }

  std::unordered_map<std::uint64_t, std::size_t> index_of;
  for (std::size_t i = 0; i < n; ++i) index_of.emplace(labels[i].sample_id, i);
  // node_at[i * levels + l]: tree node of sample i at level l
  std::vector<int> node_at(n * levels);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t l = 0; l < levels; ++l) {
      const int node = tree.node_for(labels[i].labels, static_cast<int>(l));
      if (node < 0) fail(ErrorKind::kStructural, "label path missing from tree");
      node_at[i * levels + l] = node;
    }

  std::vector<bool> used(n, false);
  // Unused samples left under each finest-level node.
  std::vector<std::size_t> unused_in_leaf(tree.nodes().size(), 0);
  for (std::size_t i = 0; i < n; ++i) ++unused_in_leaf[node_at[i * levels + levels - 1]];
  auto take = [&](std::size_t idx) {
    used[idx] = true;
    --unused_in_leaf[node_at[idx * levels + levels - 1]];
  };

  std::vector<std::size_t> candidates;
  std::vector<std::size_t> lonely;
  // Unused sample sharing the anchor's node at `level` but not below it.
  // Above the finest level, samples that are the last unused one in their
  // leaf are preferred: they could never get a finest companion themselves.
  auto draw = [&](std::size_t anchor, std::size_t level, bool exact) -> std::ptrdiff_t {
    candidates.clear();
    lonely.clear();
    const auto& members = tree.node(node_at[anchor * levels + level]).samples;
    for (std::uint64_t sid : members) {
      const std::size_t idx = index_of.at(sid);
      if (used[idx] || idx == anchor) continue;
      if (exact && level + 1 < levels && node_at[idx * levels + level + 1] == node_at[anchor * levels + level + 1])
        continue;
      candidates.push_back(idx);
      if (unused_in_leaf[node_at[idx * levels + levels - 1]] == 1) lonely.push_back(idx);
    }
    const auto& pool = level + 1 < levels && !lonely.empty() ? lonely : candidates;
    if (pool.empty()) return -1;
    return static_cast<std::ptrdiff_t>(pool[rng.below(pool.size())]);
  };

  for (std::size_t anchor : order) {
    if (used[anchor]) continue;
    take(anchor);
    AnchorGroup group;
    group.anchor = anchor;
    if (cfg.strategy == SamplerStrategy::kHierarchical) {
      for (std::size_t step = 0; step < levels; ++step) {
        const std::size_t level = levels - 1 - step;
        const auto pick = draw(anchor, level, true);
        if (pick < 0) continue;
        take(static_cast<std::size_t>(pick));
        group.companions.push_back({static_cast<std::size_t>(pick), static_cast<int>(level)});
      }
    } else {
      const auto pick = draw(anchor, 0, false);
      if (pick >= 0) {
        take(static_cast<std::size_t>(pick));
        const auto p = static_cast<std::size_t>(pick);
        group.companions.push_back({p, lca_level(labels[anchor], labels[p])});
      }
    }
    bool fine = !group.companions.empty();
    if (cfg.strategy == SamplerStrategy::kHierarchical)
      fine = fine && group.companions.front().level == static_cast<int>(levels) - 1;
    builder.add(std::move(group), fine);
  }
  builder.finish();
  return plan;
}

}  // namespace hicle
