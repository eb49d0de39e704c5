#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include "hicle/error.hpp"
#include "hicle/hierarchy.hpp"
#include "hicle/rng.hpp"
#include "oracle.hpp"

using namespace hicle;

namespace {

std::vector<LabelPath> make_paths(const std::vector<std::vector<std::uint32_t>>& labels) {
  std::vector<LabelPath> out;
  for (std::size_t i = 0; i < labels.size(); ++i) out.push_back({labels[i], i});
  return out;
}

ErrorKind kind_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorKind::kStructural;
}

std::filesystem::path temp_file(const std::string& name, const std::string& content) {
  const auto dir = std::filesystem::temp_directory_path() / "hicle_hierarchy_test";
  std::filesystem::create_directories(dir);
  const auto p = dir / name;
  std::ofstream(p, std::ios::binary) << content;
  return p;
}

}  // namespace

TEST(BuildTree, OneLevelTaxonomy) {
  const auto tree = build_tree(make_paths({{0}, {1}}));
  EXPECT_EQ(tree.level_count(), 1u);
  EXPECT_EQ(tree.nodes().size(), 3u);
  EXPECT_EQ(tree.node(0).level, -1);
  EXPECT_EQ(tree.nodes_at_level(0), 2u);
}

TEST(BuildTree, CountsDistinctPrefixes) {
  const auto tree = build_tree(make_paths({{0, 0}, {0, 1}, {1, 0}}));
  EXPECT_EQ(tree.nodes_at_level(0), 2u);
  EXPECT_EQ(tree.nodes_at_level(1), 3u);
}

TEST(BuildTree, NodeCountsMatchPrefixSetOracle) {
  Rng rng(5);
  std::vector<LabelPath> paths;
  for (std::size_t i = 0; i < 300; ++i)
    paths.push_back({{static_cast<std::uint32_t>(rng.below(5)), static_cast<std::uint32_t>(rng.below(8)),
                      static_cast<std::uint32_t>(rng.below(3))},
                     i});
  std::vector<std::set<std::vector<std::uint32_t>>> prefixes(3);
  for (const auto& p : paths)
    for (std::size_t l = 0; l < 3; ++l) prefixes[l].insert({p.labels.begin(), p.labels.begin() + l + 1});
  const auto tree = build_tree(paths);
  for (int l = 0; l < 3; ++l) EXPECT_EQ(tree.nodes_at_level(l), prefixes[l].size());
}

TEST(BuildTree, StructureInvariants) {
  Rng rng(6);
  std::vector<LabelPath> paths;
  for (std::size_t i = 0; i < 100; ++i)
    paths.push_back({{static_cast<std::uint32_t>(rng.below(3)), static_cast<std::uint32_t>(rng.below(3))}, i});
  const auto tree = build_tree(paths);
  for (std::size_t id = 1; id < tree.nodes().size(); ++id) {
    const auto& n = tree.node(static_cast<int>(id));
    ASSERT_GE(n.parent, 0);
    EXPECT_EQ(n.level, tree.node(n.parent).level + 1);
    const auto& siblings = tree.node(n.parent).children;
    EXPECT_EQ(std::count(siblings.begin(), siblings.end(), static_cast<int>(id)), 1);
  }
  for (const auto& p : paths) {
    const int leaf = tree.leaf_of(p.sample_id);
    EXPECT_EQ(tree.node(leaf).level, 1);
    EXPECT_EQ(leaf, tree.node_for(p.labels, 1));
  }
  EXPECT_EQ(tree.node(0).samples.size(), paths.size());
}

TEST(BuildTree, OrderIndependent) {
  Rng rng(7);
  auto paths = make_paths({{0, 1}, {2, 0}, {0, 0}, {1, 1}, {2, 2}, {0, 1}});
  const auto a = build_tree(paths);
  rng.shuffle(std::span<LabelPath>(paths));
  const auto b = build_tree(paths);
  ASSERT_EQ(a.nodes().size(), b.nodes().size());
  for (std::size_t i = 0; i < a.nodes().size(); ++i) {
    EXPECT_EQ(a.nodes()[i].label, b.nodes()[i].label);
    EXPECT_EQ(a.nodes()[i].parent, b.nodes()[i].parent);
    EXPECT_EQ(a.nodes()[i].samples, b.nodes()[i].samples);
  }
}

TEST(BuildTree, Errors) {
  EXPECT_EQ(kind_of([] { build_tree({}); }), ErrorKind::kEmptyInput);
  EXPECT_EQ(kind_of([] { build_tree(make_paths({{0, 1}, {0}})); }), ErrorKind::kStructural);
  EXPECT_EQ(kind_of([] {
              std::vector<LabelPath> p{{{0}, 3}, {{1}, 3}};
              build_tree(p);
            }),
            ErrorKind::kStructural);
}

TEST(Lca, Examples) {
  EXPECT_EQ(lca_level({{2, 5, 7}, 0}, {{2, 5, 9}, 1}), 1);
  EXPECT_EQ(lca_level({{2, 5, 7}, 0}, {{2, 5, 7}, 1}), 2);
  EXPECT_EQ(lca_level({{3, 5, 7}, 0}, {{4, 5, 7}, 1}), -1);
  // Equal later labels under different parents are different nodes.
  EXPECT_EQ(lca_level({{1, 5}, 0}, {{2, 5}, 1}), -1);
}

TEST(Lca, LengthMismatch) {
  EXPECT_EQ(kind_of([] { lca_level({{1, 2}, 0}, {{1}, 1}); }), ErrorKind::kStructural);
}

TEST(Pairing, CumulativeExample) {
  const auto t = pairing_tensor(make_paths({{0, 0}, {0, 1}, {1, 0}}), PositivesMode::kCumulative, false);
  ASSERT_EQ(t.levels(), 2u);
  EXPECT_EQ(t.count_positive_pairs(0), 2u);  // (0,1) and (1,0)
  EXPECT_TRUE(t.positive(0, 0, 1));
  EXPECT_FALSE(t.positive(0, 0, 2));
  EXPECT_EQ(t.count_positive_pairs(1), 0u);
}

TEST(Pairing, IdenticalPathsPositiveAtEveryLevel) {
  const auto t = pairing_tensor(make_paths({{0, 0}, {0, 0}}), PositivesMode::kCumulative, false);
  EXPECT_TRUE(t.positive(0, 0, 1));
  EXPECT_TRUE(t.positive(1, 0, 1));
}

TEST(Pairing, InstanceLevel) {
  std::vector<LabelPath> batch{{{0, 1}, 7}, {{0, 1}, 7}, {{0, 1}, 8}};
  const auto t = pairing_tensor(batch, PositivesMode::kCumulative, true);
  ASSERT_EQ(t.levels(), 3u);
  EXPECT_EQ(t.lca(0, 1), 2);
  EXPECT_EQ(t.lca(0, 2), 1);
  EXPECT_TRUE(t.positive(2, 0, 1));
  EXPECT_FALSE(t.positive(2, 0, 2));
  EXPECT_EQ(t.lca(1, 1), 2);
}

TEST(Pairing, MatchesBruteForceAndInvariants) {
  Rng rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    const auto batch = oracle::random_paths(rng, 4, 3);
    for (bool instance : {false, true}) {
      const auto cum = pairing_tensor(batch, PositivesMode::kCumulative, instance);
      const auto exact = pairing_tensor(batch, PositivesMode::kExactLca, instance);
      const std::size_t n = batch.size();
      for (std::size_t l = 0; l < cum.levels(); ++l)
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < n; ++j) {
            const int lca = oracle::lca(batch[i], batch[j], instance);
            if (i != j) {
              EXPECT_EQ(cum.lca(i, j), lca);
              EXPECT_EQ(cum.lca(i, j), cum.lca(j, i));
            }
            const bool want_cum = i != j && lca >= static_cast<int>(l);
            const bool want_exact = i != j && lca == static_cast<int>(l);
            EXPECT_EQ(cum.positive(l, i, j), want_cum);
            EXPECT_EQ(exact.positive(l, i, j), want_exact);
            if (l + 1 < cum.levels() && cum.positive(l + 1, i, j)) EXPECT_TRUE(cum.positive(l, i, j));
          }
      // exact levels partition the cumulative level-0 set
      std::size_t exact_total = 0;
      for (std::size_t l = 0; l < exact.levels(); ++l) exact_total += exact.count_positive_pairs(l);
      EXPECT_EQ(exact_total, cum.count_positive_pairs(0));
      for (std::size_t i = 0; i < n; ++i) EXPECT_EQ(cum.lca(i, i), static_cast<int>(cum.levels()) - 1);
    }
  }
}

TEST(Pairing, InvariantUnderRelabeling) {
  Rng rng(9);
  auto batch = oracle::random_paths(rng, 4, 2, 3);
  auto relabeled = batch;
  for (auto& p : relabeled) {
    p.labels[0] = 10 + 2 * p.labels[0];
    p.labels[1] = 100 - p.labels[1];
  }
  const auto a = pairing_tensor(batch, PositivesMode::kCumulative);
  const auto b = pairing_tensor(relabeled, PositivesMode::kCumulative);
  for (std::size_t l = 0; l < a.levels(); ++l)
    for (std::size_t i = 0; i < batch.size(); ++i) EXPECT_EQ(a.positives_of(l, i), b.positives_of(l, i));
}

TEST(Pairing, TooSmall) {
  EXPECT_EQ(kind_of([] { pairing_tensor(make_paths({{0}}), PositivesMode::kCumulative); }),
            ErrorKind::kBatchTooSmall);
}

TEST(LabelsCsv, RoundTrip) {
  const auto paths = make_paths({{0, 3}, {1, 4}, {1, 5}});
  const auto file = temp_file("rt.csv", "");
  write_labels_csv(file, paths);
  EXPECT_EQ(read_labels_csv(file), paths);
}

TEST(LabelsCsv, EmptySetKeepsHeader) {
  const auto file = temp_file("empty.csv", "");
  write_labels_csv(file, {}, 2);
  EXPECT_TRUE(read_labels_csv(file).empty());
}

TEST(LabelsCsv, MalformedInputsNameTheLine) {
  auto expect_format = [](const std::string& name, const std::string& content, const std::string& needle) {
    try {
      read_labels_csv(temp_file(name, content));
      ADD_FAILURE() << name;
    } catch (const Error& e) {
      EXPECT_EQ(e.kind(), ErrorKind::kFormat);
      EXPECT_NE(std::string(e.what()).find(needle), std::string::npos) << e.what();
    }
  };
  expect_format("hdr.csv", "name,level_0\n0,1\n", "line 1");
  expect_format("fields.csv", "id,level_0,level_1\n0,1,2\n1,2\n", "line 3");
  expect_format("value.csv", "id,level_0\n0,x\n", "line 2");
  expect_format("crlf.csv", "id,level_0\r\n0,1\r\n", "line 1");
}

TEST(CommonLevelCount, Checks) {
  EXPECT_EQ(common_level_count(make_paths({{0, 1}, {1, 2}})), 2u);
  EXPECT_THROW(common_level_count(make_paths({{0, 1}, {1}})), Error);
}
