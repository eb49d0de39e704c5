#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "hicle/hierarchy.hpp"
#include "hicle/matrix.hpp"
#include "hicle/rng.hpp"

namespace hicle {

// Hierarchical Gaussian mixture: level-0 means at scale level_scales[0], each
// child mean offset from its parent at its own level's scale, observations
// around the finest mean with noise_scale.
struct SyntheticSpec {
  std::vector<std::size_t> counts{4, 3, 4};  // children per node, level by level
  std::size_t samples_per_instance = 20;
  std::size_t input_dim = 32;
  std::vector<double> level_scales{1.0, 0.6, 0.35};
  double noise_scale = 0.15;
  // > 1 gives categories a geometric profile of level-1 child counts (or of
  // samples per leaf for one-level trees) with this largest:smallest ratio.
  double skew_ratio = 1.0;
  std::uint64_t seed = 0;

  void validate() const;
};

enum class Split : std::uint8_t { kTrain, kVal, kTest };
enum class Side : std::uint8_t { kSeen, kUnseen };

std::string_view split_name(Split s);
std::string_view side_name(Side s);

struct Dataset {
  Matrix features;
  std::vector<LabelPath> paths;
  std::vector<Split> split;
  std::vector<Side> side;
  std::size_t level_count = 0;

  std::size_t size() const noexcept { return paths.size(); }
  void validate() const;
  // Rows whose tags match; nullopt matches anything.
  std::vector<std::size_t> select(std::optional<Side> side_filter, std::optional<Split> split_filter) const;
  Dataset subset(std::span<const std::size_t> rows) const;
};

Dataset generate_synthetic(const SyntheticSpec& spec);

// Adds N(0, sigma^2) noise to every coordinate; sigma == 0 returns the input.
std::vector<double> augment(std::span<const double> row, double sigma, Rng& rng);

// Tags whole categories as unseen, then splits each side into
// train/val/test by sample, stratified by finest label.
struct SplitFractions {
  double val = 0.2;
  double test = 0.2;
};
Dataset split_seen_unseen(Dataset dataset, double unseen_category_fraction, std::uint64_t seed,
                          SplitFractions fractions = {});

// "HCB1" container: magic, u32 LE rows, u32 LE cols, rows*cols f32 LE.
void write_hcb(const std::filesystem::path& path, const Matrix& m);
Matrix read_hcb(const std::filesystem::path& path, std::optional<std::size_t> expected_cols = std::nullopt);
std::string encode_hcb(const Matrix& m);
Matrix decode_hcb(std::string_view bytes, std::optional<std::size_t> expected_cols = std::nullopt);

// Directory layout: features.hcb, labels.csv, split.json.
void write_dataset(const std::filesystem::path& dir, const Dataset& ds);
Dataset read_dataset(const std::filesystem::path& dir);

inline constexpr const char* kFeaturesFile = "features.hcb";
inline constexpr const char* kLabelsFile = "labels.csv";
inline constexpr const char* kSplitFile = "split.json";

}  // namespace hicle
