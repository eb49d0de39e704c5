#include "hicle/data.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <map>
#include <set>

#include "json.hpp"

#include "hicle/error.hpp"
#include "hicle/io.hpp"

namespace hicle {

void SyntheticSpec::validate() const {
  if (counts.empty()) fail(ErrorKind::kConfiguration, "counts must name at least one level");
  for (auto c : counts)
    if (c < 1) fail(ErrorKind::kConfiguration, "every level count must be >= 1");
  if (samples_per_instance < 1) fail(ErrorKind::kConfiguration, "samples_per_instance must be >= 1");
  if (input_dim < 1) fail(ErrorKind::kConfiguration, "input_dim must be >= 1");
  if (level_scales.size() != counts.size())
    fail(ErrorKind::kConfiguration, "level_scales needs one entry per level");
  for (std::size_t l = 0; l < level_scales.size(); ++l) {
    if (!(level_scales[l] > 0.0)) fail(ErrorKind::kConfiguration, "level scales must be positive");
    if (l > 0 && !(level_scales[l] < level_scales[l - 1]))
      fail(ErrorKind::kConfiguration, "level scales must strictly decrease with depth");
  }
  if (!(noise_scale > 0.0)) fail(ErrorKind::kConfiguration, "noise_scale must be positive");
  if (!(skew_ratio >= 1.0)) fail(ErrorKind::kConfiguration, "skew_ratio must be >= 1");
}

std::string_view split_name(Split s) {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kVal: return "val";
    case Split::kTest: return "test";
  }
  return "?";
}

std::string_view side_name(Side s) { return s == Side::kSeen ? "seen" : "unseen"; }

void Dataset::validate() const {
  const std::size_t n = paths.size();
  if (features.rows() != n || split.size() != n || side.size() != n)
    fail(ErrorKind::kStructural, "dataset columns disagree on row count");
  for (const auto& p : paths)
    if (p.labels.size() != level_count) fail(ErrorKind::kStructural, "path length differs from level count");
}

std::vector<std::size_t> Dataset::select(std::optional<Side> side_filter, std::optional<Split> split_filter) const {
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < size(); ++i) {
    if (side_filter && side[i] != *side_filter) continue;
    if (split_filter && split[i] != *split_filter) continue;
    rows.push_back(i);
  }
  return rows;
}

Dataset Dataset::subset(std::span<const std::size_t> rows) const {
  Dataset out;
  out.level_count = level_count;
  out.features = gather_rows(features, rows);
  for (auto r : rows) {
    out.paths.push_back(paths.at(r));
    out.split.push_back(split.at(r));
    out.side.push_back(side.at(r));
  }
  return out;
}

namespace {

std::size_t skewed_count(std::size_t base, double ratio, std::size_t position, std::size_t total) {
  if (ratio <= 1.0 || total < 2) return base;
  const double t = static_cast<double>(position) / static_cast<double>(total - 1);
  const double scaled = static_cast<double>(base) * std::pow(ratio, -t);
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(scaled)));
}

struct Generator {
  const SyntheticSpec& spec;
  Rng rng;
  std::vector<std::uint32_t> next_label;
  std::vector<std::vector<double>> rows;
  std::vector<LabelPath> paths;

  std::vector<double> offset(const std::vector<double>& base, double scale) {
    std::vector<double> out(base);
    for (double& v : out) v += scale * rng.normal();
    return out;
  }

  void expand(const std::vector<double>& mean, std::vector<std::uint32_t>& prefix, std::size_t category) {
    const std::size_t level = prefix.size();
    const std::size_t levels = spec.counts.size();
    if (level == levels) {
      std::size_t samples = spec.samples_per_instance;
      if (levels == 1) samples = skewed_count(samples, spec.skew_ratio, category, spec.counts[0]);
      for (std::size_t s = 0; s < samples; ++s) {
        std::vector<double> row = offset(mean, spec.noise_scale);
        // Stored values are exactly representable in the f32 file format.
        for (double& v : row) v = static_cast<double>(static_cast<float>(v));
        rows.push_back(std::move(row));
        paths.push_back({prefix, static_cast<std::uint64_t>(paths.size())});
      }
      return;
    }
    std::size_t children = spec.counts[level];
    if (level == 1) children = skewed_count(children, spec.skew_ratio, category, spec.counts[0]);
    for (std::size_t c = 0; c < children; ++c) {
      const std::vector<double> child = offset(mean, spec.level_scales[level]);
      prefix.push_back(next_label[level]++);
      expand(child, prefix, level == 0 ? c : category);
      prefix.pop_back();
    }
  }
};

}  // namespace

Dataset generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  Generator gen{spec, Rng(spec.seed, "synthetic"), std::vector<std::uint32_t>(spec.counts.size(), 0), {}, {}};
  std::vector<std::uint32_t> prefix;
  gen.expand(std::vector<double>(spec.input_dim, 0.0), prefix, 0);

  Dataset ds;
  ds.level_count = spec.counts.size();
  ds.features = Matrix(gen.rows.size(), spec.input_dim);
  for (std::size_t i = 0; i < gen.rows.size(); ++i) std::copy(gen.rows[i].begin(), gen.rows[i].end(), ds.features.row(i).begin());
  ds.paths = std::move(gen.paths);
  ds.split.assign(ds.paths.size(), Split::kTrain);
  ds.side.assign(ds.paths.size(), Side::kSeen);
  return ds;
}

std::vector<double> augment(std::span<const double> row, double sigma, Rng& rng) {
  std::vector<double> out(row.begin(), row.end());
  if (sigma == 0.0) return out;
  for (double& v : out) v += sigma * rng.normal();
  return out;
}

Dataset split_seen_unseen(Dataset dataset, double unseen_category_fraction, std::uint64_t seed,
                          SplitFractions fractions) {
  dataset.validate();
  std::set<std::uint32_t> category_set;
  for (const auto& p : dataset.paths) category_set.insert(p.labels.at(0));
  std::vector<std::uint32_t> categories(category_set.begin(), category_set.end());
  if (categories.size() < 2) fail(ErrorKind::kConfiguration, "seen/unseen split needs at least two categories");
  const auto unseen_count =
      static_cast<std::size_t>(std::llround(unseen_category_fraction * static_cast<double>(categories.size())));
  if (unseen_count == 0 || unseen_count >= categories.size())
    fail(ErrorKind::kConfiguration, "unseen fraction leaves one side without categories");

  Rng rng(seed, "split");
  rng.shuffle(std::span<std::uint32_t>(categories));
  std::set<std::uint32_t> unseen(categories.begin(), categories.begin() + static_cast<std::ptrdiff_t>(unseen_count));

  std::map<std::vector<std::uint32_t>, std::vector<std::size_t>> by_leaf;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    dataset.side[i] = unseen.count(dataset.paths[i].labels[0]) ? Side::kUnseen : Side::kSeen;
    by_leaf[dataset.paths[i].labels].push_back(i);
  }
  for (auto& [leaf, rows] : by_leaf) {
    rng.shuffle(std::span<std::size_t>(rows));
    const double n = static_cast<double>(rows.size());
    auto n_test = static_cast<std::size_t>(std::llround(fractions.test * n));
    auto n_val = static_cast<std::size_t>(std::llround(fractions.val * n));
    while (n_test + n_val >= rows.size() && n_test + n_val > 0) {
      if (n_val >= n_test && n_val > 0) --n_val; else --n_test;
    }
    for (std::size_t k = 0; k < rows.size(); ++k) {
      Split s = Split::kTrain;
      if (k < n_test) s = Split::kTest;
      else if (k < n_test + n_val) s = Split::kVal;
      dataset.split[rows[k]] = s;
    }
  }
  return dataset;
}

namespace {

void put_u32(std::string& out, std::uint32_t v) {
  for (int b = 0; b < 4; ++b) out.push_back(static_cast<char>((v >> (8 * b)) & 0xffu));
}

std::uint32_t get_u32(std::string_view bytes, std::size_t offset) {
  std::uint32_t v = 0;
  for (int b = 0; b < 4; ++b)
    v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[offset + static_cast<std::size_t>(b)])) << (8 * b);
  return v;
}

}  // namespace

std::string encode_hcb(const Matrix& m) {
  if (m.rows() > 0xffffffffULL || m.cols() > 0xffffffffULL) fail(ErrorKind::kFormat, "matrix too large for HCB1");
  std::string out = "HCB1";
  put_u32(out, static_cast<std::uint32_t>(m.rows()));
  put_u32(out, static_cast<std::uint32_t>(m.cols()));
  out.reserve(out.size() + m.size() * 4);
  for (double v : m.data()) put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  return out;
}

Matrix decode_hcb(std::string_view bytes, std::optional<std::size_t> expected_cols) {
  if (bytes.size() < 4 || bytes.substr(0, 4) != "HCB1") fail(ErrorKind::kFormat, "bad magic at offset 0");
  if (bytes.size() < 12)
    fail(ErrorKind::kFormat, "truncated header at offset " + std::to_string(bytes.size()) + " (need 12 bytes)");
  const std::size_t rows = get_u32(bytes, 4);
  const std::size_t cols = get_u32(bytes, 8);
  if (expected_cols && cols != *expected_cols)
    fail(ErrorKind::kFormat, "dimension mismatch at offset 8: file has " + std::to_string(cols) + ", expected " +
                                 std::to_string(*expected_cols));
  const std::size_t expected = 12 + rows * cols * 4;
  if (bytes.size() < expected)
    fail(ErrorKind::kFormat, "truncated payload at offset " + std::to_string(bytes.size()) + " (expected " +
                                 std::to_string(expected) + " bytes)");
  if (bytes.size() > expected)
    fail(ErrorKind::kFormat, "trailing bytes at offset " + std::to_string(expected));
  Matrix m(rows, cols);
  for (std::size_t k = 0; k < rows * cols; ++k)
    m.data()[k] = static_cast<double>(std::bit_cast<float>(get_u32(bytes, 12 + 4 * k)));
  return m;
}

void write_hcb(const std::filesystem::path& path, const Matrix& m) { io::write_file_atomic(path, encode_hcb(m)); }

Matrix read_hcb(const std::filesystem::path& path, std::optional<std::size_t> expected_cols) {
  try {
    return decode_hcb(io::read_file(path), expected_cols);
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::kFormat) fail(ErrorKind::kFormat, path.string() + ": " + e.what());
    throw;
  }
}

void write_dataset(const std::filesystem::path& dir, const Dataset& ds) {
  ds.validate();
  std::filesystem::create_directories(dir);
  nlohmann::json manifest;
  manifest["level_count"] = ds.level_count;
  manifest["rows"] = ds.size();
  auto& ids = manifest["id"] = nlohmann::json::array();
  auto& splits = manifest["split"] = nlohmann::json::array();
  auto& sides = manifest["side"] = nlohmann::json::array();
  for (std::size_t i = 0; i < ds.size(); ++i) {
    ids.push_back(ds.paths[i].sample_id);
    splits.push_back(split_name(ds.split[i]));
    sides.push_back(side_name(ds.side[i]));
  }
  write_hcb(dir / kFeaturesFile, ds.features);
  write_labels_csv(dir / kLabelsFile, ds.paths, ds.level_count);
  io::write_file_atomic(dir / kSplitFile, manifest.dump(1) + "\n");
}

Dataset read_dataset(const std::filesystem::path& dir) {
  Dataset ds;
  ds.features = read_hcb(dir / kFeaturesFile);
  ds.paths = read_labels_csv(dir / kLabelsFile);
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(io::read_file(dir / kSplitFile));
    ds.level_count = manifest.at("level_count").get<std::size_t>();
    const auto& ids = manifest.at("id");
    const auto& splits = manifest.at("split");
    const auto& sides = manifest.at("side");
    if (ids.size() != ds.paths.size() || splits.size() != ids.size() || sides.size() != ids.size())
      fail(ErrorKind::kFormat, "split manifest row count differs from labels");
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (ids[i].get<std::uint64_t>() != ds.paths[i].sample_id)
        fail(ErrorKind::kFormat, "split manifest id order differs from labels at row " + std::to_string(i));
      const auto s = splits[i].get<std::string>();
      if (s == "train") ds.split.push_back(Split::kTrain);
      else if (s == "val") ds.split.push_back(Split::kVal);
      else if (s == "test") ds.split.push_back(Split::kTest);
      else fail(ErrorKind::kFormat, "unknown split tag '" + s + "'");
      const auto side = sides[i].get<std::string>();
      if (side == "seen") ds.side.push_back(Side::kSeen);
      else if (side == "unseen") ds.side.push_back(Side::kUnseen);
      else fail(ErrorKind::kFormat, "unknown side tag '" + side + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kFormat, (dir / kSplitFile).string() + ": " + e.what());
  }
  if (ds.features.rows() != ds.paths.size())
    fail(ErrorKind::kFormat, "features have " + std::to_string(ds.features.rows()) + " rows, labels have " +
                                 std::to_string(ds.paths.size()));
  if (!ds.paths.empty() && ds.paths.front().labels.size() != ds.level_count)
    fail(ErrorKind::kFormat, "labels level count differs from manifest");
  ds.validate();
  return ds;
}

}  // namespace hicle
