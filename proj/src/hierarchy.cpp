#include "hicle/hierarchy.hpp"

#include <algorithm>
#include <charconv>
#include <map>
#include <set>
#include <sstream>

#include "hicle/error.hpp"
#include "hicle/io.hpp"

namespace hicle {

std::size_t common_level_count(std::span<const LabelPath> paths) {
  if (paths.empty()) fail(ErrorKind::kEmptyInput, "no label paths");
  const std::size_t levels = paths.front().labels.size();
  if (levels == 0) fail(ErrorKind::kStructural, "label paths must have at least one level");
  for (std::size_t i = 1; i < paths.size(); ++i) {
    if (paths[i].labels.size() != levels)
      fail(ErrorKind::kStructural, "path " + std::to_string(i) + " has " +
                                       std::to_string(paths[i].labels.size()) +
                                       " levels, expected " + std::to_string(levels));
  }
  return levels;
}

HierarchyTree build_tree(std::span<const LabelPath> paths) {
  const std::size_t levels = common_level_count(paths);

  // Every distinct prefix becomes a node; ordered map gives stable ids.
  std::map<std::vector<std::uint32_t>, std::vector<std::uint64_t>> prefixes;
  std::set<std::uint64_t> seen_ids;
  for (const auto& p : paths) {
    if (!seen_ids.insert(p.sample_id).second)
      fail(ErrorKind::kStructural, "duplicate sample id " + std::to_string(p.sample_id));
    for (std::size_t len = 1; len <= levels; ++len) {
      std::vector<std::uint32_t> key(p.labels.begin(), p.labels.begin() + static_cast<std::ptrdiff_t>(len));
      prefixes[std::move(key)].push_back(p.sample_id);
    }
  }

  HierarchyTree tree;
  tree.level_count_ = levels;
  TreeNode root;
  root.samples.assign(seen_ids.begin(), seen_ids.end());
  tree.nodes_.push_back(std::move(root));

  std::map<std::vector<std::uint32_t>, int> ids;
  for (auto& [prefix, samples] : prefixes) {
    TreeNode node;
    node.level = static_cast<int>(prefix.size()) - 1;
    node.label = prefix.back();
    if (prefix.size() == 1) {
      node.parent = 0;
    } else {
      std::vector<std::uint32_t> parent_key(prefix.begin(), prefix.end() - 1);
      node.parent = ids.at(parent_key);
    }
    std::sort(samples.begin(), samples.end());
    node.samples = samples;
    const int id = static_cast<int>(tree.nodes_.size());
    tree.nodes_[static_cast<std::size_t>(node.parent)].children.push_back(id);
    if (prefix.size() == levels) {
      for (auto s : node.samples) tree.leaf_index_[s] = id;
    }
    ids.emplace(prefix, id);
    tree.nodes_.push_back(std::move(node));
  }
  return tree;
}

std::size_t HierarchyTree::nodes_at_level(int level) const {
  return static_cast<std::size_t>(std::count_if(
      nodes_.begin(), nodes_.end(), [level](const TreeNode& n) { return n.level == level; }));
}

int HierarchyTree::leaf_of(std::uint64_t sample_id) const {
  auto it = leaf_index_.find(sample_id);
  if (it == leaf_index_.end()) fail(ErrorKind::kRange, "unknown sample id " + std::to_string(sample_id));
  return it->second;
}

int HierarchyTree::node_for(std::span<const std::uint32_t> labels, int level) const {
  if (level < 0) return 0;
  if (static_cast<std::size_t>(level) >= labels.size()) fail(ErrorKind::kRange, "level beyond path");
  int current = 0;
  for (int l = 0; l <= level; ++l) {
    int next = -1;
    for (int child : nodes_[static_cast<std::size_t>(current)].children) {
      if (nodes_[static_cast<std::size_t>(child)].label == labels[static_cast<std::size_t>(l)]) {
        next = child;
        break;
      }
    }
    if (next < 0) return -1;
    current = next;
  }
  return current;
}

int lca_level(const LabelPath& a, const LabelPath& b) {
  if (a.labels.size() != b.labels.size()) fail(ErrorKind::kStructural, "lca of paths with different lengths");
  int level = -1;
  for (std::size_t l = 0; l < a.labels.size(); ++l) {
    if (a.labels[l] != b.labels[l]) break;
    level = static_cast<int>(l);
  }
  return level;
}

PairingTensor::PairingTensor(std::size_t n, std::size_t levels, PositivesMode mode)
    : n_(n), levels_(levels), mode_(mode), lca_(n * n, -1), positive_(levels, std::vector<std::uint8_t>(n * n, 0)) {}

std::vector<std::size_t> PairingTensor::positives_of(std::size_t level, std::size_t i) const {
  std::vector<std::size_t> out;
  const auto& mask = positive_[level];
  for (std::size_t j = 0; j < n_; ++j)
    if (mask[i * n_ + j] != 0) out.push_back(j);
  return out;
}

std::size_t PairingTensor::count_positive_pairs(std::size_t level) const {
  return static_cast<std::size_t>(std::count(positive_[level].begin(), positive_[level].end(), std::uint8_t{1}));
}

PairingTensor pairing_tensor(std::span<const LabelPath> batch, PositivesMode mode, bool instance_level) {
  if (batch.size() < 2) fail(ErrorKind::kBatchTooSmall, "batch needs at least two rows");
  const std::size_t levels = common_level_count(batch);
  const std::size_t total_levels = instance_level ? levels + 1 : levels;
  const std::size_t n = batch.size();

  PairingTensor t(n, total_levels, mode);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i; j < n; ++j) {
      int lca = lca_level(batch[i], batch[j]);
      if (instance_level && batch[i].sample_id == batch[j].sample_id && lca == static_cast<int>(levels) - 1)
        lca = static_cast<int>(levels);
      if (i == j) lca = static_cast<int>(total_levels) - 1;
      t.lca_[i * n + j] = lca;
      t.lca_[j * n + i] = lca;
      if (i == j) continue;
      for (std::size_t l = 0; l < total_levels; ++l) {
        const int li = static_cast<int>(l);
        const bool pos = mode == PositivesMode::kCumulative ? lca >= li : lca == li;
        if (pos) {
          t.positive_[l][i * n + j] = 1;
          t.positive_[l][j * n + i] = 1;
        }
      }
    }
  }
  return t;
}

namespace {

std::uint64_t parse_uint(std::string_view field, std::size_t line, const char* what) {
  std::uint64_t value = 0;
  auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
  if (field.empty() || ec != std::errc() || ptr != field.data() + field.size())
    fail(ErrorKind::kFormat, "line " + std::to_string(line) + ": bad " + what + " '" + std::string(field) + "'");
  return value;
}

std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    auto pos = line.find(',', start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

}  // namespace

std::vector<LabelPath> read_labels_csv(const std::filesystem::path& path) {
  const std::string text = io::read_file(path);
  std::vector<LabelPath> out;
  std::size_t line_no = 0;
  std::size_t levels = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string::npos) end = text.size();
    std::string_view line(text.data() + pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (line.find('\r') != std::string_view::npos)
      fail(ErrorKind::kFormat, "line " + std::to_string(line_no) + ": carriage return (LF line endings required)");
    if (line_no == 1) {
      auto header = split_commas(line);
      if (header.size() < 2 || header[0] != "id") fail(ErrorKind::kFormat, "line 1: header must start with id,level_0");
      for (std::size_t l = 1; l < header.size(); ++l) {
        if (header[l] != "level_" + std::to_string(l - 1))
          fail(ErrorKind::kFormat, "line 1: expected column level_" + std::to_string(l - 1));
      }
      levels = header.size() - 1;
      continue;
    }
    if (line.empty()) {
      if (pos >= text.size()) break;
      fail(ErrorKind::kFormat, "line " + std::to_string(line_no) + ": empty row");
    }
    auto fields = split_commas(line);
    if (fields.size() != levels + 1)
      fail(ErrorKind::kFormat, "line " + std::to_string(line_no) + ": expected " + std::to_string(levels + 1) + " fields");
    LabelPath p;
    p.sample_id = parse_uint(fields[0], line_no, "id");
    for (std::size_t l = 0; l < levels; ++l) {
      const auto v = parse_uint(fields[l + 1], line_no, "label");
      if (v > 0xffffffffULL) fail(ErrorKind::kFormat, "line " + std::to_string(line_no) + ": label out of range");
      p.labels.push_back(static_cast<std::uint32_t>(v));
    }
    out.push_back(std::move(p));
  }
  if (line_no == 0) fail(ErrorKind::kFormat, "missing header");
  return out;
}

void write_labels_csv(const std::filesystem::path& path, std::span<const LabelPath> paths,
                      std::size_t level_count) {
  const std::size_t levels = paths.empty() ? level_count : common_level_count(paths);
  std::ostringstream out;
  out << "id";
  for (std::size_t l = 0; l < levels; ++l) out << ",level_" << l;
  out << '\n';
  for (const auto& p : paths) {
    out << p.sample_id;
    for (auto v : p.labels) out << ',' << v;
    out << '\n';
  }
  io::write_file_atomic(path, out.str());
}

}  // namespace hicle
