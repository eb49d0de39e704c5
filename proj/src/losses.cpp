#include "hicle/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "hicle/error.hpp"
#include "hicle/kernels.hpp"

namespace hicle {

LambdaSchedule parse_schedule(std::string_view name) {
  if (name == "exp_inv_gap") return LambdaSchedule::kExpInvGap;
  if (name == "exp_level") return LambdaSchedule::kExpLevel;
  if (name == "pow2_level") return LambdaSchedule::kPow2Level;
  if (name == "pow2_inv_gap") return LambdaSchedule::kPow2InvGap;
  if (name == "inv_gap") return LambdaSchedule::kInvGap;
  if (name == "identity") return LambdaSchedule::kIdentity;
  if (name == "exp_inv_level") return LambdaSchedule::kExpInvLevel;
  if (name == "inv_level") return LambdaSchedule::kInvLevel;
  fail(ErrorKind::kConfiguration, "unknown lambda schedule '" + std::string(name) + "'");
}

std::string_view schedule_name(LambdaSchedule s) {
  switch (s) {
    case LambdaSchedule::kExpInvGap: return "exp_inv_gap";
    case LambdaSchedule::kExpLevel: return "exp_level";
    case LambdaSchedule::kPow2Level: return "pow2_level";
    case LambdaSchedule::kPow2InvGap: return "pow2_inv_gap";
    case LambdaSchedule::kInvGap: return "inv_gap";
    case LambdaSchedule::kIdentity: return "identity";
    case LambdaSchedule::kExpInvLevel: return "exp_inv_level";
    case LambdaSchedule::kInvLevel: return "inv_level";
  }
  return "?";
}

bool schedule_increasing(LambdaSchedule s) {
  return s != LambdaSchedule::kIdentity && s != LambdaSchedule::kExpInvLevel && s != LambdaSchedule::kInvLevel;
}

double lambda_value(LambdaSchedule schedule, std::size_t level, std::size_t level_count) {
  if (level >= level_count)
    fail(ErrorKind::kRange, "level " + std::to_string(level) + " outside [0, " + std::to_string(level_count) + ")");
  const double l = static_cast<double>(level);
  const double gap = static_cast<double>(level_count - level);
  switch (schedule) {
    case LambdaSchedule::kExpInvGap: return std::exp(1.0 / gap);
    case LambdaSchedule::kExpLevel: return std::exp(l);
    case LambdaSchedule::kPow2Level: return std::exp2(l);
    case LambdaSchedule::kPow2InvGap: return std::exp2(1.0 / gap);
    case LambdaSchedule::kInvGap: return 1.0 / gap;
    case LambdaSchedule::kIdentity: return 1.0;
    case LambdaSchedule::kExpInvLevel: return std::exp(1.0 / (l + 1.0));
    case LambdaSchedule::kInvLevel: return 1.0 / (l + 1.0);
  }
  return 1.0;
}

void LossConfig::validate() const {
  if (!(temperature > 0.0) || !std::isfinite(temperature))
    fail(ErrorKind::kConfiguration, "temperature must be positive");
  if (!(lambda_scale > 0.0) || !std::isfinite(lambda_scale))
    fail(ErrorKind::kConfiguration, "lambda_scale must be positive");
}

LossKind parse_loss_kind(std::string_view name) {
  if (name == "himulcon") return LossKind::kHiMulCon;
  if (name == "hicone") return LossKind::kHiConE;
  if (name == "himulcone") return LossKind::kHiMulConE;
  if (name == "supcon") return LossKind::kSupCon;
  if (name == "simclr") return LossKind::kSimCLR;
  fail(ErrorKind::kConfiguration, "unknown loss '" + std::string(name) + "'");
}

std::string_view loss_kind_name(LossKind kind) {
  switch (kind) {
    case LossKind::kHiMulCon: return "himulcon";
    case LossKind::kHiConE: return "hicone";
    case LossKind::kHiMulConE: return "himulcone";
    case LossKind::kSupCon: return "supcon";
    case LossKind::kSimCLR: return "simclr";
  }
  return "?";
}

namespace {

void require_unit_rows(const Matrix& f) {
  if (f.rows() < 2) fail(ErrorKind::kBatchTooSmall, "need at least two feature rows");
  for (std::size_t i = 0; i < f.rows(); ++i) {
    double sq = 0.0;
    for (double v : f.row(i)) sq += v * v;
    const double norm = std::sqrt(sq);
    if (!std::isfinite(norm) || std::abs(norm - 1.0) > kUnitNormTolerance)
      fail(ErrorKind::kNormalization, "row " + std::to_string(i) + " has norm " + std::to_string(norm));
  }
}

// positives[level][anchor] -> ascending positive indices
using LevelPositives = std::vector<std::vector<std::vector<std::size_t>>>;

struct CoreOptions {
  double temperature = 0.1;
  std::vector<double> level_weights;
  bool clamp = false;
  bool stop_gradient = true;
  bool skip_empty = true;
};

constexpr std::size_t kNoSource = std::numeric_limits<std::size_t>::max();

// Shared evaluation for every loss in this file:
//   total = (1/|L|) sum_l w_l sum_i (1/|P_l(i)|) sum_{p in P_l(i)} c(i, p)
// where c is the pair loss, or its clamped value when clamping is on. Levels
// are visited finest first so the clamp floor can be carried downwards.
LossOutput contrastive_core(const Matrix& features, const LevelPositives& positives, const CoreOptions& opt) {
  const std::size_t n = features.rows();
  const std::size_t levels = positives.size();
  const double inv_t = 1.0 / opt.temperature;

  Matrix sim = kernels::gram(features);
  for (double& v : sim.data()) v *= inv_t;
  const std::vector<double> log_denominator = kernels::row_logsumexp_offdiag(sim);

  LossOutput out;
  out.per_level_pair_losses.resize(levels);
  std::size_t non_empty = 0;
  for (std::size_t l = 0; l < levels; ++l) {
    auto& pairs = out.per_level_pair_losses[l];
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t p : positives[l][i]) {
        const double loss = log_denominator[i] - sim(i, p);
        pairs.push_back({i, p, loss, loss});
      }
    }
    if (!pairs.empty()) ++non_empty;
  }
  if (non_empty == 0) fail(ErrorKind::kDegenerateBatch, "batch has no positive pair at any level");
  const double level_norm = opt.skip_empty ? static_cast<double>(non_empty) : static_cast<double>(levels);

  // Source pair (flattened i*n+p) whose raw loss the clamped value equals;
  // kNoSource when the floor won under stop-gradient.
  std::vector<std::vector<std::size_t>> source(levels);
  double floor = -std::numeric_limits<double>::infinity();
  std::size_t floor_source = kNoSource;
  for (std::size_t step = 0; step < levels; ++step) {
    const std::size_t l = levels - 1 - step;
    auto& pairs = out.per_level_pair_losses[l];
    source[l].resize(pairs.size());
    if (pairs.empty()) continue;
    double level_max = -std::numeric_limits<double>::infinity();
    std::size_t level_max_source = kNoSource;
    for (std::size_t k = 0; k < pairs.size(); ++k) {
      auto& pr = pairs[k];
      if (!opt.clamp || pr.loss >= floor) {
        pr.clamped = pr.loss;
        source[l][k] = pr.anchor * n + pr.positive;
      } else {
        pr.clamped = floor;
        source[l][k] = opt.stop_gradient ? kNoSource : floor_source;
      }
      if (pr.clamped > level_max) {
        level_max = pr.clamped;
        level_max_source = pr.loss >= floor ? pr.anchor * n + pr.positive : floor_source;
      }
    }
    floor = level_max;
    floor_source = level_max_source;
  }

  // Coefficients on each raw pair loss; the total and its gradient follow.
  Matrix coeff(n, n);
  std::vector<double> level_totals(levels, 0.0);
  for (std::size_t l = 0; l < levels; ++l) {
    const auto& pairs = out.per_level_pair_losses[l];
    std::size_t k = 0;
    double level_sum = 0.0;
    while (k < pairs.size()) {
      const std::size_t anchor = pairs[k].anchor;
      std::size_t end = k;
      while (end < pairs.size() && pairs[end].anchor == anchor) ++end;
      const double c = opt.level_weights[l] / (level_norm * static_cast<double>(end - k));
      double anchor_sum = 0.0;
      for (std::size_t q = k; q < end; ++q) {
        anchor_sum += pairs[q].clamped;
        if (source[l][q] != kNoSource) coeff.data()[source[l][q]] += c;
      }
      level_sum += c * anchor_sum;
      k = end;
    }
    level_totals[l] = level_sum;
  }
  out.total = 0.0;
  for (double v : level_totals) out.total += v;

  // d loss(i,p) / d s(i,a) = softmax_i(a) - [a == p]; s = F F^T / t.
  Matrix grad_sim(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    double row_coeff = 0.0;
    for (double c : coeff.row(i)) row_coeff += c;
    if (row_coeff == 0.0) continue;
    for (std::size_t a = 0; a < n; ++a) {
      if (a == i) continue;
      grad_sim(i, a) = row_coeff * std::exp(sim(i, a) - log_denominator[i]) - coeff(i, a);
    }
  }
  Matrix symmetric(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t a = 0; a < n; ++a) symmetric(i, a) = (grad_sim(i, a) + grad_sim(a, i)) * inv_t;
  out.gradient = kernels::matmul_nn(symmetric, features);

  out.violations = count_loss_violations(raw_losses(out.per_level_pair_losses));
  out.violation_rate = out.violations.rate();
  return out;
}

LevelPositives positives_from_tensor(const PairingTensor& t) {
  LevelPositives pos(t.levels(), std::vector<std::vector<std::size_t>>(t.size()));
  for (std::size_t l = 0; l < t.levels(); ++l)
    for (std::size_t i = 0; i < t.size(); ++i) pos[l][i] = t.positives_of(l, i);
  return pos;
}

enum class Family { kMulCon, kConE, kMulConE };

LossOutput hierarchical(const Matrix& features, std::span<const LabelPath> batch, const LossConfig& cfg, Family family) {
  cfg.validate();
  require_unit_rows(features);
  if (batch.size() != features.rows())
    fail(ErrorKind::kStructural, "feature rows and label paths differ in count");
  const PairingTensor tensor = pairing_tensor(batch, cfg.positives_mode, cfg.instance_level);

  CoreOptions opt;
  opt.temperature = cfg.temperature;
  opt.clamp = family != Family::kMulCon;
  opt.stop_gradient = cfg.clamp_floor_stop_gradient;
  opt.skip_empty = cfg.skip_empty_levels;
  for (std::size_t l = 0; l < tensor.levels(); ++l)
    opt.level_weights.push_back(family == Family::kConE ? 1.0
                                                        : cfg.lambda_scale * lambda_value(cfg.lambda_schedule, l, tensor.levels()));
  return contrastive_core(features, positives_from_tensor(tensor), opt);
}

}  // namespace

double pair_log_prob(const Matrix& features, std::size_t anchor, std::size_t positive, double temperature) {
  if (!(temperature > 0.0)) fail(ErrorKind::kConfiguration, "temperature must be positive");
  require_unit_rows(features);
  if (anchor >= features.rows() || positive >= features.rows()) fail(ErrorKind::kRange, "row index out of range");
  if (anchor == positive) fail(ErrorKind::kSelfPair, "anchor and positive are the same row");
  auto fi = features.row(anchor);
  std::vector<double> logits;
  double target = 0.0;
  double peak = -std::numeric_limits<double>::infinity();
  for (std::size_t a = 0; a < features.rows(); ++a) {
    if (a == anchor) continue;
    auto fa = features.row(a);
    double dot = 0.0;
    for (std::size_t k = 0; k < fi.size(); ++k) dot += fi[k] * fa[k];
    const double s = dot / temperature;
    if (a == positive) target = s;
    peak = std::max(peak, s);
    logits.push_back(s);
  }
  double acc = 0.0;
  for (double s : logits) acc += std::exp(s - peak);
  return target - (peak + std::log(acc));
}

LossOutput himulcon(const Matrix& features, std::span<const LabelPath> batch, const LossConfig& cfg) {
  return hierarchical(features, batch, cfg, Family::kMulCon);
}

LossOutput hicone(const Matrix& features, std::span<const LabelPath> batch, const LossConfig& cfg) {
  return hierarchical(features, batch, cfg, Family::kConE);
}

LossOutput himulcone(const Matrix& features, std::span<const LabelPath> batch, const LossConfig& cfg) {
  return hierarchical(features, batch, cfg, Family::kMulConE);
}

LossOutput supcon(const Matrix& features, std::span<const std::uint64_t> class_labels, double temperature) {
  if (!(temperature > 0.0)) fail(ErrorKind::kConfiguration, "temperature must be positive");
  require_unit_rows(features);
  const std::size_t n = features.rows();
  if (class_labels.size() != n) fail(ErrorKind::kStructural, "feature rows and class labels differ in count");
  LevelPositives pos(1, std::vector<std::vector<std::size_t>>(n));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (j != i && class_labels[i] == class_labels[j]) pos[0][i].push_back(j);
  CoreOptions opt;
  opt.temperature = temperature;
  opt.level_weights = {1.0};
  return contrastive_core(features, pos, opt);
}

LossOutput simclr(const Matrix& features, std::span<const std::size_t> view_partner, double temperature) {
  if (!(temperature > 0.0)) fail(ErrorKind::kConfiguration, "temperature must be positive");
  require_unit_rows(features);
  const std::size_t n = features.rows();
  if (view_partner.size() != n) fail(ErrorKind::kPairing, "pairing size differs from the number of views");
  LevelPositives pos(1, std::vector<std::vector<std::size_t>>(n));
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t j = view_partner[i];
    if (j >= n || j == i || view_partner[j] != i)
      fail(ErrorKind::kPairing, "view " + std::to_string(i) + " is not matched");
    pos[0][i].push_back(j);
  }
  CoreOptions opt;
  opt.temperature = temperature;
  opt.level_weights = {1.0};
  return contrastive_core(features, pos, opt);
}

std::vector<std::vector<PairLoss>> hierarchy_pair_losses(const Matrix& features, std::span<const LabelPath> batch,
                                                         const LossConfig& cfg) {
  cfg.validate();
  require_unit_rows(features);
  if (batch.size() != features.rows())
    fail(ErrorKind::kStructural, "feature rows and label paths differ in count");
  const PairingTensor tensor = pairing_tensor(batch, cfg.positives_mode, cfg.instance_level);
  Matrix sim = kernels::gram(features);
  for (double& v : sim.data()) v /= cfg.temperature;
  const auto log_denominator = kernels::row_logsumexp_offdiag(sim);
  std::vector<std::vector<PairLoss>> out(tensor.levels());
  for (std::size_t l = 0; l < tensor.levels(); ++l)
    for (std::size_t i = 0; i < tensor.size(); ++i)
      for (std::size_t p : tensor.positives_of(l, i)) {
        const double loss = log_denominator[i] - sim(i, p);
        out[l].push_back({i, p, loss, loss});
      }
  return out;
}

std::vector<std::vector<double>> raw_losses(const std::vector<std::vector<PairLoss>>& per_level) {
  std::vector<std::vector<double>> out(per_level.size());
  for (std::size_t l = 0; l < per_level.size(); ++l)
    for (const auto& p : per_level[l]) out[l].push_back(p.loss);
  return out;
}

ViolationCount count_loss_violations(const std::vector<std::vector<double>>& per_level_losses) {
  ViolationCount count;
  std::vector<std::vector<double>> sorted = per_level_losses;
  for (auto& v : sorted) std::sort(v.begin(), v.end());
  for (std::size_t fine = 0; fine < sorted.size(); ++fine) {
    for (std::size_t coarse = 0; coarse < fine; ++coarse) {
      const auto& c = sorted[coarse];
      if (c.empty() || sorted[fine].empty()) continue;
      count.comparisons += static_cast<std::uint64_t>(sorted[fine].size()) * c.size();
      for (double x : sorted[fine]) {
        // coarser losses strictly below x are violated by x
        count.violations += static_cast<std::uint64_t>(std::lower_bound(c.begin(), c.end(), x) - c.begin());
      }
    }
  }
  return count;
}

std::optional<double> loss_violation_rate(const std::vector<std::vector<double>>& per_level_losses) {
  return count_loss_violations(per_level_losses).rate();
}

std::vector<std::vector<double>> clamp_floor(const std::vector<std::vector<double>>& per_level_losses) {
  std::vector<std::vector<double>> out = per_level_losses;
  double floor = -std::numeric_limits<double>::infinity();
  for (std::size_t step = 0; step < out.size(); ++step) {
    auto& level = out[out.size() - 1 - step];
    if (level.empty()) continue;
    double level_max = -std::numeric_limits<double>::infinity();
    for (double& v : level) {
      v = std::max(v, floor);
      level_max = std::max(level_max, v);
    }
    floor = level_max;
  }
  return out;
}

bool clamp_monotone(const std::vector<std::vector<PairLoss>>& per_level) {
  double finer_max = -std::numeric_limits<double>::infinity();
  for (std::size_t step = 0; step < per_level.size(); ++step) {
    const auto& pairs = per_level[per_level.size() - 1 - step];
    if (pairs.empty()) continue;
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    for (const auto& p : pairs) {
      lo = std::min(lo, p.clamped);
      hi = std::max(hi, p.clamped);
    }
    if (lo < finer_max) return false;
    finer_max = hi;
  }
  return true;
}

}  // namespace hicle
