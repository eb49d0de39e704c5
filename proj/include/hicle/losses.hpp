#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "hicle/hierarchy.hpp"
#include "hicle/matrix.hpp"

namespace hicle {

// Level weight F(l) for l in [0, L).
enum class LambdaSchedule {
  kExpInvGap,    // exp(1 / (L - l))
  kExpLevel,     // exp(l)
  kPow2Level,    // 2^l
  kPow2InvGap,   // 2^(1 / (L - l))
  kInvGap,       // 1 / (L - l)
  kIdentity,     // 1
  // Decreasing controls, used only by the schedule ablation. Levels are
  // shifted by one so the coarsest level stays finite.
  kExpInvLevel,  // exp(1 / (l + 1))
  kInvLevel,     // 1 / (l + 1)
};

LambdaSchedule parse_schedule(std::string_view name);
std::string_view schedule_name(LambdaSchedule s);
bool schedule_increasing(LambdaSchedule s);

double lambda_value(LambdaSchedule schedule, std::size_t level, std::size_t level_count);

struct LossConfig {
  double temperature = 0.1;
  LambdaSchedule lambda_schedule = LambdaSchedule::kExpInvGap;
  // Common factor on every level weight.
  double lambda_scale = 1.0;
  PositivesMode positives_mode = PositivesMode::kCumulative;
  // The clamp floor acts as a constant: no gradient flows through it.
  bool clamp_floor_stop_gradient = true;
  // Levels with no positive pair do not count in the 1/|L| average.
  bool skip_empty_levels = true;
  // Same-sample views are positives at an extra level L.
  bool instance_level = true;

  void validate() const;
};

struct PairLoss {
  std::size_t anchor = 0;
  std::size_t positive = 0;
  double loss = 0.0;     // -log p(positive | anchor), before clamping
  double clamped = 0.0;  // after the hierarchy clamp; equals loss when no clamp applies
};

struct ViolationCount {
  std::uint64_t violations = 0;
  std::uint64_t comparisons = 0;

  std::optional<double> rate() const {
    if (comparisons == 0) return std::nullopt;
    return static_cast<double>(violations) / static_cast<double>(comparisons);
  }
  ViolationCount& operator+=(const ViolationCount& o) {
    violations += o.violations;
    comparisons += o.comparisons;
    return *this;
  }
};

struct LossOutput {
  double total = 0.0;
  // Indexed by level; level 0 is the coarsest.
  std::vector<std::vector<PairLoss>> per_level_pair_losses;
  Matrix gradient;  // d total / d features, same shape as the features
  ViolationCount violations;
  std::optional<double> violation_rate;  // absent with fewer than two non-empty levels
};

// log[ exp(f_i.f_p / t) / sum_{a != i} exp(f_i.f_a / t) ]
double pair_log_prob(const Matrix& features, std::size_t anchor, std::size_t positive, double temperature);

LossOutput himulcon(const Matrix& features, std::span<const LabelPath> batch, const LossConfig& cfg);
LossOutput hicone(const Matrix& features, std::span<const LabelPath> batch, const LossConfig& cfg);
LossOutput himulcone(const Matrix& features, std::span<const LabelPath> batch, const LossConfig& cfg);
LossOutput supcon(const Matrix& features, std::span<const std::uint64_t> class_labels, double temperature);
// view_partner[i] is the other view of row i; must be a perfect matching.
LossOutput simclr(const Matrix& features, std::span<const std::size_t> view_partner, double temperature);

// Per-level raw pair losses for a batch without evaluating any objective.
std::vector<std::vector<PairLoss>> hierarchy_pair_losses(const Matrix& features, std::span<const LabelPath> batch,
                                                         const LossConfig& cfg);

// Cross-level comparisons (finer level a, coarser level b): a violation is a
// finer pair with strictly higher loss than a coarser pair.
ViolationCount count_loss_violations(const std::vector<std::vector<double>>& per_level_losses);
std::optional<double> loss_violation_rate(const std::vector<std::vector<double>>& per_level_losses);
std::vector<std::vector<double>> raw_losses(const std::vector<std::vector<PairLoss>>& per_level);

// Running-floor clamp on raw per-level losses (index 0 = coarsest): walking
// from the finest level up, each loss becomes max(loss, floor) and the floor
// becomes the largest clamped value of that level.
std::vector<std::vector<double>> clamp_floor(const std::vector<std::vector<double>>& per_level_losses);

// True when, for each non-empty level, the smallest clamped loss is at least
// the largest clamped loss of the next finer non-empty level.
bool clamp_monotone(const std::vector<std::vector<PairLoss>>& per_level);

enum class LossKind { kHiMulCon, kHiConE, kHiMulConE, kSupCon, kSimCLR };
LossKind parse_loss_kind(std::string_view name);
std::string_view loss_kind_name(LossKind kind);

// Rows within this distance of unit norm are accepted as normalized.
inline constexpr double kUnitNormTolerance = 1e-6;

}  // namespace hicle
