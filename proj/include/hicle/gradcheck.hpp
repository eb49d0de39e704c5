#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "hicle/hierarchy.hpp"
#include "hicle/losses.hpp"
#include "hicle/matrix.hpp"

namespace hicle::gradcheck {

inline constexpr double kStep = 1e-4;
inline constexpr double kThreshold = 1e-5;

// |a - n| / max(1, |a|, |n|): relative for entries of magnitude above one,
// absolute below.
double entry_error(double analytic, double numeric);
double max_error(const std::vector<double>& analytic, const std::vector<double>& numeric);

// Central differences of f over every entry of x.
std::vector<double> numeric_gradient(const std::function<double(const Matrix&)>& f, Matrix x, double step = kStep);

struct Batch {
  Matrix raw;                    // rows are normalized before the loss
  std::vector<LabelPath> paths;  // two views per sample share a sample_id
};

// Random batch of `samples` samples x 2 views with `levels`-deep labels drawn
// from small alphabets so every level has positives.
Batch random_batch(std::uint64_t seed, std::size_t samples, std::size_t dim, std::size_t levels);

// Smallest distance of any pair loss to a point where the clamp or the
// per-level maximum switches; finite differences are unreliable below it.
double clamp_margin(const Matrix& features, const std::vector<LabelPath>& paths, const LossConfig& cfg);

struct CaseResult {
  std::string name;
  double max_error = 0.0;
  std::size_t cases = 0;
  std::size_t skipped = 0;  // seeds redrawn for sitting near a kink
};

struct Report {
  std::vector<CaseResult> results;
  double threshold = kThreshold;
  bool passed() const;
};

// Checks HiMulCon, HiConE, HiMulConE, SupCon, SimCLR and the full encoder
// chain over `cases` seeded batches each. corrupt perturbs every analytic
// gradient so the suite must fail.
Report run(std::uint64_t seed, std::size_t cases, bool corrupt = false);

}  // namespace hicle::gradcheck
