#include "hicle/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include "hicle/kernels.hpp"
#include "hicle/model.hpp"
#include "hicle/rng.hpp"

namespace hicle::gradcheck {

double entry_error(double analytic, double numeric) {
  const double scale = std::max({1.0, std::abs(analytic), std::abs(numeric)});
  return std::abs(analytic - numeric) / scale;
}

double max_error(const std::vector<double>& analytic, const std::vector<double>& numeric) {
  if (analytic.size() != numeric.size()) return std::numeric_limits<double>::infinity();
  double worst = 0.0;
  for (std::size_t k = 0; k < analytic.size(); ++k) worst = std::max(worst, entry_error(analytic[k], numeric[k]));
  return worst;
}

std::vector<double> numeric_gradient(const std::function<double(const Matrix&)>& f, Matrix x, double step) {
  std::vector<double> out(x.size());
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double saved = x.data()[k];
    x.data()[k] = saved + step;
    const double up = f(x);
    x.data()[k] = saved - step;
    const double down = f(x);
    x.data()[k] = saved;
    out[k] = (up - down) / (2.0 * step);
  }
  return out;
}

Batch random_batch(std::uint64_t seed, std::size_t samples, std::size_t dim, std::size_t levels) {
  Rng rng(seed, "gradcheck-batch");
  Batch b;
  b.raw = Matrix(samples * 2, dim);
  for (double& v : b.raw.data()) v = rng.normal();
  for (std::size_t s = 0; s < samples; ++s) {
    LabelPath p;
    p.sample_id = s;
    for (std::size_t l = 0; l < levels; ++l) p.labels.push_back(static_cast<std::uint32_t>(rng.below(2)));
    // Views stay close to each other, as augmentations would.
    for (std::size_t k = 0; k < dim; ++k) b.raw(2 * s + 1, k) = b.raw(2 * s, k) + 0.3 * rng.normal();
    b.paths.push_back(p);
    b.paths.push_back(p);
  }
  return b;
}

double clamp_margin(const Matrix& features, const std::vector<LabelPath>& paths, const LossConfig& cfg) {
  const auto per_level = hierarchy_pair_losses(features, paths, cfg);
  const std::size_t n = features.rows();
  double margin = std::numeric_limits<double>::infinity();
  double floor = -std::numeric_limits<double>::infinity();
  std::size_t floor_source = std::numeric_limits<std::size_t>::max();
  for (std::size_t step = 0; step < per_level.size(); ++step) {
    const auto& pairs = per_level[per_level.size() - 1 - step];
    if (pairs.empty()) continue;
    std::map<std::size_t, double> by_source;
    for (const auto& p : pairs) {
      const std::size_t self = p.anchor * n + p.positive;
      if (self != floor_source && std::isfinite(floor)) margin = std::min(margin, std::abs(p.loss - floor));
      const bool own = p.loss >= floor;
      const std::size_t src = own ? self : floor_source;
      const double value = own ? p.loss : floor;
      auto [it, inserted] = by_source.emplace(src, value);
      if (!inserted) it->second = std::max(it->second, value);
    }
    std::vector<std::pair<double, std::size_t>> ranked;
    for (const auto& [src, v] : by_source) ranked.emplace_back(v, src);
    std::sort(ranked.rbegin(), ranked.rend());
    if (ranked.size() >= 2) margin = std::min(margin, ranked[0].first - ranked[1].first);
    floor = ranked[0].first;
    floor_source = ranked[0].second;
  }
  return margin;
}

bool Report::passed() const {
  return std::all_of(results.begin(), results.end(), [&](const CaseResult& r) { return r.max_error < threshold; });
}

namespace {

constexpr double kKinkMargin = 1e-2;

LossConfig exact_config() {
  LossConfig cfg;
  cfg.temperature = 0.1;
  cfg.clamp_floor_stop_gradient = false;
  return cfg;
}

double check_loss(LossKind kind, const Batch& batch, const LossConfig& cfg, bool corrupt) {
  std::vector<double> norms;
  const Matrix f = kernels::normalize_rows(batch.raw, &norms);
  const LossOutput out = evaluate_loss(kind, f, batch.paths, cfg);
  Matrix analytic = kernels::normalize_rows_backward(f, norms, out.gradient);
  if (corrupt)
    for (double& v : analytic.data()) v = v * 1.001 + 1e-3;
  const auto numeric = numeric_gradient(
      [&](const Matrix& x) { return evaluate_loss(kind, kernels::normalize_rows(x), batch.paths, cfg).total; },
      batch.raw);
  return max_error(analytic.data(), numeric);
}

struct ChainCase {
  EncoderModel model;
  Batch batch;
};

// Small encoder with non-zero biases so every ReLU branch is exercised.
ChainCase make_chain_case(std::uint64_t seed) {
  ChainCase c{init_model(ModelDims{{6, 8, 8}, {8, 4}}, seed), random_batch(seed, 4, 6, 2)};
  Rng rng(seed, "gradcheck-bias");
  for (auto& layer : c.model.layers)
    for (double& b : layer.bias) b = 0.1 * rng.normal();
  return c;
}

// Smallest |pre-activation| feeding a ReLU; central differences straddle the kink below ~kStep.
double relu_margin(const ChainCase& c) {
  const ForwardResult fwd = forward(c.model, c.batch.raw);
  double m = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k + 1 < fwd.cache.pre.size(); ++k)
    for (std::size_t i = 0; i < fwd.cache.pre[k].size(); ++i) m = std::min(m, std::abs(fwd.cache.pre[k].data()[i]));
  return m;
}

double check_model(const ChainCase& c, LossKind kind, const LossConfig& cfg, bool corrupt) {
  const EncoderModel& model = c.model;
  const Batch& batch = c.batch;
  const ForwardResult fwd = forward(model, batch.raw);
  const LossOutput out = evaluate_loss(kind, fwd.projections, batch.paths, cfg);
  Gradients grads = backward(model, fwd.cache, out.gradient);

  std::vector<double> analytic;
  grads.for_each_tensor([&](std::span<double> t) { analytic.insert(analytic.end(), t.begin(), t.end()); });
  if (corrupt)
    for (double& v : analytic) v = v * 1.001 + 1e-3;

  std::vector<double> numeric;
  EncoderModel probe = model;
  probe.for_each_tensor([&](std::span<double> t) {
    for (double& w : t) {
      const double saved = w;
      w = saved + kStep;
      const double up = evaluate_loss(kind, forward(probe, batch.raw).projections, batch.paths, cfg).total;
      w = saved - kStep;
      const double down = evaluate_loss(kind, forward(probe, batch.raw).projections, batch.paths, cfg).total;
      w = saved;
      numeric.push_back((up - down) / (2.0 * kStep));
    }
  });
  return max_error(analytic, numeric);
}

}  // namespace

Report run(std::uint64_t seed, std::size_t cases, bool corrupt) {
  Report report;
  const LossConfig cfg = exact_config();
  const std::vector<std::pair<const char*, LossKind>> losses = {
      {"himulcon", LossKind::kHiMulCon}, {"hicone", LossKind::kHiConE},  {"himulcone", LossKind::kHiMulConE},
      {"supcon", LossKind::kSupCon},     {"simclr", LossKind::kSimCLR},
  };
  for (const auto& [name, kind] : losses) {
    CaseResult r{name, 0.0, 0, 0};
    std::uint64_t s = seed;
    while (r.cases < cases) {
      const Batch batch = random_batch(s++, 4, 4, 2);
      const bool clamped = kind == LossKind::kHiConE || kind == LossKind::kHiMulConE;
      if (clamped && clamp_margin(kernels::normalize_rows(batch.raw), batch.paths, cfg) < kKinkMargin) {
        ++r.skipped;
        continue;
      }
      r.max_error = std::max(r.max_error, check_loss(kind, batch, cfg, corrupt));
      ++r.cases;
    }
    report.results.push_back(r);
  }
  CaseResult chain{"encoder_chain", 0.0, 0, 0};
  const LossKind chain_losses[] = {LossKind::kHiMulCon, LossKind::kHiConE, LossKind::kHiMulConE};
  std::uint64_t s = seed;
  while (chain.cases < cases) {
    const LossKind kind = chain_losses[chain.cases % 3];
    const ChainCase c = make_chain_case(s++);
    if (relu_margin(c) < kKinkMargin) {
      ++chain.skipped;
      continue;
    }
    if (kind != LossKind::kHiMulCon &&
        clamp_margin(forward(c.model, c.batch.raw).projections, c.batch.paths, cfg) < kKinkMargin) {
      ++chain.skipped;
      continue;
    }
    chain.max_error = std::max(chain.max_error, check_model(c, kind, cfg, corrupt));
    ++chain.cases;
  }
  report.results.push_back(chain);
  return report;
}

}  // namespace hicle::gradcheck
