// Acceptance suite: one PASS/FAIL line per criterion, exit status 0 iff all pass.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "hicle/data.hpp"
#include "hicle/eval.hpp"
#include "hicle/gradcheck.hpp"
#include "hicle/kernels.hpp"
#include "hicle/losses.hpp"
#include "hicle/model.hpp"
#include "hicle/rng.hpp"
#include "hicle/sampling.hpp"
#include "oracle.hpp"

using namespace hicle;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

int failures = 0;
std::map<int, std::string> lines;

void report(int id, bool ok, const std::string& detail) {
  lines[id] = std::string("[") + (ok ? "PASS" : "FAIL") + "] criterion " + (id < 10 ? " " : "") + std::to_string(id) +
              ": " + detail;
  if (!ok) ++failures;
}

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0, double d = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c, d);
  return buf;
}

// 1. single-level HiMulCon with identity weights equals SupCon
void supcon_reduction() {
  Rng rng(101);
  double worst = 0.0;
  for (int b = 0; b < 10; ++b) {
    const Matrix f = oracle::random_unit_rows(rng, 16, 8);
    std::vector<LabelPath> paths;
    std::vector<std::uint64_t> classes;
    for (std::size_t i = 0; i < 16; ++i) {
      const auto c = static_cast<std::uint32_t>(rng.below(4));
      paths.push_back({{c}, i});
      classes.push_back(c);
    }
    LossConfig cfg;
    cfg.lambda_schedule = LambdaSchedule::kIdentity;
    cfg.instance_level = false;
    worst = std::max(worst, std::abs(himulcon(f, paths, cfg).total - supcon(f, classes, 0.1).total));
  }
  report(1, worst < 1e-9, fmt("HiMulCon(L=1, identity) vs SupCon over 10 batches, max |diff| = %.3g", worst));
}

// 2. all-singleton classes with view pairing equals SimCLR
void simclr_reduction() {
  Rng rng(202);
  double worst = 0.0;
  for (int b = 0; b < 10; ++b) {
    const std::size_t samples = 8;
    const Matrix f = oracle::random_unit_rows(rng, 2 * samples, 8);
    std::vector<LabelPath> paths;
    std::vector<std::size_t> partner;
    for (std::size_t s = 0; s < samples; ++s)
      for (int v = 0; v < 2; ++v) {
        paths.push_back({{static_cast<std::uint32_t>(s)}, s});
        partner.push_back(2 * s + (v == 0 ? 1 : 0));
      }
    const double eq1 = oracle::simclr(f, partner, 0.1);
    for (bool instance : {false, true}) {
      LossConfig cfg;
      cfg.lambda_schedule = LambdaSchedule::kIdentity;
      cfg.instance_level = instance;
      worst = std::max(worst, std::abs(himulcon(f, paths, cfg).total - eq1));
    }
    worst = std::max(worst, std::abs(simclr(f, partner, 0.1).total - eq1));
  }
  report(2, worst < 1e-9, fmt("singleton-class HiMulCon and SimCLR vs direct contrastive loss, max |diff| = %.3g", worst));
}

// 3. finite-difference gradient suite
void gradient_suite() {
  const auto t0 = Clock::now();
  const auto rep = gradcheck::run(0, 20);
  const double elapsed = seconds_since(t0);
  double worst = 0.0;
  std::string names;
  for (const auto& r : rep.results) {
    worst = std::max(worst, r.max_error);
    names += " " + r.name + "=" + fmt("%.2g", r.max_error);
  }
  report(3, rep.passed() && elapsed < 30.0,
         fmt("20 cases per gradient, max rel err %.3g (< 1e-5), %.2f s (< 30 s);", worst, elapsed) + names);
}

// 4. all five losses vs per-pair scalar evaluation
void brute_force() {
  Rng rng(404);
  double worst = 0.0;
  for (int b = 0; b < 50; ++b) {
    const std::size_t samples = 2 + rng.below(3);  // N = 4, 6 or 8
    const std::size_t levels = 1 + rng.below(3);
    const Matrix f = oracle::random_unit_rows(rng, 2 * samples, 4);
    const auto paths = oracle::random_paths(rng, samples, levels);
    LossConfig cfg;
    cfg.positives_mode = b % 2 ? PositivesMode::kExactLca : PositivesMode::kCumulative;
    auto diff = [&](double a, double o) { worst = std::max(worst, std::abs(a - o)); };
    diff(himulcon(f, paths, cfg).total, oracle::hierarchical(f, paths, cfg, oracle::Family::kMulCon));
    diff(hicone(f, paths, cfg).total, oracle::hierarchical(f, paths, cfg, oracle::Family::kConE));
    diff(himulcone(f, paths, cfg).total, oracle::hierarchical(f, paths, cfg, oracle::Family::kMulConE));
    std::vector<std::uint64_t> classes;
    std::vector<std::size_t> partner;
    for (std::size_t i = 0; i < paths.size(); ++i) {
      classes.push_back(paths[i].labels.front());
      partner.push_back(i ^ 1);
    }
    diff(supcon(f, classes, cfg.temperature).total, oracle::supcon(f, classes, cfg.temperature));
    diff(simclr(f, partner, cfg.temperature).total, oracle::simclr(f, partner, cfg.temperature));
  }
  report(4, worst < 1e-9, fmt("50 batches (N <= 8, L <= 3), five losses vs scalar oracle, max |diff| = %.3g", worst));
}

struct RunMetrics {
  std::vector<std::optional<double>> nmi;
  std::optional<double> violation_rate;
  std::size_t batches = 0;
  std::size_t clamp_breaks = 0;
};

// Trains on seen/train rows of the default synthetic set and evaluates on seen/test.
RunMetrics trend_run(LossKind loss, LambdaSchedule schedule, std::uint64_t seed) {
  SyntheticSpec spec;
  spec.seed = seed;
  const Dataset ds = split_seen_unseen(generate_synthetic(spec), 0.25, seed);
  const Dataset train_set = ds.subset(ds.select(Side::kSeen, Split::kTrain));
  const Dataset test_set = ds.subset(ds.select(Side::kSeen, Split::kTest));

  TrainConfig cfg;
  cfg.loss = loss;
  cfg.loss_cfg.lambda_schedule = schedule;
  cfg.seed = seed;
  cfg.sampler.seed = seed;
  cfg.sampler.batch_size = 64;
  cfg.epochs = 50;

  RunMetrics m;
  const bool clamped = loss == LossKind::kHiConE || loss == LossKind::kHiMulConE;
  const auto observer = [&](std::size_t, const LossOutput& out) {
    ++m.batches;
    if (clamped && !clamp_monotone(out.per_level_pair_losses)) ++m.clamp_breaks;
  };
  const TrainResult result = train(train_set.features, train_set.paths, build_tree(train_set.paths), cfg, observer);
  const Matrix emb = forward(result.model, test_set.features).projections;
  m.nmi = clustering_report(emb, test_set.paths, seed).nmi_per_level;
  m.violation_rate = distance_violation_rate(emb, test_set.paths, 10000, seed).violation_rate;
  return m;
}

struct Series {
  std::vector<RunMetrics> runs;
  double seconds = 0.0;

  double median_nmi(std::size_t level) const {
    std::vector<double> v;
    for (const auto& r : runs) v.push_back(r.nmi.at(level).value_or(std::nan("")));
    return median(v);
  }
  double median_violation() const {
    std::vector<double> v;
    for (const auto& r : runs) v.push_back(r.violation_rate.value_or(std::nan("")));
    return median(v);
  }
};

Series run_series(LossKind loss, LambdaSchedule schedule) {
  Series s;
  const auto t0 = Clock::now();
  for (std::uint64_t seed = 1; seed <= 5; ++seed) s.runs.push_back(trend_run(loss, schedule, seed));
  s.seconds = seconds_since(t0);
  return s;
}

// 5, 6, 7, 10 share the default synthetic training setup.
void training_trends() {
  kernels::set_threads(1);
  const Series himulcone_runs = run_series(LossKind::kHiMulConE, LambdaSchedule::kExpInvGap);
  const Series simclr_runs = run_series(LossKind::kSimCLR, LambdaSchedule::kExpInvGap);
  const Series supcon_runs = run_series(LossKind::kSupCon, LambdaSchedule::kExpInvGap);
  const Series decreasing_runs = run_series(LossKind::kHiMulConE, LambdaSchedule::kExpInvLevel);
  kernels::set_threads(0);

  std::size_t batches = 0, breaks = 0;
  for (const auto& r : himulcone_runs.runs) {
    batches += r.batches;
    breaks += r.clamp_breaks;
  }
  report(5, batches > 0 && breaks == 0,
         fmt("clamped level ordering checked on %.0f HiMulConE training batches, %.0f violations", double(batches),
             double(breaks)));

  const std::size_t finest = 2;
  const double cat_h = himulcone_runs.median_nmi(0), cat_s = simclr_runs.median_nmi(0);
  const double fine_h = himulcone_runs.median_nmi(finest), fine_c = supcon_runs.median_nmi(finest);
  const double slowest = std::max({himulcone_runs.seconds, simclr_runs.seconds, supcon_runs.seconds});
  report(6, cat_h >= cat_s + 0.05 && fine_h >= fine_c && slowest < 300.0,
         fmt("median category NMI HiMulConE %.3f vs SimCLR %.3f (+0.05 required); ", cat_h, cat_s) +
             fmt("finest NMI HiMulConE %.3f vs SupCon %.3f; slowest config %.1f s", fine_h, fine_c, slowest));

  const double vh = himulcone_runs.median_violation(), vs = supcon_runs.median_violation();
  report(7, vh < vs, fmt("median distance violation rate HiMulConE %.4f < SupCon %.4f", vh, vs));

  const double inc = himulcone_runs.median_nmi(0), dec = decreasing_runs.median_nmi(0);
  report(10, inc >= dec,
         fmt("median category NMI increasing schedule %.3f >= decreasing %.3f ", inc, dec) +
             fmt("(subcategory %.3f vs %.3f, finest %.3f vs %.3f)", himulcone_runs.median_nmi(1),
                 decreasing_runs.median_nmi(1), himulcone_runs.median_nmi(finest), decreasing_runs.median_nmi(finest)));
}

// 8. batches without any positive beyond augmentation views
void sampler_ablation() {
  SyntheticSpec spec;
  spec.counts = {8, 240};
  spec.level_scales = {1.0, 0.5};
  spec.samples_per_instance = 2;
  spec.input_dim = 8;
  spec.skew_ratio = 30.0;
  spec.seed = 808;
  const Dataset ds = generate_synthetic(spec);
  const HierarchyTree tree = build_tree(ds.paths);

  std::map<std::uint32_t, std::size_t> per_category;
  for (const auto& p : ds.paths) ++per_category[p.labels.front()];
  std::size_t largest = 0, smallest = ds.size();
  for (const auto& [c, count] : per_category) {
    largest = std::max(largest, count);
    smallest = std::min(smallest, count);
  }

  auto fraction_without_positives = [&](SamplerStrategy strategy) {
    std::size_t seen = 0, empty = 0;
    for (std::uint64_t epoch = 0; seen < 200; ++epoch) {
      SamplerConfig cfg;
      cfg.batch_size = 64;
      cfg.strategy = strategy;
      cfg.seed = 8000 + epoch;
      for (const auto& batch : plan_epoch(ds.paths, tree, cfg).batches) {
        if (seen == 200) break;
        ++seen;
        std::set<std::vector<std::uint32_t>> labels;
        bool positive = false;
        for (auto row : batch) positive = !labels.insert(ds.paths[row].labels).second || positive;
        if (!positive) ++empty;
      }
    }
    return static_cast<double>(empty) / static_cast<double>(seen);
  };
  const double random = fraction_without_positives(SamplerStrategy::kRandom);
  const double hierarchical = fraction_without_positives(SamplerStrategy::kHierarchical);
  report(8, random >= 0.20 && hierarchical == 0.0,
         fmt("category ratio %.1f; batches without positives: random %.3f (>= 0.20), hierarchical %.3f (= 0)",
             double(largest) / double(smallest), random, hierarchical));
}

// 9. retrieval and clustering metrics vs exhaustive oracles on fixed fixtures
void metric_oracles() {
  Rng rng(909);
  // A handful of directions, reused so that exact score ties occur.
  const Matrix directions = oracle::random_unit_rows(rng, 12, 6);
  Matrix queries(10, 6), gallery(30, 6);
  std::vector<std::uint64_t> qc(10), gc(30);
  for (std::size_t i = 0; i < 30; ++i) {
    const std::size_t d = rng.below(12);
    for (std::size_t k = 0; k < 6; ++k) gallery(i, k) = directions(d, k);
    gc[i] = rng.below(5);
  }
  for (std::size_t i = 0; i < 10; ++i) {
    const std::size_t d = rng.below(12);
    for (std::size_t k = 0; k < 6; ++k) queries(i, k) = directions(d, k);
    qc[i] = i == 9 ? 99 : rng.below(5);  // last query has no relevant gallery item
  }
  const std::vector<std::size_t> ks{1, 3, 5, 10, 30};
  const auto rep = topk_retrieval(queries, gallery, qc, gc, ks);
  double worst = 0.0;
  for (std::size_t i = 0; i < ks.size(); ++i)
    worst = std::max(worst, std::abs(rep.topk[i].second - oracle::topk(queries, gallery, qc, gc, ks[i])));
  const double map_oracle = oracle::map_at_r(queries, gallery, qc, gc);
  const bool map_ok = rep.map_at_r.has_value() && rep.excluded_queries == 1;
  if (map_ok) worst = std::max(worst, std::abs(*rep.map_at_r - map_oracle));

  std::vector<std::uint64_t> truth(30), clusters(30);
  for (std::size_t i = 0; i < 30; ++i) {
    truth[i] = i % 4;
    clusters[i] = rng.uniform() < 0.7 ? truth[i] : rng.below(3);
  }
  worst = std::max(worst, std::abs(nmi(truth, clusters) - oracle::nmi(truth, clusters)));
  report(9, map_ok && worst < 1e-12,
         fmt("top-k (5 values), MAP@R and NMI vs exhaustive oracles, max |diff| = %.3g", worst));
}

}  // namespace

int main() {
  supcon_reduction();
  simclr_reduction();
  gradient_suite();
  brute_force();
  training_trends();
  sampler_ablation();
  metric_oracles();
  for (const auto& [id, line] : lines) std::printf("%s\n", line.c_str());
  std::printf("%d criterion(s) failed\n", failures);
  return failures == 0 ? 0 : 1;
}
