#include "hicle/model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <map>
#include <unordered_map>

#include "hicle/error.hpp"
#include "hicle/io.hpp"
#include "hicle/kernels.hpp"
#include "hicle/rng.hpp"

namespace hicle {

Matrix linear_forward(const Layer& layer, const Matrix& x) {
  if (x.cols() != layer.in_dim())
    fail(ErrorKind::kStructural, "layer expects " + std::to_string(layer.in_dim()) + " inputs, got " +
                                     std::to_string(x.cols()));
  Matrix out = kernels::matmul_nt(x, layer.weight);
  for (std::size_t i = 0; i < out.rows(); ++i) {
    auto r = out.row(i);
    for (std::size_t j = 0; j < r.size(); ++j) r[j] += layer.bias[j];
  }
  return out;
}

LayerGrad linear_backward(const Layer& layer, const Matrix& x, const Matrix& upstream) {
  if (upstream.rows() != x.rows() || upstream.cols() != layer.out_dim() || x.cols() != layer.in_dim())
    fail(ErrorKind::kStructural, "linear_backward shape mismatch");
  LayerGrad g;
  g.weight = kernels::matmul_tn(upstream, x);
  g.bias.assign(layer.out_dim(), 0.0);
  for (std::size_t i = 0; i < upstream.rows(); ++i) {
    auto r = upstream.row(i);
    for (std::size_t j = 0; j < r.size(); ++j) g.bias[j] += r[j];
  }
  g.input = kernels::matmul_nn(upstream, layer.weight);
  return g;
}

void ModelDims::validate() const {
  if (encoder.size() < 2) fail(ErrorKind::kConfiguration, "encoder needs input and at least one layer width");
  if (projection.size() < 2) fail(ErrorKind::kConfiguration, "projection needs input and output widths");
  if (projection.front() != encoder.back())
    fail(ErrorKind::kConfiguration, "projection input width must equal the encoder output width");
  for (auto d : encoder)
    if (d == 0) fail(ErrorKind::kConfiguration, "layer widths must be positive");
  for (auto d : projection)
    if (d == 0) fail(ErrorKind::kConfiguration, "layer widths must be positive");
}

bool operator==(const Layer& a, const Layer& b) { return a.weight == b.weight && a.bias == b.bias; }

bool operator==(const EncoderModel& a, const EncoderModel& b) {
  return a.encoder_layers == b.encoder_layers && a.layers == b.layers;
}

std::size_t EncoderModel::parameter_count() const {
  std::size_t total = 0;
  for (const auto& l : layers) total += l.weight.size() + l.bias.size();
  return total;
}

void EncoderModel::for_each_tensor(const std::function<void(std::span<double>)>& fn) {
  for (auto& l : layers) {
    fn(std::span<double>(l.weight.data()));
    fn(std::span<double>(l.bias));
  }
}

EncoderModel EncoderModel::zeros_like() const {
  EncoderModel z;
  z.encoder_layers = encoder_layers;
  for (const auto& l : layers) z.layers.push_back({Matrix(l.out_dim(), l.in_dim()), std::vector<double>(l.out_dim(), 0.0)});
  return z;
}

EncoderModel init_model(const ModelDims& dims, std::uint64_t seed) {
  dims.validate();
  Rng rng(seed, "init");
  EncoderModel model;
  auto add = [&](std::size_t in, std::size_t out) {
    const double bound = std::sqrt(6.0 / static_cast<double>(in));
    Layer layer{Matrix(out, in), std::vector<double>(out, 0.0)};
    for (double& w : layer.weight.data()) w = rng.uniform(-bound, bound);
    model.layers.push_back(std::move(layer));
  };
  for (std::size_t k = 0; k + 1 < dims.encoder.size(); ++k) add(dims.encoder[k], dims.encoder[k + 1]);
  model.encoder_layers = model.layers.size();
  for (std::size_t k = 0; k + 1 < dims.projection.size(); ++k) add(dims.projection[k], dims.projection[k + 1]);
  return model;
}

namespace {

void relu_inplace(Matrix& m) {
  for (double& v : m.data()) v = v > 0.0 ? v : 0.0;
}

}  // namespace

ForwardResult forward(const EncoderModel& model, const Matrix& x) {
  for (double v : x.data())
    if (!std::isfinite(v)) fail(ErrorKind::kNumeric, "non-finite model input");
  ForwardResult out;
  const std::size_t last = model.layers.size() - 1;
  Matrix a = x;
  for (std::size_t k = 0; k <= last; ++k) {
    Matrix z = linear_forward(model.layers[k], a);
    out.cache.inputs.push_back(std::move(a));
    out.cache.pre.push_back(z);
    if (k != last) relu_inplace(z);
    if (k + 1 == model.encoder_layers) out.encoder_features = z;
    a = std::move(z);
  }
  out.cache.projection_raw = a;
  out.projections = kernels::normalize_rows(a, &out.cache.norms);
  return out;
}

Matrix encode(const EncoderModel& model, const Matrix& x) {
  Matrix a = x;
  for (std::size_t k = 0; k < model.encoder_layers; ++k) {
    a = linear_forward(model.layers[k], a);
    relu_inplace(a);
  }
  return a;
}

Gradients backward(const EncoderModel& model, const ForwardCache& cache, const Matrix& grad_projections) {
  if (cache.inputs.size() != model.layers.size() || !grad_projections.same_shape(cache.projection_raw))
    fail(ErrorKind::kStructural, "backward cache does not match model or upstream gradient");
  Matrix projections = kernels::normalize_rows(cache.projection_raw);
  Matrix g = kernels::normalize_rows_backward(projections, cache.norms, grad_projections);
  Gradients grads = model.zeros_like();
  const std::size_t last = model.layers.size() - 1;
  for (std::size_t step = 0; step <= last; ++step) {
    const std::size_t k = last - step;
    if (k != last) {
      const auto& pre = cache.pre[k].data();
      for (std::size_t e = 0; e < pre.size(); ++e)
        if (!(pre[e] > 0.0)) g.data()[e] = 0.0;
    }
    LayerGrad lg = linear_backward(model.layers[k], cache.inputs[k], g);
    grads.layers[k].weight = std::move(lg.weight);
    grads.layers[k].bias = std::move(lg.bias);
    g = std::move(lg.input);
  }
  return grads;
}

OptimizerState make_optimizer(const EncoderModel& model, double momentum, double base_lr) {
  if (!(momentum >= 0.0 && momentum < 1.0)) fail(ErrorKind::kConfiguration, "momentum must lie in [0, 1)");
  return OptimizerState{model.zeros_like(), momentum, 0, base_lr};
}

void sgd_step(EncoderModel& params, const Gradients& grads, OptimizerState& state, double lr) {
  if (params.layers.size() != grads.layers.size() || params.layers.size() != state.momentum_buffers.layers.size())
    fail(ErrorKind::kStructural, "sgd_step parameter/gradient layer count mismatch");
  for (std::size_t k = 0; k < params.layers.size(); ++k) {
    auto step = [&](std::vector<double>& w, const std::vector<double>& g, std::vector<double>& v) {
      if (w.size() != g.size() || w.size() != v.size()) fail(ErrorKind::kStructural, "sgd_step tensor shape mismatch");
      for (std::size_t e = 0; e < w.size(); ++e) {
        v[e] = state.momentum * v[e] + g[e];
        w[e] -= lr * v[e];
      }
    };
    step(params.layers[k].weight.data(), grads.layers[k].weight.data(), state.momentum_buffers.layers[k].weight.data());
    step(params.layers[k].bias, grads.layers[k].bias, state.momentum_buffers.layers[k].bias);
  }
}

void TrainConfig::validate() const {
  if (epochs < 1) fail(ErrorKind::kConfiguration, "epochs must be >= 1");
  if (!(base_lr > 0.0)) fail(ErrorKind::kConfiguration, "base_lr must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) fail(ErrorKind::kConfiguration, "momentum must lie in [0, 1)");
  if (!(lr_decay_factor > 0.0)) fail(ErrorKind::kConfiguration, "lr_decay_factor must be positive");
  if (!(aug_sigma >= 0.0)) fail(ErrorKind::kConfiguration, "aug_sigma must be non-negative");
  if (loss == LossKind::kSimCLR && sampler.views_per_sample != 2)
    fail(ErrorKind::kConfiguration, "simclr needs exactly two views per sample");
  loss_cfg.validate();
  dims.validate();
}

double lr_at_epoch(const TrainConfig& cfg, std::size_t epoch) {
  if (cfg.lr_decay_every == 0) return cfg.base_lr;
  return cfg.base_lr * std::pow(cfg.lr_decay_factor, static_cast<double>(epoch / cfg.lr_decay_every));
}

LossOutput evaluate_loss(LossKind kind, const Matrix& projections, std::span<const LabelPath> rows,
                         const LossConfig& cfg) {
  switch (kind) {
    case LossKind::kHiMulCon: return himulcon(projections, rows, cfg);
    case LossKind::kHiConE: return hicone(projections, rows, cfg);
    case LossKind::kHiMulConE: return himulcone(projections, rows, cfg);
    case LossKind::kSupCon: {
      // Single-level baseline: only the category label is used.
      std::vector<std::uint64_t> classes;
      for (const auto& r : rows) classes.push_back(r.labels.front());
      return supcon(projections, classes, cfg.temperature);
    }
    case LossKind::kSimCLR: {
      std::unordered_map<std::uint64_t, std::size_t> first;
      std::vector<std::size_t> partner(rows.size(), rows.size());
      for (std::size_t i = 0; i < rows.size(); ++i) {
        auto [it, inserted] = first.emplace(rows[i].sample_id, i);
        if (!inserted) {
          if (partner[it->second] != rows.size()) fail(ErrorKind::kPairing, "sample has more than two views");
          partner[i] = it->second;
          partner[it->second] = i;
        }
      }
      return simclr(projections, partner, cfg.temperature);
    }
  }
  fail(ErrorKind::kConfiguration, "unknown loss kind");
}

TrainResult train(const Matrix& features, std::span<const LabelPath> paths, const HierarchyTree& tree,
                  const TrainConfig& cfg, const BatchObserver& observer) {
  cfg.validate();
  if (features.rows() != paths.size()) fail(ErrorKind::kStructural, "features and paths differ in row count");
  if (features.cols() != cfg.dims.encoder.front())
    fail(ErrorKind::kConfiguration, "input_dim " + std::to_string(features.cols()) + " differs from encoder input " +
                                        std::to_string(cfg.dims.encoder.front()));
  const std::size_t levels = common_level_count(paths);
  cfg.sampler.validate(levels);

  TrainResult result;
  result.model = init_model(cfg.dims, cfg.seed);
  OptimizerState opt = make_optimizer(result.model, cfg.momentum, cfg.base_lr);
  Rng aug_rng(cfg.seed, "augment");
  const std::size_t views = cfg.sampler.views_per_sample;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    opt.epoch = epoch;
    SamplerConfig scfg = cfg.sampler;
    scfg.seed = cfg.sampler.seed ^ (0x9e3779b97f4a7c15ULL * (epoch + 1));
    const EpochPlan plan = plan_epoch(paths, tree, scfg);
    const double lr = lr_at_epoch(cfg, epoch);

    EpochLog entry;
    entry.epoch = epoch;
    entry.lr = lr;
    double loss_sum = 0.0;
    for (const auto& batch : plan.batches) {
      Matrix x(batch.size() * views, features.cols());
      std::vector<LabelPath> rows;
      rows.reserve(batch.size() * views);
      for (std::size_t k = 0; k < batch.size(); ++k) {
        for (std::size_t v = 0; v < views; ++v) {
          const auto aug = augment(features.row(batch[k]), cfg.aug_sigma, aug_rng);
          std::copy(aug.begin(), aug.end(), x.row(k * views + v).begin());
          rows.push_back(paths[batch[k]]);
        }
      }
      ForwardResult fwd = forward(result.model, x);
      LossOutput out = evaluate_loss(cfg.loss, fwd.projections, rows, cfg.loss_cfg);
      if (!std::isfinite(out.total))
        fail(ErrorKind::kNumeric, "non-finite loss at epoch " + std::to_string(epoch));
      if (cfg.loss == LossKind::kSupCon || cfg.loss == LossKind::kSimCLR) {
        entry.violations += count_loss_violations(raw_losses(hierarchy_pair_losses(fwd.projections, rows, cfg.loss_cfg)));
      } else {
        entry.violations += out.violations;
        if (cfg.loss != LossKind::kHiMulCon && !clamp_monotone(out.per_level_pair_losses)) ++entry.clamp_failures;
      }
      if (observer) observer(epoch, out);
      const Gradients grads = backward(result.model, fwd.cache, out.gradient);
      sgd_step(result.model, grads, opt, lr);
      loss_sum += out.total;
      ++entry.batches;
    }
    entry.loss = entry.batches > 0 ? loss_sum / static_cast<double>(entry.batches) : 0.0;
    entry.violation_rate = entry.violations.rate();
    result.log.push_back(entry);
  }
  return result;
}

double cross_entropy(std::span<const double> logits, std::size_t target) {
  if (target >= logits.size()) fail(ErrorKind::kRange, "target class out of range");
  const double peak = *std::max_element(logits.begin(), logits.end());
  double acc = 0.0;
  for (double z : logits) acc += std::exp(z - peak);
  return peak + std::log(acc) - logits[target];
}

ProbeResult train_linear_probe(const Matrix& train_embeddings, std::span<const std::uint64_t> train_labels,
                               const Matrix& test_embeddings, std::span<const std::uint64_t> test_labels,
                               const ProbeConfig& cfg) {
  if (train_embeddings.rows() != train_labels.size() || test_embeddings.rows() != test_labels.size())
    fail(ErrorKind::kStructural, "embeddings and labels differ in row count");
  if (train_embeddings.cols() != test_embeddings.cols()) fail(ErrorKind::kStructural, "train/test dims differ");
  if (test_embeddings.rows() == 0) fail(ErrorKind::kEmptyInput, "no held-out rows");

  ProbeResult result;
  std::map<std::uint64_t, std::size_t> counts;
  for (auto c : train_labels) ++counts[c];
  if (counts.size() < 2) fail(ErrorKind::kDegenerateTask, "linear probe needs at least two classes");
  std::map<std::uint64_t, std::size_t> index_of;
  for (const auto& [c, n] : counts) {
    index_of.emplace(c, result.classes.size());
    result.classes.push_back(c);
  }

  const std::size_t dim = train_embeddings.cols();
  const std::size_t n = train_embeddings.rows();
  result.mean.assign(dim, 0.0);
  result.scale.assign(dim, 1.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < dim; ++k) result.mean[k] += train_embeddings(i, k) / static_cast<double>(n);
  for (std::size_t k = 0; k < dim; ++k) {
    double var = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double d = train_embeddings(i, k) - result.mean[k];
      var += d * d / static_cast<double>(n);
    }
    result.scale[k] = var > 1e-24 ? 1.0 / std::sqrt(var) : 1.0;
  }
  auto standardize = [&](const Matrix& m) {
    Matrix out(m.rows(), dim);
    for (std::size_t i = 0; i < m.rows(); ++i)
      for (std::size_t k = 0; k < dim; ++k) out(i, k) = (m(i, k) - result.mean[k]) * result.scale[k];
    return out;
  };
  const Matrix train_x = standardize(train_embeddings);
  const Matrix test_x = standardize(test_embeddings);

  EncoderModel params;
  params.encoder_layers = 1;
  params.layers.push_back({Matrix(result.classes.size(), dim), std::vector<double>(result.classes.size(), 0.0)});
  OptimizerState opt = make_optimizer(params, cfg.momentum, cfg.lr);
  Rng rng(cfg.seed, "probe");
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  const std::size_t batch = std::max<std::size_t>(1, cfg.batch_size);

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(std::span<std::size_t>(order));
    for (std::size_t start = 0; start < n; start += batch) {
      const std::size_t end = std::min(n, start + batch);
      std::vector<std::size_t> rows(order.begin() + static_cast<std::ptrdiff_t>(start),
                                    order.begin() + static_cast<std::ptrdiff_t>(end));
      const Matrix xb = gather_rows(train_x, rows);
      Matrix logits = linear_forward(params.layers[0], xb);
      // softmax - onehot, averaged over the batch
      for (std::size_t r = 0; r < rows.size(); ++r) {
        auto z = logits.row(r);
        const double peak = *std::max_element(z.begin(), z.end());
        double acc = 0.0;
        for (double& v : z) {
          v = std::exp(v - peak);
          acc += v;
        }
        for (double& v : z) v /= acc * static_cast<double>(rows.size());
        z[index_of.at(train_labels[rows[r]])] -= 1.0 / static_cast<double>(rows.size());
      }
      LayerGrad g = linear_backward(params.layers[0], xb, logits);
      Gradients grads = params.zeros_like();
      grads.layers[0].weight = std::move(g.weight);
      grads.layers[0].bias = std::move(g.bias);
      sgd_step(params, grads, opt, cfg.lr);
    }
  }

  const Matrix test_logits = linear_forward(params.layers[0], test_x);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < test_x.rows(); ++i) {
    auto z = test_logits.row(i);
    const auto best = static_cast<std::size_t>(std::max_element(z.begin(), z.end()) - z.begin());
    if (result.classes[best] == test_labels[i]) ++correct;
  }
  result.accuracy = static_cast<double>(correct) / static_cast<double>(test_x.rows());
  const auto majority = std::max_element(counts.begin(), counts.end(),
                                         [](const auto& a, const auto& b) { return a.second < b.second; })->first;
  result.majority_baseline =
      static_cast<double>(std::count(test_labels.begin(), test_labels.end(), majority)) /
      static_cast<double>(test_labels.size());
  result.classifier = std::move(params.layers[0]);
  return result;
}

namespace {

void put_u32(std::string& out, std::uint32_t v) {
  for (int b = 0; b < 4; ++b) out.push_back(static_cast<char>((v >> (8 * b)) & 0xffu));
}

void put_f64(std::string& out, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  for (int b = 0; b < 8; ++b) out.push_back(static_cast<char>((bits >> (8 * b)) & 0xffu));
}

class Reader {
 public:
  Reader(std::string_view bytes, std::size_t offset) : bytes_(bytes), offset_(offset) {}
  std::uint64_t take(std::size_t width, const char* what) {
    if (offset_ + width > bytes_.size())
      fail(ErrorKind::kFormat, std::string("truncated ") + what + " at offset " + std::to_string(offset_));
    std::uint64_t v = 0;
    for (std::size_t b = 0; b < width; ++b)
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[offset_ + b])) << (8 * b);
    offset_ += width;
    return v;
  }
  std::size_t offset() const { return offset_; }
  std::size_t size() const { return bytes_.size(); }

 private:
  std::string_view bytes_;
  std::size_t offset_;
};

}  // namespace

std::string encode_checkpoint(const EncoderModel& model) {
  std::string out = "HCM1";
  put_u32(out, static_cast<std::uint32_t>(model.layers.size()));
  for (const auto& l : model.layers) {
    put_u32(out, static_cast<std::uint32_t>(l.out_dim()));
    put_u32(out, static_cast<std::uint32_t>(l.in_dim()));
  }
  for (const auto& l : model.layers) {
    for (double v : l.weight.data()) put_f64(out, v);
    for (double v : l.bias) put_f64(out, v);
  }
  return out;
}

EncoderModel decode_checkpoint(std::string_view bytes, std::size_t encoder_layers) {
  if (bytes.size() < 4 || bytes.substr(0, 4) != "HCM1") fail(ErrorKind::kFormat, "bad magic at offset 0");
  Reader r(bytes, 4);
  const auto count = static_cast<std::size_t>(r.take(4, "layer count"));
  if (count == 0 || encoder_layers == 0 || encoder_layers >= count)
    fail(ErrorKind::kFormat, "checkpoint has " + std::to_string(count) + " layers; cannot split at " +
                                 std::to_string(encoder_layers));
  EncoderModel model;
  model.encoder_layers = encoder_layers;
  for (std::size_t k = 0; k < count; ++k) {
    const auto rows = static_cast<std::size_t>(r.take(4, "layer rows"));
    const auto cols = static_cast<std::size_t>(r.take(4, "layer cols"));
    if (k > 0 && cols != model.layers.back().out_dim())
      fail(ErrorKind::kFormat, "layer " + std::to_string(k) + " input width does not chain at offset " +
                                   std::to_string(r.offset() - 8));
    model.layers.push_back({Matrix(rows, cols), std::vector<double>(rows, 0.0)});
  }
  for (auto& l : model.layers) {
    for (double& v : l.weight.data()) v = std::bit_cast<double>(r.take(8, "weights"));
    for (double& v : l.bias) v = std::bit_cast<double>(r.take(8, "biases"));
  }
  if (r.offset() != r.size()) fail(ErrorKind::kFormat, "trailing bytes at offset " + std::to_string(r.offset()));
  return model;
}

void write_checkpoint(const std::filesystem::path& path, const EncoderModel& model) {
  io::write_file_atomic(path, encode_checkpoint(model));
}

EncoderModel read_checkpoint(const std::filesystem::path& path, std::size_t encoder_layers) {
  return decode_checkpoint(io::read_file(path), encoder_layers);
}

}  // namespace hicle
