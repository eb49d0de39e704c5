#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hicle/data.hpp"
#include "hicle/hierarchy.hpp"
#include "hicle/losses.hpp"
#include "hicle/matrix.hpp"
#include "hicle/sampling.hpp"

namespace hicle {

// Fully connected layer y = x W^T + b; weight is out x in.
struct Layer {
  Matrix weight;
  std::vector<double> bias;

  std::size_t in_dim() const noexcept { return weight.cols(); }
  std::size_t out_dim() const noexcept { return weight.rows(); }
};

struct LayerGrad {
  Matrix weight;
  std::vector<double> bias;
  Matrix input;
};

Matrix linear_forward(const Layer& layer, const Matrix& x);
LayerGrad linear_backward(const Layer& layer, const Matrix& x, const Matrix& upstream);

struct ModelDims {
  std::vector<std::size_t> encoder{32, 64, 64};
  std::vector<std::size_t> projection{64, 16};

  void validate() const;
};

// MLP encoder (ReLU after every layer) followed by a projection head (ReLU
// between its layers only) whose output rows are L2-normalized.
// Also reused as the parameter container for gradients and momentum.
struct EncoderModel {
  std::vector<Layer> layers;
  std::size_t encoder_layers = 0;

  std::size_t input_dim() const { return layers.front().in_dim(); }
  std::size_t encoder_dim() const { return layers[encoder_layers - 1].out_dim(); }
  std::size_t projection_dim() const { return layers.back().out_dim(); }
  std::size_t parameter_count() const;
  // Visits every parameter tensor in declaration order (W then b per layer).
  void for_each_tensor(const std::function<void(std::span<double>)>& fn);
  EncoderModel zeros_like() const;

  friend bool operator==(const EncoderModel&, const EncoderModel&);
};

bool operator==(const Layer& a, const Layer& b);

EncoderModel init_model(const ModelDims& dims, std::uint64_t seed);

struct ForwardCache {
  std::vector<Matrix> inputs;       // input to each layer
  std::vector<Matrix> pre;          // pre-activation output of each layer
  Matrix projection_raw;            // last layer output before normalization
  std::vector<double> norms;
};

struct ForwardResult {
  Matrix encoder_features;
  Matrix projections;  // unit rows
  ForwardCache cache;
};

ForwardResult forward(const EncoderModel& model, const Matrix& x);
Matrix encode(const EncoderModel& model, const Matrix& x);

using Gradients = EncoderModel;
Gradients backward(const EncoderModel& model, const ForwardCache& cache, const Matrix& grad_projections);

struct OptimizerState {
  EncoderModel momentum_buffers;
  double momentum = 0.9;
  std::size_t epoch = 0;
  double base_lr = 0.1;
};

OptimizerState make_optimizer(const EncoderModel& model, double momentum, double base_lr);
// Classical momentum: v <- mu v + g; w <- w - lr v.
void sgd_step(EncoderModel& params, const Gradients& grads, OptimizerState& state, double lr);

struct TrainConfig {
  LossKind loss = LossKind::kHiMulConE;
  LossConfig loss_cfg;
  SamplerConfig sampler;
  ModelDims dims;
  std::size_t epochs = 50;
  double base_lr = 0.1;
  double lr_decay_factor = 0.1;
  std::size_t lr_decay_every = 40;
  double momentum = 0.9;
  double aug_sigma = 0.05;
  std::uint64_t seed = 0;

  void validate() const;
};

double lr_at_epoch(const TrainConfig& cfg, std::size_t epoch);

struct EpochLog {
  std::size_t epoch = 0;
  double loss = 0.0;  // mean over batches
  std::optional<double> violation_rate;
  ViolationCount violations;
  double lr = 0.0;
  std::size_t batches = 0;
  std::size_t clamp_failures = 0;  // batches whose clamped losses broke level ordering
};

struct TrainResult {
  EncoderModel model;
  std::vector<EpochLog> log;
};

// Called after every batch with the loss output; lets callers assert
// per-batch properties.
using BatchObserver = std::function<void(std::size_t epoch, const LossOutput&)>;

// Trains on every row of the given features/paths.
TrainResult train(const Matrix& features, std::span<const LabelPath> paths, const HierarchyTree& tree,
                  const TrainConfig& cfg, const BatchObserver& observer = {});

// One batch of the training objective, exposed for gradient checks:
// returns the loss output for the given unit-norm projections.
LossOutput evaluate_loss(LossKind kind, const Matrix& projections, std::span<const LabelPath> rows,
                         const LossConfig& cfg);

struct ProbeConfig {
  std::size_t epochs = 40;
  double lr = 0.1;
  double momentum = 0.9;
  std::size_t batch_size = 64;
  std::uint64_t seed = 0;
};

struct ProbeResult {
  Layer classifier;
  std::vector<std::uint64_t> classes;  // class value per output unit
  std::vector<double> mean;            // standardization applied to inputs
  std::vector<double> scale;
  double accuracy = 0.0;               // top-1 on the held-out rows
  double majority_baseline = 0.0;      // share of the most frequent training class in the held-out rows
};

double cross_entropy(std::span<const double> logits, std::size_t target);

ProbeResult train_linear_probe(const Matrix& train_embeddings, std::span<const std::uint64_t> train_labels,
                               const Matrix& test_embeddings, std::span<const std::uint64_t> test_labels,
                               const ProbeConfig& cfg);

// "HCM1" checkpoint: magic, u32 LE layer count, (u32 rows, u32 cols) per
// layer, then f64 LE weights and biases layer by layer.
std::string encode_checkpoint(const EncoderModel& model);
EncoderModel decode_checkpoint(std::string_view bytes, std::size_t encoder_layers);
void write_checkpoint(const std::filesystem::path& path, const EncoderModel& model);
EncoderModel read_checkpoint(const std::filesystem::path& path, std::size_t encoder_layers);

}  // namespace hicle
