#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "hicle/data.hpp"
#include "hicle/model.hpp"

namespace hicle::cli {

// Exit codes shared by every subcommand.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitIo = 2;
inline constexpr int kExitNumeric = 3;

// Flat union of every configurable value. Keys mirror the field names.
struct RunConfig {
  std::uint64_t seed = 0;
  std::string output_dir = "out";

  SyntheticSpec synthetic;
  double unseen_category_fraction = 0.25;
  SplitFractions split;

  TrainConfig train;

  ProbeConfig probe;
  std::size_t probe_level = 0;
  std::vector<std::size_t> ks{1, 5, 10, 20};
  std::size_t violation_comparisons = 10000;

  // Pushes the global seed into every sub-config.
  void apply_seed(std::uint64_t s);
  void validate() const;
};

RunConfig default_run_config();
// Strict: unknown keys and wrongly typed values are configuration errors.
RunConfig parse_run_config(const nlohmann::json& j);
RunConfig load_run_config(const std::filesystem::path& path);
nlohmann::json to_json(const RunConfig& cfg);

// Verbosity from HICLE_LOG: 0 quiet, 1 info (default), 2 debug.
int log_level();

struct Streams {
  std::ostream& out;
  std::ostream& err;
};

int cmd_gen_data(const RunConfig& cfg, const std::filesystem::path& out_dir, Streams io);
// Trains on the seen/train rows. Writes the checkpoint, <model>.json (config
// echo) and <model>.log.jsonl (one line per epoch).
int cmd_train(const RunConfig& cfg, const std::filesystem::path& data_dir, const std::filesystem::path& out_model,
              Streams io);
// Writes encoder.hcb and projection.hcb for every dataset row.
int cmd_embed(const std::filesystem::path& model_path, const std::filesystem::path& data_dir,
              const std::filesystem::path& out_dir, Streams io);

enum class EvalKind { kRetrieval, kNmi, kViolations, kLinearProbe };
std::optional<EvalKind> parse_eval_kind(const std::string& name);

struct EvalInputs {
  std::filesystem::path data_dir;
  std::filesystem::path embeddings;          // projection.hcb, or encoder.hcb for the probe
  std::optional<Side> side = Side::kSeen;    // nullopt: both sides
  std::optional<std::filesystem::path> out;  // report file; stdout always gets it too
};

int cmd_eval(EvalKind kind, const RunConfig& cfg, const EvalInputs& in, Streams io);
int cmd_gradcheck(std::uint64_t seed, bool corrupt, Streams io);

}  // namespace hicle::cli
