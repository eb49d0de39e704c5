#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"

#include "hicle/cli.hpp"
#include "hicle/error.hpp"
#include "hicle/kernels.hpp"

using namespace hicle;

int main(int argc, char** argv) {
  CLI::App app{"hicle: hierarchical contrastive embedding toolkit"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  std::optional<std::uint64_t> seed;
  int threads = 1;
  app.add_option("--config", config_path, "JSON run config (flat keys)")->check(CLI::ExistingFile);
  app.add_option("--seed", seed, "global seed, overrides the config");
  app.add_option("--threads", threads, "OpenMP threads for the parallel kernels")->check(CLI::PositiveNumber);

  std::string out;

  auto* gen = app.add_subcommand("gen-data", "generate a synthetic hierarchical dataset");
  gen->add_option("--out", out, "output directory")->required();

  std::string data_dir;
  std::optional<std::string> loss;
  auto* train = app.add_subcommand("train", "train the encoder on seen/train rows");
  train->add_option("--data", data_dir, "dataset directory")->required();
  train->add_option("--out", out, "checkpoint path")->required();
  train->add_option("--loss", loss, "himulcon | hicone | himulcone | supcon | simclr");

  std::string model_path;
  auto* embed = app.add_subcommand("embed", "export encoder and projection embeddings");
  embed->add_option("--model", model_path, "checkpoint path")->required();
  embed->add_option("--data", data_dir, "dataset directory")->required();
  embed->add_option("--out", out, "output directory")->required();

  std::string kind_name;
  std::string embeddings;
  std::string side_name = "seen";
  auto* eval = app.add_subcommand("eval", "evaluate embeddings");
  eval->add_option("kind", kind_name, "retrieval | nmi | violations | linear-probe")->required();
  eval->add_option("--data", data_dir, "dataset directory")->required();
  eval->add_option("--embeddings", embeddings, "HCB1 embedding file")->required();
  eval->add_option("--side", side_name, "seen | unseen | all")->check(CLI::IsMember({"seen", "unseen", "all"}));
  eval->add_option("--out", out, "also write the report here");

  bool corrupt = false;
  auto* grad = app.add_subcommand("gradcheck", "finite-difference check of every analytic gradient");
  grad->add_flag("--corrupt", corrupt, "perturb the analytic gradients (should fail)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? cli::kExitOk : cli::kExitUsage;
  }

  kernels::set_threads(threads);
  cli::Streams io{std::cout, std::cerr};

  cli::RunConfig cfg;
  try {
    cfg = config_path.empty() ? cli::default_run_config() : cli::load_run_config(config_path);
    if (seed) cfg.apply_seed(*seed);
    if (loss) cfg.train.loss = parse_loss_kind(*loss);
    cfg.validate();
  } catch (const Error& e) {
    std::cerr << "hicle: " << e.what() << '\n';
    return e.kind() == ErrorKind::kIo || e.kind() == ErrorKind::kFormat ? cli::kExitIo : cli::kExitUsage;
  }

  if (*gen) return cli::cmd_gen_data(cfg, out, io);
  if (*train) return cli::cmd_train(cfg, data_dir, out, io);
  if (*embed) return cli::cmd_embed(model_path, data_dir, out, io);
  if (*eval) {
    const auto kind = cli::parse_eval_kind(kind_name);
    if (!kind) {
      std::cerr << "hicle: unknown eval kind '" << kind_name << "'\n";
      return cli::kExitUsage;
    }
    cli::EvalInputs in{data_dir, embeddings, std::nullopt, std::nullopt};
    if (side_name == "seen") in.side = Side::kSeen;
    if (side_name == "unseen") in.side = Side::kUnseen;
    if (!out.empty()) in.out = out;
    return cli::cmd_eval(*kind, cfg, in, io);
  }
  if (*grad) return cli::cmd_gradcheck(cfg.seed, corrupt, io);
  return cli::kExitUsage;
}
