#include "hicle/cli.hpp"

#include <cmath>
#include <cstdlib>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>

#include "hicle/error.hpp"
#include "hicle/eval.hpp"
#include "hicle/gradcheck.hpp"
#include "hicle/io.hpp"

namespace hicle::cli {

using nlohmann::json;

void RunConfig::apply_seed(std::uint64_t s) {
  seed = s;
  synthetic.seed = s;
  train.seed = s;
  train.sampler.seed = s;
  probe.seed = s;
}

void RunConfig::validate() const {
  synthetic.validate();
  train.validate();
  train.sampler.validate(synthetic.counts.size());
  if (!(unseen_category_fraction > 0.0 && unseen_category_fraction < 1.0))
    fail(ErrorKind::kConfiguration, "unseen_category_fraction must lie in (0, 1)");
  if (train.dims.encoder.front() != synthetic.input_dim)
    fail(ErrorKind::kConfiguration, "encoder_dims must start at input_dim");
  if (probe_level >= synthetic.counts.size()) fail(ErrorKind::kConfiguration, "probe_level beyond label depth");
  for (auto k : ks)
    if (k == 0) fail(ErrorKind::kConfiguration, "ks entries must be positive");
}

RunConfig default_run_config() {
  RunConfig cfg;
  cfg.apply_seed(0);
  return cfg;
}

namespace {

template <typename T>
T get_as(const json& v, const std::string& key) {
  try {
    return v.get<T>();
  } catch (const json::exception&) {
    fail(ErrorKind::kConfiguration, "config key '" + key + "' has the wrong type");
  }
}

std::uint64_t get_uint(const json& v, const std::string& key) {
  const bool ok = v.is_number_unsigned() || (v.is_number_integer() && v.get<std::int64_t>() >= 0);
  if (!ok) fail(ErrorKind::kConfiguration, "config key '" + key + "' must be a non-negative integer");
  return v.get<std::uint64_t>();
}

std::size_t get_size(const json& v, const std::string& key) { return static_cast<std::size_t>(get_uint(v, key)); }

double get_real(const json& v, const std::string& key) {
  if (!v.is_number()) fail(ErrorKind::kConfiguration, "config key '" + key + "' must be a number");
  return v.get<double>();
}

std::vector<std::size_t> get_sizes(const json& v, const std::string& key) {
  if (!v.is_array()) fail(ErrorKind::kConfiguration, "config key '" + key + "' must be an array");
  std::vector<std::size_t> out;
  for (const auto& e : v) out.push_back(get_size(e, key));
  return out;
}

std::vector<double> get_reals(const json& v, const std::string& key) {
  if (!v.is_array()) fail(ErrorKind::kConfiguration, "config key '" + key + "' must be an array");
  std::vector<double> out;
  for (const auto& e : v) out.push_back(get_real(e, key));
  return out;
}

PositivesMode parse_mode(const std::string& s) {
  if (s == "cumulative") return PositivesMode::kCumulative;
  if (s == "exact_lca") return PositivesMode::kExactLca;
  fail(ErrorKind::kConfiguration, "unknown positives_mode '" + s + "'");
}

const char* mode_name(PositivesMode m) { return m == PositivesMode::kCumulative ? "cumulative" : "exact_lca"; }

using Setter = std::function<void(RunConfig&, const json&, const std::string&)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"seed", [](RunConfig& c, const json& v, const std::string& k) { c.apply_seed(get_uint(v, k)); }},
      {"output_dir", [](RunConfig& c, const json& v, const std::string& k) { c.output_dir = get_as<std::string>(v, k); }},
      {"counts", [](RunConfig& c, const json& v, const std::string& k) { c.synthetic.counts = get_sizes(v, k); }},
      {"samples_per_instance",
       [](RunConfig& c, const json& v, const std::string& k) { c.synthetic.samples_per_instance = get_size(v, k); }},
      {"input_dim", [](RunConfig& c, const json& v, const std::string& k) { c.synthetic.input_dim = get_size(v, k); }},
      {"level_scales", [](RunConfig& c, const json& v, const std::string& k) { c.synthetic.level_scales = get_reals(v, k); }},
      {"noise_scale", [](RunConfig& c, const json& v, const std::string& k) { c.synthetic.noise_scale = get_real(v, k); }},
      {"skew_ratio", [](RunConfig& c, const json& v, const std::string& k) { c.synthetic.skew_ratio = get_real(v, k); }},
      {"unseen_category_fraction",
       [](RunConfig& c, const json& v, const std::string& k) { c.unseen_category_fraction = get_real(v, k); }},
      {"val_fraction", [](RunConfig& c, const json& v, const std::string& k) { c.split.val = get_real(v, k); }},
      {"test_fraction", [](RunConfig& c, const json& v, const std::string& k) { c.split.test = get_real(v, k); }},
      {"batch_size", [](RunConfig& c, const json& v, const std::string& k) { c.train.sampler.batch_size = get_size(v, k); }},
      {"sampler",
       [](RunConfig& c, const json& v, const std::string& k) { c.train.sampler.strategy = parse_sampler(get_as<std::string>(v, k)); }},
      {"views_per_sample",
       [](RunConfig& c, const json& v, const std::string& k) { c.train.sampler.views_per_sample = get_size(v, k); }},
      {"loss", [](RunConfig& c, const json& v, const std::string& k) { c.train.loss = parse_loss_kind(get_as<std::string>(v, k)); }},
      {"temperature", [](RunConfig& c, const json& v, const std::string& k) { c.train.loss_cfg.temperature = get_real(v, k); }},
      {"lambda_schedule",
       [](RunConfig& c, const json& v, const std::string& k) {
         c.train.loss_cfg.lambda_schedule = parse_schedule(get_as<std::string>(v, k));
       }},
      {"lambda_scale",
       [](RunConfig& c, const json& v, const std::string& k) { c.train.loss_cfg.lambda_scale = get_real(v, k); }},
      {"positives_mode",
       [](RunConfig& c, const json& v, const std::string& k) {
         c.train.loss_cfg.positives_mode = parse_mode(get_as<std::string>(v, k));
       }},
      {"clamp_floor_stop_gradient",
       [](RunConfig& c, const json& v, const std::string& k) { c.train.loss_cfg.clamp_floor_stop_gradient = get_as<bool>(v, k); }},
      {"skip_empty_levels",
       [](RunConfig& c, const json& v, const std::string& k) { c.train.loss_cfg.skip_empty_levels = get_as<bool>(v, k); }},
      {"instance_level",
       [](RunConfig& c, const json& v, const std::string& k) { c.train.loss_cfg.instance_level = get_as<bool>(v, k); }},
      {"epochs", [](RunConfig& c, const json& v, const std::string& k) { c.train.epochs = get_size(v, k); }},
      {"base_lr", [](RunConfig& c, const json& v, const std::string& k) { c.train.base_lr = get_real(v, k); }},
      {"lr_decay_factor", [](RunConfig& c, const json& v, const std::string& k) { c.train.lr_decay_factor = get_real(v, k); }},
      {"lr_decay_every", [](RunConfig& c, const json& v, const std::string& k) { c.train.lr_decay_every = get_size(v, k); }},
      {"momentum", [](RunConfig& c, const json& v, const std::string& k) { c.train.momentum = get_real(v, k); }},
      {"aug_sigma", [](RunConfig& c, const json& v, const std::string& k) { c.train.aug_sigma = get_real(v, k); }},
      {"encoder_dims", [](RunConfig& c, const json& v, const std::string& k) { c.train.dims.encoder = get_sizes(v, k); }},
      {"projection_dims",
       [](RunConfig& c, const json& v, const std::string& k) { c.train.dims.projection = get_sizes(v, k); }},
      {"probe_epochs", [](RunConfig& c, const json& v, const std::string& k) { c.probe.epochs = get_size(v, k); }},
      {"probe_lr", [](RunConfig& c, const json& v, const std::string& k) { c.probe.lr = get_real(v, k); }},
      {"probe_batch_size", [](RunConfig& c, const json& v, const std::string& k) { c.probe.batch_size = get_size(v, k); }},
      {"probe_level", [](RunConfig& c, const json& v, const std::string& k) { c.probe_level = get_size(v, k); }},
      {"ks", [](RunConfig& c, const json& v, const std::string& k) { c.ks = get_sizes(v, k); }},
      {"violation_comparisons",
       [](RunConfig& c, const json& v, const std::string& k) { c.violation_comparisons = get_size(v, k); }},
  };
  return table;
}

}  // namespace

RunConfig parse_run_config(const json& j) {
  if (!j.is_object()) fail(ErrorKind::kConfiguration, "config must be a JSON object");
  RunConfig cfg = default_run_config();
  // The seed fans out into sub-configs, so it goes first.
  if (j.contains("seed")) setters().at("seed")(cfg, j.at("seed"), "seed");
  for (const auto& [key, value] : j.items()) {
    auto it = setters().find(key);
    if (it == setters().end()) fail(ErrorKind::kConfiguration, "unknown config key '" + key + "'");
    if (key != "seed") it->second(cfg, value, key);
  }
  cfg.validate();
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  json j;
  try {
    j = json::parse(io::read_file(path));
  } catch (const json::exception& e) {
    fail(ErrorKind::kConfiguration, path.string() + ": " + e.what());
  }
  return parse_run_config(j);
}

json to_json(const RunConfig& c) {
  json j;
  j["seed"] = c.seed;
  j["output_dir"] = c.output_dir;
  j["counts"] = c.synthetic.counts;
  j["samples_per_instance"] = c.synthetic.samples_per_instance;
  j["input_dim"] = c.synthetic.input_dim;
  j["level_scales"] = c.synthetic.level_scales;
  j["noise_scale"] = c.synthetic.noise_scale;
  j["skew_ratio"] = c.synthetic.skew_ratio;
  j["unseen_category_fraction"] = c.unseen_category_fraction;
  j["val_fraction"] = c.split.val;
  j["test_fraction"] = c.split.test;
  j["batch_size"] = c.train.sampler.batch_size;
  j["sampler"] = sampler_name(c.train.sampler.strategy);
  j["views_per_sample"] = c.train.sampler.views_per_sample;
  j["loss"] = loss_kind_name(c.train.loss);
  j["temperature"] = c.train.loss_cfg.temperature;
  j["lambda_schedule"] = schedule_name(c.train.loss_cfg.lambda_schedule);
  j["lambda_scale"] = c.train.loss_cfg.lambda_scale;
  j["positives_mode"] = mode_name(c.train.loss_cfg.positives_mode);
  j["clamp_floor_stop_gradient"] = c.train.loss_cfg.clamp_floor_stop_gradient;
  j["skip_empty_levels"] = c.train.loss_cfg.skip_empty_levels;
  j["instance_level"] = c.train.loss_cfg.instance_level;
  j["epochs"] = c.train.epochs;
  j["base_lr"] = c.train.base_lr;
  j["lr_decay_factor"] = c.train.lr_decay_factor;
  j["lr_decay_every"] = c.train.lr_decay_every;
  j["momentum"] = c.train.momentum;
  j["aug_sigma"] = c.train.aug_sigma;
  j["encoder_dims"] = c.train.dims.encoder;
  j["projection_dims"] = c.train.dims.projection;
  j["probe_epochs"] = c.probe.epochs;
  j["probe_lr"] = c.probe.lr;
  j["probe_batch_size"] = c.probe.batch_size;
  j["probe_level"] = c.probe_level;
  j["ks"] = c.ks;
  j["violation_comparisons"] = c.violation_comparisons;
  return j;
}

int log_level() {
  const char* env = std::getenv("HICLE_LOG");
  if (env == nullptr || *env == '\0') return 1;
  const std::string v(env);
  if (v == "0" || v == "quiet" || v == "off") return 0;
  if (v == "2" || v == "debug") return 2;
  return 1;
}

namespace {

int exit_code_for(const Error& e) {
  switch (e.kind()) {
    case ErrorKind::kIo:
    case ErrorKind::kFormat: return kExitIo;
    case ErrorKind::kNumeric: return kExitNumeric;
    default: return kExitUsage;
  }
}

template <typename Fn>
int guarded(Streams io, Fn&& fn) {
  try {
    return fn();
  } catch (const Error& e) {
    io.err << "hicle: " << e.what() << '\n';
    return exit_code_for(e);
  } catch (const std::filesystem::filesystem_error& e) {
    io.err << "hicle: " << e.what() << '\n';
    return kExitIo;
  }
}

std::filesystem::path sidecar(const std::filesystem::path& model) {
  auto p = model;
  p += ".json";
  return p;
}

std::filesystem::path log_path(const std::filesystem::path& model) {
  auto p = model;
  p += ".log.jsonl";
  return p;
}

void ensure_parent(const std::filesystem::path& p) {
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
}

json optional_number(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

}  // namespace

int cmd_gen_data(const RunConfig& cfg, const std::filesystem::path& out_dir, Streams io) {
  return guarded(io, [&] {
    cfg.validate();
    Dataset ds = generate_synthetic(cfg.synthetic);
    ds = split_seen_unseen(std::move(ds), cfg.unseen_category_fraction, cfg.seed, cfg.split);
    write_dataset(out_dir, ds);
    if (log_level() >= 1)
      io.err << "hicle: wrote " << ds.size() << " rows x " << ds.features.cols() << " to " << out_dir.string() << '\n';
    return kExitOk;
  });
}

int cmd_train(const RunConfig& cfg, const std::filesystem::path& data_dir, const std::filesystem::path& out_model,
              Streams io) {
  return guarded(io, [&] {
    cfg.validate();
    const Dataset ds = read_dataset(data_dir);
    const auto rows = ds.select(Side::kSeen, Split::kTrain);
    if (rows.empty()) fail(ErrorKind::kEmptyInput, "no seen/train rows in " + data_dir.string());
    const Dataset train_set = ds.subset(rows);
    const HierarchyTree tree = build_tree(train_set.paths);

    std::ostringstream log;
    TrainResult result;
    try {
      result = train(train_set.features, train_set.paths, tree, cfg.train);
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::kNumeric) io.err << "hicle: training diverged: " << e.what() << '\n';
      throw;
    }
    for (const auto& entry : result.log) {
      json line;
      line["epoch"] = entry.epoch;
      line["loss"] = entry.loss;
      line["violation_rate"] = optional_number(entry.violation_rate);
      line["lr"] = entry.lr;
      log << line.dump() << '\n';
      if (log_level() >= 2)
        io.err << "epoch " << entry.epoch << " loss " << entry.loss << " lr " << entry.lr << '\n';
    }
    json meta = to_json(cfg);
    meta["encoder_layers"] = result.model.encoder_layers;
    ensure_parent(out_model);
    write_checkpoint(out_model, result.model);
    io::write_file_atomic(sidecar(out_model), meta.dump(1) + "\n");
    io::write_file_atomic(log_path(out_model), log.str());
    if (log_level() >= 1)
      io.err << "hicle: trained " << loss_kind_name(cfg.train.loss) << " for " << cfg.train.epochs
             << " epochs, final loss " << result.log.back().loss << '\n';
    return kExitOk;
  });
}

int cmd_embed(const std::filesystem::path& model_path, const std::filesystem::path& data_dir,
              const std::filesystem::path& out_dir, Streams io) {
  return guarded(io, [&] {
    json meta;
    try {
      meta = json::parse(io::read_file(sidecar(model_path)));
    } catch (const json::exception& e) {
      fail(ErrorKind::kFormat, sidecar(model_path).string() + ": " + e.what());
    }
    const EncoderModel model = read_checkpoint(model_path, meta.at("encoder_layers").get<std::size_t>());
    const Dataset ds = read_dataset(data_dir);
    if (ds.features.cols() != model.input_dim())
      fail(ErrorKind::kFormat, "dimension mismatch: data has " + std::to_string(ds.features.cols()) +
                                   " columns, model expects " + std::to_string(model.input_dim()));
    const ForwardResult fwd = forward(model, ds.features);
    std::filesystem::create_directories(out_dir);
    write_hcb(out_dir / "encoder.hcb", fwd.encoder_features);
    write_hcb(out_dir / "projection.hcb", fwd.projections);
    if (log_level() >= 1) io.err << "hicle: embedded " << ds.size() << " rows into " << out_dir.string() << '\n';
    return kExitOk;
  });
}

std::optional<EvalKind> parse_eval_kind(const std::string& name) {
  if (name == "retrieval") return EvalKind::kRetrieval;
  if (name == "nmi") return EvalKind::kNmi;
  if (name == "violations") return EvalKind::kViolations;
  if (name == "linear-probe") return EvalKind::kLinearProbe;
  return std::nullopt;
}

int cmd_eval(EvalKind kind, const RunConfig& cfg, const EvalInputs& in, Streams io) {
  return guarded(io, [&] {
    const Dataset ds = read_dataset(in.data_dir);
    const Matrix emb = read_hcb(in.embeddings);
    if (emb.rows() != ds.size())
      fail(ErrorKind::kFormat, "embedding rows (" + std::to_string(emb.rows()) + ") differ from dataset rows (" +
                                   std::to_string(ds.size()) + ")");
    const auto finest = prefix_class_ids(ds.paths, ds.level_count - 1);
    auto pick = [&](const std::vector<std::size_t>& rows, const std::vector<std::uint64_t>& labels) {
      std::vector<std::uint64_t> out;
      for (auto r : rows) out.push_back(labels[r]);
      return out;
    };
    const auto test_rows = ds.select(in.side, Split::kTest);
    if (test_rows.empty()) fail(ErrorKind::kEmptyInput, "no test rows for the requested side");

    json report;
    auto warn = [&](const std::string& what) { io.err << "hicle: warning: " << what << '\n'; };
    switch (kind) {
      case EvalKind::kRetrieval: {
        std::vector<std::size_t> gallery_rows;
        for (auto r : ds.select(in.side, std::nullopt))
          if (ds.split[r] != Split::kTest) gallery_rows.push_back(r);
        const auto rep = topk_retrieval(gather_rows(emb, test_rows), gather_rows(emb, gallery_rows),
                                        pick(test_rows, finest), pick(gallery_rows, finest), cfg.ks);
        json topk = json::object();
        for (const auto& [k, acc] : rep.topk) topk[std::to_string(k)] = acc;
        report["topk"] = topk;
        if (rep.map_at_r) report["map_at_r"] = *rep.map_at_r;
        else warn("map_at_r undefined: no query has a same-class gallery item");
        report["excluded_queries"] = rep.excluded_queries;
        if (rep.k_clamped) warn("some k exceeded the gallery size and was clamped");
        break;
      }
      case EvalKind::kNmi: {
        const Dataset sub = ds.subset(test_rows);
        const auto rep = clustering_report(gather_rows(emb, test_rows), sub.paths, cfg.seed);
        json levels = json::object();
        for (std::size_t l = 0; l < rep.nmi_per_level.size(); ++l) {
          if (rep.nmi_per_level[l]) levels[std::to_string(l)] = *rep.nmi_per_level[l];
          else warn("nmi undefined at level " + std::to_string(l));
        }
        report["nmi_per_level"] = levels;
        break;
      }
      case EvalKind::kViolations: {
        const Dataset sub = ds.subset(test_rows);
        const auto rep = distance_violation_rate(gather_rows(emb, test_rows), sub.paths, cfg.violation_comparisons, cfg.seed);
        if (rep.violation_rate) report["violation_rate"] = *rep.violation_rate;
        else warn("violation rate undefined: only one LCA level present");
        report["comparisons"] = rep.comparisons;
        break;
      }
      case EvalKind::kLinearProbe: {
        const auto train_rows = ds.select(in.side, Split::kTrain);
        const auto labels = prefix_class_ids(ds.paths, cfg.probe_level);
        const auto rep = train_linear_probe(gather_rows(emb, train_rows), pick(train_rows, labels),
                                            gather_rows(emb, test_rows), pick(test_rows, labels), cfg.probe);
        report["accuracy"] = rep.accuracy;
        report["majority_baseline"] = rep.majority_baseline;
        break;
      }
    }
    const std::string text = report.dump(1);
    io.out << text << '\n';
    if (in.out) {
      ensure_parent(*in.out);
      io::write_file_atomic(*in.out, text + "\n");
    }
    return kExitOk;
  });
}

int cmd_gradcheck(std::uint64_t seed, bool corrupt, Streams io) {
  return guarded(io, [&] {
    const auto report = gradcheck::run(seed, 20, corrupt);
    json j;
    j["threshold"] = report.threshold;
    j["passed"] = report.passed();
    for (const auto& r : report.results) {
      j["max_rel_error"][r.name] = r.max_error;
      j["cases"][r.name] = r.cases;
      j["skipped"][r.name] = r.skipped;
    }
    io.out << j.dump(1) << '\n';
    return report.passed() ? kExitOk : kExitNumeric;
  });
}

}  // namespace hicle::cli
