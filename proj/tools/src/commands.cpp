#include "audiomod/cli/commands.hpp"

#include <CLI11.hpp>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>

#include "audiomod/batching.hpp"
#include "audiomod/checkpoint.hpp"
#include "audiomod/cli/run_config.hpp"
#include "audiomod/manifest.hpp"
#include "audiomod/parallel.hpp"
#include "audiomod/synthetic.hpp"

namespace audiomod::cli {
namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;

struct ConfigArgs {
  std::string config;
  std::vector<std::string> sets;
  std::string manifest;
  std::string out;
  int threads = 0;
};

void add_config_args(CLI::App* cmd, ConfigArgs& a, bool with_out) {
  cmd->add_option("--config", a.config, "Flat key = value config file");
  cmd->add_option("--set", a.sets, "Override one key: --set key=value (repeatable)");
  cmd->add_option("--manifest", a.manifest, "Manifest path (data.manifest)");
  if (with_out) cmd->add_option("--out", a.out, "Run directory (run.out_dir)");
  cmd->add_option("--threads", a.threads, "Worker threads; falls back to AUDIOMOD_THREADS, then 1");
}

RunConfig load_config(const ConfigArgs& a) {
  std::vector<Override> ov;
  for (const auto& s : a.sets) ov.push_back(parse_override(s));
  if (!a.manifest.empty()) ov.emplace_back("data.manifest", a.manifest);
  if (!a.out.empty()) ov.emplace_back("run.out_dir", a.out);
  return a.config.empty() ? parse_config_text("", ov) : parse_config(a.config, ov);
}

data::Manifest load_manifest(const RunConfig& cfg) {
  if (cfg.manifest.empty()) throw ConfigKeyError("data.manifest", "required (--manifest or data.manifest)");
  data::Manifest m = data::read_manifest(cfg.manifest);
  m.validate();
  return m;
}

const fs::path& require_out_dir(const RunConfig& cfg) {
  if (cfg.out_dir.empty()) throw ConfigKeyError("run.out_dir", "required (--out or run.out_dir)");
  return cfg.out_dir;
}

void report_item_errors(const std::vector<data::ItemError>& errors, std::ostream& err) {
  for (const auto& e : errors) err << json{{"item_error", e.id}, {"message", e.message}}.dump() << '\n';
}

std::string format_double(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  f << text;
  if (!f) throw IoError("cannot write " + path.string());
}

model::Model<float> load_model(const model::ModelConfig& mc, std::uint64_t seed, const fs::path& ckpt) {
  model::Model<float> m(mc, seed);
  auto state = m.state();
  nn::load_checkpoint(ckpt, state);
  return m;
}

// --- Commands ---------------------------------------------------------------

int cmd_lr_preview(const RunConfig& cfg, std::ostream& out) {
  for (int e = 0; e < cfg.train.epochs; ++e)
    out << e << ' ' << format_double(training::lr_at(e, cfg.train.schedule)) << '\n';
  return 0;
}

struct GenArgs {
  std::string out;
  std::uint64_t seed = 0;
  int n_per_class = 100;
  std::vector<int> per_class;
  double min_duration = 2.0;
  double max_duration = 10.0;
};

int cmd_gen_data(const GenArgs& a, std::ostream& out) {
  if (a.out.empty()) throw ConfigKeyError("--out", "required");
  data::Manifest m;
  if (!a.per_class.empty()) {
    if (a.per_class.size() != 3) throw ConfigKeyError("--per-class", "needs train,val,test counts");
    data::SyntheticSpec spec;
    spec.per_class = {a.per_class[0], a.per_class[1], a.per_class[2]};
    spec.min_duration_s = a.min_duration;
    spec.max_duration_s = a.max_duration;
    spec.seed = a.seed;
    m = data::make_synthetic_dataset(spec, a.out);
  } else {
    if (a.n_per_class < 1) throw ConfigKeyError("--n-per-class", "must be >= 1");
    m = data::make_synthetic_dataset(a.n_per_class, a.out, a.seed, a.min_duration, a.max_duration);
  }
  out << json{{"manifest", (fs::path(a.out) / "manifest.jsonl").string()},
              {"records", m.records.size()},
              {"train", m.count(data::Split::kTrain)},
              {"val", m.count(data::Split::kVal)},
              {"test", m.count(data::Split::kTest)}}
             .dump()
      << '\n';
  return 0;
}

int cmd_extract(const RunConfig& cfg, int threads, const std::string& features_out, std::ostream& out,
                std::ostream& err) {
  if (features_out.empty()) throw ConfigKeyError("--features-out", "required");
  const data::Manifest m = load_manifest(cfg);
  fs::create_directories(features_out);
  data::FeatureStore store(cfg.fbank);
  std::vector<std::optional<data::ItemError>> failures(m.records.size());
  parallel_for(m.records.size(), threads, [&](std::size_t i) {
    const auto& r = m.records[i];
    try {
      audiofe::write_features(fs::path(features_out) / (r.id + ".afb"), *store.get(r));
    } catch (const Error& e) {
      failures[i] = data::ItemError{r.id, std::string(to_string(e.kind())) + ": " + e.what()};
    }
  });
  std::vector<data::ItemError> errors;
  for (auto& f : failures)
    if (f) errors.push_back(*f);
  report_item_errors(errors, err);
  out << json{{"extracted", m.records.size() - errors.size()}, {"failed", errors.size()},
              {"features_out", features_out}}
             .dump()
      << '\n';
  return errors.empty() ? 0 : exit_code(ErrorKind::kData);
}

training::TrainSummary fit(model::Model<float>& student, model::Model<float>* teacher, const data::Manifest& m,
                           data::FeatureStore& store, const RunConfig& cfg, int threads, const fs::path& dir,
                           const std::string& meta, std::ostream* stream) {
  training::TrainConfig tc = cfg.train;
  tc.threads = threads;
  if (teacher != nullptr) tc.kd = cfg.kd;
  training::MetricsSink sink;
  if (stream != nullptr) sink = [stream](const training::MetricsRecord& r) { *stream << to_json_line(r) << '\n'; };
  return training::train(student, teacher, m, store, tc, training::RunOutput{dir, true, meta}, sink);
}

int cmd_train(const RunConfig& cfg, int threads, bool distill, bool train_teacher, std::ostream& out,
              std::ostream& err) {
  const fs::path dir = require_out_dir(cfg);
  const bool use_teacher = distill || !cfg.teacher_checkpoint.empty();
  const fs::path ckpt = cfg.teacher_checkpoint.empty() ? dir / "teacher" / "best.ckpt" : cfg.teacher_checkpoint;
  if (use_teacher && !fs::exists(ckpt) && !(distill && train_teacher))
    throw ConfigKeyError("kd.teacher_checkpoint",
                         "no teacher checkpoint at " + ckpt.string() + " (distill --train-teacher trains one)");
  const data::Manifest m = load_manifest(cfg);
  fs::create_directories(dir);
  const std::string resolved = resolved_text(cfg);
  write_text(dir / "config.resolved", resolved);

  data::FeatureStore store(cfg.fbank);
  report_item_errors(store.preload(m, threads), err);

  std::optional<model::Model<float>> teacher;
  if (use_teacher) {
    if (!fs::exists(ckpt)) {
      // Same recipe minus distillation, in <out>/teacher.
      model::Model<float> t(cfg.teacher, cfg.seed);
      RunConfig teacher_cfg = cfg;
      teacher_cfg.teacher_checkpoint.clear();
      const auto summary = fit(t, nullptr, m, store, teacher_cfg, threads, dir / "teacher",
                               model::describe(cfg.teacher), nullptr);
      out << json{{"teacher", (dir / "teacher" / "best.ckpt").string()},
                  {"best_epoch", summary.best_epoch},
                  {"test_accuracy", summary.test_accuracy}}
                 .dump()
          << '\n';
      if (ckpt != dir / "teacher" / "best.ckpt") {
        if (ckpt.has_parent_path()) fs::create_directories(ckpt.parent_path());
        fs::copy_file(dir / "teacher" / "best.ckpt", ckpt, fs::copy_options::overwrite_existing);
        fs::copy_file(dir / "teacher" / "best.ckpt.meta", ckpt.string() + ".meta",
                      fs::copy_options::overwrite_existing);
      }
    }
    teacher.emplace(load_model(cfg.teacher, cfg.seed, ckpt));
  }

  model::Model<float> student(cfg.model, cfg.seed);
  const auto summary =
      fit(student, teacher ? &*teacher : nullptr, m, store, cfg, threads, dir, resolved, &out);
  report_item_errors(summary.item_errors, err);
  out << to_json_line(summary) << '\n';
  return 0;
}

int cmd_eval(const RunConfig& cfg, int threads, std::string checkpoint, const std::string& split, std::ostream& out,
             std::ostream& err) {
  if (checkpoint.empty()) checkpoint = (require_out_dir(cfg) / "best.ckpt").string();
  const data::Split s = data::parse_split(split);
  const data::Manifest m = load_manifest(cfg);
  auto model = load_model(cfg.model, cfg.seed, checkpoint);
  data::FeatureStore store(cfg.fbank);
  std::vector<data::ItemError> errors;
  const auto r = training::evaluate(model, m, s, store, cfg.train.batch_size, threads, &errors);
  report_item_errors(errors, err);
  out << json{{"checkpoint", checkpoint}, {"split", split}, {"accuracy", r.accuracy}, {"loss", r.loss},
              {"count", r.count}}
             .dump()
      << '\n';
  return 0;
}

void report_error(std::ostream& err, const std::string& kind, const std::string& message, const std::string& key = {}) {
  json j{{"error", kind}, {"message", message}};
  if (!key.empty()) j["key"] = key;
  err << j.dump() << '\n';
}

}  // namespace

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kConfig: return 2;
    case ErrorKind::kData: return 3;
    case ErrorKind::kNumeric: return 4;
    default: return 1;
  }
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Audio classification with attention, pooling and training refinements", "audiomod"};
  app.require_subcommand(1);

  ConfigArgs train_args, distill_args, eval_args, extract_args, preview_args;
  GenArgs gen;
  bool train_teacher = false;
  std::string checkpoint, split = "test", features_out;

  auto* extract = app.add_subcommand("extract", "Write AFB1 feature files for every manifest record");
  add_config_args(extract, extract_args, false);
  extract->add_option("--features-out", features_out, "Output directory for <id>.afb files");

  auto* gen_data = app.add_subcommand("gen-data", "Write the synthetic two-class corpus and its manifest");
  gen_data->add_option("--out", gen.out, "Output directory");
  gen_data->add_option("--seed", gen.seed, "Generator seed");
  gen_data->add_option("--n-per-class", gen.n_per_class, "Items per class, split by id hash");
  gen_data->add_option("--per-class", gen.per_class, "Exact train,val,test items per class")->delimiter(',');
  gen_data->add_option("--min-duration", gen.min_duration, "Shortest clip in seconds");
  gen_data->add_option("--max-duration", gen.max_duration, "Longest clip in seconds");

  auto* train = app.add_subcommand("train", "Train a model; writes metrics and checkpoints");
  add_config_args(train, train_args, true);

  auto* distill = app.add_subcommand("distill", "Train a student against a frozen teacher");
  add_config_args(distill, distill_args, true);
  distill->add_flag("--train-teacher", train_teacher, "Train the teacher first when its checkpoint is missing");

  auto* eval = app.add_subcommand("eval", "Score a checkpoint on one split");
  add_config_args(eval, eval_args, true);
  eval->add_option("--checkpoint", checkpoint, "Checkpoint (default <run.out_dir>/best.ckpt)");
  eval->add_option("--split", split, "train, val or test");

  auto* preview = app.add_subcommand("lr-preview", "Print the learning rate of every epoch");
  add_config_args(preview, preview_args, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    report_error(err, "usage", e.what());
    return 2;
  }

  try {
    if (*gen_data) return cmd_gen_data(gen, out);
    if (*preview) return cmd_lr_preview(load_config(preview_args), out);
    if (*extract) {
      const RunConfig cfg = load_config(extract_args);
      return cmd_extract(cfg, resolve_threads(extract_args.threads), features_out, out, err);
    }
    if (*train) {
      const RunConfig cfg = load_config(train_args);
      return cmd_train(cfg, resolve_threads(train_args.threads), false, false, out, err);
    }
    if (*distill) {
      const RunConfig cfg = load_config(distill_args);
      return cmd_train(cfg, resolve_threads(distill_args.threads), true, train_teacher, out, err);
    }
    if (*eval) {
      const RunConfig cfg = load_config(eval_args);
      return cmd_eval(cfg, resolve_threads(eval_args.threads), checkpoint, split, out, err);
    }
  } catch (const ConfigKeyError& e) {
    const std::string what = e.what();
    report_error(err, "config", what.substr(std::min(what.size(), e.key().size() + 2)), e.key());
    return exit_code(ErrorKind::kConfig);
  } catch (const Error& e) {
    report_error(err, to_string(e.kind()), e.what());
    return exit_code(e.kind());
  } catch (const fs::filesystem_error& e) {
    report_error(err, "io", e.what());
    return 1;
  } catch (const std::exception& e) {
    report_error(err, "internal", e.what());
    return 1;
  }
  return 1;
}

}  // namespace audiomod::cli
