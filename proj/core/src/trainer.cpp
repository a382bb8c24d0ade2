#include "audiomod/trainer.hpp"

#include <cmath>
#include <fstream>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "audiomod/checkpoint.hpp"
#include "audiomod/errors.hpp"
#include "audiomod/losses.hpp"
#include "audiomod/optimizer.hpp"
#include "audiomod/parallel.hpp"

namespace audiomod::training {

namespace fs = std::filesystem;
using nlohmann::json;

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigKeyError("train.epochs", "must be >= 1");
  if (batch_size < 1) throw ConfigKeyError("train.batch_size", "must be >= 1");
  schedule.validate();
  if (!(label_smoothing_eps >= 0.0 && label_smoothing_eps < 1.0))
    throw ConfigKeyError("train.label_smoothing_eps", "must be in [0, 1)");
  if (kd) {
    if (!(kd->temperature > 0.0)) throw ConfigKeyError("kd.temperature", "must be > 0");
    if (!(kd->lambda >= 0.0 && kd->lambda <= 1.0)) throw ConfigKeyError("kd.lambda", "must be in [0, 1]");
  }
}

std::string to_json_line(const MetricsRecord& r) {
  json j;
  j["epoch"] = r.epoch;
  j["split"] = std::string(data::to_string(r.split));
  j["loss"] = r.loss;
  j["accuracy"] = r.accuracy;
  j["lr"] = r.lr;
  return j.dump();
}

std::string to_json_line(const TrainSummary& s) {
  json j;
  j["summary"] = true;
  j["best_epoch"] = s.best_epoch;
  j["best_val_accuracy"] = s.best_val_accuracy;
  j["test_accuracy"] = s.test_accuracy;
  j["test_loss"] = s.test_loss;
  return j.dump();
}

namespace {

template <typename T>
int count_correct(const nn::Tensor<T>& logits, const std::vector<int>& labels) {
  const int k = logits.dim(1);
  const auto v = logits.data();
  int correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    int best = 0;
    for (int c = 1; c < k; ++c)
      if (v[i * k + c] > v[i * k + best]) best = c;
    correct += best == labels[i] ? 1 : 0;
  }
  return correct;
}

class MetricsFile {
 public:
  explicit MetricsFile(const fs::path& dir) {
    if (dir.empty()) return;
    out_.open(dir / "metrics.jsonl", std::ios::binary | std::ios::trunc);
    if (!out_) throw IoError("cannot write " + (dir / "metrics.jsonl").string());
  }
  void line(const std::string& s) {
    if (!out_.is_open()) return;
    out_ << s << '\n';
    out_.flush();
  }

 private:
  std::ofstream out_;
};

template <typename T>
void save_with_meta(const fs::path& path, const model::Model<T>& m, const std::string& meta) {
  nn::save_checkpoint(path, m.state());
  std::ofstream f(path.string() + ".meta", std::ios::binary | std::ios::trunc);
  f << (meta.empty() ? model::describe(m.config()) : meta);
  if (!f) throw IoError("cannot write " + path.string() + ".meta");
}

template <typename T>
void assert_no_teacher_grad(const model::Model<T>& teacher) {
  for (const auto& p : teacher.parameters()) {
    if (!p.tensor.has_grad()) continue;
    for (T g : p.tensor.grad())
      if (g != T(0)) throw ContractError("teacher parameter '" + p.name + "' received a gradient");
  }
}

// Eval-mode teacher logits for every readable training item. Features are
// fixed per item, so one pass serves all epochs.
template <typename T>
std::unordered_map<std::string, std::vector<T>> teacher_logits_by_id(model::Model<T>& teacher,
                                                                     const data::Manifest& manifest,
                                                                     data::FeatureStore& store, int batch_size,
                                                                     int threads) {
  const auto plan = data::plan_batches(manifest.of(data::Split::kTrain), batch_size, 0, 0, false);
  std::vector<std::vector<std::pair<std::string, std::vector<T>>>> parts(plan.size());
  parallel_for(plan.size(), resolve_threads(threads), [&](std::size_t b) {
    nn::NoGradGuard no_grad;
    std::vector<data::ItemError> ignored;  // the training pass reports these
    const data::Batch batch = data::assemble_batch(plan[b], store, &ignored);
    if (batch.size() == 0) return;
    const auto logits =
        teacher.forward_classify(data::cast_features<T>(batch.features), batch.valid_frames, nn::Mode::kEval);
    const int k = logits.dim(1);
    const auto v = logits.data();
    for (int i = 0; i < batch.size(); ++i)
      parts[b].emplace_back(batch.ids[i], std::vector<T>(v.begin() + i * k, v.begin() + (i + 1) * k));
  });
  std::unordered_map<std::string, std::vector<T>> out;
  for (auto& part : parts)
    for (auto& [id, z] : part) out.emplace(std::move(id), std::move(z));
  return out;
}

template <typename T>
nn::Tensor<T> gather_logits(const std::unordered_map<std::string, std::vector<T>>& table,
                            const std::vector<std::string>& ids) {
  std::vector<T> v;
  int k = 0;
  for (const auto& id : ids) {
    const auto it = table.find(id);
    if (it == table.end()) throw ContractError("no teacher logits for item '" + id + "'");
    k = static_cast<int>(it->second.size());
    v.insert(v.end(), it->second.begin(), it->second.end());
  }
  return nn::Tensor<T>({static_cast<int>(ids.size()), k}, std::move(v));
}

}  // namespace

template <typename T>
MetricsRecord evaluate(model::Model<T>& m, const data::Manifest& manifest, data::Split split,
                       data::FeatureStore& store, int batch_size, int threads,
                       std::vector<data::ItemError>* errors) {
  const auto plan = data::plan_batches(manifest.of(split), batch_size, 0, 0, false);
  if (plan.empty()) throw DataError("split '" + std::string(data::to_string(split)) + "' is empty");
  struct Partial {
    double loss_sum = 0.0;
    int correct = 0;
    int n = 0;
    std::vector<data::ItemError> errors;
  };
  std::vector<Partial> parts(plan.size());
  parallel_for(plan.size(), resolve_threads(threads), [&](std::size_t b) {
    nn::NoGradGuard no_grad;
    Partial& p = parts[b];
    const data::Batch batch = data::assemble_batch(plan[b], store, &p.errors);
    if (batch.size() == 0) return;
    const auto logits =
        m.forward_classify(data::cast_features<T>(batch.features), batch.valid_frames, nn::Mode::kEval);
    p.loss_sum = static_cast<double>(ce_loss(logits, batch.labels).item()) * batch.size();
    p.correct = count_correct(logits, batch.labels);
    p.n = batch.size();
  });
  MetricsRecord r;
  r.split = split;
  double loss_sum = 0.0;
  int correct = 0;
  for (auto& p : parts) {
    loss_sum += p.loss_sum;
    correct += p.correct;
    r.count += p.n;
    if (errors != nullptr) errors->insert(errors->end(), p.errors.begin(), p.errors.end());
  }
  if (r.count == 0) throw DataError("no readable items in split '" + std::string(data::to_string(split)) + "'");
  r.loss = loss_sum / r.count;
  r.accuracy = static_cast<double>(correct) / r.count;
  return r;
}

template <typename T>
TrainSummary train(model::Model<T>& student, model::Model<T>* teacher, const data::Manifest& manifest,
                   data::FeatureStore& store, const TrainConfig& cfg, const RunOutput& out,
                   const MetricsSink& sink) {
  cfg.validate();
  if (cfg.kd && teacher == nullptr) throw ConfigKeyError("kd.teacher_checkpoint", "distillation needs a teacher");
  for (data::Split s : {data::Split::kTrain, data::Split::kVal, data::Split::kTest})
    if (manifest.count(s) == 0)
      throw DataError("split '" + std::string(data::to_string(s)) + "' is empty");
  if (!out.dir.empty()) fs::create_directories(out.dir);
  if (teacher != nullptr) teacher->zero_grad();  // leftovers from the teacher's own training

  MetricsFile metrics(out.dir);
  TrainSummary summary;
  auto emit = [&](const MetricsRecord& r) {
    summary.history.push_back(r);
    metrics.line(to_json_line(r));
    if (sink) sink(r);
  };

  std::unordered_map<std::string, std::vector<T>> teacher_table;
  if (cfg.kd) teacher_table = teacher_logits_by_id(*teacher, manifest, store, cfg.batch_size, cfg.threads);

  Adam<T> opt(student.parameters());
  std::vector<nn::NamedArray> best_state;
  double best_val_loss = 0.0;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    data::BatchIterator it(manifest, data::Split::kTrain, cfg.batch_size, cfg.seed, epoch, store, true);
    const double n_batches = static_cast<double>(it.num_batches());
    double loss_sum = 0.0;
    int correct = 0, seen = 0, step = 0;
    while (auto batch = it.next()) {
      const double lr = lr_at(epoch + step / n_batches, cfg.schedule);
      const auto x = data::cast_features<T>(batch->features);
      const auto logits = student.forward_classify(x, batch->valid_frames, nn::Mode::kTrain);
      nn::Tensor<T> loss = cfg.label_smoothing_eps > 0.0
                               ? label_smoothing_loss(logits, batch->labels, cfg.label_smoothing_eps)
                               : ce_loss(logits, batch->labels);
      if (cfg.kd) {
        const auto teacher_logits = gather_logits(teacher_table, batch->ids);
        loss = total_loss(loss, kd_loss(logits, teacher_logits, cfg.kd->temperature), cfg.kd->lambda);
      }
      const double value = static_cast<double>(loss.item());
      if (!std::isfinite(value)) {
        json abort;
        abort["abort"] = "non-finite loss";
        abort["epoch"] = epoch;
        abort["step"] = step;
        abort["lr"] = lr;
        abort["batch_ids"] = batch->ids;
        metrics.line(abort.dump());
        throw NumericError("non-finite loss at epoch " + std::to_string(epoch) + " step " + std::to_string(step));
      }
      opt.zero_grad();
      loss.backward();
      if (teacher != nullptr) assert_no_teacher_grad(*teacher);
      opt.step(lr);

      loss_sum += value * batch->size();
      correct += count_correct(logits, batch->labels);
      seen += batch->size();
      ++step;
    }
    summary.item_errors.insert(summary.item_errors.end(), it.errors().begin(), it.errors().end());
    if (seen == 0) throw DataError("no readable training items");

    const double epoch_lr = lr_at(epoch, cfg.schedule);
    emit({epoch, data::Split::kTrain, loss_sum / seen, static_cast<double>(correct) / seen, epoch_lr, seen});

    MetricsRecord val = evaluate(student, manifest, data::Split::kVal, store, cfg.batch_size, cfg.threads,
                                 &summary.item_errors);
    val.epoch = epoch;
    val.lr = epoch_lr;
    emit(val);

    const bool improved = summary.best_epoch < 0 || val.accuracy > summary.best_val_accuracy ||
                          (val.accuracy == summary.best_val_accuracy && val.loss < best_val_loss);
    if (improved) {
      summary.best_epoch = epoch;
      summary.best_val_accuracy = val.accuracy;
      best_val_loss = val.loss;
      best_state = nn::snapshot(student.state());
    }
    if (!out.dir.empty()) {
      if (out.save_epoch_checkpoints)
        save_with_meta(out.dir / ("epoch_" + std::to_string(epoch) + ".ckpt"), student, out.meta);
      if (improved) save_with_meta(out.dir / "best.ckpt", student, out.meta);
    }
  }

  auto state = student.state();
  nn::restore(best_state, state);
  MetricsRecord test = evaluate(student, manifest, data::Split::kTest, store, cfg.batch_size, cfg.threads,
                                &summary.item_errors);
  test.epoch = summary.best_epoch;
  test.lr = lr_at(summary.best_epoch, cfg.schedule);
  emit(test);
  summary.test_accuracy = test.accuracy;
  summary.test_loss = test.loss;
  metrics.line(to_json_line(summary));
  return summary;
}

#define AUDIOMOD_INSTANTIATE(T)                                                                          \
  template MetricsRecord evaluate(model::Model<T>&, const data::Manifest&, data::Split, data::FeatureStore&, \
                                  int, int, std::vector<data::ItemError>*);                              \
  template TrainSummary train(model::Model<T>&, model::Model<T>*, const data::Manifest&, data::FeatureStore&, \
                              const TrainConfig&, const RunOutput&, const MetricsSink&);

AUDIOMOD_INSTANTIATE(float)
AUDIOMOD_INSTANTIATE(double)

#undef AUDIOMOD_INSTANTIATE

}  // namespace audiomod::training
