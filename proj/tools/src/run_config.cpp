#include "audiomod/cli/run_config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include "audiomod/errors.hpp"

namespace audiomod::cli {
namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

template <typename N>
N parse_number(const std::string& key, const std::string& v, const char* what) {
  N out{};
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (v.empty() || ec != std::errc() || ptr != v.data() + v.size())
    throw ConfigKeyError(key, "expected " + std::string(what) + ", got '" + v + "'");
  return out;
}

int parse_int(const std::string& key, const std::string& v) { return parse_number<int>(key, v, "an integer"); }
double parse_double(const std::string& key, const std::string& v) { return parse_number<double>(key, v, "a number"); }

std::vector<int> parse_widths(const std::string& key, const std::string& v) {
  std::vector<int> out;
  if (v.empty()) return out;
  std::stringstream ss(v);
  for (std::string part; std::getline(ss, part, ',');) out.push_back(parse_int(key, trim(part)));
  return out;
}

std::string format_double(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

std::string format_widths(const std::vector<int>& w) {
  std::string out;
  for (std::size_t i = 0; i < w.size(); ++i) out += (i ? "," : "") + std::to_string(w[i]);
  return out;
}

struct Key {
  std::string name;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

// Model-shaped keys shared by the student ("model.") and teacher ("teacher.").
template <typename Select>
void model_keys(std::vector<Key>& keys, const std::string& prefix, Select sel) {
  keys.push_back({prefix + "arch", [sel](RunConfig& c, const std::string& v) { sel(c).arch = model::parse_arch(v); },
                  [sel](const RunConfig& c) { return std::string(model::to_string(sel(c).arch)); }});
  keys.push_back({prefix + "channels",
                  [sel, k = prefix + "channels"](RunConfig& c, const std::string& v) { sel(c).channels = parse_widths(k, v); },
                  [sel](const RunConfig& c) { return format_widths(sel(c).channels); }});
  keys.push_back({prefix + "attention",
                  [sel](RunConfig& c, const std::string& v) { sel(c).attention.variant = attention::parse_attention(v); },
                  [sel](const RunConfig& c) { return std::string(attention::to_string(sel(c).attention.variant)); }});
  keys.push_back({prefix + "attention_r",
                  [sel, k = prefix + "attention_r"](RunConfig& c, const std::string& v) {
                    sel(c).attention.reduction_r = parse_int(k, v);
                  },
                  [sel](const RunConfig& c) { return std::to_string(sel(c).attention.reduction_r); }});
  keys.push_back({prefix + "pooling", [sel](RunConfig& c, const std::string& v) { sel(c).pooling = aggregation::parse_pooling(v); },
                  [sel](const RunConfig& c) { return std::string(aggregation::to_string(sel(c).pooling)); }});
}

#define AUDIOMOD_INT_KEY(name, field) \
  {name, [](RunConfig& c, const std::string& v) { c.field = parse_int(name, v); }, \
   [](const RunConfig& c) { return std::to_string(c.field); }}
#define AUDIOMOD_DOUBLE_KEY(name, field) \
  {name, [](RunConfig& c, const std::string& v) { c.field = parse_double(name, v); }, \
   [](const RunConfig& c) { return format_double(c.field); }}
#define AUDIOMOD_PATH_KEY(name, field) \
  {name, [](RunConfig& c, const std::string& v) { c.field = v; }, [](const RunConfig& c) { return c.field.string(); }}

const std::vector<Key>& key_table() {
  static const std::vector<Key> table = [] {
    std::vector<Key> k{
        {"run.seed",
         [](RunConfig& c, const std::string& v) { c.seed = parse_number<std::uint64_t>("run.seed", v, "a non-negative integer"); },
         [](const RunConfig& c) { return std::to_string(c.seed); }},
        AUDIOMOD_PATH_KEY("run.out_dir", out_dir),
        AUDIOMOD_PATH_KEY("data.manifest", manifest),
        AUDIOMOD_INT_KEY("fbank.sample_rate_hz", fbank.sample_rate_hz),
        AUDIOMOD_DOUBLE_KEY("fbank.window_ms", fbank.window_ms),
        AUDIOMOD_DOUBLE_KEY("fbank.hop_ms", fbank.hop_ms),
        AUDIOMOD_INT_KEY("fbank.n_mels", fbank.n_mels),
        AUDIOMOD_INT_KEY("fbank.fft_size", fbank.fft_size),
        AUDIOMOD_DOUBLE_KEY("fbank.fmin_hz", fbank.fmin_hz),
        AUDIOMOD_DOUBLE_KEY("fbank.fmax_hz", fbank.fmax_hz),
    };
    model_keys(k, "model.", [](auto& c) -> auto& { return c.model; });
    k.push_back(AUDIOMOD_INT_KEY("model.n_classes", model.n_classes));
    std::vector<Key> rest{
        AUDIOMOD_INT_KEY("train.epochs", train.epochs),
        AUDIOMOD_INT_KEY("train.batch_size", train.batch_size),
        AUDIOMOD_DOUBLE_KEY("train.base_lr", train.schedule.base_lr),
        AUDIOMOD_INT_KEY("train.decay_every", train.schedule.decay_every),
        AUDIOMOD_DOUBLE_KEY("train.decay_divisor", train.schedule.decay_divisor),
        {"train.warmup", [](RunConfig& c, const std::string& v) { c.train.schedule.warmup = training::parse_warmup(v); },
         [](const RunConfig& c) { return std::string(training::to_string(c.train.schedule.warmup)); }},
        AUDIOMOD_DOUBLE_KEY("train.warmup_lr0", train.schedule.warmup_lr0),
        AUDIOMOD_INT_KEY("train.warmup_epochs", train.schedule.warmup_epochs),
        AUDIOMOD_DOUBLE_KEY("train.label_smoothing_eps", train.label_smoothing_eps),
        AUDIOMOD_PATH_KEY("kd.teacher_checkpoint", teacher_checkpoint),
        AUDIOMOD_DOUBLE_KEY("kd.temperature", kd.temperature),
        AUDIOMOD_DOUBLE_KEY("kd.lambda", kd.lambda),
    };
    k.insert(k.end(), rest.begin(), rest.end());
    model_keys(k, "teacher.", [](auto& c) -> auto& { return c.teacher; });
    return k;
  }();
  return table;
}

#undef AUDIOMOD_INT_KEY
#undef AUDIOMOD_DOUBLE_KEY
#undef AUDIOMOD_PATH_KEY

// Fields that follow from others rather than having keys of their own.
void sync_derived(RunConfig& c) {
  c.model.n_mels = c.fbank.n_mels;
  c.teacher.n_mels = c.fbank.n_mels;
  c.teacher.n_classes = c.model.n_classes;
  c.train.seed = c.seed;
}

}  // namespace

Override parse_override(const std::string& text) {
  const auto eq = text.find('=');
  if (eq == std::string::npos) throw ConfigError("override '" + text + "' is not key=value");
  return {trim(std::string_view(text).substr(0, eq)), trim(std::string_view(text).substr(eq + 1))};
}

void set_value(RunConfig& cfg, const std::string& key, const std::string& value) {
  for (const auto& k : key_table()) {
    if (k.name != key) continue;
    try {
      k.set(cfg, value);
    } catch (const ConfigKeyError& e) {
      if (e.key() == key) throw;
      // Parsers shared between keys report their canonical key; rename.
      const std::string what = e.what();
      throw ConfigKeyError(key, what.substr(std::min(what.size(), e.key().size() + 2)));
    }
    sync_derived(cfg);
    return;
  }
  throw ConfigKeyError(key, "unknown key");
}

RunConfig parse_config_text(const std::string& text, const std::vector<Override>& overrides) {
  RunConfig cfg;
  sync_derived(cfg);
  std::set<std::string> seen;
  std::istringstream in(text);
  int line_no = 0;
  for (std::string raw; std::getline(in, raw);) {
    ++line_no;
    const std::string line = trim(std::string_view(raw).substr(0, raw.find('#')));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(line_no) + ": expected key = value");
    const std::string key = trim(std::string_view(line).substr(0, eq));
    if (!seen.insert(key).second) throw ConfigKeyError(key, "set more than once");
    set_value(cfg, key, trim(std::string_view(line).substr(eq + 1)));
  }
  for (const auto& [key, value] : overrides) set_value(cfg, key, value);
  cfg.validate();
  return cfg;
}

RunConfig parse_config(const std::filesystem::path& path, const std::vector<Override>& overrides) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return parse_config_text(text.str(), overrides);
}

void RunConfig::validate() const {
  fbank.validate();
  audiofe::mel_filterbank_matrix(fbank);
  model.validate();
  train.validate();
  if (!(kd.temperature > 0.0)) throw ConfigKeyError("kd.temperature", "must be > 0");
  if (!(kd.lambda >= 0.0 && kd.lambda <= 1.0)) throw ConfigKeyError("kd.lambda", "must be in [0, 1]");
  try {
    teacher.validate();
  } catch (const ConfigKeyError& e) {
    const std::string what = e.what();
    const std::string key = e.key().rfind("model.", 0) == 0 ? "teacher." + e.key().substr(6) : e.key();
    throw ConfigKeyError(key, what.substr(std::min(what.size(), e.key().size() + 2)));
  }
}

std::string resolved_text(const RunConfig& cfg) {
  std::string out;
  for (const auto& k : key_table()) out += k.name + " = " + k.get(cfg) + "\n";
  return out;
}

std::vector<std::string> known_keys() {
  std::vector<std::string> out;
  for (const auto& k : key_table()) out.push_back(k.name);
  return out;
}

}  // namespace audiomod::cli
