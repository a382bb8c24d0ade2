#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "audiomod/audiofe.hpp"
#include "audiomod/model.hpp"
#include "audiomod/trainer.hpp"

namespace audiomod::cli {

// Everything a command needs, resolved from defaults, an optional file, and
// --set overrides in that order.
struct RunConfig {
  std::uint64_t seed = 0;
  std::filesystem::path out_dir;
  std::filesystem::path manifest;

  audiofe::FbankConfig fbank;
  model::ModelConfig model;  // n_mels mirrors fbank.n_mels
  training::TrainConfig train;

  std::filesystem::path teacher_checkpoint;
  training::KdSettings kd;
  model::ModelConfig teacher = default_teacher();

  static model::ModelConfig default_teacher() {
    model::ModelConfig t;
    t.arch = model::Arch::kResnet50;
    return t;
  }

  // Cross-field and per-module checks; throws ConfigKeyError.
  void validate() const;
};

using Override = std::pair<std::string, std::string>;

// "key=value" -> {key, value}; throws ConfigError when there is no '='.
Override parse_override(const std::string& text);

// Applies one setting. Unknown keys and malformed values throw
// ConfigKeyError naming the key.
void set_value(RunConfig& cfg, const std::string& key, const std::string& value);

// Flat "key = value" lines; '#' starts a comment. A key may appear once.
RunConfig parse_config_text(const std::string& text, const std::vector<Override>& overrides = {});
RunConfig parse_config(const std::filesystem::path& path, const std::vector<Override>& overrides = {});

// Every key with its resolved value, one "key = value" line each, in a fixed
// order. parse_config_text(resolved_text(c)) reproduces c.
std::string resolved_text(const RunConfig& cfg);

std::vector<std::string> known_keys();

}  // namespace audiomod::cli
