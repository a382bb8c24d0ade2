#include "audiomod/schedule.hpp"

#include <cmath>
#include <string>

#include "audiomod/errors.hpp"

namespace audiomod::training {

WarmupKind parse_warmup(std::string_view name) {
  if (name == "none") return WarmupKind::kNone;
  if (name == "constant") return WarmupKind::kConstant;
  if (name == "gradual") return WarmupKind::kGradual;
  throw ConfigKeyError("train.warmup", "unknown value '" + std::string(name) + "' (allowed: none|constant|gradual)");
}

std::string_view to_string(WarmupKind k) {
  switch (k) {
    case WarmupKind::kConstant: return "constant";
    case WarmupKind::kGradual: return "gradual";
    default: return "none";
  }
}

void LrSchedule::validate() const {
  if (!(base_lr > 0.0)) throw ConfigKeyError("train.base_lr", "must be > 0");
  if (decay_every < 1) throw ConfigKeyError("train.decay_every", "must be >= 1");
  if (!(decay_divisor >= 1.0)) throw ConfigKeyError("train.decay_divisor", "must be >= 1");
  if (!(warmup_lr0 > 0.0)) throw ConfigKeyError("train.warmup_lr0", "must be > 0");
  if (warmup != WarmupKind::kNone && warmup_epochs < 1)
    throw ConfigKeyError("train.warmup_epochs", "must be >= 1 when warmup is on");
}

double lr_at(double epoch, const LrSchedule& s) {
  if (!(epoch >= 0.0)) throw ConfigError("epoch must be >= 0");
  double decay_epoch = epoch;
  if (s.warmup != WarmupKind::kNone) {
    const double w = s.warmup_epochs;
    if (epoch < w) {
      if (s.warmup == WarmupKind::kConstant) return s.warmup_lr0;
      return s.warmup_lr0 + (s.base_lr - s.warmup_lr0) * epoch / w;
    }
    decay_epoch = epoch - w;
  }
  const int steps = static_cast<int>(std::floor(decay_epoch / s.decay_every));
  // Repeated exact division keeps 0.1 / 10 == 0.01 bit-for-bit.
  double lr = s.base_lr;
  for (int i = 0; i < steps; ++i) lr /= s.decay_divisor;
  return lr;
}

}  // namespace audiomod::training
