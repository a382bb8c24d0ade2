#pragma once

#include <string_view>

namespace audiomod::training {

enum class WarmupKind { kNone, kConstant, kGradual };

WarmupKind parse_warmup(std::string_view name);
std::string_view to_string(WarmupKind k);

struct LrSchedule {
  double base_lr = 0.1;
  // Step decay: divide by decay_divisor every decay_every epochs.
  int decay_every = 5;
  double decay_divisor = 10.0;
  WarmupKind warmup = WarmupKind::kNone;
  double warmup_lr0 = 1e-5;
  int warmup_epochs = 5;

  void validate() const;
};

// Learning rate at a (possibly fractional) epoch. During warmup the rate is
// warmup_lr0 (constant) or ramps linearly from warmup_lr0 to base_lr
// (gradual); the step-decay clock starts when warmup ends.
double lr_at(double epoch, const LrSchedule& s);

}  // namespace audiomod::training
