#include "stzoo/protocols.hpp"

#include <cmath>

#include "stzoo/common.hpp"

namespace stzoo {

std::string to_string(Schedule s) {
  return s == Schedule::CosineHalfPeriod ? "cosine" : "step";
}

std::string to_string(EvalLevel l) { return l == EvalLevel::Clip ? "clip" : "video"; }

Schedule schedule_from_string(const std::string& s) {
  if (s == "cosine") return Schedule::CosineHalfPeriod;
  if (s == "step") return Schedule::Step;
  throw ConfigError(cat("unknown schedule '", s, "'"));
}

EvalLevel eval_level_from_string(const std::string& s) {
  if (s == "clip") return EvalLevel::Clip;
  if (s == "video") return EvalLevel::Video;
  throw ConfigError(cat("unknown eval level '", s, "'"));
}

TrainProtocol TrainProtocol::full() {
  TrainProtocol p;
  p.epochs = 196;
  p.lr0 = 0.01;
  p.lr_peak = 1.6;
  p.warmup_epochs = 34;
  p.schedule = Schedule::CosineHalfPeriod;
  p.momentum = 0.9;
  p.weight_decay = 1e-4;
  p.batch_size = 1024;
  p.chain = {8, 16, 32, 64};
  return p;
}

TrainProtocol TrainProtocol::transfer() {
  TrainProtocol p;
  p.epochs = 45;
  p.lr0 = 0.01;
  p.lr_peak = 0.01;
  p.warmup_epochs = 0;
  p.schedule = Schedule::CosineHalfPeriod;
  p.momentum = 0.9;
  p.weight_decay = 1e-4;
  p.batch_size = 48;
  return p;
}

TrainProtocol TrainProtocol::desk() {
  TrainProtocol p;
  p.epochs = 30;
  p.lr0 = 0.01;
  p.lr_peak = 0.01;
  p.warmup_epochs = 0;
  p.schedule = Schedule::CosineHalfPeriod;
  p.momentum = 0.9;
  p.weight_decay = 1e-4;
  p.batch_size = 16;
  return p;
}

double lr_at(const TrainProtocol& p, double epoch_fraction) {
  if (epoch_fraction < 0.0 || epoch_fraction > 1.0)
    throw ConfigError(cat("lr_at: epoch_fraction ", epoch_fraction, " outside [0, 1]"));
  double w = p.epochs > 0 ? static_cast<double>(p.warmup_epochs) / p.epochs : 0.0;
  if (w > 0.0 && epoch_fraction < w)
    return p.lr0 + (p.lr_peak - p.lr0) * (epoch_fraction / w);
  double s = w < 1.0 ? (epoch_fraction - w) / (1.0 - w) : 1.0;
  if (p.schedule == Schedule::CosineHalfPeriod)
    return p.lr_peak * 0.5 * (1.0 + std::cos(M_PI * s));
  double lr = p.lr_peak;
  for (double m : p.step_milestones)
    if (s >= m) lr *= p.step_gamma;
  return lr;
}

EvalProtocol EvalProtocol::clip_level() { return EvalProtocol{EvalLevel::Clip, 1, 1}; }

EvalProtocol EvalProtocol::video_level(int m, int crops) {
  return EvalProtocol{EvalLevel::Video, m, crops};
}

}  // namespace stzoo
