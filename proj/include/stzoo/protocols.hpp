#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace stzoo {

enum class Schedule { CosineHalfPeriod, Step };
enum class EvalLevel { Clip, Video };

std::string to_string(Schedule s);
std::string to_string(EvalLevel l);
Schedule schedule_from_string(const std::string& s);
EvalLevel eval_level_from_string(const std::string& s);

struct TrainProtocol {
  int epochs = 30;
  double lr0 = 0.01;      // warmup start (and the whole schedule when warmup_epochs == 0)
  double lr_peak = 0.01;  // value reached at the end of warmup
  int warmup_epochs = 0;
  Schedule schedule = Schedule::CosineHalfPeriod;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  int batch_size = 16;
  std::vector<int64_t> chain;            // progressive frame chain, e.g. {8,16,32,64}
  std::vector<double> step_milestones;   // Step schedule, fractions of the run
  double step_gamma = 0.1;

  // 196 epochs, linear warmup 0.01 -> 1.6 over 34 epochs, then half-period
  // cosine; SGD momentum 0.9, weight decay 1e-4.
  static TrainProtocol full();
  // 45 epochs, cosine from 0.01, batch 48.
  static TrainProtocol transfer();
  // CI-scale preset; not a reproduction of any published protocol.
  static TrainProtocol desk();
};

// Piecewise learning rate over the run, epoch_fraction in [0, 1]: linear from
// lr0 to lr_peak across the warmup span, then lr_peak * 0.5 * (1 + cos(pi*s))
// with s rescaling the rest of the run to [0, 1].
double lr_at(const TrainProtocol& protocol, double epoch_fraction);

struct EvalProtocol {
  EvalLevel level = EvalLevel::Clip;
  int clips = 1;  // m
  int crops = 1;
  // average class probabilities over clips*crops predictions per video
  static EvalProtocol clip_level();
  static EvalProtocol video_level(int m = 10, int crops = 1);
};

}  // namespace stzoo
