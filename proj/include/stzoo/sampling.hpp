#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "stzoo/rng.hpp"

namespace stzoo {

enum class Strategy { Uniform, Dense };
enum class SampleMode { Train, EvalClip, EvalVideo };

std::string to_string(Strategy s);
std::string to_string(SampleMode m);
Strategy strategy_from_string(const std::string& s);

struct SamplerConfig {
  Strategy strategy = Strategy::Uniform;
  int64_t f = 8;       // frames per clip
  int64_t stride = 1;  // dense only; 2 reproduces "sample every other frame"
  int64_t m = 10;      // clips per video (EvalVideo)
  SampleMode mode = SampleMode::Train;
  uint64_t seed = 0;
};

// Exact frame indices for each clip of one video.
struct ClipIndexPlan {
  std::vector<std::vector<int64_t>> clips;
};

// Index rules, with short videos handled by clamping/wrapping, never failure:
//   Uniform: segment i = [floor(i*N/f), floor((i+1)*N/f)).
//     Train      one uniform draw per non-empty segment (start + u32 % len);
//                an empty segment consumes no draw and clamps to min(start, N-1).
//     EvalClip   middle of each segment: start + len/2.
//     EvalVideo  m clips at offsets -m/2 <= i < m/2 from the middle,
//                clamped into the segment; offsets in ascending order.
//   Dense (window = (f-1)*stride + 1):
//     Train      random start in [0, N-window]; start 0 and indices wrap
//                modulo N when the video is shorter than the window.
//     EvalClip   the first clip (start 0).
//     EvalVideo  m starts at round(j*(N-window)/(m-1)), clamped >= 0; m=1
//                degenerates to start 0.
ClipIndexPlan sample(const SamplerConfig& config, int64_t n_frames, Rng& rng);

}  // namespace stzoo
