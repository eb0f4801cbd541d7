#include "stzoo/sampling.hpp"

#include <algorithm>
#include <cmath>

#include "stzoo/common.hpp"

namespace stzoo {

std::string to_string(Strategy s) { return s == Strategy::Uniform ? "uniform" : "dense"; }

std::string to_string(SampleMode m) {
  switch (m) {
    case SampleMode::Train: return "train";
    case SampleMode::EvalClip: return "eval-clip";
    case SampleMode::EvalVideo: return "eval-video";
  }
  throw ConfigError("bad sample mode");
}

Strategy strategy_from_string(const std::string& s) {
  if (s == "uniform") return Strategy::Uniform;
  if (s == "dense") return Strategy::Dense;
  throw ConfigError(cat("unknown sampling strategy '", s, "'"));
}

namespace {

void check_config(const SamplerConfig& c, int64_t n) {
  if (c.f < 1) throw ConfigError("sampler: f must be >= 1");
  if (c.m < 1) throw ConfigError("sampler: m must be >= 1");
  if (c.stride < 1) throw ConfigError("sampler: stride must be >= 1");
  if (n < 1) throw ConfigError("sampler: video length must be >= 1");
}

std::vector<int64_t> uniform_clip(int64_t n, int64_t f, int64_t offset, bool train, Rng* rng) {
  std::vector<int64_t> idx(static_cast<size_t>(f));
  for (int64_t i = 0; i < f; ++i) {
    int64_t start = i * n / f;
    int64_t end = (i + 1) * n / f;
    int64_t len = end - start;
    if (len <= 0) {
      idx[static_cast<size_t>(i)] = std::min(start, n - 1);
      continue;
    }
    int64_t pick;
    if (train)
      pick = start + static_cast<int64_t>(rng->bounded(static_cast<uint32_t>(len)));
    else
      pick = std::clamp(start + len / 2 + offset, start, end - 1);
    idx[static_cast<size_t>(i)] = pick;
  }
  return idx;
}

std::vector<int64_t> dense_clip(int64_t n, int64_t f, int64_t stride, int64_t start) {
  std::vector<int64_t> idx(static_cast<size_t>(f));
  for (int64_t i = 0; i < f; ++i) idx[static_cast<size_t>(i)] = (start + i * stride) % n;
  return idx;
}

}  // namespace

ClipIndexPlan sample(const SamplerConfig& config, int64_t n, Rng& rng) {
  check_config(config, n);
  ClipIndexPlan plan;
  int64_t f = config.f;
  if (config.strategy == Strategy::Uniform) {
    switch (config.mode) {
      case SampleMode::Train:
        plan.clips.push_back(uniform_clip(n, f, 0, true, &rng));
        break;
      case SampleMode::EvalClip:
        plan.clips.push_back(uniform_clip(n, f, 0, false, nullptr));
        break;
      case SampleMode::EvalVideo: {
        int64_t lo = -(config.m / 2);
        for (int64_t j = 0; j < config.m; ++j)
          plan.clips.push_back(uniform_clip(n, f, lo + j, false, nullptr));
        break;
      }
    }
  } else {
    int64_t window = (f - 1) * config.stride + 1;
    int64_t span = std::max<int64_t>(n - window, 0);
    switch (config.mode) {
      case SampleMode::Train: {
        int64_t start =
            span > 0 ? static_cast<int64_t>(rng.bounded(static_cast<uint32_t>(span + 1))) : 0;
        plan.clips.push_back(dense_clip(n, f, config.stride, start));
        break;
      }
      case SampleMode::EvalClip:
        plan.clips.push_back(dense_clip(n, f, config.stride, 0));
        break;
      case SampleMode::EvalVideo: {
        for (int64_t j = 0; j < config.m; ++j) {
          int64_t start = 0;
          if (config.m > 1)
            start = std::lround(static_cast<double>(j) * static_cast<double>(span) /
                                static_cast<double>(config.m - 1));
          plan.clips.push_back(dense_clip(n, f, config.stride, start));
        }
        break;
      }
    }
  }
  return plan;
}

}  // namespace stzoo
