#pragma once

#include <cstdint>
#include <functional>

#include "stzoo/factory.hpp"

namespace stzoo {

// Multiply-accumulate count for a single clip at the given spatial input.
// Counts convolutions, fully-connected layers and NLN matrix products;
// pooling, normalization and activations are free by convention.
int64_t count_flops(AssembledModel& model, int64_t h, int64_t w);

int64_t count_params(AssembledModel& model);

struct ThroughputOptions {
  int64_t budget_bytes = 1ll << 30;  // stands in for device memory
  int warmup_iters = 3;
  int timed_iters = 10;
  int64_t max_batch_cap = 1 << 20;
};

struct ThroughputResult {
  double clips_per_sec = 0.0;
  int64_t max_batch = 0;
};

// Generic probe: doubling then bisection on the success predicate (fits the
// byte budget and the forward actually runs), then wall-clock timing at the
// resulting batch size.
ThroughputResult measure_throughput_fn(const std::function<bool(int64_t)>& try_forward,
                                       const std::function<void(int64_t)>& run_forward,
                                       int64_t clip_cost_divisor, const ThroughputOptions& opts);

ThroughputResult measure_throughput(AssembledModel& model, int64_t h, int64_t w,
                                    const ThroughputOptions& opts = {});

// Peak transient bytes of a forward at the given batch size (activations of
// adjacent layers plus the conv im2col workspace).
int64_t forward_bytes_estimate(AssembledModel& model, int64_t h, int64_t w, int64_t batch);

struct CostReport {
  int64_t flops = 0;   // 1-clip MACs
  int64_t params = 0;
  double throughput = 0.0;  // clips/sec at max_batch
  int64_t max_batch = 0;
};

CostReport profile(AssembledModel& model, int64_t h, int64_t w, bool measure = true,
                   const ThroughputOptions& opts = {});

std::string format_cost_csv_header();
std::string format_cost_csv(const std::string& model_name, const CostReport& report);

}  // namespace stzoo
