#include "stzoo/profiler.hpp"

#include <chrono>
#include <cstdio>
#include <new>

#include "stzoo/common.hpp"

namespace stzoo {

int64_t count_flops(AssembledModel& model, int64_t h, int64_t w) {
  ClipShape s{model.arch().frames, 3, h, w};
  int64_t total = 0;
  for (auto& n : model.nodes()) {
    total += n->macs(s);
    s = n->out_shape(s);
    // the volumetric head pools time away before the classifier
    if (model.volumetric() && n->kind() == NodeKind::AvgPool) s.t = 1;
  }
  return total;
}

int64_t count_params(AssembledModel& model) {
  int64_t total = 0;
  for (Param* p : model.params())
    if (p->trainable) total += p->value.numel();
  return total;
}

int64_t forward_bytes_estimate(AssembledModel& model, int64_t h, int64_t w, int64_t batch) {
  ClipShape s{model.arch().frames, 3, h, w};
  auto elems = [&](const ClipShape& cs) {
    int64_t spatial = (cs.h > 0 ? cs.h : 1) * (cs.w > 0 ? cs.w : 1);
    return batch * cs.t * cs.c * spatial;
  };
  int64_t peak = 0;
  for (auto& n : model.nodes()) {
    ClipShape out = n->out_shape(s);
    int64_t ws = 0;
    if (auto* c2 = dynamic_cast<Conv2dNode*>(n.get()))
      ws = c2->opts().cin * c2->opts().k * c2->opts().k * out.h * out.w;
    else if (auto* c3 = dynamic_cast<Conv3dNode*>(n.get()))
      ws = c3->opts().cin * c3->opts().kt * c3->opts().k * c3->opts().k * out.t * out.h * out.w;
    peak = std::max(peak, elems(s) + elems(out) + ws);
    s = out;
    if (model.volumetric() && n->kind() == NodeKind::AvgPool) s.t = 1;
  }
  return peak * static_cast<int64_t>(sizeof(float));
}

ThroughputResult measure_throughput_fn(const std::function<bool(int64_t)>& try_forward,
                                       const std::function<void(int64_t)>& run_forward,
                                       int64_t clip_cost_divisor, const ThroughputOptions& opts) {
  if (!try_forward(1)) throw EngineError("model cannot run a forward at batch 1 within budget");
  int64_t lo = 1;
  while (lo < opts.max_batch_cap && try_forward(lo * 2)) lo *= 2;
  int64_t hi = lo * 2;
  if (lo < opts.max_batch_cap) {
    while (hi - lo > 1) {
      int64_t mid = lo + (hi - lo) / 2;
      if (try_forward(mid))
        lo = mid;
      else
        hi = mid;
    }
  }
  ThroughputResult result;
  result.max_batch = lo;
  for (int i = 0; i < opts.warmup_iters; ++i) run_forward(lo);
  auto start = std::chrono::steady_clock::now();
  for (int i = 0; i < opts.timed_iters; ++i) run_forward(lo);
  auto stop = std::chrono::steady_clock::now();
  double secs = std::chrono::duration<double>(stop - start).count();
  if (secs <= 0.0) secs = 1e-9;
  result.clips_per_sec =
      static_cast<double>(opts.timed_iters) * static_cast<double>(lo) / clip_cost_divisor / secs;
  return result;
}

ThroughputResult measure_throughput(AssembledModel& model, int64_t h, int64_t w,
                                    const ThroughputOptions& opts) {
  int64_t f = model.arch().frames;
  auto make_input = [&](int64_t batch) {
    return model.volumetric() ? TensorF({batch, 3, f, h, w}) : TensorF({batch * f, 3, h, w});
  };
  auto run = [&](int64_t batch) {
    TensorF x = make_input(batch);
    model.forward_batch(x, batch);
  };
  auto probe = [&](int64_t batch) {
    if (forward_bytes_estimate(model, h, w, batch) > opts.budget_bytes) return false;
    try {
      run(batch);
    } catch (const std::bad_alloc&) {
      return false;
    }
    return true;
  };
  return measure_throughput_fn(probe, run, 1, opts);
}

CostReport profile(AssembledModel& model, int64_t h, int64_t w, bool measure,
                   const ThroughputOptions& opts) {
  CostReport report;
  report.flops = count_flops(model, h, w);
  report.params = count_params(model);
  if (measure) {
    ThroughputResult t = measure_throughput(model, h, w, opts);
    report.throughput = t.clips_per_sec;
    report.max_batch = t.max_batch;
  }
  return report;
}

std::string format_cost_csv_header() { return "model,flops,params,throughput,max_batch"; }

std::string format_cost_csv(const std::string& model_name, const CostReport& report) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%s,%lld,%lld,%.6g,%lld", model_name.c_str(),
                static_cast<long long>(report.flops), static_cast<long long>(report.params),
                report.throughput, static_cast<long long>(report.max_batch));
  return buf;
}

}  // namespace stzoo
