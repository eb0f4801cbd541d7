#include "oracles.hpp"

#include <algorithm>
#include <cmath>

namespace oracle {

using stzoo::SampleMode;
using stzoo::SamplerConfig;
using stzoo::Strategy;

namespace {

int64_t seg_lo(int64_t i, int64_t n, int64_t f) {
  return static_cast<int64_t>(std::floor(static_cast<double>(i) * n / f));
}

std::vector<int64_t> uniform_oracle_clip(int64_t n, int64_t f, int64_t offset, bool train,
                                         stzoo::Rng* rng) {
  std::vector<int64_t> idx;
  for (int64_t i = 0; i < f; ++i) {
    int64_t lo = seg_lo(i, n, f);
    int64_t hi = seg_lo(i + 1, n, f);
    if (hi <= lo) {
      idx.push_back(std::min(lo, n - 1));
      continue;
    }
    int64_t pick;
    if (train) {
      pick = lo + static_cast<int64_t>(rng->next_u32() % static_cast<uint32_t>(hi - lo));
    } else {
      pick = lo + static_cast<int64_t>(std::floor((hi - lo) / 2.0)) + offset;
      if (pick < lo) pick = lo;
      if (pick > hi - 1) pick = hi - 1;
    }
    idx.push_back(pick);
  }
  return idx;
}

std::vector<int64_t> dense_oracle_clip(int64_t n, int64_t f, int64_t stride, int64_t start) {
  std::vector<int64_t> idx;
  for (int64_t i = 0; i < f; ++i) {
    int64_t v = start + i * stride;
    while (v >= n) v -= n;
    idx.push_back(v);
  }
  return idx;
}

}  // namespace

std::vector<std::vector<int64_t>> sample_plan(const SamplerConfig& config, int64_t n,
                                              uint64_t seed) {
  stzoo::Rng rng(seed);
  std::vector<std::vector<int64_t>> clips;
  if (config.strategy == Strategy::Uniform) {
    if (config.mode == SampleMode::Train) {
      clips.push_back(uniform_oracle_clip(n, config.f, 0, true, &rng));
    } else if (config.mode == SampleMode::EvalClip) {
      clips.push_back(uniform_oracle_clip(n, config.f, 0, false, nullptr));
    } else {
      // every integer i with -m/2 <= i < m/2, ascending
      for (int64_t i = -config.m; i <= config.m; ++i) {
        double half = static_cast<double>(config.m) / 2.0;
        if (-half <= static_cast<double>(i) && static_cast<double>(i) < half)
          clips.push_back(uniform_oracle_clip(n, config.f, i, false, nullptr));
      }
    }
  } else {
    int64_t window = (config.f - 1) * config.stride + 1;
    int64_t span = n - window;
    if (span < 0) span = 0;
    if (config.mode == SampleMode::Train) {
      int64_t start = 0;
      if (span > 0) start = static_cast<int64_t>(rng.next_u32() % static_cast<uint32_t>(span + 1));
      clips.push_back(dense_oracle_clip(n, config.f, config.stride, start));
    } else if (config.mode == SampleMode::EvalClip) {
      clips.push_back(dense_oracle_clip(n, config.f, config.stride, 0));
    } else {
      for (int64_t j = 0; j < config.m; ++j) {
        int64_t start = 0;
        if (config.m > 1)
          start = static_cast<int64_t>(
              std::floor(static_cast<double>(j) * span / (config.m - 1) + 0.5));
        clips.push_back(dense_oracle_clip(n, config.f, config.stride, start));
      }
    }
  }
  return clips;
}

int64_t conv2d_macs(int64_t n, int64_t ci, int64_t h, int64_t w, int64_t co, int64_t k, int64_t s,
                    int64_t p) {
  int64_t ho = (h + 2 * p - k) / s + 1;
  int64_t wo = (w + 2 * p - k) / s + 1;
  int64_t macs = 0;
  for (int64_t ni = 0; ni < n; ++ni)
    for (int64_t oc = 0; oc < co; ++oc)
      for (int64_t oh = 0; oh < ho; ++oh)
        for (int64_t ow = 0; ow < wo; ++ow)
          for (int64_t ic = 0; ic < ci; ++ic)
            for (int64_t kh = 0; kh < k; ++kh)
              for (int64_t kw = 0; kw < k; ++kw) ++macs;
  return macs;
}

int64_t conv3d_macs(int64_t b, int64_t ci, int64_t t, int64_t h, int64_t w, int64_t co, int64_t kt,
                    int64_t k, int64_t s, int64_t p) {
  int64_t ho = (h + 2 * p - k) / s + 1;
  int64_t wo = (w + 2 * p - k) / s + 1;
  int64_t macs = 0;
  for (int64_t bi = 0; bi < b; ++bi)
    for (int64_t oc = 0; oc < co; ++oc)
      for (int64_t ot = 0; ot < t; ++ot)
        for (int64_t oh = 0; oh < ho; ++oh)
          for (int64_t ow = 0; ow < wo; ++ow)
            for (int64_t ic = 0; ic < ci; ++ic)
              for (int64_t jt = 0; jt < kt; ++jt)
                for (int64_t kh = 0; kh < k; ++kh)
                  for (int64_t kw = 0; kw < k; ++kw) ++macs;
  return macs;
}

int64_t fc_macs(int64_t n, int64_t in, int64_t out) {
  int64_t macs = 0;
  for (int64_t i = 0; i < n; ++i)
    for (int64_t o = 0; o < out; ++o)
      for (int64_t j = 0; j < in; ++j) ++macs;
  return macs;
}

Disentangled disentangle_pair(double s_model, double s_tsn) {
  Disentangled d;
  d.phi = s_tsn / (s_model > s_tsn ? s_model : s_tsn);
  d.psi = (s_model - s_tsn) / (100.0 - s_tsn);
  return d;
}

std::vector<double> central_difference(const std::function<double(const std::vector<double>&)>& f,
                                       std::vector<double> x, double h) {
  std::vector<double> g(x.size());
  for (size_t i = 0; i < x.size(); ++i) {
    double keep = x[i];
    x[i] = keep + h;
    double fp = f(x);
    x[i] = keep - h;
    double fm = f(x);
    x[i] = keep;
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

double max_rel_error(const std::vector<double>& a, const std::vector<double>& b) {
  double worst = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    double scale = std::max({1.0, std::fabs(a[i]), std::fabs(b[i])});
    worst = std::max(worst, std::fabs(a[i] - b[i]) / scale);
  }
  return worst;
}

}  // namespace oracle
