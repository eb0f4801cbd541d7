#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "oracles.hpp"
#include "stzoo/sampling.hpp"

using namespace stzoo;

namespace {

SamplerConfig cfg(Strategy s, SampleMode m, int64_t f, int64_t stride = 1, int64_t clips = 10,
                  uint64_t seed = 0) {
  SamplerConfig c;
  c.strategy = s;
  c.mode = m;
  c.f = f;
  c.stride = stride;
  c.m = clips;
  c.seed = seed;
  return c;
}

void check_invariants(const ClipIndexPlan& plan, const SamplerConfig& c, int64_t n) {
  int64_t expected_clips = c.mode == SampleMode::EvalVideo ? c.m : 1;
  REQUIRE(static_cast<int64_t>(plan.clips.size()) == expected_clips);
  for (const auto& clip : plan.clips) {
    REQUIRE(static_cast<int64_t>(clip.size()) == c.f);
    for (int64_t idx : clip) {
      CHECK(idx >= 0);
      CHECK(idx < n);
    }
    if (c.strategy == Strategy::Uniform && n >= c.f) {
      for (size_t i = 0; i + 1 < clip.size(); ++i) CHECK(clip[i] < clip[i + 1]);
      for (int64_t i = 0; i < c.f; ++i) {
        CHECK(clip[static_cast<size_t>(i)] >= i * n / c.f);
        CHECK(clip[static_cast<size_t>(i)] < (i + 1) * n / c.f);
      }
    }
    if (c.strategy == Strategy::Dense) {
      for (size_t i = 0; i + 1 < clip.size(); ++i) {
        int64_t d = (clip[i + 1] - clip[i]) % n;
        if (d < 0) d += n;
        CHECK(d == c.stride % n);
      }
    }
  }
}

}  // namespace

TEST_CASE("uniform eval-clip picks segment middles") {
  Rng rng(0);
  ClipIndexPlan plan = sample(cfg(Strategy::Uniform, SampleMode::EvalClip, 8), 80, rng);
  CHECK(plan.clips.front() == std::vector<int64_t>{5, 15, 25, 35, 45, 55, 65, 75});
}

TEST_CASE("uniform eval-video offsets straddle the middle and include the eval-clip plan") {
  Rng rng(0);
  SamplerConfig c = cfg(Strategy::Uniform, SampleMode::EvalVideo, 8, 1, 10);
  ClipIndexPlan plan = sample(c, 80, rng);
  REQUIRE(plan.clips.size() == 10);
  Rng rng2(0);
  ClipIndexPlan clip = sample(cfg(Strategy::Uniform, SampleMode::EvalClip, 8), 80, rng2);
  // offsets -5..4 ascending: offset 0 is clip index 5
  CHECK(plan.clips[5] == clip.clips[0]);
  for (int64_t j = 0; j < 10; ++j)
    for (int64_t i = 0; i < 8; ++i) {
      int64_t middle = clip.clips[0][static_cast<size_t>(i)];
      int64_t lo = i * 80 / 8, hi = (i + 1) * 80 / 8 - 1;
      int64_t want = std::clamp(middle + (j - 5), lo, hi);
      CHECK(plan.clips[static_cast<size_t>(j)][static_cast<size_t>(i)] == want);
    }
}

TEST_CASE("dense eval-video start points follow the rounded linspace") {
  Rng rng(0);
  ClipIndexPlan plan = sample(cfg(Strategy::Dense, SampleMode::EvalVideo, 32, 1, 10), 100, rng);
  std::vector<int64_t> starts;
  for (const auto& clip : plan.clips) starts.push_back(clip.front());
  CHECK(starts == std::vector<int64_t>{0, 8, 15, 23, 30, 38, 45, 53, 60, 68});
  for (const auto& clip : plan.clips)
    for (size_t i = 0; i + 1 < clip.size(); ++i) CHECK(clip[i + 1] == clip[i] + 1);
}

TEST_CASE("dense train wraps modulo n when the video is shorter than the window") {
  // f=32, stride=2 needs 63 frames; N=50 forces start 0 and wraparound
  Rng rng(0);
  ClipIndexPlan plan = sample(cfg(Strategy::Dense, SampleMode::Train, 32, 2), 50, rng);
  const auto& clip = plan.clips.front();
  for (int64_t i = 0; i < 32; ++i) CHECK(clip[static_cast<size_t>(i)] == (i * 2) % 50);
}

TEST_CASE("dense eval-clip equals the first eval-video clip") {
  for (int64_t n : {1, 7, 31, 64, 100, 200}) {
    Rng r1(0), r2(0);
    ClipIndexPlan a = sample(cfg(Strategy::Dense, SampleMode::EvalClip, 16, 2), n, r1);
    ClipIndexPlan b = sample(cfg(Strategy::Dense, SampleMode::EvalVideo, 16, 2, 10), n, r2);
    CHECK(a.clips.front() == b.clips.front());
  }
}

TEST_CASE("eval plans are pure functions of config and length") {
  SamplerConfig c = cfg(Strategy::Uniform, SampleMode::EvalVideo, 8, 1, 10);
  Rng r1(11), r2(99);  // rng must not matter in eval modes
  CHECK(sample(c, 57, r1).clips == sample(c, 57, r2).clips);
}

TEST_CASE("train plans reproduce from the seed and differ across seeds") {
  SamplerConfig c = cfg(Strategy::Uniform, SampleMode::Train, 8);
  Rng a1(5), a2(5), b(6);
  auto p1 = sample(c, 120, a1);
  auto p2 = sample(c, 120, a2);
  auto p3 = sample(c, 120, b);
  CHECK(p1.clips == p2.clips);
  CHECK(p1.clips != p3.clips);
  check_invariants(p3, c, 120);
}

TEST_CASE("plans match the brute-force oracle bit-exactly across the sweep") {
  for (int64_t n = 1; n <= 200; ++n)
    for (int64_t f : {4, 8, 16, 32})
      for (int64_t m : {1, 2, 10})
        for (Strategy strat : {Strategy::Uniform, Strategy::Dense})
          for (int64_t stride : {1, 2})
            for (SampleMode mode : {SampleMode::Train, SampleMode::EvalClip,
                                    SampleMode::EvalVideo}) {
              if (strat == Strategy::Uniform && stride == 2) continue;
              SamplerConfig c = cfg(strat, mode, f, stride, m, 1234 + static_cast<uint64_t>(n));
              Rng rng(c.seed);
              ClipIndexPlan got = sample(c, n, rng);
              auto want = oracle::sample_plan(c, n, c.seed);
              REQUIRE(got.clips == want);
              check_invariants(got, c, n);
            }
}

TEST_CASE("uniform coverage touches the first and last segments") {
  for (int64_t n : {8, 57, 199}) {
    Rng rng(3);
    SamplerConfig c = cfg(Strategy::Uniform, SampleMode::Train, 8, 1, 1, 3);
    ClipIndexPlan plan = sample(c, n, rng);
    CHECK(plan.clips.front().front() < n / 8 + 1);
    CHECK(plan.clips.front().back() >= 7 * n / 8 - 1);
  }
}

TEST_CASE("dense single clips touch at most the strided window") {
  Rng rng(4);
  ClipIndexPlan plan = sample(cfg(Strategy::Dense, SampleMode::EvalClip, 8, 2), 200, rng);
  int64_t lo = plan.clips.front().front(), hi = plan.clips.front().back();
  CHECK(hi - lo == (8 - 1) * 2);
}

TEST_CASE("degenerate inputs never fail") {
  for (int64_t n : {1, 2, 3}) {
    for (Strategy s : {Strategy::Uniform, Strategy::Dense})
      for (SampleMode m : {SampleMode::Train, SampleMode::EvalClip, SampleMode::EvalVideo}) {
        Rng rng(0);
        ClipIndexPlan plan = sample(cfg(s, m, 32, 2, 10), n, rng);
        check_invariants(plan, cfg(s, m, 32, 2, 10), n);
      }
  }
}

TEST_CASE("invalid sampler parameters are rejected") {
  Rng rng(0);
  CHECK_THROWS_AS(sample(cfg(Strategy::Uniform, SampleMode::Train, 0), 10, rng), ConfigError);
  CHECK_THROWS_AS(sample(cfg(Strategy::Uniform, SampleMode::Train, 8), 0, rng), ConfigError);
}
