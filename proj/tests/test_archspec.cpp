#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <fstream>
#include <set>

#include "stzoo/archspec.hpp"
#include "stzoo/config.hpp"
#include "stzoo/rng.hpp"

using namespace stzoo;

namespace {

ArchSpec make(Family f, Backbone b, int64_t frames, bool tp, Placement p) {
  ArchSpec s;
  s.family = f;
  s.backbone = b;
  s.frames = frames;
  s.temporal_pool = tp;
  s.placement = p;
  s.num_classes = 2;
  return s;
}

std::string temp_path(const char* stem) {
  return std::string("/tmp/stzoo_archspec_") + stem + "_" + std::to_string(getpid());
}

}  // namespace

TEST_CASE("validate accepts a buildable spec") {
  CHECK(validate(make(Family::TAM, Backbone::ResNet18, 8, false, Placement::All)).empty());
}

TEST_CASE("validate rejects placement on families without per-block modules") {
  auto v = validate(make(Family::TSN, Backbone::ResNet18, 8, false, Placement::TopHalf));
  REQUIRE(v.size() == 1);
  CHECK(v[0].find("placement") != std::string::npos);
  CHECK(v[0].find("TSN") != std::string::npos);
}

TEST_CASE("validate rejects temporal pooling below 8 frames") {
  auto v = validate(make(Family::I3D, Backbone::TinyNet, 4, true, Placement::All));
  REQUIRE(v.size() == 1);
  CHECK(v[0].find("frames") != std::string::npos);
}

TEST_CASE("validate is pure") {
  ArchSpec s = make(Family::TSN, Backbone::ResNet18, 8, false, Placement::TopHalf);
  CHECK(validate(s) == validate(s));
}

TEST_CASE("canonical names follow module-backbone[-tp]") {
  CHECK(canonical_name(make(Family::I3D, Backbone::ResNet18, 8, true, Placement::All)) ==
        "I3D-ResNet18-tp");
  CHECK(canonical_name(make(Family::TSN, Backbone::ResNet50, 8, false, Placement::All)) ==
        "TSN-ResNet50");
  CHECK(canonical_name(make(Family::TAM, Backbone::InceptionV1, 8, false, Placement::All)) ==
        "TAM-InceptionV1");
}

TEST_CASE("canonical_name rejects invalid specs") {
  CHECK_THROWS_AS(canonical_name(make(Family::TSN, Backbone::ResNet18, 8, false,
                                      Placement::TopHalf)),
                  ConfigError);
}

TEST_CASE("canonical_name is injective over family x backbone x tp") {
  std::set<std::string> names;
  int total = 0;
  for (Family f : {Family::TSN, Family::I3D, Family::S3D, Family::TAM, Family::TSM,
                   Family::Conv1D, Family::TSN_NLN})
    for (Backbone b : {Backbone::InceptionV1, Backbone::ResNet18, Backbone::ResNet50,
                       Backbone::TinyNet})
      for (bool tp : {false, true}) {
        names.insert(canonical_name(make(f, b, 8, tp, Placement::All)));
        ++total;
      }
  CHECK(static_cast<int>(names.size()) == total);
}

TEST_CASE("video tensor layouts are element permutations of each other") {
  Rng rng(7);
  TensorF v({4, 3, 5, 6});
  for (int64_t i = 0; i < v.numel(); ++i) v[i] = static_cast<float>(rng.uniform());
  VideoTensor clip(Layout::Batched2D, v);
  VideoTensor vol = clip.to_layout(Layout::Volumetric3D);
  CHECK(vol.values().shape() == std::vector<int64_t>{3, 4, 5, 6});
  // same multiset of elements
  for (int64_t f = 0; f < 4; ++f)
    for (int64_t c = 0; c < 3; ++c)
      for (int64_t p = 0; p < 30; ++p)
        CHECK(vol.values()[(c * 4 + f) * 30 + p] == v[(f * 3 + c) * 30 + p]);
  VideoTensor back = vol.to_layout(Layout::Batched2D);
  for (int64_t i = 0; i < v.numel(); ++i) CHECK(back.values()[i] == v[i]);
}

TEST_CASE("config round trip preserves every field") {
  ExperimentConfig c;
  c.arch = make(Family::TAM, Backbone::TinyNet, 16, false, Placement::UniformHalf);
  c.dataset = "data/synth";
  c.sampler.strategy = Strategy::Dense;
  c.sampler.f = 16;
  c.sampler.stride = 2;
  c.sampler.m = 4;
  c.train = TrainProtocol::full();
  c.eval = EvalProtocol::video_level(10, 3);
  c.seed = 123456789;
  c.output_dir = "out/run1";
  std::string path = temp_path("roundtrip") + ".json";
  save_config(c, path);
  ExperimentConfig loaded = load_config(path);
  CHECK(loaded == c);
  std::remove(path.c_str());
}

TEST_CASE("unknown config fields are hard errors naming the field") {
  std::string path = temp_path("unknown") + ".json";
  {
    std::ofstream out(path);
    out << R"({"arch": {"family": "TSN", "framez": 8}})";
  }
  try {
    load_config(path);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("framez") != std::string::npos);
  }
  std::remove(path.c_str());
}

TEST_CASE("empty config file is a parse error") {
  std::string path = temp_path("empty") + ".json";
  { std::ofstream out(path); }
  CHECK_THROWS_AS(load_config(path), ConfigError);
  std::remove(path.c_str());
}
