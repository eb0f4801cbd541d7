#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "stzoo/archspec.hpp"
#include "stzoo/rng.hpp"
#include "stzoo/sampling.hpp"

namespace stzoo {

// 8-bit interleaved RGB.
struct Image {
  int64_t h = 0, w = 0;
  std::vector<uint8_t> rgb;
};

Image read_ppm(const std::string& path);
void write_ppm(const std::string& path, const Image& img);

// Bilinear, half-pixel centers.
Image resize_short_side(const Image& img, int64_t target);
Image resize_to(const Image& img, int64_t h, int64_t w);

struct VideoEntry {
  std::string video_id;
  std::string path;  // directory relative to the store root
  int64_t num_frames = 0;
  int64_t label = 0;
};

// Per-video directories of numbered frame files plus a manifest
// (video_id,path,num_frames,label). Frames are frame_%06d.ppm, 0-based.
class FrameStore {
 public:
  static FrameStore open(const std::string& root);

  const std::string& root() const { return root_; }
  const std::vector<VideoEntry>& videos() const { return videos_; }
  int64_t num_classes() const;

  Image load_frame(const VideoEntry& video, int64_t index) const;
  std::vector<Image> load_clip(const VideoEntry& video, const std::vector<int64_t>& indices) const;

  static void write_manifest(const std::string& root, const std::vector<VideoEntry>& videos);

 private:
  std::string root_;
  std::vector<VideoEntry> videos_;
};

enum class PreprocessProtocol { MiniTrain, MiniEval, FullTrain, FullEval, Raw };

std::string to_string(PreprocessProtocol p);

struct PreprocessSpec {
  PreprocessProtocol protocol = PreprocessProtocol::Raw;
  int64_t crop = 0;              // 0 = no crop
  int64_t resize_short = 0;      // 0 = no resize
  int64_t resize_short_hi = 0;   // FullTrain samples short side from [resize_short, hi]
  int crops_per_clip = 1;
  std::array<float, 3> mean = {0.485f, 0.456f, 0.406f};
  std::array<float, 3> std = {0.229f, 0.224f, 0.225f};

  static PreprocessSpec mini_train();  // multi-scale augment + same 224 crop per clip
  static PreprocessSpec mini_eval();   // short side 224, center 224 crop
  static PreprocessSpec full_train();  // short side in [256,320], random 224 crop
  static PreprocessSpec full_eval();   // short side 256, three 256 crops
  static PreprocessSpec raw();         // normalize only (desk-scale synthetic data)
};

std::vector<std::string> validate(const PreprocessSpec& spec);

// One VideoTensor (Batched2D) per crop; every frame of a clip gets the same
// spatial transform. Train protocols draw from rng; eval protocols are pure
// and must not consume randomness (rng may be null).
std::vector<VideoTensor> preprocess(const std::vector<Image>& frames, const PreprocessSpec& spec,
                                    Rng* rng);

enum class SyntheticTask { Direction, Adjacency };

SyntheticTask synthetic_task_from_string(const std::string& s);
std::string to_string(SyntheticTask t);

// Desk-scale probe datasets. Direction: a square sweeping left-to-right
// (class 0) paired with its exactly reversed twin (class 1); per-pair frame
// multisets are identical, so any frame-order-invariant classifier sits at
// chance. Adjacency: two flash frames either in consecutive frames (class 0)
// or separated by at least frames/2 (class 1), with identical frame content
// across classes.
FrameStore make_synthetic(SyntheticTask task, int64_t n_videos, int64_t frames, int64_t size,
                          uint64_t seed, const std::string& out_dir);

}  // namespace stzoo
