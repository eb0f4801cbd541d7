#include "stzoo/datapipe.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "stzoo/common.hpp"

namespace fs = std::filesystem;

namespace stzoo {

// ---------------------------------------------------------------------------
// PPM (P6) io
// ---------------------------------------------------------------------------

namespace {

int ppm_token(std::istream& in) {
  // skips whitespace and '#' comments
  int c = in.get();
  while (c != EOF) {
    if (c == '#') {
      while (c != EOF && c != '\n') c = in.get();
    } else if (!std::isspace(c)) {
      in.unget();
      int v;
      in >> v;
      return v;
    }
    c = in.get();
  }
  return -1;
}

}  // namespace

Image read_ppm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(cat("missing frame file '", path, "'"));
  char m0 = 0, m1 = 0;
  in.get(m0);
  in.get(m1);
  if (m0 != 'P' || m1 != '6') throw DataError(cat("'", path, "' is not a P6 PPM"));
  int w = ppm_token(in), h = ppm_token(in), maxv = ppm_token(in);
  if (w <= 0 || h <= 0 || maxv != 255) throw DataError(cat("bad PPM header in '", path, "'"));
  in.get();  // single whitespace after maxval
  Image img;
  img.w = w;
  img.h = h;
  img.rgb.resize(static_cast<size_t>(3 * w * h));
  in.read(reinterpret_cast<char*>(img.rgb.data()), static_cast<std::streamsize>(img.rgb.size()));
  if (!in) throw DataError(cat("truncated PPM payload in '", path, "'"));
  return img;
}

void write_ppm(const std::string& path, const Image& img) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError(cat("cannot write frame file '", path, "'"));
  out << "P6\n" << img.w << " " << img.h << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.rgb.data()),
            static_cast<std::streamsize>(img.rgb.size()));
}

Image resize_to(const Image& img, int64_t h, int64_t w) {
  if (h == img.h && w == img.w) return img;
  Image out;
  out.h = h;
  out.w = w;
  out.rgb.resize(static_cast<size_t>(3 * h * w));
  double sy = static_cast<double>(img.h) / h;
  double sx = static_cast<double>(img.w) / w;
  for (int64_t y = 0; y < h; ++y) {
    double fy = (y + 0.5) * sy - 0.5;
    int64_t y0 = static_cast<int64_t>(std::floor(fy));
    double wy = fy - y0;
    int64_t ya = std::clamp<int64_t>(y0, 0, img.h - 1);
    int64_t yb = std::clamp<int64_t>(y0 + 1, 0, img.h - 1);
    for (int64_t x = 0; x < w; ++x) {
      double fx = (x + 0.5) * sx - 0.5;
      int64_t x0 = static_cast<int64_t>(std::floor(fx));
      double wx = fx - x0;
      int64_t xa = std::clamp<int64_t>(x0, 0, img.w - 1);
      int64_t xb = std::clamp<int64_t>(x0 + 1, 0, img.w - 1);
      for (int c = 0; c < 3; ++c) {
        double v00 = img.rgb[static_cast<size_t>((ya * img.w + xa) * 3 + c)];
        double v01 = img.rgb[static_cast<size_t>((ya * img.w + xb) * 3 + c)];
        double v10 = img.rgb[static_cast<size_t>((yb * img.w + xa) * 3 + c)];
        double v11 = img.rgb[static_cast<size_t>((yb * img.w + xb) * 3 + c)];
        double v = (1 - wy) * ((1 - wx) * v00 + wx * v01) + wy * ((1 - wx) * v10 + wx * v11);
        out.rgb[static_cast<size_t>((y * w + x) * 3 + c)] =
            static_cast<uint8_t>(std::clamp(std::lround(v), 0l, 255l));
      }
    }
  }
  return out;
}

Image resize_short_side(const Image& img, int64_t target) {
  if (img.h <= img.w) {
    int64_t w = std::lround(static_cast<double>(img.w) * target / img.h);
    return resize_to(img, target, w);
  }
  int64_t h = std::lround(static_cast<double>(img.h) * target / img.w);
  return resize_to(img, h, target);
}

// ---------------------------------------------------------------------------
// FrameStore
// ---------------------------------------------------------------------------

FrameStore FrameStore::open(const std::string& root) {
  std::string manifest = root + "/manifest.csv";
  std::ifstream in(manifest);
  if (!in) throw DataError(cat("cannot open manifest '", manifest, "'"));
  FrameStore store;
  store.root_ = root;
  std::string line;
  if (!std::getline(in, line)) throw DataError(cat("empty manifest '", manifest, "'"));
  if (line != "video_id,path,num_frames,label")
    throw DataError(cat("bad manifest header in '", manifest, "'"));
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    VideoEntry e;
    std::string nf, lb;
    if (!std::getline(ss, e.video_id, ',') || !std::getline(ss, e.path, ',') ||
        !std::getline(ss, nf, ',') || !std::getline(ss, lb))
      throw DataError(cat("bad manifest row '", line, "'"));
    e.num_frames = std::stoll(nf);
    e.label = std::stoll(lb);
    store.videos_.push_back(std::move(e));
  }
  return store;
}

int64_t FrameStore::num_classes() const {
  int64_t n = 0;
  for (const auto& v : videos_) n = std::max(n, v.label + 1);
  return n;
}

Image FrameStore::load_frame(const VideoEntry& video, int64_t index) const {
  if (index < 0 || index >= video.num_frames)
    throw DataError(cat("frame index ", index, " out of range for video '", video.video_id,
                        "' (", video.num_frames, " frames)"));
  char name[32];
  std::snprintf(name, sizeof(name), "frame_%06lld.ppm", static_cast<long long>(index));
  return read_ppm(root_ + "/" + video.path + "/" + name);
}

std::vector<Image> FrameStore::load_clip(const VideoEntry& video,
                                         const std::vector<int64_t>& indices) const {
  std::vector<Image> frames;
  frames.reserve(indices.size());
  for (int64_t i : indices) frames.push_back(load_frame(video, i));
  return frames;
}

void FrameStore::write_manifest(const std::string& root, const std::vector<VideoEntry>& videos) {
  std::ofstream out(root + "/manifest.csv", std::ios::trunc);
  if (!out) throw DataError(cat("cannot write manifest under '", root, "'"));
  out << "video_id,path,num_frames,label\n";
  for (const auto& v : videos)
    out << v.video_id << "," << v.path << "," << v.num_frames << "," << v.label << "\n";
}

// ---------------------------------------------------------------------------
// preprocessing
// ---------------------------------------------------------------------------

std::string to_string(PreprocessProtocol p) {
  switch (p) {
    case PreprocessProtocol::MiniTrain: return "mini-train";
    case PreprocessProtocol::MiniEval: return "mini-eval";
    case PreprocessProtocol::FullTrain: return "full-train";
    case PreprocessProtocol::FullEval: return "full-eval";
    case PreprocessProtocol::Raw: return "raw";
  }
  throw ConfigError("bad preprocess protocol");
}

PreprocessSpec PreprocessSpec::mini_train() {
  PreprocessSpec s;
  s.protocol = PreprocessProtocol::MiniTrain;
  s.crop = 224;
  return s;
}

PreprocessSpec PreprocessSpec::mini_eval() {
  PreprocessSpec s;
  s.protocol = PreprocessProtocol::MiniEval;
  s.crop = 224;
  s.resize_short = 224;
  return s;
}

PreprocessSpec PreprocessSpec::full_train() {
  PreprocessSpec s;
  s.protocol = PreprocessProtocol::FullTrain;
  s.crop = 224;
  s.resize_short = 256;
  s.resize_short_hi = 320;
  return s;
}

PreprocessSpec PreprocessSpec::full_eval() {
  PreprocessSpec s;
  s.protocol = PreprocessProtocol::FullEval;
  s.crop = 256;
  s.resize_short = 256;
  s.crops_per_clip = 3;
  return s;
}

PreprocessSpec PreprocessSpec::raw() { return PreprocessSpec{}; }

std::vector<std::string> validate(const PreprocessSpec& s) {
  std::vector<std::string> v;
  auto expect = [&v](bool ok, const char* rule) {
    if (!ok) v.push_back(rule);
  };
  switch (s.protocol) {
    case PreprocessProtocol::MiniTrain:
      expect(s.crop == 224, "MiniTrain: crop must be 224");
      break;
    case PreprocessProtocol::MiniEval:
      expect(s.crop == 224 && s.resize_short == 224,
             "MiniEval: resize-short 224 + center crop 224");
      break;
    case PreprocessProtocol::FullTrain:
      expect(s.crop == 224 && s.resize_short == 256 && s.resize_short_hi == 320,
             "FullTrain: resize-short in [256,320] + crop 224");
      break;
    case PreprocessProtocol::FullEval:
      expect(s.crop == 256 && s.resize_short == 256 && s.crops_per_clip == 3,
             "FullEval: resize-short 256 + 3 crops of 256");
      break;
    case PreprocessProtocol::Raw:
      break;
  }
  return v;
}

namespace {

TensorF normalize_frames(const std::vector<Image>& frames, const PreprocessSpec& spec) {
  int64_t f = static_cast<int64_t>(frames.size());
  int64_t h = frames[0].h, w = frames[0].w;
  TensorF out({f, 3, h, w});
  for (int64_t i = 0; i < f; ++i) {
    const Image& img = frames[static_cast<size_t>(i)];
    if (img.h != h || img.w != w) throw DataError("frames of one clip must share dimensions");
    for (int64_t c = 0; c < 3; ++c) {
      float mean = spec.mean[static_cast<size_t>(c)];
      float sd = spec.std[static_cast<size_t>(c)];
      float* dst = out.data() + (i * 3 + c) * h * w;
      for (int64_t p = 0; p < h * w; ++p)
        dst[p] = (static_cast<float>(img.rgb[static_cast<size_t>(p * 3 + c)]) / 255.0f - mean) / sd;
    }
  }
  return out;
}

Image crop_image(const Image& img, int64_t y0, int64_t x0, int64_t ch, int64_t cw) {
  Image out;
  out.h = ch;
  out.w = cw;
  out.rgb.resize(static_cast<size_t>(3 * ch * cw));
  for (int64_t y = 0; y < ch; ++y)
    std::copy(img.rgb.begin() + ((y0 + y) * img.w + x0) * 3,
              img.rgb.begin() + ((y0 + y) * img.w + x0 + cw) * 3,
              out.rgb.begin() + y * cw * 3);
  return out;
}

constexpr double kMultiScale[4] = {1.0, 0.875, 0.75, 0.66};

}  // namespace

std::vector<VideoTensor> preprocess(const std::vector<Image>& frames, const PreprocessSpec& spec,
                                    Rng* rng) {
  if (frames.empty()) throw DataError("preprocess: empty clip");
  auto sv = validate(spec);
  if (!sv.empty()) throw ConfigError(cat("bad preprocess spec: ", sv.front()));

  bool train =
      spec.protocol == PreprocessProtocol::MiniTrain || spec.protocol == PreprocessProtocol::FullTrain;
  if (train && !rng) throw ConfigError("train preprocessing needs an rng");

  // 1) resize (one target per clip)
  std::vector<Image> resized;
  int64_t target = spec.resize_short;
  if (spec.protocol == PreprocessProtocol::FullTrain)
    target = spec.resize_short +
             static_cast<int64_t>(rng->bounded(
                 static_cast<uint32_t>(spec.resize_short_hi - spec.resize_short + 1)));
  if (target > 0)
    for (const auto& f : frames) resized.push_back(resize_short_side(f, target));
  else
    resized = frames;

  int64_t h = resized[0].h, w = resized[0].w;

  if (spec.protocol == PreprocessProtocol::Raw) {
    std::vector<VideoTensor> out;
    out.emplace_back(Layout::Batched2D, normalize_frames(resized, spec));
    return out;
  }

  // 2) crop windows, identical for every frame of the clip
  struct Window {
    int64_t y, x, h, w;
  };
  std::vector<Window> windows;
  switch (spec.protocol) {
    case PreprocessProtocol::MiniEval: {
      if (h < spec.crop || w < spec.crop)
        throw DataError(cat("frames ", h, "x", w, " smaller than crop ", spec.crop));
      windows.push_back({(h - spec.crop) / 2, (w - spec.crop) / 2, spec.crop, spec.crop});
      break;
    }
    case PreprocessProtocol::FullTrain: {
      if (h < spec.crop || w < spec.crop)
        throw DataError(cat("frames ", h, "x", w, " smaller than crop ", spec.crop));
      int64_t y = static_cast<int64_t>(rng->bounded(static_cast<uint32_t>(h - spec.crop + 1)));
      int64_t x = static_cast<int64_t>(rng->bounded(static_cast<uint32_t>(w - spec.crop + 1)));
      windows.push_back({y, x, spec.crop, spec.crop});
      break;
    }
    case PreprocessProtocol::FullEval: {
      if (h < spec.crop || w < spec.crop)
        throw DataError(cat("frames ", h, "x", w, " smaller than crop ", spec.crop));
      // evenly spaced along the longer spatial axis
      for (int i = 0; i < 3; ++i) {
        int64_t span_y = h - spec.crop, span_x = w - spec.crop;
        if (w >= h)
          windows.push_back({span_y / 2, span_x * i / 2, spec.crop, spec.crop});
        else
          windows.push_back({span_y * i / 2, span_x / 2, spec.crop, spec.crop});
      }
      break;
    }
    case PreprocessProtocol::MiniTrain: {
      // multi-scale corner/center crop in the TSN style: pick a scale pair for
      // width and height (adjacent indices only), one of five positions, crop,
      // then resize to the training size
      int64_t base = std::min(h, w);
      int si = static_cast<int>(rng->bounded(4));
      int dj = static_cast<int>(rng->bounded(3)) - 1;  // -1, 0, +1
      int sj = std::clamp(si + dj, 0, 3);
      int64_t ch = std::lround(base * kMultiScale[si]);
      int64_t cw = std::lround(base * kMultiScale[sj]);
      ch = std::min(ch, h);
      cw = std::min(cw, w);
      int64_t ys[5] = {0, 0, h - ch, h - ch, (h - ch) / 2};
      int64_t xs[5] = {0, w - cw, 0, w - cw, (w - cw) / 2};
      int pos = static_cast<int>(rng->bounded(5));
      windows.push_back({ys[pos], xs[pos], ch, cw});
      break;
    }
    case PreprocessProtocol::Raw:
      break;
  }

  std::vector<VideoTensor> out;
  for (const Window& win : windows) {
    std::vector<Image> cropped;
    cropped.reserve(resized.size());
    for (const auto& f : resized) {
      Image c = crop_image(f, win.y, win.x, win.h, win.w);
      if (c.h != spec.crop || c.w != spec.crop) c = resize_to(c, spec.crop, spec.crop);
      cropped.push_back(std::move(c));
    }
    out.emplace_back(Layout::Batched2D, normalize_frames(cropped, spec));
  }
  return out;
}

// ---------------------------------------------------------------------------
// synthetic datasets
// ---------------------------------------------------------------------------

SyntheticTask synthetic_task_from_string(const std::string& s) {
  if (s == "direction") return SyntheticTask::Direction;
  if (s == "adjacency") return SyntheticTask::Adjacency;
  throw ConfigError(cat("unknown synthetic task '", s, "'"));
}

std::string to_string(SyntheticTask t) {
  return t == SyntheticTask::Direction ? "direction" : "adjacency";
}

namespace {

Image blank_frame(int64_t size) {
  Image img;
  img.h = img.w = size;
  img.rgb.assign(static_cast<size_t>(3 * size * size), 0);
  return img;
}

void paint_square(Image& img, int64_t y0, int64_t x0, int64_t side) {
  for (int64_t y = y0; y < y0 + side; ++y)
    for (int64_t x = x0; x < x0 + side; ++x)
      for (int c = 0; c < 3; ++c) img.rgb[static_cast<size_t>((y * img.w + x) * 3 + c)] = 255;
}

}  // namespace

FrameStore make_synthetic(SyntheticTask task, int64_t n_videos, int64_t frames, int64_t size,
                          uint64_t seed, const std::string& out_dir) {
  if (frames < 4) throw ConfigError("make_synthetic: frames must be >= 4");
  if (n_videos < 2 || n_videos % 2 != 0)
    throw ConfigError("make_synthetic: n_videos must be even (class-0/class-1 twins)");
  if (size < 16) throw ConfigError("make_synthetic: size must be >= 16");

  fs::create_directories(out_dir);
  Rng rng(seed);
  std::vector<VideoEntry> videos;

  auto write_video = [&](const std::string& id, const std::vector<Image>& seq, int64_t label) {
    fs::create_directories(out_dir + "/" + id);
    for (size_t i = 0; i < seq.size(); ++i) {
      char name[32];
      std::snprintf(name, sizeof(name), "frame_%06zu.ppm", i);
      write_ppm(out_dir + "/" + id + "/" + name, seq[i]);
    }
    videos.push_back(VideoEntry{id, id, static_cast<int64_t>(seq.size()), label});
  };

  const std::string prefix = to_string(task);
  for (int64_t pair = 0; pair < n_videos / 2; ++pair) {
    std::vector<Image> seq;
    if (task == SyntheticTask::Direction) {
      int64_t side = 6 + static_cast<int64_t>(rng.bounded(5));  // 6..10
      int64_t y0 = static_cast<int64_t>(rng.bounded(static_cast<uint32_t>(size - side + 1)));
      int64_t span = size - side;
      for (int64_t t = 0; t < frames; ++t) {
        Image img = blank_frame(size);
        int64_t x0 = std::lround(static_cast<double>(span) * t / (frames - 1));
        paint_square(img, y0, x0, side);
        seq.push_back(std::move(img));
      }
    } else {
      // two flashes at fixed spatial positions; only their times vary
      int64_t side = std::max<int64_t>(4, size * 10 / 32);
      int64_t y0 = (size - side) / 2;
      int64_t x1 = size / 10;
      int64_t x2 = size / 2 + size / 10;
      Image flash_a = blank_frame(size);
      paint_square(flash_a, y0, x1, side);
      Image flash_b = blank_frame(size);
      paint_square(flash_b, y0, x2, side);
      int64_t t0 = static_cast<int64_t>(rng.bounded(static_cast<uint32_t>(frames - 1)));
      seq.assign(static_cast<size_t>(frames), blank_frame(size));
      seq[static_cast<size_t>(t0)] = flash_a;
      seq[static_cast<size_t>(t0 + 1)] = flash_b;
      char id0[64];
      std::snprintf(id0, sizeof(id0), "%s_%04lld_near", prefix.c_str(),
                    static_cast<long long>(pair));
      write_video(id0, seq, 0);

      int64_t gap_min = frames / 2;
      int64_t t1 = static_cast<int64_t>(rng.bounded(static_cast<uint32_t>(frames - gap_min)));
      int64_t d = gap_min + static_cast<int64_t>(
                                rng.bounded(static_cast<uint32_t>(frames - t1 - gap_min)));
      seq.assign(static_cast<size_t>(frames), blank_frame(size));
      seq[static_cast<size_t>(t1)] = flash_a;
      seq[static_cast<size_t>(t1 + d)] = flash_b;
      char id1[64];
      std::snprintf(id1, sizeof(id1), "%s_%04lld_far", prefix.c_str(),
                    static_cast<long long>(pair));
      write_video(id1, seq, 1);
      continue;
    }
    char id0[64], id1[64];
    std::snprintf(id0, sizeof(id0), "%s_%04lld_fwd", prefix.c_str(), static_cast<long long>(pair));
    write_video(id0, seq, 0);
    std::reverse(seq.begin(), seq.end());
    std::snprintf(id1, sizeof(id1), "%s_%04lld_rev", prefix.c_str(), static_cast<long long>(pair));
    write_video(id1, seq, 1);
  }

  FrameStore::write_manifest(out_dir, videos);
  return FrameStore::open(out_dir);
}

}  // namespace stzoo
