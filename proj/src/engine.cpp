#include "stzoo/engine.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "stzoo/kernels.hpp"
#include "stzoo/profiler.hpp"

namespace fs = std::filesystem;

namespace stzoo {

double softmax_cross_entropy(const TensorF& logits, const std::vector<int64_t>& labels,
                             TensorF* glogits) {
  int64_t n = logits.dim(0), k = logits.dim(1);
  if (static_cast<int64_t>(labels.size()) != n)
    throw ShapeError("cross entropy: label count mismatch");
  TensorF probs(logits.shape());
  kern::softmax_rows(logits.data(), probs.data(), n, k);
  double loss = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    int64_t y = labels[static_cast<size_t>(i)];
    if (y < 0 || y >= k) throw DataError(cat("label ", y, " outside [0, ", k, ")"));
    loss -= std::log(std::max(static_cast<double>(probs[i * k + y]), 1e-30));
  }
  loss /= static_cast<double>(n);
  if (glogits) {
    glogits->resize(logits.shape());
    for (int64_t i = 0; i < n; ++i) {
      int64_t y = labels[static_cast<size_t>(i)];
      for (int64_t j = 0; j < k; ++j)
        (*glogits)[i * k + j] =
            (probs[i * k + j] - (j == y ? 1.0f : 0.0f)) / static_cast<float>(n);
    }
  }
  return loss;
}

namespace {

class SgdOptimizer {
 public:
  SgdOptimizer(std::vector<Param*> params, double momentum, double weight_decay)
      : params_(std::move(params)), momentum_(momentum), weight_decay_(weight_decay) {
    velocity_.reserve(params_.size());
    for (Param* p : params_) velocity_.emplace_back(p->value.shape());
  }

  void step(double lr) {
    float mu = static_cast<float>(momentum_);
    float wd = static_cast<float>(weight_decay_);
    float eta = static_cast<float>(lr);
    for (size_t i = 0; i < params_.size(); ++i) {
      Param* p = params_[i];
      if (!p->trainable) continue;
      TensorF& v = velocity_[i];
      for (int64_t j = 0; j < p->value.numel(); ++j) {
        float g = p->grad[j] + wd * p->value[j];
        v[j] = mu * v[j] + g;
        p->value[j] -= eta * v[j];
      }
    }
  }

  void zero_grad() {
    for (Param* p : params_) p->grad.zero();
  }

 private:
  std::vector<Param*> params_;
  std::vector<TensorF> velocity_;
  double momentum_, weight_decay_;
};

TensorF stack_clips(const std::vector<VideoTensor>& clips, bool volumetric) {
  int64_t b = static_cast<int64_t>(clips.size());
  const VideoTensor& first = clips.front();
  int64_t f = first.frames(), c = first.channels(), h = first.height(), w = first.width();
  TensorF out;
  if (volumetric) {
    out.resize({b, c, f, h, w});
    for (int64_t i = 0; i < b; ++i) {
      VideoTensor v = clips[static_cast<size_t>(i)].to_layout(Layout::Volumetric3D);
      std::copy(v.values().data(), v.values().data() + v.values().numel(),
                out.data() + i * c * f * h * w);
    }
  } else {
    out.resize({b * f, c, h, w});
    for (int64_t i = 0; i < b; ++i) {
      const VideoTensor& v = clips[static_cast<size_t>(i)];
      std::copy(v.values().data(), v.values().data() + v.values().numel(),
                out.data() + i * f * c * h * w);
    }
  }
  return out;
}

}  // namespace

TrainResult train(AssembledModel& model, const FrameStore& store, SamplerConfig sampler,
                  const PreprocessSpec& prep, const TrainProtocol& protocol, uint64_t seed,
                  const std::string& out_dir) {
  if (store.videos().empty()) throw DataError("train: empty dataset");
  if (store.num_classes() > model.arch().num_classes)
    throw ConfigError(cat("dataset has ", store.num_classes(), " classes, model head has ",
                          model.arch().num_classes));
  fs::create_directories(out_dir);
  sampler.mode = SampleMode::Train;
  sampler.f = model.arch().frames;

  SgdOptimizer opt(model.params(), protocol.momentum, protocol.weight_decay);
  Rng shuffle_rng = Rng::derive(seed, {0x73687566ULL});
  Rng dropout_rng = Rng::derive(seed, {0x64726f70ULL});

  TrainResult result;
  result.metrics_csv = out_dir + "/metrics.csv";
  std::ofstream metrics(result.metrics_csv, std::ios::trunc);
  metrics << "epoch,lr,loss,top1,top5\n";

  const auto& videos = store.videos();
  int64_t n = static_cast<int64_t>(videos.size());
  std::vector<int64_t> order(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) order[static_cast<size_t>(i)] = i;

  result.best_checkpoint = out_dir + "/best.stzw";
  result.final_checkpoint = out_dir + "/final.stzw";
  double best_top1 = -1.0;

  for (int epoch = 0; epoch < protocol.epochs; ++epoch) {
    double lr = lr_at(protocol, static_cast<double>(epoch) / protocol.epochs);
    // deterministic shuffle per (seed, epoch)
    for (int64_t i = n - 1; i > 0; --i) {
      int64_t j = static_cast<int64_t>(shuffle_rng.bounded(static_cast<uint32_t>(i + 1)));
      std::swap(order[static_cast<size_t>(i)], order[static_cast<size_t>(j)]);
    }
    double loss_sum = 0.0;
    int64_t seen = 0, correct1 = 0, correct5 = 0;
    for (int64_t off = 0; off < n; off += protocol.batch_size) {
      int64_t bsz = std::min<int64_t>(protocol.batch_size, n - off);
      std::vector<VideoTensor> clips;
      std::vector<int64_t> labels;
      clips.reserve(static_cast<size_t>(bsz));
      for (int64_t bi = 0; bi < bsz; ++bi) {
        const VideoEntry& v = videos[static_cast<size_t>(order[static_cast<size_t>(off + bi)])];
        Rng vid_rng = Rng::derive(seed, {0x76696465ULL, static_cast<uint64_t>(epoch),
                                         static_cast<uint64_t>(order[static_cast<size_t>(off + bi)])});
        ClipIndexPlan plan = sample(sampler, v.num_frames, vid_rng);
        std::vector<Image> frames = store.load_clip(v, plan.clips.front());
        std::vector<VideoTensor> crops = preprocess(frames, prep, &vid_rng);
        clips.push_back(std::move(crops.front()));
        labels.push_back(v.label);
      }
      TensorF x = stack_clips(clips, model.volumetric());
      TensorF logits = model.forward_batch(x, bsz, /*training=*/true, &dropout_rng);
      TensorF glogits;
      double loss = softmax_cross_entropy(logits, labels, &glogits);
      if (!std::isfinite(loss))
        throw EngineError(cat("training diverged: non-finite loss at epoch ", epoch));
      model.backward_batch(glogits);
      opt.step(lr);
      opt.zero_grad();
      loss_sum += loss * static_cast<double>(bsz);
      // batch accuracy bookkeeping
      int64_t k = logits.dim(1);
      for (int64_t i = 0; i < bsz; ++i) {
        const float* row = logits.data() + i * k;
        int64_t arg = static_cast<int64_t>(std::max_element(row, row + k) - row);
        int64_t label = labels[static_cast<size_t>(i)];
        if (arg == label) ++correct1;
        int64_t better = 0;
        for (int64_t j = 0; j < k; ++j)
          if (row[j] > row[label]) ++better;
        if (better < 5) ++correct5;
        ++seen;
      }
    }
    double loss = loss_sum / static_cast<double>(seen);
    double top1 = 100.0 * static_cast<double>(correct1) / static_cast<double>(seen);
    double top5 = 100.0 * static_cast<double>(correct5) / static_cast<double>(seen);
    metrics << epoch << "," << lr << "," << loss << "," << top1 << "," << top5 << "\n";
    metrics.flush();
    result.epoch_losses.push_back(loss);
    result.final_train_top1 = top1;
    if (top1 > best_top1) {
      best_top1 = top1;
      result.best_train_top1 = top1;
      model.save_checkpoint(result.best_checkpoint);
    }
  }
  model.save_checkpoint(result.final_checkpoint);
  return result;
}

TrainResult train_progressive(const ArchSpec& spec, InitMode init, const AssembleOptions& aopts,
                              const std::vector<int64_t>& chain, const FrameStore& store,
                              SamplerConfig sampler, const PreprocessSpec& prep,
                              const TrainProtocol& protocol, uint64_t seed,
                              const std::string& out_dir) {
  if (chain.empty()) throw ConfigError("train_progressive: empty frame chain");
  for (size_t i = 1; i < chain.size(); ++i)
    if (chain[i] <= chain[i - 1])
      throw ConfigError(cat("train_progressive: chain must be strictly increasing (",
                            chain[i - 1], " -> ", chain[i], ")"));
  TrainResult last;
  std::string prev_final;
  for (size_t i = 0; i < chain.size(); ++i) {
    ArchSpec stage_spec = spec;
    stage_spec.frames = chain[i];
    std::string stage_dir = cat(out_dir, "/stage_", chain[i]);
    fs::create_directories(stage_dir);
    AssembledModel model = [&] {
      if (i == 0) return assemble(stage_spec, init, aopts);
      ArchSpec prev_spec = spec;
      prev_spec.frames = chain[i - 1];
      AssembleOptions o = aopts;
      o.checkpoint_path = prev_final;
      AssembledModel m = assemble(prev_spec, InitMode::FromCheckpoint, o);
      retarget_frames(m, chain[i]);
      return m;
    }();
    model.save_checkpoint(stage_dir + "/init.stzw");
    last = train(model, store, sampler, prep, protocol, seed + i, stage_dir);
    prev_final = last.final_checkpoint;
  }
  return last;
}

RunRecord evaluate(AssembledModel& model, const FrameStore& store, SamplerConfig sampler,
                   const PreprocessSpec& prep, const EvalProtocol& protocol,
                   const std::string& dataset_id, int64_t* predictions_per_video) {
  if (store.videos().empty()) throw DataError("evaluate: empty dataset");
  if (prep.crops_per_clip != protocol.crops)
    throw ConfigError(cat("preprocess yields ", prep.crops_per_clip, " crops but the protocol ",
                          "expects ", protocol.crops));
  sampler.f = model.arch().frames;
  sampler.mode = protocol.level == EvalLevel::Clip ? SampleMode::EvalClip : SampleMode::EvalVideo;
  sampler.m = protocol.clips;

  int64_t k = model.arch().num_classes;
  int64_t correct1 = 0, correct5 = 0, count = 0;
  int64_t preds_per_video = 0;
  int64_t crop_h = 0, crop_w = 0;
  Rng unused(0);
  for (const VideoEntry& v : store.videos()) {
    ClipIndexPlan plan = sample(sampler, v.num_frames, unused);
    std::vector<double> probs(static_cast<size_t>(k), 0.0);
    int64_t preds = 0;
    for (const auto& clip_indices : plan.clips) {
      std::vector<Image> frames = store.load_clip(v, clip_indices);
      std::vector<VideoTensor> crops = preprocess(frames, prep, nullptr);
      for (const VideoTensor& crop : crops) {
        VideoTensor input = model.volumetric() ? crop.to_layout(Layout::Volumetric3D) : crop;
        crop_h = crop.height();
        crop_w = crop.width();
        TensorF logits = model.forward_clip(input);
        TensorF p({1, k});
        kern::softmax_rows(logits.data(), p.data(), 1, k);
        for (int64_t j = 0; j < k; ++j) probs[static_cast<size_t>(j)] += p[j];
        ++preds;
      }
    }
    preds_per_video = preds;
    for (auto& pv : probs) pv /= static_cast<double>(preds);
    int64_t arg = static_cast<int64_t>(
        std::max_element(probs.begin(), probs.end()) - probs.begin());
    if (arg == v.label) ++correct1;
    int64_t better = 0;
    for (int64_t j = 0; j < k; ++j)
      if (probs[static_cast<size_t>(j)] > probs[static_cast<size_t>(v.label)]) ++better;
    if (better < 5) ++correct5;
    ++count;
  }
  if (predictions_per_video) *predictions_per_video = preds_per_video;

  RunRecord r;
  r.family = model.arch().family;
  r.backbone = model.arch().backbone;
  r.frames = model.arch().frames;
  r.temporal_pool = model.arch().temporal_pool;
  r.dataset = dataset_id;
  r.sampling = sampler.strategy;
  r.level = protocol.level;
  r.clips = protocol.level == EvalLevel::Clip ? 1 : protocol.clips;
  r.crops = protocol.crops;
  r.top1 = 100.0 * static_cast<double>(correct1) / static_cast<double>(count);
  r.top5 = 100.0 * static_cast<double>(correct5) / static_cast<double>(count);
  r.flops = count_flops(model, crop_h, crop_w);
  r.params = count_params(model);
  return r;
}

}  // namespace stzoo
