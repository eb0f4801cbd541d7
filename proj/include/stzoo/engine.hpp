#pragma once

#include <string>
#include <vector>

#include "stzoo/analysis.hpp"
#include "stzoo/datapipe.hpp"
#include "stzoo/factory.hpp"
#include "stzoo/protocols.hpp"

namespace stzoo {

struct TrainResult {
  std::string final_checkpoint;
  std::string best_checkpoint;
  std::string metrics_csv;
  double final_train_top1 = 0.0;  // 0-100
  double best_train_top1 = 0.0;
  std::vector<double> epoch_losses;
};

// Mean softmax cross entropy and its gradient w.r.t. the logits.
double softmax_cross_entropy(const TensorF& logits, const std::vector<int64_t>& labels,
                             TensorF* glogits);

// Single-process SGD with momentum and coupled weight decay. Per-epoch
// learning rate from lr_at(protocol, epoch/epochs). Aborts (throws) when the
// loss goes non-finite. Per-epoch CSV rows epoch,lr,loss,top1,top5 plus final
// and best checkpoints land under out_dir.
TrainResult train(AssembledModel& model, const FrameStore& store, SamplerConfig sampler,
                  const PreprocessSpec& prep, const TrainProtocol& protocol, uint64_t seed,
                  const std::string& out_dir);

// Progressive frame chain: stage i starts from stage i-1's final checkpoint
// retargeted to the next frame count; each stage leaves init.stzw and
// final.stzw under out_dir/stage_<k>/.
TrainResult train_progressive(const ArchSpec& spec, InitMode init, const AssembleOptions& aopts,
                              const std::vector<int64_t>& chain, const FrameStore& store,
                              SamplerConfig sampler, const PreprocessSpec& prep,
                              const TrainProtocol& protocol, uint64_t seed,
                              const std::string& out_dir);

// Clip- or video-level accuracy over the store. Video level averages class
// probabilities over clips*crops predictions per video before the argmax.
// predictions_per_video (if given) receives that product.
RunRecord evaluate(AssembledModel& model, const FrameStore& store, SamplerConfig sampler,
                   const PreprocessSpec& prep, const EvalProtocol& protocol,
                   const std::string& dataset_id, int64_t* predictions_per_video = nullptr);

}  // namespace stzoo
