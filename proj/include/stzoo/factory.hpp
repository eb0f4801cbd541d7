#pragma once

#include <string>
#include <vector>

#include "stzoo/archspec.hpp"
#include "stzoo/backbones.hpp"
#include "stzoo/layers.hpp"

namespace stzoo {

enum class InitMode { ImageNet, Scratch, FromCheckpoint };
enum class Consensus { AverageLogits, None };

InitMode init_mode_from_string(const std::string& s);
std::string to_string(InitMode m);

struct AssembleOptions {
  std::string weights_dir;       // ImageNet init; defaults to $STZOO_WEIGHTS
  std::string checkpoint_path;   // FromCheckpoint init
  bool force_spec = false;       // accept a checkpoint whose embedded spec differs
  double dropout = 0.0;          // before the classifier; off by default
  uint64_t seed = 0;             // scratch init stream
};

// Graph-walk counters for the structural contracts.
struct StructuralAudit {
  std::string model;
  int temporal_modules = 0;  // tam + tsm + conv1d + nln
  int tam = 0, tsm = 0, conv1d = 0, nln = 0;
  int temporal_pools = 0;
  int convs2d = 0;
  int convs3d = 0;
  int inflated_t3 = 0;       // 3d convs with temporal kernel 3 (factorized pairs excluded)
  int pointwise3d = 0;       // plain 3d convs with temporal kernel 1
  int factorized_pairs = 0;
  int64_t params = 0;
  bool consensus_average = false;
};

std::string format_audit(const StructuralAudit& a);

class AssembledModel {
 public:
  const ArchSpec& arch() const { return arch_; }
  bool volumetric() const { return volumetric_; }
  Consensus consensus() const { return consensus_; }

  // Stacked input: [B*frames, C, H, W] on the 2d path, [B, C, frames, H, W]
  // on the 3d path. Returns logits [B, num_classes].
  TensorF forward_batch(const TensorF& x, int64_t clips, bool training = false,
                        Rng* rng = nullptr);
  // Gradient of the loss w.r.t. logits in, gradient w.r.t. the input out.
  TensorF backward_batch(const TensorF& glogits);

  // Single clip; layout must match the family. Returns logits [num_classes].
  TensorF forward_clip(const VideoTensor& clip);
  // Per-frame logits before consensus (2d-path families only).
  TensorF forward_frames(const VideoTensor& clip);

  std::vector<Param*> params();
  std::vector<Buffer*> buffers();
  StructuralAudit audit();

  void save_checkpoint(const std::string& path);

  std::vector<ModulePtr>& nodes() { return nodes_; }

 private:
  friend AssembledModel assemble(const ArchSpec&, InitMode, const AssembleOptions&);
  friend void retarget_frames(AssembledModel&, int64_t);

  ArchSpec arch_;
  bool volumetric_ = false;
  Consensus consensus_ = Consensus::AverageLogits;
  std::vector<ModulePtr> nodes_;
  int64_t last_batch_ = 1;
  int64_t last_time_ = 1;
};

// Backbone + temporal modules + pooling + consensus head per the spec.
AssembledModel assemble(const ArchSpec& spec, InitMode init, const AssembleOptions& opts = {});

// Keeps every weight verbatim and changes only the input length; temporal
// modules are length-agnostic.
void retarget_frames(AssembledModel& model, int64_t new_k);

}  // namespace stzoo
