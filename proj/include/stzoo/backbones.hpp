#pragma once

#include <string>
#include <vector>

#include "stzoo/archspec.hpp"
#include "stzoo/layers.hpp"

namespace stzoo {

// Flat 2d layer graph with its annotations. Composite nodes (residual blocks,
// inception modules) carry their sublayers as children; pooling_positions and
// insertion_points index into `nodes`.
struct BackboneGraph {
  Backbone backbone = Backbone::TinyNet;
  int64_t num_classes = 1000;
  std::vector<ModulePtr> nodes;
  std::vector<int> pooling_positions;  // exactly five spatial downsampling sites
  std::vector<int> insertion_points;   // residual blocks / inception modules
  std::vector<std::string> stages;     // stage1..stage5 label per node
  int head_begin = 0;                  // index of the global average pool
  int64_t feature_channels = 0;

  void visit_params(const std::function<void(Param&)>& fn);
  void visit_buffers(const std::function<void(Buffer&)>& fn);
  int64_t param_count();
};

// Builds one of the four supported 2d backbones. With pretrained=true the
// weight file <weights_dir>/<backbone>.stzw is loaded (weights_dir defaults
// to $STZOO_WEIGHTS); a classifier whose shape disagrees with num_classes is
// left freshly initialized.
BackboneGraph build_backbone(Backbone name, bool pretrained, int64_t num_classes = 1000,
                             std::string weights_dir = "", uint64_t seed = 0);

// Plain conv/pool stack used by TinyNet; convs_per_stage > 1 deepens every
// stage without changing the annotation contract.
BackboneGraph build_conv_stack(const std::vector<int64_t>& channels, int convs_per_stage,
                               int64_t num_classes, uint64_t seed);

// Per-frame features from the 2d trunk (head excluded); the frame/batch axis
// is preserved. Requires spatial dims >= 32 for the five stride-2 stages.
TensorF forward_2d(BackboneGraph& graph, const VideoTensor& input);

// Fan-in uniform init for conv/fc weights, identity for batchnorm.
void init_scratch_weights(Module& root, Rng& rng);

// Named-array weight file round trip for a backbone graph.
void save_backbone_weights(BackboneGraph& graph, const std::string& path);
void load_backbone_weights(BackboneGraph& graph, const std::string& path);

}  // namespace stzoo
