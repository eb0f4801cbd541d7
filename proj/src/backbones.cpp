#include "stzoo/backbones.hpp"

#include <cmath>
#include <cstdlib>

#include "stzoo/common.hpp"
#include "stzoo/weights_io.hpp"

namespace stzoo {

namespace {

ModulePtr conv_unit(const std::string& name, int64_t cin, int64_t cout, int64_t k, int64_t stride,
                    int64_t pad, bool bias, bool bn, bool relu) {
  ConvOpts o;
  o.cin = cin;
  o.cout = cout;
  o.k = k;
  o.stride = stride;
  o.pad = pad;
  o.bias = bias;
  o.bn = bn;
  o.relu = relu;
  return std::make_unique<Conv2dNode>(name, o);
}

// conv(bias-free) + bn + relu, the unit both ResNet and InceptionV1 build on
ModulePtr bn_conv(const std::string& name, int64_t cin, int64_t cout, int64_t k, int64_t stride,
                  int64_t pad, bool relu = true) {
  return conv_unit(name, cin, cout, k, stride, pad, /*bias=*/false, /*bn=*/true, relu);
}

ModulePtr basic_block(const std::string& name, int64_t cin, int64_t planes, int64_t stride) {
  std::vector<ModulePtr> body;
  body.push_back(bn_conv(name + ".conv1", cin, planes, 3, stride, 1, true));
  body.push_back(bn_conv(name + ".conv2", planes, planes, 3, 1, 1, false));
  ModulePtr down;
  if (stride != 1 || cin != planes)
    down = bn_conv(name + ".downsample", cin, planes, 1, stride, 0, false);
  return std::make_unique<ResidualBlockNode>(name, std::move(body), std::move(down));
}

ModulePtr bottleneck_block(const std::string& name, int64_t cin, int64_t planes, int64_t stride) {
  int64_t out = planes * 4;
  std::vector<ModulePtr> body;
  body.push_back(bn_conv(name + ".conv1", cin, planes, 1, 1, 0, true));
  body.push_back(bn_conv(name + ".conv2", planes, planes, 3, stride, 1, true));
  body.push_back(bn_conv(name + ".conv3", planes, out, 1, 1, 0, false));
  ModulePtr down;
  if (stride != 1 || cin != out)
    down = bn_conv(name + ".downsample", cin, out, 1, stride, 0, false);
  return std::make_unique<ResidualBlockNode>(name, std::move(body), std::move(down));
}

BackboneGraph build_resnet(Backbone which, int64_t num_classes) {
  bool deep = which == Backbone::ResNet50;
  std::vector<int> layers = deep ? std::vector<int>{3, 4, 6, 3} : std::vector<int>{2, 2, 2, 2};
  int64_t expansion = deep ? 4 : 1;

  BackboneGraph g;
  g.backbone = which;
  g.num_classes = num_classes;
  g.nodes.push_back(bn_conv("conv1", 3, 64, 7, 2, 3, true));
  g.stages.push_back("stage1");
  g.nodes.push_back(std::make_unique<MaxPoolNode>("maxpool", 3, 2, 1));
  g.stages.push_back("stage1");
  g.pooling_positions = {0, 1};

  int64_t cin = 64;
  for (int li = 0; li < 4; ++li) {
    int64_t planes = 64 << li;
    int64_t stride = li == 0 ? 1 : 2;
    std::string stage = cat("stage", li + 2);
    for (int bi = 0; bi < layers[static_cast<size_t>(li)]; ++bi) {
      std::string name = cat("layer", li + 1, ".", bi);
      int64_t s = bi == 0 ? stride : 1;
      ModulePtr block = deep ? bottleneck_block(name, cin, planes, s)
                             : basic_block(name, cin, planes, s);
      if (bi == 0 && li > 0) g.pooling_positions.push_back(static_cast<int>(g.nodes.size()));
      g.insertion_points.push_back(static_cast<int>(g.nodes.size()));
      g.nodes.push_back(std::move(block));
      g.stages.push_back(stage);
      cin = planes * expansion;
    }
  }
  g.feature_channels = cin;
  g.head_begin = static_cast<int>(g.nodes.size());
  g.nodes.push_back(std::make_unique<GlobalAvgPoolNode>("avgpool"));
  g.stages.push_back("head");
  g.nodes.push_back(std::make_unique<FcNode>("fc", cin, num_classes));
  g.stages.push_back("head");
  return g;
}

ModulePtr inception_module(const std::string& name, int64_t cin, int64_t c1, int64_t c3r,
                           int64_t c3, int64_t c5r, int64_t c5, int64_t pp) {
  std::vector<std::vector<ModulePtr>> branches(4);
  branches[0].push_back(bn_conv(name + ".branch1", cin, c1, 1, 1, 0));
  branches[1].push_back(bn_conv(name + ".branch2.0", cin, c3r, 1, 1, 0));
  branches[1].push_back(bn_conv(name + ".branch2.1", c3r, c3, 3, 1, 1));
  branches[2].push_back(bn_conv(name + ".branch3.0", cin, c5r, 1, 1, 0));
  // kernel 3 in the "5x5" branch, matching the reference 2d model we mirror
  branches[2].push_back(bn_conv(name + ".branch3.1", c5r, c5, 3, 1, 1));
  branches[3].push_back(std::make_unique<MaxPoolNode>(name + ".branch4.pool", 3, 1, 1, true));
  branches[3].push_back(bn_conv(name + ".branch4.1", cin, pp, 1, 1, 0));
  return std::make_unique<InceptionModuleNode>(name, std::move(branches));
}

BackboneGraph build_inception_v1(int64_t num_classes) {
  BackboneGraph g;
  g.backbone = Backbone::InceptionV1;
  g.num_classes = num_classes;
  auto add = [&g](ModulePtr m, const std::string& stage) {
    g.nodes.push_back(std::move(m));
    g.stages.push_back(stage);
    return static_cast<int>(g.nodes.size()) - 1;
  };
  int p0 = add(bn_conv("conv1", 3, 64, 7, 2, 3), "stage1");
  int p1 = add(std::make_unique<MaxPoolNode>("maxpool1", 3, 2, 0, true), "stage1");
  add(bn_conv("conv2", 64, 64, 1, 1, 0), "stage2");
  add(bn_conv("conv3", 64, 192, 3, 1, 1), "stage2");
  int p2 = add(std::make_unique<MaxPoolNode>("maxpool2", 3, 2, 0, true), "stage2");
  auto inc = [&](const std::string& name, const std::string& stage, int64_t cin, int64_t c1,
                 int64_t c3r, int64_t c3, int64_t c5r, int64_t c5, int64_t pp) {
    g.insertion_points.push_back(
        add(inception_module(name, cin, c1, c3r, c3, c5r, c5, pp), stage));
  };
  inc("inception3a", "stage3", 192, 64, 96, 128, 16, 32, 32);
  inc("inception3b", "stage3", 256, 128, 128, 192, 32, 96, 64);
  int p3 = add(std::make_unique<MaxPoolNode>("maxpool3", 3, 2, 0, true), "stage3");
  inc("inception4a", "stage4", 480, 192, 96, 208, 16, 48, 64);
  inc("inception4b", "stage4", 512, 160, 112, 224, 24, 64, 64);
  inc("inception4c", "stage4", 512, 128, 128, 256, 24, 64, 64);
  inc("inception4d", "stage4", 512, 112, 144, 288, 32, 64, 64);
  inc("inception4e", "stage4", 528, 256, 160, 320, 32, 128, 128);
  int p4 = add(std::make_unique<MaxPoolNode>("maxpool4", 2, 2, 0, true), "stage4");
  inc("inception5a", "stage5", 832, 256, 160, 320, 32, 128, 128);
  inc("inception5b", "stage5", 832, 384, 192, 384, 48, 128, 128);
  g.pooling_positions = {p0, p1, p2, p3, p4};
  g.feature_channels = 1024;
  g.head_begin = static_cast<int>(g.nodes.size());
  add(std::make_unique<GlobalAvgPoolNode>("avgpool"), "head");
  add(std::make_unique<FcNode>("fc", 1024, num_classes), "head");
  return g;
}

void init_graph(BackboneGraph& g, uint64_t seed) {
  Rng rng = Rng::derive(seed, {0x6261636bULL});  // backbone init stream
  for (auto& n : g.nodes) init_scratch_weights(*n, rng);
}

}  // namespace

BackboneGraph build_conv_stack(const std::vector<int64_t>& channels, int convs_per_stage,
                               int64_t num_classes, uint64_t seed) {
  BackboneGraph g;
  g.backbone = Backbone::TinyNet;
  g.num_classes = num_classes;
  int64_t cin = 3;
  for (size_t si = 0; si < channels.size(); ++si) {
    std::string stage = cat("stage", si + 1);
    int64_t cout = channels[si];
    for (int ci = 0; ci < convs_per_stage; ++ci) {
      std::string name = convs_per_stage == 1 ? stage + ".conv" : cat(stage, ".conv", ci);
      g.nodes.push_back(conv_unit(name, cin, cout, 3, 1, 1, /*bias=*/true, /*bn=*/false,
                                  /*relu=*/true));
      g.stages.push_back(stage);
      cin = cout;
    }
    g.pooling_positions.push_back(static_cast<int>(g.nodes.size()));
    g.nodes.push_back(std::make_unique<MaxPoolNode>(stage + ".pool", 2, 2, 0));
    g.stages.push_back(stage);
    // modules insert after the stage2..stage5 pools
    if (si > 0) g.insertion_points.push_back(static_cast<int>(g.nodes.size()) - 1);
  }
  g.feature_channels = cin;
  g.head_begin = static_cast<int>(g.nodes.size());
  g.nodes.push_back(std::make_unique<GlobalAvgPoolNode>("avgpool"));
  g.stages.push_back("head");
  g.nodes.push_back(std::make_unique<FcNode>("fc", cin, num_classes));
  g.stages.push_back("head");
  init_graph(g, seed);
  return g;
}

void init_scratch_weights(Module& root, Rng& rng) {
  root.visit_tree([&rng](Module& m) {
    auto fan_in_init = [&rng](Param& w, Param* b, int64_t fan_in) {
      float bound = 1.0f / std::sqrt(static_cast<float>(fan_in));
      for (int64_t i = 0; i < w.value.numel(); ++i)
        w.value[i] = static_cast<float>(rng.uniform(-bound, bound));
      if (b && b->value.numel() > 0)
        for (int64_t i = 0; i < b->value.numel(); ++i)
          b->value[i] = static_cast<float>(rng.uniform(-bound, bound));
    };
    if (auto* c = dynamic_cast<Conv2dNode*>(&m)) {
      fan_in_init(c->weight(), &c->bias_param(), c->opts().cin * c->opts().k * c->opts().k);
    } else if (auto* c3 = dynamic_cast<Conv3dNode*>(&m)) {
      fan_in_init(c3->weight(), &c3->bias_param(),
                  c3->opts().cin * c3->opts().kt * c3->opts().k * c3->opts().k);
    } else if (auto* f = dynamic_cast<FcNode*>(&m)) {
      fan_in_init(f->weight(), &f->bias_param(), f->in_features());
    }
  });
}

void BackboneGraph::visit_params(const std::function<void(Param&)>& fn) {
  for (auto& n : nodes) n->visit_tree([&](Module& m) { m.visit_params(fn); });
}

void BackboneGraph::visit_buffers(const std::function<void(Buffer&)>& fn) {
  for (auto& n : nodes) n->visit_tree([&](Module& m) { m.visit_buffers(fn); });
}

int64_t BackboneGraph::param_count() {
  int64_t total = 0;
  visit_params([&total](Param& p) {
    if (p.trainable) total += p.value.numel();
  });
  return total;
}

BackboneGraph build_backbone(Backbone name, bool pretrained, int64_t num_classes,
                             std::string weights_dir, uint64_t seed) {
  BackboneGraph g;
  switch (name) {
    case Backbone::ResNet18:
    case Backbone::ResNet50:
      g = build_resnet(name, num_classes);
      init_graph(g, seed);
      break;
    case Backbone::InceptionV1:
      g = build_inception_v1(num_classes);
      init_graph(g, seed);
      break;
    case Backbone::TinyNet:
      g = build_conv_stack({8, 16, 32, 64, 64}, 1, num_classes, seed);
      break;
    default:
      throw ConfigError("unknown backbone");
  }
  if (pretrained) {
    if (weights_dir.empty()) {
      const char* env = std::getenv("STZOO_WEIGHTS");
      if (!env)
        throw DataError("pretrained weights requested but no weights dir "
                        "(pass one or set STZOO_WEIGHTS)");
      weights_dir = env;
    }
    load_backbone_weights(g, weights_dir + "/" + to_string(name) + ".stzw");
  }
  return g;
}

TensorF forward_2d(BackboneGraph& graph, const VideoTensor& input) {
  if (input.layout() != Layout::Batched2D)
    throw ShapeError("forward_2d expects a Batched2D clip");
  if (input.height() < 32 || input.width() < 32)
    throw ShapeError(cat("forward_2d: spatial dims too small (", input.height(), "x",
                         input.width(), "), need >= 32"));
  Ctx ctx;
  ctx.batch = input.frames();
  ctx.time = 1;
  TensorF v = input.values();
  for (int i = 0; i < graph.head_begin; ++i) v = graph.nodes[static_cast<size_t>(i)]->forward(v, ctx);
  return v;
}

void save_backbone_weights(BackboneGraph& graph, const std::string& path) {
  std::vector<NamedArray> arrays;
  graph.visit_params([&](Param& p) {
    arrays.push_back(NamedArray{p.name, p.value.shape(),
                                std::vector<float>(p.value.data(), p.value.data() + p.value.numel())});
  });
  graph.visit_buffers([&](Buffer& b) {
    arrays.push_back(NamedArray{b.name, b.value.shape(),
                                std::vector<float>(b.value.data(), b.value.data() + b.value.numel())});
  });
  nlohmann::json meta;
  meta["backbone"] = to_string(graph.backbone);
  meta["num_classes"] = graph.num_classes;
  save_archive(path, arrays, meta);
}

void load_backbone_weights(BackboneGraph& graph, const std::string& path) {
  Archive ar = load_archive(path);
  auto assign = [&](const std::string& name, TensorF& dst, bool allow_mismatch) -> bool {
    const NamedArray* a = ar.find(name);
    if (!a) throw DataError(cat("weight file ", path, " is missing array '", name, "'"));
    if (a->shape != dst.shape()) {
      if (allow_mismatch) return false;  // classifier head re-initialized for new class count
      throw DataError(cat("weight file ", path, ": shape mismatch for '", name, "'"));
    }
    std::copy(a->data.begin(), a->data.end(), dst.data());
    return true;
  };
  graph.visit_params([&](Param& p) {
    bool is_head = p.name == "fc.weight" || p.name == "fc.bias";
    assign(p.name, p.value, is_head);
  });
  graph.visit_buffers([&](Buffer& b) { assign(b.name, b.value, false); });
}

}  // namespace stzoo
