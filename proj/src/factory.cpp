#include "stzoo/factory.hpp"

#include <algorithm>
#include <cmath>

#include "stzoo/common.hpp"
#include "stzoo/config.hpp"
#include "stzoo/temporal.hpp"
#include "stzoo/weights_io.hpp"

namespace stzoo {

InitMode init_mode_from_string(const std::string& s) {
  if (s == "imagenet") return InitMode::ImageNet;
  if (s == "scratch") return InitMode::Scratch;
  if (s == "checkpoint") return InitMode::FromCheckpoint;
  throw ConfigError(cat("unknown init mode '", s, "' (imagenet|scratch|checkpoint)"));
}

std::string to_string(InitMode m) {
  switch (m) {
    case InitMode::ImageNet: return "imagenet";
    case InitMode::Scratch: return "scratch";
    case InitMode::FromCheckpoint: return "checkpoint";
  }
  throw ConfigError("bad init mode");
}

namespace {

// channel count flowing out of nodes[0..upto]
int64_t channels_after(const std::vector<ModulePtr>& nodes, int upto) {
  ClipShape s{8, 3, 256, 256};
  for (int i = 0; i <= upto; ++i) s = nodes[static_cast<size_t>(i)]->out_shape(s);
  return s.c;
}

ModulePtr make_temporal_module(Family family, const std::string& name, int64_t channels) {
  switch (family) {
    case Family::TAM: return std::make_unique<TamNode>(name + ".tam", channels);
    case Family::TSM: return std::make_unique<TsmNode>(name + ".tsm", channels);
    case Family::Conv1D: return std::make_unique<TemporalConv1dNode>(name + ".tconv", channels);
    default: throw ConfigError("family has no per-block temporal module");
  }
}

// delta kernel, exact identity
void init_tam_identity(TamNode& tam) {
  tam.weight().value.zero();
  for (int64_t c = 0; c < tam.channels(); ++c) tam.weight().value.at({c, 1}) = 1.0f;
}

// delta plus uniform noise so scratch training starts near identity but off
// the time-mirror symmetry point
void init_tam_scratch(TamNode& tam, Rng& rng) {
  init_tam_identity(tam);
  for (int64_t i = 0; i < tam.weight().value.numel(); ++i)
    tam.weight().value[i] += static_cast<float>(rng.uniform(-0.5, 0.5));
}

void init_tconv_identity(TemporalConv1dNode& tc) {
  tc.weight().value.zero();
  tc.bias_param().value.zero();
  for (int64_t c = 0; c < tc.channels(); ++c) tc.weight().value.at({c, c, 1}) = 1.0f;
}

void init_tconv_scratch(TemporalConv1dNode& tc, Rng& rng) {
  init_tconv_identity(tc);
  double a = 0.5 / std::sqrt(static_cast<double>(tc.channels()));
  for (int64_t i = 0; i < tc.weight().value.numel(); ++i)
    tc.weight().value[i] += static_cast<float>(rng.uniform(-a, a));
}

void init_temporal_conv3d_identity(Conv3dNode& conv) {
  // [C, C, 3, 1, 1]: center tap = identity
  conv.weight().value.zero();
  int64_t c = conv.opts().cout;
  for (int64_t i = 0; i < c; ++i) conv.weight().value.at({i, i, 1, 0, 0}) = 1.0f;
}

void init_nln(NlnNode& nln, Rng& rng) {
  double bound = 1.0 / std::sqrt(static_cast<double>(nln.theta().value.dim(1)));
  for (Param* p : {&nln.theta(), &nln.phi(), &nln.g()})
    for (int64_t i = 0; i < p->value.numel(); ++i)
      p->value[i] = static_cast<float>(rng.uniform(-bound, bound));
  nln.out_proj().value.zero();  // fresh block is an identity mapping
}

// ---- 3d conversion -------------------------------------------------------

struct To3dState {
  bool s3d = false;
  bool scratch = false;
  bool first_conv_done = false;
  Rng* rng = nullptr;
};

std::unique_ptr<Conv3dNode> inflate_conv(Conv2dNode& src, int64_t kt,
                                         Conv3dNode::Role role = Conv3dNode::Role::Plain) {
  ConvOpts o = src.opts();
  o.kt = kt;
  auto dst = std::make_unique<Conv3dNode>(src.name(), o, role);
  dst->weight().value = inflate(src.weight().value, kt);
  if (o.bias) dst->bias_param().value = src.bias_param().value;
  if (o.bn) {
    dst->bn_weight().value = src.bn_weight().value;
    dst->bn_bias().value = src.bn_bias().value;
    dst->bn_mean().value = src.bn_mean().value;
    dst->bn_var().value = src.bn_var().value;
  }
  return dst;
}

std::vector<ModulePtr> convert_node_3d(ModulePtr node, To3dState& st);

std::vector<ModulePtr> convert_seq_3d(std::vector<ModulePtr> seq, To3dState& st) {
  std::vector<ModulePtr> out;
  for (auto& m : seq) {
    auto conv = convert_node_3d(std::move(m), st);
    for (auto& c : conv) out.push_back(std::move(c));
  }
  return out;
}

std::vector<ModulePtr> convert_node_3d(ModulePtr node, To3dState& st) {
  std::vector<ModulePtr> out;
  if (auto* c2 = dynamic_cast<Conv2dNode*>(node.get())) {
    int64_t kt = c2->opts().k > 1 ? 3 : 1;  // pointwise convs stay pointwise in time
    bool is_first = !st.first_conv_done;
    st.first_conv_done = true;
    if (st.s3d && kt == 3 && !is_first) {
      FactorizedConv fc = factorize([&] {
        ConvOpts o = c2->opts();
        o.kt = 3;
        return o;
      }(), false);
      auto spatial = std::make_unique<Conv3dNode>(c2->name() + ".spatial", fc.spatial,
                                                  Conv3dNode::Role::FactorizedSpatial);
      spatial->weight().value = inflate(c2->weight().value, 1);
      auto temporal = std::make_unique<Conv3dNode>(c2->name() + ".temporal", fc.temporal,
                                                   Conv3dNode::Role::FactorizedTemporal);
      init_temporal_conv3d_identity(*temporal);
      if (st.scratch) {
        double a = 0.5 / std::sqrt(static_cast<double>(fc.temporal.cout));
        for (int64_t i = 0; i < temporal->weight().value.numel(); ++i)
          temporal->weight().value[i] += static_cast<float>(st.rng->uniform(-a, a));
      }
      if (fc.temporal.bias) temporal->bias_param().value = c2->bias_param().value;
      if (fc.temporal.bn) {
        temporal->bn_weight().value = c2->bn_weight().value;
        temporal->bn_bias().value = c2->bn_bias().value;
        temporal->bn_mean().value = c2->bn_mean().value;
        temporal->bn_var().value = c2->bn_var().value;
      }
      out.push_back(std::move(spatial));
      out.push_back(std::move(temporal));
    } else {
      out.push_back(inflate_conv(*c2, kt));
    }
    return out;
  }
  if (auto* rb = dynamic_cast<ResidualBlockNode*>(node.get())) {
    std::vector<ModulePtr> body = convert_seq_3d(std::move(rb->body()), st);
    ModulePtr down;
    if (rb->downsample()) {
      std::vector<ModulePtr> tmp;
      tmp.push_back(ModulePtr());
      // downsample is a plain 1x1 conv unit; rebuild it through the same path
      auto* dc = dynamic_cast<Conv2dNode*>(rb->downsample());
      if (!dc) throw Error("unexpected downsample node");
      down = inflate_conv(*dc, dc->opts().k > 1 ? 3 : 1);
    }
    out.push_back(std::make_unique<ResidualBlockNode>(rb->name(), std::move(body), std::move(down)));
    return out;
  }
  if (auto* im = dynamic_cast<InceptionModuleNode*>(node.get())) {
    std::vector<std::vector<ModulePtr>> branches;
    for (auto& br : im->branches()) branches.push_back(convert_seq_3d(std::move(br), st));
    out.push_back(std::make_unique<InceptionModuleNode>(im->name(), std::move(branches)));
    return out;
  }
  // pools, avgpool, fc operate on either layout unchanged
  out.push_back(std::move(node));
  return out;
}

int find_node(const std::vector<ModulePtr>& nodes, const std::string& name) {
  for (size_t i = 0; i < nodes.size(); ++i)
    if (nodes[i]->name() == name) return static_cast<int>(i);
  throw Error(cat("graph node '", name, "' not found"));
}

}  // namespace

AssembledModel assemble(const ArchSpec& spec, InitMode init, const AssembleOptions& opts) {
  auto violations = validate(spec);
  if (!violations.empty()) {
    std::string msg = "invalid spec:";
    for (const auto& v : violations) msg += "\n  - " + v;
    throw ConfigError(msg);
  }

  BackboneGraph bb = build_backbone(spec.backbone, init == InitMode::ImageNet, spec.num_classes,
                                    opts.weights_dir, opts.seed);
  bool scratch = init == InitMode::Scratch;
  Rng rng = Rng::derive(opts.seed, {0x74656d70ULL});  // temporal-module init stream

  AssembledModel model;
  model.arch_ = spec;
  model.volumetric_ = is_volumetric(spec.family);
  model.consensus_ = model.volumetric_ ? Consensus::None : Consensus::AverageLogits;

  // resolve anchors by name before any mutation shifts indices
  std::vector<std::string> tp_sites;
  for (size_t i = bb.pooling_positions.size() - 3; i < bb.pooling_positions.size(); ++i)
    tp_sites.push_back(bb.nodes[static_cast<size_t>(bb.pooling_positions[i])]->name());

  std::vector<ModulePtr>& nodes = bb.nodes;

  if (has_placed_modules(spec.family)) {
    std::vector<int> selected = place_modules(bb.insertion_points, spec.placement);
    for (auto it = selected.rbegin(); it != selected.rend(); ++it) {
      int idx = *it;
      Module& host = *nodes[static_cast<size_t>(idx)];
      if (auto* rb = dynamic_cast<ResidualBlockNode*>(&host)) {
        // non-identity path of the residual block; channels at the block input
        auto* first = dynamic_cast<Conv2dNode*>(rb->body().front().get());
        if (!first) throw Error("residual block without a leading conv");
        ModulePtr mod = make_temporal_module(spec.family, rb->name(), first->opts().cin);
        if (auto* tam = dynamic_cast<TamNode*>(mod.get()))
          scratch ? init_tam_scratch(*tam, rng) : init_tam_identity(*tam);
        if (auto* tc = dynamic_cast<TemporalConv1dNode*>(mod.get()))
          scratch ? init_tconv_scratch(*tc, rng) : init_tconv_identity(*tc);
        rb->set_temporal(std::move(mod));
      } else {
        // standalone module right after the host (inception module / stage pool)
        int64_t ch = channels_after(nodes, idx);
        ModulePtr mod = make_temporal_module(spec.family, host.name(), ch);
        if (auto* tam = dynamic_cast<TamNode*>(mod.get()))
          scratch ? init_tam_scratch(*tam, rng) : init_tam_identity(*tam);
        if (auto* tc = dynamic_cast<TemporalConv1dNode*>(mod.get()))
          scratch ? init_tconv_scratch(*tc, rng) : init_tconv_identity(*tc);
        nodes.insert(nodes.begin() + idx + 1, std::move(mod));
      }
    }
  }

  if (spec.family == Family::TSN_NLN) {
    if (spec.backbone != Backbone::ResNet18 && spec.backbone != Backbone::ResNet50)
      throw ConfigError(cat("TSN+NLN requires a ResNet backbone, got ", to_string(spec.backbone)));
    // 3 blocks into stage2, 2 into stage3, spread over the stage's blocks
    struct StagePlan {
      const char* stage;
      int count;
    };
    std::vector<std::pair<int, ModulePtr>> inserts;
    for (StagePlan plan : {StagePlan{"stage2", 3}, StagePlan{"stage3", 2}}) {
      std::vector<int> block_idx;
      for (size_t i = 0; i < nodes.size(); ++i)
        if (bb.stages[i] == plan.stage && nodes[i]->kind() == NodeKind::ResidualBlock)
          block_idx.push_back(static_cast<int>(i));
      int nb = static_cast<int>(block_idx.size());
      for (int j = 0; j < plan.count; ++j) {
        int bi = block_idx[static_cast<size_t>(j * nb / plan.count)];
        int64_t ch = channels_after(nodes, bi);
        auto nln = std::make_unique<NlnNode>(cat(nodes[static_cast<size_t>(bi)]->name(), ".nln", j),
                                             ch);
        init_nln(*nln, rng);
        inserts.emplace_back(bi, std::move(nln));
      }
    }
    std::stable_sort(inserts.begin(), inserts.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    for (auto& [idx, mod] : inserts) nodes.insert(nodes.begin() + idx + 1, std::move(mod));
  }

  if (model.volumetric_) {
    To3dState st;
    st.s3d = spec.family == Family::S3D;
    st.scratch = scratch;
    st.rng = &rng;
    std::vector<ModulePtr> converted = convert_seq_3d(std::move(nodes), st);
    nodes = std::move(converted);
  }

  if (spec.temporal_pool) {
    // co-located with the last three spatial poolings, innermost first
    for (auto it = tp_sites.rbegin(); it != tp_sites.rend(); ++it) {
      int idx = find_node(nodes, *it);
      nodes.insert(nodes.begin() + idx + 1,
                   std::make_unique<TemporalMaxPoolNode>(*it + ".tpool"));
    }
  }

  if (opts.dropout > 0.0) {
    int fc_idx = find_node(nodes, "fc");
    nodes.insert(nodes.begin() + fc_idx, std::make_unique<DropoutNode>("dropout", opts.dropout));
  }

  model.nodes_ = std::move(nodes);

  if (init == InitMode::FromCheckpoint) {
    if (opts.checkpoint_path.empty()) throw ConfigError("FromCheckpoint needs a checkpoint path");
    Archive ar = load_archive(opts.checkpoint_path);
    if (!ar.meta.contains("archspec"))
      throw DataError(cat(opts.checkpoint_path, ": not a checkpoint (no embedded spec)"));
    ArchSpec embedded = archspec_from_json(ar.meta.at("archspec"));
    if (!(embedded == spec) && !opts.force_spec)
      throw ConfigError(cat("checkpoint spec ", canonical_name(embedded), "/frames=",
                            embedded.frames, " does not match requested ", canonical_name(spec),
                            "/frames=", spec.frames, " (use --force-spec to override)"));
    size_t used = 0;
    auto assign = [&](const std::string& name, TensorF& dst) {
      const NamedArray* a = ar.find(name);
      if (!a) {
        if (opts.force_spec) return;
        throw DataError(cat("checkpoint is missing array '", name, "'"));
      }
      if (a->shape != dst.shape()) {
        if (opts.force_spec) return;
        throw DataError(cat("checkpoint shape mismatch for '", name, "'"));
      }
      std::copy(a->data.begin(), a->data.end(), dst.data());
      ++used;
    };
    for (Param* p : model.params()) assign(p->name, p->value);
    for (Buffer* b : model.buffers()) assign(b->name, b->value);
    if (!opts.force_spec && used != ar.arrays.size())
      throw DataError("checkpoint carries arrays unknown to this model");
  }

  return model;
}

void retarget_frames(AssembledModel& model, int64_t new_k) {
  ArchSpec next = model.arch_;
  next.frames = new_k;
  auto violations = validate(next);
  if (!violations.empty())
    throw ConfigError(cat("retarget_frames to ", new_k, ": ", violations.front()));
  model.arch_.frames = new_k;
}

// ---------------------------------------------------------------------------
// AssembledModel
// ---------------------------------------------------------------------------

TensorF AssembledModel::forward_batch(const TensorF& x, int64_t clips, bool training, Rng* rng) {
  Ctx ctx;
  ctx.batch = clips;
  ctx.time = arch_.frames;
  ctx.training = training;
  ctx.rng = rng;
  if (volumetric_) {
    if (x.ndim() != 5 || x.dim(0) != clips || x.dim(2) != arch_.frames)
      throw ShapeError(cat(canonical_name(arch_), ": expected [", clips, ", C, ", arch_.frames,
                           ", H, W] input"));
  } else {
    if (x.ndim() != 4 || x.dim(0) != clips * arch_.frames)
      throw ShapeError(cat(canonical_name(arch_), ": expected [", clips * arch_.frames,
                           ", C, H, W] input"));
  }
  TensorF v = x;
  for (auto& n : nodes_) v = n->forward(v, ctx);
  last_batch_ = clips;
  last_time_ = ctx.time;
  if (consensus_ == Consensus::AverageLogits) {
    // v is [B*T', K]; average per-frame logits
    int64_t k = v.dim(1);
    TensorF logits({clips, k});
    for (int64_t b = 0; b < clips; ++b)
      for (int64_t t = 0; t < last_time_; ++t)
        for (int64_t j = 0; j < k; ++j) logits[b * k + j] += v[(b * last_time_ + t) * k + j];
    float inv = 1.0f / static_cast<float>(last_time_);
    for (int64_t i = 0; i < logits.numel(); ++i) logits[i] *= inv;
    return logits;
  }
  return v;
}

TensorF AssembledModel::backward_batch(const TensorF& glogits) {
  TensorF g = glogits;
  if (consensus_ == Consensus::AverageLogits) {
    int64_t k = glogits.dim(1);
    TensorF gf({last_batch_ * last_time_, k});
    float inv = 1.0f / static_cast<float>(last_time_);
    for (int64_t b = 0; b < last_batch_; ++b)
      for (int64_t t = 0; t < last_time_; ++t)
        for (int64_t j = 0; j < k; ++j)
          gf[(b * last_time_ + t) * k + j] = glogits[b * k + j] * inv;
    g = std::move(gf);
  }
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) g = (*it)->backward(g);
  return g;
}

TensorF AssembledModel::forward_clip(const VideoTensor& clip) {
  Layout want = volumetric_ ? Layout::Volumetric3D : Layout::Batched2D;
  if (clip.layout() != want)
    throw ShapeError(cat(canonical_name(arch_), ": clip layout mismatch (family needs ",
                         want == Layout::Batched2D ? "Batched2D" : "Volumetric3D", ")"));
  if (clip.frames() != arch_.frames)
    throw ShapeError(cat(canonical_name(arch_), ": clip has ", clip.frames(), " frames, model (",
                         arch_.frames, ")"));
  TensorF v = clip.values();
  if (volumetric_)
    v.reshape({1, clip.channels(), clip.frames(), clip.height(), clip.width()});
  TensorF logits = forward_batch(v, 1);
  logits.reshape({logits.dim(1)});
  return logits;
}

TensorF AssembledModel::forward_frames(const VideoTensor& clip) {
  if (volumetric_) throw ShapeError("forward_frames applies to 2d-path families only");
  if (clip.layout() != Layout::Batched2D) throw ShapeError("forward_frames expects Batched2D");
  if (clip.frames() != arch_.frames)
    throw ShapeError(cat("clip has ", clip.frames(), " frames, model (", arch_.frames, ")"));
  Ctx ctx;
  ctx.batch = 1;
  ctx.time = arch_.frames;
  TensorF v = clip.values();
  for (auto& n : nodes_) v = n->forward(v, ctx);
  return v;  // [T', K]
}

std::vector<Param*> AssembledModel::params() {
  std::vector<Param*> out;
  for (auto& n : nodes_)
    n->visit_tree([&](Module& m) { m.visit_params([&](Param& p) { out.push_back(&p); }); });
  return out;
}

std::vector<Buffer*> AssembledModel::buffers() {
  std::vector<Buffer*> out;
  for (auto& n : nodes_)
    n->visit_tree([&](Module& m) { m.visit_buffers([&](Buffer& b) { out.push_back(&b); }); });
  return out;
}

StructuralAudit AssembledModel::audit() {
  StructuralAudit a;
  a.model = canonical_name(arch_);
  a.consensus_average = consensus_ == Consensus::AverageLogits;
  for (auto& n : nodes_) {
    n->visit_tree([&](Module& m) {
      switch (m.kind()) {
        case NodeKind::Tam: ++a.tam; break;
        case NodeKind::Tsm: ++a.tsm; break;
        case NodeKind::TemporalConv1d: ++a.conv1d; break;
        case NodeKind::Nln: ++a.nln; break;
        case NodeKind::TemporalMaxPool: ++a.temporal_pools; break;
        case NodeKind::Conv2d: ++a.convs2d; break;
        case NodeKind::Conv3d: {
          ++a.convs3d;
          auto& c = dynamic_cast<Conv3dNode&>(m);
          if (c.role() == Conv3dNode::Role::FactorizedTemporal)
            ++a.factorized_pairs;
          else if (c.opts().kt == 3)
            ++a.inflated_t3;
          else if (c.role() == Conv3dNode::Role::Plain)
            ++a.pointwise3d;
          break;
        }
        default: break;
      }
      m.visit_params([&](Param& p) {
        if (p.trainable) a.params += p.value.numel();
      });
    });
  }
  a.temporal_modules = a.tam + a.tsm + a.conv1d + a.nln;
  return a;
}

std::string format_audit(const StructuralAudit& a) {
  std::ostringstream os;
  os << "model: " << a.model << "\n"
     << "temporal_modules: " << a.temporal_modules << " (tam=" << a.tam << " tsm=" << a.tsm
     << " conv1d=" << a.conv1d << " nln=" << a.nln << ")\n"
     << "temporal_pools: " << a.temporal_pools << "\n"
     << "convs2d: " << a.convs2d << "\n"
     << "convs3d: " << a.convs3d << " (temporal3=" << a.inflated_t3
     << " pointwise=" << a.pointwise3d << " factorized_pairs=" << a.factorized_pairs << ")\n"
     << "params: " << a.params << "\n"
     << "consensus: " << (a.consensus_average ? "average_logits" : "none") << "\n";
  return os.str();
}

void AssembledModel::save_checkpoint(const std::string& path) {
  std::vector<NamedArray> arrays;
  for (Param* p : params())
    arrays.push_back(NamedArray{p->name, p->value.shape(),
                                std::vector<float>(p->value.data(),
                                                   p->value.data() + p->value.numel())});
  for (Buffer* b : buffers())
    arrays.push_back(NamedArray{b->name, b->value.shape(),
                                std::vector<float>(b->value.data(),
                                                   b->value.data() + b->value.numel())});
  nlohmann::json meta;
  meta["format"] = "checkpoint";
  meta["archspec"] = archspec_to_json(arch_);
  save_archive(path, arrays, meta);
}

}  // namespace stzoo
