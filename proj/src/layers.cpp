#include "stzoo/layers.hpp"

#include <cstring>

#include "stzoo/common.hpp"
#include "stzoo/kernels.hpp"

namespace stzoo {

std::string to_string(NodeKind k) {
  switch (k) {
    case NodeKind::Conv2d: return "conv2d";
    case NodeKind::Conv3d: return "conv3d";
    case NodeKind::MaxPool: return "maxpool";
    case NodeKind::AvgPool: return "avgpool";
    case NodeKind::Fc: return "fc";
    case NodeKind::ResidualBlock: return "residual_block";
    case NodeKind::InceptionModule: return "inception_module";
    case NodeKind::Dropout: return "dropout";
    case NodeKind::Tam: return "tam";
    case NodeKind::Tsm: return "tsm";
    case NodeKind::TemporalConv1d: return "temporal_conv1d";
    case NodeKind::Nln: return "nln";
    case NodeKind::TemporalMaxPool: return "temporal_maxpool";
  }
  throw Error("bad node kind");
}

void Module::visit_tree(const std::function<void(Module&)>& fn) {
  fn(*this);
  visit_children([&](Module& m) { m.visit_tree(fn); });
}

namespace {

void expect_ndim(const TensorF& x, int a, int b, const std::string& who) {
  if (x.ndim() != a && x.ndim() != b)
    throw ShapeError(cat(who, ": expected ", a, "-d or ", b, "-d input, got ", x.ndim(), "-d"));
}

}  // namespace

// ---------------------------------------------------------------------------
// Conv2dNode
// ---------------------------------------------------------------------------

Conv2dNode::Conv2dNode(std::string name, ConvOpts opts) : Module(std::move(name)), opts_(opts) {
  weight_.name = this->name() + ".weight";
  weight_.value.resize({opts_.cout, opts_.cin, opts_.k, opts_.k});
  weight_.grad.resize(weight_.value.shape());
  if (opts_.bias) {
    bias_.name = this->name() + ".bias";
    bias_.value.resize({opts_.cout});
    bias_.grad.resize({opts_.cout});
  }
  if (opts_.bn) {
    bn_weight_.name = this->name() + ".bn.weight";
    bn_weight_.value = TensorF::full({opts_.cout}, 1.0f);
    bn_weight_.grad.resize({opts_.cout});
    bn_bias_.name = this->name() + ".bn.bias";
    bn_bias_.value.resize({opts_.cout});
    bn_bias_.grad.resize({opts_.cout});
    bn_mean_.name = this->name() + ".bn.running_mean";
    bn_mean_.value.resize({opts_.cout});
    bn_var_.name = this->name() + ".bn.running_var";
    bn_var_.value = TensorF::full({opts_.cout}, 1.0f);
  }
}

void Conv2dNode::visit_params(const std::function<void(Param&)>& fn) {
  fn(weight_);
  if (opts_.bias) fn(bias_);
  if (opts_.bn) {
    fn(bn_weight_);
    fn(bn_bias_);
  }
}

void Conv2dNode::visit_buffers(const std::function<void(Buffer&)>& fn) {
  if (opts_.bn) {
    fn(bn_mean_);
    fn(bn_var_);
  }
}

TensorF Conv2dNode::forward(const TensorF& x, Ctx& ctx) {
  if (x.ndim() != 4) throw ShapeError(cat(name(), ": conv2d expects a 4-d input"));
  int64_t n = x.dim(0), h = x.dim(2), w = x.dim(3);
  if (x.dim(1) != opts_.cin)
    throw ShapeError(cat(name(), ": channel mismatch, got ", x.dim(1), " want ", opts_.cin));
  int64_t ho = kern::conv_out(h, opts_.k, opts_.stride, opts_.pad);
  int64_t wo = kern::conv_out(w, opts_.k, opts_.stride, opts_.pad);
  if (ho < 1 || wo < 1) throw ShapeError(cat(name(), ": spatial dims too small (", h, "x", w, ")"));
  TensorF y({n, opts_.cout, ho, wo});
  kern::conv2d_forward(x.data(), weight_.value.data(), opts_.bias ? bias_.value.data() : nullptr,
                       y.data(), n, opts_.cin, h, w, opts_.cout, opts_.k, opts_.stride, opts_.pad,
                       ws_);
  cached_ = ctx.training;
  if (cached_) in_ = x;
  if (opts_.bn) {
    if (cached_) preact_ = y;
    save_mean_.resize({opts_.cout});
    save_invstd_.resize({opts_.cout});
    TensorF z(y.shape());
    kern::bn_forward(y.data(), z.data(), bn_weight_.value.data(), bn_bias_.value.data(),
                     bn_mean_.value.data(), bn_var_.value.data(), save_mean_.data(),
                     save_invstd_.data(), n, opts_.cout, ho * wo, 0.1f, 1e-5f, ctx.training);
    y = std::move(z);
  }
  if (opts_.relu) kern::relu_forward(y.data(), y.numel());
  if (cached_ && opts_.relu) out_ = y;
  return y;
}

TensorF Conv2dNode::backward(const TensorF& gout) {
  if (!cached_) throw EngineError(cat(name(), ": backward without training-mode forward"));
  TensorF g = gout;
  if (opts_.relu) kern::relu_backward(out_.data(), g.data(), g.numel());
  int64_t n = in_.dim(0), h = in_.dim(2), w = in_.dim(3);
  int64_t ho = g.dim(2), wo = g.dim(3);
  if (opts_.bn) {
    TensorF g2(g.shape());
    kern::bn_backward(preact_.data(), g.data(), bn_weight_.value.data(), save_mean_.data(),
                      save_invstd_.data(), g2.data(), bn_weight_.grad.data(), bn_bias_.grad.data(),
                      n, opts_.cout, ho * wo);
    g = std::move(g2);
  }
  TensorF gx(in_.shape());
  kern::conv2d_backward(in_.data(), weight_.value.data(), g.data(), gx.data(),
                        weight_.grad.data(), opts_.bias ? bias_.grad.data() : nullptr, n, opts_.cin,
                        h, w, opts_.cout, opts_.k, opts_.stride, opts_.pad, ws_);
  return gx;
}

ClipShape Conv2dNode::out_shape(const ClipShape& in) const {
  ClipShape out = in;
  out.c = opts_.cout;
  out.h = kern::conv_out(in.h, opts_.k, opts_.stride, opts_.pad);
  out.w = kern::conv_out(in.w, opts_.k, opts_.stride, opts_.pad);
  return out;
}

int64_t Conv2dNode::macs(const ClipShape& in) const {
  ClipShape o = out_shape(in);
  return o.t * opts_.cout * o.h * o.w * opts_.cin * opts_.k * opts_.k;
}

// ---------------------------------------------------------------------------
// Conv3dNode
// ---------------------------------------------------------------------------

Conv3dNode::Conv3dNode(std::string name, ConvOpts opts, Role role)
    : Module(std::move(name)), opts_(opts), role_(role) {
  weight_.name = this->name() + ".weight";
  weight_.value.resize({opts_.cout, opts_.cin, opts_.kt, opts_.k, opts_.k});
  weight_.grad.resize(weight_.value.shape());
  if (opts_.bias) {
    bias_.name = this->name() + ".bias";
    bias_.value.resize({opts_.cout});
    bias_.grad.resize({opts_.cout});
  }
  if (opts_.bn) {
    bn_weight_.name = this->name() + ".bn.weight";
    bn_weight_.value = TensorF::full({opts_.cout}, 1.0f);
    bn_weight_.grad.resize({opts_.cout});
    bn_bias_.name = this->name() + ".bn.bias";
    bn_bias_.value.resize({opts_.cout});
    bn_bias_.grad.resize({opts_.cout});
    bn_mean_.name = this->name() + ".bn.running_mean";
    bn_mean_.value.resize({opts_.cout});
    bn_var_.name = this->name() + ".bn.running_var";
    bn_var_.value = TensorF::full({opts_.cout}, 1.0f);
  }
}

void Conv3dNode::visit_params(const std::function<void(Param&)>& fn) {
  fn(weight_);
  if (opts_.bias) fn(bias_);
  if (opts_.bn) {
    fn(bn_weight_);
    fn(bn_bias_);
  }
}

void Conv3dNode::visit_buffers(const std::function<void(Buffer&)>& fn) {
  if (opts_.bn) {
    fn(bn_mean_);
    fn(bn_var_);
  }
}

TensorF Conv3dNode::forward(const TensorF& x, Ctx& ctx) {
  if (x.ndim() != 5) throw ShapeError(cat(name(), ": conv3d expects a 5-d input"));
  int64_t b = x.dim(0), t = x.dim(2), h = x.dim(3), w = x.dim(4);
  if (x.dim(1) != opts_.cin)
    throw ShapeError(cat(name(), ": channel mismatch, got ", x.dim(1), " want ", opts_.cin));
  int64_t ho = kern::conv_out(h, opts_.k, opts_.stride, opts_.pad);
  int64_t wo = kern::conv_out(w, opts_.k, opts_.stride, opts_.pad);
  if (ho < 1 || wo < 1) throw ShapeError(cat(name(), ": spatial dims too small"));
  TensorF y({b, opts_.cout, t, ho, wo});
  kern::conv3d_forward(x.data(), weight_.value.data(), opts_.bias ? bias_.value.data() : nullptr,
                       y.data(), b, opts_.cin, t, h, w, opts_.cout, opts_.kt, opts_.k, opts_.stride,
                       opts_.pad, ws_);
  cached_ = ctx.training;
  if (cached_) in_ = x;
  if (opts_.bn) {
    if (cached_) preact_ = y;
    save_mean_.resize({opts_.cout});
    save_invstd_.resize({opts_.cout});
    TensorF z(y.shape());
    kern::bn_forward(y.data(), z.data(), bn_weight_.value.data(), bn_bias_.value.data(),
                     bn_mean_.value.data(), bn_var_.value.data(), save_mean_.data(),
                     save_invstd_.data(), b, opts_.cout, t * ho * wo, 0.1f, 1e-5f, ctx.training);
    y = std::move(z);
  }
  if (opts_.relu) kern::relu_forward(y.data(), y.numel());
  if (cached_ && opts_.relu) out_ = y;
  return y;
}

TensorF Conv3dNode::backward(const TensorF& gout) {
  if (!cached_) throw EngineError(cat(name(), ": backward without training-mode forward"));
  TensorF g = gout;
  if (opts_.relu) kern::relu_backward(out_.data(), g.data(), g.numel());
  int64_t b = in_.dim(0), t = in_.dim(2), h = in_.dim(3), w = in_.dim(4);
  int64_t ho = g.dim(3), wo = g.dim(4);
  if (opts_.bn) {
    TensorF g2(g.shape());
    kern::bn_backward(preact_.data(), g.data(), bn_weight_.value.data(), save_mean_.data(),
                      save_invstd_.data(), g2.data(), bn_weight_.grad.data(), bn_bias_.grad.data(),
                      b, opts_.cout, t * ho * wo);
    g = std::move(g2);
  }
  TensorF gx(in_.shape());
  kern::conv3d_backward(in_.data(), weight_.value.data(), g.data(), gx.data(),
                        weight_.grad.data(), opts_.bias ? bias_.grad.data() : nullptr, b, opts_.cin,
                        t, h, w, opts_.cout, opts_.kt, opts_.k, opts_.stride, opts_.pad, ws_);
  return gx;
}

ClipShape Conv3dNode::out_shape(const ClipShape& in) const {
  ClipShape out = in;
  out.c = opts_.cout;
  out.h = kern::conv_out(in.h, opts_.k, opts_.stride, opts_.pad);
  out.w = kern::conv_out(in.w, opts_.k, opts_.stride, opts_.pad);
  return out;
}

int64_t Conv3dNode::macs(const ClipShape& in) const {
  ClipShape o = out_shape(in);
  return opts_.cout * o.t * o.h * o.w * opts_.cin * opts_.kt * opts_.k * opts_.k;
}

// ---------------------------------------------------------------------------
// MaxPoolNode
// ---------------------------------------------------------------------------

MaxPoolNode::MaxPoolNode(std::string name, int64_t k, int64_t stride, int64_t pad, bool ceil_mode)
    : Module(std::move(name)), k_(k), stride_(stride), pad_(pad), ceil_mode_(ceil_mode) {}

TensorF MaxPoolNode::forward(const TensorF& x, Ctx& ctx) {
  expect_ndim(x, 4, 5, name());
  int64_t h = x.dim(x.ndim() - 2), w = x.dim(x.ndim() - 1);
  int64_t ho = kern::pool_out(h, k_, stride_, pad_, ceil_mode_);
  int64_t wo = kern::pool_out(w, k_, stride_, pad_, ceil_mode_);
  if (ho < 1 || wo < 1) throw ShapeError(cat(name(), ": spatial dims too small"));
  int64_t planes = x.numel() / (h * w);
  std::vector<int64_t> oshape(x.shape());
  oshape[oshape.size() - 2] = ho;
  oshape[oshape.size() - 1] = wo;
  TensorF y(oshape);
  argmax_.resize(static_cast<size_t>(planes * ho * wo));
  kern::maxpool2d_forward(x.data(), y.data(), ctx.training ? argmax_.data() : nullptr, planes, h,
                          w, k_, stride_, pad_, ceil_mode_);
  in_shape_ = x.shape();
  return y;
}

TensorF MaxPoolNode::backward(const TensorF& gout) {
  int64_t h = in_shape_[in_shape_.size() - 2], w = in_shape_[in_shape_.size() - 1];
  int64_t ho = gout.dim(gout.ndim() - 2), wo = gout.dim(gout.ndim() - 1);
  int64_t planes = gout.numel() / (ho * wo);
  TensorF gx(in_shape_);
  kern::maxpool2d_backward(gout.data(), argmax_.data(), gx.data(), planes, h * w, ho * wo);
  return gx;
}

ClipShape MaxPoolNode::out_shape(const ClipShape& in) const {
  ClipShape out = in;
  out.h = kern::pool_out(in.h, k_, stride_, pad_, ceil_mode_);
  out.w = kern::pool_out(in.w, k_, stride_, pad_, ceil_mode_);
  return out;
}

// ---------------------------------------------------------------------------
// GlobalAvgPoolNode
// ---------------------------------------------------------------------------

TensorF GlobalAvgPoolNode::forward(const TensorF& x, Ctx&) {
  expect_ndim(x, 4, 5, name());
  int64_t n = x.dim(0), c = x.dim(1);
  int64_t inner = x.numel() / (n * c);
  TensorF y({n, c});
  const float* src = x.data();
  float* dst = y.data();
  for (int64_t i = 0; i < n * c; ++i) {
    float acc = 0.0f;
    for (int64_t j = 0; j < inner; ++j) acc += src[i * inner + j];
    dst[i] = acc / static_cast<float>(inner);
  }
  in_shape_ = x.shape();
  return y;
}

TensorF GlobalAvgPoolNode::backward(const TensorF& gout) {
  TensorF gx(in_shape_);
  int64_t n = in_shape_[0], c = in_shape_[1];
  int64_t inner = gx.numel() / (n * c);
  const float* g = gout.data();
  float* dst = gx.data();
  for (int64_t i = 0; i < n * c; ++i) {
    float v = g[i] / static_cast<float>(inner);
    for (int64_t j = 0; j < inner; ++j) dst[i * inner + j] = v;
  }
  return gx;
}

ClipShape GlobalAvgPoolNode::out_shape(const ClipShape& in) const {
  ClipShape out = in;
  out.h = out.w = 0;
  return out;
}

// ---------------------------------------------------------------------------
// FcNode
// ---------------------------------------------------------------------------

FcNode::FcNode(std::string name, int64_t in, int64_t out)
    : Module(std::move(name)), in_f_(in), out_f_(out) {
  weight_.name = this->name() + ".weight";
  weight_.value.resize({out, in});
  weight_.grad.resize({out, in});
  bias_.name = this->name() + ".bias";
  bias_.value.resize({out});
  bias_.grad.resize({out});
}

void FcNode::visit_params(const std::function<void(Param&)>& fn) {
  fn(weight_);
  fn(bias_);
}

TensorF FcNode::forward(const TensorF& x, Ctx& ctx) {
  if (x.ndim() != 2 || x.dim(1) != in_f_)
    throw ShapeError(cat(name(), ": fc expects [N, ", in_f_, "]"));
  int64_t n = x.dim(0);
  TensorF y({n, out_f_});
  kern::gemm_tb(x.data(), weight_.value.data(), y.data(), n, in_f_, out_f_, false);
  float* d = y.data();
  const float* b = bias_.value.data();
  for (int64_t i = 0; i < n; ++i)
    for (int64_t j = 0; j < out_f_; ++j) d[i * out_f_ + j] += b[j];
  cached_ = ctx.training;
  if (cached_) in_ = x;
  return y;
}

TensorF FcNode::backward(const TensorF& gout) {
  if (!cached_) throw EngineError(cat(name(), ": backward without training-mode forward"));
  int64_t n = in_.dim(0);
  kern::gemm_ta(gout.data(), in_.data(), weight_.grad.data(), out_f_, n, in_f_, true);
  const float* g = gout.data();
  float* gb = bias_.grad.data();
  for (int64_t i = 0; i < n; ++i)
    for (int64_t j = 0; j < out_f_; ++j) gb[j] += g[i * out_f_ + j];
  TensorF gx({n, in_f_});
  kern::gemm(gout.data(), weight_.value.data(), gx.data(), n, out_f_, in_f_, false);
  return gx;
}

ClipShape FcNode::out_shape(const ClipShape& in) const {
  ClipShape out = in;
  out.c = out_f_;
  return out;
}

int64_t FcNode::macs(const ClipShape& in) const { return in.t * in_f_ * out_f_; }

// ---------------------------------------------------------------------------
// DropoutNode
// ---------------------------------------------------------------------------

TensorF DropoutNode::forward(const TensorF& x, Ctx& ctx) {
  masked_ = ctx.training && p_ > 0.0;
  if (!masked_) return x;
  if (!ctx.rng) throw EngineError(cat(name(), ": dropout needs an rng in training mode"));
  mask_.resize(x.shape());
  TensorF y(x.shape());
  float keep = static_cast<float>(1.0 - p_);
  for (int64_t i = 0; i < x.numel(); ++i) {
    float m = ctx.rng->uniform() < p_ ? 0.0f : 1.0f / keep;
    mask_[i] = m;
    y[i] = x[i] * m;
  }
  return y;
}

TensorF DropoutNode::backward(const TensorF& gout) {
  if (!masked_) return gout;
  TensorF gx(gout.shape());
  for (int64_t i = 0; i < gout.numel(); ++i) gx[i] = gout[i] * mask_[i];
  return gx;
}

// ---------------------------------------------------------------------------
// ResidualBlockNode
// ---------------------------------------------------------------------------

ResidualBlockNode::ResidualBlockNode(std::string name, std::vector<ModulePtr> body,
                                     ModulePtr downsample)
    : Module(std::move(name)), body_(std::move(body)), downsample_(std::move(downsample)) {}

void ResidualBlockNode::visit_children(const std::function<void(Module&)>& fn) {
  if (temporal_) fn(*temporal_);
  for (auto& m : body_) fn(*m);
  if (downsample_) fn(*downsample_);
}

TensorF ResidualBlockNode::forward(const TensorF& x, Ctx& ctx) {
  TensorF branch = temporal_ ? temporal_->forward(x, ctx) : x;
  for (auto& m : body_) branch = m->forward(branch, ctx);
  TensorF skip = downsample_ ? downsample_->forward(x, ctx) : x;
  if (!branch.same_shape(skip)) throw ShapeError(cat(name(), ": branch/skip shape mismatch"));
  for (int64_t i = 0; i < branch.numel(); ++i) branch[i] += skip[i];
  kern::relu_forward(branch.data(), branch.numel());
  cached_ = ctx.training;
  if (cached_) out_ = branch;
  return branch;
}

TensorF ResidualBlockNode::backward(const TensorF& gout) {
  if (!cached_) throw EngineError(cat(name(), ": backward without training-mode forward"));
  TensorF g = gout;
  kern::relu_backward(out_.data(), g.data(), g.numel());
  TensorF gb = g;
  for (auto it = body_.rbegin(); it != body_.rend(); ++it) gb = (*it)->backward(gb);
  if (temporal_) gb = temporal_->backward(gb);
  TensorF gs = downsample_ ? downsample_->backward(g) : g;
  for (int64_t i = 0; i < gb.numel(); ++i) gb[i] += gs[i];
  return gb;
}

ClipShape ResidualBlockNode::out_shape(const ClipShape& in) const {
  ClipShape s = in;
  if (temporal_) s = temporal_->out_shape(s);
  for (const auto& m : body_) s = m->out_shape(s);
  return s;
}

int64_t ResidualBlockNode::macs(const ClipShape& in) const {
  int64_t total = 0;
  ClipShape s = in;
  if (temporal_) {
    total += temporal_->macs(s);
    s = temporal_->out_shape(s);
  }
  for (const auto& m : body_) {
    total += m->macs(s);
    s = m->out_shape(s);
  }
  if (downsample_) total += downsample_->macs(in);
  return total;
}

// ---------------------------------------------------------------------------
// InceptionModuleNode
// ---------------------------------------------------------------------------

InceptionModuleNode::InceptionModuleNode(std::string name,
                                         std::vector<std::vector<ModulePtr>> branches)
    : Module(std::move(name)), branches_(std::move(branches)) {}

void InceptionModuleNode::visit_children(const std::function<void(Module&)>& fn) {
  for (auto& br : branches_)
    for (auto& m : br) fn(*m);
}

TensorF InceptionModuleNode::forward(const TensorF& x, Ctx& ctx) {
  in_shape_ = x.shape();
  std::vector<TensorF> outs;
  outs.reserve(branches_.size());
  branch_channels_.clear();
  for (auto& br : branches_) {
    TensorF v = x;
    for (auto& m : br) v = m->forward(v, ctx);
    branch_channels_.push_back(v.dim(1));
    outs.push_back(std::move(v));
  }
  int64_t n = outs[0].dim(0);
  int64_t inner = outs[0].numel() / (n * outs[0].dim(1));
  int64_t ctotal = 0;
  for (int64_t c : branch_channels_) ctotal += c;
  std::vector<int64_t> oshape = outs[0].shape();
  oshape[1] = ctotal;
  TensorF y(oshape);
  for (int64_t i = 0; i < n; ++i) {
    int64_t coff = 0;
    for (size_t bi = 0; bi < outs.size(); ++bi) {
      int64_t cb = branch_channels_[bi];
      const float* src = outs[bi].data() + i * cb * inner;
      float* dst = y.data() + (i * ctotal + coff) * inner;
      std::copy(src, src + cb * inner, dst);
      coff += cb;
    }
  }
  return y;
}

TensorF InceptionModuleNode::backward(const TensorF& gout) {
  int64_t n = gout.dim(0);
  int64_t ctotal = gout.dim(1);
  int64_t inner = gout.numel() / (n * ctotal);
  TensorF gx(in_shape_);
  gx.zero();
  int64_t coff = 0;
  for (size_t bi = 0; bi < branches_.size(); ++bi) {
    int64_t cb = branch_channels_[bi];
    std::vector<int64_t> gshape = gout.shape();
    gshape[1] = cb;
    TensorF gb(gshape);
    for (int64_t i = 0; i < n; ++i) {
      const float* src = gout.data() + (i * ctotal + coff) * inner;
      float* dst = gb.data() + i * cb * inner;
      std::copy(src, src + cb * inner, dst);
    }
    TensorF g = std::move(gb);
    auto& br = branches_[bi];
    for (auto it = br.rbegin(); it != br.rend(); ++it) g = (*it)->backward(g);
    for (int64_t i = 0; i < gx.numel(); ++i) gx[i] += g[i];
    coff += cb;
  }
  return gx;
}

ClipShape InceptionModuleNode::out_shape(const ClipShape& in) const {
  ClipShape first = in;
  int64_t ctotal = 0;
  ClipShape s{};
  for (const auto& br : branches_) {
    s = in;
    for (const auto& m : br) s = m->out_shape(s);
    ctotal += s.c;
  }
  s.c = ctotal;
  return s;
}

int64_t InceptionModuleNode::macs(const ClipShape& in) const {
  int64_t total = 0;
  for (const auto& br : branches_) {
    ClipShape s = in;
    for (const auto& m : br) {
      total += m->macs(s);
      s = m->out_shape(s);
    }
  }
  return total;
}

// ---------------------------------------------------------------------------

TensorF run_sequence(std::vector<ModulePtr>& mods, const TensorF& x, Ctx& ctx) {
  TensorF v = x;
  for (auto& m : mods) v = m->forward(v, ctx);
  return v;
}

TensorF run_sequence_backward(std::vector<ModulePtr>& mods, const TensorF& gout) {
  TensorF g = gout;
  for (auto it = mods.rbegin(); it != mods.rend(); ++it) g = (*it)->backward(g);
  return g;
}

}  // namespace stzoo
