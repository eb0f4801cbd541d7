#include "stzoo/temporal.hpp"

#include "stzoo/common.hpp"
#include "stzoo/kernels.hpp"

namespace stzoo {

std::vector<std::string> validate(const TemporalModuleSpec& spec) {
  std::vector<std::string> v;
  switch (spec.kind) {
    case TemporalKind::Inflate3D:
    case TemporalKind::FactorizedST:
    case TemporalKind::Conv1D:
      if (spec.temporal_kernel != 3)
        v.push_back("temporal_kernel: must be 3 for Inflate3D/FactorizedST/Conv1D");
      break;
    case TemporalKind::TemporalMaxPool:
      if (spec.temporal_kernel != 3) v.push_back("temporal_kernel: pool kernel must be 3");
      break;
    case TemporalKind::TSM:
      if (!(spec.shift_fraction > 0.0 && spec.shift_fraction <= 0.5))
        v.push_back("shift_fraction: must be in (0, 0.5]");
      break;
    default:
      break;
  }
  if (spec.channels < 0) v.push_back("channels: must be non-negative");
  return v;
}

TensorF inflate(const TensorF& w2d, int64_t t) {
  if (w2d.ndim() != 4) throw ShapeError("inflate expects [Co, Ci, kh, kw] weights");
  if (t < 1) throw ShapeError("inflate: temporal kernel must be >= 1");
  int64_t co = w2d.dim(0), ci = w2d.dim(1), kh = w2d.dim(2), kw = w2d.dim(3);
  TensorF w3({co, ci, t, kh, kw});
  int64_t plane = kh * kw;
  for (int64_t oc = 0; oc < co * ci; ++oc) {
    const float* src = w2d.data() + oc * plane;
    for (int64_t j = 0; j < t; ++j)
      std::copy(src, src + plane, w3.data() + (oc * t + j) * plane);
  }
  return w3;
}

FactorizedConv factorize(const ConvOpts& conv3d, bool is_first_conv) {
  if (is_first_conv)
    throw ConfigError("factorize: the first convolution of the network is not factorized");
  FactorizedConv out;
  out.spatial = conv3d;
  out.spatial.kt = 1;
  out.spatial.bias = false;
  out.spatial.bn = false;
  out.spatial.relu = false;
  out.temporal = ConvOpts{};
  out.temporal.cin = conv3d.cout;
  out.temporal.cout = conv3d.cout;
  out.temporal.k = 1;
  out.temporal.stride = 1;
  out.temporal.pad = 0;
  out.temporal.kt = 3;
  out.temporal.bias = conv3d.bias;
  out.temporal.bn = conv3d.bn;
  out.temporal.relu = conv3d.relu;
  return out;
}

std::vector<int> place_modules(const std::vector<int>& points, Placement placement) {
  int n = static_cast<int>(points.size());
  std::vector<int> out;
  switch (placement) {
    case Placement::All:
      out = points;
      break;
    case Placement::BottomHalf:
      out.assign(points.begin(), points.begin() + (n + 1) / 2);
      break;
    case Placement::TopHalf:
      out.assign(points.end() - (n + 1) / 2, points.end());
      break;
    case Placement::UniformHalf:
      for (int i = 0; i < n; i += 2) out.push_back(points[static_cast<size_t>(i)]);
      break;
  }
  return out;
}

namespace {

void expect_2dpath(const TensorF& x, const Ctx& ctx, const std::string& who) {
  if (x.ndim() != 4) throw ShapeError(cat(who, ": expected a 4-d (2d-path) input"));
  if (ctx.batch * ctx.time != x.dim(0))
    throw ShapeError(cat(who, ": batch*time = ", ctx.batch * ctx.time, " != N = ", x.dim(0)));
}

}  // namespace

// ---------------------------------------------------------------------------
// TamNode
// ---------------------------------------------------------------------------

TamNode::TamNode(std::string name, int64_t channels)
    : Module(std::move(name)), channels_(channels) {
  weight_.name = this->name() + ".weight";
  weight_.value.resize({channels, 3});
  weight_.grad.resize({channels, 3});
}

void TamNode::visit_params(const std::function<void(Param&)>& fn) { fn(weight_); }

TensorF TamNode::forward(const TensorF& x, Ctx& ctx) {
  expect_2dpath(x, ctx, name());
  if (x.dim(1) != channels_)
    throw ShapeError(cat(name(), ": channel mismatch, got ", x.dim(1), " want ", channels_));
  b_ = ctx.batch;
  t_ = ctx.time;
  int64_t hw = x.dim(2) * x.dim(3);
  TensorF y(x.shape());
  kern::tam_forward(x.data(), weight_.value.data(), y.data(), b_, t_, channels_, hw);
  cached_ = ctx.training;
  if (cached_) in_ = x;
  return y;
}

TensorF TamNode::backward(const TensorF& gout) {
  if (!cached_) throw EngineError(cat(name(), ": backward without training-mode forward"));
  int64_t hw = in_.dim(2) * in_.dim(3);
  TensorF gx(in_.shape());
  kern::tam_backward(in_.data(), weight_.value.data(), gout.data(), gx.data(),
                     weight_.grad.data(), b_, t_, channels_, hw);
  return gx;
}

int64_t TamNode::macs(const ClipShape& in) const { return 3 * in.c * in.t * in.h * in.w; }

// ---------------------------------------------------------------------------
// TsmNode
// ---------------------------------------------------------------------------

TsmNode::TsmNode(std::string name, int64_t channels, double shift_fraction)
    : Module(std::move(name)), channels_(channels), frac_(shift_fraction) {
  if (!(frac_ > 0.0 && frac_ <= 0.5)) throw ConfigError("tsm: shift_fraction must be in (0, 0.5]");
  shift_ = static_cast<int64_t>(frac_ * static_cast<double>(channels_));
}

TensorF TsmNode::forward(const TensorF& x, Ctx& ctx) {
  expect_2dpath(x, ctx, name());
  b_ = ctx.batch;
  t_ = ctx.time;
  int64_t hw = x.dim(2) * x.dim(3);
  TensorF y(x.shape());
  kern::tsm_forward(x.data(), y.data(), b_, t_, channels_, hw, shift_);
  return y;
}

TensorF TsmNode::backward(const TensorF& gout) {
  int64_t hw = gout.dim(2) * gout.dim(3);
  TensorF gx(gout.shape());
  kern::tsm_backward(gout.data(), gx.data(), b_, t_, channels_, hw, shift_);
  return gx;
}

// ---------------------------------------------------------------------------
// TemporalConv1dNode
// ---------------------------------------------------------------------------

TemporalConv1dNode::TemporalConv1dNode(std::string name, int64_t channels)
    : Module(std::move(name)), channels_(channels) {
  weight_.name = this->name() + ".weight";
  weight_.value.resize({channels, channels, 3});
  weight_.grad.resize({channels, channels, 3});
  bias_.name = this->name() + ".bias";
  bias_.value.resize({channels});
  bias_.grad.resize({channels});
}

void TemporalConv1dNode::visit_params(const std::function<void(Param&)>& fn) {
  fn(weight_);
  fn(bias_);
}

TensorF TemporalConv1dNode::forward(const TensorF& x, Ctx& ctx) {
  expect_2dpath(x, ctx, name());
  if (x.dim(1) != channels_)
    throw ShapeError(cat(name(), ": channel mismatch, got ", x.dim(1), " want ", channels_));
  b_ = ctx.batch;
  t_ = ctx.time;
  int64_t hw = x.dim(2) * x.dim(3);
  TensorF y(x.shape());
  kern::tconv1d_forward(x.data(), weight_.value.data(), bias_.value.data(), y.data(), b_, t_,
                        channels_, hw, ws_);
  cached_ = ctx.training;
  if (cached_) in_ = x;
  return y;
}

TensorF TemporalConv1dNode::backward(const TensorF& gout) {
  if (!cached_) throw EngineError(cat(name(), ": backward without training-mode forward"));
  int64_t hw = in_.dim(2) * in_.dim(3);
  TensorF gx(in_.shape());
  kern::tconv1d_backward(in_.data(), weight_.value.data(), gout.data(), gx.data(),
                         weight_.grad.data(), bias_.grad.data(), b_, t_, channels_, hw, ws_);
  return gx;
}

int64_t TemporalConv1dNode::macs(const ClipShape& in) const {
  return 3 * in.c * in.c * in.t * in.h * in.w;
}

// ---------------------------------------------------------------------------
// NlnNode
// ---------------------------------------------------------------------------

NlnNode::NlnNode(std::string name, int64_t channels)
    : Module(std::move(name)), channels_(channels), inter_(std::max<int64_t>(channels / 2, 1)) {
  auto init = [&](Param& p, const char* suffix, int64_t rows, int64_t cols) {
    p.name = this->name() + "." + suffix;
    p.value.resize({rows, cols});
    p.grad.resize({rows, cols});
  };
  init(theta_, "theta.weight", inter_, channels_);
  init(phi_, "phi.weight", inter_, channels_);
  init(g_, "g.weight", inter_, channels_);
  init(out_proj_, "out.weight", channels_, inter_);
}

void NlnNode::visit_params(const std::function<void(Param&)>& fn) {
  fn(theta_);
  fn(phi_);
  fn(g_);
  fn(out_proj_);
}

TensorF NlnNode::forward(const TensorF& x, Ctx& ctx) {
  expect_2dpath(x, ctx, name());
  if (x.dim(1) != channels_)
    throw ShapeError(cat(name(), ": channel mismatch, got ", x.dim(1), " want ", channels_));
  b_ = ctx.batch;
  t_ = ctx.time;
  hw_ = x.dim(2) * x.dim(3);
  int64_t p = t_ * hw_;
  cached_ = ctx.training;
  xg_.assign(static_cast<size_t>(b_), TensorF());
  th_.assign(static_cast<size_t>(b_), TensorF());
  ph_.assign(static_cast<size_t>(b_), TensorF());
  gv_.assign(static_cast<size_t>(b_), TensorF());
  attn_.assign(static_cast<size_t>(b_), TensorF());
  yv_.assign(static_cast<size_t>(b_), TensorF());
  TensorF out = x;
  for (int64_t b = 0; b < b_; ++b) {
    // gather [C, P] with positions ordered (t, h, w)
    TensorF X({channels_, p});
    for (int64_t t = 0; t < t_; ++t)
      for (int64_t c = 0; c < channels_; ++c) {
        const float* src = x.data() + ((b * t_ + t) * channels_ + c) * hw_;
        std::copy(src, src + hw_, X.data() + c * p + t * hw_);
      }
    TensorF th({inter_, p}), phv({inter_, p}), gvv({inter_, p});
    kern::gemm(theta_.value.data(), X.data(), th.data(), inter_, channels_, p, false);
    kern::gemm(phi_.value.data(), X.data(), phv.data(), inter_, channels_, p, false);
    kern::gemm(g_.value.data(), X.data(), gvv.data(), inter_, channels_, p, false);
    TensorF e({p, p});
    kern::gemm_ta(th.data(), phv.data(), e.data(), p, inter_, p, false);
    TensorF a({p, p});
    kern::softmax_rows(e.data(), a.data(), p, p);
    TensorF y({inter_, p});
    kern::gemm_tb(gvv.data(), a.data(), y.data(), inter_, p, p, false);
    TensorF z({channels_, p});
    kern::gemm(out_proj_.value.data(), y.data(), z.data(), channels_, inter_, p, false);
    // scatter back with the residual add
    for (int64_t t = 0; t < t_; ++t)
      for (int64_t c = 0; c < channels_; ++c) {
        float* dst = out.data() + ((b * t_ + t) * channels_ + c) * hw_;
        const float* src = z.data() + c * p + t * hw_;
        for (int64_t i = 0; i < hw_; ++i) dst[i] += src[i];
      }
    if (cached_) {
      xg_[static_cast<size_t>(b)] = std::move(X);
      th_[static_cast<size_t>(b)] = std::move(th);
      ph_[static_cast<size_t>(b)] = std::move(phv);
      gv_[static_cast<size_t>(b)] = std::move(gvv);
      attn_[static_cast<size_t>(b)] = std::move(a);
      yv_[static_cast<size_t>(b)] = std::move(y);
    }
  }
  return out;
}

TensorF NlnNode::backward(const TensorF& gout) {
  if (!cached_) throw EngineError(cat(name(), ": backward without training-mode forward"));
  int64_t p = t_ * hw_;
  TensorF gx = gout;  // identity path
  for (int64_t b = 0; b < b_; ++b) {
    TensorF dz({channels_, p});
    for (int64_t t = 0; t < t_; ++t)
      for (int64_t c = 0; c < channels_; ++c) {
        const float* src = gout.data() + ((b * t_ + t) * channels_ + c) * hw_;
        std::copy(src, src + hw_, dz.data() + c * p + t * hw_);
      }
    const TensorF& X = xg_[static_cast<size_t>(b)];
    const TensorF& th = th_[static_cast<size_t>(b)];
    const TensorF& phv = ph_[static_cast<size_t>(b)];
    const TensorF& gvv = gv_[static_cast<size_t>(b)];
    const TensorF& a = attn_[static_cast<size_t>(b)];
    const TensorF& y = yv_[static_cast<size_t>(b)];
    // z = Wz y
    kern::gemm_tb(dz.data(), y.data(), out_proj_.grad.data(), channels_, p, inter_, true);
    TensorF dy({inter_, p});
    kern::gemm_ta(out_proj_.value.data(), dz.data(), dy.data(), inter_, channels_, p, false);
    // y = g a^T
    TensorF dg({inter_, p});
    kern::gemm(dy.data(), a.data(), dg.data(), inter_, p, p, false);
    TensorF da({p, p});
    kern::gemm_ta(dy.data(), gvv.data(), da.data(), p, inter_, p, false);
    // row softmax backward
    TensorF de({p, p});
    for (int64_t i = 0; i < p; ++i) {
      const float* ai = a.data() + i * p;
      const float* dai = da.data() + i * p;
      float dot = 0.0f;
      for (int64_t j = 0; j < p; ++j) dot += ai[j] * dai[j];
      float* dei = de.data() + i * p;
      for (int64_t j = 0; j < p; ++j) dei[j] = ai[j] * (dai[j] - dot);
    }
    // e = theta^T phi
    TensorF dth({inter_, p}), dph({inter_, p});
    kern::gemm_tb(phv.data(), de.data(), dth.data(), inter_, p, p, false);
    kern::gemm(th.data(), de.data(), dph.data(), inter_, p, p, false);
    // projections
    kern::gemm_tb(dth.data(), X.data(), theta_.grad.data(), inter_, p, channels_, true);
    kern::gemm_tb(dph.data(), X.data(), phi_.grad.data(), inter_, p, channels_, true);
    kern::gemm_tb(dg.data(), X.data(), g_.grad.data(), inter_, p, channels_, true);
    TensorF dx({channels_, p});
    kern::gemm_ta(theta_.value.data(), dth.data(), dx.data(), channels_, inter_, p, false);
    kern::gemm_ta(phi_.value.data(), dph.data(), dx.data(), channels_, inter_, p, true);
    kern::gemm_ta(g_.value.data(), dg.data(), dx.data(), channels_, inter_, p, true);
    for (int64_t t = 0; t < t_; ++t)
      for (int64_t c = 0; c < channels_; ++c) {
        float* dst = gx.data() + ((b * t_ + t) * channels_ + c) * hw_;
        const float* src = dx.data() + c * p + t * hw_;
        for (int64_t i = 0; i < hw_; ++i) dst[i] += src[i];
      }
  }
  return gx;
}

int64_t NlnNode::macs(const ClipShape& in) const {
  int64_t p = in.t * in.h * in.w;
  int64_t proj = 3 * inter_ * channels_ * p + channels_ * inter_ * p;
  int64_t attn = 2 * p * p * inter_;
  return proj + attn;
}

// ---------------------------------------------------------------------------
// TemporalMaxPoolNode
// ---------------------------------------------------------------------------

TemporalMaxPoolNode::TemporalMaxPoolNode(std::string name, int64_t k, int64_t stride, int64_t pad)
    : Module(std::move(name)), k_(k), stride_(stride), pad_(pad) {}

int64_t TemporalMaxPoolNode::out_len(int64_t t) const {
  return kern::pool_out(t, k_, stride_, pad_, false);
}

TensorF TemporalMaxPoolNode::forward(const TensorF& x, Ctx& ctx) {
  in_shape_ = x.shape();
  if (x.ndim() == 5) {
    volumetric_ = true;
    int64_t b = x.dim(0), c = x.dim(1), t = x.dim(2), hw = x.dim(3) * x.dim(4);
    tin_ = t;
    tout_ = out_len(t);
    TensorF y({b, c, tout_, x.dim(3), x.dim(4)});
    argmax_.resize(static_cast<size_t>(b * c * tout_ * hw));
    kern::temporal_maxpool_forward(x.data(), y.data(), argmax_.data(), b * c, t, hw, k_, stride_,
                                   pad_);
    return y;
  }
  expect_2dpath(x, ctx, name());
  volumetric_ = false;
  b_ = ctx.batch;
  tin_ = ctx.time;
  tout_ = out_len(tin_);
  int64_t inner = x.dim(1) * x.dim(2) * x.dim(3);
  TensorF y({b_ * tout_, x.dim(1), x.dim(2), x.dim(3)});
  argmax_.resize(static_cast<size_t>(b_ * tout_ * inner));
  kern::temporal_maxpool_forward(x.data(), y.data(), argmax_.data(), b_, tin_, inner, k_, stride_,
                                 pad_);
  ctx.time = tout_;
  return y;
}

TensorF TemporalMaxPoolNode::backward(const TensorF& gout) {
  TensorF gx(in_shape_);
  if (volumetric_) {
    int64_t b = in_shape_[0], c = in_shape_[1], hw = in_shape_[3] * in_shape_[4];
    kern::temporal_maxpool_backward(gout.data(), argmax_.data(), gx.data(), b * c, tin_, hw,
                                    tout_);
  } else {
    int64_t inner = in_shape_[1] * in_shape_[2] * in_shape_[3];
    kern::temporal_maxpool_backward(gout.data(), argmax_.data(), gx.data(), b_, tin_, inner,
                                    tout_);
  }
  return gx;
}

ClipShape TemporalMaxPoolNode::out_shape(const ClipShape& in) const {
  ClipShape out = in;
  out.t = out_len(in.t);
  return out;
}

}  // namespace stzoo
