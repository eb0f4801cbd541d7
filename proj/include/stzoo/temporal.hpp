#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "stzoo/archspec.hpp"
#include "stzoo/layers.hpp"

namespace stzoo {

enum class TemporalKind { Inflate3D, FactorizedST, TAM, TSM, Conv1D, NLN, TemporalMaxPool };

struct TemporalModuleSpec {
  TemporalKind kind = TemporalKind::TAM;
  int64_t temporal_kernel = 3;
  int64_t channels = 0;
  double shift_fraction = 0.125;  // TSM only
  int64_t pool_stride = 2;        // TemporalMaxPool only
};

std::vector<std::string> validate(const TemporalModuleSpec& spec);

// Copy 2d conv weights [Co, Ci, kh, kw] along a new time dimension of extent
// t, giving [Co, Ci, t, kh, kw]. No rescaling by 1/t; bias is unchanged.
TensorF inflate(const TensorF& w2d, int64_t t);

// Split a 3d conv into a spatial conv followed by a kernel-3 temporal conv on
// the spatial conv's output channels. The first convolution of a network is
// never factorized.
struct FactorizedConv {
  ConvOpts spatial;
  ConvOpts temporal;
};
FactorizedConv factorize(const ConvOpts& conv3d, bool is_first_conv);

// Index selection for module placement over an ordered insertion-point list.
// All: every index; BottomHalf: first ceil(n/2); TopHalf: last ceil(n/2);
// UniformHalf: every other starting at 0.
std::vector<int> place_modules(const std::vector<int>& insertion_points, Placement placement);

// --- temporal graph nodes (2d path works on [B*T, C, H, W] with the frame
// count carried in Ctx; the 3d path nodes work on [B, C, T, H, W]) ---

// Depthwise 3-tap temporal convolution, zero padded in time.
class TamNode : public Module {
 public:
  TamNode(std::string name, int64_t channels);
  NodeKind kind() const override { return NodeKind::Tam; }
  TensorF forward(const TensorF& x, Ctx& ctx) override;
  TensorF backward(const TensorF& gout) override;
  void visit_params(const std::function<void(Param&)>& fn) override;
  ClipShape out_shape(const ClipShape& in) const override { return in; }
  int64_t macs(const ClipShape& in) const override;
  Param& weight() { return weight_; }
  int64_t channels() const { return channels_; }

 private:
  int64_t channels_;
  Param weight_;  // [C, 3]
  TensorF in_;
  int64_t b_ = 1, t_ = 1;
  bool cached_ = false;
};

// Shifts the first floor(frac*C) channels +1 in time and the next equal group
// -1, zero filled at the boundaries.
class TsmNode : public Module {
 public:
  TsmNode(std::string name, int64_t channels, double shift_fraction = 0.125);
  NodeKind kind() const override { return NodeKind::Tsm; }
  TensorF forward(const TensorF& x, Ctx& ctx) override;
  TensorF backward(const TensorF& gout) override;
  ClipShape out_shape(const ClipShape& in) const override { return in; }
  int64_t shift_channels() const { return shift_; }
  double shift_fraction() const { return frac_; }

 private:
  int64_t channels_;
  double frac_;
  int64_t shift_;
  int64_t b_ = 1, t_ = 1;
};

// Full channel-mixing 3-tap temporal convolution.
class TemporalConv1dNode : public Module {
 public:
  TemporalConv1dNode(std::string name, int64_t channels);
  NodeKind kind() const override { return NodeKind::TemporalConv1d; }
  TensorF forward(const TensorF& x, Ctx& ctx) override;
  TensorF backward(const TensorF& gout) override;
  void visit_params(const std::function<void(Param&)>& fn) override;
  ClipShape out_shape(const ClipShape& in) const override { return in; }
  int64_t macs(const ClipShape& in) const override;
  Param& weight() { return weight_; }
  Param& bias_param() { return bias_; }
  int64_t channels() const { return channels_; }

 private:
  int64_t channels_;
  Param weight_;  // [C, C, 3]
  Param bias_;
  TensorF in_;
  int64_t b_ = 1, t_ = 1;
  bool cached_ = false;
  std::vector<float> ws_;
};

// Embedded-Gaussian non-local block over all time x space positions with a
// residual connection. The final projection starts at zero, so a fresh block
// is an identity mapping.
class NlnNode : public Module {
 public:
  NlnNode(std::string name, int64_t channels);
  NodeKind kind() const override { return NodeKind::Nln; }
  TensorF forward(const TensorF& x, Ctx& ctx) override;
  TensorF backward(const TensorF& gout) override;
  void visit_params(const std::function<void(Param&)>& fn) override;
  ClipShape out_shape(const ClipShape& in) const override { return in; }
  int64_t macs(const ClipShape& in) const override;
  Param& theta() { return theta_; }
  Param& phi() { return phi_; }
  Param& g() { return g_; }
  Param& out_proj() { return out_proj_; }
  int64_t inter_channels() const { return inter_; }

 private:
  int64_t channels_, inter_;
  Param theta_, phi_, g_, out_proj_;  // [Ci,C], [Ci,C], [Ci,C], [C,Ci]
  // per-video forward caches
  std::vector<TensorF> xg_, th_, ph_, gv_, attn_, yv_;
  int64_t b_ = 1, t_ = 1, hw_ = 0;
  bool cached_ = false;
};

// Max pooling along time, kernel 3, stride 2, pad 1: T -> ceil(T/2).
class TemporalMaxPoolNode : public Module {
 public:
  explicit TemporalMaxPoolNode(std::string name, int64_t k = 3, int64_t stride = 2,
                               int64_t pad = 1);
  NodeKind kind() const override { return NodeKind::TemporalMaxPool; }
  TensorF forward(const TensorF& x, Ctx& ctx) override;
  TensorF backward(const TensorF& gout) override;
  ClipShape out_shape(const ClipShape& in) const override;
  int64_t out_len(int64_t t) const;

 private:
  int64_t k_, stride_, pad_;
  std::vector<int64_t> argmax_;
  std::vector<int64_t> in_shape_;
  int64_t b_ = 1, tin_ = 1, tout_ = 1;
  bool volumetric_ = false;
};

}  // namespace stzoo
