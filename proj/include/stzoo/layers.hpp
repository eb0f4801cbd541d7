#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "stzoo/rng.hpp"
#include "stzoo/tensor.hpp"

namespace stzoo {

enum class NodeKind {
  Conv2d,
  Conv3d,
  MaxPool,
  AvgPool,
  Fc,
  ResidualBlock,
  InceptionModule,
  Dropout,
  Tam,
  Tsm,
  TemporalConv1d,
  Nln,
  TemporalMaxPool,
};

std::string to_string(NodeKind k);

struct Param {
  std::string name;
  TensorF value;
  TensorF grad;
  bool trainable = true;
};

struct Buffer {
  std::string name;
  TensorF value;
};

// Logical per-clip shape used for audits and cost accounting. On the 2d path
// `t` counts frames folded into the batch; on the 3d path it is the tensor's
// own temporal extent. h = w = 0 after global pooling.
struct ClipShape {
  int64_t t = 1, c = 0, h = 0, w = 0;
};

struct Ctx {
  int64_t batch = 1;  // clips in the minibatch
  int64_t time = 1;   // frames per clip at the current depth (2d path)
  bool training = false;
  Rng* rng = nullptr;  // consumed by dropout only
};

class Module {
 public:
  explicit Module(std::string name) : name_(std::move(name)) {}
  virtual ~Module() = default;

  virtual NodeKind kind() const = 0;
  const std::string& name() const { return name_; }

  virtual TensorF forward(const TensorF& x, Ctx& ctx) = 0;
  virtual TensorF backward(const TensorF& gout) = 0;

  virtual void visit_params(const std::function<void(Param&)>&) {}
  virtual void visit_buffers(const std::function<void(Buffer&)>&) {}
  virtual void visit_children(const std::function<void(Module&)>&) {}

  // Preorder walk over this node and all descendants.
  void visit_tree(const std::function<void(Module&)>& fn);

  virtual ClipShape out_shape(const ClipShape& in) const = 0;
  // Multiply-accumulate count for one clip. Convs, fc and NLN matrix products
  // count; pooling, normalization and activations do not.
  virtual int64_t macs(const ClipShape& in) const { return 0; }

 private:
  std::string name_;
};

using ModulePtr = std::unique_ptr<Module>;

// conv + optional batchnorm + optional relu, as one graph node.
struct ConvOpts {
  int64_t cin = 0, cout = 0;
  int64_t k = 3, stride = 1, pad = 0;
  int64_t kt = 1;  // conv3d temporal extent (stride 1, pad kt/2)
  bool bias = true;
  bool bn = false;
  bool relu = false;
};

class Conv2dNode : public Module {
 public:
  Conv2dNode(std::string name, ConvOpts opts);
  NodeKind kind() const override { return NodeKind::Conv2d; }
  TensorF forward(const TensorF& x, Ctx& ctx) override;
  TensorF backward(const TensorF& gout) override;
  void visit_params(const std::function<void(Param&)>& fn) override;
  void visit_buffers(const std::function<void(Buffer&)>& fn) override;
  ClipShape out_shape(const ClipShape& in) const override;
  int64_t macs(const ClipShape& in) const override;

  const ConvOpts& opts() const { return opts_; }
  Param& weight() { return weight_; }
  Param& bias_param() { return bias_; }
  Param& bn_weight() { return bn_weight_; }
  Param& bn_bias() { return bn_bias_; }
  Buffer& bn_mean() { return bn_mean_; }
  Buffer& bn_var() { return bn_var_; }

 private:
  ConvOpts opts_;
  Param weight_, bias_, bn_weight_, bn_bias_;
  Buffer bn_mean_, bn_var_;
  // forward caches (training only)
  TensorF in_, preact_, out_;
  TensorF save_mean_, save_invstd_;
  bool cached_ = false;
  std::vector<float> ws_;
};

class Conv3dNode : public Module {
 public:
  enum class Role { Plain, FactorizedSpatial, FactorizedTemporal };

  Conv3dNode(std::string name, ConvOpts opts, Role role = Role::Plain);
  NodeKind kind() const override { return NodeKind::Conv3d; }
  TensorF forward(const TensorF& x, Ctx& ctx) override;
  TensorF backward(const TensorF& gout) override;
  void visit_params(const std::function<void(Param&)>& fn) override;
  void visit_buffers(const std::function<void(Buffer&)>& fn) override;
  ClipShape out_shape(const ClipShape& in) const override;
  int64_t macs(const ClipShape& in) const override;

  const ConvOpts& opts() const { return opts_; }
  Role role() const { return role_; }
  Param& weight() { return weight_; }
  Param& bias_param() { return bias_; }
  Param& bn_weight() { return bn_weight_; }
  Param& bn_bias() { return bn_bias_; }
  Buffer& bn_mean() { return bn_mean_; }
  Buffer& bn_var() { return bn_var_; }

 private:
  ConvOpts opts_;
  Role role_;
  Param weight_, bias_, bn_weight_, bn_bias_;
  Buffer bn_mean_, bn_var_;
  TensorF in_, preact_, out_;
  TensorF save_mean_, save_invstd_;
  bool cached_ = false;
  std::vector<float> ws_;
};

class MaxPoolNode : public Module {
 public:
  MaxPoolNode(std::string name, int64_t k, int64_t stride, int64_t pad, bool ceil_mode = false);
  NodeKind kind() const override { return NodeKind::MaxPool; }
  TensorF forward(const TensorF& x, Ctx& ctx) override;
  TensorF backward(const TensorF& gout) override;
  ClipShape out_shape(const ClipShape& in) const override;
  int64_t k() const { return k_; }
  int64_t stride() const { return stride_; }

 private:
  int64_t k_, stride_, pad_;
  bool ceil_mode_;
  std::vector<int64_t> argmax_;
  std::vector<int64_t> in_shape_;
};

// Global average pool over every axis after the channel one.
class GlobalAvgPoolNode : public Module {
 public:
  explicit GlobalAvgPoolNode(std::string name) : Module(std::move(name)) {}
  NodeKind kind() const override { return NodeKind::AvgPool; }
  TensorF forward(const TensorF& x, Ctx& ctx) override;
  TensorF backward(const TensorF& gout) override;
  ClipShape out_shape(const ClipShape& in) const override;

 private:
  std::vector<int64_t> in_shape_;
};

class FcNode : public Module {
 public:
  FcNode(std::string name, int64_t in, int64_t out);
  NodeKind kind() const override { return NodeKind::Fc; }
  TensorF forward(const TensorF& x, Ctx& ctx) override;
  TensorF backward(const TensorF& gout) override;
  void visit_params(const std::function<void(Param&)>& fn) override;
  ClipShape out_shape(const ClipShape& in) const override;
  int64_t macs(const ClipShape& in) const override;
  int64_t in_features() const { return in_f_; }
  int64_t out_features() const { return out_f_; }
  Param& weight() { return weight_; }
  Param& bias_param() { return bias_; }

 private:
  int64_t in_f_, out_f_;
  Param weight_, bias_;
  TensorF in_;
  bool cached_ = false;
};

class DropoutNode : public Module {
 public:
  DropoutNode(std::string name, double p) : Module(std::move(name)), p_(p) {}
  NodeKind kind() const override { return NodeKind::Dropout; }
  TensorF forward(const TensorF& x, Ctx& ctx) override;
  TensorF backward(const TensorF& gout) override;
  ClipShape out_shape(const ClipShape& in) const override { return in; }
  double p() const { return p_; }

 private:
  double p_;
  TensorF mask_;
  bool masked_ = false;
};

// Residual block: out = relu(body(temporal?(x)) + downsample?(x)).
// The optional temporal module sits at the start of the non-identity path.
class ResidualBlockNode : public Module {
 public:
  ResidualBlockNode(std::string name, std::vector<ModulePtr> body, ModulePtr downsample);
  NodeKind kind() const override { return NodeKind::ResidualBlock; }
  TensorF forward(const TensorF& x, Ctx& ctx) override;
  TensorF backward(const TensorF& gout) override;
  void visit_children(const std::function<void(Module&)>& fn) override;
  ClipShape out_shape(const ClipShape& in) const override;
  int64_t macs(const ClipShape& in) const override;

  void set_temporal(ModulePtr m) { temporal_ = std::move(m); }
  std::vector<ModulePtr>& body() { return body_; }
  Module* downsample() { return downsample_.get(); }
  Module* temporal() { return temporal_.get(); }

 private:
  std::vector<ModulePtr> body_;
  ModulePtr downsample_;
  ModulePtr temporal_;
  TensorF out_;
  bool cached_ = false;
};

// Four parallel branches concatenated along the channel axis.
class InceptionModuleNode : public Module {
 public:
  InceptionModuleNode(std::string name, std::vector<std::vector<ModulePtr>> branches);
  NodeKind kind() const override { return NodeKind::InceptionModule; }
  TensorF forward(const TensorF& x, Ctx& ctx) override;
  TensorF backward(const TensorF& gout) override;
  void visit_children(const std::function<void(Module&)>& fn) override;
  ClipShape out_shape(const ClipShape& in) const override;
  int64_t macs(const ClipShape& in) const override;
  std::vector<std::vector<ModulePtr>>& branches() { return branches_; }

 private:
  std::vector<std::vector<ModulePtr>> branches_;
  std::vector<int64_t> branch_channels_;
  std::vector<int64_t> in_shape_;
};

// Runs a list of modules in order; used for standalone insertions.
TensorF run_sequence(std::vector<ModulePtr>& mods, const TensorF& x, Ctx& ctx);
TensorF run_sequence_backward(std::vector<ModulePtr>& mods, const TensorF& gout);

}  // namespace stzoo
