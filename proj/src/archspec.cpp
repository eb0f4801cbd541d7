#include "stzoo/archspec.hpp"

namespace stzoo {

std::string to_string(Family f) {
  switch (f) {
    case Family::TSN: return "TSN";
    case Family::I3D: return "I3D";
    case Family::S3D: return "S3D";
    case Family::TAM: return "TAM";
    case Family::TSM: return "TSM";
    case Family::Conv1D: return "Conv1D";
    case Family::TSN_NLN: return "TSN+NLN";
  }
  throw ConfigError("bad family enum");
}

std::string to_string(Backbone b) {
  switch (b) {
    case Backbone::InceptionV1: return "InceptionV1";
    case Backbone::ResNet18: return "ResNet18";
    case Backbone::ResNet50: return "ResNet50";
    case Backbone::TinyNet: return "TinyNet";
  }
  throw ConfigError("bad backbone enum");
}

std::string to_string(Placement p) {
  switch (p) {
    case Placement::All: return "All";
    case Placement::TopHalf: return "TopHalf";
    case Placement::BottomHalf: return "BottomHalf";
    case Placement::UniformHalf: return "UniformHalf";
  }
  throw ConfigError("bad placement enum");
}

Family family_from_string(const std::string& s) {
  for (Family f : {Family::TSN, Family::I3D, Family::S3D, Family::TAM, Family::TSM, Family::Conv1D,
                   Family::TSN_NLN})
    if (to_string(f) == s) return f;
  throw ConfigError(cat("unknown family '", s, "'"));
}

Backbone backbone_from_string(const std::string& s) {
  for (Backbone b :
       {Backbone::InceptionV1, Backbone::ResNet18, Backbone::ResNet50, Backbone::TinyNet})
    if (to_string(b) == s) return b;
  throw ConfigError(cat("unknown backbone '", s, "'"));
}

Placement placement_from_string(const std::string& s) {
  for (Placement p :
       {Placement::All, Placement::TopHalf, Placement::BottomHalf, Placement::UniformHalf})
    if (to_string(p) == s) return p;
  throw ConfigError(cat("unknown placement '", s, "'"));
}

bool has_placed_modules(Family f) {
  return f == Family::TAM || f == Family::TSM || f == Family::Conv1D;
}

bool is_volumetric(Family f) { return f == Family::I3D || f == Family::S3D; }

std::vector<std::string> validate(const ArchSpec& spec) {
  std::vector<std::string> violations;
  if (spec.frames < 1) violations.push_back("frames: must be a positive integer");
  if (spec.num_classes < 1) violations.push_back("num_classes: must be a positive integer");
  if (spec.placement != Placement::All && !has_placed_modules(spec.family))
    violations.push_back(cat("placement: ", to_string(spec.placement), " is only valid for ",
                             "families with per-block temporal modules (TAM, TSM, Conv1D), not ",
                             to_string(spec.family)));
  if (spec.temporal_pool && spec.frames < 8)
    violations.push_back(cat("frames: ", spec.frames,
                             " < 8 with temporal_pool "
                             "(three stride-2 temporal pools would collapse below length 1)"));
  return violations;
}

std::string canonical_name(const ArchSpec& spec) {
  auto v = validate(spec);
  if (!v.empty()) throw ConfigError(cat("invalid spec: ", v.front()));
  std::string name = to_string(spec.family) + "-" + to_string(spec.backbone);
  if (spec.temporal_pool) name += "-tp";
  return name;
}

VideoTensor::VideoTensor(Layout layout, TensorF values) : layout_(layout), values_(std::move(values)) {
  if (values_.ndim() != 4) throw ShapeError("VideoTensor expects a 4-d tensor");
  if (height() <= 0 || width() <= 0) throw ShapeError("VideoTensor spatial dims must be positive");
}

int64_t VideoTensor::frames() const {
  return layout_ == Layout::Batched2D ? values_.dim(0) : values_.dim(1);
}
int64_t VideoTensor::channels() const {
  return layout_ == Layout::Batched2D ? values_.dim(1) : values_.dim(0);
}
int64_t VideoTensor::height() const { return values_.dim(2); }
int64_t VideoTensor::width() const { return values_.dim(3); }

VideoTensor VideoTensor::to_layout(Layout target) const {
  if (target == layout_) return *this;
  int64_t f = frames(), c = channels(), h = height(), w = width();
  int64_t hw = h * w;
  TensorF out(target == Layout::Batched2D ? std::vector<int64_t>{f, c, h, w}
                                          : std::vector<int64_t>{c, f, h, w});
  const float* src = values_.data();
  float* dst = out.data();
  for (int64_t i = 0; i < f; ++i)
    for (int64_t j = 0; j < c; ++j) {
      // Batched2D index (i*c + j), Volumetric3D index (j*f + i)
      int64_t b2 = (i * c + j) * hw;
      int64_t v3 = (j * f + i) * hw;
      if (target == Layout::Batched2D)
        std::copy(src + v3, src + v3 + hw, dst + b2);
      else
        std::copy(src + b2, src + b2 + hw, dst + v3);
    }
  return VideoTensor(target, std::move(out));
}

}  // namespace stzoo
