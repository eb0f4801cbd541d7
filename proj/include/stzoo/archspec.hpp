#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "stzoo/common.hpp"
#include "stzoo/tensor.hpp"

namespace stzoo {

enum class Family { TSN, I3D, S3D, TAM, TSM, Conv1D, TSN_NLN };
enum class Backbone { InceptionV1, ResNet18, ResNet50, TinyNet };
enum class Placement { All, TopHalf, BottomHalf, UniformHalf };

std::string to_string(Family f);
std::string to_string(Backbone b);
std::string to_string(Placement p);
Family family_from_string(const std::string& s);
Backbone backbone_from_string(const std::string& s);
Placement placement_from_string(const std::string& s);

// One model, declaratively. Defaults follow the recommended setting:
// temporal pooling off, modules at every insertion point.
struct ArchSpec {
  Family family = Family::TSN;
  Backbone backbone = Backbone::TinyNet;
  int64_t frames = 8;
  bool temporal_pool = false;
  Placement placement = Placement::All;
  int64_t num_classes = 1000;

  bool operator==(const ArchSpec&) const = default;
};

// Empty list iff the spec is buildable; each entry names field and rule.
std::vector<std::string> validate(const ArchSpec& spec);

// module-backbone[-tp], e.g. "I3D-ResNet18-tp".
std::string canonical_name(const ArchSpec& spec);

// Whether the family carries per-block temporal modules (placement applies).
bool has_placed_modules(Family f);

// Whether the family runs on the volumetric (3d) path.
bool is_volumetric(Family f);

enum class Layout { Batched2D, Volumetric3D };

// A single clip. Batched2D stores [F, C, H, W]; Volumetric3D stores
// [C, F, H, W]. The two layouts hold the same elements, permuted.
class VideoTensor {
 public:
  VideoTensor() = default;
  VideoTensor(Layout layout, TensorF values);

  Layout layout() const { return layout_; }
  const TensorF& values() const { return values_; }
  TensorF& values() { return values_; }

  int64_t frames() const;
  int64_t channels() const;
  int64_t height() const;
  int64_t width() const;

  VideoTensor to_layout(Layout target) const;

 private:
  Layout layout_ = Layout::Batched2D;
  TensorF values_;
};

}  // namespace stzoo
