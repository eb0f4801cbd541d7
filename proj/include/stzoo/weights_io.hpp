#pragma once

#include <json.hpp>
#include <string>
#include <vector>

#include "stzoo/tensor.hpp"

namespace stzoo {

// Named-array archive, the on-disk format for backbone weight files and
// checkpoints:
//   bytes 0..7   magic "STZW0001"
//   bytes 8..15  little-endian u64 header length
//   header       UTF-8 JSON {"arrays":[{name,shape,dtype,offset}...],"meta":{}}
//   payload      raw little-endian float32 data, arrays at their offsets
struct NamedArray {
  std::string name;
  std::vector<int64_t> shape;
  std::vector<float> data;
};

struct Archive {
  std::vector<NamedArray> arrays;
  nlohmann::json meta;

  const NamedArray* find(const std::string& name) const;
};

void save_archive(const std::string& path, const std::vector<NamedArray>& arrays,
                  const nlohmann::json& meta);
Archive load_archive(const std::string& path);

}  // namespace stzoo
