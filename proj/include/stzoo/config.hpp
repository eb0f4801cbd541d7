#pragma once

#include <json.hpp>
#include <string>

#include "stzoo/archspec.hpp"
#include "stzoo/protocols.hpp"
#include "stzoo/sampling.hpp"

namespace stzoo {

// Everything one experiment needs. Serialized as strict JSON: unknown keys
// are hard errors, missing keys take the defaults below.
struct ExperimentConfig {
  ArchSpec arch;
  std::string dataset;  // frame-store root directory
  SamplerConfig sampler;
  TrainProtocol train = TrainProtocol::desk();
  EvalProtocol eval = EvalProtocol::clip_level();
  uint64_t seed = 0;
  std::string output_dir = "out";

  bool operator==(const ExperimentConfig&) const;
};

nlohmann::json archspec_to_json(const ArchSpec& spec);
ArchSpec archspec_from_json(const nlohmann::json& j);

ExperimentConfig load_config(const std::string& path);
void save_config(const ExperimentConfig& config, const std::string& path);

nlohmann::json config_to_json(const ExperimentConfig& config);
ExperimentConfig config_from_json(const nlohmann::json& j);

}  // namespace stzoo
