#include "stzoo/config.hpp"

#include <fstream>

namespace stzoo {

bool ExperimentConfig::operator==(const ExperimentConfig& o) const {
  auto train_eq = [](const TrainProtocol& a, const TrainProtocol& b) {
    return a.epochs == b.epochs && a.lr0 == b.lr0 && a.lr_peak == b.lr_peak &&
           a.warmup_epochs == b.warmup_epochs && a.schedule == b.schedule &&
           a.momentum == b.momentum && a.weight_decay == b.weight_decay &&
           a.batch_size == b.batch_size && a.chain == b.chain;
  };
  auto eval_eq = [](const EvalProtocol& a, const EvalProtocol& b) {
    return a.level == b.level && a.clips == b.clips && a.crops == b.crops;
  };
  auto sampler_eq = [](const SamplerConfig& a, const SamplerConfig& b) {
    return a.strategy == b.strategy && a.f == b.f && a.stride == b.stride && a.m == b.m;
  };
  return arch == o.arch && dataset == o.dataset && sampler_eq(sampler, o.sampler) &&
         train_eq(train, o.train) && eval_eq(eval, o.eval) && seed == o.seed &&
         output_dir == o.output_dir;
}

namespace {

void check_keys(const nlohmann::json& j, std::initializer_list<const char*> allowed,
                const std::string& where) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* k : allowed)
      if (it.key() == k) {
        ok = true;
        break;
      }
    if (!ok) throw ConfigError(cat("unknown field '", it.key(), "' in ", where));
  }
}

}  // namespace

nlohmann::json archspec_to_json(const ArchSpec& spec) {
  nlohmann::json j;
  j["family"] = to_string(spec.family);
  j["backbone"] = to_string(spec.backbone);
  j["frames"] = spec.frames;
  j["temporal_pool"] = spec.temporal_pool;
  j["placement"] = to_string(spec.placement);
  j["num_classes"] = spec.num_classes;
  return j;
}

ArchSpec archspec_from_json(const nlohmann::json& j) {
  check_keys(j, {"family", "backbone", "frames", "temporal_pool", "placement", "num_classes"},
             "arch");
  ArchSpec spec;
  if (j.contains("family")) spec.family = family_from_string(j.at("family").get<std::string>());
  if (j.contains("backbone"))
    spec.backbone = backbone_from_string(j.at("backbone").get<std::string>());
  if (j.contains("frames")) spec.frames = j.at("frames").get<int64_t>();
  if (j.contains("temporal_pool")) spec.temporal_pool = j.at("temporal_pool").get<bool>();
  if (j.contains("placement"))
    spec.placement = placement_from_string(j.at("placement").get<std::string>());
  if (j.contains("num_classes")) spec.num_classes = j.at("num_classes").get<int64_t>();
  return spec;
}

nlohmann::json config_to_json(const ExperimentConfig& c) {
  nlohmann::json j;
  j["arch"] = archspec_to_json(c.arch);
  j["dataset"] = c.dataset;
  j["sampler"] = {{"strategy", to_string(c.sampler.strategy)},
                  {"f", c.sampler.f},
                  {"stride", c.sampler.stride},
                  {"m", c.sampler.m}};
  j["train"] = {{"epochs", c.train.epochs},
                {"lr0", c.train.lr0},
                {"lr_peak", c.train.lr_peak},
                {"warmup_epochs", c.train.warmup_epochs},
                {"schedule", to_string(c.train.schedule)},
                {"momentum", c.train.momentum},
                {"weight_decay", c.train.weight_decay},
                {"batch_size", c.train.batch_size},
                {"chain", c.train.chain}};
  j["eval"] = {{"level", to_string(c.eval.level)}, {"clips", c.eval.clips}, {"crops", c.eval.crops}};
  j["seed"] = c.seed;
  j["output_dir"] = c.output_dir;
  return j;
}

ExperimentConfig config_from_json(const nlohmann::json& j) {
  check_keys(j, {"arch", "dataset", "sampler", "train", "eval", "seed", "output_dir"}, "config");
  ExperimentConfig c;
  if (j.contains("arch")) c.arch = archspec_from_json(j.at("arch"));
  if (j.contains("dataset")) c.dataset = j.at("dataset").get<std::string>();
  if (j.contains("sampler")) {
    const auto& s = j.at("sampler");
    check_keys(s, {"strategy", "f", "stride", "m"}, "sampler");
    if (s.contains("strategy"))
      c.sampler.strategy = strategy_from_string(s.at("strategy").get<std::string>());
    if (s.contains("f")) c.sampler.f = s.at("f").get<int64_t>();
    if (s.contains("stride")) c.sampler.stride = s.at("stride").get<int64_t>();
    if (s.contains("m")) c.sampler.m = s.at("m").get<int64_t>();
  }
  if (j.contains("train")) {
    const auto& t = j.at("train");
    check_keys(t,
               {"epochs", "lr0", "lr_peak", "warmup_epochs", "schedule", "momentum",
                "weight_decay", "batch_size", "chain"},
               "train");
    if (t.contains("epochs")) c.train.epochs = t.at("epochs").get<int>();
    if (t.contains("lr0")) c.train.lr0 = t.at("lr0").get<double>();
    if (t.contains("lr_peak")) c.train.lr_peak = t.at("lr_peak").get<double>();
    if (t.contains("warmup_epochs")) c.train.warmup_epochs = t.at("warmup_epochs").get<int>();
    if (t.contains("schedule"))
      c.train.schedule = schedule_from_string(t.at("schedule").get<std::string>());
    if (t.contains("momentum")) c.train.momentum = t.at("momentum").get<double>();
    if (t.contains("weight_decay")) c.train.weight_decay = t.at("weight_decay").get<double>();
    if (t.contains("batch_size")) c.train.batch_size = t.at("batch_size").get<int>();
    if (t.contains("chain")) c.train.chain = t.at("chain").get<std::vector<int64_t>>();
  }
  if (j.contains("eval")) {
    const auto& e = j.at("eval");
    check_keys(e, {"level", "clips", "crops"}, "eval");
    if (e.contains("level")) c.eval.level = eval_level_from_string(e.at("level").get<std::string>());
    if (e.contains("clips")) c.eval.clips = e.at("clips").get<int>();
    if (e.contains("crops")) c.eval.crops = e.at("crops").get<int>();
  }
  if (j.contains("seed")) c.seed = j.at("seed").get<uint64_t>();
  if (j.contains("output_dir")) c.output_dir = j.at("output_dir").get<std::string>();
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(cat("cannot open config '", path, "'"));
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(cat("parse error in '", path, "': ", e.what()));
  }
  try {
    return config_from_json(j);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(cat("bad field in '", path, "': ", e.what()));
  }
}

void save_config(const ExperimentConfig& config, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ConfigError(cat("cannot write config '", path, "'"));
  out << config_to_json(config).dump(2) << "\n";
}

}  // namespace stzoo
