#pragma once
// Run configuration: one JSON document covering the schedule, the toy world,
// collection, filtering, training, the network, and inference. Every field
// has a default (the reference desk-scale profile); a config file overrides
// the fields it names. Unknown keys are rejected so typos fail loudly.

#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>

#include "collector.hpp"
#include "edn.hpp"
#include <nlohmann/json.hpp>

namespace hqnoise {

enum class InferMode { kStandard, kInversion, kWithEdn };

inline std::string to_string(InferMode m) {
  switch (m) {
    case InferMode::kStandard: return "standard";
    case InferMode::kInversion: return "inversion";
    default: return "with-edn";
  }
}

inline InferMode infer_mode_from(const std::string& s) {
  if (s == "standard") return InferMode::kStandard;
  if (s == "inversion") return InferMode::kInversion;
  if (s == "with-edn") return InferMode::kWithEdn;
  throw ConfigError("infer mode must be standard, inversion, or with-edn; got '" + s + "'");
}

inline PredictionType prediction_from(const std::string& s) {
  if (s == "epsilon") return PredictionType::kEpsilon;
  if (s == "v_prediction") return PredictionType::kVPrediction;
  throw ConfigError("prediction must be epsilon or v_prediction; got '" + s + "'");
}

struct RunConfig {
  ScheduleConfig schedule;       // 25 steps, 0.002..700, rho 7
  ToyWorldConfig world;          // (4,16,16), desk default below raises views to 21
  CollectionConfig collect;      // n=16, triangular 6 -> 2.5, gamma2 0, aligned
  double filter_margin = 0.0;
  TrainConfig train;             // lr 3e-4, batch 8, 600 epochs, decay 0.8/200
  int edn_c1 = 64, edn_c2 = 64, edn_c3 = 128;
  EdnConfig::Upsample edn_upsample = EdnConfig::Upsample::kPixelShuffle;
  InferMode infer_mode = InferMode::kStandard;
  uint64_t seed = 0;  // master seed: training shuffle stream, default infer seed
  int workers = 1;
  std::string out_dir = "out";

  RunConfig() { world.views = 21; }

  EdnConfig edn_config() const {
    EdnConfig cfg;
    cfg.latent = world.latent_shape;
    cfg.c1 = edn_c1;
    cfg.c2 = edn_c2;
    cfg.c3 = edn_c3;
    cfg.upsample = edn_upsample;
    return cfg;
  }

  void validate() const {
    if (schedule.steps < 1) throw ConfigError("config: schedule.steps must be >= 1");
    if (collect.n > schedule.steps)
      throw ConfigError("config: collect.n exceeds the schedule's step count");
    if (!(filter_margin >= 0.0)) throw ConfigError("config: filter.margin must be >= 0");
    if (workers < 1) throw ConfigError("config: workers must be >= 1");
    if (out_dir.empty()) throw ConfigError("config: out_dir must not be empty");
    train.validate();
    edn_config().validate();
  }
};

namespace detail {

// Pull `key` out of the object if present; complain about leftovers later.
template <typename T>
void take(nlohmann::json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config: bad value for " + where + "." + key + ": " + e.what());
  }
  j.erase(key);
}

inline void reject_unknown(const nlohmann::json& j, const std::string& where) {
  for (auto it = j.begin(); it != j.end(); ++it)
    throw ConfigError("config: unknown key '" + it.key() + "' in " + where);
}

inline nlohmann::json take_section(nlohmann::json& j, const char* key) {
  if (!j.contains(key)) return nlohmann::json::object();
  nlohmann::json s = j.at(key);
  if (!s.is_object()) throw ConfigError(std::string("config: section '") + key +
                                        "' must be an object");
  j.erase(key);
  return s;
}

}  // namespace detail

inline RunConfig parse_config(const std::string& text, const std::string& origin) {
  nlohmann::json root;
  try {
    root = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config: " + origin + " is not valid JSON: " + e.what());
  }
  if (!root.is_object()) throw ConfigError("config: " + origin + " must be a JSON object");

  RunConfig cfg;

  nlohmann::json s = detail::take_section(root, "schedule");
  detail::take(s, "steps", cfg.schedule.steps, "schedule");
  detail::take(s, "sigma_min", cfg.schedule.sigma_min, "schedule");
  detail::take(s, "sigma_max", cfg.schedule.sigma_max, "schedule");
  detail::take(s, "rho", cfg.schedule.rho, "schedule");
  detail::reject_unknown(s, "schedule");

  s = detail::take_section(root, "world");
  {
    std::vector<int> shape{cfg.world.latent_shape};
    detail::take(s, "latent", shape, "world");
    if (shape.size() != 3) throw ConfigError("config: world.latent must have 3 entries");
    cfg.world.latent_shape = Shape(shape.begin(), shape.end());
  }
  detail::take(s, "views", cfg.world.views, "world");
  detail::take(s, "pattern_seed", cfg.world.pattern_seed, "world");
  detail::take(s, "amplitude", cfg.world.amplitude, "world");
  detail::take(s, "component_std", cfg.world.component_std, "world");
  detail::take(s, "phase_step", cfg.world.phase_step, "world");
  detail::reject_unknown(s, "world");

  s = detail::take_section(root, "collect");
  detail::take(s, "n", cfg.collect.n, "collect");
  {
    std::string mode = cfg.collect.gamma1.mode == CfgSchedule::Mode::kConstant
                           ? "constant"
                           : "triangular";
    detail::take(s, "gamma1_mode", mode, "collect");
    detail::take(s, "gamma1_front", cfg.collect.gamma1.gamma_front, "collect");
    detail::take(s, "gamma1_back", cfg.collect.gamma1.gamma_back, "collect");
    if (mode == "constant")
      cfg.collect.gamma1 = CfgSchedule::constant(cfg.collect.gamma1.gamma_front);
    else if (mode == "triangular")
      cfg.collect.gamma1 = CfgSchedule::triangular(cfg.collect.gamma1.gamma_front,
                                                   cfg.collect.gamma1.gamma_back);
    else
      throw ConfigError("config: collect.gamma1_mode must be constant or triangular");
  }
  detail::take(s, "gamma2", cfg.collect.gamma2, "collect");
  {
    std::string kind = to_string(cfg.collect.kind);
    detail::take(s, "prediction", kind, "collect");
    cfg.collect.kind = prediction_from(kind);
  }
  detail::take(s, "align", cfg.collect.align_enabled, "collect");
  detail::take(s, "seed_begin", cfg.collect.seed_begin, "collect");
  detail::take(s, "seed_end", cfg.collect.seed_end, "collect");
  detail::reject_unknown(s, "collect");

  s = detail::take_section(root, "filter");
  detail::take(s, "margin", cfg.filter_margin, "filter");
  detail::reject_unknown(s, "filter");

  s = detail::take_section(root, "train");
  detail::take(s, "lr", cfg.train.lr, "train");
  detail::take(s, "batch", cfg.train.batch, "train");
  detail::take(s, "epochs", cfg.train.epochs, "train");
  detail::take(s, "decay", cfg.train.decay, "train");
  detail::take(s, "decay_every", cfg.train.decay_every, "train");
  detail::take(s, "shuffle", cfg.train.shuffle, "train");
  detail::reject_unknown(s, "train");

  s = detail::take_section(root, "edn");
  detail::take(s, "c1", cfg.edn_c1, "edn");
  detail::take(s, "c2", cfg.edn_c2, "edn");
  detail::take(s, "c3", cfg.edn_c3, "edn");
  {
    std::string up = to_string(cfg.edn_upsample);
    detail::take(s, "upsample", up, "edn");
    cfg.edn_upsample = upsample_from(up);
  }
  detail::reject_unknown(s, "edn");

  s = detail::take_section(root, "infer");
  {
    std::string mode = to_string(cfg.infer_mode);
    detail::take(s, "mode", mode, "infer");
    cfg.infer_mode = infer_mode_from(mode);
  }
  detail::reject_unknown(s, "infer");

  detail::take(root, "seed", cfg.seed, "config");
  detail::take(root, "workers", cfg.workers, "config");
  detail::take(root, "out_dir", cfg.out_dir, "config");
  detail::reject_unknown(root, "config");

  cfg.validate();
  return cfg;
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open config file '" + path + "'");
  std::ostringstream ss;
  ss << is.rdbuf();
  return parse_config(ss.str(), "'" + path + "'");
}

// The full schema with current values, suitable as a starting config file.
inline std::string config_to_json(const RunConfig& cfg) {
  nlohmann::json j{
      {"schedule",
       {{"steps", cfg.schedule.steps},
        {"sigma_min", cfg.schedule.sigma_min},
        {"sigma_max", cfg.schedule.sigma_max},
        {"rho", cfg.schedule.rho}}},
      {"world",
       {{"latent", std::vector<int>(cfg.world.latent_shape.begin(),
                                    cfg.world.latent_shape.end())},
        {"views", cfg.world.views},
        {"pattern_seed", cfg.world.pattern_seed},
        {"amplitude", cfg.world.amplitude},
        {"component_std", cfg.world.component_std},
        {"phase_step", cfg.world.phase_step}}},
      {"collect",
       {{"n", cfg.collect.n},
        {"gamma1_mode",
         cfg.collect.gamma1.mode == CfgSchedule::Mode::kConstant ? "constant"
                                                                 : "triangular"},
        {"gamma1_front", cfg.collect.gamma1.gamma_front},
        {"gamma1_back", cfg.collect.gamma1.gamma_back},
        {"gamma2", cfg.collect.gamma2},
        {"prediction", to_string(cfg.collect.kind)},
        {"align", cfg.collect.align_enabled},
        {"seed_begin", cfg.collect.seed_begin},
        {"seed_end", cfg.collect.seed_end}}},
      {"filter", {{"margin", cfg.filter_margin}}},
      {"train",
       {{"lr", cfg.train.lr},
        {"batch", cfg.train.batch},
        {"epochs", cfg.train.epochs},
        {"decay", cfg.train.decay},
        {"decay_every", cfg.train.decay_every},
        {"shuffle", cfg.train.shuffle}}},
      {"edn",
       {{"c1", cfg.edn_c1},
        {"c2", cfg.edn_c2},
        {"c3", cfg.edn_c3},
        {"upsample", to_string(cfg.edn_upsample)}}},
      {"infer", {{"mode", to_string(cfg.infer_mode)}}},
      {"seed", cfg.seed},
      {"workers", cfg.workers},
      {"out_dir", cfg.out_dir},
  };
  return j.dump(2);
}

}  // namespace hqnoise
