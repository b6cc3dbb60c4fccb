#ifndef PISHGUVE_RUNCONFIG_HPP
#define PISHGUVE_RUNCONFIG_HPP

#include <algorithm>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "pishguve/bench.hpp"
#include "pishguve/dataio.hpp"
#include "pishguve/errors.hpp"
#include "pishguve/extract.hpp"
#include "pishguve/model.hpp"
#include "pishguve/synth.hpp"

namespace pv {

struct DataConfig {
  std::size_t stride = 1;
  SplitSpec split;
};

namespace detail {

inline void reject_unknown(const nlohmann::json& j, const std::vector<std::string>& known,
                           const std::string& section) {
  for (auto it = j.begin(); it != j.end(); ++it)
    if (std::find(known.begin(), known.end(), it.key()) == known.end())
      throw ConfigError(section + " config: unknown key '" + it.key() + "'");
}

}  // namespace detail

inline nlohmann::json data_config_json(const DataConfig& c) {
  return {{"stride", c.stride},
          {"train_frac", c.split.train},
          {"val_frac", c.split.val},
          {"test_frac", c.split.test},
          {"split_seed", c.split.seed}};
}

inline DataConfig data_config_from_json(const nlohmann::json& j) {
  DataConfig c;
  detail::reject_unknown(j, {"stride", "train_frac", "val_frac", "test_frac", "split_seed"},
                         "data");
  if (j.contains("stride")) c.stride = j["stride"].get<std::size_t>();
  if (j.contains("train_frac")) c.split.train = j["train_frac"].get<double>();
  if (j.contains("val_frac")) c.split.val = j["val_frac"].get<double>();
  if (j.contains("test_frac")) c.split.test = j["test_frac"].get<double>();
  if (j.contains("split_seed")) c.split.seed = j["split_seed"].get<std::uint64_t>();
  if (c.stride < 1) throw ConfigError("data config: stride must be >= 1");
  c.split.validate();
  return c;
}

inline nlohmann::json extract_config_json(const FilterConfig& c) {
  return {{"source_fps", c.source_fps},
          {"target_fps", c.target_fps},
          {"min_duration_s", c.min_duration_s},
          {"stationary_max_disp", c.stationary_max_disp},
          {"approach_x", c.approach_x},
          {"approach_y", c.approach_y},
          {"min_confidence", c.min_confidence}};
}

inline FilterConfig extract_config_from_json(const nlohmann::json& j) {
  FilterConfig c;
  detail::reject_unknown(j,
                         {"source_fps", "target_fps", "min_duration_s", "stationary_max_disp",
                          "approach_x", "approach_y", "min_confidence"},
                         "extract");
  if (j.contains("source_fps")) c.source_fps = j["source_fps"].get<double>();
  if (j.contains("target_fps")) c.target_fps = j["target_fps"].get<double>();
  if (j.contains("min_duration_s")) c.min_duration_s = j["min_duration_s"].get<double>();
  if (j.contains("stationary_max_disp"))
    c.stationary_max_disp = j["stationary_max_disp"].get<double>();
  if (j.contains("approach_x")) c.approach_x = j["approach_x"].get<double>();
  if (j.contains("approach_y")) c.approach_y = j["approach_y"].get<double>();
  if (j.contains("min_confidence")) c.min_confidence = j["min_confidence"].get<double>();
  c.validate();
  return c;
}

inline nlohmann::json synth_config_json(const SynthConfig& c) {
  return {{"lanes", c.lanes},
          {"lane_width", c.lane_width},
          {"n_vehicles", c.n_vehicles},
          {"duration_s", c.duration_s},
          {"fps", c.fps},
          {"speed_min", c.speed_min},
          {"speed_max", c.speed_max},
          {"accel_min", c.accel_min},
          {"accel_max", c.accel_max},
          {"merge_fraction", c.merge_fraction},
          {"merge_span", c.merge_span},
          {"merge_steepness", c.merge_steepness},
          {"noise_sigma", c.noise_sigma},
          {"seed", c.seed},
          {"view", {{"a", c.view.a}, {"b", c.view.b}, {"c", c.view.c}, {"d", c.view.d},
                    {"tx", c.view.tx}, {"ty", c.view.ty}}}};
}

inline SynthConfig synth_config_from_json(const nlohmann::json& j) {
  SynthConfig c;
  detail::reject_unknown(j,
                         {"lanes", "lane_width", "n_vehicles", "duration_s", "fps", "speed_min",
                          "speed_max", "accel_min", "accel_max", "merge_fraction", "merge_span",
                          "merge_steepness", "noise_sigma", "seed", "view"},
                         "synth");
  if (j.contains("lanes")) c.lanes = j["lanes"].get<std::size_t>();
  if (j.contains("lane_width")) c.lane_width = j["lane_width"].get<double>();
  if (j.contains("n_vehicles")) c.n_vehicles = j["n_vehicles"].get<std::size_t>();
  if (j.contains("duration_s")) c.duration_s = j["duration_s"].get<double>();
  if (j.contains("fps")) c.fps = j["fps"].get<double>();
  if (j.contains("speed_min")) c.speed_min = j["speed_min"].get<double>();
  if (j.contains("speed_max")) c.speed_max = j["speed_max"].get<double>();
  if (j.contains("accel_min")) c.accel_min = j["accel_min"].get<double>();
  if (j.contains("accel_max")) c.accel_max = j["accel_max"].get<double>();
  if (j.contains("merge_fraction")) c.merge_fraction = j["merge_fraction"].get<double>();
  if (j.contains("merge_span")) c.merge_span = j["merge_span"].get<double>();
  if (j.contains("merge_steepness")) c.merge_steepness = j["merge_steepness"].get<double>();
  if (j.contains("noise_sigma")) c.noise_sigma = j["noise_sigma"].get<double>();
  if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
  if (j.contains("view")) {
    const auto& v = j["view"];
    detail::reject_unknown(v, {"a", "b", "c", "d", "tx", "ty"}, "synth.view");
    if (v.contains("a")) c.view.a = v["a"].get<double>();
    if (v.contains("b")) c.view.b = v["b"].get<double>();
    if (v.contains("c")) c.view.c = v["c"].get<double>();
    if (v.contains("d")) c.view.d = v["d"].get<double>();
    if (v.contains("tx")) c.view.tx = v["tx"].get<double>();
    if (v.contains("ty")) c.view.ty = v["ty"].get<double>();
  }
  c.validate();
  return c;
}

/// One JSON document covering every stage. Every field is optional and
/// defaults as documented per section; unknown keys anywhere are rejected.
struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  DataConfig data;
  FilterConfig extract;
  SynthConfig synth;
};

inline nlohmann::json run_config_json(const RunConfig& c) {
  return {{"model", config_json(c.model)},
          {"train", train_config_json(c.train)},
          {"data", data_config_json(c.data)},
          {"extract", extract_config_json(c.extract)},
          {"synth", synth_config_json(c.synth)}};
}

inline RunConfig run_config_from_json(const nlohmann::json& j) {
  detail::reject_unknown(j, {"model", "train", "data", "extract", "synth"}, "run");
  RunConfig c;
  if (j.contains("model")) c.model = config_from_json(j["model"]);
  if (j.contains("train")) c.train = train_config_from_json(j["train"]);
  if (j.contains("data")) c.data = data_config_from_json(j["data"]);
  if (j.contains("extract")) c.extract = extract_config_from_json(j["extract"]);
  if (j.contains("synth")) c.synth = synth_config_from_json(j["synth"]);
  return c;
}

inline RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open config: " + path);
  nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
  if (j.is_discarded()) throw ConfigError("config is not valid JSON: " + path);
  return run_config_from_json(j);
}

/// Apply a dotted override like "model.latent_dim=32" onto the JSON form.
/// Values parse as JSON when possible (numbers, booleans), else as strings.
inline void apply_override(nlohmann::json& j, const std::string& assignment) {
  auto eq = assignment.find('=');
  if (eq == std::string::npos)
    throw ConfigError("override must look like section.key=value: " + assignment);
  std::string path = assignment.substr(0, eq);
  std::string value = assignment.substr(eq + 1);
  nlohmann::json parsed = nlohmann::json::parse(value, nullptr, false);
  if (parsed.is_discarded()) parsed = value;
  nlohmann::json* cur = &j;
  std::size_t pos = 0;
  while (true) {
    auto dot = path.find('.', pos);
    std::string key = path.substr(pos, dot == std::string::npos ? dot : dot - pos);
    if (key.empty()) throw ConfigError("bad override path: " + assignment);
    if (dot == std::string::npos) {
      (*cur)[key] = parsed;
      break;
    }
    cur = &(*cur)[key];
    pos = dot + 1;
  }
}

/// Echo the run's full effective configuration into its output directory,
/// making the run reproducible from artifacts alone.
inline void write_effective_config(const RunConfig& c, const std::string& dir) {
  std::string path = dir + "/effective-config.json";
  std::ofstream os(path);
  if (!os) throw DataError("cannot write " + path);
  os << run_config_json(c).dump(2) << "\n";
}

}  // namespace pv

#endif
