#pragma once

// JSON snapshots and overrides for TrainConfig and EnhanceConfig, and the
// run manifest written next to every command's outputs.

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "uodkit/enhance/pipeline.hpp"
#include "uodkit/toydet/train.hpp"

namespace uodkit::cli {

inline constexpr const char* kVersion = "0.1.0";

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using nlohmann::json;

inline json to_json(const toydet::TrainConfig& c) {
  return {{"epochs", c.epochs},
          {"lr", c.lr},
          {"lr_final_ratio", c.lr_final_ratio},
          {"momentum", c.momentum},
          {"weight_decay", c.weight_decay},
          {"grad_clip", c.grad_clip},
          {"optimizer", c.optimizer == toydet::Optimizer::kAdamW ? "adamw" : "sgd"},
          {"adam_beta2", c.adam_beta2},
          {"adam_eps", c.adam_eps},
          {"batch", c.batch},
          {"seed", c.seed},
          {"use_dpsa", c.use_dpsa},
          {"use_fgiou", c.use_fgiou},
          {"use_enhance", c.use_enhance},
          {"loss_weights", {{"box", c.loss_weights.box}, {"cls", c.loss_weights.cls}, {"obj", c.loss_weights.obj}}},
          {"focal", {{"alpha", c.focal.alpha}, {"gamma", c.focal.gamma}}},
          {"val_fraction", c.val_fraction},
          {"patience", c.patience},
          {"threads", c.threads}};
}

inline json to_json(const EnhanceConfig& c) {
  return {{"red_gain_clamp", {c.red_gain_clamp.first, c.red_gain_clamp.second}},
          {"blue_gain_clamp", {c.blue_gain_clamp.first, c.blue_gain_clamp.second}},
          {"clahe_clip", c.clahe_clip},
          {"clahe_tiles", {c.clahe_tiles.first, c.clahe_tiles.second}},
          {"dehaze_omega", c.dehaze_omega},
          {"dehaze_t_floor", c.dehaze_t_floor},
          {"dehaze_sigma_divisor", c.dehaze_sigma_divisor},
          {"guided_radius", c.guided_radius},
          {"guided_eps", c.guided_eps},
          {"sharpen_beta", c.sharpen_beta}};
}

namespace detail {

// Overwrites every field of `target` named in `patch`; unknown keys are errors.
inline void merge_known(json& target, const json& patch, const std::string& where) {
  if (!patch.is_object()) throw ConfigError(where + ": expected a JSON object");
  for (const auto& [key, value] : patch.items()) {
    if (!target.contains(key)) throw ConfigError(where + ": unknown key '" + key + "'");
    if (target[key].is_object())
      merge_known(target[key], value, where + "." + key);
    else
      target[key] = value;
  }
}

template <typename T>
void read(const json& j, const char* key, T& out) {
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config key '") + key + "': " + e.what());
  }
}

}  // namespace detail

inline toydet::TrainConfig from_json(const json& j, toydet::TrainConfig c) {
  json full = to_json(c);
  detail::merge_known(full, j, "train config");
  detail::read(full, "epochs", c.epochs);
  detail::read(full, "lr", c.lr);
  detail::read(full, "lr_final_ratio", c.lr_final_ratio);
  detail::read(full, "momentum", c.momentum);
  detail::read(full, "weight_decay", c.weight_decay);
  detail::read(full, "grad_clip", c.grad_clip);
  std::string opt;
  detail::read(full, "optimizer", opt);
  if (opt != "adamw" && opt != "sgd") throw ConfigError("config key 'optimizer': expected \"adamw\" or \"sgd\"");
  c.optimizer = opt == "adamw" ? toydet::Optimizer::kAdamW : toydet::Optimizer::kSGD;
  detail::read(full, "adam_beta2", c.adam_beta2);
  detail::read(full, "adam_eps", c.adam_eps);
  detail::read(full, "batch", c.batch);
  detail::read(full, "seed", c.seed);
  detail::read(full, "use_dpsa", c.use_dpsa);
  detail::read(full, "use_fgiou", c.use_fgiou);
  detail::read(full, "use_enhance", c.use_enhance);
  detail::read(full["loss_weights"], "box", c.loss_weights.box);
  detail::read(full["loss_weights"], "cls", c.loss_weights.cls);
  detail::read(full["loss_weights"], "obj", c.loss_weights.obj);
  detail::read(full["focal"], "alpha", c.focal.alpha);
  detail::read(full["focal"], "gamma", c.focal.gamma);
  detail::read(full, "val_fraction", c.val_fraction);
  detail::read(full, "patience", c.patience);
  detail::read(full, "threads", c.threads);
  return c;
}

inline EnhanceConfig from_json(const json& j, EnhanceConfig c) {
  json full = to_json(c);
  detail::merge_known(full, j, "enhance config");
  detail::read(full, "red_gain_clamp", c.red_gain_clamp);
  detail::read(full, "blue_gain_clamp", c.blue_gain_clamp);
  detail::read(full, "clahe_clip", c.clahe_clip);
  detail::read(full, "clahe_tiles", c.clahe_tiles);
  detail::read(full, "dehaze_omega", c.dehaze_omega);
  detail::read(full, "dehaze_t_floor", c.dehaze_t_floor);
  detail::read(full, "dehaze_sigma_divisor", c.dehaze_sigma_divisor);
  detail::read(full, "guided_radius", c.guided_radius);
  detail::read(full, "guided_eps", c.guided_eps);
  detail::read(full, "sharpen_beta", c.sharpen_beta);
  return c;
}

inline json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

inline std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

/// What a command did and how to rerun it: `argv` replays the command.
struct RunManifest {
  std::string command;
  std::vector<std::string> argv;
  json config = json::object();
  json seeds = json::object();
  std::string started;

  json to_json(const std::string& finished) const {
    return {{"command", command}, {"argv", argv},       {"config", config},     {"seeds", seeds},
            {"version", kVersion}, {"started", started}, {"finished", finished}};
  }

  void write(const std::filesystem::path& path) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << to_json(utc_now()).dump(2) << '\n';
  }
};

}  // namespace uodkit::cli
