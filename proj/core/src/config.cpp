#include "servoscope/config.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "servoscope/errors.hpp"

namespace servoscope::cli {

namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& key, const std::string& why) {
  throw ConfigError("config: " + key + " " + why);
}

void check_keys(const json& obj, const std::string& prefix,
                const std::set<std::string>& allowed) {
  for (const auto& [key, value] : obj.items()) {
    if (!allowed.count(key))
      throw ConfigError("config: unknown key '" +
                        (prefix.empty() ? key : prefix + "." + key) + "'");
  }
}

double get_number(const json& obj, const std::string& prefix, const char* key,
                  double fallback) {
  if (!obj.contains(key)) return fallback;
  if (!obj[key].is_number()) fail(prefix + "." + key, "must be a number");
  return obj[key].get<double>();
}

int get_int(const json& obj, const std::string& prefix, const char* key, int fallback) {
  if (!obj.contains(key)) return fallback;
  if (!obj[key].is_number_integer()) fail(prefix + "." + key, "must be an integer");
  return obj[key].get<int>();
}

std::uint64_t get_seed(const json& obj, const std::string& prefix, const char* key,
                       std::uint64_t fallback) {
  if (!obj.contains(key)) return fallback;
  if (!obj[key].is_number_integer()) fail(prefix + "." + key, "must be an integer");
  return obj[key].get<std::uint64_t>();
}

sim::Background parse_background(const json& obj, const std::string& prefix) {
  check_keys(obj, prefix, {"type", "level", "cell", "level_a", "level_b"});
  const std::string type = obj.value("type", "uniform");
  if (type == "uniform") {
    const int level = get_int(obj, prefix, "level", 30);
    if (level < 0 || level > 255) fail(prefix + ".level", "must be in [0, 255]");
    return sim::Background::uniform(level);
  }
  if (type == "checker") {
    const int cell = get_int(obj, prefix, "cell", 16);
    const int a = get_int(obj, prefix, "level_a", 25);
    const int b = get_int(obj, prefix, "level_b", 45);
    if (cell < 1) fail(prefix + ".cell", "must be >= 1");
    if (a < 0 || a > 255 || b < 0 || b > 255)
      fail(prefix + ".level_a/level_b", "must be in [0, 255]");
    return sim::Background::checker(cell, a, b);
  }
  fail(prefix + ".type", "must be 'uniform' or 'checker'");
}

sim::Perturbation parse_perturbation(const json& obj, const std::string& prefix) {
  if (!obj.is_object() || !obj.contains("kind"))
    fail(prefix, "must be an object with a 'kind'");
  const std::string kind = obj["kind"].get<std::string>();
  if (kind == "translate_rotate_target") {
    check_keys(obj, prefix, {"kind", "dx", "dy", "dtheta_deg"});
    sim::TranslateRotateTarget t;
    t.dx = get_number(obj, prefix, "dx", 0.0);
    t.dy = get_number(obj, prefix, "dy", 0.0);
    t.dtheta = get_number(obj, prefix, "dtheta_deg", 0.0) * M_PI / 180.0;
    return t;
  }
  if (kind == "background_swap") {
    check_keys(obj, prefix, {"kind", "background"});
    if (!obj.contains("background")) fail(prefix, "background_swap needs 'background'");
    return sim::BackgroundSwap{parse_background(obj["background"], prefix + ".background")};
  }
  if (kind == "occlude_object" || kind == "occlude_target") {
    check_keys(obj, prefix, {"kind", "fraction"});
    const double fraction = get_number(obj, prefix, "fraction", 0.25);
    if (fraction < 0.0 || fraction > 1.0) fail(prefix + ".fraction", "must be in [0, 1]");
    if (kind == "occlude_object") return sim::OccludeObject{fraction};
    return sim::OccludeTarget{fraction};
  }
  if (kind == "illumination_shift") {
    check_keys(obj, prefix, {"kind", "delta"});
    const int delta = get_int(obj, prefix, "delta", 0);
    if (delta < -255 || delta > 255) fail(prefix + ".delta", "must be in [-255, 255]");
    return sim::IlluminationShift{delta};
  }
  fail(prefix + ".kind", "unknown perturbation kind '" + kind + "'");
}

ExperimentConfig parse_config(const json& root,
                              std::optional<std::uint64_t> seed_override) {
  if (!root.is_object()) throw ConfigError("config: top level must be a JSON object");
  check_keys(root, "",
             {"task", "image", "network", "trainer", "controller", "expert", "sphere",
              "demos", "trials", "demo_counts", "perturbations", "output_dir",
              "master_seed"});
  ExperimentConfig config;

  config.master_seed = get_seed(root, "", "master_seed", config.master_seed);
  if (seed_override) config.master_seed = *seed_override;

  if (root.contains("task")) {
    if (!root["task"].is_string()) fail("task", "must be a string");
    config.task = root["task"].get<std::string>();
  }
  if (config.task != "stack_blocks")
    fail("task", "unknown task '" + config.task + "' (available: stack_blocks)");

  if (root.contains("image")) {
    const json& obj = root["image"];
    check_keys(obj, "image", {"width", "height", "input_side"});
    config.image.width = get_int(obj, "image", "width", config.image.width);
    config.image.height = get_int(obj, "image", "height", config.image.height);
    config.image.input_side = get_int(obj, "image", "input_side", config.image.input_side);
  }
  if (config.image.width < 32 || config.image.height < 32)
    fail("image.width/height", "must be >= 32");
  if (config.image.input_side < 1 ||
      config.image.input_side > std::min(config.image.width, config.image.height))
    fail("image.input_side", "must be in [1, min(width, height)]");

  if (root.contains("network")) {
    const json& obj = root["network"];
    check_keys(obj, "network", {"hidden_dims"});
    if (obj.contains("hidden_dims")) {
      if (!obj["hidden_dims"].is_array() || obj["hidden_dims"].empty())
        fail("network.hidden_dims", "must be a non-empty array");
      config.network.hidden_dims.clear();
      for (const auto& dim : obj["hidden_dims"]) {
        if (!dim.is_number_integer() || dim.get<int>() < 1)
          fail("network.hidden_dims", "entries must be integers >= 1");
        config.network.hidden_dims.push_back(dim.get<int>());
      }
    }
  }

  // trainer (sigma0 and v are derived, never read from the file)
  bool trainer_seed_given = false;
  if (root.contains("trainer")) {
    const json& obj = root["trainer"];
    check_keys(obj, "trainer", {"dof", "alpha", "epochs", "learning_rate", "seed"});
    config.trainer.dof = get_int(obj, "trainer", "dof", config.trainer.dof);
    config.trainer.alpha = get_number(obj, "trainer", "alpha", config.trainer.alpha);
    config.trainer.epochs = get_int(obj, "trainer", "epochs", config.trainer.epochs);
    config.trainer.learning_rate =
        get_number(obj, "trainer", "learning_rate", config.trainer.learning_rate);
    trainer_seed_given = obj.contains("seed");
    config.trainer.seed = get_seed(obj, "trainer", "seed", 0);
  }
  if (config.trainer.dof < 1 || config.trainer.dof > 3)
    fail("trainer.dof", "must be in [1, 3] (the simulator carries 3 joints)");
  if (!(config.trainer.alpha > 0.0 && config.trainer.alpha <= 1.0))
    fail("trainer.alpha", "must lie in (0, 1]");
  if (config.trainer.epochs < 1) fail("trainer.epochs", "must be >= 1");
  if (config.trainer.learning_rate <= 0) fail("trainer.learning_rate", "must be > 0");
  if (!trainer_seed_given) config.trainer.seed = config.master_seed;
  config.trainer.sigma0 = irl::sigma_from_confidence(config.trainer.alpha);
  config.trainer.v = irl::make_scalarization(config.trainer.dof);

  // controller
  bool probe_seed_given = false;
  if (root.contains("controller")) {
    const json& obj = root["controller"];
    check_keys(obj, "controller",
               {"step_gain", "damping", "r_thres", "patience", "min_singular",
                "probe_eps", "max_steps", "success_threshold_px", "dt",
                "broyden_min_step", "probe_mode", "probe_count", "probe_seed"});
    auto& ctl = config.controller;
    ctl.step_gain = get_number(obj, "controller", "step_gain", ctl.step_gain);
    ctl.damping = get_number(obj, "controller", "damping", ctl.damping);
    ctl.recalib_patience = get_int(obj, "controller", "patience", ctl.recalib_patience);
    ctl.min_singular = get_number(obj, "controller", "min_singular", ctl.min_singular);
    ctl.probe_eps = get_number(obj, "controller", "probe_eps", ctl.probe_eps);
    ctl.max_steps = get_int(obj, "controller", "max_steps", ctl.max_steps);
    ctl.success_threshold_px =
        get_number(obj, "controller", "success_threshold_px", ctl.success_threshold_px);
    ctl.dt = get_number(obj, "controller", "dt", ctl.dt);
    ctl.broyden_min_step =
        get_number(obj, "controller", "broyden_min_step", ctl.broyden_min_step);
    if (obj.contains("r_thres")) {
      if (obj["r_thres"].is_number()) {
        ctl.r_thres =
            Eigen::VectorXd::Constant(config.trainer.dof, obj["r_thres"].get<double>());
      } else if (obj["r_thres"].is_array()) {
        ctl.r_thres.resize(static_cast<Eigen::Index>(obj["r_thres"].size()));
        Eigen::Index i = 0;
        for (const auto& value : obj["r_thres"]) {
          if (!value.is_number()) fail("controller.r_thres", "entries must be numbers");
          ctl.r_thres[i++] = value.get<double>();
        }
      } else {
        fail("controller.r_thres", "must be a number or an array");
      }
    }
    if (obj.contains("probe_mode")) {
      const std::string mode = obj["probe_mode"].get<std::string>();
      if (mode == "axis")
        ctl.probe_mode = uvs::ProbeMode::kAxis;
      else if (mode == "random")
        ctl.probe_mode = uvs::ProbeMode::kRandom;
      else
        fail("controller.probe_mode", "must be 'axis' or 'random'");
    }
    ctl.probe_count = get_int(obj, "controller", "probe_count", ctl.probe_count);
    probe_seed_given = obj.contains("probe_seed");
    ctl.probe_seed = get_seed(obj, "controller", "probe_seed", 0);
  }
  config.controller.dof = config.trainer.dof;
  if (config.controller.step_gain <= 0) fail("controller.step_gain", "must be > 0");
  if (config.controller.damping < 0) fail("controller.damping", "must be >= 0");
  if (config.controller.recalib_patience < 1) fail("controller.patience", "must be >= 1");
  if (config.controller.min_singular <= 0) fail("controller.min_singular", "must be > 0");
  if (config.controller.probe_eps <= 0) fail("controller.probe_eps", "must be > 0");
  if (config.controller.max_steps < 1) fail("controller.max_steps", "must be >= 1");
  if (config.controller.success_threshold_px <= 0)
    fail("controller.success_threshold_px", "must be > 0");
  if (config.controller.dt <= 0) fail("controller.dt", "must be > 0");
  if (config.controller.broyden_min_step < 0)
    fail("controller.broyden_min_step", "must be >= 0");
  if (config.controller.probe_count < 0) fail("controller.probe_count", "must be >= 0");
  if (config.controller.r_thres.size() != 0 &&
      config.controller.r_thres.size() != config.trainer.dof)
    fail("controller.r_thres", "length must equal trainer.dof");
  if (!probe_seed_given) config.controller.probe_seed = config.master_seed + 2000;

  // expert
  bool expert_confidence_given = false;
  bool expert_seed_given = false;
  if (root.contains("expert")) {
    const json& obj = root["expert"];
    check_keys(obj, "expert",
               {"step_size", "confidence", "stop_distance", "max_frames", "noise_seed"});
    auto& expert = config.expert;
    expert.step_size = get_number(obj, "expert", "step_size", expert.step_size);
    expert_confidence_given = obj.contains("confidence");
    expert.confidence = get_number(obj, "expert", "confidence", expert.confidence);
    expert.stop_distance = get_number(obj, "expert", "stop_distance", expert.stop_distance);
    expert.max_frames = get_int(obj, "expert", "max_frames", expert.max_frames);
    expert_seed_given = obj.contains("noise_seed");
    expert.noise_seed = get_seed(obj, "expert", "noise_seed", 0);
  }
  if (!expert_confidence_given) config.expert.confidence = config.trainer.alpha;
  if (config.expert.step_size <= 0) fail("expert.step_size", "must be > 0");
  if (!(config.expert.confidence > 0.0 && config.expert.confidence <= 1.0))
    fail("expert.confidence", "must lie in (0, 1]");
  if (config.expert.stop_distance < 0) fail("expert.stop_distance", "must be >= 0");
  if (config.expert.max_frames < 2) fail("expert.max_frames", "must be >= 2");
  if (!expert_seed_given) config.expert.noise_seed = config.master_seed + 1000;

  // sphere
  if (root.contains("sphere")) {
    const json& obj = root["sphere"];
    check_keys(obj, "sphere", {"n_dirs", "step", "centers"});
    config.sphere.n_dirs = get_int(obj, "sphere", "n_dirs", config.sphere.n_dirs);
    config.sphere.step = get_number(obj, "sphere", "step", config.sphere.step);
    if (obj.contains("centers")) {
      if (!obj["centers"].is_array()) fail("sphere.centers", "must be an array");
      for (const auto& c : obj["centers"]) {
        if (!c.is_array() || c.size() != 3)
          fail("sphere.centers", "entries must be [x, y, z] triples");
        config.sphere.centers.emplace_back(c.at(0).get<double>(), c.at(1).get<double>(),
                                           c.at(2).get<double>());
      }
    }
  }
  if (config.sphere.n_dirs < 4) fail("sphere.n_dirs", "must be >= 4");
  if (config.sphere.step <= 0) fail("sphere.step", "must be > 0");

  config.demo_count = get_int(root, "", "demos", config.demo_count);
  config.trial_count = get_int(root, "", "trials", config.trial_count);
  if (config.demo_count < 1) fail("demos", "must be >= 1");
  if (config.trial_count < 1) fail("trials", "must be >= 1");

  if (root.contains("demo_counts")) {
    if (!root["demo_counts"].is_array()) fail("demo_counts", "must be an array");
    for (const auto& count : root["demo_counts"]) {
      if (!count.is_number_integer() || count.get<int>() < 1)
        fail("demo_counts", "entries must be integers >= 1");
      config.demo_counts.push_back(count.get<int>());
    }
  }

  if (root.contains("perturbations")) {
    if (!root["perturbations"].is_array()) fail("perturbations", "must be an array");
    int index = 0;
    for (const auto& p : root["perturbations"]) {
      config.perturbations.push_back(
          parse_perturbation(p, "perturbations[" + std::to_string(index) + "]"));
      ++index;
    }
  }

  if (root.contains("output_dir")) {
    if (!root["output_dir"].is_string()) fail("output_dir", "must be a string");
    config.output_dir = root["output_dir"].get<std::string>();
  }
  return config;
}

int line_of_offset(const std::string& text, std::size_t offset) {
  int line = 1;
  for (std::size_t i = 0; i < offset && i < text.size(); ++i)
    if (text[i] == '\n') ++line;
  return line;
}

}  // namespace

ExperimentConfig load_config(const std::filesystem::path& path,
                             std::optional<std::uint64_t> seed_override) {
  if (path.empty()) return default_config(seed_override);
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config: " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  const std::string text = buffer.str();
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError("config: parse error at line " +
                      std::to_string(line_of_offset(text, e.byte)) + " in " +
                      path.string() + ": " + e.what());
  }
  return parse_config(root, seed_override);
}

ExperimentConfig default_config(std::optional<std::uint64_t> seed_override) {
  return parse_config(json::object(), seed_override);
}

sim::Scene make_scene(const ExperimentConfig& config) {
  // only stack_blocks exists today; load_config rejects anything else
  (void)config;
  return sim::make_stack_blocks_scene();
}

sim::CameraModel make_camera(const ExperimentConfig& config) {
  return sim::make_stack_blocks_camera(config.image.width, config.image.height);
}

std::uint64_t demo_seed(const ExperimentConfig& config, int demo_index) {
  return config.expert.noise_seed + static_cast<std::uint64_t>(demo_index);
}

std::uint64_t trial_seed(const ExperimentConfig& config, int trial_index) {
  return config.master_seed + static_cast<std::uint64_t>(trial_index);
}

}  // namespace servoscope::cli
