#include "servoscope/cli.hpp"

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <vector>

#include "servoscope/config.hpp"
#include "servoscope/errors.hpp"
#include "servoscope/suite.hpp"

namespace servoscope::cli {

namespace {

constexpr const char* kUsage =
    "usage: servoscope <gen-demos|train|execute|evaluate|sphere>"
    " --config PATH [--seed N] --out DIR [--timings]\n"
    "\n"
    "  gen-demos  write demos/demo_NNN directories (PGM frames + manifest.json)\n"
    "  train      fit the task function; writes weights.tfn + learning_curve.csv\n"
    "  execute    one closed-loop trial; writes trace.csv\n"
    "  evaluate   seeded trial suites; writes suite.csv\n"
    "  sphere     reward-field probes; writes reward_field_NNN.csv\n";

struct Cli {
  std::string subcommand;
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
  bool timings = false;
};

std::optional<Cli> parse_args(std::span<const std::string> args) {
  if (args.empty()) return std::nullopt;
  Cli cli;
  cli.subcommand = args[0];
  for (std::size_t i = 1; i < args.size(); ++i) {
    const std::string& arg = args[i];
    auto value = [&]() -> const std::string* {
      if (i + 1 >= args.size()) return nullptr;
      return &args[++i];
    };
    if (arg == "--config") {
      const std::string* v = value();
      if (!v) return std::nullopt;
      cli.config_path = *v;
    } else if (arg == "--seed") {
      const std::string* v = value();
      if (!v) return std::nullopt;
      std::uint64_t seed = 0;
      const auto [ptr, ec] = std::from_chars(v->data(), v->data() + v->size(), seed);
      if (ec != std::errc() || ptr != v->data() + v->size()) return std::nullopt;
      cli.seed = seed;
    } else if (arg == "--out") {
      const std::string* v = value();
      if (!v) return std::nullopt;
      cli.out_dir = *v;
    } else if (arg == "--timings") {
      cli.timings = true;
    } else {
      return std::nullopt;
    }
  }
  return cli;
}

int cmd_gen_demos(const ExperimentConfig& config, const std::filesystem::path& out) {
  const std::vector<sim::Demonstration> demos =
      generate_demo_set(config, config.demo_count);
  std::filesystem::create_directories(demos_dir(out));
  for (std::size_t i = 0; i < demos.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "demo_%03zu", i);
    sim::save_demonstration(demos[i], demos_dir(out) / name);
    std::cerr << "[gen-demos] " << name << ": " << demos[i].frames.size() << " frames"
              << (demos[i].reached ? "" : " (target not reached)") << "\n";
  }
  return 0;
}

int cmd_train(const ExperimentConfig& config, const std::filesystem::path& out,
              bool timings) {
  const std::vector<sim::Demonstration> demos =
      obtain_demos(config, out, config.demo_count);
  const TrainingArtifacts artifacts = train_task_function(config, demos);
  std::filesystem::create_directories(out);
  nn::save_network(artifacts.net, weights_path(out));
  irl::write_learning_curve_csv(artifacts.curve, out / "learning_curve.csv", timings);
  std::cerr << "[train] " << demos.size() << " demos, " << config.trainer.epochs
            << " epochs in " << artifacts.seconds << " s; final mean ll "
            << artifacts.curve.mean_ll.back() << " of bound "
            << irl::cost_upper_bound(config.trainer.sigma0) << "\n";
  return 0;
}

int cmd_execute(const ExperimentConfig& config, const std::filesystem::path& out) {
  const nn::NetworkParams net = nn::load_network(weights_path(out));
  const uvs::ExecutionTrace trace =
      run_trial(config, net, nullptr, trial_seed(config, 0));
  uvs::write_trace_csv(trace, out / "trace.csv");
  std::cerr << "[execute] " << (trace.success ? "success" : "failure") << " in "
            << trace.steps_used << " steps; final pixel error " << trace.final_error
            << "\n";
  return 0;
}

int cmd_evaluate(const ExperimentConfig& config, const std::filesystem::path& out,
                 bool timings) {
  std::filesystem::create_directories(out);
  const SuiteOutcome outcome = evaluate_suite(config, out);
  write_suite_csv(outcome.result, out / "suite.csv", timings);
  return 0;
}

int cmd_sphere(const ExperimentConfig& config, const std::filesystem::path& out) {
  const nn::NetworkParams net = nn::load_network(weights_path(out));
  const sim::Scene scene = make_scene(config);
  const sim::CameraModel camera = make_camera(config);
  std::vector<Eigen::Vector3d> centers = config.sphere.centers;
  if (centers.empty()) centers = default_probe_centers(scene);
  for (std::size_t i = 0; i < centers.size(); ++i) {
    const auto probes = irl::reward_field(net, scene, camera, centers[i],
                                          config.sphere.n_dirs, config.sphere.step);
    char name[40];
    std::snprintf(name, sizeof name, "reward_field_%03zu.csv", i);
    irl::write_reward_field_csv(probes, out / name);
    const auto best = std::max_element(
        probes.begin(), probes.end(),
        [](const auto& a, const auto& b) { return a.reward < b.reward; });
    std::cerr << "[sphere] center " << i << ": argmax direction ("
              << best->direction.transpose() << ") reward " << best->reward << "\n";
  }
  return 0;
}

}  // namespace

int run_command(std::span<const std::string> args) {
  const std::optional<Cli> cli = parse_args(args);
  if (!cli) {
    std::cerr << kUsage;
    return 1;
  }
  const bool known = cli->subcommand == "gen-demos" || cli->subcommand == "train" ||
                     cli->subcommand == "execute" || cli->subcommand == "evaluate" ||
                     cli->subcommand == "sphere";
  if (!known) {
    std::cerr << "unknown subcommand '" << cli->subcommand << "'\n" << kUsage;
    return 1;
  }
  if (cli->config_path.empty()) {
    std::cerr << "missing --config PATH\n" << kUsage;
    return 1;
  }

  try {
    const ExperimentConfig config = load_config(cli->config_path, cli->seed);
    std::filesystem::path out = cli->out_dir;
    if (out.empty()) out = config.output_dir;
    if (out.empty()) {
      std::cerr << "missing --out DIR (and config has no output_dir)\n" << kUsage;
      return 1;
    }
    std::filesystem::create_directories(out);

    if (cli->subcommand == "gen-demos") return cmd_gen_demos(config, out);
    if (cli->subcommand == "train") return cmd_train(config, out, cli->timings);
    if (cli->subcommand == "execute") return cmd_execute(config, out);
    if (cli->subcommand == "evaluate") return cmd_evaluate(config, out, cli->timings);
    return cmd_sphere(config, out);
  } catch (const ConfigError& e) {
    std::cerr << "validation error: " << e.what() << "\n";
    return 1;
  } catch (const ShapeError& e) {
    std::cerr << "validation error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}

int run_command(int argc, const char* const* argv) {
  std::vector<std::string> args;
  args.reserve(argc > 1 ? argc - 1 : 0);
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run_command(std::span<const std::string>(args));
}

}  // namespace servoscope::cli
