#pragma once

// Deterministic desk-scale stand-in for the physical rig: a 3-DOF Cartesian
// carrier holding an object block, a fixed target block, a pinhole camera the
// controller never sees, a flat-shaded rasterizer, a scripted demonstrator
// and the scene perturbations used by the evaluation suites.

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "servoscope/env.hpp"
#include "servoscope/image.hpp"

namespace servoscope::sim {

struct Background {
  enum class Kind { kUniform, kChecker };
  Kind kind = Kind::kUniform;
  int level = 30;
  int cell = 16;      // checker cell edge, pixels
  int level_a = 25;
  int level_b = 45;

  static Background uniform(int level) { return {Kind::kUniform, level, 16, 25, 45}; }
  static Background checker(int cell, int level_a, int level_b) {
    return {Kind::kChecker, 30, cell, level_a, level_b};
  }
};

// Image-space rectangle painted over the rendered scene.
struct Occluder {
  double x0 = 0, y0 = 0, x1 = 0, y1 = 0;
  std::uint8_t gray = 75;
};

struct Scene {
  Eigen::Vector3d object_pos{0, 0, 0};
  double object_yaw = 0;
  double object_size = 40;
  Eigen::Vector3d target_pos{0, 0, 0};
  double target_yaw = 0;
  double target_size = 60;
  Background background = Background::uniform(30);
  int illumination_offset = 0;
  std::vector<Occluder> occluders;
  double workspace = 400;  // positions live in [0, workspace]^3
};

// Flat-shaded block gray levels (high contrast for differencing).
inline constexpr std::uint8_t kObjectGray = 120;
inline constexpr std::uint8_t kTargetGray = 200;

struct CameraModel {
  Eigen::Vector3d eye{0, 0, 1};
  Eigen::Vector3d look_at{0, 0, 0};
  Eigen::Vector3d up{0, 0, 1};
  double focal_px = 130;
  int image_w = 128;
  int image_h = 128;
};

struct RobotState {
  Eigen::VectorXd q;
  Eigen::VectorXd lower;  // per-axis joint limits
  Eigen::VectorXd upper;
};

// Fixed rotation+scale between robot axes and world axes. Held privately by
// the environment during execution; the controller never reads it.
struct MountTransform {
  Eigen::Matrix3d m = Eigen::Matrix3d::Identity();
};

MountTransform default_mount();
RobotState make_default_robot(int joints = 3);

struct ExpertConfig {
  double step_size = 16.0;      // world units per frame
  double confidence = 0.6;      // alpha in (0, 1]
  double stop_distance = 8.0;
  int max_frames = 20;
  std::uint64_t noise_seed = 0;
};

struct GroundTruthEntry {
  Eigen::Vector3d object_pos;
  Eigen::Vector3d target_pos;
};

struct Demonstration {
  std::vector<vision::ImageState> frames;
  std::vector<GroundTruthEntry> ground_truth;  // evaluation only
  ExpertConfig expert;
  bool reached = false;
};

struct TranslateRotateTarget {
  double dx = 0, dy = 0, dtheta = 0;
};
struct BackgroundSwap {
  Background background;
};
struct OccludeObject {
  double fraction = 0;
};
struct OccludeTarget {
  double fraction = 0;
};
struct IlluminationShift {
  int delta = 0;
};

using Perturbation = std::variant<TranslateRotateTarget, BackgroundSwap, OccludeObject,
                                  OccludeTarget, IlluminationShift>;

std::string perturbation_label(const Perturbation& p);

void validate_scene(const Scene& scene);
void validate_camera(const CameraModel& camera);

// Continuous pixel coordinates of a world point, or nullopt behind the camera.
std::optional<Eigen::Vector2d> project_point(const CameraModel& camera,
                                             const Eigen::Vector3d& p);

// Deterministic grayscale frame: background, target square, object square
// (painter's order), occluder rectangles, illumination offset, clamp.
vision::ImageState render(const Scene& scene, const CameraModel& camera);

// q' = clamp(q + qdot*dt, limits); the object moves by mount * (q' - q).
std::pair<Scene, RobotState> step_robot(const Scene& scene, const RobotState& robot,
                                        const MountTransform& mount,
                                        const Eigen::VectorXd& qdot, double dt);

// Scripted expert: moves the object min(step_size, dist) toward the target
// plus Gaussian noise with per-axis sigma (1-alpha)*step_size, rendering
// after each move. Deterministic for a given noise_seed.
Demonstration generate_demonstration(Scene scene, const CameraModel& camera,
                                     const ExpertConfig& expert);

// Returns a modified copy; the camera is needed to size image-space
// occluders against the projected block.
Scene apply_perturbation(const Scene& scene, const Perturbation& p,
                         const CameraModel& camera);

// Euclidean pixel distance between the projected block centers.
// Evaluation oracle only.
double pixel_error(const Scene& scene, const CameraModel& camera);

// Scales a success threshold stated at a reference resolution.
double scaled_threshold_px(double threshold, int ref_dim, int image_dim);

// Execution-phase environment: owns the scene, the robot and the hidden
// mount; exposes only step+render to the controller.
class SimEnvironment final : public ServoEnvironment {
 public:
  SimEnvironment(Scene scene, CameraModel camera, MountTransform mount, RobotState robot);

  Eigen::VectorXd step(const Eigen::VectorXd& qdot, double dt) override;
  vision::ImageState render() const override;
  int joint_count() const override { return static_cast<int>(robot_.q.size()); }

  // Evaluation-side view (suite scoring, oracles); not part of the
  // controller-facing interface.
  const Scene& scene() const { return scene_; }
  const CameraModel& camera() const { return camera_; }
  EvalProbe make_eval_probe() const;

 private:
  Scene scene_;
  CameraModel camera_;
  MountTransform mount_;
  RobotState robot_;
};

// The built-in stack-blocks task layout.
Scene make_stack_blocks_scene();
CameraModel make_stack_blocks_camera(int image_w, int image_h);

// Seeded start position for demonstrations and trials: an annulus around the
// target, kept inside the workspace and the camera frame.
Eigen::Vector3d sample_start_position(const Scene& scene, const CameraModel& camera,
                                      std::uint64_t seed);

// Demo directory: frame_0000.pgm ... plus manifest.json.
void save_demonstration(const Demonstration& demo, const std::filesystem::path& dir);
Demonstration load_demonstration(const std::filesystem::path& dir);

}  // namespace servoscope::sim
