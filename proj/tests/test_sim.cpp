#include "servoscope/sim.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "servoscope/errors.hpp"

namespace sim = servoscope::sim;
namespace vision = servoscope::vision;
using servoscope::ConfigError;
using servoscope::NumericError;
using servoscope::OutOfViewError;

namespace {

int count_gray(const vision::ImageState& image, std::uint8_t gray) {
  int n = 0;
  for (auto p : image.pixels)
    if (p == gray) ++n;
  return n;
}

}  // namespace

TEST(Render, EmptySceneIsUniformBackground) {
  sim::Scene scene = sim::make_stack_blocks_scene();
  scene.background = sim::Background::uniform(30);
  // push both blocks far outside the frustum (low corner, behind the desk edge)
  scene.object_pos = {0, 0, 0};
  scene.target_pos = {0, 0, 0};
  scene.object_size = 1e-3;
  scene.target_size = 1e-3;
  const sim::CameraModel camera = sim::make_stack_blocks_camera(128, 128);
  const auto image = sim::render(scene, camera);
  int non_background = 0;
  for (auto p : image.pixels)
    if (p != 30) ++non_background;
  // sub-pixel blocks can touch at most a few pixels
  EXPECT_LE(non_background, 8);
}

TEST(Render, IlluminationSaturationClampsTo255) {
  sim::Scene scene = sim::make_stack_blocks_scene();
  scene.illumination_offset = 255;
  const auto image = sim::render(scene, sim::make_stack_blocks_camera(128, 128));
  for (auto p : image.pixels) EXPECT_EQ(p, 255);
}

TEST(Render, DeterministicAndBlocksVisible) {
  const sim::Scene scene = sim::make_stack_blocks_scene();
  const sim::CameraModel camera = sim::make_stack_blocks_camera(128, 128);
  const auto a = sim::render(scene, camera);
  const auto b = sim::render(scene, camera);
  EXPECT_EQ(a.pixels, b.pixels);
  EXPECT_GT(count_gray(a, sim::kObjectGray), 10);
  EXPECT_GT(count_gray(a, sim::kTargetGray), 20);
}

TEST(Render, ObjectMotionLeavesTargetPixelsUnchanged) {
  sim::Scene before = sim::make_stack_blocks_scene();
  before.object_pos = {42, 30, 60};
  sim::Scene after = before;
  // strictly toward the optical-axis center, away from the target region
  after.object_pos = {56, 44, 58};
  const sim::CameraModel camera = sim::make_stack_blocks_camera(128, 128);
  const auto image_before = sim::render(before, camera);
  const auto image_after = sim::render(after, camera);

  // oracle: the target's projected bounding box from ground-truth geometry
  const auto center = sim::project_point(camera, before.target_pos);
  ASSERT_TRUE(center.has_value());
  const double half_extent = 1.1 * camera.focal_px * before.target_size /
                             (camera.look_at - camera.eye).norm() / 2.0;
  const int x0 = static_cast<int>(center->x() - half_extent);
  const int x1 = static_cast<int>(center->x() + half_extent);
  const int y0 = static_cast<int>(center->y() - half_extent);
  const int y1 = static_cast<int>(center->y() + half_extent);
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x)
      EXPECT_EQ(image_before.at(x, y), image_after.at(x, y));
}

TEST(Render, CheckerBackground) {
  sim::Scene scene = sim::make_stack_blocks_scene();
  scene.background = sim::Background::checker(16, 25, 45);
  scene.object_size = 1e-3;
  scene.target_size = 1e-3;
  scene.object_pos = {0, 0, 0};
  scene.target_pos = {0, 0, 0};
  const auto image = sim::render(scene, sim::make_stack_blocks_camera(128, 128));
  EXPECT_EQ(image.at(0, 0), 25);
  EXPECT_EQ(image.at(16, 0), 45);
  EXPECT_EQ(image.at(16, 16), 25);
}

TEST(Render, DegenerateCameraRejected) {
  const sim::Scene scene = sim::make_stack_blocks_scene();
  sim::CameraModel camera = sim::make_stack_blocks_camera(128, 128);
  camera.look_at = camera.eye;
  EXPECT_THROW(sim::render(scene, camera), ConfigError);
  camera = sim::make_stack_blocks_camera(16, 16);
  EXPECT_THROW(sim::render(scene, camera), ConfigError);
}

TEST(StepRobot, IdentityCases) {
  const sim::Scene scene = sim::make_stack_blocks_scene();
  const sim::RobotState robot = sim::make_default_robot(3);
  const sim::MountTransform mount = sim::default_mount();

  auto [s1, r1] = sim::step_robot(scene, robot, mount, Eigen::Vector3d::Zero(), 1.0);
  EXPECT_TRUE(s1.object_pos == scene.object_pos);
  EXPECT_TRUE(r1.q == robot.q);

  auto [s2, r2] = sim::step_robot(scene, robot, mount, Eigen::Vector3d(3, -2, 1), 0.0);
  EXPECT_TRUE(s2.object_pos == scene.object_pos);
  EXPECT_TRUE(r2.q == robot.q);
}

TEST(StepRobot, ClampsAtJointLimits) {
  const sim::Scene scene = sim::make_stack_blocks_scene();
  sim::RobotState robot = sim::make_default_robot(3);
  robot.q[0] = robot.upper[0];  // already at the limit
  const sim::MountTransform mount = sim::default_mount();
  auto [s, r] = sim::step_robot(scene, robot, mount, Eigen::Vector3d(5, 0, 0), 1.0);
  EXPECT_DOUBLE_EQ(r.q[0], robot.upper[0]);
  EXPECT_TRUE(s.object_pos == scene.object_pos);
}

TEST(StepRobot, ObjectFollowsMountTransform) {
  const sim::Scene scene = sim::make_stack_blocks_scene();
  const sim::RobotState robot = sim::make_default_robot(3);
  const sim::MountTransform mount = sim::default_mount();
  const Eigen::Vector3d qdot(4, -1, 2);
  const double dt = 0.5;
  auto [s, r] = sim::step_robot(scene, robot, mount, qdot, dt);
  const Eigen::Vector3d expected = scene.object_pos + mount.m * (qdot * dt);
  EXPECT_LT((s.object_pos - expected).norm(), 1e-12);
  EXPECT_LT((r.q - qdot * dt).norm(), 1e-12);
}

TEST(StepRobot, NonFiniteCommandRejected) {
  const sim::Scene scene = sim::make_stack_blocks_scene();
  const sim::RobotState robot = sim::make_default_robot(3);
  Eigen::Vector3d bad(1, std::numeric_limits<double>::infinity(), 0);
  EXPECT_THROW(sim::step_robot(scene, robot, sim::default_mount(), bad, 1.0),
               NumericError);
}

TEST(Demonstration, NoiseFreeExpertIsMonotoneAndReaches) {
  sim::Scene scene = sim::make_stack_blocks_scene();
  const sim::CameraModel camera = sim::make_stack_blocks_camera(128, 128);
  scene.object_pos = sim::sample_start_position(scene, camera, 5);
  sim::ExpertConfig expert;
  expert.confidence = 1.0;
  expert.step_size = 10.0;
  expert.stop_distance = 6.0;
  expert.max_frames = 40;
  const auto demo = sim::generate_demonstration(scene, camera, expert);
  EXPECT_TRUE(demo.reached);
  double prev = std::numeric_limits<double>::infinity();
  for (const auto& gt : demo.ground_truth) {
    const double dist = (gt.target_pos - gt.object_pos).norm();
    EXPECT_LE(dist, prev);
    prev = dist;
  }
  EXPECT_LE(prev, expert.stop_distance);
}

TEST(Demonstration, DeterministicForSeed) {
  sim::Scene scene = sim::make_stack_blocks_scene();
  const sim::CameraModel camera = sim::make_stack_blocks_camera(128, 128);
  scene.object_pos = sim::sample_start_position(scene, camera, 11);
  sim::ExpertConfig expert;
  expert.confidence = 0.6;
  expert.noise_seed = 99;
  expert.max_frames = 25;
  const auto a = sim::generate_demonstration(scene, camera, expert);
  const auto b = sim::generate_demonstration(scene, camera, expert);
  ASSERT_EQ(a.frames.size(), b.frames.size());
  for (std::size_t i = 0; i < a.frames.size(); ++i)
    EXPECT_EQ(a.frames[i].pixels, b.frames[i].pixels);

  expert.noise_seed = 100;
  const auto c = sim::generate_demonstration(scene, camera, expert);
  bool differs = c.frames.size() != a.frames.size();
  for (std::size_t i = 0; !differs && i < std::min(a.frames.size(), c.frames.size()); ++i)
    differs = c.frames[i].pixels != a.frames[i].pixels;
  EXPECT_TRUE(differs);
}

TEST(Demonstration, InvisibleStartRejected) {
  sim::Scene scene = sim::make_stack_blocks_scene();
  scene.object_pos = {200, 0, 400};  // far outside the frustum
  const sim::CameraModel camera = sim::make_stack_blocks_camera(128, 128);
  sim::ExpertConfig expert;
  EXPECT_THROW(sim::generate_demonstration(scene, camera, expert), ConfigError);
}

TEST(Perturbation, IlluminationShiftZeroIsIdentity) {
  const sim::Scene scene = sim::make_stack_blocks_scene();
  const sim::CameraModel camera = sim::make_stack_blocks_camera(128, 128);
  const sim::Scene shifted =
      sim::apply_perturbation(scene, sim::IlluminationShift{0}, camera);
  EXPECT_EQ(sim::render(scene, camera).pixels, sim::render(shifted, camera).pixels);
}

TEST(Perturbation, TranslateRotateTargetMatchesPaperSetting) {
  const sim::Scene scene = sim::make_stack_blocks_scene();
  const sim::CameraModel camera = sim::make_stack_blocks_camera(128, 128);
  const double rad20 = 20.0 * M_PI / 180.0;
  const sim::Scene moved = sim::apply_perturbation(
      scene, sim::TranslateRotateTarget{45.0, 0.0, rad20}, camera);
  EXPECT_DOUBLE_EQ(moved.target_pos.x(), scene.target_pos.x() + 45.0);
  EXPECT_DOUBLE_EQ(moved.target_pos.y(), scene.target_pos.y());
  EXPECT_DOUBLE_EQ(moved.target_yaw, scene.target_yaw + rad20);
  // original untouched
  EXPECT_DOUBLE_EQ(scene.target_yaw, 0.0);
}

TEST(Perturbation, OccluderCoversRequestedBoundingBoxFraction) {
  const sim::Scene scene = sim::make_stack_blocks_scene();
  const sim::CameraModel camera = sim::make_stack_blocks_camera(128, 128);
  const sim::Scene occluded =
      sim::apply_perturbation(scene, sim::OccludeObject{0.25}, camera);
  ASSERT_EQ(occluded.occluders.size(), 1u);
  const sim::Occluder& occ = occluded.occluders[0];
  // oracle: measure the covered fraction of the object's projected bbox
  const auto image = sim::render(occluded, camera);
  const auto plain = sim::render(scene, camera);
  int covered = 0, object_pixels = 0;
  for (int y = 0; y < image.height; ++y)
    for (int x = 0; x < image.width; ++x) {
      if (plain.at(x, y) == sim::kObjectGray) {
        ++object_pixels;
        if (image.at(x, y) != sim::kObjectGray) ++covered;
      }
    }
  ASSERT_GT(object_pixels, 0);
  const double fraction = double(covered) / object_pixels;
  EXPECT_GT(fraction, 0.10);
  EXPECT_LT(fraction, 0.45);
  EXPECT_GT(occ.x1, occ.x0);
}

TEST(Perturbation, BackgroundSwapApplies) {
  const sim::Scene scene = sim::make_stack_blocks_scene();
  const sim::CameraModel camera = sim::make_stack_blocks_camera(128, 128);
  const sim::Scene swapped = sim::apply_perturbation(
      scene, sim::BackgroundSwap{sim::Background::checker(16, 25, 45)}, camera);
  EXPECT_EQ(swapped.background.kind, sim::Background::Kind::kChecker);
  EXPECT_EQ(scene.background.kind, sim::Background::Kind::kUniform);  // copy only
  const auto image = sim::render(swapped, camera);
  EXPECT_EQ(image.at(0, 0), 25);
  EXPECT_EQ(image.at(16, 0), 45);
}

TEST(Perturbation, OccludeTargetCoversTargetRegion) {
  const sim::Scene scene = sim::make_stack_blocks_scene();
  const sim::CameraModel camera = sim::make_stack_blocks_camera(128, 128);
  const sim::Scene occluded =
      sim::apply_perturbation(scene, sim::OccludeTarget{0.3}, camera);
  ASSERT_EQ(occluded.occluders.size(), 1u);
  const auto plain = sim::render(scene, camera);
  const auto image = sim::render(occluded, camera);
  int covered = 0, target_pixels = 0;
  for (int y = 0; y < image.height; ++y)
    for (int x = 0; x < image.width; ++x)
      if (plain.at(x, y) == sim::kTargetGray) {
        ++target_pixels;
        if (image.at(x, y) != sim::kTargetGray) ++covered;
      }
  ASSERT_GT(target_pixels, 0);
  EXPECT_GT(covered, 0);
}

TEST(Perturbation, FractionOutOfRangeRejected) {
  const sim::Scene scene = sim::make_stack_blocks_scene();
  const sim::CameraModel camera = sim::make_stack_blocks_camera(128, 128);
  EXPECT_THROW(sim::apply_perturbation(scene, sim::OccludeObject{1.5}, camera),
               ConfigError);
  EXPECT_THROW(sim::apply_perturbation(scene, sim::OccludeTarget{-0.1}, camera),
               ConfigError);
}

TEST(PixelError, ZeroWhenCoincident) {
  sim::Scene scene = sim::make_stack_blocks_scene();
  scene.object_pos = scene.target_pos;
  const sim::CameraModel camera = sim::make_stack_blocks_camera(128, 128);
  EXPECT_DOUBLE_EQ(sim::pixel_error(scene, camera), 0.0);
}

TEST(PixelError, InvariantUnderIllumination) {
  const sim::Scene scene = sim::make_stack_blocks_scene();
  const sim::CameraModel camera = sim::make_stack_blocks_camera(128, 128);
  const sim::Scene shifted =
      sim::apply_perturbation(scene, sim::IlluminationShift{80}, camera);
  EXPECT_DOUBLE_EQ(sim::pixel_error(scene, camera), sim::pixel_error(shifted, camera));
}

TEST(PixelError, ThresholdScaling) {
  const double scaled = sim::scaled_threshold_px(20.0, 580, 128);
  EXPECT_NEAR(scaled, 20.0 * 128.0 / 580.0, 1e-12);
  EXPECT_NEAR(scaled, 4.41, 0.01);
}

TEST(PixelError, OutOfViewRaises) {
  sim::Scene scene = sim::make_stack_blocks_scene();
  scene.object_pos = {200, 20, 399};  // projects far above the frame
  const sim::CameraModel camera = sim::make_stack_blocks_camera(128, 128);
  EXPECT_THROW(sim::pixel_error(scene, camera), OutOfViewError);
}

TEST(SimEnvironment, StepReportsAppliedDisplacement) {
  sim::SimEnvironment env(sim::make_stack_blocks_scene(),
                          sim::make_stack_blocks_camera(128, 128), sim::default_mount(),
                          sim::make_default_robot(3));
  const Eigen::VectorXd applied = env.step(Eigen::Vector3d(2, 3, -1), 1.0);
  EXPECT_LT((applied - Eigen::Vector3d(2, 3, -1)).norm(), 1e-12);

  sim::RobotState clamped = sim::make_default_robot(3);
  clamped.q[1] = clamped.upper[1] - 1.0;
  sim::SimEnvironment env2(sim::make_stack_blocks_scene(),
                           sim::make_stack_blocks_camera(128, 128), sim::default_mount(),
                           clamped);
  const Eigen::VectorXd partial = env2.step(Eigen::Vector3d(0, 5, 0), 1.0);
  EXPECT_DOUBLE_EQ(partial[1], 1.0);  // clamped to the limit
}

TEST(StartSampler, DeterministicValidStarts) {
  const sim::Scene scene = sim::make_stack_blocks_scene();
  const sim::CameraModel camera = sim::make_stack_blocks_camera(128, 128);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Eigen::Vector3d a = sim::sample_start_position(scene, camera, seed);
    const Eigen::Vector3d b = sim::sample_start_position(scene, camera, seed);
    EXPECT_TRUE(a == b);
    EXPECT_GE((a - scene.target_pos).norm(), 60.0);
    EXPECT_TRUE((a.array() >= 0).all());
    EXPECT_TRUE((a.array() <= scene.workspace).all());
    const auto px = sim::project_point(camera, a);
    ASSERT_TRUE(px.has_value());
    EXPECT_GE(px->x(), 0);
    EXPECT_LT(px->x(), camera.image_w);
  }
}

TEST(DemoPersistence, RoundTrip) {
  sim::Scene scene = sim::make_stack_blocks_scene();
  const sim::CameraModel camera = sim::make_stack_blocks_camera(64, 64);
  scene.object_pos = sim::sample_start_position(scene, camera, 3);
  sim::ExpertConfig expert;
  expert.confidence = 0.8;
  expert.noise_seed = 42;
  expert.max_frames = 8;
  const auto demo = sim::generate_demonstration(scene, camera, expert);

  const auto dir = std::filesystem::temp_directory_path() / "servoscope_demo_test";
  std::filesystem::remove_all(dir);
  sim::save_demonstration(demo, dir);
  const auto loaded = sim::load_demonstration(dir);
  ASSERT_EQ(loaded.frames.size(), demo.frames.size());
  for (std::size_t i = 0; i < demo.frames.size(); ++i)
    EXPECT_EQ(loaded.frames[i].pixels, demo.frames[i].pixels);
  ASSERT_EQ(loaded.ground_truth.size(), demo.ground_truth.size());
  for (std::size_t i = 0; i < demo.ground_truth.size(); ++i) {
    EXPECT_LT((loaded.ground_truth[i].object_pos - demo.ground_truth[i].object_pos).norm(),
              1e-12);
    EXPECT_LT((loaded.ground_truth[i].target_pos - demo.ground_truth[i].target_pos).norm(),
              1e-12);
  }
  EXPECT_DOUBLE_EQ(loaded.expert.confidence, 0.8);
  std::filesystem::remove_all(dir);
}
