#include "servoscope/sim.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>

#include <json.hpp>

#include "servoscope/errors.hpp"

namespace servoscope::sim {

namespace {

constexpr int kSupersample = 4;     // 4x4 subsamples per pixel for block edges
constexpr double kNearPlane = 1e-6;
constexpr std::uint8_t kOccluderGray = 75;

struct CameraBasis {
  Eigen::Vector3d right, down, fwd;
};

CameraBasis camera_basis(const CameraModel& camera) {
  const Eigen::Vector3d fwd = (camera.look_at - camera.eye).normalized();
  Eigen::Vector3d right = fwd.cross(camera.up);
  right.normalize();
  const Eigen::Vector3d down = fwd.cross(right).normalized();
  return {right, down, fwd};
}

std::optional<Eigen::Vector2d> project_with_basis(const CameraModel& camera,
                                                  const CameraBasis& basis,
                                                  const Eigen::Vector3d& p) {
  const Eigen::Vector3d d = p - camera.eye;
  const double z = d.dot(basis.fwd);
  if (z <= kNearPlane) return std::nullopt;
  const double u = camera.image_w / 2.0 + camera.focal_px * d.dot(basis.right) / z;
  const double v = camera.image_h / 2.0 + camera.focal_px * d.dot(basis.down) / z;
  return Eigen::Vector2d(u, v);
}

std::array<Eigen::Vector3d, 4> square_corners(const Eigen::Vector3d& center, double yaw,
                                              double size) {
  const double h = size / 2.0;
  const double c = std::cos(yaw), s = std::sin(yaw);
  std::array<Eigen::Vector3d, 4> corners;
  const double lx[4] = {-h, h, h, -h};
  const double ly[4] = {-h, -h, h, h};
  for (int k = 0; k < 4; ++k)
    corners[k] = center + Eigen::Vector3d(lx[k] * c - ly[k] * s, lx[k] * s + ly[k] * c, 0);
  return corners;
}

struct ProjectedQuad {
  std::array<Eigen::Vector2d, 4> pts;
  double min_x, min_y, max_x, max_y;
};

std::optional<ProjectedQuad> project_square(const CameraModel& camera,
                                            const CameraBasis& basis,
                                            const Eigen::Vector3d& center, double yaw,
                                            double size) {
  ProjectedQuad quad;
  const auto corners = square_corners(center, yaw, size);
  for (int k = 0; k < 4; ++k) {
    const auto p = project_with_basis(camera, basis, corners[k]);
    if (!p) return std::nullopt;
    quad.pts[k] = *p;
  }
  quad.min_x = quad.max_x = quad.pts[0].x();
  quad.min_y = quad.max_y = quad.pts[0].y();
  for (int k = 1; k < 4; ++k) {
    quad.min_x = std::min(quad.min_x, quad.pts[k].x());
    quad.max_x = std::max(quad.max_x, quad.pts[k].x());
    quad.min_y = std::min(quad.min_y, quad.pts[k].y());
    quad.max_y = std::max(quad.max_y, quad.pts[k].y());
  }
  return quad;
}

bool inside_quad(const ProjectedQuad& quad, double x, double y) {
  bool pos = false, neg = false;
  for (int k = 0; k < 4; ++k) {
    const Eigen::Vector2d& a = quad.pts[k];
    const Eigen::Vector2d& b = quad.pts[(k + 1) % 4];
    const double cross = (b.x() - a.x()) * (y - a.y()) - (b.y() - a.y()) * (x - a.x());
    if (cross > 0) pos = true;
    if (cross < 0) neg = true;
    if (pos && neg) return false;
  }
  return true;
}

// Blends a projected square into the frame buffer with subsampled coverage.
void raster_quad(std::vector<double>& buf, const CameraModel& camera,
                 const CameraBasis& basis, const Eigen::Vector3d& center, double yaw,
                 double size, std::uint8_t gray) {
  const auto quad = project_square(camera, basis, center, yaw, size);
  if (!quad) return;  // behind the camera: absent
  const int x0 = std::max(0, static_cast<int>(std::floor(quad->min_x)));
  const int y0 = std::max(0, static_cast<int>(std::floor(quad->min_y)));
  const int x1 = std::min(camera.image_w - 1, static_cast<int>(std::ceil(quad->max_x)));
  const int y1 = std::min(camera.image_h - 1, static_cast<int>(std::ceil(quad->max_y)));
  constexpr double kInv = 1.0 / kSupersample;
  for (int py = y0; py <= y1; ++py) {
    for (int px = x0; px <= x1; ++px) {
      int hits = 0;
      for (int sy = 0; sy < kSupersample; ++sy)
        for (int sx = 0; sx < kSupersample; ++sx)
          if (inside_quad(*quad, px + (sx + 0.5) * kInv, py + (sy + 0.5) * kInv)) ++hits;
      if (hits == 0) continue;
      const double cov = hits / double(kSupersample * kSupersample);
      double& v = buf[static_cast<std::size_t>(py) * camera.image_w + px];
      v = v * (1.0 - cov) + gray * cov;
    }
  }
}

double overlap_1d(double a0, double a1, double b0, double b1) {
  return std::max(0.0, std::min(a1, b1) - std::max(a0, b0));
}

ProjectedQuad require_projected_bbox(const Scene& scene, const CameraModel& camera,
                                     bool object) {
  const auto basis = camera_basis(camera);
  const auto quad = object ? project_square(camera, basis, scene.object_pos,
                                            scene.object_yaw, scene.object_size)
                           : project_square(camera, basis, scene.target_pos,
                                            scene.target_yaw, scene.target_size);
  if (!quad) throw ConfigError("block is not projectable for occluder placement");
  return *quad;
}

}  // namespace

MountTransform default_mount() {
  // 20 deg about z, 10 deg about x, uniform scale 0.9: the misalignment the
  // controller has to discover online.
  const Eigen::Matrix3d rz = Eigen::AngleAxisd(20.0 * M_PI / 180.0, Eigen::Vector3d::UnitZ())
                                 .toRotationMatrix();
  const Eigen::Matrix3d rx = Eigen::AngleAxisd(10.0 * M_PI / 180.0, Eigen::Vector3d::UnitX())
                                 .toRotationMatrix();
  MountTransform mount;
  mount.m = 0.9 * rz * rx;
  return mount;
}

RobotState make_default_robot(int joints) {
  RobotState robot;
  robot.q = Eigen::VectorXd::Zero(joints);
  robot.lower = Eigen::VectorXd::Constant(joints, -300.0);
  robot.upper = Eigen::VectorXd::Constant(joints, 300.0);
  return robot;
}

std::string perturbation_label(const Perturbation& p) {
  char buf[96];
  if (const auto* t = std::get_if<TranslateRotateTarget>(&p))
    std::snprintf(buf, sizeof buf, "translate_rotate_target(%g,%g,%g)", t->dx, t->dy,
                  t->dtheta);
  else if (const auto* b = std::get_if<BackgroundSwap>(&p)) {
    if (b->background.kind == Background::Kind::kUniform)
      std::snprintf(buf, sizeof buf, "background_swap(uniform:%d)", b->background.level);
    else
      std::snprintf(buf, sizeof buf, "background_swap(checker:%d:%d:%d)",
                    b->background.cell, b->background.level_a, b->background.level_b);
  } else if (const auto* o = std::get_if<OccludeObject>(&p))
    std::snprintf(buf, sizeof buf, "occlude_object(%g)", o->fraction);
  else if (const auto* o2 = std::get_if<OccludeTarget>(&p))
    std::snprintf(buf, sizeof buf, "occlude_target(%g)", o2->fraction);
  else if (const auto* i = std::get_if<IlluminationShift>(&p))
    std::snprintf(buf, sizeof buf, "illumination_shift(%+d)", i->delta);
  else
    return "unknown";
  return buf;
}

void validate_scene(const Scene& scene) {
  const double w = scene.workspace;
  if (w <= 0) throw ConfigError("workspace must be positive");
  auto in_box = [w](const Eigen::Vector3d& p) {
    return (p.array() >= 0.0).all() && (p.array() <= w).all();
  };
  if (!in_box(scene.object_pos) || !in_box(scene.target_pos))
    throw ConfigError("block positions must lie in the workspace box");
  if (scene.object_size <= 0 || scene.target_size <= 0)
    throw ConfigError("block sizes must be positive");
  if (scene.illumination_offset < -255 || scene.illumination_offset > 255)
    throw ConfigError("illumination offset out of [-255, 255]");
  if (scene.background.kind == Background::Kind::kChecker && scene.background.cell <= 0)
    throw ConfigError("checker cell must be positive");
}

void validate_camera(const CameraModel& camera) {
  if ((camera.eye - camera.look_at).norm() == 0.0)
    throw ConfigError("camera eye coincides with look_at");
  if (camera.image_w < 32 || camera.image_h < 32)
    throw ConfigError("camera image dims must be >= 32");
  if (camera.focal_px <= 0) throw ConfigError("focal length must be positive");
  const Eigen::Vector3d fwd = (camera.look_at - camera.eye).normalized();
  if (fwd.cross(camera.up).norm() < 1e-9)
    throw ConfigError("camera up is parallel to the view direction");
}

std::optional<Eigen::Vector2d> project_point(const CameraModel& camera,
                                             const Eigen::Vector3d& p) {
  return project_with_basis(camera, camera_basis(camera), p);
}

vision::ImageState render(const Scene& scene, const CameraModel& camera) {
  // Positions are deliberately not bounds-checked here: a block outside the
  // workspace simply projects out of frame and renders as absent.
  if (scene.object_size <= 0 || scene.target_size <= 0)
    throw ConfigError("block sizes must be positive");
  if (scene.illumination_offset < -255 || scene.illumination_offset > 255)
    throw ConfigError("illumination offset out of [-255, 255]");
  if (scene.background.kind == Background::Kind::kChecker && scene.background.cell <= 0)
    throw ConfigError("checker cell must be positive");
  validate_camera(camera);
  const int w = camera.image_w, h = camera.image_h;
  std::vector<double> buf(static_cast<std::size_t>(w) * h);

  if (scene.background.kind == Background::Kind::kUniform) {
    std::fill(buf.begin(), buf.end(), double(scene.background.level));
  } else {
    const int cell = scene.background.cell;
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        buf[static_cast<std::size_t>(y) * w + x] =
            ((x / cell + y / cell) % 2 == 0) ? scene.background.level_a
                                             : scene.background.level_b;
  }

  const CameraBasis basis = camera_basis(camera);
  raster_quad(buf, camera, basis, scene.target_pos, scene.target_yaw, scene.target_size,
              kTargetGray);
  raster_quad(buf, camera, basis, scene.object_pos, scene.object_yaw, scene.object_size,
              kObjectGray);

  for (const Occluder& occ : scene.occluders) {
    const int x0 = std::max(0, static_cast<int>(std::floor(occ.x0)));
    const int y0 = std::max(0, static_cast<int>(std::floor(occ.y0)));
    const int x1 = std::min(w - 1, static_cast<int>(std::ceil(occ.x1)));
    const int y1 = std::min(h - 1, static_cast<int>(std::ceil(occ.y1)));
    for (int py = y0; py <= y1; ++py)
      for (int px = x0; px <= x1; ++px) {
        const double cov = overlap_1d(px, px + 1.0, occ.x0, occ.x1) *
                           overlap_1d(py, py + 1.0, occ.y0, occ.y1);
        if (cov <= 0) continue;
        double& v = buf[static_cast<std::size_t>(py) * w + px];
        v = v * (1.0 - cov) + occ.gray * cov;
      }
  }

  vision::ImageState image;
  image.width = w;
  image.height = h;
  image.pixels.resize(buf.size());
  for (std::size_t i = 0; i < buf.size(); ++i) {
    const long value = std::lround(buf[i]) + scene.illumination_offset;
    image.pixels[i] = static_cast<std::uint8_t>(std::clamp(value, 0L, 255L));
  }
  return image;
}

std::pair<Scene, RobotState> step_robot(const Scene& scene, const RobotState& robot,
                                        const MountTransform& mount,
                                        const Eigen::VectorXd& qdot, double dt) {
  if (qdot.size() != robot.q.size())
    throw ShapeError("step_robot: qdot length != joint count");
  if (!qdot.allFinite() || !std::isfinite(dt))
    throw NumericError("step_robot: non-finite command");
  RobotState next = robot;
  next.q = (robot.q + qdot * dt).cwiseMax(robot.lower).cwiseMin(robot.upper);
  Scene next_scene = scene;
  next_scene.object_pos += mount.m * (next.q - robot.q);
  return {std::move(next_scene), std::move(next)};
}

Demonstration generate_demonstration(Scene scene, const CameraModel& camera,
                                     const ExpertConfig& expert) {
  if (expert.step_size <= 0) throw ConfigError("expert step_size must be positive");
  if (expert.stop_distance < 0) throw ConfigError("expert stop_distance must be >= 0");
  if (expert.confidence <= 0 || expert.confidence > 1)
    throw ConfigError("expert confidence must be in (0, 1]");
  if (expert.max_frames < 2) throw ConfigError("expert max_frames must be >= 2");
  validate_scene(scene);
  validate_camera(camera);
  const auto obj_px = project_point(camera, scene.object_pos);
  const auto tgt_px = project_point(camera, scene.target_pos);
  auto in_frame = [&camera](const std::optional<Eigen::Vector2d>& p) {
    return p && p->x() >= 0 && p->x() < camera.image_w && p->y() >= 0 &&
           p->y() < camera.image_h;
  };
  if (!in_frame(obj_px) || !in_frame(tgt_px))
    throw ConfigError("object and target must both be visible initially");

  std::mt19937_64 rng(expert.noise_seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const double sigma = (1.0 - expert.confidence) * expert.step_size;

  Demonstration demo;
  demo.expert = expert;
  demo.frames.push_back(render(scene, camera));
  demo.ground_truth.push_back({scene.object_pos, scene.target_pos});

  while (static_cast<int>(demo.frames.size()) < expert.max_frames) {
    const Eigen::Vector3d delta = scene.target_pos - scene.object_pos;
    const double dist = delta.norm();
    if (dist <= expert.stop_distance) break;
    Eigen::Vector3d move = std::min(expert.step_size, dist) * (delta / dist);
    if (sigma > 0)
      move += sigma * Eigen::Vector3d(gauss(rng), gauss(rng), gauss(rng));
    scene.object_pos = (scene.object_pos + move)
                           .cwiseMax(Eigen::Vector3d::Zero())
                           .cwiseMin(Eigen::Vector3d::Constant(scene.workspace));
    demo.frames.push_back(render(scene, camera));
    demo.ground_truth.push_back({scene.object_pos, scene.target_pos});
  }
  if (demo.frames.size() < 2)
    throw ConfigError("demonstration start is already within stop_distance");
  demo.reached =
      (scene.target_pos - scene.object_pos).norm() <= expert.stop_distance;
  return demo;
}

Scene apply_perturbation(const Scene& scene, const Perturbation& p,
                         const CameraModel& camera) {
  Scene out = scene;
  if (const auto* t = std::get_if<TranslateRotateTarget>(&p)) {
    out.target_pos.x() += t->dx;
    out.target_pos.y() += t->dy;
    out.target_yaw += t->dtheta;
  } else if (const auto* b = std::get_if<BackgroundSwap>(&p)) {
    out.background = b->background;
  } else if (const auto* oo = std::get_if<OccludeObject>(&p)) {
    if (oo->fraction < 0 || oo->fraction > 1)
      throw ConfigError("occlusion fraction must be in [0, 1]");
    const ProjectedQuad quad = require_projected_bbox(scene, camera, /*object=*/true);
    out.occluders.push_back({quad.min_x, quad.min_y,
                             quad.min_x + oo->fraction * (quad.max_x - quad.min_x),
                             quad.max_y, kOccluderGray});
  } else if (const auto* ot = std::get_if<OccludeTarget>(&p)) {
    if (ot->fraction < 0 || ot->fraction > 1)
      throw ConfigError("occlusion fraction must be in [0, 1]");
    const ProjectedQuad quad = require_projected_bbox(scene, camera, /*object=*/false);
    out.occluders.push_back({quad.min_x, quad.min_y,
                             quad.min_x + ot->fraction * (quad.max_x - quad.min_x),
                             quad.max_y, kOccluderGray});
  } else if (const auto* il = std::get_if<IlluminationShift>(&p)) {
    if (il->delta < -255 || il->delta > 255)
      throw ConfigError("illumination delta out of [-255, 255]");
    out.illumination_offset =
        std::clamp(scene.illumination_offset + il->delta, -255, 255);
  }
  return out;
}

double pixel_error(const Scene& scene, const CameraModel& camera) {
  const auto obj = project_point(camera, scene.object_pos);
  const auto tgt = project_point(camera, scene.target_pos);
  auto in_frame = [&camera](const std::optional<Eigen::Vector2d>& p) {
    return p && p->x() >= 0 && p->x() < camera.image_w && p->y() >= 0 &&
           p->y() < camera.image_h;
  };
  if (!in_frame(obj)) throw OutOfViewError("object center out of view");
  if (!in_frame(tgt)) throw OutOfViewError("target center out of view");
  return (*obj - *tgt).norm();
}

double scaled_threshold_px(double threshold, int ref_dim, int image_dim) {
  return threshold * static_cast<double>(image_dim) / static_cast<double>(ref_dim);
}

SimEnvironment::SimEnvironment(Scene scene, CameraModel camera, MountTransform mount,
                               RobotState robot)
    : scene_(std::move(scene)),
      camera_(std::move(camera)),
      mount_(mount),
      robot_(std::move(robot)) {
  validate_scene(scene_);
  validate_camera(camera_);
}

Eigen::VectorXd SimEnvironment::step(const Eigen::VectorXd& qdot, double dt) {
  const Eigen::VectorXd q_before = robot_.q;
  auto [next_scene, next_robot] = step_robot(scene_, robot_, mount_, qdot, dt);
  scene_ = std::move(next_scene);
  robot_ = std::move(next_robot);
  return robot_.q - q_before;
}

vision::ImageState SimEnvironment::render() const {
  return sim::render(scene_, camera_);
}

EvalProbe SimEnvironment::make_eval_probe() const {
  return [this]() -> std::optional<double> {
    try {
      return pixel_error(scene_, camera_);
    } catch (const OutOfViewError&) {
      return std::nullopt;
    }
  };
}

Scene make_stack_blocks_scene() {
  // paper-like framing: the blocks span a large fraction of the image and
  // the workspace is a few object widths, so state changes overlap heavily
  // across demonstrations
  Scene scene;
  scene.workspace = 400;
  scene.background = Background::uniform(30);
  scene.target_pos = {200, 210, 60};
  scene.target_yaw = 0.0;
  scene.target_size = 150;
  scene.object_pos = {90, 100, 60};
  scene.object_yaw = 0.35;
  scene.object_size = 135;
  return scene;
}

CameraModel make_stack_blocks_camera(int image_w, int image_h) {
  CameraModel camera;
  camera.eye = {200, -240, 430};
  camera.look_at = {200, 200, 50};
  camera.up = {0, 0, 1};
  camera.focal_px = 130.0 * image_w / 128.0;
  camera.image_w = image_w;
  camera.image_h = image_h;
  return camera;
}

Eigen::Vector3d sample_start_position(const Scene& scene, const CameraModel& camera,
                                      std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> angle(0.0, 2.0 * M_PI);
  std::uniform_real_distribution<double> radius(110.0, 170.0);
  std::uniform_real_distribution<double> height(-20.0, 20.0);
  const double margin = 20.0;
  for (int attempt = 0; attempt < 1000; ++attempt) {
    const double th = angle(rng);
    const double r = radius(rng);
    const double dz = height(rng);
    Eigen::Vector3d cand = scene.target_pos +
                           Eigen::Vector3d(r * std::cos(th), r * std::sin(th), dz);
    cand = cand.cwiseMax(Eigen::Vector3d::Constant(margin))
               .cwiseMin(Eigen::Vector3d::Constant(scene.workspace - margin));
    if ((cand - scene.target_pos).norm() < 60.0) continue;
    const auto px = project_point(camera, cand);
    const double edge = 10.0;
    if (!px || px->x() < edge || px->x() >= camera.image_w - edge || px->y() < edge ||
        px->y() >= camera.image_h - edge)
      continue;
    return cand;
  }
  throw ConfigError("could not sample a valid start position");
}

void save_demonstration(const Demonstration& demo, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  for (std::size_t i = 0; i < demo.frames.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "frame_%04zu.pgm", i);
    vision::write_pgm(demo.frames[i], dir / name);
  }
  nlohmann::ordered_json manifest;
  manifest["frames"] = demo.frames.size();
  manifest["alpha"] = demo.expert.confidence;
  manifest["seed"] = demo.expert.noise_seed;
  nlohmann::ordered_json gt = nlohmann::ordered_json::array();
  for (const GroundTruthEntry& entry : demo.ground_truth) {
    gt.push_back({{entry.object_pos.x(), entry.object_pos.y(), entry.object_pos.z()},
                  {entry.target_pos.x(), entry.target_pos.y(), entry.target_pos.z()}});
  }
  manifest["ground_truth"] = std::move(gt);
  const vision::ImageState& first = demo.frames.front();
  manifest["image_w"] = first.width;
  manifest["image_h"] = first.height;
  std::ofstream out(dir / "manifest.json");
  if (!out) throw IoError("cannot write manifest: " + (dir / "manifest.json").string());
  out << manifest.dump(2) << "\n";
}

Demonstration load_demonstration(const std::filesystem::path& dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw IoError("cannot open manifest: " + (dir / "manifest.json").string());
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError("malformed manifest in " + dir.string() + ": " + e.what());
  }
  Demonstration demo;
  const auto count = manifest.at("frames").get<std::size_t>();
  demo.expert.confidence = manifest.at("alpha").get<double>();
  demo.expert.noise_seed = manifest.at("seed").get<std::uint64_t>();
  for (const auto& entry : manifest.at("ground_truth")) {
    GroundTruthEntry gt;
    gt.object_pos = {entry.at(0).at(0).get<double>(), entry.at(0).at(1).get<double>(),
                     entry.at(0).at(2).get<double>()};
    gt.target_pos = {entry.at(1).at(0).get<double>(), entry.at(1).at(1).get<double>(),
                     entry.at(1).at(2).get<double>()};
    demo.ground_truth.push_back(gt);
  }
  demo.frames.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "frame_%04zu.pgm", i);
    demo.frames.push_back(vision::read_pgm(dir / name));
  }
  if (demo.ground_truth.size() != demo.frames.size())
    throw FormatError("manifest ground_truth length != frame count in " + dir.string());
  return demo;
}

}  // namespace servoscope::sim
