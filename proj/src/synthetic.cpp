#include "signsplat/synthetic.hpp"

#include <algorithm>
#include <cstdio>
#include <functional>
#include <numbers>
#include <random>

#include "json.hpp"
#include "signsplat/rotation.hpp"

namespace signsplat {

namespace fs = std::filesystem;

void SyntheticConfig::validate() const {
  if (poses < 1) throw InputError("synthetic.poses must be at least 1");
  if (cameras < 1) throw InputError("synthetic.cameras must be at least 1");
  if (size < 16) throw InputError("synthetic.size must be at least 16");
  if (heldout_frames < 0) throw InputError("synthetic.heldout_frames must be non-negative");
}

namespace {

constexpr double kPi = std::numbers::pi;

enum Joint {
  kRoot,
  kSpine,
  kHead,
  kLShoulder,
  kLElbow,
  kLWrist,
  kLKnuckle,
  kLFinger,
  kRShoulder,
  kRElbow,
  kRWrist,
  kRKnuckle,
  kRFinger,
  kJointCount
};

using SkinFn = std::function<std::vector<SkinInfluence>(double u, const Vec3& p)>;

struct MeshBuilder {
  SkinnedTemplate& t;

  // Closed capsule around segment a-b; u in [0, 1] is the axial parameter.
  void capsule(const Vec3& a, const Vec3& b, double r, int seg, int cyl_rings, int cap_rings, Segment s,
               const SkinFn& skin) {
    const double len = (b - a).norm();
    const Vec3 d = (b - a) / len;
    const Vec3 helper = std::abs(d.x()) < 0.9 ? Vec3::UnitX() : Vec3::UnitZ();
    const Vec3 e1 = helper.cross(d).normalized();
    const Vec3 e2 = d.cross(e1);
    std::vector<std::pair<double, double>> rings;  // (axial offset, radius)
    for (int k = 1; k < cap_rings; ++k) {
      const double phi = -0.5 * kPi + k * 0.5 * kPi / cap_rings;
      rings.emplace_back(r * std::sin(phi), r * std::cos(phi));
    }
    for (int k = 0; k <= cyl_rings; ++k) rings.emplace_back(len * k / cyl_rings, r);
    for (int k = 1; k < cap_rings; ++k) {
      const double phi = k * 0.5 * kPi / cap_rings;
      rings.emplace_back(len + r * std::sin(phi), r * std::cos(phi));
    }
    auto add = [&](const Vec3& p, double h) {
      t.rest_vertices.push_back(p);
      t.segment.push_back(s);
      t.skin_weights.push_back(skin(std::clamp(h / len, 0.0, 1.0), p));
      return static_cast<int>(t.rest_vertices.size() - 1);
    };
    const int bottom = add(a - r * d, -r);
    std::vector<std::vector<int>> idx;
    for (const auto& [h, rho] : rings) {
      std::vector<int> ring;
      for (int i = 0; i < seg; ++i) {
        const double al = 2.0 * kPi * i / seg;
        ring.push_back(add(a + h * d + rho * (std::cos(al) * e1 + std::sin(al) * e2), h));
      }
      idx.push_back(ring);
    }
    const int top = add(b + r * d, len + r);
    for (int i = 0; i < seg; ++i) {
      const int j = (i + 1) % seg;
      t.faces.push_back({bottom, idx.front()[j], idx.front()[i]});
      for (std::size_t k = 0; k + 1 < idx.size(); ++k) {
        t.faces.push_back({idx[k][i], idx[k][j], idx[k + 1][j]});
        t.faces.push_back({idx[k][i], idx[k + 1][j], idx[k + 1][i]});
      }
      t.faces.push_back({idx.back()[i], idx.back()[j], top});
    }
  }
};

std::vector<SkinInfluence> blend(int a, int b, double wb) {
  if (wb <= 0.0) return {{a, 1.0}};
  if (wb >= 1.0) return {{b, 1.0}};
  return {{a, 1.0 - wb}, {b, wb}};
}

double smooth01(double x) {
  x = std::clamp(x, 0.0, 1.0);
  return x * x * (3.0 - 2.0 * x);
}

// Bone capsule skinned to `joint`, blending toward `parent` near its start.
SkinFn bone_skin(int joint, int parent) {
  return [=](double u, const Vec3&) { return blend(joint, parent, 0.5 * (1.0 - smooth01(u / 0.3))); };
}

std::uint64_t next(std::uint64_t& s) {
  std::uint64_t z = (s += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

double uniform(std::uint64_t& s, double lo, double hi) {
  return lo + (hi - lo) * static_cast<double>(next(s) >> 11) * 0x1.0p-53;
}

}  // namespace

SkinnedTemplate toy_rig() {
  SkinnedTemplate t;
  t.joint_names = {"root",       "spine",      "head",      "l_shoulder", "l_elbow", "l_wrist",  "l_knuckle",
                   "l_finger",   "r_shoulder", "r_elbow",   "r_wrist",    "r_knuckle", "r_finger"};
  t.parents = {-1, kRoot, kSpine, kSpine, kLShoulder, kLElbow, kLWrist, kLKnuckle,
               kSpine, kRShoulder, kRElbow, kRWrist, kRKnuckle};
  t.joints.resize(kJointCount);
  t.joints[kRoot] = Vec3(0.0, -0.30, 0.0);
  t.joints[kSpine] = Vec3(0.0, 0.0, 0.0);
  t.joints[kHead] = Vec3(0.0, 0.36, 0.0);
  for (int side = 0; side < 2; ++side) {
    const double sx = side == 0 ? 1.0 : -1.0;
    const int o = side == 0 ? kLShoulder : kRShoulder;
    t.joints[o + 0] = Vec3(sx * 0.21, 0.24, 0.0);
    t.joints[o + 1] = Vec3(sx * 0.25, -0.02, 0.0);
    t.joints[o + 2] = Vec3(sx * 0.27, -0.25, 0.0);
    t.joints[o + 3] = Vec3(sx * 0.275, -0.33, 0.0);
    t.joints[o + 4] = Vec3(sx * 0.278, -0.37, 0.0);
  }

  MeshBuilder mb{t};
  mb.capsule(Vec3(0.0, -0.45, 0.0), Vec3(0.0, 0.20, 0.0), 0.15, 28, 20, 6, Segment::Body,
             [](double, const Vec3& p) { return blend(kRoot, kSpine, smooth01((p.y() + 0.2) / 0.3)); });
  mb.capsule(Vec3(0.0, 0.49, 0.0), Vec3(0.0, 0.51, 0.0), 0.11, 24, 1, 10, Segment::Head,
             [](double, const Vec3&) { return std::vector<SkinInfluence>{{kHead, 1.0}}; });
  for (int side = 0; side < 2; ++side) {
    const int o = side == 0 ? kLShoulder : kRShoulder;
    const Segment hand = side == 0 ? Segment::LeftHand : Segment::RightHand;
    const auto& j = t.joints;
    mb.capsule(j[o], j[o + 1], 0.05, 14, 8, 4, Segment::Body, bone_skin(o, kSpine));
    mb.capsule(j[o + 1], j[o + 2], 0.042, 14, 8, 4, Segment::Body, bone_skin(o + 1, o));
    mb.capsule(j[o + 2], j[o + 3], 0.03, 10, 4, 3, hand, bone_skin(o + 2, o + 1));
    const Vec3 tip = j[o + 4] + 0.05 * (j[o + 4] - j[o + 3]).normalized();
    const int kn = o + 3, fi = o + 4;
    mb.capsule(j[o + 3], tip, 0.016, 8, 6, 3, hand,
               [=](double u, const Vec3&) { return blend(kn, fi, smooth01((u - 0.3) / 0.3)); });
  }

  const std::size_t nv = t.rest_vertices.size();
  t.original_vertex_count = nv;
  t.shape_basis.assign(1, std::vector<Vec3>(nv));
  t.expression_basis.assign(1, std::vector<Vec3>(nv, Vec3::Zero()));
  const Vec3 head_c(0.0, 0.5, 0.0);
  for (std::size_t v = 0; v < nv; ++v) {
    const Vec3& p = t.rest_vertices[v];
    t.shape_basis[0][v] = 0.05 * p;
    if (t.segment[v] == Segment::Head && p.z() > 0.03 && p.y() < head_c.y()) {
      const double w = smooth01((head_c.y() - p.y()) / 0.08) * smooth01((p.z() - 0.03) / 0.05);
      t.expression_basis[0][v] = Vec3(0.0, -0.015 * w, 0.008 * w);
    }
  }

  const auto R = [](double lo, double hi) { return AxisLimit::range(lo, hi); };
  t.joint_limits.assign(kJointCount, JointLimit{R(-0.5, 0.5), R(-0.8, 0.8), R(-0.5, 0.5)});
  t.joint_limits[kSpine] = {R(-0.4, 0.4), R(-0.5, 0.5), R(-0.3, 0.3)};
  t.joint_limits[kHead] = {R(-0.6, 0.6), R(-1.0, 1.0), R(-0.5, 0.5)};
  for (int side = 0; side < 2; ++side) {
    const int o = side == 0 ? kLShoulder : kRShoulder;
    const double s = side == 0 ? 1.0 : -1.0;
    t.joint_limits[o] = {R(-2.2, 0.6), R(-1.0, 1.0), s > 0 ? R(-0.2, 1.6) : R(-1.6, 0.2)};
    t.joint_limits[o + 1] = {R(-2.4, 0.05), R(-1.5, 1.5), AxisLimit::lock()};
    t.joint_limits[o + 2] = {R(-0.8, 0.8), R(-0.4, 0.4), R(-0.6, 0.6)};
    t.joint_limits[o + 3] = {R(-1.5, 0.3), AxisLimit::lock(), R(-0.3, 0.3)};
    t.joint_limits[o + 4] = {R(-1.6, 0.1), AxisLimit::lock(), AxisLimit::lock()};
  }
  t.validate();
  return t;
}

std::vector<PoseParams> toy_poses(const SkinnedTemplate& rig, int count, std::uint64_t seed) {
  std::uint64_t s = seed * 0x2545f4914f6cdd1dULL + 17;
  std::vector<PoseParams> out;
  for (int i = 0; i < count; ++i) {
    PoseParams p = PoseParams::zero(rig);
    p.theta[kRoot] = Vec3(uniform(s, -0.1, 0.1), uniform(s, -0.3, 0.3), uniform(s, -0.05, 0.05));
    p.theta[kSpine] = Vec3(uniform(s, -0.15, 0.15), uniform(s, -0.2, 0.2), uniform(s, -0.1, 0.1));
    p.theta[kHead] = Vec3(uniform(s, -0.3, 0.3), uniform(s, -0.5, 0.5), uniform(s, -0.2, 0.2));
    for (int side = 0; side < 2; ++side) {
      const int o = side == 0 ? kLShoulder : kRShoulder;
      const double sx = side == 0 ? 1.0 : -1.0;
      p.theta[o] = Vec3(uniform(s, -1.6, 0.0), uniform(s, -0.4, 0.4), sx * uniform(s, 0.0, 0.9));
      p.theta[o + 1] = Vec3(uniform(s, -1.9, -0.1), uniform(s, -0.6, 0.6), 0.0);
      p.theta[o + 2] = Vec3(uniform(s, -0.4, 0.4), uniform(s, -0.2, 0.2), uniform(s, -0.3, 0.3));
      p.theta[o + 3] = Vec3(uniform(s, -1.0, 0.2), 0.0, uniform(s, -0.2, 0.2));
      p.theta[o + 4] = Vec3(uniform(s, -1.2, 0.0), 0.0, 0.0);
    }
    p.psi[0] = uniform(s, 0.0, 1.0);
    out.push_back(clamp_pose(rig, p));
  }
  return out;
}

Camera orbit_camera(double azimuth, double elevation, int size) {
  constexpr double kDistance = 3.0;
  const Vec3 target(0.0, 0.0, 0.0);
  const Vec3 eye = target + kDistance * Vec3(std::sin(azimuth) * std::cos(elevation), std::sin(elevation),
                                             std::cos(azimuth) * std::cos(elevation));
  const Vec3 fwd = (target - eye).normalized();
  const Vec3 right = fwd.cross(Vec3::UnitY()).normalized();
  const Vec3 down = fwd.cross(right);
  Camera c;
  c.width = c.height = size;
  c.fx = c.fy = 0.86 * size * kDistance / 1.25;
  c.cx = c.cy = 0.5 * size;
  c.rot.row(0) = right;
  c.rot.row(1) = down;
  c.rot.row(2) = fwd;
  c.trans = -c.rot * eye;
  return c;
}

std::vector<Vec3> toy_vertex_colors(const SkinnedTemplate& rig) {
  std::vector<Vec3> vn, fn;
  compute_normals(rig.rest_vertices, rig.faces, vn, fn);
  const Vec3 light = Vec3(0.4, 0.8, 0.45).normalized();
  std::vector<Vec3> out(rig.vertex_count());
  for (std::size_t v = 0; v < out.size(); ++v) {
    const Vec3& p = rig.rest_vertices[v];
    Vec3 c;
    switch (rig.segment[v]) {
      case Segment::Head: {
        c = Vec3(0.90, 0.72, 0.58);
        if (p.z() > 0.05) {
          for (double ex : {-0.04, 0.04}) {
            const double e = std::exp(-(std::pow(p.x() - ex, 2) + std::pow(p.y() - 0.53, 2)) / (2 * 0.018 * 0.018));
            c = (1 - e) * c + e * Vec3(0.10, 0.10, 0.15);
          }
          const double m = std::exp(-std::pow(p.y() - 0.45, 2) / (2 * 0.012 * 0.012) - p.x() * p.x() / (2 * 0.035 * 0.035));
          c = (1 - m) * c + m * Vec3(0.75, 0.20, 0.20);
        }
        break;
      }
      case Segment::Body: {
        const double ang = std::atan2(p.z(), p.x());
        const double f = 0.5 + 0.5 * std::sin(2 * kPi * p.y() / 0.18) * std::cos(2 * ang);
        c = (1 - f) * Vec3(0.20, 0.35, 0.70) + f * Vec3(0.85, 0.80, 0.30);
        break;
      }
      default: {
        const double f = 0.5 + 0.5 * std::sin(2 * kPi * p.y() / 0.08);
        c = (1 - 0.3 * f) * Vec3(0.95, 0.78, 0.62);
        break;
      }
    }
    const double shade = 0.45 + 0.55 * std::max(0.0, vn[v].dot(light));
    out[v] = (shade * c).cwiseMax(0.0).cwiseMin(1.0);
  }
  return out;
}

Image render_reference(const SkinnedTemplate& rig, const std::vector<Vec3>& colors, const PoseParams& pose,
                       const Camera& cam, const Vec3& background, int supersample) {
  const int ss = std::max(1, supersample);
  const int W = cam.width * ss, H = cam.height * ss;
  const PosedMesh mesh = skin(rig, pose);
  std::vector<Vec3> pc(mesh.vertices.size());
  for (std::size_t v = 0; v < pc.size(); ++v) pc[v] = cam.to_camera(mesh.vertices[v]);
  std::vector<double> depth(static_cast<std::size_t>(W) * H, std::numeric_limits<double>::infinity());
  std::vector<Vec3> color(depth.size(), background);
  for (const Face& f : mesh.faces) {
    Vec2 s[3];
    double z[3];
    bool ok = true;
    for (int k = 0; k < 3; ++k) {
      const Vec3& t = pc[f[k]];
      if (!(t.z() >= cam.near)) ok = false;
      z[k] = t.z();
      s[k] = Vec2(cam.fx * t.x() / t.z() + cam.cx, cam.fy * t.y() / t.z() + cam.cy) * ss;
    }
    if (!ok) continue;
    const double area = (s[1] - s[0]).x() * (s[2] - s[0]).y() - (s[1] - s[0]).y() * (s[2] - s[0]).x();
    if (std::abs(area) < 1e-12) continue;
    const int x0 = std::max(0, static_cast<int>(std::floor(std::min({s[0].x(), s[1].x(), s[2].x()}))));
    const int x1 = std::min(W - 1, static_cast<int>(std::ceil(std::max({s[0].x(), s[1].x(), s[2].x()}))));
    const int y0 = std::max(0, static_cast<int>(std::floor(std::min({s[0].y(), s[1].y(), s[2].y()}))));
    const int y1 = std::min(H - 1, static_cast<int>(std::ceil(std::max({s[0].y(), s[1].y(), s[2].y()}))));
    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) {
        const Vec2 p(x + 0.5, y + 0.5);
        double b[3];
        for (int k = 0; k < 3; ++k) {
          const Vec2& a = s[(k + 1) % 3];
          const Vec2& c = s[(k + 2) % 3];
          b[k] = ((c - a).x() * (p - a).y() - (c - a).y() * (p - a).x()) / area;
        }
        if (b[0] < 0.0 || b[1] < 0.0 || b[2] < 0.0) continue;
        const double zz = b[0] * z[0] + b[1] * z[1] + b[2] * z[2];
        const std::size_t i = static_cast<std::size_t>(y) * W + x;
        if (zz >= depth[i]) continue;
        depth[i] = zz;
        color[i] = b[0] * colors[f[0]] + b[1] * colors[f[1]] + b[2] * colors[f[2]];
      }
    }
  }
  Image img(cam.width, cam.height);
  const double inv = 1.0 / (ss * ss);
  for (int y = 0; y < cam.height; ++y) {
    for (int x = 0; x < cam.width; ++x) {
      Vec3 acc = Vec3::Zero();
      for (int j = 0; j < ss; ++j) {
        for (int i = 0; i < ss; ++i) acc += color[static_cast<std::size_t>(y * ss + j) * W + x * ss + i];
      }
      for (int c = 0; c < 3; ++c) img.at(x, y, c) = acc[c] * inv;
    }
  }
  return img;
}

KeypointFrame project_keypoints(const SkinnedTemplate& rig, const PoseParams& pose, const Camera& cam) {
  const auto joints = world_joints(skin_forward(rig, pose));
  KeypointFrame kf;
  for (const auto& j : joints) kf.push_back(Keypoint{cam.project_point(j), 1.0});
  return kf;
}

namespace {

void write_frames(const fs::path& dir, const SkinnedTemplate& rig, const std::vector<Vec3>& colors,
                  const std::vector<PoseParams>& poses, const std::vector<Camera>& cams, const Vec3& bg) {
  fs::create_directories(dir / "frames");
  CameraSet cs;
  cs.background = bg;
  cs.cameras = cams;
  save_cameras(cs, dir / "cameras.json");
  save_poses(PoseSequence{30.0, poses}, dir / "poses.json");
  std::vector<KeypointFrame> kps;
  for (std::size_t i = 0; i < poses.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "%04zu.png", i);
    save_png(render_reference(rig, colors, poses[i], cams[i], bg), dir / "frames" / name);
    kps.push_back(project_keypoints(rig, poses[i], cams[i]));
  }
  save_keypoints(kps, dir / "keypoints.json");
}

constexpr const char* kTrainToml = R"(# Training config for the synthetic scene.
[data]
dataset = "."

[output]
dir = "run"

[trainer]
iterations = 2000
batch = 4
)";

}  // namespace

void make_synthetic(const fs::path& outdir, const SyntheticConfig& cfg) {
  cfg.validate();
  fs::create_directories(outdir);
  const SkinnedTemplate rig = toy_rig();
  const std::vector<Vec3> colors = toy_vertex_colors(rig);
  const Vec3 bg = Vec3::Zero();
  const auto poses = toy_poses(rig, cfg.poses, cfg.seed);
  const double elevation = 10.0 * kPi / 180.0;

  std::vector<PoseParams> frame_poses;
  std::vector<Camera> cams;
  for (int p = 0; p < cfg.poses; ++p) {
    for (int c = 0; c < cfg.cameras; ++c) {
      frame_poses.push_back(poses[p]);
      cams.push_back(orbit_camera(2.0 * kPi * (c + 0.5) / cfg.cameras, elevation, cfg.size));
    }
  }
  save_rig(rig, outdir / "rig.json");
  write_frames(outdir, rig, colors, frame_poses, cams, bg);

  if (cfg.heldout_frames > 0) {
    std::vector<PoseParams> hp;
    std::vector<Camera> hc;
    for (int i = 0; i < cfg.heldout_frames; ++i) {
      hp.push_back(poses[i % cfg.poses]);
      hc.push_back(orbit_camera(0.0, elevation, cfg.size));
    }
    write_frames(outdir / "heldout", rig, colors, hp, hc, bg);
  }
  write_demo_glosses(rig, outdir / "glosses");
  write_text_file(outdir / "train.toml", kTrainToml);
}

void write_demo_glosses(const SkinnedTemplate& rig, const fs::path& dir) {
  fs::create_directories(dir);
  auto pose = [&](double shoulder_x, double shoulder_z, double elbow, double wrist_z, double head_y) {
    PoseParams p = PoseParams::zero(rig);
    p.theta[kRShoulder] = Vec3(shoulder_x, 0.0, shoulder_z);
    p.theta[kRElbow] = Vec3(elbow, 0.0, 0.0);
    p.theta[kRWrist] = Vec3(0.0, 0.0, wrist_z);
    p.theta[kHead] = Vec3(0.0, head_y, 0.0);
    return clamp_pose(rig, p);
  };
  const std::vector<std::pair<std::string, std::vector<PoseParams>>> clips = {
      {"hello", {pose(-0.3, -1.2, -1.6, -0.4, 0.0), pose(-0.3, -1.2, -1.6, 0.0, 0.1),
                 pose(-0.3, -1.2, -1.6, 0.4, 0.1), pose(-0.3, -1.2, -1.6, 0.0, 0.0)}},
      {"thanks", {pose(-1.0, -0.2, -2.0, 0.0, 0.0), pose(-1.2, -0.2, -1.4, 0.0, 0.0),
                  pose(-1.4, -0.2, -0.8, 0.0, 0.0)}},
      {"you", {pose(-1.3, 0.0, -0.3, 0.0, -0.2), pose(-1.4, 0.0, -0.1, 0.0, -0.2)}},
  };
  nlohmann::json dict = nlohmann::json::object();
  for (const auto& [name, frames] : clips) {
    export_animation(PoseSequence{30.0, frames}, dir / (name + ".json"));
    dict[name] = name + ".json";
  }
  write_text_file(dir / "dictionary.json", dict.dump(1));
}

}  // namespace signsplat
