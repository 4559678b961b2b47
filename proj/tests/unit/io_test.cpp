#include <gtest/gtest.h>

#include <fstream>

#include "fixtures.hpp"
#include "json.hpp"
#include "signsplat/io.hpp"
#include "signsplat/rotation.hpp"
#include "signsplat/synthetic.hpp"

using namespace signsplat;
namespace st = signsplat::testing;

namespace {

PoseSequence sample_sequence(const SkinnedTemplate& rig, int frames) {
  PoseSequence seq;
  seq.fps = 25.0;
  const auto poses = toy_poses(rig, frames, 4);
  for (int i = 0; i < frames; ++i) {
    PoseParams p = poses[i];
    p.global_rot = euler_to_quat(Vec3(0.1 * i, -0.2, 0.05));
    p.global_trans = Vec3(0.01 * i, 0.3, -1.0 / 3.0);
    seq.frames.push_back(p);
  }
  return seq;
}

void expect_same_pose(const PoseParams& a, const PoseParams& b) {
  EXPECT_EQ(a.beta, b.beta);
  EXPECT_EQ(a.psi, b.psi);
  EXPECT_EQ(a.theta, b.theta);
  EXPECT_EQ(a.global_rot, b.global_rot);
  EXPECT_EQ(a.global_trans, b.global_trans);
}

std::string error_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const InputError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST(Rig, RoundTripIsExact) {
  const SkinnedTemplate rig = toy_rig();
  const auto dir = st::scratch_dir("io_rig");
  save_rig(rig, dir / "rig.json");
  const SkinnedTemplate back = load_rig(dir / "rig.json");
  EXPECT_EQ(back.rest_vertices, rig.rest_vertices);
  EXPECT_EQ(back.faces, rig.faces);
  EXPECT_EQ(back.joint_names, rig.joint_names);
  EXPECT_EQ(back.joints, rig.joints);
  EXPECT_EQ(back.parents, rig.parents);
  EXPECT_EQ(back.segment, rig.segment);
  EXPECT_EQ(back.shape_basis, rig.shape_basis);
  EXPECT_EQ(back.expression_basis, rig.expression_basis);
  EXPECT_EQ(back.original_vertex_count, rig.original_vertex_count);
  ASSERT_EQ(back.skin_weights.size(), rig.skin_weights.size());
  for (std::size_t v = 0; v < rig.skin_weights.size(); ++v) {
    ASSERT_EQ(back.skin_weights[v].size(), rig.skin_weights[v].size());
    for (std::size_t k = 0; k < rig.skin_weights[v].size(); ++k) {
      EXPECT_EQ(back.skin_weights[v][k].joint, rig.skin_weights[v][k].joint);
      EXPECT_EQ(back.skin_weights[v][k].weight, rig.skin_weights[v][k].weight);
    }
  }
  for (std::size_t j = 0; j < rig.joint_count(); ++j) {
    for (int a = 0; a < 3; ++a) {
      EXPECT_EQ(back.joint_limits[j][a].min, rig.joint_limits[j][a].min);
      EXPECT_EQ(back.joint_limits[j][a].max, rig.joint_limits[j][a].max);
      EXPECT_EQ(back.joint_limits[j][a].locked, rig.joint_limits[j][a].locked);
    }
  }
}

TEST(Rig, ErrorsNameTheFile) {
  const auto dir = st::scratch_dir("io_rig_err");
  EXPECT_NE(error_of([&] { load_rig(dir / "missing.json"); }).find("missing.json"), std::string::npos);
  write_text_file(dir / "bad.json", "{ not json");
  EXPECT_NE(error_of([&] { load_rig(dir / "bad.json"); }).find("bad.json"), std::string::npos);
  nlohmann::json j = nlohmann::json::parse(rig_to_json(toy_rig()));
  j["joints"][1]["parent"] = 5;
  write_text_file(dir / "cycle.json", j.dump());
  EXPECT_THROW(load_rig(dir / "cycle.json"), InputError);
}

TEST(JointLimits, FileAppliesAndRejectsUnknownJoints) {
  SkinnedTemplate rig = toy_rig();
  const auto dir = st::scratch_dir("io_limits");
  const std::string joint = rig.joint_names[3];
  write_text_file(dir / "limits.json", "{\"" + joint + "\": [[-0.1, 0.2], \"locked\", [-1, 1]]}");
  apply_joint_limits_file(rig, dir / "limits.json");
  const int j = rig.joint_index(joint);
  EXPECT_EQ(rig.joint_limits[j][0].min, -0.1);
  EXPECT_EQ(rig.joint_limits[j][0].max, 0.2);
  EXPECT_TRUE(rig.joint_limits[j][1].locked);
  write_text_file(dir / "unknown.json", "{\"no_such_joint\": [[0, 1], [0, 1], [0, 1]]}");
  EXPECT_NE(error_of([&] { apply_joint_limits_file(rig, dir / "unknown.json"); }).find("no_such_joint"),
            std::string::npos);
  write_text_file(dir / "inverted.json", "{\"" + joint + "\": [[1, 0], [0, 1], [0, 1]]}");
  EXPECT_THROW(apply_joint_limits_file(rig, dir / "inverted.json"), InputError);
}

TEST(Poses, RoundTripIsExact) {
  const SkinnedTemplate rig = toy_rig();
  const PoseSequence seq = sample_sequence(rig, 5);
  const auto dir = st::scratch_dir("io_poses");
  save_poses(seq, dir / "poses.json");
  const PoseSequence back = load_poses(dir / "poses.json");
  EXPECT_EQ(back.fps, seq.fps);
  ASSERT_EQ(back.frames.size(), seq.frames.size());
  for (std::size_t i = 0; i < seq.frames.size(); ++i) expect_same_pose(back.frames[i], seq.frames[i]);
}

TEST(Animation, ExportImportIdentity) {
  const SkinnedTemplate rig = toy_rig();
  const PoseSequence seq = sample_sequence(rig, 10);
  const auto dir = st::scratch_dir("io_anim");
  export_animation(seq, dir / "anim.json");
  const PoseSequence back = load_poses(dir / "anim.json");
  ASSERT_EQ(back.frames.size(), 10u);
  for (std::size_t i = 0; i < 10; ++i) {
    for (std::size_t j = 0; j < rig.joint_count(); ++j) {
      for (int k = 0; k < 3; ++k) {
        EXPECT_EQ(static_cast<float>(back.frames[i].theta[j][k]), static_cast<float>(seq.frames[i].theta[j][k]));
      }
    }
  }
  const auto j = nlohmann::json::parse(read_text_file(dir / "anim.json"));
  EXPECT_EQ(j["frames"].size(), 10u);
}

TEST(Animation, EmptySequenceRejected) {
  const auto dir = st::scratch_dir("io_anim_empty");
  EXPECT_THROW(export_animation(PoseSequence{}, dir / "anim.json"), InputError);
  EXPECT_FALSE(std::filesystem::exists(dir / "anim.json"));
}

TEST(Cameras, RoundTripAndValidation) {
  CameraSet set;
  set.background = Vec3(0.1, 0.2, 0.3);
  set.cameras.push_back(orbit_camera(0.3, 0.1, 64));
  set.cameras.push_back(orbit_camera(2.0, -0.2, 32));
  const auto dir = st::scratch_dir("io_cams");
  save_cameras(set, dir / "cameras.json");
  const CameraSet back = load_cameras(dir / "cameras.json");
  EXPECT_EQ(back.background, set.background);
  ASSERT_EQ(back.cameras.size(), 2u);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_EQ(back.cameras[i].rot, set.cameras[i].rot);
    EXPECT_EQ(back.cameras[i].trans, set.cameras[i].trans);
    EXPECT_EQ(back.cameras[i].fx, set.cameras[i].fx);
    EXPECT_EQ(back.cameras[i].width, set.cameras[i].width);
  }
  auto j = nlohmann::json::parse(read_text_file(dir / "cameras.json"));
  j["frames"][0]["fx"] = -1.0;
  write_text_file(dir / "bad.json", j.dump());
  EXPECT_NE(error_of([&] { load_cameras(dir / "bad.json"); }).find("bad.json"), std::string::npos);
}

TEST(Keypoints, RoundTrip) {
  std::vector<KeypointFrame> kps = {{{Vec2(1.5, 2.25), 1.0}, {Vec2(-3.0, 0.5), 0.0}}, {{Vec2(7, 8), 0.5}}};
  const auto dir = st::scratch_dir("io_kps");
  save_keypoints(kps, dir / "kp.json");
  const auto back = load_keypoints(dir / "kp.json");
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0][1].xy, Vec2(-3.0, 0.5));
  EXPECT_EQ(back[0][1].confidence, 0.0);
  EXPECT_EQ(back[1][0].confidence, 0.5);
}

TEST(Png, RoundTripQuantized) {
  Image img(7, 5);
  for (std::size_t i = 0; i < img.data.size(); ++i) img.data[i] = static_cast<double>(i % 17) / 16.0;
  img.data[0] = 1.7;
  img.data[1] = -0.2;
  const auto dir = st::scratch_dir("io_png");
  save_png(img, dir / "a.png");
  const Image back = load_png(dir / "a.png");
  EXPECT_TRUE(st::images_identical(back, quantize_8bit(img)));
  EXPECT_EQ(back.data[0], 1.0);
  EXPECT_EQ(back.data[1], 0.0);
  write_text_file(dir / "broken.png", "not a png");
  EXPECT_NE(error_of([&] { load_png(dir / "broken.png"); }).find("broken.png"), std::string::npos);
}
