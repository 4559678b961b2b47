#include <gtest/gtest.h>

#include <algorithm>

#include "signsplat/density_control.hpp"

using namespace signsplat;

namespace {

// 3x3 vertex grid; the centre vertex (4) touches six faces.
SkinnedTemplate fan_rig() {
  SkinnedTemplate t;
  for (int y = 0; y < 3; ++y) {
    for (int x = 0; x < 3; ++x) t.rest_vertices.emplace_back(0.1 * x, 0.1 * y, 0.0);
  }
  for (int y = 0; y < 2; ++y) {
    for (int x = 0; x < 2; ++x) {
      const int a = 3 * y + x, b = a + 1, c = a + 3, d = a + 4;
      t.faces.push_back({a, b, d});
      t.faces.push_back({a, d, c});
    }
  }
  t.joint_names = {"root"};
  t.joints = {Vec3::Zero()};
  t.parents = {-1};
  t.skin_weights.assign(9, {{0, 1.0}});
  t.segment.assign(9, Segment::Body);
  t.joint_limits.assign(1, JointLimit{});
  t.original_vertex_count = 9;
  return t;
}

AvatarModel fan_model() { return AvatarModel::create(fan_rig(), 2); }

GradAccumulator accumulator_with(const std::vector<double>& means) {
  GradAccumulator acc;
  acc.resize(means.size());
  for (std::size_t i = 0; i < means.size(); ++i) {
    acc.sum[i] = 2.0 * means[i];
    acc.count[i] = 2;
  }
  return acc;
}

}  // namespace

TEST(SelectCandidates, AllZeroGivesNone) {
  const GradAccumulator acc = accumulator_with({0, 0, 0});
  EXPECT_TRUE(select_candidates(acc, DensifyPolicy{}, {1, 1, 1}).empty());
}

TEST(SelectCandidates, SingleAboveThreshold) {
  const GradAccumulator acc = accumulator_with({1e-5, 5e-4, 0});
  EXPECT_EQ(select_candidates(acc, DensifyPolicy{}, {1, 1, 1}), std::vector<std::uint32_t>{1});
}

TEST(SelectCandidates, DescendingOrder) {
  const GradAccumulator acc = accumulator_with({2.5e-4, 1e-4, 3e-4});
  EXPECT_EQ(select_candidates(acc, DensifyPolicy{}, {1, 1, 1}), (std::vector<std::uint32_t>{2, 0}));
  const GradAccumulator acc2 = accumulator_with({3e-4, 2.5e-4, 1e-4});
  EXPECT_EQ(select_candidates(acc2, DensifyPolicy{}, {1, 1, 1}), (std::vector<std::uint32_t>{0, 1}));
}

TEST(SelectCandidates, TiesByIdAndInactiveSkipped) {
  const GradAccumulator acc = accumulator_with({5e-4, 5e-4, 5e-4, 9e-4});
  EXPECT_EQ(select_candidates(acc, DensifyPolicy{}, {1, 1, 1, 0}), (std::vector<std::uint32_t>{0, 1, 2}));
}

TEST(Accumulator, MeanAndReset) {
  GradAccumulator acc;
  ModelGrad g;
  g.screen_grad = {1.0, 3.0};
  g.screen_count = {1, 2};
  acc.add(g);
  acc.add(g);
  EXPECT_DOUBLE_EQ(acc.mean(0), 1.0);
  EXPECT_DOUBLE_EQ(acc.mean(1), 1.5);
  acc.reset(1);
  EXPECT_EQ(acc.mean(1), 0.0);
  acc.reset_all();
  EXPECT_EQ(acc.mean(0), 0.0);
}

TEST(Densify, SixFaceRingGivesSixChildren) {
  AvatarModel m = fan_model();
  GradAccumulator acc;
  acc.resize(m.splats.size());
  const std::size_t before = m.splats.size();
  const DensifyResult r = densify(m, {4}, DensifyPolicy{}, acc);
  EXPECT_EQ(r.created.size(), 6u);
  EXPECT_EQ(r.skipped_candidates, 0u);
  EXPECT_EQ(m.splats.size(), before + 6);
  EXPECT_EQ(acc.sum.size(), m.splats.size());
  std::vector<std::uint32_t> faces;
  for (std::uint32_t id : r.created) faces.push_back(m.splats.anchors[id].face_id);
  std::sort(faces.begin(), faces.end());
  EXPECT_EQ(std::unique(faces.begin(), faces.end()), faces.end());
}

TEST(Densify, ChildrenSitAtCentroidsWithReducedScale) {
  AvatarModel m = fan_model();
  GradAccumulator acc;
  acc.resize(m.splats.size());
  const DensifyPolicy policy;
  const GaussianAttributes parent = m.splats.attrs[4];
  const DensifyResult r = densify(m, {4}, policy, acc);
  const PosedMesh mesh = skin(m.tmpl, PoseParams::zero(m.tmpl));
  const Vec3 parent_scale = realized_scale(parent.log_scale, Segment::Body, m.limits);
  for (std::uint32_t id : r.created) {
    const SplatAnchor& a = m.splats.anchors[id];
    EXPECT_EQ(a.origin, SplatOrigin::Densified);
    EXPECT_EQ(a.l, 0.0);
    const Vec3 k = a.coefficients();
    for (int c = 0; c < 3; ++c) EXPECT_NEAR(k[c], 1.0 / 3.0, 1e-12);
    const Face& f = mesh.faces[a.face_id];
    const Vec3 centroid = (mesh.vertices[f[0]] + mesh.vertices[f[1]] + mesh.vertices[f[2]]) / 3.0;
    EXPECT_LT((anchor_position(a, mesh) - centroid).norm(), 1e-12);
    const Vec3 s = realized_scale(m.splats.attrs[id].log_scale, Segment::Body, m.limits);
    for (int c = 0; c < 3; ++c) EXPECT_NEAR(s[c], parent_scale[c] / policy.scale_divisor, 1e-6);
    EXPECT_EQ(m.splats.attrs[id].sh, parent.sh);
    EXPECT_EQ(m.splats.attrs[id].opacity_logit, parent.opacity_logit);
  }
}

TEST(Densify, CapSkipsCandidatesInOrder) {
  AvatarModel m = fan_model();
  GradAccumulator acc;
  acc.resize(m.splats.size());
  DensifyPolicy p;
  p.max_splats = m.splats.active_count() + 7;
  // Vertex 4 has six faces, vertex 0 has two.
  const DensifyResult r = densify(m, {4, 0, 8}, p, acc);
  EXPECT_EQ(r.created.size(), 6u);
  EXPECT_EQ(r.skipped_candidates, 2u);
  EXPECT_LE(m.splats.active_count(), p.max_splats);
}

TEST(Prune, LowOpacityDensifiedDeactivated) {
  AvatarModel m = fan_model();
  GradAccumulator acc;
  acc.resize(m.splats.size());
  const auto created = densify(m, {4}, DensifyPolicy{}, acc).created;
  m.splats.attrs[created[0]].opacity_logit = logit(0.001);
  const PruneResult r = prune(m, PrunePolicy{});
  EXPECT_EQ(r.deactivated, std::vector<std::uint32_t>{created[0]});
  EXPECT_TRUE(r.reset.empty());
  EXPECT_EQ(m.splats.active[created[0]], 0);
  EXPECT_EQ(m.splats.size(), 9u + 6u);
}

TEST(Prune, SaturatedScaleDensifiedDeactivated) {
  AvatarModel m = fan_model();
  GradAccumulator acc;
  acc.resize(m.splats.size());
  const auto created = densify(m, {4}, DensifyPolicy{}, acc).created;
  m.splats.attrs[created[1]].log_scale.y() = 50.0;
  EXPECT_EQ(prune(m, PrunePolicy{}).deactivated, std::vector<std::uint32_t>{created[1]});
}

TEST(Prune, OriginalVertexRetainedAndReset) {
  AvatarModel m = fan_model();
  m.splats.attrs[3].opacity_logit = logit(0.001);
  const PruneResult r = prune(m, PrunePolicy{});
  EXPECT_TRUE(r.deactivated.empty());
  EXPECT_EQ(r.reset, std::vector<std::uint32_t>{3});
  EXPECT_EQ(m.splats.active[3], 1);
  EXPECT_NEAR(sigmoid(m.splats.attrs[3].opacity_logit), 0.1, 1e-6);
}

TEST(Prune, HealthyIsNoOp) {
  AvatarModel m = fan_model();
  const SplatSet before = m.splats;
  const PruneResult r = prune(m, PrunePolicy{});
  EXPECT_TRUE(r.deactivated.empty());
  EXPECT_TRUE(r.reset.empty());
  EXPECT_EQ(m.splats.active, before.active);
}

TEST(Compact, DropsInactiveAndRemaps) {
  AvatarModel m = fan_model();
  GradAccumulator acc;
  acc.resize(m.splats.size());
  const auto created = densify(m, {4}, DensifyPolicy{}, acc).created;
  m.splats.active[created[2]] = 0;
  const std::size_t active = m.splats.active_count();
  const SplatAnchor kept = m.splats.anchors[created[3]];
  const auto map = compact(m);
  EXPECT_EQ(m.splats.size(), active);
  EXPECT_EQ(m.splats.active_count(), active);
  EXPECT_EQ(map[created[2]], -1);
  EXPECT_EQ(m.splats.anchors[map[created[3]]].face_id, kept.face_id);
}

TEST(Policy, Validation) {
  DensifyPolicy d;
  d.scale_divisor = 0.0;
  EXPECT_THROW(d.validate(), InputError);
  PrunePolicy p;
  p.reset_opacity = 1.5;
  EXPECT_THROW(p.validate(), InputError);
}
