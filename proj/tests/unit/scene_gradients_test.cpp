#include <gtest/gtest.h>

#include <set>

#include "fixtures.hpp"
#include "gradcheck.hpp"
#include "signsplat/scene.hpp"

using namespace signsplat;
namespace st = signsplat::testing;

class SceneGradients : public ::testing::TestWithParam<std::uint64_t> {};

TEST_P(SceneGradients, MatchFiniteDifferences) {
  st::GradScene scene = st::random_grad_scene(GetParam());
  const auto checks = st::check_scene_gradients(scene, 1e-3, 1e-6);
  ASSERT_FALSE(checks.empty());
  std::set<std::string> groups;
  for (const auto& c : checks) {
    EXPECT_TRUE(c.ok) << c.name << ": analytic " << c.analytic << " numeric " << c.numeric;
    groups.insert(c.name.substr(c.name.find('.') + 1));
  }
  for (const char* g : {"opacity", "scale0", "rotation0", "sh_dc0", "psi0"}) {
    EXPECT_TRUE(groups.count(g)) << "group " << g << " not checked";
  }
}

INSTANTIATE_TEST_SUITE_P(Seeds, SceneGradients, ::testing::Range<std::uint64_t>(1, 21));

TEST(SceneGradients, AnchorOffsetOnSixteenPixelRender) {
  bool seen = false;
  for (std::uint64_t seed = 1; seed <= 20 && !seen; ++seed) {
    st::GradScene scene = st::random_grad_scene(seed);
    ASSERT_EQ(scene.cam.width, 16);
    ASSERT_EQ(scene.cam.height, 16);
    for (const auto& c : st::check_scene_gradients(scene)) {
      if (c.name.size() > 2 && c.name.substr(c.name.size() - 2) == ".l") {
        seen = true;
        EXPECT_TRUE(c.ok) << c.name << ": " << c.analytic << " vs " << c.numeric;
      }
    }
  }
  EXPECT_TRUE(seen);
}

TEST(SceneGradients, ZeroImageGradientGivesZero) {
  st::GradScene scene = st::random_grad_scene(3);
  FrameCache cache;
  render_frame(scene.model, scene.pose, scene.cam, scene.background, scene.sh_degree, &cache);
  ModelGrad g;
  g.resize_for(scene.model);
  PoseGradient pg;
  backward_frame(scene.model, cache, Image(scene.cam.width, scene.cam.height, 0.0), g, &pg);
  for (const auto* v : {&g.opacity, &g.scale, &g.rotation, &g.sh, &g.k_logits, &g.l, &g.disp, &g.predictor}) {
    for (double x : *v) EXPECT_EQ(x, 0.0);
  }
  for (const Vec3& t : pg.theta) EXPECT_EQ(t, Vec3::Zero());
  for (double p : pg.psi) EXPECT_EQ(p, 0.0);
}

TEST(SceneGradients, BackwardRequiresForward) {
  st::GradScene scene = st::random_grad_scene(4);
  FrameCache cache;
  ModelGrad g;
  g.resize_for(scene.model);
  EXPECT_THROW(backward_frame(scene.model, cache, Image(16, 16), g), InputError);
}

TEST(SceneGradients, RenderIsDeterministic) {
  st::GradScene scene = st::random_grad_scene(5);
  const Image a = render_frame(scene.model, scene.pose, scene.cam, scene.background, 3);
  const Image b = render_frame(scene.model, scene.pose, scene.cam, scene.background, 3);
  EXPECT_TRUE(st::images_identical(a, b));
}
