#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#ifdef SIGNSPLAT_HAVE_OMP
#include <omp.h>
#endif

#include "fixtures.hpp"
#include "signsplat/rasterizer.hpp"

using namespace signsplat;
namespace st = signsplat::testing;

namespace {

Camera pinhole(int w, int h, double f = 40.0) {
  Camera c;
  c.fx = c.fy = f;
  c.width = w;
  c.height = h;
  c.cx = 0.5 * w;
  c.cy = 0.5 * h;
  return c;
}

Splat2D splat_at(double x, double y, double depth, const Vec3& color, double opacity, std::uint32_t id,
                 double var = 2.0) {
  Splat2D s;
  s.id = id;
  s.mean = Vec2(x, y);
  s.cov = Mat2::Identity() * var;
  s.conic = Vec3(1.0 / var, 0.0, 1.0 / var);
  s.depth = depth;
  s.color = color;
  s.opacity = opacity;
  return s;
}

std::vector<Splat2D> random_splats(std::size_t n, int w, int h, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<Splat2D> out;
  for (std::size_t i = 0; i < n; ++i) {
    const double a = 0.5 + 6.0 * u(rng), c = 0.5 + 6.0 * u(rng), b = (u(rng) - 0.5) * std::sqrt(a * c);
    Splat2D s;
    s.id = static_cast<std::uint32_t>(i);
    s.mean = Vec2(u(rng) * w, u(rng) * h);
    s.cov << a, b, b, c;
    const Mat2 inv = s.cov.inverse();
    s.conic = Vec3(inv(0, 0), inv(0, 1), inv(1, 1));
    s.depth = 1.0 + u(rng);
    s.color = Vec3(u(rng), u(rng), u(rng));
    s.opacity = 0.05 + 0.9 * u(rng);
    out.push_back(s);
  }
  return out;
}

}  // namespace

TEST(Project, OnAxisPointHitsPrincipalPoint) {
  const Camera cam = pinhole(32, 24);
  const auto s = project(Vec3(0, 0, 3.0), Mat3::Identity() * 1e-4, Vec3::Ones(), 0.5, 0, cam);
  ASSERT_TRUE(s.has_value());
  EXPECT_NEAR(s->mean.x(), cam.cx, 1e-12);
  EXPECT_NEAR(s->mean.y(), cam.cy, 1e-12);
  EXPECT_NEAR(s->depth, 3.0, 1e-12);
}

TEST(Project, IsotropicCovarianceOnAxis) {
  const Camera cam = pinhole(32, 24, 50.0);
  const double sigma = 0.02, z = 2.5;
  const auto s = project(Vec3(0, 0, z), Mat3::Identity() * sigma * sigma, Vec3::Ones(), 0.5, 0, cam);
  ASSERT_TRUE(s.has_value());
  const double expected = std::pow(cam.fx * sigma / z, 2) + kCovInflation;
  EXPECT_NEAR(s->cov(0, 0), expected, 1e-12);
  EXPECT_NEAR(s->cov(1, 1), expected, 1e-12);
  EXPECT_NEAR(s->cov(0, 1), 0.0, 1e-12);
  EXPECT_NEAR(s->conic.x(), 1.0 / expected, 1e-12);
}

TEST(Project, CullsBehindNearPlaneAndOutsideFrustum) {
  Camera cam = pinhole(32, 32);
  cam.near = 0.1;
  EXPECT_FALSE(project(Vec3(0, 0, 0.05), Mat3::Identity() * 1e-4, Vec3::Ones(), 0.5, 0, cam).has_value());
  EXPECT_FALSE(project(Vec3(0, 0, -1.0), Mat3::Identity() * 1e-4, Vec3::Ones(), 0.5, 0, cam).has_value());
  EXPECT_FALSE(project(Vec3(100, 0, 1.0), Mat3::Identity() * 1e-4, Vec3::Ones(), 0.5, 0, cam).has_value());
  EXPECT_TRUE(project(Vec3(0.4, 0, 1.0), Mat3::Identity() * 1e-4, Vec3::Ones(), 0.5, 0, cam).has_value());
}

TEST(Project, BackwardMatchesFiniteDifferences) {
  Camera cam = pinhole(32, 32);
  cam.rot = Eigen::AngleAxisd(0.3, Vec3(0.2, 1.0, 0.1).normalized()).toRotationMatrix();
  cam.trans = Vec3(0.1, -0.2, 2.0);
  const Vec3 mu(0.1, 0.05, -0.2);
  Mat3 sigma;
  sigma << 0.004, 0.001, 0.0005, 0.001, 0.003, -0.0002, 0.0005, -0.0002, 0.002;
  const Vec2 gm(0.7, -0.4);
  const Vec3 gc(0.3, -0.9, 0.5);
  auto f = [&](const Vec3& m, const Mat3& s) {
    const auto p = project(m, s, Vec3::Zero(), 0.5, 0, cam);
    return gm.dot(p->mean) + gc.dot(p->conic);
  };
  Vec3 d_mu;
  Mat3 d_sigma;
  project_backward(mu, sigma, cam, gm, gc, d_mu, d_sigma);
  for (int k = 0; k < 3; ++k) {
    Vec3 hi = mu, lo = mu;
    hi[k] += 1e-7;
    lo[k] -= 1e-7;
    EXPECT_NEAR((f(hi, sigma) - f(lo, sigma)) / 2e-7, d_mu[k], 1e-4 * std::max(1.0, std::abs(d_mu[k])));
  }
  for (int i = 0; i < 3; ++i) {
    for (int j = i; j < 3; ++j) {
      Mat3 hi = sigma, lo = sigma;
      hi(i, j) += 1e-8;
      lo(i, j) -= 1e-8;
      if (i != j) {
        hi(j, i) += 1e-8;
        lo(j, i) -= 1e-8;
      }
      const double an = i == j ? d_sigma(i, j) : d_sigma(i, j) + d_sigma(j, i);
      EXPECT_NEAR((f(mu, hi) - f(mu, lo)) / 2e-8, an, 1e-4 * std::max(1.0, std::abs(an)));
    }
  }
}

TEST(Render, EmptySceneIsBackground) {
  const Camera cam = pinhole(37, 21);
  const Vec3 bg(0.2, 0.4, 0.9);
  const RenderOutput out = render({}, cam, bg);
  EXPECT_TRUE(st::images_identical(out.image, Image::filled(37, 21, bg)));
  for (double a : out.alpha) EXPECT_EQ(a, 0.0);
}

TEST(Render, SingleSplatAtPixelCentre) {
  const Camera cam = pinhole(16, 16);
  const Vec3 c(0.9, 0.2, 0.5), bg(0.1, 0.3, 0.7);
  const RenderOutput out = render({splat_at(7.5, 4.5, 1.0, c, 0.9, 0)}, cam, bg);
  for (int ch = 0; ch < 3; ++ch) EXPECT_NEAR(out.image.at(7, 4, ch), 0.9 * c[ch] + 0.1 * bg[ch], 1e-12);
}

TEST(Render, TwoStackedSplats) {
  const Camera cam = pinhole(16, 16);
  const Vec3 c1(1.0, 0.0, 0.2), c2(0.0, 1.0, 0.4), bg(0.3, 0.3, 0.3);
  // Listed back to front; the renderer sorts by depth.
  const RenderOutput out =
      render({splat_at(3.5, 9.5, 2.0, c2, 0.5, 0), splat_at(3.5, 9.5, 1.0, c1, 0.5, 1)}, cam, bg);
  for (int ch = 0; ch < 3; ++ch) {
    EXPECT_NEAR(out.image.at(3, 9, ch), 0.5 * c1[ch] + 0.25 * c2[ch] + 0.25 * bg[ch], 1e-12);
  }
}

TEST(Render, OpacityIsCappedAtMaxAlpha) {
  const Camera cam = pinhole(16, 16);
  const RenderOutput out = render({splat_at(8.5, 8.5, 1.0, Vec3::Ones(), 1.0, 0)}, cam, Vec3::Zero());
  EXPECT_NEAR(out.image.at(8, 8, 0), kMaxAlpha, 1e-12);
}

TEST(Render, NonFiniteSplatsSkipped) {
  const Camera cam = pinhole(16, 16);
  auto splats = random_splats(5, 16, 16, 2);
  const RenderOutput clean = render(splats, cam, Vec3::Zero());
  Splat2D bad = splat_at(8, 8, 1.0, Vec3::Ones(), 0.5, 99);
  bad.mean.x() = std::numeric_limits<double>::quiet_NaN();
  splats.push_back(bad);
  Splat2D bad2 = splat_at(4, 4, 1.0, Vec3::Ones(), std::numeric_limits<double>::infinity(), 100);
  splats.push_back(bad2);
  const RenderOutput out = render(splats, cam, Vec3::Zero());
  EXPECT_EQ(out.skipped, 2u);
  EXPECT_TRUE(st::images_identical(out.image, clean.image));
}

TEST(Render, EnergyBound) {
  const Camera cam = pinhole(40, 33);
  const Vec3 bg(0.25, 0.6, 0.1);
  const auto splats = random_splats(60, 40, 33, 17);
  Vec3 lo = bg, hi = bg;
  for (const auto& s : splats) {
    lo = lo.cwiseMin(s.color);
    hi = hi.cwiseMax(s.color);
  }
  const RenderOutput out = render(splats, cam, bg);
  for (int y = 0; y < 33; ++y) {
    for (int x = 0; x < 40; ++x) {
      for (int c = 0; c < 3; ++c) {
        EXPECT_GE(out.image.at(x, y, c), lo[c] - 1e-12);
        EXPECT_LE(out.image.at(x, y, c), hi[c] + 1e-12);
      }
    }
  }
}

TEST(Render, DeterministicAcrossInputOrderAndThreads) {
  const Camera cam = pinhole(50, 45);
  auto splats = random_splats(80, 50, 45, 23);
  // Equal depths exercise the id tie-break.
  for (std::size_t i = 0; i < splats.size(); i += 4) splats[i].depth = 1.5;
  const RenderOutput ref = render(splats, cam, Vec3(0.1, 0.1, 0.1));
  std::mt19937_64 rng(1);
  auto shuffled = splats;
  std::shuffle(shuffled.begin(), shuffled.end(), rng);
  EXPECT_TRUE(st::images_identical(render(shuffled, cam, Vec3(0.1, 0.1, 0.1)).image, ref.image));
#ifdef SIGNSPLAT_HAVE_OMP
  for (int threads : {1, 2, 3, 7}) {
    omp_set_num_threads(threads);
    EXPECT_TRUE(st::images_identical(render(splats, cam, Vec3(0.1, 0.1, 0.1)).image, ref.image));
  }
#endif
}

TEST(RenderBackward, ZeroGradientGivesZero) {
  const Camera cam = pinhole(24, 24);
  RenderState st;
  render(random_splats(10, 24, 24, 4), cam, Vec3::Zero(), &st);
  for (const auto& g : render_backward(st, Image(24, 24, 0.0))) {
    EXPECT_EQ(g.d_mean, Vec2::Zero());
    EXPECT_EQ(g.d_conic, Vec3::Zero());
    EXPECT_EQ(g.d_color, Vec3::Zero());
    EXPECT_EQ(g.d_opacity, 0.0);
  }
}

TEST(RenderBackward, RequiresForwardState) {
  RenderState st;
  EXPECT_THROW(render_backward(st, Image(4, 4)), InputError);
  const Camera cam = pinhole(8, 8);
  render({}, cam, Vec3::Zero(), &st);
  EXPECT_THROW(render_backward(st, Image(4, 4)), InputError);
}

TEST(RenderBackward, MatchesFiniteDifferences) {
  const int w = 16, h = 16;
  const Camera cam = pinhole(w, h);
  const Vec3 bg(0.2, 0.1, 0.3);
  auto splats = random_splats(8, w, h, 31);
  Image weights(w, h);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (double& v : weights.data) v = u(rng);
  auto loss = [&](const std::vector<Splat2D>& s) {
    const Image img = render(s, cam, bg).image;
    double sum = 0.0;
    for (std::size_t i = 0; i < img.data.size(); ++i) sum += weights.data[i] * img.data[i];
    return sum;
  };
  RenderState st;
  render(splats, cam, bg, &st);
  const auto grads = render_backward(st, weights);
  ASSERT_EQ(grads.size(), splats.size());
  auto check = [&](std::size_t i, double& param, double analytic, const char* what) {
    const double keep = param;
    param = keep + 1e-6;
    const double up = loss(splats);
    param = keep - 1e-6;
    const double down = loss(splats);
    param = keep;
    const double fd = (up - down) / 2e-6;
    EXPECT_NEAR(fd, analytic, std::max(1e-6, 1e-3 * std::max(std::abs(fd), std::abs(analytic))))
        << what << " of splat " << i;
  };
  for (std::size_t i = 0; i < splats.size(); ++i) {
    const std::size_t r = static_cast<std::size_t>(
        std::find_if(st.splats.begin(), st.splats.end(), [&](const Splat2D& s) { return s.id == splats[i].id; }) -
        st.splats.begin());
    ASSERT_LT(r, st.splats.size());
    const Splat2DGrad& g = grads[r];
    check(i, splats[i].opacity, g.d_opacity, "opacity");
    for (int c = 0; c < 3; ++c) check(i, splats[i].color[c], g.d_color[c], "color");
    check(i, splats[i].mean.x(), g.d_mean.x(), "mean.x");
    check(i, splats[i].mean.y(), g.d_mean.y(), "mean.y");
    check(i, splats[i].conic.x(), g.d_conic.x(), "conic.a");
    check(i, splats[i].conic.y(), g.d_conic.y(), "conic.b");
    check(i, splats[i].conic.z(), g.d_conic.z(), "conic.c");
  }
}
