#include <gtest/gtest.h>

#include <cstring>
#include <fstream>

#include "fixtures.hpp"
#include "signsplat/checkpoint.hpp"
#include "signsplat/trainer.hpp"

using namespace signsplat;
namespace st = signsplat::testing;
namespace fs = std::filesystem;

namespace {

const Dataset& small_data() {
  static const Dataset d = load_dataset(st::synthetic_dataset("ckpt_data", st::small_synthetic_config()));
  return d;
}

TrainConfig quick_config() {
  TrainConfig c;
  c.iterations = 7;
  c.batch = 2;
  c.densify = false;
  return c;
}

std::string error_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const InputError& e) {
    return e.what();
  }
  return "";
}

void write_bytes(const fs::path& p, const std::string& bytes) {
  std::ofstream out(p, std::ios::binary);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

Image render_first(const TrainState& s, int sh_degree) {
  const Dataset& d = small_data();
  return render_frame(s.model, s.poses[0], d.frames[0].camera, d.background, sh_degree);
}

}  // namespace

TEST(Checkpoint, SaveLoadRenderIsBitIdentical) {
  Trainer t(small_data(), quick_config());
  for (int i = 0; i < 3; ++i) t.step();
  const auto dir = st::scratch_dir("ckpt_roundtrip");
  save_checkpoint(t.state(), dir);
  for (const char* f : {"splats.ply", "predictor.bin", "state.bin", "rig.json"}) EXPECT_TRUE(fs::exists(dir / f));
  const TrainState back = load_checkpoint(dir);
  EXPECT_EQ(back.iteration, t.state().iteration);
  EXPECT_EQ(back.adam.step, t.state().adam.step);
  EXPECT_EQ(back.model.predictor.params(), t.state().model.predictor.params());
  for (int deg = 0; deg <= 3; ++deg) {
    EXPECT_TRUE(st::images_identical(render_first(back, deg), render_first(t.state(), deg))) << "degree " << deg;
  }
  // A second save of the loaded state writes the same bytes.
  const auto dir2 = st::scratch_dir("ckpt_roundtrip2");
  save_checkpoint(back, dir2);
  for (const char* f : {"splats.ply", "predictor.bin", "state.bin", "rig.json"}) {
    EXPECT_EQ(st::file_bytes(dir / f), st::file_bytes(dir2 / f)) << f;
  }
}

TEST(Checkpoint, ResumeContinuesIdentically) {
  const TrainConfig cfg = quick_config();
  Trainer a(small_data(), cfg);
  for (int i = 0; i < 4; ++i) a.step();
  const auto dir = st::scratch_dir("ckpt_resume");
  save_checkpoint(a.state(), dir);
  for (int i = 0; i < 3; ++i) a.step();
  Trainer b(small_data(), cfg, load_checkpoint(dir));
  for (int i = 0; i < 3; ++i) b.step();
  EXPECT_EQ(b.state().iteration, a.state().iteration);
  EXPECT_TRUE(st::images_identical(render_first(b.state(), 3), render_first(a.state(), 3)));
  EXPECT_EQ(b.state().model.displacement.d, a.state().model.displacement.d);
}

TEST(Checkpoint, TruncatedStateNamesMissingSection) {
  Trainer t(small_data(), quick_config());
  t.step();
  const auto dir = st::scratch_dir("ckpt_trunc");
  save_checkpoint(t.state(), dir);
  const std::string full = st::file_bytes(dir / "state.bin");
  // Cut right after the META section.
  const std::size_t meta = full.find("META");
  ASSERT_NE(meta, std::string::npos);
  std::uint64_t len = 0;
  std::memcpy(&len, full.data() + meta + 4, sizeof(len));
  write_bytes(dir / "state.bin", full.substr(0, meta + 12 + len));
  const std::string err = error_of([&] { load_checkpoint(dir); });
  EXPECT_NE(err.find("state.bin"), std::string::npos) << err;
  EXPECT_NE(err.find("missing section DISP"), std::string::npos) << err;
  // Cutting inside a section names that section.
  write_bytes(dir / "state.bin", full.substr(0, full.find("ADAM") + 20));
  EXPECT_NE(error_of([&] { load_checkpoint(dir); }).find("truncated"), std::string::npos);
}

TEST(Checkpoint, CorruptPlyNamesFirstInconsistency) {
  Trainer t(small_data(), quick_config());
  const auto dir = st::scratch_dir("ckpt_ply");
  save_checkpoint(t.state(), dir);
  std::string ply = st::file_bytes(dir / "splats.ply");
  const std::size_t pos = ply.find("property float l\n");
  ASSERT_NE(pos, std::string::npos);
  std::string bad = ply;
  bad.replace(pos, 17, "property float q\n");
  write_bytes(dir / "splats.ply", bad);
  EXPECT_NE(error_of([&] { load_checkpoint(dir); }).find("header line"), std::string::npos);
  write_bytes(dir / "splats.ply", ply.substr(0, ply.size() - 100));
  const std::string err = error_of([&] { load_checkpoint(dir); });
  EXPECT_NE(err.find("splat record"), std::string::npos) << err;
  write_bytes(dir / "splats.ply", ply + "x");
  EXPECT_THROW(load_checkpoint(dir), InputError);
}

TEST(Checkpoint, CompactsDeactivatedSplats) {
  TrainConfig cfg = quick_config();
  Trainer t(small_data(), cfg);
  t.step();
  TrainState& s = t.state();
  GradAccumulator acc = s.accumulator;
  const auto created = densify(s.model, {0, 5, 9}, DensifyPolicy{}, acc).created;
  ASSERT_FALSE(created.empty());
  s.accumulator = acc;
  s.model.splats.attrs[created[0]].opacity_logit = logit(0.001);
  s.model.splats.attrs[3].opacity_logit = logit(0.001);
  const PruneResult pr = prune(s.model, PrunePolicy{});
  ASSERT_EQ(pr.deactivated.size(), 1u);
  ASSERT_EQ(pr.reset.size(), 1u);
  const std::size_t active = s.model.splats.active_count();
  ASSERT_LT(active, s.model.splats.size());
  const auto dir = st::scratch_dir("ckpt_compact");
  save_checkpoint(s, dir);
  const TrainState back = load_checkpoint(dir);
  EXPECT_EQ(back.model.splats.size(), active);
  EXPECT_EQ(back.model.splats.active_count(), active);
  EXPECT_TRUE(st::images_identical(render_first(back, 3), render_first(s, 3)));
}

TEST(Checkpoint, MissingDirectoryRejected) {
  EXPECT_THROW(load_checkpoint(fs::path(SIGNSPLAT_TEST_TMP) / "no_such_checkpoint"), InputError);
}
