#include "fixtures.hpp"

#include <cstring>
#include <fstream>
#include <iterator>
#include <set>

namespace signsplat::testing {

namespace fs = std::filesystem;

fs::path scratch_dir(const std::string& name) {
  const fs::path p = fs::path(SIGNSPLAT_TEST_TMP) / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

fs::path synthetic_dataset(const std::string& name, const SyntheticConfig& cfg) {
  static std::set<std::string> made;
  const fs::path p = fs::path(SIGNSPLAT_TEST_TMP) / name;
  if (!made.count(name)) {
    scratch_dir(name);
    make_synthetic(p, cfg);
    made.insert(name);
  }
  return p;
}

SyntheticConfig small_synthetic_config() {
  SyntheticConfig c;
  c.poses = 2;
  c.cameras = 2;
  c.size = 48;
  c.heldout_frames = 2;
  return c;
}

std::string file_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

bool images_identical(const Image& a, const Image& b) {
  return a.same_shape(b) && a.data.size() == b.data.size() &&
         std::memcmp(a.data.data(), b.data.data(), a.data.size() * sizeof(double)) == 0;
}

}  // namespace signsplat::testing
