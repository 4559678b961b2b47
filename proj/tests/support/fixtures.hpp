#pragma once
// Scratch directories and small datasets shared by the test suites.

#include <filesystem>
#include <string>

#include "signsplat/synthetic.hpp"
#include "signsplat/trainer.hpp"

namespace signsplat::testing {

/// Empty directory under the build tree's test scratch area.
std::filesystem::path scratch_dir(const std::string& name);

/// Synthetic dataset written once per process into scratch_dir(name).
std::filesystem::path synthetic_dataset(const std::string& name, const SyntheticConfig& cfg);

/// Small scene for quick trainer and CLI tests: 2 poses x 2 cameras, 48 px.
SyntheticConfig small_synthetic_config();

/// Reads a whole file as bytes.
std::string file_bytes(const std::filesystem::path& path);

/// Bitwise equality of two images.
bool images_identical(const Image& a, const Image& b);

}  // namespace signsplat::testing
