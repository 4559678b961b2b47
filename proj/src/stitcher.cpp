#include "signsplat/stitcher.hpp"

#include <algorithm>
#include <cctype>
#include <iostream>

#include "json.hpp"
#include "signsplat/rotation.hpp"

namespace signsplat {

namespace {

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

}  // namespace

GlossLibrary GlossLibrary::load(const std::filesystem::path& dir) {
  GlossLibrary lib;
  lib.dir = dir;
  const auto dict_path = dir / "dictionary.json";
  if (!std::filesystem::exists(dict_path)) throw InputError("missing " + dict_path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_text_file(dict_path));
    if (!j.is_object()) throw InputError(dict_path.string() + ": expected an object of token -> file");
    for (const auto& [token, file] : j.items()) lib.dictionary[lower(token)] = file.get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw InputError(dict_path.string() + ": " + e.what());
  }
  for (const auto& [token, file] : lib.dictionary) {
    if (!std::filesystem::exists(dir / file)) {
      throw InputError(dict_path.string() + ": token '" + token + "' maps to missing file " + (dir / file).string());
    }
  }
  return lib;
}

bool GlossLibrary::contains(const std::string& token) const { return dictionary.count(lower(token)) > 0; }

Gloss GlossLibrary::get(const std::string& token) const {
  const auto it = dictionary.find(lower(token));
  if (it == dictionary.end()) throw InputError("unknown gloss token '" + token + "'");
  const PoseSequence seq = load_poses(dir / it->second);
  if (seq.frames.empty()) throw InputError((dir / it->second).string() + ": gloss has no frames");
  return Gloss{it->first, seq.fps, seq.frames};
}

void StitchConfig::validate() const {
  if (!(omega > 0.0)) throw InputError("stitch.omega must be positive");
  if (min_frames < 0) throw InputError("stitch.min_frames must be non-negative");
}

double ease(double t) { return t * t * (3.0 - 2.0 * t); }

Quat slerp(const Quat& q0, const Quat& q1, double s) {
  const double n0 = q0.norm(), n1 = q1.norm();
  if (!(n0 > 0.0) || !(n1 > 0.0)) throw InputError("slerp: zero quaternion");
  const Quat a = q0 / n0;
  Quat b = q1 / n1;
  double d = a.dot(b);
  if (d < 0.0) {
    b = -b;
    d = -d;
  }
  if (d > 1.0 - 1e-6) {
    const Quat q = (1.0 - s) * a + s * b;
    return q / q.norm();
  }
  const double theta = std::acos(std::min(d, 1.0));
  const double st = std::sin(theta);
  const Quat q = (std::sin((1.0 - s) * theta) / st) * a + (std::sin(s * theta) / st) * b;
  return q / q.norm();
}

double max_joint_angle(const PoseParams& a, const PoseParams& b) {
  if (a.theta.size() != b.theta.size()) throw InputError("poses have different joint counts");
  double m = 0.0;
  for (std::size_t j = 0; j < a.theta.size(); ++j) {
    m = std::max(m, quat_angle_between(euler_to_quat(a.theta[j]), euler_to_quat(b.theta[j])));
  }
  return m;
}

int transition_frames(const PoseParams& last, const PoseParams& first, const StitchConfig& cfg) {
  cfg.validate();
  const double n = std::ceil(max_joint_angle(last, first) / cfg.omega);
  return std::max(cfg.min_frames, static_cast<int>(n));
}

PoseParams transition_pose(const PoseParams& a, const PoseParams& b, double t) {
  if (a.theta.size() != b.theta.size() || a.psi.size() != b.psi.size()) {
    throw InputError("transition: pose dimensions differ");
  }
  PoseParams p = a;
  const double s = ease(t);
  for (std::size_t j = 0; j < a.theta.size(); ++j) {
    p.theta[j] = quat_to_euler(slerp(euler_to_quat(a.theta[j]), euler_to_quat(b.theta[j]), s));
  }
  for (std::size_t e = 0; e < a.psi.size(); ++e) p.psi[e] = (1.0 - t) * a.psi[e] + t * b.psi[e];
  return p;
}

StitchResult stitch(const std::vector<std::string>& tokens, const GlossLibrary& lib, const StitchConfig& cfg) {
  cfg.validate();
  StitchResult res;
  std::vector<Gloss> glosses;
  for (const auto& t : tokens) {
    if (!lib.contains(t)) {
      std::cerr << "warning: no gloss for token '" << t << "', skipped\n";
      res.skipped_tokens.push_back(t);
      continue;
    }
    glosses.push_back(lib.get(t));
  }
  if (glosses.empty()) throw InputError("stitch: no resolvable tokens");

  Quat qsum = Quat::Zero();
  Vec3 tsum = Vec3::Zero();
  std::size_t count = 0;
  const Quat ref = glosses.front().frames.front().global_rot;
  for (const auto& g : glosses) {
    for (const auto& f : g.frames) {
      const Quat q = f.global_rot / f.global_rot.norm();
      qsum += q.dot(ref) < 0.0 ? Quat(-q) : q;
      tsum += f.global_trans;
      ++count;
    }
  }
  const Quat global_rot = qsum / qsum.norm();
  const Vec3 global_trans = tsum / static_cast<double>(count);
  const std::vector<double> beta = glosses.front().frames.front().beta;

  auto& out = res.sequence.frames;
  res.sequence.fps = glosses.front().fps;
  for (std::size_t gi = 0; gi < glosses.size(); ++gi) {
    if (gi > 0) {
      const PoseParams& a = glosses[gi - 1].frames.back();
      const PoseParams& b = glosses[gi].frames.front();
      const int n = transition_frames(a, b, cfg);
      res.transitions.emplace_back(out.size(), static_cast<std::size_t>(n));
      for (int i = 0; i < n; ++i) out.push_back(transition_pose(a, b, static_cast<double>(i + 1) / (n + 1)));
    }
    for (const auto& f : glosses[gi].frames) out.push_back(f);
  }
  for (auto& f : out) {
    f.beta = beta;
    f.global_rot = global_rot;
    f.global_trans = global_trans;
  }
  return res;
}

}  // namespace signsplat
