#include "signsplat/io.hpp"

#include <fstream>
#include <sstream>

#include "json.hpp"

namespace signsplat {

using nlohmann::json;

std::string read_text_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw RuntimeError("cannot write " + path.string());
  out << text;
  if (!out) throw RuntimeError("failed writing " + path.string());
}

namespace {

json parse_json(const std::string& text, const std::string& origin) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw InputError(origin + ": invalid JSON (" + e.what() + ")");
  }
}

template <class F>
auto guarded(const std::string& origin, F&& body) {
  try {
    return body();
  } catch (const json::exception& e) {
    throw InputError(origin + ": malformed content (" + e.what() + ")");
  }
}

json load_json(const fs::path& path) { return parse_json(read_text_file(path), path.string()); }

const json& field(const json& j, const char* key, const std::string& where) {
  if (!j.is_object() || !j.contains(key)) throw InputError(where + ": missing field '" + key + "'");
  return j.at(key);
}

double num(const json& j, const std::string& where) {
  if (!j.is_number()) throw InputError(where + ": expected a number");
  return j.get<double>();
}

Vec3 vec3(const json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 3) throw InputError(where + ": expected [x, y, z]");
  return Vec3(num(j[0], where), num(j[1], where), num(j[2], where));
}

json to_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

std::vector<Vec3> vec3_list(const json& j, const std::string& where) {
  if (!j.is_array()) throw InputError(where + ": expected a list of 3-vectors");
  std::vector<Vec3> out;
  out.reserve(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) out.push_back(vec3(j[i], where + "[" + std::to_string(i) + "]"));
  return out;
}

json vec3_list_json(const std::vector<Vec3>& v) {
  json a = json::array();
  for (const auto& x : v) a.push_back(to_json(x));
  return a;
}

JointLimit parse_limit(const json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 3) throw InputError(where + ": expected three axis limits");
  JointLimit lim;
  for (int a = 0; a < 3; ++a) {
    const json& ax = j[a];
    const std::string w = where + " axis " + std::to_string(a);
    if (ax.is_string()) {
      if (ax.get<std::string>() != "locked") throw InputError(w + ": expected \"locked\" or [min, max]");
      lim[a] = AxisLimit::lock();
    } else if (ax.is_array() && ax.size() == 2) {
      const double lo = num(ax[0], w), hi = num(ax[1], w);
      if (lo > hi) throw InputError(w + ": min exceeds max");
      lim[a] = AxisLimit::range(lo, hi);
    } else {
      throw InputError(w + ": expected \"locked\" or [min, max]");
    }
  }
  return lim;
}

json limit_json(const JointLimit& lim) {
  json a = json::array();
  for (const auto& ax : lim) {
    if (ax.locked) {
      a.push_back("locked");
    } else {
      a.push_back(json::array({ax.min, ax.max}));
    }
  }
  return a;
}

json pose_json(const PoseParams& p) {
  json theta = json::array();
  for (const auto& t : p.theta) theta.push_back(to_json(t));
  return json{{"beta", p.beta},
              {"psi", p.psi},
              {"theta", theta},
              {"global_rot", json::array({p.global_rot[0], p.global_rot[1], p.global_rot[2], p.global_rot[3]})},
              {"global_trans", to_json(p.global_trans)}};
}

std::vector<double> num_list(const json& j, const std::string& where) {
  if (!j.is_array()) throw InputError(where + ": expected a list of numbers");
  std::vector<double> out;
  for (const auto& x : j) out.push_back(num(x, where));
  return out;
}

PoseParams parse_pose(const json& j, const std::string& where) {
  PoseParams p;
  p.beta = num_list(field(j, "beta", where), where + ".beta");
  p.psi = num_list(field(j, "psi", where), where + ".psi");
  p.theta = vec3_list(field(j, "theta", where), where + ".theta");
  const json& q = field(j, "global_rot", where);
  if (!q.is_array() || q.size() != 4) throw InputError(where + ".global_rot: expected [w, x, y, z]");
  p.global_rot = Quat(num(q[0], where), num(q[1], where), num(q[2], where), num(q[3], where));
  p.global_trans = vec3(field(j, "global_trans", where), where + ".global_trans");
  return p;
}

}  // namespace

std::string rig_to_json(const SkinnedTemplate& t) {
  json j;
  j["format"] = "signsplat-rig";
  j["version"] = 1;
  j["vertices"] = vec3_list_json(t.rest_vertices);
  json faces = json::array();
  for (const auto& f : t.faces) faces.push_back(json::array({f[0], f[1], f[2]}));
  j["faces"] = faces;
  json joints = json::array();
  for (std::size_t i = 0; i < t.joint_count(); ++i) {
    joints.push_back(json{{"name", t.joint_names[i]}, {"parent", t.parents[i]}, {"position", to_json(t.joints[i])}});
  }
  j["joints"] = joints;
  json weights = json::array();
  for (const auto& row : t.skin_weights) {
    json r = json::array();
    for (const auto& inf : row) r.push_back(json::array({inf.joint, inf.weight}));
    weights.push_back(r);
  }
  j["skin_weights"] = weights;
  json shape = json::array(), expr = json::array();
  for (const auto& b : t.shape_basis) shape.push_back(vec3_list_json(b));
  for (const auto& b : t.expression_basis) expr.push_back(vec3_list_json(b));
  j["shape_basis"] = shape;
  j["expression_basis"] = expr;
  json seg = json::array();
  for (Segment s : t.segment) seg.push_back(segment_name(s));
  j["segment"] = seg;
  json limits = json::object();
  for (std::size_t i = 0; i < t.joint_count(); ++i) limits[t.joint_names[i]] = limit_json(t.joint_limits[i]);
  j["joint_limits"] = limits;
  j["original_vertex_count"] = t.original_vertex_count;
  return j.dump();
}

SkinnedTemplate rig_from_json(const std::string& text, const std::string& origin) {
  return guarded(origin, [&] {
    const json j = parse_json(text, origin);
    SkinnedTemplate t;
    t.rest_vertices = vec3_list(field(j, "vertices", origin), origin + ".vertices");
    const json& faces = field(j, "faces", origin);
    if (!faces.is_array()) throw InputError(origin + ".faces: expected a list");
    for (const auto& f : faces) {
      if (!f.is_array() || f.size() != 3) throw InputError(origin + ".faces: expected index triples");
      t.faces.push_back({f[0].get<int>(), f[1].get<int>(), f[2].get<int>()});
    }
    const json& joints = field(j, "joints", origin);
    if (!joints.is_array()) throw InputError(origin + ".joints: expected a list");
    for (std::size_t i = 0; i < joints.size(); ++i) {
      const std::string w = origin + ".joints[" + std::to_string(i) + "]";
      t.joint_names.push_back(field(joints[i], "name", w).get<std::string>());
      t.parents.push_back(field(joints[i], "parent", w).get<int>());
      t.joints.push_back(vec3(field(joints[i], "position", w), w + ".position"));
    }
    const json& weights = field(j, "skin_weights", origin);
    for (const auto& row : weights) {
      std::vector<SkinInfluence> r;
      for (const auto& inf : row) {
        if (!inf.is_array() || inf.size() != 2) throw InputError(origin + ".skin_weights: expected [joint, weight]");
        r.push_back({inf[0].get<int>(), num(inf[1], origin + ".skin_weights")});
      }
      t.skin_weights.push_back(std::move(r));
    }
    if (j.contains("shape_basis")) {
      for (const auto& b : j["shape_basis"]) t.shape_basis.push_back(vec3_list(b, origin + ".shape_basis"));
    }
    if (j.contains("expression_basis")) {
      for (const auto& b : j["expression_basis"]) {
        t.expression_basis.push_back(vec3_list(b, origin + ".expression_basis"));
      }
    }
    for (const auto& s : field(j, "segment", origin)) t.segment.push_back(segment_from_name(s.get<std::string>()));
    t.joint_limits.assign(t.joints.size(), JointLimit{});
    if (j.contains("joint_limits")) {
      for (const auto& [name, lim] : j["joint_limits"].items()) {
        const int idx = t.joint_index(name);
        if (idx < 0) throw InputError(origin + ".joint_limits: unknown joint '" + name + "'");
        t.joint_limits[idx] = parse_limit(lim, origin + ".joint_limits." + name);
      }
    }
    t.original_vertex_count = j.contains("original_vertex_count") ? j["original_vertex_count"].get<std::size_t>()
                                                                  : t.rest_vertices.size();
    t.validate();
    return t;
  });
}

SkinnedTemplate load_rig(const fs::path& path) { return rig_from_json(read_text_file(path), path.string()); }

void save_rig(const SkinnedTemplate& tmpl, const fs::path& path) { write_text_file(path, rig_to_json(tmpl)); }

void apply_joint_limits_file(SkinnedTemplate& tmpl, const fs::path& path) {
  return guarded(path.string(), [&] {
    const json j = load_json(path);
    if (!j.is_object()) throw InputError(path.string() + ": expected an object of joint limits");
    for (const auto& [name, lim] : j.items()) {
      const int idx = tmpl.joint_index(name);
      if (idx < 0) throw InputError(path.string() + ": unknown joint '" + name + "'");
      tmpl.joint_limits[idx] = parse_limit(lim, path.string() + ": " + name);
    }
  });
}

PoseSequence load_poses(const fs::path& path) {
  return guarded(path.string(), [&] {
    const json j = load_json(path);
    const std::string w = path.string();
    PoseSequence seq;
    if (j.contains("fps")) seq.fps = num(j["fps"], w + ".fps");
    const json& frames = field(j, "frames", w);
    if (!frames.is_array()) throw InputError(w + ".frames: expected a list");
    for (std::size_t i = 0; i < frames.size(); ++i) {
      seq.frames.push_back(parse_pose(frames[i], w + ".frames[" + std::to_string(i) + "]"));
    }
    return seq;
  });
}

void save_poses(const PoseSequence& seq, const fs::path& path) {
  json frames = json::array();
  for (const auto& p : seq.frames) frames.push_back(pose_json(p));
  write_text_file(path, json{{"fps", seq.fps}, {"frames", frames}}.dump(1));
}

void export_animation(const PoseSequence& seq, const fs::path& path) {
  if (seq.frames.empty()) throw InputError("cannot export an empty animation");
  save_poses(seq, path);
}

CameraSet load_cameras(const fs::path& path) {
  return guarded(path.string(), [&] {
    const json j = load_json(path);
    const std::string w = path.string();
    CameraSet set;
    if (j.contains("background")) set.background = vec3(j["background"], w + ".background");
    const json& frames = field(j, "frames", w);
    if (!frames.is_array()) throw InputError(w + ".frames: expected a list");
    for (std::size_t i = 0; i < frames.size(); ++i) {
      const std::string fw = w + ".frames[" + std::to_string(i) + "]";
      const json& c = frames[i];
      Camera cam;
      cam.fx = num(field(c, "fx", fw), fw);
      cam.fy = num(field(c, "fy", fw), fw);
      cam.cx = num(field(c, "cx", fw), fw);
      cam.cy = num(field(c, "cy", fw), fw);
      cam.width = field(c, "width", fw).get<int>();
      cam.height = field(c, "height", fw).get<int>();
      const json& r = field(c, "rotation", fw);
      if (!r.is_array() || r.size() != 3) throw InputError(fw + ".rotation: expected 3 rows");
      for (int row = 0; row < 3; ++row) cam.rot.row(row) = vec3(r[row], fw + ".rotation").transpose();
      cam.trans = vec3(field(c, "translation", fw), fw + ".translation");
      if (c.contains("near")) cam.near = num(c["near"], fw);
      try {
        cam.validate();
      } catch (const InputError& e) {
        throw InputError(fw + ": " + e.what());
      }
      set.cameras.push_back(cam);
    }
    return set;
  });
}

void save_cameras(const CameraSet& set, const fs::path& path) {
  json frames = json::array();
  for (const auto& c : set.cameras) {
    json rot = json::array();
    for (int r = 0; r < 3; ++r) rot.push_back(to_json(c.rot.row(r).transpose()));
    frames.push_back(json{{"fx", c.fx},
                          {"fy", c.fy},
                          {"cx", c.cx},
                          {"cy", c.cy},
                          {"width", c.width},
                          {"height", c.height},
                          {"rotation", rot},
                          {"translation", to_json(c.trans)},
                          {"near", c.near}});
  }
  write_text_file(path, json{{"background", to_json(set.background)}, {"frames", frames}}.dump(1));
}

std::vector<KeypointFrame> load_keypoints(const fs::path& path) {
  return guarded(path.string(), [&] {
    const json j = load_json(path);
    const std::string w = path.string();
    if (!j.is_array()) throw InputError(w + ": expected a list of frames");
    std::vector<KeypointFrame> out;
    for (std::size_t f = 0; f < j.size(); ++f) {
      KeypointFrame frame;
      for (const auto& k : j[f]) {
        if (!k.is_array() || k.size() != 3) throw InputError(w + ": expected [x, y, confidence] per joint");
        Keypoint kp{Vec2(num(k[0], w), num(k[1], w)), num(k[2], w)};
        if (kp.confidence < 0.0 || kp.confidence > 1.0) throw InputError(w + ": confidence outside [0, 1]");
        frame.push_back(kp);
      }
      out.push_back(std::move(frame));
    }
    return out;
  });
}

void save_keypoints(const std::vector<KeypointFrame>& kps, const fs::path& path) {
  json j = json::array();
  for (const auto& frame : kps) {
    json f = json::array();
    for (const auto& k : frame) f.push_back(json::array({k.xy.x(), k.xy.y(), k.confidence}));
    j.push_back(f);
  }
  write_text_file(path, j.dump());
}

}  // namespace signsplat
