#include "signsplat/checkpoint.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "signsplat/io.hpp"

namespace signsplat {

using nlohmann::json;

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

constexpr const char* kPredictorMagic = "SIGNSPLAT-PREDICTOR 1";
constexpr const char* kStateMagic = "SIGNSPLAT-STATE 1";

std::vector<std::string> ply_properties() {
  std::vector<std::string> p = {"property uint face_id"};
  for (int i = 0; i < 3; ++i) p.push_back("property float k_logit_" + std::to_string(i));
  p.push_back("property float l");
  for (int i = 0; i < 3; ++i) p.push_back("property float log_scale_" + std::to_string(i));
  for (const char* c : {"w", "x", "y", "z"}) p.push_back(std::string("property float rot_") + c);
  p.push_back("property float opacity_logit");
  for (int i = 0; i < kShValues; ++i) p.push_back("property float sh_" + std::to_string(i));
  p.push_back("property uchar origin");
  return p;
}

constexpr std::size_t kPlyFloats = 3 + 1 + 3 + 4 + 1 + kShValues;
constexpr std::size_t kPlyRecord = 4 + 4 * kPlyFloats + 1;

template <class T>
void put(std::string& buf, T v) {
  char b[sizeof(T)];
  std::memcpy(b, &v, sizeof(T));
  buf.append(b, sizeof(T));
}

template <class T>
T get(const char* p) {
  T v;
  std::memcpy(&v, p, sizeof(T));
  return v;
}

void write_binary(const std::filesystem::path& path, const std::string& data) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw RuntimeError("cannot write " + path.string());
  out.write(data.data(), static_cast<std::streamsize>(data.size()));
  if (!out) throw RuntimeError("failed writing " + path.string());
}

std::string read_binary(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Sequential reader over a byte buffer with named error locations.
struct Cursor {
  const std::string& data;
  std::size_t pos = 0;
  std::string file;

  bool at_end() const { return pos >= data.size(); }
  std::string line(const std::string& what) {
    const std::size_t nl = data.find('\n', pos);
    if (nl == std::string::npos) throw InputError(file + ": truncated " + what);
    std::string s = data.substr(pos, nl - pos);
    pos = nl + 1;
    return s;
  }
  const char* take(std::size_t n, const std::string& what) {
    if (data.size() - pos < n) throw InputError(file + ": truncated " + what);
    const char* p = data.data() + pos;
    pos += n;
    return p;
  }
};

}  // namespace

void write_splats_ply(const SplatSet& s, const std::filesystem::path& path) {
  std::string buf = "ply\nformat binary_little_endian 1.0\nelement splat " + std::to_string(s.size()) + "\n";
  for (const auto& p : ply_properties()) buf += p + "\n";
  buf += "end_header\n";
  for (std::size_t i = 0; i < s.size(); ++i) {
    const SplatAnchor& a = s.anchors[i];
    const GaussianAttributes& g = s.attrs[i];
    put<std::uint32_t>(buf, a.face_id);
    for (double k : a.k_logits) put<float>(buf, static_cast<float>(k));
    put<float>(buf, static_cast<float>(a.l));
    for (int c = 0; c < 3; ++c) put<float>(buf, static_cast<float>(g.log_scale[c]));
    for (int c = 0; c < 4; ++c) put<float>(buf, static_cast<float>(g.rotation[c]));
    put<float>(buf, static_cast<float>(g.opacity_logit));
    for (double v : g.sh) put<float>(buf, static_cast<float>(v));
    put<std::uint8_t>(buf, static_cast<std::uint8_t>(a.origin));
  }
  write_binary(path, buf);
}

SplatSet read_splats_ply(const std::filesystem::path& path) {
  const std::string data = read_binary(path);
  Cursor cur{data, 0, path.string()};
  if (cur.line("header") != "ply") throw InputError(path.string() + ": not a PLY file");
  if (cur.line("header") != "format binary_little_endian 1.0") {
    throw InputError(path.string() + ": header line 2: expected binary_little_endian 1.0");
  }
  const std::string elem = cur.line("header");
  std::size_t count = 0;
  if (std::sscanf(elem.c_str(), "element splat %zu", &count) != 1) {
    throw InputError(path.string() + ": header line 3: expected 'element splat <count>'");
  }
  const auto props = ply_properties();
  for (std::size_t i = 0; i < props.size(); ++i) {
    const std::string l = cur.line("header");
    if (l != props[i]) {
      throw InputError(path.string() + ": header line " + std::to_string(i + 4) + ": expected '" + props[i] +
                       "', found '" + l + "'");
    }
  }
  if (cur.line("header") != "end_header") throw InputError(path.string() + ": missing end_header");

  SplatSet s;
  for (std::size_t i = 0; i < count; ++i) {
    const char* p = cur.take(kPlyRecord, "splat record " + std::to_string(i) + " of " + std::to_string(count));
    SplatAnchor a;
    GaussianAttributes g;
    a.face_id = get<std::uint32_t>(p);
    p += 4;
    auto f = [&]() {
      const double v = get<float>(p);
      p += 4;
      return v;
    };
    for (double& k : a.k_logits) k = f();
    a.l = f();
    for (int c = 0; c < 3; ++c) g.log_scale[c] = f();
    for (int c = 0; c < 4; ++c) g.rotation[c] = f();
    g.opacity_logit = f();
    for (double& v : g.sh) v = f();
    const std::uint8_t origin = get<std::uint8_t>(p);
    if (origin > 1) throw InputError(path.string() + ": splat " + std::to_string(i) + " has invalid origin flag");
    a.origin = static_cast<SplatOrigin>(origin);
    s.push_back(a, g);
  }
  if (!cur.at_end()) throw InputError(path.string() + ": trailing bytes after " + std::to_string(count) + " splats");
  return s;
}

void write_predictor(const AttributePredictor& pred, const std::filesystem::path& path) {
  json layers = json::array();
  for (const auto& b : AttributePredictor::layout()) layers.push_back(json{{"name", b.name}, {"shape", b.shape}});
  json header{{"dtype", "float64"}, {"count", pred.params().size()}, {"layers", layers}};
  std::string buf = std::string(kPredictorMagic) + "\n" + header.dump() + "\n";
  for (double v : pred.params()) put<double>(buf, v);
  write_binary(path, buf);
}

AttributePredictor read_predictor(const std::filesystem::path& path) {
  const std::string data = read_binary(path);
  Cursor cur{data, 0, path.string()};
  if (cur.line("magic") != kPredictorMagic) throw InputError(path.string() + ": bad magic line");
  json header;
  try {
    header = json::parse(cur.line("header"));
  } catch (const json::exception& e) {
    throw InputError(path.string() + ": bad JSON header (" + e.what() + ")");
  }
  const auto& layout = AttributePredictor::layout();
  if (!header.contains("layers") || header["layers"].size() != layout.size()) {
    throw InputError(path.string() + ": layer list does not match the predictor architecture");
  }
  for (std::size_t i = 0; i < layout.size(); ++i) {
    const json& l = header["layers"][i];
    if (l.value("name", "") != layout[i].name || l.value("shape", std::vector<int>{}) != layout[i].shape) {
      throw InputError(path.string() + ": layer " + std::to_string(i) + " expected " + layout[i].name);
    }
  }
  AttributePredictor pred;
  auto& params = pred.params();
  const char* p = cur.take(params.size() * sizeof(double), "weights");
  for (std::size_t i = 0; i < params.size(); ++i) params[i] = get<double>(p + i * sizeof(double));
  if (!cur.at_end()) throw InputError(path.string() + ": trailing bytes after weights");
  return pred;
}

namespace {

void put_section(std::string& buf, const char* tag, const std::string& payload) {
  buf.append(tag, 4);
  put<std::uint64_t>(buf, payload.size());
  buf += payload;
}

std::string pose_payload(const std::vector<PoseParams>& poses) {
  json frames = json::array();
  for (const auto& p : poses) {
    json theta = json::array();
    for (const auto& t : p.theta) theta.push_back({t.x(), t.y(), t.z()});
    frames.push_back(json{{"beta", p.beta},
                          {"psi", p.psi},
                          {"theta", theta},
                          {"global_rot", {p.global_rot[0], p.global_rot[1], p.global_rot[2], p.global_rot[3]}},
                          {"global_trans", {p.global_trans.x(), p.global_trans.y(), p.global_trans.z()}}});
  }
  return frames.dump();
}

std::vector<PoseParams> parse_pose_payload(const std::string& text, const std::string& where) {
  std::vector<PoseParams> out;
  try {
    for (const auto& f : json::parse(text)) {
      PoseParams p;
      p.beta = f.at("beta").get<std::vector<double>>();
      p.psi = f.at("psi").get<std::vector<double>>();
      for (const auto& t : f.at("theta")) p.theta.emplace_back(t[0].get<double>(), t[1].get<double>(), t[2].get<double>());
      const auto& q = f.at("global_rot");
      p.global_rot = Quat(q[0].get<double>(), q[1].get<double>(), q[2].get<double>(), q[3].get<double>());
      const auto& t = f.at("global_trans");
      p.global_trans = Vec3(t[0].get<double>(), t[1].get<double>(), t[2].get<double>());
      out.push_back(std::move(p));
    }
  } catch (const json::exception& e) {
    throw InputError(where + ": section POSE is malformed (" + e.what() + ")");
  }
  return out;
}

}  // namespace

void save_checkpoint(const TrainState& src, const std::filesystem::path& dir) {
  TrainState state = src;
  compact_state(state);
  std::filesystem::create_directories(dir);
  const AvatarModel& m = state.model;
  save_rig(m.tmpl, dir / "rig.json");
  write_splats_ply(m.splats, dir / "splats.ply");
  write_predictor(m.predictor, dir / "predictor.bin");

  std::string buf = std::string(kStateMagic) + "\n";
  json meta{{"iteration", state.iteration},
            {"adam_step", state.adam.step},
            {"splat_count", m.splats.size()},
            {"use_predictor", m.use_predictor},
            {"s_max", {m.limits.s_max.body, m.limits.s_max.head, m.limits.s_max.hands}},
            {"l_max", m.limits.l_max},
            {"disp_caps", {m.disp_caps.body, m.disp_caps.head, m.disp_caps.hands}}};
  put_section(buf, "META", meta.dump());
  std::string disp;
  put<std::uint64_t>(disp, m.displacement.d.size());
  for (const auto& d : m.displacement.d) {
    for (int c = 0; c < 3; ++c) put<double>(disp, d[c]);
  }
  put_section(buf, "DISP", disp);
  put_section(buf, "POSE", pose_payload(state.poses));
  std::string adam;
  put<std::uint32_t>(adam, static_cast<std::uint32_t>(state.adam.groups.size()));
  for (const auto& g : state.adam.groups) {
    put<std::uint32_t>(adam, static_cast<std::uint32_t>(g.name.size()));
    adam += g.name;
    put<std::uint64_t>(adam, g.m.size());
    for (double v : g.m) put<double>(adam, v);
    for (double v : g.v) put<double>(adam, v);
  }
  put_section(buf, "ADAM", adam);
  std::string acc;
  put<std::uint64_t>(acc, state.accumulator.sum.size());
  for (double v : state.accumulator.sum) put<double>(acc, v);
  for (std::uint32_t c : state.accumulator.count) put<std::uint32_t>(acc, c);
  put_section(buf, "ACCM", acc);
  put_section(buf, "END ", "");
  write_binary(dir / "state.bin", buf);
}

TrainState load_checkpoint(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw InputError("checkpoint directory not found: " + dir.string());
  TrainState state;
  AvatarModel& m = state.model;
  m.tmpl = load_rig(dir / "rig.json");
  m.splats = read_splats_ply(dir / "splats.ply");
  m.predictor = read_predictor(dir / "predictor.bin");
  for (std::size_t i = 0; i < m.splats.size(); ++i) {
    if (m.splats.anchors[i].face_id >= m.tmpl.faces.size()) {
      throw InputError((dir / "splats.ply").string() + ": splat " + std::to_string(i) + " references face " +
                       std::to_string(m.splats.anchors[i].face_id) + " outside the rig");
    }
  }

  const std::filesystem::path state_path = dir / "state.bin";
  const std::string data = read_binary(state_path);
  const std::string where = state_path.string();
  Cursor cur{data, 0, where};
  if (cur.line("magic line") != kStateMagic) throw InputError(where + ": bad magic line");
  const char* order[] = {"META", "DISP", "POSE", "ADAM", "ACCM", "END "};
  for (const char* tag : order) {
    const std::string name = std::string(tag).substr(0, std::string(tag).find_last_not_of(' ') + 1);
    if (cur.at_end()) throw InputError(where + ": truncated, missing section " + name);
    const char* hdr = cur.take(12, "header of section " + name);
    if (std::string(hdr, 4) != tag) {
      throw InputError(where + ": expected section " + name + ", found '" + std::string(hdr, 4) + "'");
    }
    const std::uint64_t len = get<std::uint64_t>(hdr + 4);
    const std::string payload(cur.take(len, "section " + name), len);
    const std::string sec = where + " section " + name;
    if (name == "META") {
      json meta;
      try {
        meta = json::parse(payload);
        state.iteration = meta.at("iteration").get<long>();
        state.adam.step = meta.at("adam_step").get<long>();
        if (meta.at("splat_count").get<std::size_t>() != m.splats.size()) {
          throw InputError(sec + ": splat count disagrees with splats.ply");
        }
        m.use_predictor = meta.at("use_predictor").get<bool>();
        const auto s = meta.at("s_max").get<std::vector<double>>();
        const auto c = meta.at("disp_caps").get<std::vector<double>>();
        m.limits.s_max = {s.at(0), s.at(1), s.at(2)};
        m.limits.l_max = meta.at("l_max").get<double>();
        m.disp_caps = {c.at(0), c.at(1), c.at(2)};
      } catch (const json::exception& e) {
        throw InputError(sec + " is malformed (" + e.what() + ")");
      }
    } else if (name == "DISP") {
      Cursor pc{payload, 0, sec};
      const auto n = get<std::uint64_t>(pc.take(8, "count"));
      if (n != m.tmpl.original_vertex_count) throw InputError(sec + ": size disagrees with the rig");
      m.displacement.d.resize(n);
      for (auto& d : m.displacement.d) {
        for (int c = 0; c < 3; ++c) d[c] = get<double>(pc.take(8, "values"));
      }
    } else if (name == "POSE") {
      state.poses = parse_pose_payload(payload, where);
    } else if (name == "ADAM") {
      Cursor pc{payload, 0, sec};
      const auto groups = get<std::uint32_t>(pc.take(4, "group count"));
      for (std::uint32_t gi = 0; gi < groups; ++gi) {
        AdamMoments g;
        const auto nl = get<std::uint32_t>(pc.take(4, "group name"));
        g.name.assign(pc.take(nl, "group name"), nl);
        const auto n = get<std::uint64_t>(pc.take(8, "group size"));
        g.m.resize(n);
        g.v.resize(n);
        for (auto& v : g.m) v = get<double>(pc.take(8, "moments of " + g.name));
        for (auto& v : g.v) v = get<double>(pc.take(8, "moments of " + g.name));
        state.adam.groups.push_back(std::move(g));
      }
    } else if (name == "ACCM") {
      Cursor pc{payload, 0, sec};
      const auto n = get<std::uint64_t>(pc.take(8, "count"));
      state.accumulator.resize(n);
      for (auto& v : state.accumulator.sum) v = get<double>(pc.take(8, "sums"));
      for (auto& c : state.accumulator.count) c = get<std::uint32_t>(pc.take(4, "counts"));
    }
  }
  m.refresh();
  return state;
}

}  // namespace signsplat
