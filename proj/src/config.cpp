#include "signsplat/config.hpp"

#include <algorithm>
#include <cerrno>
#include <cstdlib>
#include <sstream>

#include "signsplat/io.hpp"

namespace signsplat {

namespace {

using T = ConfigType;

const std::vector<std::string> kTrain = {"train"};
const std::vector<std::string> kTrainEval = {"train", "eval"};

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

bool parse_real(const std::string& s, double& out) {
  if (s.empty()) return false;
  errno = 0;
  char* end = nullptr;
  out = std::strtod(s.c_str(), &end);
  return errno == 0 && end == s.c_str() + s.size() && std::isfinite(out);
}

bool parse_integer(const std::string& s, long& out) {
  if (s.empty()) return false;
  errno = 0;
  char* end = nullptr;
  out = std::strtol(s.c_str(), &end, 10);
  return errno == 0 && end == s.c_str() + s.size();
}

bool parse_list(const std::string& s, std::vector<double>& out) {
  out.clear();
  if (s.size() < 2 || s.front() != '[' || s.back() != ']') return false;
  const std::string body = trim(s.substr(1, s.size() - 2));
  if (body.empty()) return true;
  std::stringstream ss(body);
  std::string item;
  while (std::getline(ss, item, ',')) {
    double v;
    if (!parse_real(trim(item), v)) return false;
    out.push_back(v);
  }
  return true;
}

const char* type_name(ConfigType t) {
  switch (t) {
    case T::Real: return "real";
    case T::Integer: return "integer";
    case T::Boolean: return "bool";
    case T::String: return "string";
    case T::RealList: return "list";
  }
  return "";
}

// Strips an unquoted trailing '#' comment.
std::string strip_comment(const std::string& line) {
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '"') quoted = !quoted;
    if (line[i] == '#' && !quoted) return line.substr(0, i);
  }
  return line;
}

std::string unquote(const std::string& v) {
  if (v.size() >= 2 && v.front() == '"' && v.back() == '"') return v.substr(1, v.size() - 2);
  return v;
}

}  // namespace

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = {
      {"data.dataset", T::String, "", "training dataset directory", kTrainEval},
      {"data.heldout", T::String, "", "held-out dataset directory (default <dataset>/heldout when present)",
       kTrainEval},
      {"output.dir", T::String, "out", "checkpoint output directory", kTrain},
      {"output.log", T::String, "", "metrics CSV path (default <output.dir>/metrics.csv)", kTrain},
      {"trainer.iterations", T::Integer, "2000", "optimizer steps", kTrain},
      {"trainer.batch", T::Integer, "4", "frames accumulated per step", kTrain},
      {"trainer.seed", T::Integer, "0", "seed for initialisation and frame order", kTrain},
      {"trainer.log_interval", T::Integer, "10", "iterations between CSV rows", kTrain},
      {"trainer.checkpoint_interval", T::Integer, "0", "iterations between intermediate checkpoints (0 = off)",
       kTrain},
      {"trainer.pose_refinement", T::Boolean, "true", "refine per-frame theta and psi", kTrain},
      {"trainer.use_predictor", T::Boolean, "true", "enable the pose-dependent attribute predictor", kTrain},
      {"trainer.initial_opacity", T::Real, "0.3", "opacity of initial splats", kTrain},
      {"loss.l1", T::Real, "0.8", "L1 weight", kTrain},
      {"loss.dssim", T::Real, "0.2", "D-SSIM weight", kTrain},
      {"lr.opacity", T::Real, "0.01", "opacity learning rate", kTrain},
      {"lr.scale", T::Real, "0.005", "scale learning rate", kTrain},
      {"lr.rotation", T::Real, "0.005", "rotation learning rate", kTrain},
      {"lr.sh", T::Real, "0.0025", "SH learning rate", kTrain},
      {"lr.anchor", T::Real, "0.001", "anchor k/l learning rate", kTrain},
      {"lr.displacement", T::Real, "0.0001", "vertex displacement learning rate", kTrain},
      {"lr.predictor", T::Real, "0.001", "predictor learning rate", kTrain},
      {"lr.pose", T::Real, "0.00001", "pose refinement learning rate", kTrain},
      {"reg.enabled", T::Boolean, "true", "neighbourhood variance regularization", kTrain},
      {"reg.scale", T::Real, "0.1", "scale variance weight", kTrain},
      {"reg.rotation", T::Real, "0.05", "rotation variance weight", kTrain},
      {"reg.color", T::Real, "0.01", "colour variance weight", kTrain},
      {"reg.opacity", T::Real, "0.01", "opacity variance weight", kTrain},
      {"reg.displacement", T::Real, "1.0", "displacement penalty weight", kTrain},
      {"reg.sh_schedule", T::RealList, "[0.7, 0.8, 0.9]", "iteration fractions raising the SH degree", kTrain},
      {"reg.radius_body", T::Real, "0.02", "body neighbourhood radius, meters", kTrain},
      {"reg.radius_head", T::Real, "0.008", "head neighbourhood radius, meters", kTrain},
      {"reg.radius_hands", T::Real, "0.008", "hand neighbourhood radius, meters", kTrain},
      {"density.enabled", T::Boolean, "true", "densification and pruning", kTrain},
      {"density.grad_threshold", T::Real, "0.0002", "mean screen-space gradient threshold, normalized device units", kTrain},
      {"density.interval", T::Integer, "500", "iterations between density steps", kTrain},
      {"density.start", T::Integer, "500", "first density iteration", kTrain},
      {"density.stop", T::Integer, "15000", "last density iteration", kTrain},
      {"density.max_splats", T::Integer, "200000", "active splat cap", kTrain},
      {"density.scale_divisor", T::Real, "1.6", "child scale divisor", kTrain},
      {"density.opacity_eps", T::Real, "0.005", "prune opacity threshold", kTrain},
      {"density.reset_opacity", T::Real, "0.1", "opacity given to pruned original splats", kTrain},
      {"limits.smax_body", T::Real, "0.05", "maximum body splat scale, meters", kTrain},
      {"limits.smax_head", T::Real, "0.02", "maximum head splat scale, meters", kTrain},
      {"limits.smax_hands", T::Real, "0.01", "maximum hand splat scale, meters", kTrain},
      {"limits.l_max", T::Real, "0.01", "maximum normal offset, meters", kTrain},
      {"limits.disp_body", T::Real, "0.02", "body displacement cap, meters", kTrain},
      {"limits.disp_head", T::Real, "0.01", "head displacement cap, meters", kTrain},
      {"limits.disp_hands", T::Real, "0.003", "hand displacement cap, meters", kTrain},
      {"render.sh_degree", T::Integer, "3", "SH degree used when rendering", {"render", "eval"}},
      {"fit2d.lr", T::Real, "0.001", "pose learning rate", {"fit2d"}},
      {"fit2d.steps", T::Integer, "500", "maximum optimizer steps", {"fit2d"}},
      {"fit2d.extrinsics", T::Boolean, "false", "jointly refine camera extrinsics", {"fit2d"}},
      {"stitch.omega", T::Real, "0.05", "maximum joint rotation per transition frame, radians", {"stitch"}},
      {"stitch.min_frames", T::Integer, "2", "minimum transition frames", {"stitch"}},
      {"synthetic.seed", T::Integer, "0", "scene seed", {"make-synthetic"}},
      {"synthetic.poses", T::Integer, "6", "training poses", {"make-synthetic"}},
      {"synthetic.cameras", T::Integer, "4", "training cameras", {"make-synthetic"}},
      {"synthetic.size", T::Integer, "128", "image width and height, pixels", {"make-synthetic"}},
      {"synthetic.heldout_frames", T::Integer, "6", "held-out frames", {"make-synthetic"}},
  };
  return keys;
}

std::size_t edit_distance(const std::string& a, const std::string& b) {
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1)});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

std::string suggest_key(const std::string& name) {
  std::string best;
  std::size_t best_d = std::string::npos;
  for (const auto& k : config_keys()) {
    const std::size_t d = edit_distance(name, k.name);
    if (d < best_d) {
      best_d = d;
      best = k.name;
    }
  }
  return best;
}

std::string config_help(const std::string& command) {
  std::string out;
  for (const auto& k : config_keys()) {
    if (std::find(k.commands.begin(), k.commands.end(), command) == k.commands.end()) continue;
    out += "  " + k.name + " (" + type_name(k.type) + ", default " +
           (k.default_value.empty() ? "\"\"" : k.default_value) + "): " + k.help + "\n";
  }
  return out;
}

Config::Config() {
  for (const auto& k : config_keys()) values_[k.name] = k.default_value;
}

Config Config::load(const std::filesystem::path& path) {
  Config c;
  c.merge_text(read_text_file(path), path.string());
  return c;
}

void Config::merge_text(const std::string& text, const std::string& origin) {
  std::stringstream ss(text);
  std::string line;
  std::string section;
  int lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    const std::string l = trim(strip_comment(line));
    if (l.empty()) continue;
    const std::string where = origin + ":" + std::to_string(lineno);
    if (l.front() == '[') {
      if (l.back() != ']') throw InputError(where + ": unterminated section header");
      section = trim(l.substr(1, l.size() - 2));
      continue;
    }
    const auto eq = l.find('=');
    if (eq == std::string::npos) throw InputError(where + ": expected 'key = value'");
    const std::string key = trim(l.substr(0, eq));
    const std::string full = section.empty() ? key : section + "." + key;
    try {
      set(full, trim(l.substr(eq + 1)));
    } catch (const InputError& e) {
      throw InputError(where + ": " + e.what());
    }
  }
}

const ConfigKey& Config::lookup(const std::string& key) const {
  for (const auto& k : config_keys()) {
    if (k.name == key) return k;
  }
  throw InputError("unknown config key '" + key + "' (did you mean '" + suggest_key(key) + "'?)");
}

void Config::set(const std::string& key, const std::string& value) {
  const ConfigKey& k = lookup(key);
  const std::string v = trim(value);
  bool ok = true;
  switch (k.type) {
    case T::Real: {
      double d;
      ok = parse_real(v, d);
      break;
    }
    case T::Integer: {
      long i;
      ok = parse_integer(v, i);
      break;
    }
    case T::Boolean: ok = v == "true" || v == "false"; break;
    case T::String: break;
    case T::RealList: {
      std::vector<double> l;
      ok = parse_list(v, l);
      break;
    }
  }
  if (!ok) throw InputError("config key '" + key + "' expects a " + type_name(k.type) + ", got '" + v + "'");
  values_[key] = k.type == T::String ? unquote(v) : v;
}

void Config::apply_override(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw InputError("override '" + assignment + "' is not key=value");
  set(trim(assignment.substr(0, eq)), assignment.substr(eq + 1));
}

const std::string& Config::raw(const std::string& key, ConfigType type) const {
  const ConfigKey& k = lookup(key);
  if (k.type != type) throw InputError("config key '" + key + "' is a " + type_name(k.type));
  return values_.at(key);
}

double Config::real(const std::string& key) const {
  double d = 0.0;
  parse_real(raw(key, T::Real), d);
  return d;
}

long Config::integer(const std::string& key) const {
  long i = 0;
  parse_integer(raw(key, T::Integer), i);
  return i;
}

bool Config::boolean(const std::string& key) const { return raw(key, T::Boolean) == "true"; }

std::string Config::string(const std::string& key) const { return raw(key, T::String); }

std::vector<double> Config::reals(const std::string& key) const {
  std::vector<double> l;
  parse_list(raw(key, T::RealList), l);
  return l;
}

std::string Config::dump() const {
  std::string out;
  std::string section;
  for (const auto& k : config_keys()) {
    const auto dot = k.name.find('.');
    const std::string sec = k.name.substr(0, dot);
    if (sec != section) {
      out += (out.empty() ? "[" : "\n[") + sec + "]\n";
      section = sec;
    }
    const std::string& v = values_.at(k.name);
    out += k.name.substr(dot + 1) + " = " + (k.type == T::String ? "\"" + v + "\"" : v) + "\n";
  }
  return out;
}

}  // namespace signsplat
