#include "signsplat/optim.hpp"

namespace signsplat {

AdamMoments& AdamState::group(const std::string& name) {
  for (auto& g : groups) {
    if (g.name == name) return g;
  }
  groups.push_back(AdamMoments{name, {}, {}});
  return groups.back();
}

const AdamMoments* AdamState::find(const std::string& name) const {
  for (const auto& g : groups) {
    if (g.name == name) return &g;
  }
  return nullptr;
}

void adam_update(std::span<double> params, std::span<const double> grads, AdamMoments& mom, double lr,
                 long t, const AdamConfig& cfg) {
  if (params.size() != grads.size()) throw InputError("adam: parameter and gradient sizes differ");
  mom.resize(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) adam_update(params[i], grads[i], mom.m[i], mom.v[i], lr, t, cfg);
}

const std::vector<std::pair<std::string, int>>& splat_groups() {
  static const std::vector<std::pair<std::string, int>> groups = {
      {"opacity", 1}, {"scale", 3}, {"rotation", 4}, {"sh", kShValues}, {"k_logits", 3}, {"l", 1}};
  return groups;
}

void compact_state(TrainState& state) {
  const std::vector<long> map = compact(state.model);
  const std::size_t n = state.model.splats.size();
  for (const auto& [name, width] : splat_groups()) {
    AdamMoments* g = nullptr;
    for (auto& grp : state.adam.groups) {
      if (grp.name == name) g = &grp;
    }
    if (!g) continue;
    AdamMoments out{name, std::vector<double>(n * width, 0.0), std::vector<double>(n * width, 0.0)};
    for (std::size_t old = 0; old < map.size(); ++old) {
      if (map[old] < 0) continue;
      for (int c = 0; c < width; ++c) {
        const std::size_t src = old * width + c;
        if (src < g->m.size()) {
          out.m[map[old] * width + c] = g->m[src];
          out.v[map[old] * width + c] = g->v[src];
        }
      }
    }
    *g = std::move(out);
  }
  GradAccumulator acc;
  acc.resize(n);
  for (std::size_t old = 0; old < map.size() && old < state.accumulator.sum.size(); ++old) {
    if (map[old] < 0) continue;
    acc.sum[map[old]] = state.accumulator.sum[old];
    acc.count[map[old]] = state.accumulator.count[old];
  }
  state.accumulator = std::move(acc);
}

}  // namespace signsplat
