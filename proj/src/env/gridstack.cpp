#include <algorithm>
#include <deque>
#include <stdexcept>
#include <string>

#include "steerq/env.hpp"
#include "steerq/rng.hpp"

namespace steerq {

namespace {

Cell operator+(Cell a, Cell b) { return {a.row + b.row, a.col + b.col}; }
Cell operator-(Cell a, Cell b) { return {a.row - b.row, a.col - b.col}; }

}  // namespace

void EnvConfig::validate() const {
  if (grid_size < 2) throw std::invalid_argument("env.grid_size must be at least 2");
  if (workspace < 2 || workspace > grid_size) {
    throw std::invalid_argument("env.workspace must lie in [2, grid_size]");
  }
  if ((grid_size - workspace) % 2 != 0) {
    throw std::invalid_argument("env.workspace must have the parity of grid_size so it is centered");
  }
  if (dominoes < 1) throw std::invalid_argument("env.dominoes must be positive");
  if (height_limit < 2) throw std::invalid_argument("env.height_limit must be at least 2");
  if (step_limit < 1) throw std::invalid_argument("env.step_limit must be positive");
  if (hand_patch < 3 || hand_patch % 2 == 0) {
    throw std::invalid_argument("env.hand_patch must be odd and at least 3");
  }
}

Domino make_domino(Cell p, Cell q, int level) {
  const Cell d = q - p;
  if (std::abs(d.row) + std::abs(d.col) != 1) {
    throw std::invalid_argument("domino cells must be 4-adjacent");
  }
  if (q < p) std::swap(p, q);
  return {p, q, level};
}

Cell orientation_step(int theta) { return theta == 0 ? Cell{0, 1} : Cell{1, 0}; }

GridStack::GridStack(EnvConfig config) : config_(config) { config_.validate(); }

void GridStack::add(GridState& s, const Domino& d) const {
  s.dominoes.insert(std::upper_bound(s.dominoes.begin(), s.dominoes.end(), d), d);
  s.heights[d.a.row * config_.grid_size + d.a.col] = d.level + 1;
  s.heights[d.b.row * config_.grid_size + d.b.col] = d.level + 1;
}

GridState GridStack::make_state(std::vector<Domino> dominoes, bool holding, int steps) const {
  GridState s;
  s.heights.assign(static_cast<std::size_t>(config_.grid_size) * config_.grid_size, 0);
  s.holding = holding;
  s.steps = steps;
  std::sort(dominoes.begin(), dominoes.end(),
            [](const Domino& x, const Domino& y) { return x.level < y.level; });
  for (const Domino& d : dominoes) add(s, d);
  check_consistency(s);
  return s;
}

GridState GridStack::reset(std::uint64_t seed) const {
  Rng rng = derive_rng(seed, 0x6e76);
  const int lo = config_.workspace_lo(), w = config_.workspace;
  for (int attempt = 0; attempt < 1000; ++attempt) {
    std::vector<Domino> placed;
    bool ok = true;
    for (int i = 0; i < config_.dominoes && ok; ++i) {
      const int theta = uniform_int(rng, 2);
      const Cell step = orientation_step(theta);
      const Cell a{lo + uniform_int(rng, w - step.row), lo + uniform_int(rng, w - step.col)};
      const Domino d = make_domino(a, a + step, 0);
      for (const Domino& o : placed)
        if (o.covers(d.a) || o.covers(d.b)) ok = false;
      placed.push_back(d);
    }
    if (ok) return make_state(placed, false, 0);
  }
  throw std::runtime_error("reset: could not place " + std::to_string(config_.dominoes) +
                           " dominoes in a " + std::to_string(w) + "x" + std::to_string(w) +
                           " workspace");
}

void GridStack::check_consistency(const GridState& s) const {
  const int n = config_.grid_size;
  std::vector<int> h(static_cast<std::size_t>(n) * n, 0);
  std::vector<Domino> sorted = s.dominoes;
  std::sort(sorted.begin(), sorted.end(),
            [](const Domino& x, const Domino& y) { return x.level < y.level; });
  for (const Domino& d : sorted) {
    if (!config_.in_workspace(d.a) || !config_.in_workspace(d.b)) {
      throw std::logic_error("domino outside the workspace");
    }
    int& ha = h[d.a.row * n + d.a.col];
    int& hb = h[d.b.row * n + d.b.col];
    if (ha != d.level || hb != d.level) throw std::logic_error("domino not resting on its support");
    ha = hb = d.level + 1;
  }
  if (h != s.heights) throw std::logic_error("heightmap disagrees with the domino list");
  if (!std::is_sorted(s.dominoes.begin(), s.dominoes.end())) {
    throw std::logic_error("domino list not in canonical order");
  }
  const int total = static_cast<int>(s.dominoes.size()) + (s.holding ? 1 : 0);
  if (total != config_.dominoes) throw std::logic_error("domino count changed");
}

std::optional<std::size_t> GridStack::topmost_at(const GridState& s, Cell c) const {
  const int h = s.height(c, config_.grid_size);
  if (h == 0) return std::nullopt;
  for (std::size_t i = 0; i < s.dominoes.size(); ++i)
    if (s.dominoes[i].covers(c) && s.dominoes[i].level == h - 1) return i;
  return std::nullopt;
}

bool GridStack::try_pick(GridState& s, const SpatialAction& a) const {
  if (s.holding) return false;
  const auto idx = topmost_at(s, a.x);
  if (!idx) return false;
  const Domino d = s.dominoes[*idx];
  if (d.orientation() != a.theta) return false;
  if (s.height(d.a, config_.grid_size) != d.level + 1 ||
      s.height(d.b, config_.grid_size) != d.level + 1) {
    return false;
  }
  s.dominoes.erase(s.dominoes.begin() + static_cast<std::ptrdiff_t>(*idx));
  s.heights[d.a.row * config_.grid_size + d.a.col] = d.level;
  s.heights[d.b.row * config_.grid_size + d.b.col] = d.level;
  s.holding = true;
  return true;
}

bool GridStack::try_place(GridState& s, const SpatialAction& a) const {
  if (!s.holding) return false;
  const Cell d = orientation_step(a.theta);
  std::vector<Domino> valid;
  for (const Cell other : {a.x + d, a.x - d}) {
    if (!config_.in_workspace(a.x) || !config_.in_workspace(other)) continue;
    const int h = s.height(a.x, config_.grid_size);
    if (s.height(other, config_.grid_size) != h || h >= config_.height_limit) continue;
    valid.push_back(make_domino(a.x, other, h));
  }
  if (valid.empty()) return false;
  Domino chosen = valid[0];
  if (valid.size() == 2) {
    int matches = 0;
    for (const Domino& v : valid) {
      const auto top = topmost_at(s, v.a);
      if (top && s.dominoes[*top].a == v.a && s.dominoes[*top].b == v.b) {
        chosen = v;
        ++matches;
      }
    }
    if (matches != 1) return false;
  }
  s.holding = false;
  add(s, chosen);
  return true;
}

bool GridStack::apply(GridState& s, const SpatialAction& a) const {
  if (!config_.in_workspace(a.x) || a.theta < 0 || a.theta >= EnvConfig::theta_count) {
    throw std::invalid_argument("action outside the workspace or orientation range");
  }
  const ActionKind expected = s.holding ? ActionKind::Place : ActionKind::Pick;
  if (a.kind != expected) return false;
  return a.kind == ActionKind::Pick ? try_pick(s, a) : try_place(s, a);
}

Transition GridStack::step(const GridState& s, const SpatialAction& a) const {
  Transition t;
  t.s = s;
  t.a = a;
  t.s_next = s;
  apply(t.s_next, a);
  check_consistency(t.s_next);
  t.s_next.steps = s.steps + 1;
  const bool goal = is_goal(t.s_next);
  t.r = goal ? 1.0 : 0.0;
  t.done = goal || t.s_next.steps >= config_.step_limit;
  return t;
}

bool GridStack::is_goal(const GridState& s) const {
  for (const Domino& top : s.dominoes) {
    if (top.level == 0) continue;
    for (const Domino& below : s.dominoes)
      if (below.level == top.level - 1 && below.a == top.a && below.b == top.b) return true;
  }
  return false;
}

Observation GridStack::observe(const GridState& s) const {
  const int n = config_.grid_size, p = config_.hand_patch;
  Observation o{Image(n, n), Image(p, p)};
  for (int i = 0; i < n * n; ++i) o.heightmap.values()[i] = s.heights[i];
  if (s.holding) {
    // gripper frame: the held domino is always aligned with the fingers
    o.hand.at(p / 2, p / 2) = 1.0;
    o.hand.at(p / 2, p / 2 + 1) = 1.0;
  }
  return o;
}

SpatialAction GridStack::expert_action(const GridState& s) const {
  if (!s.holding) {
    for (const Domino& d : s.dominoes) {  // sorted: smallest top-left cell first
      if (s.height(d.a, config_.grid_size) != d.level + 1 ||
          s.height(d.b, config_.grid_size) != d.level + 1) {
        continue;
      }
      return {d.a, d.orientation(), ActionKind::Pick};
    }
    throw std::logic_error("expert_action: nothing can be picked");
  }
  for (const Domino& d : s.dominoes) {
    if (d.level + 1 >= config_.height_limit) continue;
    if (s.height(d.a, config_.grid_size) != d.level + 1 ||
        s.height(d.b, config_.grid_size) != d.level + 1) {
      continue;
    }
    return {d.a, d.orientation(), ActionKind::Place};
  }
  throw std::logic_error("expert_action: no place target");
}

std::vector<SpatialAction> GridStack::actions(const GridState& s) const {
  std::vector<SpatialAction> out;
  out.reserve(action_count());
  for (int i = 0; i < action_count(); ++i) out.push_back(action_at(i, s.holding));
  return out;
}

int GridStack::action_index(const SpatialAction& a) const {
  if (!config_.in_workspace(a.x) || a.theta < 0 || a.theta >= EnvConfig::theta_count) {
    throw std::out_of_range("action_index: action outside the workspace");
  }
  const int w = config_.workspace, lo = config_.workspace_lo();
  return a.theta * w * w + (a.x.row - lo) * w + (a.x.col - lo);
}

SpatialAction GridStack::action_at(int index, bool holding) const {
  const int w = config_.workspace, lo = config_.workspace_lo();
  if (index < 0 || index >= action_count()) throw std::out_of_range("action_at");
  const int theta = index / (w * w), rest = index % (w * w);
  return {{lo + rest / w, lo + rest % w}, theta, holding ? ActionKind::Place : ActionKind::Pick};
}

GridState act(const GroupElement& g, const GridState& s, const EnvConfig& config) {
  const int n = config.grid_size;
  const PlanarElement pg = PlanarElement::rotation(g);
  GridState out;
  out.holding = s.holding;
  out.steps = s.steps;
  out.heights.assign(s.heights.size(), 0);
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c) {
      const Cell q = act_on_pixel(pg, {r, c}, n, n);
      out.heights[q.row * n + q.col] = s.heights[r * n + c];
    }
  for (const Domino& d : s.dominoes) {
    out.dominoes.push_back(
        make_domino(act_on_pixel(pg, d.a, n, n), act_on_pixel(pg, d.b, n, n), d.level));
  }
  std::sort(out.dominoes.begin(), out.dominoes.end());
  return out;
}

SpatialAction act(const GroupElement& g, const SpatialAction& a, const EnvConfig& config) {
  return act_on_action(PlanarElement::rotation(g), a, config.grid_size, EnvConfig::theta_count);
}

StateCapExceeded::StateCapExceeded(std::size_t reached_count, std::size_t cap)
    : std::runtime_error("reachable state count exceeded the cap of " + std::to_string(cap) +
                         " (reached " + std::to_string(reached_count) + ")"),
      reached(reached_count) {}

int SmallMdp::index_of(const GridState& s) const {
  const auto it = lookup.find({s.dominoes, s.holding});
  return it == lookup.end() ? -1 : it->second;
}

std::vector<GridState> initial_states(const GridStack& env) {
  const EnvConfig& cfg = env.config();
  std::vector<Domino> slots;
  for (int r = cfg.workspace_lo(); r <= cfg.workspace_hi(); ++r)
    for (int c = cfg.workspace_lo(); c <= cfg.workspace_hi(); ++c)
      for (int theta = 0; theta < 2; ++theta) {
        const Cell b = Cell{r, c} + orientation_step(theta);
        if (cfg.in_workspace(b)) slots.push_back(make_domino({r, c}, b, 0));
      }
  std::vector<GridState> out;
  std::vector<Domino> chosen;
  // combinations of disjoint slots in increasing slot order
  auto recurse = [&](auto&& self, std::size_t from) -> void {
    if (static_cast<int>(chosen.size()) == cfg.dominoes) {
      out.push_back(env.make_state(chosen, false));
      return;
    }
    for (std::size_t i = from; i < slots.size(); ++i) {
      bool free = true;
      for (const Domino& d : chosen)
        if (d.covers(slots[i].a) || d.covers(slots[i].b)) free = false;
      if (!free) continue;
      chosen.push_back(slots[i]);
      self(self, i + 1);
      chosen.pop_back();
    }
  };
  recurse(recurse, 0);
  return out;
}

SmallMdp enumerate_small_mdp(const EnvConfig& config, std::size_t cap) {
  const GridStack env(config);
  SmallMdp mdp;
  mdp.config = config;
  mdp.actions = env.action_count();

  std::deque<int> frontier;
  auto intern = [&](GridState s) {
    s.steps = 0;
    const auto key = std::make_pair(s.dominoes, s.holding);
    const auto it = mdp.lookup.find(key);
    if (it != mdp.lookup.end()) return it->second;
    if (mdp.states.size() >= cap) throw StateCapExceeded(mdp.states.size() + 1, cap);
    const int id = static_cast<int>(mdp.states.size());
    mdp.lookup.emplace(key, id);
    mdp.goal.push_back(env.is_goal(s));
    mdp.states.push_back(std::move(s));
    frontier.push_back(id);
    return id;
  };
  for (const GridState& s : initial_states(env)) intern(s);

  while (!frontier.empty()) {
    const int id = frontier.front();
    frontier.pop_front();
    // tables are filled in state order, so grow them as ids appear
    mdp.next.resize(mdp.states.size() * mdp.actions, -1);
    mdp.reward.resize(mdp.states.size() * mdp.actions, 0.0);
    const GridState s = mdp.states[id];
    for (int a = 0; a < mdp.actions; ++a) {
      const std::size_t slot = static_cast<std::size_t>(id) * mdp.actions + a;
      if (mdp.goal[id]) {
        mdp.next[slot] = id;
        continue;
      }
      GridState t = s;
      env.apply(t, env.action_at(a, s.holding));
      const int nid = intern(t);
      mdp.next.resize(mdp.states.size() * mdp.actions, -1);
      mdp.reward.resize(mdp.states.size() * mdp.actions, 0.0);
      mdp.next[slot] = nid;
      mdp.reward[slot] = mdp.goal[nid] ? 1.0 : 0.0;
    }
  }
  return mdp;
}

}  // namespace steerq
