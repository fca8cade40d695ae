#pragma once

// GridStack: dominoes on a heightmap, picked and placed by spatial actions.
//
// The workspace is a centered square so every quarter turn about the image
// center maps it onto itself, which makes rewards and dynamics exactly
// invariant under C4 (tested exhaustively on the tiny configuration).
//
// Orientation index: 0 = horizontal (cells (r,c),(r,c+1)), 1 = vertical
// (cells (r,c),(r+1,c)). A quarter turn swaps them, a half turn keeps them,
// so orientations live in C4/C2 like a two-finger gripper.
//
// Pick at (x, theta) succeeds when the topmost domino covering x has
// orientation theta and is also topmost on its other cell.
// Place at (x, theta) considers the footprints {x, x+d} and {x, x-d}, d the
// unit step of theta. A footprint is valid when both cells lie in the
// workspace and have equal height below the limit. One valid footprint is
// used directly; with two, the one that coincides with the footprint of a
// topmost domino is used if exactly one does, otherwise nothing happens.
// Both rules treat x symmetrically within the domino, which the invariance
// needs: a half turn exchanges x+d and x-d.

#include <cstdint>
#include <map>
#include <stdexcept>
#include <optional>
#include <string>
#include <vector>

#include "steerq/group.hpp"
#include "steerq/spatial.hpp"

namespace steerq {

struct EnvConfig {
  int grid_size = 16;
  int workspace = 8;
  int dominoes = 2;
  int height_limit = 2;
  int step_limit = 10;
  int hand_patch = 7;

  /// Throws std::invalid_argument describing the first bad field.
  void validate() const;
  int workspace_lo() const { return (grid_size - workspace) / 2; }
  int workspace_hi() const { return workspace_lo() + workspace - 1; }
  bool in_workspace(Cell c) const {
    return c.row >= workspace_lo() && c.row <= workspace_hi() && c.col >= workspace_lo() &&
           c.col <= workspace_hi();
  }
  static constexpr int theta_count = 2;
};

struct Domino {
  Cell a;  ///< lexicographically smaller cell
  Cell b;
  int level = 0;

  int orientation() const { return a.row == b.row ? 0 : 1; }
  bool covers(Cell c) const { return c == a || c == b; }
  friend auto operator<=>(const Domino&, const Domino&) = default;
};

/// Domino with canonical cell order; cells must be 4-adjacent.
Domino make_domino(Cell p, Cell q, int level);
Cell orientation_step(int theta);

struct GridState {
  std::vector<Domino> dominoes;  ///< sorted, only those on the grid
  std::vector<int> heights;      ///< grid_size^2 stack heights, row-major
  bool holding = false;
  int steps = 0;

  int height(Cell c, int grid_size) const { return heights[c.row * grid_size + c.col]; }
  friend bool operator==(const GridState&, const GridState&) = default;
};

struct Transition {
  GridState s;
  SpatialAction a;
  double r = 0.0;
  GridState s_next;
  bool done = false;
  bool expert = false;
};

struct Observation {
  Image heightmap;
  Image hand;
};

class GridStack {
 public:
  explicit GridStack(EnvConfig config);

  const EnvConfig& config() const { return config_; }

  /// Random layout with every domino at level 0.
  GridState reset(std::uint64_t seed) const;
  /// Builds a consistent state from a domino list (heights derived).
  GridState make_state(std::vector<Domino> dominoes, bool holding, int steps = 0) const;
  Transition step(const GridState& s, const SpatialAction& a) const;
  /// Dynamics without step bookkeeping; returns true when the action had an effect.
  bool apply(GridState& s, const SpatialAction& a) const;
  Observation observe(const GridState& s) const;
  SpatialAction expert_action(const GridState& s) const;

  bool is_goal(const GridState& s) const;
  /// Throws std::logic_error when heights disagree with the domino list or
  /// dominoes overlap / leave the workspace.
  void check_consistency(const GridState& s) const;

  /// All actions at a state: every workspace cell and orientation, with the
  /// pick/place kind fixed by the hand.
  std::vector<SpatialAction> actions(const GridState& s) const;
  int action_count() const { return config_.workspace * config_.workspace * EnvConfig::theta_count; }
  /// Flat index theta * W^2 + (row - lo) * W + (col - lo).
  int action_index(const SpatialAction& a) const;
  SpatialAction action_at(int index, bool holding) const;

 private:
  std::optional<std::size_t> topmost_at(const GridState& s, Cell c) const;
  bool try_pick(GridState& s, const SpatialAction& a) const;
  bool try_place(GridState& s, const SpatialAction& a) const;
  void add(GridState& s, const Domino& d) const;

  EnvConfig config_;
};

/// g . s about the grid center; the hand is unchanged.
GridState act(const GroupElement& g, const GridState& s, const EnvConfig& config);
SpatialAction act(const GroupElement& g, const SpatialAction& a, const EnvConfig& config);

/// Exhaustive reachable state space of a small configuration. Goal states
/// are absorbing: every action loops back with reward 0 (the reward was
/// granted on entry). No step limit applies in the tables.
struct SmallMdp {
  EnvConfig config;
  std::vector<GridState> states;   ///< steps fields are zero
  std::vector<bool> goal;
  int actions = 0;
  std::vector<int> next;           ///< [state * actions + action]
  std::vector<double> reward;

  int index_of(const GridState& s) const;  ///< -1 when unknown
  std::map<std::pair<std::vector<Domino>, bool>, int> lookup;
};

/// Thrown by enumerate_small_mdp when the reachable set exceeds the cap.
struct StateCapExceeded : std::runtime_error {
  StateCapExceeded(std::size_t reached, std::size_t cap);
  std::size_t reached;
};

SmallMdp enumerate_small_mdp(const EnvConfig& config, std::size_t cap = 2'000'000);

/// Every valid level-0 layout of config.dominoes dominoes (reset's support).
std::vector<GridState> initial_states(const GridStack& env);

}  // namespace steerq
