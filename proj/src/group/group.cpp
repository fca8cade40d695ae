#include "steerq/group.hpp"

#include <stdexcept>
#include <string>

namespace steerq {

namespace {

int mod(int a, int n) { return ((a % n) + n) % n; }

void require_same_group(const GroupElement& a, const GroupElement& b) {
  if (!(a.group == b.group)) {
    throw std::invalid_argument("compose: elements of " + a.group.name() + " and " +
                                b.group.name());
  }
}

}  // namespace

Group Group::cyclic(int u) {
  if (u < 1) throw std::invalid_argument("Group::cyclic: order must be positive");
  return {u, false};
}

Group Group::dihedral_group(int u) {
  if (u < 1) throw std::invalid_argument("Group::dihedral_group: order must be positive");
  return {u, true};
}

std::string Group::name() const {
  return (dihedral ? "D" : "C") + std::to_string(rotations);
}

GroupElement GroupElement::rotation_by(Group g, int k) { return {mod(k, g.rotations), false, g}; }

GroupElement GroupElement::from_index(Group g, int index) {
  if (index < 0 || index >= g.order()) throw std::out_of_range("GroupElement::from_index");
  return {index % g.rotations, index >= g.rotations, g};
}

// (F^f1 R^k1)(F^f2 R^k2) = F^(f1^f2) R^(+-k1 + k2), since R^k F = F R^-k.
GroupElement compose(const GroupElement& a, const GroupElement& b) {
  require_same_group(a, b);
  const int k = (b.reflection ? -a.rotation : a.rotation) + b.rotation;
  return {mod(k, a.group.rotations), a.reflection != b.reflection, a.group};
}

GroupElement inverse(const GroupElement& a) {
  if (a.reflection) return a;  // reflections are involutions
  return {mod(-a.rotation, a.group.rotations), false, a.group};
}

std::vector<GroupElement> elements(Group g) {
  std::vector<GroupElement> out;
  out.reserve(g.order());
  for (int i = 0; i < g.order(); ++i) out.push_back(GroupElement::from_index(g, i));
  return out;
}

PlanarElement compose(const PlanarElement& a, const PlanarElement& b) {
  const Cell t = act_on_offset(a.rot, {b.shift_row, b.shift_col});
  return {compose(a.rot, b.rot), t.row + a.shift_row, t.col + a.shift_col};
}

PlanarElement inverse(const PlanarElement& a) {
  const GroupElement inv = inverse(a.rot);
  const Cell t = act_on_offset(inv, {a.shift_row, a.shift_col});
  return {inv, -t.row, -t.col};
}

Representation Representation::quotient(Group g) {
  if (g.dihedral || g.rotations % 2 != 0) {
    throw std::invalid_argument("quotient representation needs an even cyclic group, got " +
                                g.name());
  }
  return {RepKind::Quotient, g};
}

int Representation::dim() const {
  switch (kind) {
    case RepKind::Trivial: return 1;
    case RepKind::Regular: return group.order();
    case RepKind::Quotient: return group.rotations / 2;
  }
  return 1;
}

std::string Representation::name() const {
  switch (kind) {
    case RepKind::Trivial: return "trivial(" + group.name() + ")";
    case RepKind::Regular: return "regular(" + group.name() + ")";
    case RepKind::Quotient: return "quotient(" + group.name() + "/C2)";
  }
  return "?";
}

PermutationMatrix::PermutationMatrix(std::vector<int> perm) : perm_(std::move(perm)) {
  std::vector<bool> seen(perm_.size(), false);
  for (int p : perm_) {
    if (p < 0 || p >= size() || seen[p]) throw std::invalid_argument("not a permutation");
    seen[p] = true;
  }
}

PermutationMatrix PermutationMatrix::identity(int n) {
  std::vector<int> p(n);
  for (int i = 0; i < n; ++i) p[i] = i;
  return PermutationMatrix(std::move(p));
}

PermutationMatrix PermutationMatrix::inverse() const {
  std::vector<int> inv(perm_.size());
  for (int j = 0; j < size(); ++j) inv[perm_[j]] = j;
  return PermutationMatrix(std::move(inv));
}

std::vector<double> PermutationMatrix::dense() const {
  std::vector<double> m(perm_.size() * perm_.size(), 0.0);
  for (int j = 0; j < size(); ++j) m[static_cast<std::size_t>(perm_[j]) * size() + j] = 1.0;
  return m;
}

PermutationMatrix operator*(const PermutationMatrix& a, const PermutationMatrix& b) {
  if (a.size() != b.size()) throw std::invalid_argument("permutation size mismatch");
  std::vector<int> p(a.perm_.size());
  for (int j = 0; j < b.size(); ++j) p[j] = a.perm_[b.perm_[j]];
  return PermutationMatrix(std::move(p));
}

PermutationMatrix rho(const Representation& rep, const GroupElement& g) {
  if (!(rep.group == g.group)) {
    throw std::invalid_argument("rho: element of " + g.group.name() + " for " + rep.name());
  }
  const int n = rep.dim();
  std::vector<int> p(n);
  switch (rep.kind) {
    case RepKind::Trivial: p[0] = 0; break;
    case RepKind::Regular:
      // left regular action: e_h -> e_{g h}
      for (int h = 0; h < n; ++h) {
        p[h] = compose(g, GroupElement::from_index(rep.group, h)).index();
      }
      break;
    case RepKind::Quotient:
      // cosets {k, k + u/2}; g acts on the coset index by rotation mod u/2
      for (int c = 0; c < n; ++c) p[c] = mod(c + g.rotation, n);
      break;
  }
  return PermutationMatrix(std::move(p));
}

int quarter_turns(const GroupElement& g) {
  const int scaled = 4 * g.rotation;
  if (scaled % g.group.rotations != 0) {
    throw std::domain_error("rotation " + std::to_string(g.rotation) + " of " + g.group.name() +
                            " is not a multiple of 90 degrees");
  }
  return scaled / g.group.rotations;
}

Cell act_on_offset(const GroupElement& g, Cell offset) {
  Cell d = offset;
  for (int i = 0, n = quarter_turns(g); i < n; ++i) d = {-d.col, d.row};
  if (g.reflection) d.col = -d.col;
  return d;
}

Cell act_on_pixel(const PlanarElement& g, Cell p, int rows, int cols) {
  const int turns = quarter_turns(g.rot);
  if (turns % 2 != 0 && rows != cols) {
    throw std::invalid_argument("quarter-turn of a non-square image");
  }
  // doubled coordinates relative to the center keep odd and even sizes integral
  const Cell doubled = act_on_offset(g.rot, {2 * p.row - (rows - 1), 2 * p.col - (cols - 1)});
  return {(doubled.row + rows - 1) / 2 + g.shift_row, (doubled.col + cols - 1) / 2 + g.shift_col};
}

Image act_on_image(const PlanarElement& g, const Image& img) {
  Image out(img.rows(), img.cols());
  for (int r = 0; r < img.rows(); ++r) {
    for (int c = 0; c < img.cols(); ++c) {
      const Cell q = act_on_pixel(g, {r, c}, img.rows(), img.cols());
      if (out.contains(q)) out.at(q) = img.at(r, c);
    }
  }
  return out;
}

SpatialAction act_on_action(const PlanarElement& g, const SpatialAction& a, int grid_size,
                            int theta_count) {
  const Cell x = act_on_pixel(g, a.x, grid_size, grid_size);
  if (x.row < 0 || x.row >= grid_size || x.col < 0 || x.col >= grid_size) {
    throw std::out_of_range("act_on_action: transformed position leaves the grid");
  }
  // orientation unit is pi / theta_count; a rotation by k steps of C_u is 2*pi*k/u
  const int scaled = 2 * g.rot.rotation * theta_count;
  if (scaled % g.rot.group.rotations != 0) {
    throw std::domain_error("act_on_action: rotation does not map orientations onto the grid");
  }
  int theta = a.theta + scaled / g.rot.group.rotations;
  if (g.rot.reflection) theta = -theta;
  return {x, mod(theta, theta_count), a.kind};
}

}  // namespace steerq
