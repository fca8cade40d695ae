#pragma once

// Finite subgroups of SE(2): cyclic rotation groups C_u, the dihedral group
// D_4, and the permutation representations they carry on feature fibers.
//
// Conventions used everywhere in the project:
//   * images are indexed (row, col) with row 0 at the top;
//   * the generator r1 of C_4 is a counterclockwise quarter turn about the
//     image center, i.e. the content at pixel (r, c) of an N x N image moves
//     to (N-1-c, r);
//   * the dihedral reflection is the horizontal flip (r, c) -> (r, N-1-c);
//   * an element with rotation index k and reflection flag f acts as
//     "rotate by k steps, then reflect if f".

#include <string>
#include <vector>

#include "steerq/spatial.hpp"

namespace steerq {

struct Group {
  int rotations = 1;  ///< u, the number of planar rotations
  bool dihedral = false;

  static Group cyclic(int u);
  static Group dihedral_group(int u);

  int order() const { return dihedral ? 2 * rotations : rotations; }
  /// True when every element maps the pixel lattice onto itself.
  bool lattice_exact() const { return rotations == 1 || rotations == 2 || rotations == 4; }
  std::string name() const;

  friend bool operator==(const Group&, const Group&) = default;
};

struct GroupElement {
  int rotation = 0;
  bool reflection = false;
  Group group;

  static GroupElement identity(Group g) { return {0, false, g}; }
  static GroupElement rotation_by(Group g, int k);
  static GroupElement from_index(Group g, int index);

  /// Position of the element in elements(group); also its regular-fiber slot.
  int index() const { return rotation + (reflection ? group.rotations : 0); }
  bool is_identity() const { return rotation == 0 && !reflection; }

  friend bool operator==(const GroupElement&, const GroupElement&) = default;
};

GroupElement compose(const GroupElement& a, const GroupElement& b);
GroupElement inverse(const GroupElement& a);
std::vector<GroupElement> elements(Group g);

/// Rotation part plus an integer pixel translation (applied after rotation).
struct PlanarElement {
  GroupElement rot;
  int shift_row = 0;
  int shift_col = 0;

  static PlanarElement rotation(const GroupElement& g) { return {g, 0, 0}; }
};

PlanarElement compose(const PlanarElement& a, const PlanarElement& b);
PlanarElement inverse(const PlanarElement& a);

enum class RepKind { Trivial, Regular, Quotient };

/// Permutation representation of a finite group. Quotient means C_u/C_2
/// (orientations identified modulo pi) and requires an even cyclic group.
struct Representation {
  RepKind kind = RepKind::Trivial;
  Group group;

  static Representation trivial(Group g) { return {RepKind::Trivial, g}; }
  static Representation regular(Group g) { return {RepKind::Regular, g}; }
  static Representation quotient(Group g);

  int dim() const;
  std::string name() const;

  friend bool operator==(const Representation&, const Representation&) = default;
};

/// rho(g) stored as the image of each basis vector: rho(g) e_j = e_{perm[j]}.
class PermutationMatrix {
 public:
  explicit PermutationMatrix(std::vector<int> perm);
  static PermutationMatrix identity(int n);

  int size() const { return static_cast<int>(perm_.size()); }
  int map(int j) const { return perm_[j]; }
  double at(int row, int col) const { return perm_[col] == row ? 1.0 : 0.0; }
  const std::vector<int>& perm() const { return perm_; }
  PermutationMatrix inverse() const;
  std::vector<double> dense() const;

  friend PermutationMatrix operator*(const PermutationMatrix& a, const PermutationMatrix& b);
  friend bool operator==(const PermutationMatrix&, const PermutationMatrix&) = default;

 private:
  std::vector<int> perm_;
};

PermutationMatrix rho(const Representation& rep, const GroupElement& g);

/// Number of counterclockwise quarter turns performed by the rotation part.
/// Throws std::domain_error when the rotation is not a multiple of 90 degrees.
int quarter_turns(const GroupElement& g);

/// Linear part of g acting on a pixel displacement (d_row, d_col).
Cell act_on_offset(const GroupElement& g, Cell offset);

/// Pixel map of g on an rows x cols image (rotation about the image center,
/// then translation). Quarter turns require a square image.
Cell act_on_pixel(const PlanarElement& g, Cell p, int rows, int cols);

/// Rotated-then-translated image; pixels moved out of bounds are dropped and
/// vacated pixels are zero. Only lattice-exact rotations are supported;
/// interpolated rotation for other u is an extension point.
Image act_on_image(const PlanarElement& g, const Image& img);

/// Maps the action position with the pixel map and shifts the orientation
/// index, which lives in C_{2n}/C_2 with n = theta_count. Throws
/// std::out_of_range when the mapped position leaves the grid.
SpatialAction act_on_action(const PlanarElement& g, const SpatialAction& a, int grid_size,
                            int theta_count);

}  // namespace steerq
