#include <doctest.h>

#include "helpers.hpp"
#include "steerq/group.hpp"

using namespace steerq;

namespace {

// Product a*b read off from images: act(a, act(b, I)) must equal act(c, I)
// for exactly one element c. The test image has no symmetries.
GroupElement product_from_images(const GroupElement& a, const GroupElement& b, const Image& img) {
  const Image target = act_on_image(PlanarElement::rotation(a),
                                    act_on_image(PlanarElement::rotation(b), img));
  GroupElement found = GroupElement::identity(a.group);
  int matches = 0;
  for (const GroupElement& c : elements(a.group)) {
    if (act_on_image(PlanarElement::rotation(c), img) == target) {
      found = c;
      ++matches;
    }
  }
  REQUIRE(matches == 1);
  return found;
}

}  // namespace

TEST_CASE("identity and cyclic composition") {
  const Group c4 = Group::cyclic(4);
  const auto r1 = GroupElement::rotation_by(c4, 1);
  CHECK(compose(r1, r1) == GroupElement::rotation_by(c4, 2));
  for (const auto& g : elements(c4)) {
    CHECK(compose(GroupElement::identity(c4), g) == g);
    CHECK(compose(g, inverse(g)).is_identity());
  }
  CHECK_THROWS_AS(compose(r1, GroupElement::identity(Group::cyclic(8))), std::invalid_argument);
}

TEST_CASE("dihedral Cayley table agrees with the action on an image") {
  Rng rng(7);
  const Image img = testing::random_image(6, rng);
  const Group d4 = Group::dihedral_group(4);
  for (const auto& a : elements(d4))
    for (const auto& b : elements(d4)) CHECK(compose(a, b) == product_from_images(a, b, img));

  const GroupElement reflect{1, true, d4};
  const GroupElement flip{0, true, d4};
  CHECK(compose(reflect, flip) == GroupElement{3, false, d4});
}

TEST_CASE("image quarter turn is counterclockwise") {
  const Image img(2, 2, {1, 2, 3, 4});
  const auto g = PlanarElement::rotation(GroupElement::rotation_by(Group::cyclic(4), 1));
  CHECK(act_on_image(g, img) == Image(2, 2, {2, 4, 1, 3}));
}

TEST_CASE("rho is a permutation homomorphism") {
  std::vector<Group> groups{Group::cyclic(2), Group::cyclic(4), Group::cyclic(8),
                            Group::cyclic(12), Group::dihedral_group(4)};
  for (const Group& grp : groups) {
    std::vector<Representation> reps{Representation::trivial(grp), Representation::regular(grp)};
    if (!grp.dihedral) reps.push_back(Representation::quotient(grp));
    for (const auto& rep : reps) {
      CHECK(rho(rep, GroupElement::identity(grp)) == PermutationMatrix::identity(rep.dim()));
      for (const auto& a : elements(grp))
        for (const auto& b : elements(grp)) CHECK(rho(rep, a) * rho(rep, b) == rho(rep, compose(a, b)));
    }
  }
}

TEST_CASE("regular rep of r1 is a cyclic shift; quotient is blind to half turns") {
  const Group c4 = Group::cyclic(4);
  const auto r1 = GroupElement::rotation_by(c4, 1);
  CHECK(rho(Representation::regular(c4), r1).perm() == std::vector<int>{1, 2, 3, 0});
  const auto q = Representation::quotient(c4);
  CHECK(rho(q, GroupElement::rotation_by(c4, 2)) == PermutationMatrix::identity(2));
  for (int u : {4, 8, 12}) {
    const Group g = Group::cyclic(u);
    const auto rq = Representation::quotient(g);
    const auto half = GroupElement::rotation_by(g, u / 2);
    for (const auto& e : elements(g)) CHECK(rho(rq, e) == rho(rq, compose(e, half)));
  }
}

TEST_CASE("image action is consistent with composition and invertible") {
  Rng rng(11);
  for (const Group grp : {Group::cyclic(4), Group::dihedral_group(4)}) {
    for (int trial = 0; trial < 3; ++trial) {
      const Image img = testing::random_image(8, rng);
      for (const auto& a : elements(grp)) {
        const auto pa = PlanarElement::rotation(a);
        CHECK(act_on_image(pa, act_on_image(PlanarElement::rotation(inverse(a)), img)) == img);
        for (const auto& b : elements(grp)) {
          const auto pb = PlanarElement::rotation(b);
          CHECK(act_on_image(pb, act_on_image(pa, img)) ==
                act_on_image(PlanarElement::rotation(compose(b, a)), img));
        }
      }
    }
  }
}

TEST_CASE("action on actions follows the pixel map") {
  const Group c4 = Group::cyclic(4);
  const auto g = PlanarElement::rotation(GroupElement::rotation_by(c4, 1));
  // marked pixel oracle: where does the content at (0,0) go under the image action?
  Image marked(5, 5);
  marked.at(0, 0) = 1.0;
  const Image moved = act_on_image(g, marked);
  Cell where{-1, -1};
  for (int r = 0; r < 5; ++r)
    for (int c = 0; c < 5; ++c)
      if (moved.at(r, c) == 1.0) where = {r, c};
  const SpatialAction a{{0, 0}, 0, ActionKind::Pick};
  const SpatialAction ga = act_on_action(g, a, 5, 2);
  CHECK(ga.x == where);
  CHECK(ga.x == Cell{4, 0});
  CHECK(ga.theta == 1);
  CHECK(ga.kind == ActionKind::Pick);
  CHECK(act_on_action(inverse(g), ga, 5, 2) == a);

  const PlanarElement shifted{GroupElement::identity(c4), 0, 5};
  CHECK_THROWS_AS(act_on_action(shifted, a, 5, 2), std::out_of_range);
}

TEST_CASE("non quarter-turn rotations are rejected for images") {
  const auto g = PlanarElement::rotation(GroupElement::rotation_by(Group::cyclic(8), 1));
  CHECK_THROWS_AS(act_on_image(g, Image(4, 4)), std::domain_error);
}

TEST_CASE("planar elements compose and invert") {
  const Group c4 = Group::cyclic(4);
  const PlanarElement g{GroupElement::rotation_by(c4, 1), 1, -2};
  const PlanarElement h{GroupElement::rotation_by(c4, 3), 0, 1};
  for (int r = 2; r < 6; ++r)
    for (int c = 2; c < 6; ++c) {
      const Cell p{r, c};
      CHECK(act_on_pixel(inverse(g), act_on_pixel(g, p, 8, 8), 8, 8) == p);
      CHECK(act_on_pixel(compose(h, g), p, 8, 8) == act_on_pixel(h, act_on_pixel(g, p, 8, 8), 8, 8));
    }
}
