#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <random>

#include "htengine/hpl.hpp"
#include "retract_gen.hpp"

using namespace hte;

namespace {

// Two-term acyclic complex a (deg 0) → b (deg 1), d a = b.
RetractData two_term_retract(const Rational& h_coeff) {
  auto small = std::make_shared<GradedSpace>();
  auto big = make_space({{0, {"a"}}, {1, {"b"}}}, 0, 1);
  GradedMap d = GradedMap::zero(big, big, 1).with_entry(0, 0, 0, Rational(1));
  RetractData r;
  r.small = CochainComplex(small, GradedMap::zero(small, small, 1));
  r.big = CochainComplex(big, d);
  r.i = GradedMap::zero(small, big, 0);
  r.p = GradedMap::zero(big, small, 0);
  r.h = GradedMap::zero(big, big, -1).with_entry(1, 0, 0, h_coeff);
  r.flags.deformation = true;
  r.flags.special = true;
  return r;
}

}  // namespace

TEST_CASE("complex construction rejects non-square-zero differentials") {
  auto v = make_space({{0, {"x"}}, {1, {"y"}}, {2, {"z"}}}, 0, 2);
  GradedMap d = GradedMap::zero(v, v, 1)
                    .with_entry(0, 0, 0, Rational(1))
                    .with_entry(1, 0, 0, Rational(1));
  CHECK_THROWS_AS(CochainComplex(v, d), InvalidInput);
  GradedMap good = GradedMap::zero(v, v, 1).with_entry(0, 0, 0, Rational(1));
  CHECK_NOTHROW(CochainComplex(v, good));
}

TEST_CASE("check_retract: trivial retract has empty report") {
  auto v = make_space({{-1, {"u"}}, {0, {"v", "w"}}}, -1, 0);
  GradedMap d = GradedMap::zero(v, v, 1).with_entry(-1, 0, 0, Rational(2));
  RetractData r;
  r.small = CochainComplex(v, d);
  r.big = r.small;
  r.i = GradedMap::identity(v);
  r.p = GradedMap::identity(v);
  r.h = GradedMap::zero(v, v, -1);
  r.flags.deformation = true;
  r.flags.special = true;
  CHECK(check_retract(r).ok());
}

TEST_CASE("check_retract: acyclic two-term complex") {
  CHECK(check_retract(two_term_retract(Rational(1))).ok());
  // wrong homotopy scale is reported, not thrown
  const auto rep = check_retract(two_term_retract(Rational(2)));
  CHECK_FALSE(rep.ok());
  bool found = false;
  for (const auto& v : rep.violations) {
    if (v.find("homotopy identity") != std::string::npos) found = true;
  }
  CHECK(found);
}

TEST_CASE("invert_id_plus_bh: zero and square-nilpotent cases") {
  auto v = make_space({{0, {"x"}}, {1, {"y"}}}, 0, 1);
  GradedMap zero_b = GradedMap::zero(v, v, 1);
  GradedMap h = GradedMap::zero(v, v, -1).with_entry(1, 0, 0, Rational(1));
  CHECK(invert_id_plus_bh(zero_b, h, 3) == GradedMap::identity(v));

  GradedMap b = GradedMap::zero(v, v, 1).with_entry(0, 0, 0, Rational(3));
  // b h sends y -> 3 y; this is NOT nilpotent: expect the error
  CHECK_THROWS_AS(invert_id_plus_bh(b, h, 10), NilpotencyExceeded);

  // genuine (bh)² = 0 case on a 4-dim space
  auto w = make_space({{0, {"x1", "x2"}}, {1, {"y1", "y2"}}}, 0, 1);
  GradedMap b2 = GradedMap::zero(w, w, 1).with_entry(0, 0, 1, Rational(5));
  GradedMap h2 = GradedMap::zero(w, w, -1).with_entry(1, 1, 0, Rational(7));
  // b2 h2: y1 -> 7 x2 -> 35 y1?  b2 maps x2 -> 5 y1, so bh: y1 -> 35 y1 — not nilpotent.
  // use disjoint pairs instead: h2': y1 -> x1, b2': x1 -> 0; b2'': x2 -> y2
  GradedMap b3 = GradedMap::zero(w, w, 1).with_entry(0, 1, 0, Rational(5));  // x1 -> y2
  GradedMap h3 = GradedMap::zero(w, w, -1).with_entry(1, 0, 0, Rational(7));  // y1 -> x1
  const GradedMap bh = compose(b3, h3);  // y1 -> 35 y2
  CHECK(compose(bh, bh).is_zero());
  CHECK(invert_id_plus_bh(b3, h3, 5) == GradedMap::identity(w) - bh);
}

TEST_CASE("invert_id_plus_bh agrees with the dense inverse") {
  std::mt19937 rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    auto inst = hte_testgen::random_special_retract(rng, 8);
    const GradedMap series =
        invert_id_plus_bh(inst.pert.b, inst.retract.h, inst.pert.nilpotency_bound);
    const GradedMap id_plus_bh =
        GradedMap::identity(inst.retract.big.space()) +
        compose(inst.pert.b, inst.retract.h);
    CHECK(compose(id_plus_bh, series) == GradedMap::identity(inst.retract.big.space()));
    CHECK(compose(series, id_plus_bh) == GradedMap::identity(inst.retract.big.space()));
    // dense LU inverse per degree as an independent oracle
    const auto space = inst.retract.big.space();
    for (int deg : space->degrees()) {
      Mat m = id_plus_bh.block(deg);
      if (m.rows() != m.cols()) continue;
      Eigen::FullPivLU<Mat> lu(m);
      REQUIRE(lu.rank() == m.rows());
      Mat inv = lu.solve(identity_mat(m.rows()));
      CHECK(series.block(deg) == inv);
    }
  }
}

TEST_CASE("perturb_retract: zero perturbation is the identity operation") {
  std::mt19937 rng(11);
  auto inst = hte_testgen::random_special_retract(rng, 8);
  const auto& big = inst.retract.big;
  Perturbation zero = make_perturbation(big, GradedMap::zero(big.space(), big.space(), 1), 2);
  RetractData out = perturb_retract(inst.retract, zero);
  CHECK(out.small.d() == inst.retract.small.d());
  CHECK(out.big.d() == big.d());
  CHECK(out.i == inst.retract.i);
  CHECK(out.p == inst.retract.p);
  CHECK(out.h == inst.retract.h);
}

TEST_CASE("perturb_retract: rank-one perturbation of a three-term special retract") {
  // x (deg 0) → y (deg 1) → 0, z (deg 1) closed; small = span(z)… build
  // explicitly: big has x,y (cone) and small = 0; add a second cone u,v and a
  // rank-one perturbation mixing the cones.
  auto small = std::make_shared<GradedSpace>();
  auto big = make_space({{0, {"u", "x"}}, {1, {"v", "y"}}}, 0, 1);
  GradedMap d = GradedMap::zero(big, big, 1)
                    .with_entry(0, 1, 1, Rational(1))   // x -> y
                    .with_entry(0, 0, 0, Rational(1));  // u -> v
  RetractData r;
  r.small = CochainComplex(small, GradedMap::zero(small, small, 1));
  r.big = CochainComplex(big, d);
  r.i = GradedMap::zero(small, big, 0);
  r.p = GradedMap::zero(big, small, 0);
  r.h = GradedMap::zero(big, big, -1)
            .with_entry(1, 1, 1, Rational(1))   // y -> x
            .with_entry(1, 0, 0, Rational(1));  // v -> u
  r.flags.deformation = true;
  r.flags.special = true;
  REQUIRE(check_retract(r).ok());

  // b: x -> v is a rank-one shift-+1 map; (d+b)² = 0 since b d = d b = ... = 0
  GradedMap bmap = GradedMap::zero(big, big, 1).with_entry(0, 0, 1, Rational(4));
  // check (d+b)^2 = 0 holds so make_perturbation accepts
  Perturbation pert = make_perturbation(r.big, bmap, big->total_dim() + 1);
  RetractData out = perturb_retract(r, pert);
  CHECK(check_retract(out).ok());  // all five special identities, exactly
}

TEST_CASE("property: perturbing random special retracts preserves all six identities") {
  std::mt19937 rng(2026);
  for (int trial = 0; trial < 60; ++trial) {
    auto inst = hte_testgen::random_special_retract(rng, 8);
    REQUIRE(check_retract(inst.retract).ok());
    RetractData out = perturb_retract(inst.retract, inst.pert);
    const auto rep = check_retract(out);
    if (!rep.ok()) {
      for (const auto& v : rep.violations) MESSAGE(v);
    }
    CHECK(rep.ok());
  }
}

TEST_CASE("property: perturbation composes") {
  std::mt19937 rng(5);
  int done = 0;
  while (done < 15) {
    auto inst = hte_testgen::random_special_retract(rng, 5);
    const auto& r = inst.retract;
    const auto& big = r.big;
    // first perturbation from the generator; second from an independent draw
    // on the same complex: b2_total = Ψ(d+b1)Ψ^{-1} − (d+b1) — built by
    // regenerating against the perturbed differential.
    const GradedMap b1 = inst.pert.b;
    CochainComplex big1(big.space(), big.d() + b1);
    // simple second perturbation: conjugate d+b1 by id + n where n is a
    // random strictly-lower-triangular-in-basis-order map of shift 0
    GradedMap n = GradedMap::zero(big.space(), big.space(), 0);
    for (int deg : big.space()->degrees()) {
      for (int src = 0; src < big.space()->dim(deg); ++src) {
        for (int dst = src + 1; dst < big.space()->dim(deg); ++dst) {
          if (rng() % 3 == 0) n = n.with_entry(deg, dst, src, Rational(1 + (int)(rng() % 2)));
        }
      }
    }
    GradedMap psi_inv = GradedMap::identity(big.space());
    GradedMap pw = n;
    int sign = -1;
    while (!pw.is_zero()) {
      psi_inv = psi_inv + Rational(sign) * pw;
      pw = compose(n, pw);
      sign = -sign;
    }
    const GradedMap psi = GradedMap::identity(big.space()) + n;
    const GradedMap b2 = compose(psi, compose(big1.d(), psi_inv)) - big1.d();

    const int bound = big.space()->total_dim() + 2;
    Perturbation p1 = inst.pert;
    Perturbation p12 = Perturbation{b1 + b2, bound};
    // both nested and combined must be defined; basis-order triangularity is
    // not level-lowering, so nilpotency may fail — skip those draws.
    RetractData once, twice, direct;
    try {
      once = perturb_retract(r, p1);
      Perturbation p2 = make_perturbation(once.big, b2, bound);
      twice = perturb_retract(once, p2);
      direct = perturb_retract(r, make_perturbation(big, b1 + b2, bound));
    } catch (const NilpotencyExceeded&) {
      continue;
    }
    CHECK(twice.small.d() == direct.small.d());
    CHECK(twice.big.d() == direct.big.d());
    CHECK(twice.i == direct.i);
    CHECK(twice.p == direct.p);
    CHECK(twice.h == direct.h);
    ++done;
  }
}

TEST_CASE("check_retract_morphism: identity and zero") {
  std::mt19937 rng(13);
  auto inst = hte_testgen::random_special_retract(rng, 6);
  const auto& r = inst.retract;
  CHECK(check_retract_morphism(GradedMap::identity(r.big.space()), r, r, inst.pert,
                               inst.pert));
  // zero map is a vacuous intertwiner onto the zero retract
  auto zspace = std::make_shared<GradedSpace>();
  RetractData zr;
  zr.small = CochainComplex(zspace, GradedMap::zero(zspace, zspace, 1));
  zr.big = zr.small;
  zr.i = GradedMap::zero(zspace, zspace, 0);
  zr.p = zr.i;
  zr.h = GradedMap::zero(zspace, zspace, -1);
  Perturbation zp{GradedMap::zero(zspace, zspace, 1), 1};
  CHECK(check_retract_morphism(GradedMap::zero(r.big.space(), zspace, 0), r, zr,
                               inst.pert, zp));
}

TEST_CASE("check_retract_morphism: commuting scaling morphism") {
  // r -> r with Φ = scalar multiple of the identity: intertwines everything
  // and commutes with any b, so the perturbed intertwining must verify.
  std::mt19937 rng(17);
  auto inst = hte_testgen::random_special_retract(rng, 6);
  const auto& r = inst.retract;
  const GradedMap phi = Rational(3) * GradedMap::identity(r.big.space());
  CHECK(check_retract_morphism(phi, r, r, inst.pert, inst.pert));
  // a mismatched second perturbation simply yields false (when still a
  // perturbation), or: use zero b' so b'Φ != Φb unless b = 0
  Perturbation zero{GradedMap::zero(r.big.space(), r.big.space(), 1), 2};
  if (!inst.pert.b.is_zero()) {
    CHECK_FALSE(check_retract_morphism(phi, r, r, inst.pert, zero));
  }
}

TEST_CASE("normalize_homotopy repairs side conditions and h²") {
  std::mt19937 rng(23);
  for (int trial = 0; trial < 20; ++trial) {
    auto inst = hte_testgen::random_special_retract(rng, 7);
    RetractData r = inst.retract;
    // damage h with commutator junk: h' = h + (d w − w d) for random w of
    // shift −2 keeps d h' + h' d = d h + h d since d² = 0.
    GradedMap w = GradedMap::zero(r.big.space(), r.big.space(), -2);
    for (int deg : r.big.space()->degrees()) {
      for (int src = 0; src < r.big.space()->dim(deg); ++src) {
        for (int dst = 0; dst < r.big.space()->dim(deg - 2); ++dst) {
          if (rng() % 3 == 0) w = w.with_entry(deg, dst, src, Rational(1));
        }
      }
    }
    r.h = r.h + compose(r.big.d(), w) - compose(w, r.big.d());
    r.flags.special = false;
    r.flags.deformation = true;
    REQUIRE(check_retract(r).ok());  // still a deformation retract

    RetractData fixed = normalize_homotopy(r);
    CHECK(fixed.flags.special);
    CHECK(check_retract(fixed).ok());
  }
}

TEST_CASE("retract json round trip") {
  std::mt19937 rng(29);
  auto inst = hte_testgen::random_special_retract(rng, 6);
  Json j = retract_to_json(inst.retract);
  RetractData r2 = retract_from_json(j);
  CHECK(r2.small == inst.retract.small);
  CHECK(r2.big == inst.retract.big);
  CHECK(r2.i == inst.retract.i);
  CHECK(r2.p == inst.retract.p);
  CHECK(r2.h == inst.retract.h);
  CHECK(r2.flags.special == inst.retract.flags.special);
  Json jp = perturbation_to_json(inst.pert);
  Perturbation p2 = perturbation_from_json(jp, r2.big);
  CHECK(p2.b == inst.pert.b);
  CHECK(dump_json(retract_to_json(r2)) == dump_json(j));
}
