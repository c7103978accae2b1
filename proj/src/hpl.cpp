#include "htengine/hpl.hpp"

namespace hte {

CochainComplex::CochainComplex(SpacePtr space, GradedMap differential)
    : space_(std::move(space)), d_(std::move(differential)) {
  if (!space_) throw InvalidInput("CochainComplex: null space");
  if (*d_.source() != *space_ || *d_.target() != *space_) {
    throw InvalidInput("CochainComplex: differential must act on the space");
  }
  if (d_.shift() != 1) throw InvalidInput("CochainComplex: differential must have shift +1");
  if (!compose(d_, d_).is_zero()) {
    throw InvalidInput("CochainComplex: differential does not square to zero");
  }
}

Perturbation make_perturbation(const CochainComplex& big, GradedMap b,
                               int nilpotency_bound) {
  if (*b.source() != *big.space() || *b.target() != *big.space() || b.shift() != 1) {
    throw InvalidInput("Perturbation: b must have shift +1 on the big space");
  }
  if (nilpotency_bound <= 0) throw InvalidInput("Perturbation: bound must be positive");
  const GradedMap db = big.d() + b;
  if (!compose(db, db).is_zero()) {
    throw InvalidInput("Perturbation: (d + b)^2 != 0");
  }
  return Perturbation{std::move(b), nilpotency_bound};
}

namespace {

void require_shapes(const RetractData& r) {
  const auto& cs = *r.small.space();
  const auto& bs = *r.big.space();
  if (*r.i.source() != cs || *r.i.target() != bs || r.i.shift() != 0) {
    throw InvalidInput("RetractData: i must be a shift-0 map small -> big");
  }
  if (*r.p.source() != bs || *r.p.target() != cs || r.p.shift() != 0) {
    throw InvalidInput("RetractData: p must be a shift-0 map big -> small");
  }
  if (*r.h.source() != bs || *r.h.target() != bs || r.h.shift() != -1) {
    throw InvalidInput("RetractData: h must be a shift -1 map on big");
  }
}

}  // namespace

CheckReport check_retract(const RetractData& r) {
  require_shapes(r);
  CheckReport rep;
  const GradedMap& dC = r.small.d();
  const GradedMap& dD = r.big.d();

  if (compose(dD, r.i) != compose(r.i, dC)) {
    rep.violations.push_back("i is not a chain map: d_big i != i d_small");
  }
  if (compose(dC, r.p) != compose(r.p, dD)) {
    rep.violations.push_back("p is not a chain map: d_small p != p d_big");
  }
  const GradedMap lhs = GradedMap::identity(r.big.space()) - compose(r.i, r.p);
  const GradedMap rhs = compose(dD, r.h) + compose(r.h, dD);
  if (lhs != rhs) {
    rep.violations.push_back("homotopy identity fails: id - i p != d h + h d");
  }
  if (r.flags.deformation || r.flags.special) {
    if (compose(r.p, r.i) != GradedMap::identity(r.small.space())) {
      rep.violations.push_back("deformation identity fails: p i != id");
    }
  }
  if (r.flags.special) {
    if (!compose(r.h, r.h).is_zero()) rep.violations.push_back("special identity fails: h h != 0");
    if (!compose(r.p, r.h).is_zero()) rep.violations.push_back("special identity fails: p h != 0");
    if (!compose(r.h, r.i).is_zero()) rep.violations.push_back("special identity fails: h i != 0");
  }
  return rep;
}

GradedMap invert_id_plus_bh(const GradedMap& b, const GradedMap& h, int bound) {
  if (*b.source() != *h.source() || *b.target() != *h.target()) {
    throw InvalidInput("invert_id_plus_bh: b and h must act on the same space");
  }
  if (b.shift() + h.shift() != 0) {
    throw InvalidInput("invert_id_plus_bh: b h must have shift 0");
  }
  const GradedMap bh = compose(b, h);
  GradedMap acc = GradedMap::identity(b.source());
  GradedMap power = acc;  // (bh)^n
  int sign = 1;
  for (int n = 1; n <= bound; ++n) {
    power = compose(bh, power);
    if (power.is_zero()) return acc;
    sign = -sign;
    acc = acc + (Rational(sign) * power);
  }
  throw NilpotencyExceeded("invert_id_plus_bh: (b h)^" + std::to_string(bound) +
                           " != 0");
}

RetractData perturb_retract(const RetractData& r, const Perturbation& pert) {
  require_shapes(r);
  const GradedMap& b = pert.b;
  if (*b.source() != *r.big.space() || b.shift() != 1) {
    throw InvalidInput("perturb_retract: b must have shift +1 on the big space");
  }
  // A := (id + b h)^{-1}, B := (id + h b)^{-1} = id − h A b  (both finite
  // series; the second expression reuses the first and keeps the bound tight).
  const GradedMap A = invert_id_plus_bh(b, r.h, pert.nilpotency_bound);
  const GradedMap B =
      GradedMap::identity(r.big.space()) - compose(r.h, compose(A, b));

  RetractData out;
  out.small = CochainComplex(
      r.small.space(),
      r.small.d() + compose(r.p, compose(A, compose(b, r.i))));
  out.big = CochainComplex(r.big.space(), r.big.d() + b);
  out.i = compose(B, r.i);
  out.p = compose(r.p, A);
  out.h = compose(B, r.h);
  out.flags = r.flags;
  return out;
}

namespace {

// Morphism-of-retracts conditions for unperturbed data; returns the list of
// failures (empty = morphism).  The small-side component is φ := p' Φ i.
std::vector<std::string> morphism_defects(const GradedMap& phi, const RetractData& r,
                                          const RetractData& r2) {
  std::vector<std::string> out;
  const GradedMap small_phi = compose(r2.p, compose(phi, r.i));
  if (compose(r2.big.d(), phi) != compose(phi, r.big.d())) {
    out.push_back("phi is not a chain map");
  }
  if (compose(phi, r.i) != compose(r2.i, small_phi)) {
    out.push_back("phi i != i' (p' phi i)");
  }
  if (compose(small_phi, r.p) != compose(r2.p, phi)) {
    out.push_back("(p' phi i) p != p' phi");
  }
  if (compose(r2.h, phi) != compose(phi, r.h)) {
    out.push_back("h' phi != phi h");
  }
  return out;
}

}  // namespace

bool check_retract_morphism(const GradedMap& phi, const RetractData& r,
                            const RetractData& r2, const Perturbation& b,
                            const Perturbation& b2) {
  if (*phi.source() != *r.big.space() || *phi.target() != *r2.big.space() ||
      phi.shift() != 0) {
    throw InvalidInput("check_retract_morphism: phi must be a shift-0 map big -> big'");
  }
  const auto defects = morphism_defects(phi, r, r2);
  if (!defects.empty()) {
    std::string msg = "check_retract_morphism: phi is not a morphism of the "
                      "unperturbed retracts:";
    for (const auto& d : defects) msg += " [" + d + "]";
    throw InvalidInput(msg);
  }
  if (compose(b2.b, phi) != compose(phi, b.b)) return false;

  // The certified conclusion, re-verified by direct composition.
  const RetractData pr = perturb_retract(r, b);
  const RetractData pr2 = perturb_retract(r2, b2);
  const auto perturbed_defects = morphism_defects(phi, pr, pr2);
  if (!perturbed_defects.empty()) {
    std::string msg = "check_retract_morphism: certified conclusion failed "
                      "re-verification:";
    for (const auto& d : perturbed_defects) msg += " [" + d + "]";
    throw EngineError(msg);
  }
  return true;
}

RetractData normalize_homotopy(const RetractData& r) {
  require_shapes(r);
  if (compose(r.p, r.i) != GradedMap::identity(r.small.space())) {
    throw InvalidInput("normalize_homotopy: requires a deformation retract (p i = id)");
  }
  RetractData out = r;
  // Step 1: side conditions p h = 0 and h i = 0 via the complementary
  // projector id − i p.
  const GradedMap proj = GradedMap::identity(r.big.space()) - compose(r.i, r.p);
  if (!compose(out.p, out.h).is_zero() || !compose(out.h, out.i).is_zero()) {
    out.h = compose(proj, compose(out.h, proj));
  }
  // Step 2: kill h² by h ← h d h (stabilizes immediately in all cases
  // covered here; the loop guards the general case).
  for (int iter = 0; iter < 4 && !compose(out.h, out.h).is_zero(); ++iter) {
    out.h = compose(out.h, compose(r.big.d(), out.h));
  }
  out.flags.deformation = true;
  out.flags.special = false;
  RetractData candidate = out;
  candidate.flags.special = true;
  if (check_retract(candidate).ok()) return candidate;
  return out;
}

Json complex_to_json(const CochainComplex& c) {
  Json j;
  j["space"] = space_to_json(*c.space());
  j["d"] = map_to_json(c.d());
  return j;
}

CochainComplex complex_from_json(const Json& j) {
  if (!j.is_object() || !j.contains("space") || !j.contains("d")) {
    throw InvalidInput("CochainComplex: expected {\"space\":..., \"d\":...}");
  }
  auto space = std::make_shared<GradedSpace>(space_from_json(j["space"]));
  GradedMap d = map_from_json(j["d"], space, space);
  return CochainComplex(space, std::move(d));
}

Json retract_to_json(const RetractData& r) {
  Json j;
  j["small"] = complex_to_json(r.small);
  j["big"] = complex_to_json(r.big);
  j["i"] = map_to_json(r.i);
  j["p"] = map_to_json(r.p);
  j["h"] = map_to_json(r.h);
  j["flags"] = Json{{"deformation", r.flags.deformation}, {"special", r.flags.special}};
  return j;
}

RetractData retract_from_json(const Json& j) {
  for (const char* k : {"small", "big", "i", "p", "h"}) {
    if (!j.contains(k)) throw InvalidInput(std::string("RetractData: missing field ") + k);
  }
  RetractData r;
  r.small = complex_from_json(j["small"]);
  r.big = complex_from_json(j["big"]);
  r.i = map_from_json(j["i"], r.small.space(), r.big.space());
  r.p = map_from_json(j["p"], r.big.space(), r.small.space());
  r.h = map_from_json(j["h"], r.big.space(), r.big.space());
  if (j.contains("flags")) {
    r.flags.deformation = j["flags"].value("deformation", false);
    r.flags.special = j["flags"].value("special", false);
  }
  require_shapes(r);
  return r;
}

Json perturbation_to_json(const Perturbation& b) {
  Json j;
  j["b"] = map_to_json(b.b);
  j["nilpotency_bound"] = b.nilpotency_bound;
  return j;
}

Perturbation perturbation_from_json(const Json& j, const CochainComplex& big) {
  if (!j.contains("b")) throw InvalidInput("Perturbation: missing field b");
  GradedMap b = map_from_json(j["b"], big.space(), big.space());
  const int bound = j.value("nilpotency_bound", big.space()->total_dim() + 1);
  return make_perturbation(big, std::move(b), bound);
}

}  // namespace hte
