#pragma once

#include <string>
#include <vector>

#include "htengine/graded.hpp"
#include "htengine/json_io.hpp"

namespace hte {

// Cochain complex: a graded space with a square-zero differential of shift +1.
class CochainComplex {
 public:
  CochainComplex() = default;
  // Checks shift(+1) and d∘d = 0 exactly; throws InvalidInput otherwise.
  CochainComplex(SpacePtr space, GradedMap differential);

  const SpacePtr& space() const { return space_; }
  const GradedMap& d() const { return d_; }

  friend bool operator==(const CochainComplex& a, const CochainComplex& b) {
    return *a.space_ == *b.space_ && a.d_ == b.d_;
  }

 private:
  SpacePtr space_;
  GradedMap d_;
};

struct RetractFlags {
  bool deformation = false;  // claims p∘i = id
  bool special = false;      // claims additionally h² = 0, p∘h = 0, h∘i = 0
};

// Homotopy retract: chain maps i (small → big) and p (big → small) together
// with a degree −1 homotopy h on the big side witnessing id − i∘p = d∘h + h∘d.
struct RetractData {
  CochainComplex small;
  CochainComplex big;
  GradedMap i;  // shift 0, small → big
  GradedMap p;  // shift 0, big → small
  GradedMap h;  // shift −1, big → big
  RetractFlags flags;
};

// Perturbation of the big differential.  Use make_perturbation to get the
// square-zero check against a concrete complex.
struct Perturbation {
  GradedMap b;           // shift +1 on the big space
  int nilpotency_bound;  // (b∘h)^n must vanish for some n ≤ bound
};

// Checks shapes and (d + b)² = 0; local nilpotency is certified later against
// a concrete homotopy.
Perturbation make_perturbation(const CochainComplex& big, GradedMap b,
                               int nilpotency_bound);

// Identity-check report: one entry per violated identity, empty when the data
// is exactly what it claims to be.  Violations are data, not errors.
struct CheckReport {
  std::vector<std::string> violations;
  bool ok() const { return violations.empty(); }
};

// Verifies every identity the retract declares (chain maps, homotopy
// identity, and the deformation/special identities when flagged).
CheckReport check_retract(const RetractData& r);

// Finite alternating series Σ (−1)^n (b∘h)^n, well defined when b∘h is
// nilpotent within `bound` steps; (id + b∘h) ∘ result = id exactly.
// Throws NilpotencyExceeded when (b∘h)^bound ≠ 0.
GradedMap invert_id_plus_bh(const GradedMap& b, const GradedMap& h, int bound);

// The homological perturbation lemma.  Produces the retract
//   d_small' = d_small + p (id + b h)^{-1} b i        on the small side,
//   big differential d_big + b,
//   I = (id + h b)^{-1} i,   P = p (id + b h)^{-1},   H = (id + h b)^{-1} h.
// Deformation/special flags carry over (the corollary: a special deformation
// retract stays special under a locally nilpotent perturbation).
RetractData perturb_retract(const RetractData& r, const Perturbation& b);

// Morphism test for perturbed retracts.  Requires Φ: big → big' to be a chain
// map intertwining the unperturbed data (Φ∘i = i'∘φ, φ∘p = p'∘Φ with
// φ := p'∘Φ∘i, and h'∘Φ = Φ∘h); throws InvalidInput otherwise.  Returns
// true iff b'∘Φ = Φ∘b, and in that case re-verifies by direct composition
// that Φ intertwines the perturbed retracts as well.
bool check_retract_morphism(const GradedMap& phi, const RetractData& r,
                            const RetractData& r2, const Perturbation& b,
                            const Perturbation& b2);

// Normalizes the homotopy of a deformation retract (p∘i = id required) to
// satisfy the special identities: first h ← (id−ip) h (id−ip) to gain
// p∘h = 0 and h∘i = 0, then h ← h∘d∘h (repeated if needed) to kill h².
// The result carries the special flag iff check_retract then passes.
RetractData normalize_homotopy(const RetractData& r);

// JSON forms used by the CLI bundle:
//   complex: {"space": ..., "d": ...}
//   retract: {"small": complex, "big": complex, "i": ..., "p": ..., "h": ...,
//             "flags": {"deformation": bool, "special": bool}}
//   perturbation: {"b": ..., "nilpotency_bound": n}
Json complex_to_json(const CochainComplex& c);
CochainComplex complex_from_json(const Json& j);
Json retract_to_json(const RetractData& r);
RetractData retract_from_json(const Json& j);
Json perturbation_to_json(const Perturbation& b);
Perturbation perturbation_from_json(const Json& j, const CochainComplex& big);

}  // namespace hte
