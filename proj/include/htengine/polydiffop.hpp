#pragma once

#include <map>
#include <string>
#include <vector>

#include "htengine/polyvector.hpp"

namespace hte {

// One summand of a multidifferential operator: a coefficient monomial times a
// tensor product of iterated partial derivatives, one multi-index per argument
// slot.  A term with k slots acts on k polynomials; 0-slot terms are plain
// multiplication operators (functions).
struct DoKey {
  Mono mono;
  std::vector<Mono> slots;

  friend bool operator<(const DoKey& a, const DoKey& b) {
    if (a.slots.size() != b.slots.size()) return a.slots.size() < b.slots.size();
    if (a.slots != b.slots) return a.slots < b.slots;
    return a.mono < b.mono;
  }
  friend bool operator==(const DoKey& a, const DoKey& b) {
    return a.slots == b.slots && a.mono == b.mono;
  }
};

// Sparse multidifferential operator with exact coefficients.  A k-slot term
// lives in homological degree k-1 (functions in degree -1, differential
// operators in degree 0, bidifferential operators in degree 1, ...).
using PolyDiffOp = std::map<DoKey, Rational>;

int do_term_degree(const DoKey& k);  // slots.size() - 1

void do_add_term(PolyDiffOp& p, const DoKey& k, const Rational& c);
void do_add_scaled(PolyDiffOp& p, const PolyDiffOp& q, const Rational& c);
PolyDiffOp do_scaled(const PolyDiffOp& p, const Rational& c);
bool do_is_zero(const PolyDiffOp& p);
bool do_is_homogeneous(const PolyDiffOp& p, int degree);

void do_validate(const PolyContext& ctx, const PolyDiffOp& p);

// True when every slot of every term applies at least one derivative, so the
// operator kills constants in each argument.
bool do_vanishes_on_constants(const PolyDiffOp& p);

PolyDiffOp do_from_poly(const Poly& f);

// Pointwise multiplication of two arguments, as a 2-slot operator.
PolyDiffOp product_cochain(const PolyContext& ctx);

// Substitute E into argument slot i of D (0-based), expanding the derivatives
// that hit the inserted operator by the Leibniz rule.  No sign is applied.
PolyDiffOp do_insert_at(const PolyContext& ctx, const PolyDiffOp& D, int i,
                        const PolyDiffOp& E, Overflow policy = Overflow::Error);

// Alternating sum of all single-slot insertions of E into D.
PolyDiffOp do_concat(const PolyContext& ctx, const PolyDiffOp& D,
                     const PolyDiffOp& E, Overflow policy = Overflow::Error);

// Graded commutator of multidifferential operators under slot-shifted degrees.
PolyDiffOp gerstenhaber_bracket(const PolyContext& ctx, const PolyDiffOp& D,
                                const PolyDiffOp& E,
                                Overflow policy = Overflow::Error);

// Bracket with the pointwise product; squares to zero and vanishes on
// operators whose slots are single derivations.
PolyDiffOp hochschild_differential(const PolyContext& ctx, const PolyDiffOp& D,
                                   Overflow policy = Overflow::Error);

// Concatenation product: feed the first d arguments to D, the rest to E, and
// multiply the results.
PolyDiffOp do_cup(const PolyContext& ctx, const PolyDiffOp& D,
                  const PolyDiffOp& E, Overflow policy = Overflow::Error);

// Evaluate on polynomial arguments; the argument count must match every term.
Poly do_apply(const PolyContext& ctx, const PolyDiffOp& D,
              const std::vector<Poly>& args, Overflow policy = Overflow::Error);

// Consume one slot by feeding it a fixed polynomial.
PolyDiffOp do_partial_apply(const PolyContext& ctx, const PolyDiffOp& D, int i,
                            const Poly& value, Overflow policy = Overflow::Error);

// Action of a vector field on an operator (graded commutator with the
// field's first-order operator); kernels cut out invariant subspaces.
PolyDiffOp do_lie_derivative(const PolyContext& ctx, const Polyvector& field,
                             const PolyDiffOp& D,
                             Overflow policy = Overflow::Error);

// Antisymmetrization embedding of polyvector fields into multidifferential
// operators: a wedge of k coordinate directions becomes the average over all
// orderings, with sign, of the corresponding one-derivative slots.
PolyDiffOp hkr(const PolyContext& ctx, const Polyvector& p);

// Weyl-symmetrized deformation series of a constant bivector: returns the
// operators {m_0, m_1, ..., m_K} with m_0 the pointwise product and
// m_r = (1/(2^r r!)) sum pi^{i1 j1}...pi^{ir jr} d_{i...}⊗d_{j...}.
std::vector<PolyDiffOp> moyal_star(const PolyContext& ctx,
                                   const Polyvector& pi_const, int K);

std::string do_to_string(const PolyDiffOp& p);

nlohmann::json do_to_json(const PolyDiffOp& p);
PolyDiffOp do_from_json(const PolyContext& ctx, const nlohmann::json& j);

}  // namespace hte
