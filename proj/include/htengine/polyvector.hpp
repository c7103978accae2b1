#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "htengine/poly.hpp"

namespace hte {

// One polyvector summand: a coefficient monomial times a wedge of coordinate
// directions encoded as a bitmask (bit i set = direction i present, factors
// ordered by increasing index).
struct PvKey {
  Mono mono;
  std::uint32_t mask = 0;

  friend bool operator<(const PvKey& a, const PvKey& b) {
    if (a.mask != b.mask) return a.mask < b.mask;
    return a.mono < b.mono;
  }
  friend bool operator==(const PvKey& a, const PvKey& b) {
    return a.mask == b.mask && a.mono == b.mono;
  }
};

// Sparse polyvector field with exact coefficients.  A term with mask of
// popcount k lives in homological degree k-1 (functions sit in degree -1,
// vector fields in degree 0, bivectors in degree 1, ...).
using Polyvector = std::map<PvKey, Rational>;

int pv_mask_arity(std::uint32_t mask);
int pv_term_degree(const PvKey& k);  // popcount(mask) - 1

void pv_add_term(Polyvector& p, const PvKey& k, const Rational& c);
void pv_add_scaled(Polyvector& p, const Polyvector& q, const Rational& c);
Polyvector pv_scaled(const Polyvector& p, const Rational& c);
bool pv_is_zero(const Polyvector& p);

// True when every term has the given homological degree (vacuously true for 0).
bool pv_is_homogeneous(const Polyvector& p, int degree);

void pv_validate(const PolyContext& ctx, const Polyvector& p);

Polyvector pv_from_poly(const Poly& f);
// Vector field from coefficient polynomials, one per direction.
Polyvector pv_field(const PolyContext& ctx, const std::vector<Poly>& coeffs);

// Exterior product (coefficients multiply under the degree-cap policy).
Polyvector pv_wedge(const PolyContext& ctx, const Polyvector& a,
                    const Polyvector& b, Overflow policy = Overflow::Error);

// Odd Poisson bracket of polyvector fields.  On two vector fields it is the
// commutator; on a vector field and a function it is the directional
// derivative.  Coefficient degrees can grow by deg(a)+deg(b)-1, so the policy
// decides what happens past the cap.
Polyvector schouten_bracket(const PolyContext& ctx, const Polyvector& a,
                            const Polyvector& b,
                            Overflow policy = Overflow::Error);

// Action of a vector field on an arbitrary polyvector (bracket with a degree-0
// element); kernels of these operators cut out invariant subspaces.
Polyvector pv_lie_derivative(const PolyContext& ctx, const Polyvector& field,
                             const Polyvector& p,
                             Overflow policy = Overflow::Error);

// Pair a bivector with the differentials of two functions:
// {f,g} = pi(df, dg).
Poly pv_poisson(const PolyContext& ctx, const Polyvector& pi, const Poly& f,
                const Poly& g, Overflow policy = Overflow::Error);

std::string pv_mask_to_string(std::uint32_t mask);  // "dx^dy", "1" for empty
std::uint32_t pv_mask_from_string(const PolyContext& ctx, const std::string& s);
std::string pv_to_string(const Polyvector& p);

nlohmann::json pv_to_json(const Polyvector& p);
Polyvector pv_from_json(const PolyContext& ctx, const nlohmann::json& j);

}  // namespace hte
