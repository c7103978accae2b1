#pragma once

#include <map>
#include <string>
#include <vector>

#include "htengine/rational.hpp"
#include "htengine/vendor_json.hpp"

namespace hte {

// Exponent vector of a monomial; size = number of variables.
using Mono = std::vector<int>;

// Sparse polynomial with exact coefficients; zero coefficients are erased
// eagerly so equality is structural.
using Poly = std::map<Mono, Rational>;

// Ambient polynomial context: number of variables and the total-degree cap
// that keeps every object finite.
struct PolyContext {
  int vars = 0;
  int degree_cap = 0;
};

// What to do when an exact result would exceed the degree cap: reject the
// operation, or drop the overflowing monomials (callers that truncate must
// record that they did).
enum class Overflow { Error, Truncate };

// Conventional display names: x, y, z, w, then x5, x6, ...
std::string var_name(int i);

int mono_degree(const Mono& m);
Mono mono_mul(const Mono& a, const Mono& b);
Mono mono_unit(int vars);                  // all-zero exponent vector
Mono mono_var(int vars, int i);            // the single variable x_i
bool mono_valid(const PolyContext& ctx, const Mono& m);
std::string mono_to_string(const Mono& m);  // "x^2.y", unit is "1"
Mono mono_from_string(const PolyContext& ctx, const std::string& s);

void poly_add_term(Poly& p, const Mono& m, const Rational& c);
void poly_add_scaled(Poly& p, const Poly& q, const Rational& c);
Poly poly_scaled(const Poly& p, const Rational& c);
bool poly_is_zero(const Poly& p);
int poly_max_degree(const Poly& p);  // -1 for the zero polynomial

Poly poly_const(const PolyContext& ctx, const Rational& c);
Poly poly_var(const PolyContext& ctx, int i);

// Throws InvalidInput if a monomial has the wrong arity, negative exponents,
// or exceeds the degree cap.
void poly_validate(const PolyContext& ctx, const Poly& p);

// Product under the degree cap; Overflow::Error throws CapExceeded when an
// exact product monomial would exceed it.
Poly poly_mul(const PolyContext& ctx, const Poly& a, const Poly& b,
              Overflow policy = Overflow::Error);

// Partial derivative in variable i (degree can only drop).
Poly poly_diff(const Poly& p, int i);

// Iterated derivative by a multi-index.
Poly poly_diff_multi(const Poly& p, const Mono& alpha);

std::string poly_to_string(const Poly& p);

nlohmann::json poly_to_json(const Poly& p);
Poly poly_from_json(const PolyContext& ctx, const nlohmann::json& j);

}  // namespace hte
