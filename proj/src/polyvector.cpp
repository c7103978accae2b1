#include "htengine/polyvector.hpp"

#include <bit>
#include <sstream>

#include "htengine/errors.hpp"

namespace hte {

namespace {

int bits_below(std::uint32_t mask, int i) {
  return std::popcount(mask & ((std::uint32_t{1} << i) - 1));
}

int bits_above(std::uint32_t mask, int i) {
  return std::popcount(mask >> (i + 1));
}

// Sign of concatenating ordered wedge factors of `a` before those of `b`
// and re-sorting into increasing order.
int merge_sign(std::uint32_t a, std::uint32_t b) {
  int crossings = 0;
  for (int i = 0; i < 32; ++i)
    if (b & (std::uint32_t{1} << i)) crossings += bits_above(a, i);
  return (crossings % 2 == 0) ? 1 : -1;
}

// Multiply two terms into `out` (0 if wedge factors collide).
void term_mul_into(const PolyContext& ctx, Polyvector& out, const PvKey& ka,
                   const Rational& ca, const PvKey& kb, const Rational& cb,
                   Overflow policy) {
  if (ka.mask & kb.mask) return;
  Mono m = mono_mul(ka.mono, kb.mono);
  if (mono_degree(m) > ctx.degree_cap) {
    if (policy == Overflow::Error)
      throw CapExceeded("polyvector product monomial " + mono_to_string(m) +
                        " exceeds degree cap " + std::to_string(ctx.degree_cap));
    return;
  }
  Rational c = ca * cb * Rational(merge_sign(ka.mask, kb.mask));
  pv_add_term(out, PvKey{m, ka.mask | kb.mask}, c);
}

}  // namespace

int pv_mask_arity(std::uint32_t mask) { return std::popcount(mask); }

int pv_term_degree(const PvKey& k) { return pv_mask_arity(k.mask) - 1; }

void pv_add_term(Polyvector& p, const PvKey& k, const Rational& c) {
  if (c == 0) return;
  auto it = p.find(k);
  if (it == p.end()) {
    p.emplace(k, c);
    return;
  }
  it->second += c;
  if (it->second == 0) p.erase(it);
}

void pv_add_scaled(Polyvector& p, const Polyvector& q, const Rational& c) {
  if (c == 0) return;
  for (const auto& [k, v] : q) pv_add_term(p, k, c * v);
}

Polyvector pv_scaled(const Polyvector& p, const Rational& c) {
  Polyvector out;
  pv_add_scaled(out, p, c);
  return out;
}

bool pv_is_zero(const Polyvector& p) { return p.empty(); }

bool pv_is_homogeneous(const Polyvector& p, int degree) {
  for (const auto& [k, v] : p)
    if (pv_term_degree(k) != degree) return false;
  return true;
}

void pv_validate(const PolyContext& ctx, const Polyvector& p) {
  for (const auto& [k, v] : p) {
    if (static_cast<int>(k.mono.size()) != ctx.vars)
      throw InvalidInput("polyvector: monomial arity mismatch");
    for (int e : k.mono)
      if (e < 0) throw InvalidInput("polyvector: negative exponent");
    if (mono_degree(k.mono) > ctx.degree_cap)
      throw InvalidInput("polyvector: coefficient exceeds degree cap");
    if (k.mask >> ctx.vars)
      throw InvalidInput("polyvector: wedge direction out of range");
    if (v == 0) throw InvalidInput("polyvector: stored zero coefficient");
  }
}

Polyvector pv_from_poly(const Poly& f) {
  Polyvector out;
  for (const auto& [m, c] : f) pv_add_term(out, PvKey{m, 0}, c);
  return out;
}

Polyvector pv_field(const PolyContext& ctx, const std::vector<Poly>& coeffs) {
  if (static_cast<int>(coeffs.size()) != ctx.vars)
    throw InvalidInput("pv_field: need one coefficient per variable");
  Polyvector out;
  for (int i = 0; i < ctx.vars; ++i)
    for (const auto& [m, c] : coeffs[static_cast<std::size_t>(i)])
      pv_add_term(out, PvKey{m, std::uint32_t{1} << i}, c);
  return out;
}

Polyvector pv_wedge(const PolyContext& ctx, const Polyvector& a,
                    const Polyvector& b, Overflow policy) {
  Polyvector out;
  for (const auto& [ka, ca] : a)
    for (const auto& [kb, cb] : b) term_mul_into(ctx, out, ka, ca, kb, cb, policy);
  return out;
}

Polyvector schouten_bracket(const PolyContext& ctx, const Polyvector& a,
                            const Polyvector& b, Overflow policy) {
  Polyvector out;
  for (const auto& [ka, ca] : a) {
    for (const auto& [kb, cb] : b) {
      for (int i = 0; i < ctx.vars; ++i) {
        std::uint32_t bit = std::uint32_t{1} << i;
        // (right wedge-derivative of a) * (coefficient derivative of b)
        if ((ka.mask & bit) && kb.mono[static_cast<std::size_t>(i)] > 0) {
          int sgn = (bits_above(ka.mask, i) % 2 == 0) ? 1 : -1;
          PvKey da{ka.mono, ka.mask & ~bit};
          Mono mb = kb.mono;
          int e = mb[static_cast<std::size_t>(i)];
          mb[static_cast<std::size_t>(i)] = e - 1;
          term_mul_into(ctx, out, da, ca * Rational(sgn), PvKey{mb, kb.mask},
                        cb * Rational(e), policy);
        }
        // minus (coefficient derivative of a) * (left wedge-derivative of b)
        if (ka.mono[static_cast<std::size_t>(i)] > 0 && (kb.mask & bit)) {
          Mono ma = ka.mono;
          int e = ma[static_cast<std::size_t>(i)];
          ma[static_cast<std::size_t>(i)] = e - 1;
          int sgn = (bits_below(kb.mask, i) % 2 == 0) ? 1 : -1;
          PvKey db{kb.mono, kb.mask & ~bit};
          term_mul_into(ctx, out, PvKey{ma, ka.mask}, ca * Rational(-e),
                        db, cb * Rational(sgn), policy);
        }
      }
    }
  }
  return out;
}

Polyvector pv_lie_derivative(const PolyContext& ctx, const Polyvector& field,
                             const Polyvector& p, Overflow policy) {
  if (!pv_is_homogeneous(field, 0))
    throw InvalidInput("pv_lie_derivative: generator must be a vector field");
  return schouten_bracket(ctx, field, p, policy);
}

Poly pv_poisson(const PolyContext& ctx, const Polyvector& pi, const Poly& f,
                const Poly& g, Overflow policy) {
  if (!pv_is_homogeneous(pi, 1))
    throw InvalidInput("pv_poisson: first argument must be a bivector");
  Poly out;
  for (const auto& [k, c] : pi) {
    int i = -1, j = -1;
    for (int v = 0; v < ctx.vars; ++v) {
      if (k.mask & (std::uint32_t{1} << v)) {
        if (i < 0)
          i = v;
        else
          j = v;
      }
    }
    Poly coeff;
    poly_add_term(coeff, k.mono, c);
    Poly skew = poly_mul(ctx, poly_diff(f, i), poly_diff(g, j), policy);
    poly_add_scaled(skew, poly_mul(ctx, poly_diff(f, j), poly_diff(g, i), policy),
                    Rational(-1));
    poly_add_scaled(out, poly_mul(ctx, coeff, skew, policy), Rational(1));
  }
  return out;
}

std::string pv_mask_to_string(std::uint32_t mask) {
  if (mask == 0) return "1";
  std::ostringstream os;
  bool first = true;
  for (int i = 0; i < 32; ++i) {
    if (!(mask & (std::uint32_t{1} << i))) continue;
    if (!first) os << "^";
    first = false;
    os << "d" << var_name(i);
  }
  return os.str();
}

std::uint32_t pv_mask_from_string(const PolyContext& ctx, const std::string& s) {
  if (s == "1") return 0;
  std::uint32_t mask = 0;
  std::size_t pos = 0;
  while (pos < s.size()) {
    std::size_t caret = s.find('^', pos);
    std::string factor =
        s.substr(pos, caret == std::string::npos ? std::string::npos : caret - pos);
    pos = (caret == std::string::npos) ? s.size() : caret + 1;
    if (factor.size() < 2 || factor[0] != 'd')
      throw InvalidInput("wedge string: bad factor '" + factor + "'");
    std::string name = factor.substr(1);
    int var = -1;
    for (int i = 0; i < ctx.vars; ++i) {
      if (var_name(i) == name) {
        var = i;
        break;
      }
    }
    if (var < 0) throw InvalidInput("wedge string: unknown direction '" + name + "'");
    std::uint32_t bit = std::uint32_t{1} << var;
    if (mask & bit) throw InvalidInput("wedge string: repeated direction");
    if (mask >= bit)
      throw InvalidInput("wedge string: directions must increase");
    mask |= bit;
  }
  return mask;
}

std::string pv_to_string(const Polyvector& p) {
  if (p.empty()) return "0";
  std::ostringstream os;
  bool first = true;
  for (const auto& [k, c] : p) {
    if (!first) os << " + ";
    first = false;
    os << c.str() << "*" << mono_to_string(k.mono);
    if (k.mask != 0) os << "*" << pv_mask_to_string(k.mask);
  }
  return os.str();
}

nlohmann::json pv_to_json(const Polyvector& p) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [k, c] : p) {
    std::string mk = pv_mask_to_string(k.mask);
    if (!j.contains(mk)) j[mk] = nlohmann::json::object();
    j[mk][mono_to_string(k.mono)] = c.str();
  }
  return j;
}

Polyvector pv_from_json(const PolyContext& ctx, const nlohmann::json& j) {
  if (!j.is_object()) throw InvalidInput("polyvector json: expected object");
  Polyvector out;
  for (auto it = j.begin(); it != j.end(); ++it) {
    std::uint32_t mask = pv_mask_from_string(ctx, it.key());
    Poly coeff = poly_from_json(ctx, it.value());
    for (const auto& [m, c] : coeff) pv_add_term(out, PvKey{m, mask}, c);
  }
  pv_validate(ctx, out);
  return out;
}

}  // namespace hte
