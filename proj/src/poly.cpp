#include "htengine/poly.hpp"

#include <sstream>

#include "htengine/errors.hpp"

namespace hte {

std::string var_name(int i) {
  static const char* kNames[] = {"x", "y", "z", "w"};
  if (i >= 0 && i < 4) return kNames[i];
  return "x" + std::to_string(i + 1);
}

int mono_degree(const Mono& m) {
  int d = 0;
  for (int e : m) d += e;
  return d;
}

Mono mono_mul(const Mono& a, const Mono& b) {
  if (a.size() != b.size()) throw InvalidInput("mono_mul: arity mismatch");
  Mono out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
  return out;
}

Mono mono_unit(int vars) { return Mono(static_cast<std::size_t>(vars), 0); }

Mono mono_var(int vars, int i) {
  if (i < 0 || i >= vars) throw InvalidInput("mono_var: index out of range");
  Mono m = mono_unit(vars);
  m[static_cast<std::size_t>(i)] = 1;
  return m;
}

bool mono_valid(const PolyContext& ctx, const Mono& m) {
  if (static_cast<int>(m.size()) != ctx.vars) return false;
  for (int e : m)
    if (e < 0) return false;
  return mono_degree(m) <= ctx.degree_cap;
}

std::string mono_to_string(const Mono& m) {
  std::ostringstream os;
  bool first = true;
  for (std::size_t i = 0; i < m.size(); ++i) {
    if (m[i] == 0) continue;
    if (!first) os << ".";
    first = false;
    os << var_name(static_cast<int>(i));
    if (m[i] != 1) os << "^" << m[i];
  }
  if (first) return "1";
  return os.str();
}

Mono mono_from_string(const PolyContext& ctx, const std::string& s) {
  Mono m = mono_unit(ctx.vars);
  if (s == "1") return m;
  std::size_t pos = 0;
  while (pos < s.size()) {
    std::size_t dot = s.find('.', pos);
    std::string factor =
        s.substr(pos, dot == std::string::npos ? std::string::npos : dot - pos);
    pos = (dot == std::string::npos) ? s.size() : dot + 1;
    if (factor.empty()) throw InvalidInput("monomial string: empty factor");
    std::size_t caret = factor.find('^');
    std::string name = factor.substr(0, caret);
    int power = 1;
    if (caret != std::string::npos) {
      try {
        power = std::stoi(factor.substr(caret + 1));
      } catch (const std::exception&) {
        throw InvalidInput("monomial string: bad exponent in '" + factor + "'");
      }
    }
    if (power <= 0) throw InvalidInput("monomial string: exponent must be positive");
    int var = -1;
    for (int i = 0; i < ctx.vars; ++i) {
      if (var_name(i) == name) {
        var = i;
        break;
      }
    }
    if (var < 0) throw InvalidInput("monomial string: unknown variable '" + name + "'");
    m[static_cast<std::size_t>(var)] += power;
  }
  return m;
}

void poly_add_term(Poly& p, const Mono& m, const Rational& c) {
  if (c == 0) return;
  auto it = p.find(m);
  if (it == p.end()) {
    p.emplace(m, c);
    return;
  }
  it->second += c;
  if (it->second == 0) p.erase(it);
}

void poly_add_scaled(Poly& p, const Poly& q, const Rational& c) {
  if (c == 0) return;
  for (const auto& [m, v] : q) poly_add_term(p, m, c * v);
}

Poly poly_scaled(const Poly& p, const Rational& c) {
  Poly out;
  poly_add_scaled(out, p, c);
  return out;
}

bool poly_is_zero(const Poly& p) { return p.empty(); }

int poly_max_degree(const Poly& p) {
  int d = -1;
  for (const auto& [m, v] : p) d = std::max(d, mono_degree(m));
  return d;
}

Poly poly_const(const PolyContext& ctx, const Rational& c) {
  Poly p;
  poly_add_term(p, mono_unit(ctx.vars), c);
  return p;
}

Poly poly_var(const PolyContext& ctx, int i) {
  Poly p;
  poly_add_term(p, mono_var(ctx.vars, i), Rational(1));
  return p;
}

void poly_validate(const PolyContext& ctx, const Poly& p) {
  for (const auto& [m, v] : p) {
    if (static_cast<int>(m.size()) != ctx.vars)
      throw InvalidInput("polynomial: monomial arity mismatch");
    for (int e : m)
      if (e < 0) throw InvalidInput("polynomial: negative exponent");
    if (mono_degree(m) > ctx.degree_cap)
      throw InvalidInput("polynomial: monomial " + mono_to_string(m) +
                         " exceeds degree cap " + std::to_string(ctx.degree_cap));
    if (v == 0) throw InvalidInput("polynomial: stored zero coefficient");
  }
}

Poly poly_mul(const PolyContext& ctx, const Poly& a, const Poly& b,
              Overflow policy) {
  Poly out;
  for (const auto& [ma, ca] : a) {
    for (const auto& [mb, cb] : b) {
      Mono m = mono_mul(ma, mb);
      if (mono_degree(m) > ctx.degree_cap) {
        if (policy == Overflow::Error)
          throw CapExceeded("product monomial " + mono_to_string(m) +
                            " exceeds degree cap " +
                            std::to_string(ctx.degree_cap));
        continue;
      }
      poly_add_term(out, m, ca * cb);
    }
  }
  return out;
}

Poly poly_diff(const Poly& p, int i) {
  Poly out;
  for (const auto& [m, c] : p) {
    if (i < 0 || i >= static_cast<int>(m.size()))
      throw InvalidInput("poly_diff: variable index out of range");
    int e = m[static_cast<std::size_t>(i)];
    if (e == 0) continue;
    Mono md = m;
    md[static_cast<std::size_t>(i)] = e - 1;
    poly_add_term(out, md, c * Rational(e));
  }
  return out;
}

Poly poly_diff_multi(const Poly& p, const Mono& alpha) {
  Poly out = p;
  for (std::size_t i = 0; i < alpha.size(); ++i)
    for (int k = 0; k < alpha[i]; ++k) out = poly_diff(out, static_cast<int>(i));
  return out;
}

std::string poly_to_string(const Poly& p) {
  if (p.empty()) return "0";
  std::ostringstream os;
  bool first = true;
  for (const auto& [m, c] : p) {
    if (!first) os << " + ";
    first = false;
    os << c.str() << "*" << mono_to_string(m);
  }
  return os.str();
}

nlohmann::json poly_to_json(const Poly& p) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [m, c] : p) j[mono_to_string(m)] = c.str();
  return j;
}

Poly poly_from_json(const PolyContext& ctx, const nlohmann::json& j) {
  if (!j.is_object()) throw InvalidInput("polynomial json: expected object");
  Poly p;
  for (auto it = j.begin(); it != j.end(); ++it) {
    Mono m = mono_from_string(ctx, it.key());
    poly_add_term(p, m, Rational::parse(it.value().get<std::string>()));
  }
  poly_validate(ctx, p);
  return p;
}

}  // namespace hte
