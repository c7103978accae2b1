#include "htengine/polydiffop.hpp"

#include <algorithm>
#include <bit>
#include <functional>
#include <numeric>
#include <sstream>

#include "htengine/errors.hpp"

namespace hte {

namespace {

int sign_pow(long long e) { return (e % 2 == 0) ? 1 : -1; }

long long factorial(int n) {
  long long f = 1;
  for (int k = 2; k <= n; ++k) f *= k;
  return f;
}

// d^alpha applied to the monomial m: returns the falling-factorial scale and
// the reduced monomial; false if the derivative kills it.
bool diff_mono(const Mono& m, const Mono& alpha, Mono& out, long long& scale) {
  out = m;
  scale = 1;
  for (std::size_t v = 0; v < m.size(); ++v) {
    if (alpha[v] == 0) continue;
    if (m[v] < alpha[v]) return false;
    for (int k = 0; k < alpha[v]; ++k) scale *= (m[v] - k);
    out[v] = m[v] - alpha[v];
  }
  return true;
}

// Enumerate all splittings of alpha into `parts` multi-indices, calling f with
// the parts and the multinomial coefficient of the splitting.
void enumerate_splits(
    const Mono& alpha, int parts,
    const std::function<void(const std::vector<Mono>&, long long)>& f) {
  std::vector<Mono> current(static_cast<std::size_t>(parts),
                            Mono(alpha.size(), 0));
  std::function<void(std::size_t, long long)> rec = [&](std::size_t v,
                                                        long long coeff) {
    if (v == alpha.size()) {
      f(current, coeff);
      return;
    }
    // distribute alpha[v] among `parts` bins
    std::function<void(int, int, long long)> bins = [&](int bin, int remaining,
                                                        long long binom) {
      if (bin == parts - 1) {
        current[static_cast<std::size_t>(bin)][v] = remaining;
        long long c = binom / factorial(remaining);
        rec(v + 1, coeff * c);
        return;
      }
      for (int take = 0; take <= remaining; ++take) {
        current[static_cast<std::size_t>(bin)][v] = take;
        bins(bin + 1, remaining - take, binom / factorial(take));
      }
      current[static_cast<std::size_t>(bin)][v] = 0;
    };
    bins(0, alpha[v], factorial(alpha[v]));
  };
  rec(0, 1);
}

void insert_term(const PolyContext& ctx, PolyDiffOp& out, const DoKey& kd,
                 const Rational& cd, int i, const DoKey& ke, const Rational& ce,
                 Overflow policy) {
  int d = static_cast<int>(kd.slots.size());
  int e = static_cast<int>(ke.slots.size());
  if (i < 0 || i >= d) throw InvalidInput("do_insert_at: slot out of range");
  const Mono& alpha = kd.slots[static_cast<std::size_t>(i)];
  enumerate_splits(alpha, e + 1, [&](const std::vector<Mono>& parts,
                                     long long multinomial) {
    Mono ge;
    long long scale = 0;
    if (!diff_mono(ke.mono, parts[0], ge, scale)) return;
    Mono m = mono_mul(kd.mono, ge);
    if (mono_degree(m) > ctx.degree_cap) {
      if (policy == Overflow::Error)
        throw CapExceeded("operator insertion: coefficient " +
                          mono_to_string(m) + " exceeds degree cap " +
                          std::to_string(ctx.degree_cap));
      return;
    }
    std::vector<Mono> slots;
    slots.reserve(static_cast<std::size_t>(d + e - 1));
    for (int s = 0; s < i; ++s) slots.push_back(kd.slots[static_cast<std::size_t>(s)]);
    for (int s = 0; s < e; ++s)
      slots.push_back(mono_mul(ke.slots[static_cast<std::size_t>(s)],
                               parts[static_cast<std::size_t>(s) + 1]));
    for (int s = i + 1; s < d; ++s)
      slots.push_back(kd.slots[static_cast<std::size_t>(s)]);
    do_add_term(out, DoKey{m, std::move(slots)},
                cd * ce * Rational(static_cast<long>(multinomial * scale)));
  });
}

}  // namespace

int do_term_degree(const DoKey& k) { return static_cast<int>(k.slots.size()) - 1; }

void do_add_term(PolyDiffOp& p, const DoKey& k, const Rational& c) {
  if (c == 0) return;
  auto it = p.find(k);
  if (it == p.end()) {
    p.emplace(k, c);
    return;
  }
  it->second += c;
  if (it->second == 0) p.erase(it);
}

void do_add_scaled(PolyDiffOp& p, const PolyDiffOp& q, const Rational& c) {
  if (c == 0) return;
  for (const auto& [k, v] : q) do_add_term(p, k, c * v);
}

PolyDiffOp do_scaled(const PolyDiffOp& p, const Rational& c) {
  PolyDiffOp out;
  do_add_scaled(out, p, c);
  return out;
}

bool do_is_zero(const PolyDiffOp& p) { return p.empty(); }

bool do_is_homogeneous(const PolyDiffOp& p, int degree) {
  for (const auto& [k, v] : p)
    if (do_term_degree(k) != degree) return false;
  return true;
}

void do_validate(const PolyContext& ctx, const PolyDiffOp& p) {
  for (const auto& [k, v] : p) {
    if (static_cast<int>(k.mono.size()) != ctx.vars)
      throw InvalidInput("operator: coefficient arity mismatch");
    for (int e : k.mono)
      if (e < 0) throw InvalidInput("operator: negative exponent");
    if (mono_degree(k.mono) > ctx.degree_cap)
      throw InvalidInput("operator: coefficient exceeds degree cap");
    for (const Mono& s : k.slots) {
      if (static_cast<int>(s.size()) != ctx.vars)
        throw InvalidInput("operator: slot arity mismatch");
      for (int e : s)
        if (e < 0) throw InvalidInput("operator: negative slot exponent");
    }
    if (v == 0) throw InvalidInput("operator: stored zero coefficient");
  }
}

bool do_vanishes_on_constants(const PolyDiffOp& p) {
  for (const auto& [k, v] : p)
    for (const Mono& s : k.slots)
      if (mono_degree(s) == 0) return false;
  return true;
}

PolyDiffOp do_from_poly(const Poly& f) {
  PolyDiffOp out;
  for (const auto& [m, c] : f) out.emplace(DoKey{m, {}}, c);
  return out;
}

PolyDiffOp product_cochain(const PolyContext& ctx) {
  PolyDiffOp mu;
  mu.emplace(DoKey{mono_unit(ctx.vars),
                   {mono_unit(ctx.vars), mono_unit(ctx.vars)}},
             Rational(1));
  return mu;
}

PolyDiffOp do_insert_at(const PolyContext& ctx, const PolyDiffOp& D, int i,
                        const PolyDiffOp& E, Overflow policy) {
  PolyDiffOp out;
  for (const auto& [kd, cd] : D)
    for (const auto& [ke, ce] : E) insert_term(ctx, out, kd, cd, i, ke, ce, policy);
  return out;
}

PolyDiffOp do_concat(const PolyContext& ctx, const PolyDiffOp& D,
                     const PolyDiffOp& E, Overflow policy) {
  PolyDiffOp out;
  for (const auto& [kd, cd] : D) {
    int d = static_cast<int>(kd.slots.size());
    for (const auto& [ke, ce] : E) {
      int e = static_cast<int>(ke.slots.size());
      for (int i = 0; i < d; ++i) {
        Rational sgn(sign_pow(static_cast<long long>(i) * (e - 1)));
        insert_term(ctx, out, kd, cd * sgn, i, ke, ce, policy);
      }
    }
  }
  return out;
}

PolyDiffOp gerstenhaber_bracket(const PolyContext& ctx, const PolyDiffOp& D,
                                const PolyDiffOp& E, Overflow policy) {
  PolyDiffOp out;
  for (const auto& [kd, cd] : D) {
    int d = static_cast<int>(kd.slots.size());
    for (const auto& [ke, ce] : E) {
      int e = static_cast<int>(ke.slots.size());
      Rational pre(sign_pow(static_cast<long long>(d - 1) * (e - 1)));
      for (int i = 0; i < d; ++i) {
        Rational sgn(sign_pow(static_cast<long long>(i) * (e - 1)));
        insert_term(ctx, out, kd, pre * sgn * cd, i, ke, ce, policy);
      }
      for (int i = 0; i < e; ++i) {
        Rational sgn(sign_pow(static_cast<long long>(i) * (d - 1)));
        insert_term(ctx, out, ke, Rational(-1) * sgn * ce, i, kd, cd, policy);
      }
    }
  }
  return out;
}

PolyDiffOp hochschild_differential(const PolyContext& ctx, const PolyDiffOp& D,
                                   Overflow policy) {
  return gerstenhaber_bracket(ctx, product_cochain(ctx), D, policy);
}

PolyDiffOp do_cup(const PolyContext& ctx, const PolyDiffOp& D,
                  const PolyDiffOp& E, Overflow policy) {
  PolyDiffOp out;
  for (const auto& [kd, cd] : D) {
    for (const auto& [ke, ce] : E) {
      Mono m = mono_mul(kd.mono, ke.mono);
      if (mono_degree(m) > ctx.degree_cap) {
        if (policy == Overflow::Error)
          throw CapExceeded("cup product coefficient exceeds degree cap");
        continue;
      }
      std::vector<Mono> slots = kd.slots;
      slots.insert(slots.end(), ke.slots.begin(), ke.slots.end());
      do_add_term(out, DoKey{m, std::move(slots)}, cd * ce);
    }
  }
  return out;
}

Poly do_apply(const PolyContext& ctx, const PolyDiffOp& D,
              const std::vector<Poly>& args, Overflow policy) {
  Poly out;
  for (const auto& [k, c] : D) {
    if (k.slots.size() != args.size())
      throw InvalidInput("do_apply: argument count mismatch (term wants " +
                         std::to_string(k.slots.size()) + ", got " +
                         std::to_string(args.size()) + ")");
    Poly acc;
    poly_add_term(acc, k.mono, c);
    for (std::size_t s = 0; s < args.size(); ++s) {
      acc = poly_mul(ctx, acc, poly_diff_multi(args[s], k.slots[s]), policy);
      if (acc.empty()) break;
    }
    poly_add_scaled(out, acc, Rational(1));
  }
  return out;
}

PolyDiffOp do_partial_apply(const PolyContext& ctx, const PolyDiffOp& D, int i,
                            const Poly& value, Overflow policy) {
  PolyDiffOp out;
  for (const auto& [k, c] : D) {
    if (i < 0 || i >= static_cast<int>(k.slots.size()))
      throw InvalidInput("do_partial_apply: slot out of range");
    Poly plugged = poly_diff_multi(value, k.slots[static_cast<std::size_t>(i)]);
    std::vector<Mono> slots;
    slots.reserve(k.slots.size() - 1);
    for (std::size_t s = 0; s < k.slots.size(); ++s)
      if (static_cast<int>(s) != i) slots.push_back(k.slots[s]);
    for (const auto& [m, cv] : plugged) {
      Mono mm = mono_mul(k.mono, m);
      if (mono_degree(mm) > ctx.degree_cap) {
        if (policy == Overflow::Error)
          throw CapExceeded("partial application coefficient exceeds degree cap");
        continue;
      }
      do_add_term(out, DoKey{mm, slots}, c * cv);
    }
  }
  return out;
}

PolyDiffOp do_lie_derivative(const PolyContext& ctx, const Polyvector& field,
                             const PolyDiffOp& D, Overflow policy) {
  if (!pv_is_homogeneous(field, 0))
    throw InvalidInput("do_lie_derivative: generator must be a vector field");
  return gerstenhaber_bracket(ctx, hkr(ctx, field), D, policy);
}

PolyDiffOp hkr(const PolyContext& ctx, const Polyvector& p) {
  PolyDiffOp out;
  for (const auto& [k, c] : p) {
    std::vector<int> dirs;
    for (int i = 0; i < ctx.vars; ++i)
      if (k.mask & (std::uint32_t{1} << i)) dirs.push_back(i);
    int kk = static_cast<int>(dirs.size());
    Rational norm = c / Rational(static_cast<long>(factorial(kk)));
    std::vector<int> perm(dirs.begin(), dirs.end());
    std::sort(perm.begin(), perm.end());
    do {
      // permutation sign by inversion count against the sorted order
      int inv = 0;
      for (std::size_t a = 0; a < perm.size(); ++a)
        for (std::size_t b = a + 1; b < perm.size(); ++b)
          if (perm[a] > perm[b]) ++inv;
      std::vector<Mono> slots;
      slots.reserve(perm.size());
      for (int dir : perm) slots.push_back(mono_var(ctx.vars, dir));
      do_add_term(out, DoKey{k.mono, std::move(slots)},
                  norm * Rational(sign_pow(inv)));
    } while (std::next_permutation(perm.begin(), perm.end()));
  }
  return out;
}

std::vector<PolyDiffOp> moyal_star(const PolyContext& ctx,
                                   const Polyvector& pi_const, int K) {
  if (!pv_is_homogeneous(pi_const, 1))
    throw InvalidInput("moyal_star: structure must be a bivector");
  for (const auto& [k, c] : pi_const)
    if (mono_degree(k.mono) != 0)
      throw InvalidInput("moyal_star: structure must have constant coefficients");
  if (K < 0) throw InvalidInput("moyal_star: negative order");
  int n = ctx.vars;
  std::vector<std::vector<Rational>> P(static_cast<std::size_t>(n),
                                       std::vector<Rational>(n, Rational(0)));
  for (const auto& [k, c] : pi_const) {
    int i = -1, j = -1;
    for (int v = 0; v < n; ++v)
      if (k.mask & (std::uint32_t{1} << v)) (i < 0 ? i : j) = v;
    P[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] += c;
    P[static_cast<std::size_t>(j)][static_cast<std::size_t>(i)] -= c;
  }
  std::vector<PolyDiffOp> series;
  series.push_back(product_cochain(ctx));
  for (int r = 1; r <= K; ++r) {
    PolyDiffOp mr;
    Rational norm = Rational(1) / Rational(static_cast<long>(factorial(r))) /
                    Rational(static_cast<long>(1LL << r));
    std::vector<int> idx(static_cast<std::size_t>(2 * r), 0);
    // iterate over all (i_1,j_1,...,i_r,j_r) in [0,n)^{2r}
    while (true) {
      Rational coeff = norm;
      Mono left = mono_unit(n);
      Mono right = mono_unit(n);
      for (int a = 0; a < r; ++a) {
        int ia = idx[static_cast<std::size_t>(2 * a)];
        int ja = idx[static_cast<std::size_t>(2 * a + 1)];
        coeff *= P[static_cast<std::size_t>(ia)][static_cast<std::size_t>(ja)];
        if (coeff == 0) break;
        ++left[static_cast<std::size_t>(ia)];
        ++right[static_cast<std::size_t>(ja)];
      }
      if (coeff != 0)
        do_add_term(mr, DoKey{mono_unit(n), {left, right}}, coeff);
      int pos = 2 * r - 1;
      while (pos >= 0 && idx[static_cast<std::size_t>(pos)] == n - 1) {
        idx[static_cast<std::size_t>(pos)] = 0;
        --pos;
      }
      if (pos < 0) break;
      ++idx[static_cast<std::size_t>(pos)];
    }
    series.push_back(std::move(mr));
  }
  return series;
}

std::string do_to_string(const PolyDiffOp& p) {
  if (p.empty()) return "0";
  std::ostringstream os;
  bool first = true;
  for (const auto& [k, c] : p) {
    if (!first) os << " + ";
    first = false;
    os << c.str() << "*" << mono_to_string(k.mono) << "*(";
    for (std::size_t s = 0; s < k.slots.size(); ++s) {
      if (s) os << "|";
      os << "d[" << mono_to_string(k.slots[s]) << "]";
    }
    os << ")";
  }
  return os.str();
}

nlohmann::json do_to_json(const PolyDiffOp& p) {
  nlohmann::json terms = nlohmann::json::array();
  for (const auto& [k, c] : p) {
    nlohmann::json t;
    t["coeff"] = mono_to_string(k.mono);
    nlohmann::json slots = nlohmann::json::array();
    for (const Mono& s : k.slots) slots.push_back(mono_to_string(s));
    t["slots"] = slots;
    t["value"] = c.str();
    terms.push_back(t);
  }
  return terms;
}

PolyDiffOp do_from_json(const PolyContext& ctx, const nlohmann::json& j) {
  if (!j.is_array()) throw InvalidInput("operator json: expected array of terms");
  PolyDiffOp out;
  for (const auto& t : j) {
    Mono m = mono_from_string(ctx, t.at("coeff").get<std::string>());
    std::vector<Mono> slots;
    for (const auto& s : t.at("slots"))
      slots.push_back(mono_from_string(ctx, s.get<std::string>()));
    do_add_term(out, DoKey{m, std::move(slots)},
                Rational::parse(t.at("value").get<std::string>()));
  }
  do_validate(ctx, out);
  return out;
}

}  // namespace hte
