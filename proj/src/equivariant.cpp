#include "htengine/equivariant.hpp"

#include <algorithm>
#include <cstdint>
#include <functional>
#include <optional>
#include <sstream>
#include <utility>

#include "htengine/errors.hpp"

namespace hte {

const EquivPolyvector& eq_pv_value_letter(const EquivariantComplex& C,
                                          const Letter& l);
const EquivDiffOp& eq_do_value_letter(const EquivariantComplex& C,
                                      const Letter& l);

namespace {

// Geometric brackets and flows are computed in a widened coefficient window:
// operator composition passes through intermediate products of two
// coefficients before cancellation, so the honest cap for intermediates is
// twice the structural one (plus slack for the one derivative a flow adds).
// Results are exact; membership in a finite model is a separate span check.
PolyContext widened(const PolyContext& ctx) {
  return PolyContext{ctx.vars, 2 * ctx.degree_cap + 2};
}

bool mat_is_zero(const Mat& m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      if (!(m(i, j) == Rational(0))) return false;
  return true;
}

std::string dot_free(std::string s) {
  std::replace(s.begin(), s.end(), '.', '*');
  return s;
}

std::vector<Mono> monos_up_to(int vars, int max_degree) {
  std::vector<Mono> out;
  Mono current = Mono(static_cast<std::size_t>(vars), 0);
  std::function<void(int, int)> rec = [&](int var, int remaining) {
    if (var == vars) {
      out.push_back(current);
      return;
    }
    for (int e = 0; e <= remaining; ++e) {
      current[static_cast<std::size_t>(var)] = e;
      rec(var + 1, remaining - e);
    }
    current[static_cast<std::size_t>(var)] = 0;
  };
  rec(0, max_degree);
  std::sort(out.begin(), out.end());
  return out;
}

std::string gw_name(int gdim, int a) {
  return gdim == 1 ? std::string("u") : "u" + std::to_string(a + 1);
}

std::string gw_to_string(const Mono& gw) {
  std::ostringstream os;
  bool first = true;
  int gdim = static_cast<int>(gw.size());
  for (int a = 0; a < gdim; ++a) {
    int e = gw[static_cast<std::size_t>(a)];
    if (e == 0) continue;
    if (!first) os << ".";
    first = false;
    os << gw_name(gdim, a);
    if (e > 1) os << "^" << e;
  }
  return first ? std::string() : os.str();
}

std::string pv_key_to_string(const PvKey& k) {
  std::string mono = mono_to_string(k.mono);
  if (k.mask == 0) return mono;
  std::string mask = pv_mask_to_string(k.mask);
  if (mono == "1") return mask;
  return mono + "*" + mask;
}

std::string do_key_to_string(const DoKey& k) {
  std::string out = mono_to_string(k.mono);
  for (const Mono& s : k.slots) out += "|" + mono_to_string(s);
  return out;
}

std::string eq_pv_key_to_string(const EqPvKey& k) {
  std::string gw = gw_to_string(k.gw);
  std::string base = pv_key_to_string(k.pv);
  return gw.empty() ? base : gw + ":" + base;
}

std::string eq_do_key_to_string(const EqDoKey& k) {
  std::string gw = gw_to_string(k.gw);
  std::string base = do_key_to_string(k.op);
  return gw.empty() ? base : gw + ":" + base;
}

// Group the terms of an equivariant element by their symmetric weight so the
// geometric machinery runs once per weight pair.
std::map<Mono, Polyvector> pv_by_weight(const EquivPolyvector& p) {
  std::map<Mono, Polyvector> out;
  for (const auto& [k, v] : p) pv_add_term(out[k.gw], k.pv, v);
  return out;
}

std::map<Mono, PolyDiffOp> do_by_weight(const EquivDiffOp& p) {
  std::map<Mono, PolyDiffOp> out;
  for (const auto& [k, v] : p) do_add_term(out[k.gw], k.op, v);
  return out;
}

void pv_absorb(EquivPolyvector& out, const Mono& gw, const Polyvector& p,
               const Rational& c = Rational(1)) {
  for (const auto& [k, v] : p) eq_pv_add_term(out, EqPvKey{gw, k}, c * v);
}

void do_absorb(EquivDiffOp& out, const Mono& gw, const PolyDiffOp& p,
               const Rational& c = Rational(1)) {
  for (const auto& [k, v] : p) eq_do_add_term(out, EqDoKey{gw, k}, c * v);
}

// Coadjoint derivative of a symmetric-weight monomial along generator a:
//   ad*_a u_k = -sum_j c^k_{aj} u_j,
// extended as a derivation; emits (monomial, coefficient) pairs.
std::vector<std::pair<Mono, Rational>> coadjoint_terms(const LieData& g, int a,
                                                       const Mono& gw) {
  std::vector<std::pair<Mono, Rational>> out;
  int dim = g.dim;
  for (int k = 0; k < dim; ++k) {
    int e = gw[static_cast<std::size_t>(k)];
    if (e == 0) continue;
    for (int j = 0; j < dim; ++j) {
      Rational c = g.c[static_cast<std::size_t>(k)](a, j);
      if (c == Rational(0)) continue;
      Mono m = gw;
      m[static_cast<std::size_t>(k)] -= 1;
      m[static_cast<std::size_t>(j)] += 1;
      out.emplace_back(std::move(m), Rational(-e) * c);
    }
  }
  return out;
}

// Exact reduced row echelon form; rows are modified in place, zero rows are
// dropped, and the result is the unique canonical basis of the row space.
void rref(std::vector<std::vector<Rational>>& rows) {
  if (rows.empty()) return;
  std::size_t cols = rows[0].size();
  std::size_t lead = 0;
  std::size_t r = 0;
  for (; r < rows.size() && lead < cols; ++lead) {
    std::size_t piv = r;
    while (piv < rows.size() && rows[piv][lead] == Rational(0)) ++piv;
    if (piv == rows.size()) continue;
    std::swap(rows[r], rows[piv]);
    Rational inv = Rational(1) / rows[r][lead];
    for (std::size_t c = lead; c < cols; ++c) rows[r][c] = rows[r][c] * inv;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (i == r) continue;
      Rational f = rows[i][lead];
      if (f == Rational(0)) continue;
      for (std::size_t c = lead; c < cols; ++c)
        rows[i][c] = rows[i][c] - f * rows[r][c];
    }
    ++r;
  }
  rows.resize(r);
}

// Exact linear solver against a fixed spanning family, reused across many
// right-hand sides.  Keys absent from every basis element fail immediately.
template <class M>
struct SpanSolver {
  std::map<typename M::key_type, Eigen::Index> rows;
  Eigen::FullPivLU<Mat> lu;
  Mat a;
  std::size_t n = 0;

  explicit SpanSolver(const std::vector<M>& basis) {
    n = basis.size();
    for (const M& b : basis)
      for (const auto& [k, v] : b) rows.emplace(k, 0);
    Eigen::Index r = 0;
    for (auto& [k, row] : rows) row = r++;
    a = zero_mat(std::max<Eigen::Index>(r, 1),
                 std::max<Eigen::Index>(static_cast<Eigen::Index>(n), 1));
    for (std::size_t c = 0; c < basis.size(); ++c)
      for (const auto& [k, v] : basis[c])
        a(rows.at(k), static_cast<Eigen::Index>(c)) = v;
    lu.compute(a);
  }

  std::optional<std::vector<Rational>> solve(const M& target) const {
    Vec b = Vec::Constant(a.rows(), Rational(0));
    for (const auto& [k, v] : target) {
      auto it = rows.find(k);
      if (it == rows.end()) return std::nullopt;
      b(it->second) = v;
    }
    Vec x = lu.solve(b);
    Vec res = a * x - b;
    for (Eigen::Index i = 0; i < res.size(); ++i)
      if (!(res(i) == Rational(0))) return std::nullopt;
    std::vector<Rational> out(n);
    for (std::size_t c = 0; c < n; ++c)
      out[c] = x(static_cast<Eigen::Index>(c));
    return out;
  }
};

}  // namespace

// ---- Lie data and actions -------------------------------------------------

LieData LieData::abelian(int dim) {
  LieData g;
  g.dim = dim;
  for (int k = 0; k < dim; ++k) g.c.push_back(zero_mat(dim, dim));
  return g;
}

LieData make_lie_data(int dim, std::vector<Mat> c) {
  if (dim < 0) throw InvalidInput("lie data: negative dimension");
  if (static_cast<int>(c.size()) != dim)
    throw InvalidInput("lie data: need one structure matrix per basis element");
  for (const Mat& m : c)
    if (m.rows() != dim || m.cols() != dim)
      throw InvalidInput("lie data: structure matrix has the wrong shape");
  for (int k = 0; k < dim; ++k)
    for (int i = 0; i < dim; ++i)
      for (int j = 0; j < dim; ++j)
        if (!(c[static_cast<std::size_t>(k)](i, j) ==
              -c[static_cast<std::size_t>(k)](j, i)))
          throw InvalidInput("lie data: structure constants are not antisymmetric");
  // Jacobi: sum_m c^m_{ij} c^l_{mk} + c^m_{jk} c^l_{mi} + c^m_{ki} c^l_{mj} = 0.
  for (int i = 0; i < dim; ++i)
    for (int j = 0; j < dim; ++j)
      for (int k = 0; k < dim; ++k)
        for (int l = 0; l < dim; ++l) {
          Rational s(0);
          for (int m = 0; m < dim; ++m) {
            s += c[static_cast<std::size_t>(m)](i, j) *
                 c[static_cast<std::size_t>(l)](m, k);
            s += c[static_cast<std::size_t>(m)](j, k) *
                 c[static_cast<std::size_t>(l)](m, i);
            s += c[static_cast<std::size_t>(m)](k, i) *
                 c[static_cast<std::size_t>(l)](m, j);
          }
          if (!(s == Rational(0)))
            throw InvalidInput("lie data: the Jacobi identity fails");
        }
  LieData g;
  g.dim = dim;
  g.c = std::move(c);
  return g;
}

std::vector<Rational> lie_bracket_coeffs(const LieData& g, int i, int j) {
  if (i < 0 || i >= g.dim || j < 0 || j >= g.dim)
    throw InvalidInput("lie bracket: generator index out of range");
  std::vector<Rational> out(static_cast<std::size_t>(g.dim), Rational(0));
  for (int k = 0; k < g.dim; ++k)
    out[static_cast<std::size_t>(k)] = g.c[static_cast<std::size_t>(k)](i, j);
  return out;
}

Polyvector fundamental_field(const LinearAction& a, int generator) {
  if (generator < 0 || generator >= a.g.dim)
    throw InvalidInput("fundamental field: generator index out of range");
  PolyContext ctx{a.vars, 1};  // affine coefficients
  std::vector<Poly> coeffs(static_cast<std::size_t>(a.vars));
  const Mat& rho = a.rho[static_cast<std::size_t>(generator)];
  const Vec& drift = a.drift[static_cast<std::size_t>(generator)];
  for (int i = 0; i < a.vars; ++i) {
    Poly p;
    for (int j = 0; j < a.vars; ++j)
      poly_add_term(p, mono_var(a.vars, j), -rho(i, j));
    poly_add_term(p, mono_unit(a.vars), -drift(i));
    coeffs[static_cast<std::size_t>(i)] = std::move(p);
  }
  return pv_field(ctx, coeffs);
}

Polyvector fundamental_field(const LinearAction& a,
                             const std::vector<Rational>& xi) {
  if (static_cast<int>(xi.size()) != a.g.dim)
    throw InvalidInput("fundamental field: coefficient count mismatch");
  Polyvector out;
  for (int g = 0; g < a.g.dim; ++g)
    pv_add_scaled(out, fundamental_field(a, g), xi[static_cast<std::size_t>(g)]);
  return out;
}

LinearAction make_linear_action(LieData g, int vars, std::vector<Mat> rho,
                                std::vector<Vec> drift) {
  if (vars <= 0) throw InvalidInput("linear action: need at least one variable");
  if (static_cast<int>(rho.size()) != g.dim)
    throw InvalidInput("linear action: need one matrix per generator");
  for (const Mat& m : rho)
    if (m.rows() != vars || m.cols() != vars)
      throw InvalidInput("linear action: matrix has the wrong shape");
  if (drift.empty())
    drift.assign(static_cast<std::size_t>(g.dim), Vec::Constant(vars, Rational(0)));
  if (static_cast<int>(drift.size()) != g.dim)
    throw InvalidInput("linear action: need one drift vector per generator");
  for (const Vec& v : drift)
    if (v.size() != vars)
      throw InvalidInput("linear action: drift vector has the wrong shape");
  LinearAction a;
  a.g = std::move(g);
  a.vars = vars;
  a.rho = std::move(rho);
  a.drift = std::move(drift);
  // The fundamental fields must represent the Lie algebra:
  // [xi_M, eta_M] = ([xi, eta])_M for all generator pairs.
  PolyContext ctx{vars, 2};
  for (int i = 0; i < a.g.dim; ++i)
    for (int j = i + 1; j < a.g.dim; ++j) {
      Polyvector lhs = schouten_bracket(ctx, fundamental_field(a, i),
                                        fundamental_field(a, j));
      Polyvector rhs = fundamental_field(a, lie_bracket_coeffs(a.g, i, j));
      pv_add_scaled(lhs, rhs, Rational(-1));
      if (!pv_is_zero(lhs))
        throw InvalidInput(
            "linear action: the fundamental fields do not represent the bracket");
    }
  return a;
}

LinearAction rotation_action_r2() {
  Mat rho = zero_mat(2, 2);
  rho(0, 1) = Rational(-1);
  rho(1, 0) = Rational(1);
  return make_linear_action(LieData::abelian(1), 2, {rho});
}

LinearAction translation_action_r2() {
  Mat rho = zero_mat(2, 2);
  Vec drift = Vec::Constant(2, Rational(0));
  drift(0) = Rational(1);
  return make_linear_action(LieData::abelian(1), 2, {rho}, {drift});
}

LinearAction trivial_action(LieData g, int vars) {
  std::vector<Mat> rho(static_cast<std::size_t>(g.dim), zero_mat(vars, vars));
  return make_linear_action(std::move(g), vars, std::move(rho));
}

// ---- equivariant elements -------------------------------------------------

int eq_pv_term_degree(const EqPvKey& k) {
  return 2 * mono_degree(k.gw) + pv_term_degree(k.pv);
}

int eq_do_term_degree(const EqDoKey& k) {
  return 2 * mono_degree(k.gw) + do_term_degree(k.op);
}

void eq_pv_add_term(EquivPolyvector& p, const EqPvKey& k, const Rational& c) {
  if (c == Rational(0)) return;
  auto it = p.find(k);
  if (it == p.end()) {
    p.emplace(k, c);
  } else {
    it->second += c;
    if (it->second == Rational(0)) p.erase(it);
  }
}

void eq_pv_add_scaled(EquivPolyvector& a, const EquivPolyvector& b,
                      const Rational& c) {
  for (const auto& [k, v] : b) eq_pv_add_term(a, k, c * v);
}

void eq_do_add_term(EquivDiffOp& p, const EqDoKey& k, const Rational& c) {
  if (c == Rational(0)) return;
  auto it = p.find(k);
  if (it == p.end()) {
    p.emplace(k, c);
  } else {
    it->second += c;
    if (it->second == Rational(0)) p.erase(it);
  }
}

void eq_do_add_scaled(EquivDiffOp& a, const EquivDiffOp& b, const Rational& c) {
  for (const auto& [k, v] : b) eq_do_add_term(a, k, c * v);
}

bool eq_pv_is_homogeneous(const EquivPolyvector& p, int degree) {
  for (const auto& [k, v] : p)
    if (eq_pv_term_degree(k) != degree) return false;
  return true;
}

bool eq_do_is_homogeneous(const EquivDiffOp& p, int degree) {
  for (const auto& [k, v] : p)
    if (eq_do_term_degree(k) != degree) return false;
  return true;
}

EquivPolyvector eq_pv_from(int gdim, const Polyvector& x) {
  EquivPolyvector out;
  pv_absorb(out, mono_unit(gdim), x);
  return out;
}

EquivDiffOp eq_do_from(int gdim, const PolyDiffOp& x) {
  EquivDiffOp out;
  do_absorb(out, mono_unit(gdim), x);
  return out;
}

EquivPolyvector eq_pv_weighted(int gdim, int a, const Polyvector& x) {
  if (a < 0 || a >= gdim) throw InvalidInput("weight index out of range");
  EquivPolyvector out;
  pv_absorb(out, mono_var(gdim, a), x);
  return out;
}

EquivDiffOp eq_do_weighted(int gdim, int a, const PolyDiffOp& x) {
  if (a < 0 || a >= gdim) throw InvalidInput("weight index out of range");
  EquivDiffOp out;
  do_absorb(out, mono_var(gdim, a), x);
  return out;
}

namespace {

Rational gw_eval(const Mono& gw, const std::vector<Rational>& xi) {
  Rational out(1);
  for (std::size_t a = 0; a < gw.size(); ++a)
    for (int e = 0; e < gw[a]; ++e) out = out * xi[a];
  return out;
}

}  // namespace

Polyvector eq_pv_eval(const EquivPolyvector& p, const std::vector<Rational>& xi) {
  Polyvector out;
  for (const auto& [k, v] : p) {
    if (k.gw.size() != xi.size())
      throw InvalidInput("evaluation: coefficient count mismatch");
    pv_add_term(out, k.pv, v * gw_eval(k.gw, xi));
  }
  return out;
}

PolyDiffOp eq_do_eval(const EquivDiffOp& p, const std::vector<Rational>& xi) {
  PolyDiffOp out;
  for (const auto& [k, v] : p) {
    if (k.gw.size() != xi.size())
      throw InvalidInput("evaluation: coefficient count mismatch");
    do_add_term(out, k.op, v * gw_eval(k.gw, xi));
  }
  return out;
}

EquivPolyvector eq_pv_bracket(const PolyContext& ctx, const EquivPolyvector& a,
                              const EquivPolyvector& b, int sym_cap,
                              Overflow policy) {
  EquivPolyvector out;
  PolyContext wide = widened(ctx);
  auto ga = pv_by_weight(a);
  auto gb = pv_by_weight(b);
  for (const auto& [wa, pa] : ga)
    for (const auto& [wb, pb] : gb) {
      Mono w = mono_mul(wa, wb);
      if (mono_degree(w) > sym_cap) continue;  // quotient by high weights
      pv_absorb(out, w, schouten_bracket(wide, pa, pb, policy));
    }
  return out;
}

EquivDiffOp eq_do_bracket(const PolyContext& ctx, const EquivDiffOp& a,
                          const EquivDiffOp& b, int sym_cap, Overflow policy) {
  EquivDiffOp out;
  PolyContext wide = widened(ctx);
  auto ga = do_by_weight(a);
  auto gb = do_by_weight(b);
  for (const auto& [wa, pa] : ga)
    for (const auto& [wb, pb] : gb) {
      Mono w = mono_mul(wa, wb);
      if (mono_degree(w) > sym_cap) continue;  // quotient by high weights
      do_absorb(out, w, gerstenhaber_bracket(wide, pa, pb, policy));
    }
  return out;
}

EquivDiffOp eq_do_differential(const PolyContext& ctx, const EquivDiffOp& a,
                               Overflow policy) {
  EquivDiffOp out;
  PolyContext wide = widened(ctx);
  for (const auto& [w, p] : do_by_weight(a))
    do_absorb(out, w, hochschild_differential(wide, p, policy));
  return out;
}

EquivPolyvector eq_pv_action(const LinearAction& act, int gen,
                             const EquivPolyvector& x, const PolyContext& ctx,
                             Overflow policy) {
  EquivPolyvector out;
  PolyContext wide = widened(ctx);
  Polyvector field = fundamental_field(act, gen);
  for (const auto& [w, p] : pv_by_weight(x)) {
    pv_absorb(out, w, pv_lie_derivative(wide, field, p, policy));
    for (const auto& [w2, c] : coadjoint_terms(act.g, gen, w))
      pv_absorb(out, w2, p, c);
  }
  return out;
}

EquivDiffOp eq_do_action(const LinearAction& act, int gen, const EquivDiffOp& x,
                         const PolyContext& ctx, Overflow policy) {
  EquivDiffOp out;
  PolyContext wide = widened(ctx);
  Polyvector field = fundamental_field(act, gen);
  for (const auto& [w, p] : do_by_weight(x)) {
    do_absorb(out, w, do_lie_derivative(wide, field, p, policy));
    for (const auto& [w2, c] : coadjoint_terms(act.g, gen, w))
      do_absorb(out, w2, p, c);
  }
  return out;
}

std::string eq_pv_to_string(const EquivPolyvector& p, int /*vars*/) {
  if (p.empty()) return "0";
  std::ostringstream os;
  bool first = true;
  for (const auto& [k, v] : p) {
    if (!first) os << " + ";
    first = false;
    os << v.str() << "·" << eq_pv_key_to_string(k);
  }
  return os.str();
}

std::string eq_do_to_string(const EquivDiffOp& p, int /*vars*/) {
  if (p.empty()) return "0";
  std::ostringstream os;
  bool first = true;
  for (const auto& [k, v] : p) {
    if (!first) os << " + ";
    first = false;
    os << v.str() << "·" << eq_do_key_to_string(k);
  }
  return os.str();
}

nlohmann::json eq_pv_to_json(const EquivPolyvector& p) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& [k, v] : p) {
    nlohmann::json t;
    t["gw"] = k.gw;
    t["mono"] = k.pv.mono;
    t["mask"] = k.pv.mask;
    t["c"] = v.str();
    out.push_back(std::move(t));
  }
  return out;
}

EquivPolyvector eq_pv_from_json(const PolyContext& ctx, int gdim,
                                const nlohmann::json& j) {
  if (!j.is_array()) throw InvalidInput("equivariant polyvector: expected array");
  EquivPolyvector out;
  for (const auto& t : j) {
    EqPvKey k;
    k.gw = t.at("gw").get<Mono>();
    k.pv.mono = t.at("mono").get<Mono>();
    k.pv.mask = t.at("mask").get<std::uint32_t>();
    if (static_cast<int>(k.gw.size()) != gdim)
      throw InvalidInput("equivariant polyvector: weight arity mismatch");
    Polyvector base;
    pv_add_term(base, k.pv, Rational(1));
    pv_validate(ctx, base);
    eq_pv_add_term(out, k, Rational::parse(t.at("c").get<std::string>()));
  }
  return out;
}

nlohmann::json eq_do_to_json(const EquivDiffOp& p) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& [k, v] : p) {
    nlohmann::json t;
    t["gw"] = k.gw;
    t["mono"] = k.op.mono;
    t["slots"] = k.op.slots;
    t["c"] = v.str();
    out.push_back(std::move(t));
  }
  return out;
}

EquivDiffOp eq_do_from_json(const PolyContext& ctx, int gdim,
                            const nlohmann::json& j) {
  if (!j.is_array()) throw InvalidInput("equivariant operator: expected array");
  EquivDiffOp out;
  for (const auto& t : j) {
    EqDoKey k;
    k.gw = t.at("gw").get<Mono>();
    k.op.mono = t.at("mono").get<Mono>();
    k.op.slots = t.at("slots").get<std::vector<Mono>>();
    if (static_cast<int>(k.gw.size()) != gdim)
      throw InvalidInput("equivariant operator: weight arity mismatch");
    PolyDiffOp base;
    do_add_term(base, k.op, Rational(1));
    do_validate(ctx, base);
    eq_do_add_term(out, k, Rational::parse(t.at("c").get<std::string>()));
  }
  return out;
}

// ---- invariant subspaces --------------------------------------------------

namespace {

// Canonical invariant basis over an explicit ambient key list: stack the
// action matrices of all generators, take the exact kernel, and return its
// reduced row echelon basis (unique, hence deterministic).
template <class M, class Key>
std::vector<M> invariant_basis(
    const std::vector<Key>& ambient,
    const std::function<M(const Key&)>& unit_of,
    const std::vector<std::function<M(const M&)>>& actions) {
  std::map<Key, std::size_t> index;
  for (std::size_t i = 0; i < ambient.size(); ++i) index.emplace(ambient[i], i);
  const std::size_t n = ambient.size();
  std::vector<std::vector<Rational>> stacked;
  for (const auto& act : actions) {
    std::vector<std::vector<Rational>> block(
        n, std::vector<Rational>(n, Rational(0)));
    for (std::size_t c = 0; c < n; ++c) {
      M img = act(unit_of(ambient[c]));
      for (const auto& [k, v] : img) {
        auto it = index.find(k);
        if (it == index.end())
          throw InvalidInput(
              "invariance: the action leaves the ambient enumeration");
        block[it->second][c] = v;
      }
    }
    for (auto& row : block) stacked.push_back(std::move(row));
  }
  // Kernel of the stacked matrix via RREF: pivot columns determined, free
  // columns parameterize the kernel.
  std::vector<std::vector<Rational>> rows = stacked;
  rref(rows);
  std::vector<int> pivot_of_row(rows.size(), -1);
  std::vector<bool> is_pivot(n, false);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t c = 0; c < n; ++c)
      if (!(rows[r][c] == Rational(0))) {
        pivot_of_row[r] = static_cast<int>(c);
        is_pivot[c] = true;
        break;
      }
  }
  std::vector<std::vector<Rational>> kernel;
  for (std::size_t c = 0; c < n; ++c) {
    if (is_pivot[c]) continue;
    std::vector<Rational> v(n, Rational(0));
    v[c] = Rational(1);
    for (std::size_t r = 0; r < rows.size(); ++r) {
      if (pivot_of_row[r] < 0) continue;
      v[static_cast<std::size_t>(pivot_of_row[r])] = -rows[r][c];
    }
    kernel.push_back(std::move(v));
  }
  rref(kernel);  // canonical basis of the invariant subspace
  std::vector<M> out;
  for (const auto& v : kernel) {
    M e;
    for (std::size_t c = 0; c < n; ++c)
      if (!(v[c] == Rational(0))) e.emplace(ambient[c], v[c]);
    out.push_back(std::move(e));
  }
  return out;
}

}  // namespace

std::vector<EquivPolyvector> invariant_polyvectors(const LinearAction& act,
                                                   const PolyContext& ctx,
                                                   int sym_cap) {
  std::vector<EqPvKey> ambient;
  for (const Mono& gw : monos_up_to(act.g.dim, sym_cap))
    for (const Mono& mo : monos_up_to(ctx.vars, ctx.degree_cap))
      for (std::uint32_t mask = 0; mask < (1u << ctx.vars); ++mask)
        ambient.push_back(EqPvKey{gw, PvKey{mo, mask}});
  std::vector<std::function<EquivPolyvector(const EquivPolyvector&)>> actions;
  for (int g = 0; g < act.g.dim; ++g)
    actions.push_back([&act, g, &ctx](const EquivPolyvector& x) {
      return eq_pv_action(act, g, x, ctx, Overflow::Error);
    });
  std::function<EquivPolyvector(const EqPvKey&)> unit =
      [](const EqPvKey& k) {
        EquivPolyvector e;
        e.emplace(k, Rational(1));
        return e;
      };
  return invariant_basis<EquivPolyvector, EqPvKey>(ambient, unit, actions);
}

std::vector<EquivDiffOp> invariant_ops(const LinearAction& act,
                                       const PolyContext& ctx, int sym_cap,
                                       int max_slots, int max_slot_order) {
  std::vector<Mono> slot_monos;
  for (const Mono& m : monos_up_to(ctx.vars, max_slot_order))
    if (mono_degree(m) >= 1) slot_monos.push_back(m);
  std::vector<std::vector<Mono>> slot_lists{{}};
  {
    std::vector<std::vector<Mono>> frontier{{}};
    for (int s = 1; s <= max_slots; ++s) {
      std::vector<std::vector<Mono>> next;
      for (const auto& prefix : frontier)
        for (const Mono& m : slot_monos) {
          auto l = prefix;
          l.push_back(m);
          next.push_back(l);
        }
      for (const auto& l : next) slot_lists.push_back(l);
      frontier = std::move(next);
    }
  }
  std::vector<EqDoKey> ambient;
  for (const Mono& gw : monos_up_to(act.g.dim, sym_cap))
    for (const Mono& mo : monos_up_to(ctx.vars, ctx.degree_cap))
      for (const auto& slots : slot_lists)
        ambient.push_back(EqDoKey{gw, DoKey{mo, slots}});
  std::vector<std::function<EquivDiffOp(const EquivDiffOp&)>> actions;
  for (int g = 0; g < act.g.dim; ++g)
    actions.push_back([&act, g, &ctx](const EquivDiffOp& x) {
      return eq_do_action(act, g, x, ctx, Overflow::Error);
    });
  std::function<EquivDiffOp(const EqDoKey&)> unit = [](const EqDoKey& k) {
    EquivDiffOp e;
    e.emplace(k, Rational(1));
    return e;
  };
  return invariant_basis<EquivDiffOp, EqDoKey>(ambient, unit, actions);
}

// ---- curved equivariant complexes -----------------------------------------

EquivPolyvector classical_curvature(const LinearAction& act) {
  EquivPolyvector out;
  for (int a = 0; a < act.g.dim; ++a)
    pv_absorb(out, mono_var(act.g.dim, a), fundamental_field(act, a));
  return out;
}

EquivDiffOp quantum_curvature(const LinearAction& act, const PolyContext& ctx) {
  EquivDiffOp out;
  for (int a = 0; a < act.g.dim; ++a)
    do_absorb(out, mono_var(act.g.dim, a), hkr(ctx, fundamental_field(act, a)));
  return out;
}

namespace {

template <class M>
int element_size(const M& e, int (*geom_arity)(const typename M::key_type&)) {
  int best = 0;
  for (const auto& [k, v] : e)
    best = std::max(best, 2 * mono_degree(k.gw) + geom_arity(k));
  return best;
}

int pv_size_of(const EqPvKey& k) {
  return mono_degree(k.pv.mono) + pv_mask_arity(k.pv.mask);
}
int do_size_of(const EqDoKey& k) {
  return mono_degree(k.op.mono) + static_cast<int>(k.op.slots.size());
}

template <class M>
int element_eq_degree(const M& e, int (*term_deg)(const typename M::key_type&)) {
  int deg = 0;
  bool first = true;
  for (const auto& [k, v] : e) {
    int d = term_deg(k);
    if (first) {
      deg = d;
      first = false;
    } else if (d != deg) {
      throw InvalidInput("equivariant model element is not degree-homogeneous");
    }
  }
  if (first) throw InvalidInput("equivariant model element is zero");
  return deg;
}

template <class M>
std::string leading_label(const M& e,
                          std::string (*key_str)(const typename M::key_type&)) {
  if (e.empty()) throw InvalidInput("cannot label the zero element");
  return dot_free(key_str(e.begin()->first));
}

// Prunes a family to a bracket-closed (and, when given, differential-closed)
// fixpoint.  Each round computes every pair bracket and every differential,
// finds the values that leave the span, and removes the single element that
// participates in the most failures (ties: larger size, then later label).
// Returns the labels of removed members.
template <class M>
std::vector<std::string> prune_to_closure(
    std::vector<M>& family, std::vector<std::string>& labels,
    const std::function<M(const M&, const M&)>& bracket,
    const std::function<M(const M&)>& differential,
    int (*geom_arity)(const typename M::key_type&)) {
  std::vector<std::string> removed;
  for (int round = 0; round < 10 * static_cast<int>(family.size()) + 10;
       ++round) {
    SpanSolver<M> solver(family);
    std::vector<int> failures(family.size(), 0);
    bool any = false;
    for (std::size_t i = 0; i < family.size(); ++i) {
      for (std::size_t j = i; j < family.size(); ++j) {
        bool ok = true;
        try {
          M v = bracket(family[i], family[j]);
          if (!v.empty() && !solver.solve(v)) ok = false;
        } catch (const CapExceeded&) {
          ok = false;
        }
        if (!ok) {
          failures[i] += 1;
          if (j != i) failures[j] += 1;
          any = true;
        }
      }
      if (differential) {
        bool ok = true;
        try {
          M v = differential(family[i]);
          if (!v.empty() && !solver.solve(v)) ok = false;
        } catch (const CapExceeded&) {
          ok = false;
        }
        if (!ok) {
          failures[i] += 1;
          any = true;
        }
      }
    }
    if (!any) return removed;
    std::size_t worst = 0;
    for (std::size_t i = 1; i < family.size(); ++i) {
      if (failures[i] == 0) continue;
      if (failures[worst] == 0) {
        worst = i;
        continue;
      }
      int si = element_size(family[i], geom_arity);
      int sw = element_size(family[worst], geom_arity);
      if (failures[i] > failures[worst] ||
          (failures[i] == failures[worst] && si > sw) ||
          (failures[i] == failures[worst] && si == sw &&
           labels[i] > labels[worst]))
        worst = i;
    }
    removed.push_back(labels[worst]);
    family.erase(family.begin() + static_cast<std::ptrdiff_t>(worst));
    labels.erase(labels.begin() + static_cast<std::ptrdiff_t>(worst));
  }
  throw CapExceeded("equivariant closure: pruning did not reach a fixpoint");
}

// Shared table assembly: turn a family of homogeneous elements into letters
// of a graded space (degrees shifted down by one) and build the curved table.
template <class M>
void assemble_letters(const std::vector<M>& family,
                      const std::vector<std::string>& labels,
                      int (*term_deg)(const typename M::key_type&),
                      std::vector<Letter>& letters, SpacePtr& space) {
  std::map<int, std::vector<std::string>> components;
  std::vector<int> shifted;
  for (std::size_t i = 0; i < family.size(); ++i) {
    int deg = element_eq_degree(family[i], term_deg) - 1;
    components[deg].push_back(labels[i]);
    shifted.push_back(deg);
  }
  space = std::make_shared<GradedSpace>(GradedSpace::infer(components));
  letters.clear();
  for (std::size_t i = 0; i < family.size(); ++i) {
    int idx = space->index_of(shifted[i], labels[i]);
    if (idx < 0) throw InvalidInput("equivariant model: label lookup failed");
    letters.push_back(Letter{shifted[i], idx});
  }
}

template <class M>
WordMap coords_in(const std::vector<M>& family,
                  const std::vector<Letter>& letters, const M& e) {
  std::vector<Rational> c = expand_in_span(family, e);
  WordMap out;
  for (std::size_t i = 0; i < c.size(); ++i)
    add_term(out, Word{letters[i]}, c[i]);
  return out;
}

void dedupe_labels(std::vector<std::string>& labels) {
  std::map<std::string, int> seen;
  for (auto& l : labels) {
    int n = seen[l]++;
    if (n > 0) l += "#" + std::to_string(n);
  }
}

}  // namespace

EquivariantComplex build_equivariant_complex(const LinearAction& act,
                                             GeomSide side,
                                             const EquivCaps& caps) {
  EquivariantComplex C;
  C.action = act;
  C.side = side;
  C.ctx = PolyContext{act.vars, caps.poly_degree};
  C.caps = caps;
  const int sym = caps.sym_weight;
  if (side == GeomSide::Classical) {
    C.pv_basis = invariant_polyvectors(act, C.ctx, sym);
    std::vector<std::string> labels;
    for (const auto& e : C.pv_basis)
      labels.push_back(leading_label(e, &eq_pv_key_to_string));
    dedupe_labels(labels);
    std::function<EquivPolyvector(const EquivPolyvector&, const EquivPolyvector&)>
        br = [&C, sym](const EquivPolyvector& a, const EquivPolyvector& b) {
          return eq_pv_bracket(C.ctx, a, b, sym, Overflow::Error);
        };
    C.removed = prune_to_closure<EquivPolyvector>(C.pv_basis, labels, br, {},
                                                  &pv_size_of);
    C.labels = labels;
    assemble_letters(C.pv_basis, C.labels, &eq_pv_term_degree, C.letters,
                     C.space);
    EquivPolyvector lambda = classical_curvature(act);
    WordMap curv;
    if (!lambda.empty()) {
      try {
        curv = coords_in(C.pv_basis, C.letters, lambda);
      } catch (const CapExceeded&) {
        throw CapExceeded(
            "equivariant complex: the curvature left the closed family");
      }
    }
    GradedMap d(C.space, C.space, 1);  // the classical differential is zero
    const EquivariantComplex* pc = &C;
    BracketFn bracket = [pc, sym](const Letter& a, const Letter& b) {
      return eq_pv_coords(
          *pc, eq_pv_bracket(pc->ctx, eq_pv_value_letter(*pc, a),
                             eq_pv_value_letter(*pc, b), sym, Overflow::Error));
    };
    C.table = from_curved_lie(C.space, curv, d, bracket, caps.arity,
                              caps.hbar_power);
  } else {
    C.do_basis =
        invariant_ops(act, C.ctx, sym, caps.max_slots, caps.max_slot_order);
    std::vector<std::string> labels;
    for (const auto& e : C.do_basis)
      labels.push_back(leading_label(e, &eq_do_key_to_string));
    dedupe_labels(labels);
    std::function<EquivDiffOp(const EquivDiffOp&, const EquivDiffOp&)> br =
        [&C, sym](const EquivDiffOp& a, const EquivDiffOp& b) {
          return eq_do_bracket(C.ctx, a, b, sym, Overflow::Error);
        };
    std::function<EquivDiffOp(const EquivDiffOp&)> dd =
        [&C](const EquivDiffOp& a) {
          return eq_do_differential(C.ctx, a, Overflow::Error);
        };
    C.removed =
        prune_to_closure<EquivDiffOp>(C.do_basis, labels, br, dd, &do_size_of);
    C.labels = labels;
    assemble_letters(C.do_basis, C.labels, &eq_do_term_degree, C.letters,
                     C.space);
    EquivDiffOp lambda = quantum_curvature(act, C.ctx);
    WordMap curv;
    if (!lambda.empty()) {
      try {
        curv = coords_in(C.do_basis, C.letters, lambda);
      } catch (const CapExceeded&) {
        throw CapExceeded(
            "equivariant complex: the curvature left the closed family");
      }
    }
    std::vector<std::pair<Letter, WordMap>> d_images;
    for (std::size_t i = 0; i < C.do_basis.size(); ++i) {
      EquivDiffOp d = eq_do_differential(C.ctx, C.do_basis[i], Overflow::Error);
      if (!d.empty())
        d_images.emplace_back(C.letters[i], coords_in(C.do_basis, C.letters, d));
    }
    GradedMap d = map_from_images(C.space, C.space, 1, d_images);
    const EquivariantComplex* pc = &C;
    BracketFn bracket = [pc, sym](const Letter& a, const Letter& b) {
      return eq_do_coords(
          *pc, eq_do_bracket(pc->ctx, eq_do_value_letter(*pc, a),
                             eq_do_value_letter(*pc, b), sym, Overflow::Error));
    };
    C.table = from_curved_lie(C.space, curv, d, bracket, caps.arity,
                              caps.hbar_power);
  }
  return C;
}

namespace {

EquivDiffOp eq_do_truncate(const EquivDiffOp& x, int degree_hi) {
  EquivDiffOp out;
  for (const auto& [k, v] : x)
    if (eq_do_term_degree(k) <= degree_hi) out.emplace(k, v);
  return out;
}

}  // namespace

EquivariantComplex build_equivariant_closure(const LinearAction& act,
                                             const PolyContext& ctx,
                                             int sym_cap, int arity,
                                             const std::vector<EquivDiffOp>& seeds,
                                             int degree_hi, int hbar_power) {
  EquivariantComplex C;
  C.action = act;
  C.side = GeomSide::Quantum;
  C.ctx = ctx;
  C.caps = EquivCaps{ctx.degree_cap, sym_cap, arity, hbar_power, 0, 0};
  for (const EquivDiffOp& s : seeds)
    for (int g = 0; g < act.g.dim; ++g)
      if (!eq_do_action(act, g, s, ctx, Overflow::Error).empty())
        throw InvalidInput("equivariant closure: a seed is not invariant");
  std::vector<EquivDiffOp> family;
  auto add_if_new = [&](const EquivDiffOp& raw) -> bool {
    EquivDiffOp v = eq_do_truncate(raw, degree_hi);
    if (v.empty()) return false;
    if (!family.empty()) {
      SpanSolver<EquivDiffOp> solver(family);
      if (solver.solve(v)) return false;
    }
    family.push_back(std::move(v));
    return true;
  };
  for (const EquivDiffOp& s : seeds) add_if_new(s);
  add_if_new(quantum_curvature(act, ctx));
  bool grew = true;
  int rounds = 0;
  while (grew) {
    if (++rounds > 64)
      throw CapExceeded("equivariant closure: the family refuses to stabilize");
    grew = false;
    std::vector<EquivDiffOp> snapshot = family;
    for (std::size_t i = 0; i < snapshot.size(); ++i) {
      for (std::size_t j = i; j < snapshot.size(); ++j) {
        EquivDiffOp v = eq_do_truncate(
            eq_do_bracket(ctx, snapshot[i], snapshot[j], sym_cap,
                          Overflow::Error),
            degree_hi);
        if (add_if_new(v)) grew = true;
      }
      EquivDiffOp d = eq_do_truncate(
          eq_do_differential(ctx, snapshot[i], Overflow::Error), degree_hi);
      if (add_if_new(d)) grew = true;
    }
    if (family.size() > 512)
      throw CapExceeded("equivariant closure: the family grew past the bound");
  }
  C.do_basis = family;
  for (const auto& e : C.do_basis) {
    C.labels.push_back(leading_label(e, &eq_do_key_to_string));
    for (const auto& [k, v] : e) {
      C.caps.max_slots =
          std::max(C.caps.max_slots, static_cast<int>(k.op.slots.size()));
      for (const Mono& s : k.op.slots)
        C.caps.max_slot_order = std::max(C.caps.max_slot_order, mono_degree(s));
    }
  }
  dedupe_labels(C.labels);
  assemble_letters(C.do_basis, C.labels, &eq_do_term_degree, C.letters, C.space);
  WordMap curv = coords_in(C.do_basis, C.letters,
                           eq_do_truncate(quantum_curvature(act, ctx), degree_hi));
  std::vector<std::pair<Letter, WordMap>> d_images;
  for (std::size_t i = 0; i < C.do_basis.size(); ++i) {
    EquivDiffOp d = eq_do_truncate(
        eq_do_differential(C.ctx, C.do_basis[i], Overflow::Error), degree_hi);
    if (!d.empty())
      d_images.emplace_back(C.letters[i], coords_in(C.do_basis, C.letters, d));
  }
  GradedMap d = map_from_images(C.space, C.space, 1, d_images);
  const EquivariantComplex* pc = &C;
  const int sym = sym_cap;
  const int hi = degree_hi;
  BracketFn bracket = [pc, sym, hi](const Letter& a, const Letter& b) {
    return eq_do_coords(
        *pc, eq_do_truncate(eq_do_bracket(pc->ctx, eq_do_value_letter(*pc, a),
                                          eq_do_value_letter(*pc, b), sym,
                                          Overflow::Error),
                            hi));
  };
  C.table = from_curved_lie(C.space, curv, d, bracket, arity, hbar_power);
  return C;
}

const EquivPolyvector& eq_pv_value_letter(const EquivariantComplex& C,
                                          const Letter& l) {
  for (std::size_t i = 0; i < C.letters.size(); ++i)
    if (C.letters[i] == l) return C.pv_basis[i];
  throw InvalidInput("equivariant complex: unknown letter");
}

const EquivDiffOp& eq_do_value_letter(const EquivariantComplex& C,
                                      const Letter& l) {
  for (std::size_t i = 0; i < C.letters.size(); ++i)
    if (C.letters[i] == l) return C.do_basis[i];
  throw InvalidInput("equivariant complex: unknown letter");
}

WordMap eq_pv_coords(const EquivariantComplex& C, const EquivPolyvector& x) {
  return coords_in(C.pv_basis, C.letters, x);
}

EquivPolyvector eq_pv_value(const EquivariantComplex& C, const WordMap& x) {
  EquivPolyvector out;
  for (const auto& [w, c] : x) {
    if (w.size() != 1)
      throw InvalidInput("equivariant value: expected a weight-1 combination");
    eq_pv_add_scaled(out, eq_pv_value_letter(C, w[0]), c);
  }
  return out;
}

WordMap eq_do_coords(const EquivariantComplex& C, const EquivDiffOp& x) {
  return coords_in(C.do_basis, C.letters, x);
}

EquivDiffOp eq_do_value(const EquivariantComplex& C, const WordMap& x) {
  EquivDiffOp out;
  for (const auto& [w, c] : x) {
    if (w.size() != 1)
      throw InvalidInput("equivariant value: expected a weight-1 combination");
    eq_do_add_scaled(out, eq_do_value_letter(C, w[0]), c);
  }
  return out;
}

// ---- momentum maps --------------------------------------------------------

Polyvector hamiltonian_field(const PolyContext& ctx, const Polyvector& pi,
                             const Poly& J, Overflow policy) {
  for (const auto& [k, v] : pi)
    if (pv_mask_arity(k.mask) != 2)
      throw InvalidInput("hamiltonian field: the pairing needs a bivector");
  Polyvector out;
  for (const auto& [k, v] : pi) {
    int i = -1, j = -1;
    for (int b = 0; b < 32; ++b)
      if (k.mask & (1u << b)) {
        if (i < 0)
          i = b;
        else
          j = b;
      }
    Poly coeff;
    poly_add_term(coeff, k.mono, v);
    // c·m·θ_i∧θ_j pairs df ⊗ dJ as {f, J} = π(df, dJ):
    //   contribution (∂_j J)·∂_i − (∂_i J)·∂_j, scaled by c·m.
    Poly dj = poly_mul(ctx, coeff, poly_diff(J, j), policy);
    Poly di = poly_mul(ctx, coeff, poly_diff(J, i), policy);
    for (const auto& [m, c] : dj)
      pv_add_term(out, PvKey{m, 1u << i}, c);
    for (const auto& [m, c] : di)
      pv_add_term(out, PvKey{m, 1u << j}, -c);
  }
  return out;
}

bool MomentumReport::ok() const {
  for (const auto& p : field_residuals)
    if (!pv_is_zero(p)) return false;
  for (const auto& [k, p] : bracket_residuals)
    if (!poly_is_zero(p)) return false;
  return true;
}

MomentumReport momentum_residuals(const PolyContext& ctx, const Polyvector& pi,
                                  const std::vector<Poly>& J,
                                  const LinearAction& act, Overflow policy) {
  if (static_cast<int>(J.size()) != act.g.dim)
    throw InvalidInput("momentum residuals: need one function per generator");
  for (const auto& [k, v] : pi)
    if (pv_mask_arity(k.mask) != 2)
      throw InvalidInput("momentum residuals: the structure must be a bivector");
  MomentumReport rep;
  for (int a = 0; a < act.g.dim; ++a) {
    Polyvector r = fundamental_field(act, a);
    pv_add_scaled(r, hamiltonian_field(ctx, pi, J[static_cast<std::size_t>(a)],
                                       policy),
                  Rational(-1));
    rep.field_residuals.push_back(std::move(r));
  }
  for (int a = 0; a < act.g.dim; ++a)
    for (int b = a + 1; b < act.g.dim; ++b) {
      Poly r = pv_poisson(ctx, pi, J[static_cast<std::size_t>(a)],
                          J[static_cast<std::size_t>(b)], policy);
      std::vector<Rational> cc = lie_bracket_coeffs(act.g, a, b);
      for (int k = 0; k < act.g.dim; ++k)
        poly_add_scaled(r, J[static_cast<std::size_t>(k)],
                        -cc[static_cast<std::size_t>(k)]);
      rep.bracket_residuals.emplace(std::make_pair(a, b), std::move(r));
    }
  return rep;
}

MCElement classical_momentum_mc(const EquivariantComplex& C,
                                const Polyvector& pi,
                                const std::vector<Poly>& J) {
  if (C.side != GeomSide::Classical)
    throw InvalidInput("momentum element: expected a classical complex");
  if (static_cast<int>(J.size()) != C.action.g.dim)
    throw InvalidInput("momentum element: need one function per generator");
  EquivPolyvector Pi = eq_pv_from(C.action.g.dim, pi);
  for (int a = 0; a < C.action.g.dim; ++a)
    pv_absorb(Pi, mono_var(C.action.g.dim, a),
              pv_from_poly(J[static_cast<std::size_t>(a)]), Rational(-1));
  return make_mc_element(C.table.underlying, eq_pv_coords(C, Pi));
}

// ---- quantum momentum maps ------------------------------------------------

bool QuantumMomentumReport::ok() const {
  for (const auto& series : op_residuals)
    for (const auto& op : series)
      if (!do_is_zero(op)) return false;
  for (const auto& [k, series] : bracket_residuals)
    for (const auto& p : series)
      if (!poly_is_zero(p)) return false;
  return true;
}

namespace {

// Operator-level commutator coefficient: star_r(H, ·) − star_r(·, H).
PolyDiffOp star_commutator(const PolyContext& ctx, const PolyDiffOp& star_r,
                           const Poly& H, Overflow policy) {
  PolyDiffOp out = do_partial_apply(ctx, star_r, 0, H, policy);
  do_add_scaled(out, do_partial_apply(ctx, star_r, 1, H, policy), Rational(-1));
  return out;
}

void validate_star(const PolyContext& ctx, const std::vector<PolyDiffOp>& star,
                   int K, Overflow policy) {
  if (star.empty() || static_cast<int>(star.size()) != K + 1)
    throw InvalidInput("deformation series: expected K+1 operator coefficients");
  for (const PolyDiffOp& s : star)
    for (const auto& [k, v] : s)
      if (k.slots.size() != 2)
        throw InvalidInput("deformation series: coefficients must be 2-slot");
  PolyDiffOp mu = product_cochain(ctx);
  do_add_scaled(mu, star[0], Rational(-1));
  if (!do_is_zero(mu))
    throw InvalidInput(
        "deformation series: order zero must be the pointwise product");
  // Associativity modulo the (K+1)-st power, at the operator level:
  // sum_{a+b=r} star_a(star_b(·,·),·) − star_a(·,star_b(·,·)) = 0 for r ≤ K.
  for (int r = 0; r <= K; ++r) {
    PolyDiffOp assoc;
    for (int a = 0; a <= r; ++a) {
      int b = r - a;
      do_add_scaled(assoc,
                    do_insert_at(ctx, star[static_cast<std::size_t>(a)], 0,
                                 star[static_cast<std::size_t>(b)], policy),
                    Rational(1));
      do_add_scaled(assoc,
                    do_insert_at(ctx, star[static_cast<std::size_t>(a)], 1,
                                 star[static_cast<std::size_t>(b)], policy),
                    Rational(-1));
    }
    if (!do_is_zero(assoc))
      throw InvalidInput(
          "deformation series: not associative within the declared order");
  }
}

}  // namespace

QuantumMomentumReport quantum_momentum_residuals(
    const PolyContext& ctx, const std::vector<PolyDiffOp>& star,
    const std::vector<std::vector<Poly>>& H, const LinearAction& act, int K,
    Overflow policy) {
  if (K < 0) throw InvalidInput("quantum residuals: negative order cap");
  validate_star(ctx, star, K, policy);
  if (static_cast<int>(H.size()) != act.g.dim)
    throw InvalidInput("quantum residuals: need one series per generator");
  for (const auto& series : H)
    if (series.empty())
      throw InvalidInput("quantum residuals: each series needs an order-zero term");
  QuantumMomentumReport rep;
  rep.hbar_cap = K;
  auto H_at = [&H](int a, int s) -> const Poly* {
    const auto& series = H[static_cast<std::size_t>(a)];
    if (s < 0 || s >= static_cast<int>(series.size())) return nullptr;
    return &series[static_cast<std::size_t>(s)];
  };
  // The 1/ħ shift demands that the order-zero commutator vanish identically.
  for (int a = 0; a < act.g.dim; ++a) {
    PolyDiffOp c0 = star_commutator(ctx, star[0], *H_at(a, 0), policy);
    if (!do_is_zero(c0))
      throw HbarBookkeeping(
          "quantum residuals: the commutator series has an order-zero term");
  }
  for (int a = 0; a < act.g.dim; ++a) {
    std::vector<PolyDiffOp> series;
    for (int t = 0; t <= K; ++t) {
      PolyDiffOp r;
      if (t == 0)
        r = hkr(ctx, fundamental_field(act, a));
      for (int rr = 1; rr <= std::min(t + 1, K); ++rr) {
        const Poly* h = H_at(a, t + 1 - rr);
        if (h == nullptr) continue;
        do_add_scaled(r,
                      star_commutator(ctx, star[static_cast<std::size_t>(rr)],
                                      *h, policy),
                      Rational(1));
      }
      series.push_back(std::move(r));
    }
    rep.op_residuals.push_back(std::move(series));
  }
  for (int a = 0; a < act.g.dim; ++a)
    for (int b = a + 1; b < act.g.dim; ++b) {
      std::vector<Poly> series;
      for (int t = 0; t <= K; ++t) {
        Poly r;
        for (int rr = 1; rr <= std::min(t + 1, K); ++rr)
          for (int s = 0; s <= t + 1 - rr; ++s) {
            int u = t + 1 - rr - s;
            const Poly* ha = H_at(a, s);
            const Poly* hb = H_at(b, u);
            if (ha == nullptr || hb == nullptr) continue;
            poly_add_scaled(
                r,
                do_apply(ctx, star[static_cast<std::size_t>(rr)], {*ha, *hb},
                         policy),
                Rational(1));
            poly_add_scaled(
                r,
                do_apply(ctx, star[static_cast<std::size_t>(rr)], {*hb, *ha},
                         policy),
                Rational(-1));
          }
        std::vector<Rational> cc = lie_bracket_coeffs(act.g, a, b);
        for (int k = 0; k < act.g.dim; ++k) {
          const Poly* hk = H_at(k, t);
          if (hk != nullptr)
            poly_add_scaled(r, *hk, -cc[static_cast<std::size_t>(k)]);
        }
        series.push_back(std::move(r));
      }
      rep.bracket_residuals.emplace(std::make_pair(a, b), std::move(series));
    }
  return rep;
}

MCElement quantum_momentum_mc(const EquivariantComplex& C,
                              const std::vector<PolyDiffOp>& star,
                              const std::vector<std::vector<Poly>>& H, int K) {
  if (C.side != GeomSide::Quantum)
    throw InvalidInput("momentum element: expected a quantum complex");
  validate_star(C.ctx, star, K, Overflow::Error);
  if (static_cast<int>(H.size()) != C.action.g.dim)
    throw InvalidInput("momentum element: need one series per generator");
  std::vector<WordMap> coeffs(static_cast<std::size_t>(K) + 1);
  for (int r = 1; r <= K; ++r) {
    EquivDiffOp part = eq_do_from(C.action.g.dim, star[static_cast<std::size_t>(r)]);
    for (int a = 0; a < C.action.g.dim; ++a) {
      const auto& series = H[static_cast<std::size_t>(a)];
      if (r - 1 < static_cast<int>(series.size()))
        do_absorb(part, mono_var(C.action.g.dim, a),
                  do_from_poly(series[static_cast<std::size_t>(r - 1)]),
                  Rational(-1));
    }
    if (!part.empty()) coeffs[static_cast<std::size_t>(r)] = eq_do_coords(C, part);
  }
  return make_mc_series(C.table.underlying, std::move(coeffs), K);
}

// ---- the projective-basis retract -----------------------------------------

namespace {

// Letters of the big complex: kind 0 = a coordinate block (x_i), kind 1 = a
// one-step bar block (x_i|e_j), kind 2 = a constant module block (e_j),
// kind 3 = a coordinate-weighted module block (x_i e_j).  Module blocks are
// odd (degree 1); the others are even (degree 0).
struct RLetter {
  int kind = 0;
  int i = 0;  // coordinate index (kinds 0, 1, 3)
  int j = 0;  // module direction (kinds 1, 2, 3)

  int degree() const { return (kind >= 2) ? 1 : 0; }
  friend bool operator<(const RLetter& a, const RLetter& b) {
    if (a.kind != b.kind) return a.kind < b.kind;
    if (a.i != b.i) return a.i < b.i;
    return a.j < b.j;
  }
  friend bool operator==(const RLetter& a, const RLetter& b) {
    return a.kind == b.kind && a.i == b.i && a.j == b.j;
  }
};

using RWord = std::vector<RLetter>;  // kept sorted; no letter repeats

std::string rletter_label(const RLetter& l) {
  switch (l.kind) {
    case 0:
      return "(x" + std::to_string(l.i + 1) + ")";
    case 1:
      return "(x" + std::to_string(l.i + 1) + "|e" + std::to_string(l.j + 1) +
             ")";
    case 2:
      return "(e" + std::to_string(l.j + 1) + ")";
    default:
      return "(x" + std::to_string(l.i + 1) + "e" + std::to_string(l.j + 1) +
             ")";
  }
}

std::string rword_label(const RWord& w) {
  if (w.empty()) return "()";
  std::string out;
  for (const RLetter& l : w) out += rletter_label(l);
  return out;
}

int rword_degree(const RWord& w) {
  int d = 0;
  for (const RLetter& l : w) d += l.degree();
  return d;
}

// Insert a letter into a sorted word; the sign collects one factor (-1) for
// every odd letter an odd insertion crosses.  Returns false on an odd repeat.
bool rword_insert(RWord& w, const RLetter& l, int& sign) {
  std::size_t pos = 0;
  for (; pos < w.size() && w[pos] < l; ++pos) {
  }
  // An odd repeat squares to zero; even repeats land outside the window of
  // legal words, so both are dropped.
  if (pos < w.size() && w[pos] == l) return false;
  // The letter arrives from the left end, so it crosses every odd letter
  // strictly before its sorted position.
  if (l.degree() % 2 == 1) {
    int crossed = 0;
    for (std::size_t k = 0; k < pos; ++k)
      if (w[k].degree() % 2 == 1) ++crossed;
    if (crossed % 2 == 1) sign = -sign;
  }
  w.insert(w.begin() + static_cast<std::ptrdiff_t>(pos), l);
  return true;
}

struct RetractModel {
  int n = 0;  // coordinates
  int m = 0;  // module rank
  int S = 0;  // word-weight cap m+1
  std::vector<RWord> words;                    // big basis
  std::map<std::string, std::size_t> word_ix;  // label -> index in `words`
  std::vector<PvKey> small;                    // small basis (mono deg <= 1)
  std::map<PvKey, std::size_t> small_ix;
  SpacePtr W, V;
  std::vector<Letter> wletter, vletter;
};

std::string small_label(const PvKey& k) {
  std::string mono = mono_to_string(k.mono);
  std::string mask;
  bool first = true;
  for (int b = 0; b < 32; ++b)
    if (k.mask & (1u << b)) {
      if (!first) mask += "^";
      first = false;
      mask += "e" + std::to_string(b + 1);
    }
  if (mask.empty()) mask = "1";
  return dot_free(mono) + "|" + mask;
}

RetractModel build_retract_model(int n, int m) {
  RetractModel M;
  M.n = n;
  M.m = m;
  M.S = m + 1;
  // Constant-module subsets, as sorted words of kind-2 letters.
  std::vector<std::pair<RWord, int>> subsets;  // (word, size)
  for (std::uint32_t u = 0; u < (1u << m); ++u) {
    RWord w;
    int size = 0;
    for (int j = 0; j < m; ++j)
      if (u & (1u << j)) {
        w.push_back(RLetter{2, 0, j});
        ++size;
      }
    subsets.emplace_back(std::move(w), size);
  }
  auto push = [&M](RWord w) {
    std::sort(w.begin(), w.end());
    M.words.push_back(std::move(w));
  };
  for (const auto& [u, size] : subsets) {
    if (size <= M.S) push(u);  // type (a), constants only
    for (int i = 0; i < n; ++i) {
      if (1 + size <= M.S) {
        RWord w = u;
        w.push_back(RLetter{0, i, 0});  // type (b): one coordinate block
        push(w);
      }
      for (int j = 0; j < m; ++j) {
        if (1 + size <= M.S) {
          RWord w = u;
          w.push_back(RLetter{3, i, j});  // type (a): one weighted block
          push(w);
          RWord v = u;
          v.push_back(RLetter{1, i, j});  // type (c): one bar block
          push(v);
        }
      }
    }
  }
  std::map<int, std::vector<std::string>> wcomponents;
  for (const RWord& w : M.words)
    wcomponents[rword_degree(w)].push_back(rword_label(w));
  M.W = std::make_shared<GradedSpace>(GradedSpace::infer(wcomponents));
  for (std::size_t k = 0; k < M.words.size(); ++k) {
    const RWord& w = M.words[k];
    M.word_ix.emplace(rword_label(w), k);
    int deg = rword_degree(w);
    int idx = M.W->index_of(deg, rword_label(w));
    if (idx < 0) throw InvalidInput("retract: word label lookup failed");
    M.wletter.push_back(Letter{deg, idx});
  }
  // Small side: coefficient monomials of degree <= 1 over n coordinates,
  // module masks over m directions.
  for (std::uint32_t mask = 0; mask < (1u << m); ++mask) {
    M.small.push_back(PvKey{mono_unit(n), mask});
    for (int i = 0; i < n; ++i)
      M.small.push_back(PvKey{mono_var(n, i), mask});
  }
  std::sort(M.small.begin(), M.small.end());
  std::map<int, std::vector<std::string>> vcomponents;
  for (const PvKey& k : M.small)
    vcomponents[pv_mask_arity(k.mask)].push_back(small_label(k));
  M.V = std::make_shared<GradedSpace>(GradedSpace::infer(vcomponents));
  for (std::size_t k = 0; k < M.small.size(); ++k) {
    M.small_ix.emplace(M.small[k], k);
    int deg = pv_mask_arity(M.small[k].mask);
    int idx = M.V->index_of(deg, small_label(M.small[k]));
    if (idx < 0) throw InvalidInput("retract: small label lookup failed");
    M.vletter.push_back(Letter{deg, idx});
  }
  return M;
}

// The single bar/coaction differential: zero away from bar blocks; on a word
// with the bar block (x_i|e_j) it merges the block to (x_i e_j) and splits it
// to (x_i)∨(e_j), the latter dropped past the weight cap.
GradedVec retract_d_of(const RetractModel& M, const RWord& w) {
  GradedVec out;
  // locate the bar letter (at most one, and it sorts before module blocks)
  std::size_t bar = w.size();
  for (std::size_t k = 0; k < w.size(); ++k)
    if (w[k].kind == 1) bar = k;
  if (bar == w.size()) return out;
  // Koszul pass: letters before the bar block are even (kinds 0,1 sort first),
  // so the derivation reaches it with sign +1.
  RWord rest;
  for (std::size_t k = 0; k < w.size(); ++k)
    if (k != bar) rest.push_back(w[k]);
  const RLetter& b = w[bar];
  {
    RWord merged = rest;
    int sign = 1;
    if (rword_insert(merged, RLetter{3, b.i, b.j}, sign)) {
      const Letter& l = M.wletter[M.word_ix.at(rword_label(merged))];
      out.add(l.deg, l.idx, Rational(sign));
    }
  }
  if (static_cast<int>(w.size()) + 1 <= M.S) {
    RWord split = rest;
    int sign = 1;
    if (rword_insert(split, RLetter{2, 0, b.j}, sign)) {
      int s2 = sign;
      if (rword_insert(split, RLetter{0, b.i, 0}, s2)) {
        auto it = M.word_ix.find(rword_label(split));
        if (it != M.word_ix.end()) {
          const Letter& l = M.wletter[it->second];
          out.add(l.deg, l.idx, Rational(-s2));
        }
      }
    }
  }
  return out;
}

// Projection: a word of coordinate and module blocks maps to the product of
// its coefficients on the wedge of its directions; bar blocks map to zero.
GradedVec retract_p_of(const RetractModel& M, const RWord& w) {
  GradedVec out;
  Mono mono = mono_unit(M.n);
  std::uint32_t mask = 0;
  int sign = 1;
  int odd_seen = 0;
  for (const RLetter& l : w) {
    if (l.kind == 1) return out;  // bar block: projection kills the word
    if (l.kind == 0) {
      mono = mono_mul(mono, mono_var(M.n, l.i));
    } else {
      if (l.kind == 3) mono = mono_mul(mono, mono_var(M.n, l.i));
      std::uint32_t bit = 1u << l.j;
      if (mask & bit) return out;  // repeated direction
      // wedge sign: insert direction j after the odd blocks already placed,
      // crossing those with a larger direction index
      int crossed = 0;
      for (int b = l.j + 1; b < M.m; ++b)
        if (mask & (1u << b)) ++crossed;
      if (crossed % 2 == 1) sign = -sign;
      mask |= bit;
      ++odd_seen;
    }
  }
  (void)odd_seen;
  if (mono_degree(mono) > 1) return out;  // outside the small window
  auto it = M.small_ix.find(PvKey{mono, mask});
  if (it == M.small_ix.end()) return out;
  const Letter& l = M.vletter[it->second];
  out.add(l.deg, l.idx, Rational(sign));
  return out;
}

// Dual-basis embedding: a coefficient splits into its constant part on the
// bare module word and its coordinate part on a word with one leading block.
GradedVec retract_I_of(const RetractModel& M, const PvKey& k) {
  GradedVec out;
  RWord base;
  for (int j = 0; j < M.m; ++j)
    if (k.mask & (1u << j)) base.push_back(RLetter{2, 0, j});
  if (mono_degree(k.mono) == 0) {
    auto it = M.word_ix.find(rword_label(base));
    if (it == M.word_ix.end())
      throw InvalidInput("retract: embedding left the window");
    const Letter& l = M.wletter[it->second];
    out.add(l.deg, l.idx, Rational(1));
    return out;
  }
  int i = -1;
  for (int v = 0; v < M.n; ++v)
    if (k.mono[static_cast<std::size_t>(v)] == 1) i = v;
  RWord w = base;
  w.insert(w.begin(), RLetter{0, i, 0});
  auto it = M.word_ix.find(rword_label(w));
  if (it == M.word_ix.end())
    throw InvalidInput("retract: embedding left the window");
  const Letter& l = M.wletter[it->second];
  out.add(l.deg, l.idx, Rational(1));
  return out;
}

// Modified embedding: module elements of weight one go to their own block.
GradedVec retract_g_of(const RetractModel& M, const PvKey& k) {
  if (pv_mask_arity(k.mask) != 1 || mono_degree(k.mono) == 0)
    return retract_I_of(M, k);
  int j = -1;
  for (int b = 0; b < M.m; ++b)
    if (k.mask & (1u << b)) j = b;
  int i = -1;
  for (int v = 0; v < M.n; ++v)
    if (k.mono[static_cast<std::size_t>(v)] == 1) i = v;
  RWord w{RLetter{3, i, j}};
  GradedVec out;
  const Letter& l = M.wletter[M.word_ix.at(rword_label(w))];
  out.add(l.deg, l.idx, Rational(1));
  return out;
}

GradedMap map_from_columns(const SpacePtr& src, const SpacePtr& dst, int shift,
                           const std::vector<Letter>& basis,
                           const std::function<GradedVec(std::size_t)>& image) {
  GradedMap out(src, dst, shift);
  std::map<int, Mat> blocks;
  for (std::size_t c = 0; c < basis.size(); ++c) {
    GradedVec v = image(c);
    for (const auto& [di, coeff] : v.entries()) {
      if (di.first != basis[c].deg + shift)
        throw InvalidInput("retract: image degree mismatch");
      auto it = blocks.find(basis[c].deg);
      if (it == blocks.end())
        it = blocks
                 .emplace(basis[c].deg, zero_mat(dst->dim(di.first),
                                                 src->dim(basis[c].deg)))
                 .first;
      it->second(di.second, basis[c].idx) += coeff;
    }
  }
  for (auto& [deg, mat] : blocks) out = out.with_block(deg, std::move(mat));
  return out;
}

LinearAction validate_retract_action(int rank, const LinearAction& act) {
  bool nontrivial = false;
  for (const Mat& r : act.rho)
    if (!mat_is_zero(r)) nontrivial = true;
  for (const Vec& v : act.drift)
    for (Eigen::Index i = 0; i < v.size(); ++i)
      if (!(v(i) == Rational(0)))
        throw InvalidInput(
            "projective retract: affine drifts do not preserve the grading");
  if (nontrivial && act.vars != rank)
    throw InvalidInput(
        "projective retract: a nontrivial action must act on as many "
        "coordinates as the module has directions");
  return act;
}

}  // namespace

std::string retract_module_label(int var_or_const, int direction) {
  if (var_or_const < 0) return rletter_label(RLetter{2, 0, direction});
  return rletter_label(RLetter{3, var_or_const, direction});
}

std::string retract_small_label(const Mono& mono, std::uint32_t mask) {
  return small_label(PvKey{mono, mask});
}

RetractData projective_retract(int rank, const LinearAction& act) {
  if (rank <= 0) throw InvalidInput("projective retract: need a positive rank");
  validate_retract_action(rank, act);
  const int n = act.vars;
  const int m = rank;
  RetractModel M = build_retract_model(n, m);
  GradedMap dW = map_from_columns(M.W, M.W, 1, M.wletter, [&](std::size_t c) {
    return retract_d_of(M, M.words[c]);
  });
  GradedMap dV(M.V, M.V, 1);  // the small differential is zero
  GradedMap p = map_from_columns(M.W, M.V, 0, M.wletter, [&](std::size_t c) {
    return retract_p_of(M, M.words[c]);
  });
  GradedMap g = map_from_columns(M.V, M.W, 0, M.vletter, [&](std::size_t c) {
    return retract_g_of(M, M.small[c]);
  });
  GradedMap I = map_from_columns(M.V, M.W, 0, M.vletter, [&](std::size_t c) {
    return retract_I_of(M, M.small[c]);
  });
  // Canonical contraction: invert the differential from the bar-block words
  // onto the defect id − I∘p, then correct by the modified embedding.
  // Collect bar-block columns by degree.
  std::map<int, std::vector<std::size_t>> bar_cols;
  for (std::size_t c = 0; c < M.words.size(); ++c) {
    bool has_bar = false;
    for (const RLetter& l : M.words[c])
      if (l.kind == 1) has_bar = true;
    if (has_bar) bar_cols[rword_degree(M.words[c])].push_back(c);
  }
  GradedMap H(M.W, M.W, -1);
  {
    std::map<int, Mat> hblocks;
    for (std::size_t c = 0; c < M.words.size(); ++c) {
      bool has_bar = false;
      for (const RLetter& l : M.words[c])
        if (l.kind == 1) has_bar = true;
      if (has_bar) continue;  // the contraction vanishes on bar-block words
      int deg = rword_degree(M.words[c]);
      auto cols_it = bar_cols.find(deg - 1);
      // defect = w − I(p(w))
      GradedVec defect;
      defect.add(deg, M.wletter[c].idx, Rational(1));
      GradedVec ip = I.apply(p.apply_basis(deg, M.wletter[c].idx));
      defect -= ip;
      if (defect.is_zero()) continue;
      if (cols_it == bar_cols.end())
        throw EngineError("retract: contraction window failed to close");
      const std::vector<std::size_t>& cols = cols_it->second;
      // Solve dW(sum y_k · bar-word_k) = defect exactly.
      Eigen::Index rows = M.W->dim(deg);
      Mat A = zero_mat(rows, static_cast<Eigen::Index>(cols.size()));
      for (std::size_t k = 0; k < cols.size(); ++k) {
        GradedVec dv = dW.apply_basis(deg - 1, M.wletter[cols[k]].idx);
        for (const auto& [di, coeff] : dv.entries())
          A(di.second, static_cast<Eigen::Index>(k)) = coeff;
      }
      Vec b = Vec::Constant(rows, Rational(0));
      for (const auto& [di, coeff] : defect.entries()) {
        if (di.first != deg)
          throw EngineError("retract: defect is not degree-homogeneous");
        b(di.second) = coeff;
      }
      Eigen::FullPivLU<Mat> lu(A);
      Vec y = lu.solve(b);
      Vec res = A * y - b;
      for (Eigen::Index i = 0; i < res.size(); ++i)
        if (!(res(i) == Rational(0)))
          throw EngineError("retract: contraction window failed to close");
      auto hb = hblocks.find(deg);
      if (hb == hblocks.end())
        hb = hblocks.emplace(deg, zero_mat(M.W->dim(deg - 1), M.W->dim(deg)))
                 .first;
      for (std::size_t k = 0; k < cols.size(); ++k)
        hb->second(M.wletter[cols[k]].idx, M.wletter[c].idx) += y(
            static_cast<Eigen::Index>(k));
    }
    for (auto& [deg, mat] : hblocks) H = H.with_block(deg, std::move(mat));
  }
  GradedMap h = H - compose(H, compose(g, p));
  RetractData r;
  r.small = CochainComplex(M.V, dV);
  r.big = CochainComplex(M.W, dW);
  r.i = g;
  r.p = p;
  r.h = h;
  r.flags = RetractFlags{true, true};
  return r;
}

namespace {

RLetter parse_rletter(const std::string& tok) {
  // tok without parentheses: "x1", "x1|e2", "e2", "x1e2"
  auto bar = tok.find('|');
  if (bar != std::string::npos) {
    int i = std::stoi(tok.substr(1, bar - 1)) - 1;
    int j = std::stoi(tok.substr(bar + 2)) - 1;
    return RLetter{1, i, j};
  }
  if (tok[0] == 'e') return RLetter{2, 0, std::stoi(tok.substr(1)) - 1};
  auto e = tok.find('e', 1);
  if (e == std::string::npos) return RLetter{0, std::stoi(tok.substr(1)) - 1, 0};
  return RLetter{3, std::stoi(tok.substr(1, e - 1)) - 1,
                 std::stoi(tok.substr(e + 1)) - 1};
}

RWord parse_rword(const std::string& label) {
  RWord w;
  std::size_t pos = 0;
  while (pos < label.size()) {
    if (label[pos] != '(') throw InvalidInput("retract: malformed word label");
    std::size_t close = label.find(')', pos);
    if (close == std::string::npos)
      throw InvalidInput("retract: malformed word label");
    std::string tok = label.substr(pos + 1, close - pos - 1);
    if (!tok.empty()) w.push_back(parse_rletter(tok));
    pos = close + 1;
  }
  std::sort(w.begin(), w.end());
  return w;
}

PvKey parse_small(const std::string& label, int n) {
  auto bar = label.find('|');
  if (bar == std::string::npos)
    throw InvalidInput("retract: malformed small label");
  std::string mono_s = label.substr(0, bar);
  std::string mask_s = label.substr(bar + 1);
  Mono mono = mono_unit(n);
  if (mono_s != "1") {
    // degree <= 1: a single variable name as printed by the monomial layer
    bool found = false;
    for (int i = 0; i < n && !found; ++i)
      if (mono_s == var_name(i)) {
        mono = mono_var(n, i);
        found = true;
      }
    if (!found) throw InvalidInput("retract: malformed small label");
  }
  std::uint32_t mask = 0;
  if (mask_s != "1") {
    std::size_t pos = 0;
    while (pos < mask_s.size()) {
      std::size_t caret = mask_s.find('^', pos);
      std::string tok = caret == std::string::npos
                            ? mask_s.substr(pos)
                            : mask_s.substr(pos, caret - pos);
      mask |= 1u << (std::stoi(tok.substr(1)) - 1);
      pos = caret == std::string::npos ? mask_s.size() : caret + 1;
    }
  }
  return PvKey{mono, mask};
}

// Image of one letter under generator `gen`: coefficients transform by the
// flow derivative, module directions by the tangent rule.
std::vector<std::pair<RLetter, Rational>> rletter_action(const LinearAction& act,
                                                         int gen,
                                                         const RLetter& l) {
  std::vector<std::pair<RLetter, Rational>> out;
  const Mat& rho = act.rho[static_cast<std::size_t>(gen)];
  auto coeff_part = [&](int i) {
    // xi_M(x_i) = -sum_l rho(i, l) x_l
    for (int v = 0; v < act.vars; ++v) {
      Rational c = -rho(l.i, v);
      if (c == Rational(0)) continue;
      RLetter nl = l;
      nl.i = v;
      out.emplace_back(nl, c);
    }
    (void)i;
  };
  auto dir_part = [&]() {
    // L_{xi_M} e_j = sum_k rho(k, j) e_k
    for (int k = 0; k < act.vars; ++k) {
      Rational c = rho(k, l.j);
      if (c == Rational(0)) continue;
      RLetter nl = l;
      nl.j = k;
      out.emplace_back(nl, c);
    }
  };
  switch (l.kind) {
    case 0:
      coeff_part(l.i);
      break;
    case 2:
      dir_part();
      break;
    default:
      coeff_part(l.i);
      dir_part();
      break;
  }
  return out;
}

}  // namespace

GradedVec retract_field_word(const RetractData& r, const Polyvector& field) {
  GradedVec out;
  const SpacePtr& W = r.big.space();
  for (const auto& [k, v] : field) {
    if (pv_mask_arity(k.mask) != 1)
      throw InvalidInput("retract: expected a vector field");
    int j = -1;
    for (int b = 0; b < 32; ++b)
      if (k.mask & (1u << b)) j = b;
    int d = mono_degree(k.mono);
    if (d > 1)
      throw InvalidInput("retract: coefficients must have degree at most one");
    RWord w;
    if (d == 0) {
      w.push_back(RLetter{2, 0, j});
    } else {
      int i = -1;
      for (std::size_t vv = 0; vv < k.mono.size(); ++vv)
        if (k.mono[vv] == 1) i = static_cast<int>(vv);
      w.push_back(RLetter{3, i, j});
    }
    int idx = W->index_of(1, rword_label(w));
    if (idx < 0) throw InvalidInput("retract: field letter not in the window");
    out.add(1, idx, v);
  }
  return out;
}

GradedVec retract_small_field(const RetractData& r, const Polyvector& field) {
  GradedVec out;
  const SpacePtr& V = r.small.space();
  for (const auto& [k, v] : field) {
    if (pv_mask_arity(k.mask) != 1)
      throw InvalidInput("retract: expected a vector field");
    if (mono_degree(k.mono) > 1)
      throw InvalidInput("retract: coefficients must have degree at most one");
    int idx = V->index_of(1, small_label(k));
    if (idx < 0) throw InvalidInput("retract: field element not in the window");
    out.add(1, idx, v);
  }
  return out;
}

GradedMap retract_big_action(const RetractData& r, const LinearAction& act,
                             int gen) {
  if (gen < 0 || gen >= act.g.dim)
    throw InvalidInput("retract action: generator index out of range");
  validate_retract_action(act.vars, act);
  const SpacePtr& W = r.big.space();
  GradedMap out(W, W, 0);
  std::map<int, Mat> blocks;
  for (int deg : W->degrees()) {
    const std::vector<std::string>& labels = W->labels(deg);
    Mat block = zero_mat(W->dim(deg), W->dim(deg));
    for (int c = 0; c < W->dim(deg); ++c) {
      RWord w = parse_rword(labels[static_cast<std::size_t>(c)]);
      for (std::size_t t = 0; t < w.size(); ++t) {
        RWord rest;
        for (std::size_t k = 0; k < w.size(); ++k)
          if (k != t) rest.push_back(w[k]);
        for (const auto& [nl, coeff] : rletter_action(act, gen, w[t])) {
          RWord img = rest;
          int sign = 1;
          // the replaced letter leaves its slot and the replacement returns
          // to sorted position; both crossings count odd letters passed
          if (w[t].degree() % 2 == 1) {
            int before_old = 0;
            for (std::size_t k = 0; k < t; ++k)
              if (w[k].degree() % 2 == 1) ++before_old;
            if (before_old % 2 == 1) sign = -sign;
          }
          if (!rword_insert(img, nl, sign)) continue;
          auto ix = W->index_of(deg, rword_label(img));
          if (ix < 0)
            throw InvalidInput("retract action: image left the window");
          block(ix, c) += Rational(sign) * coeff;
        }
      }
    }
    if (!mat_is_zero(block)) blocks.emplace(deg, std::move(block));
  }
  for (auto& [deg, mat] : blocks) out = out.with_block(deg, std::move(mat));
  return out;
}

GradedMap retract_small_action(const RetractData& r, const LinearAction& act,
                               int gen) {
  if (gen < 0 || gen >= act.g.dim)
    throw InvalidInput("retract action: generator index out of range");
  validate_retract_action(act.vars, act);
  const SpacePtr& V = r.small.space();
  const Mat& rho = act.rho[static_cast<std::size_t>(gen)];
  GradedMap out(V, V, 0);
  std::map<int, Mat> blocks;
  for (int deg : V->degrees()) {
    const std::vector<std::string>& labels = V->labels(deg);
    Mat block = zero_mat(V->dim(deg), V->dim(deg));
    for (int c = 0; c < V->dim(deg); ++c) {
      PvKey k = parse_small(labels[static_cast<std::size_t>(c)], act.vars);
      // coefficient part
      if (mono_degree(k.mono) == 1) {
        int i = -1;
        for (std::size_t vv = 0; vv < k.mono.size(); ++vv)
          if (k.mono[vv] == 1) i = static_cast<int>(vv);
        for (int v = 0; v < act.vars; ++v) {
          Rational cf = -rho(i, v);
          if (cf == Rational(0)) continue;
          PvKey nk = k;
          nk.mono = mono_var(act.vars, v);
          int ix = V->index_of(deg, small_label(nk));
          if (ix < 0)
            throw InvalidInput("retract action: image left the window");
          block(ix, c) += cf;
        }
      }
      // direction part: replace e_t by sum_k rho(k, t) e_k with wedge signs
      for (int t = 0; t < 32; ++t) {
        if (!(k.mask & (1u << t))) continue;
        for (int kk = 0; kk < act.vars; ++kk) {
          Rational cf = rho(kk, t);
          if (cf == Rational(0)) continue;
          std::uint32_t rest = k.mask & ~(1u << t);
          if (rest & (1u << kk)) continue;  // repeated direction
          int crossed = 0;
          int lo = std::min(t, kk), hi = std::max(t, kk);
          for (int b = lo + 1; b < hi; ++b)
            if (rest & (1u << b)) ++crossed;
          PvKey nk = k;
          nk.mask = rest | (1u << kk);
          int ix = V->index_of(deg, small_label(nk));
          if (ix < 0)
            throw InvalidInput("retract action: image left the window");
          block(ix, c) += (crossed % 2 == 1 ? -cf : cf);
        }
      }
    }
    if (!mat_is_zero(block)) blocks.emplace(deg, std::move(block));
  }
  for (auto& [deg, mat] : blocks) out = out.with_block(deg, std::move(mat));
  return out;
}

}  // namespace hte
