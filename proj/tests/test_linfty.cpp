#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "htengine/errors.hpp"
#include "htengine/linfty.hpp"

using namespace hte;

namespace {

WordMap one(const Word& w, const Rational& c = Rational(1)) {
  WordMap m;
  add_term(m, w, c);
  return m;
}

// ---- shared spaces ---------------------------------------------------------

// Rotation algebra: three letters in shifted degree -1.
const Letter E1{-1, 0}, E2{-1, 1}, E3{-1, 2};
SpacePtr so3_space() {
  return make_space({{-1, {"e1", "e2", "e3"}}}, -1, -1);
}

BracketFn so3_bracket() {
  return [](const Letter& x, const Letter& y) -> WordMap {
    WordMap out;
    if (x.idx == y.idx) return out;
    const int k = 3 - x.idx - y.idx;
    const int sign = ((y.idx - x.idx + 3) % 3 == 1) ? 1 : -1;
    add_term(out, Word{Letter{-1, k}}, Rational(sign));
    return out;
  };
}

TaylorTable so3_table(int cap = 3) {
  SpacePtr sp = so3_space();
  return from_curved_lie(sp, WordMap{}, GradedMap::zero(sp, sp, 1), so3_bracket(), cap);
}

// Nilpotent example: a (deg -1), b, c (deg 0), z (deg +1); the only bracket is
// [a, b] = c and c, z are central.
const Letter HA{-1, 0}, HB{0, 0}, HC{0, 1}, HZ{1, 0};
SpacePtr heis_space() {
  return make_space({{-1, {"a"}}, {0, {"b", "c"}}, {1, {"z"}}}, -1, 1);
}

BracketFn heis_bracket() {
  return [](const Letter& x, const Letter& y) -> WordMap {
    WordMap out;
    if (x == HA && y == HB) add_term(out, Word{HC}, Rational(1));
    if (x == HB && y == HA) add_term(out, Word{HC}, Rational(-1));
    return out;
  };
}

TaylorTable heis_table(int cap = 3) {
  SpacePtr sp = heis_space();
  return from_curved_lie(sp, WordMap{}, GradedMap::zero(sp, sp, 1), heis_bracket(), cap);
}

// Acyclic two-term complex u -> v.
const Letter TU{-1, 0}, TV{0, 0};
SpacePtr two_term_space() {
  return make_space({{-1, {"u"}}, {0, {"v"}}}, -1, 0);
}

TaylorTable two_term_table(int cap = 3) {
  SpacePtr sp = two_term_space();
  GradedMap d = GradedMap::zero(sp, sp, 1).with_entry(-1, 0, 0, Rational(1));  // u -> v
  BracketFn zero_bracket = [](const Letter&, const Letter&) { return WordMap{}; };
  return from_curved_lie(sp, WordMap{}, d, zero_bracket, cap);
}

// Curved abelian example: m (deg 0), p (deg +1), D(m) = p, curvature element p.
const Letter CM{0, 0}, CP{1, 0};
SpacePtr mp_space() {
  return make_space({{0, {"m"}}, {1, {"p"}}}, 0, 1);
}

TaylorTable mp_table(int cap = 3, int hbar_power = 0) {
  SpacePtr sp = mp_space();
  GradedMap d = GradedMap::zero(sp, sp, 1).with_entry(0, 0, 0, Rational(1));  // m -> p
  BracketFn zero_bracket = [](const Letter&, const Letter&) { return WordMap{}; };
  return from_curved_lie(sp, one(Word{CP}), d, zero_bracket, cap, hbar_power);
}

// Symmetric-bracket example on even letters: [b, c] = z with b, c in shifted
// degree 0 and z in shifted degree 1.
const Letter SB{0, 0}, SC{0, 1}, SZ{1, 0};
SpacePtr bcz_space() {
  return make_space({{0, {"b", "c"}}, {1, {"z"}}}, 0, 1);
}

BracketFn bcz_bracket() {
  return [](const Letter& x, const Letter& y) -> WordMap {
    WordMap out;
    if ((x == SB && y == SC) || (x == SC && y == SB)) add_term(out, Word{SZ}, Rational(1));
    return out;
  };
}

TaylorTable bcz_table(int cap = 3) {
  SpacePtr sp = bcz_space();
  return from_curved_lie(sp, WordMap{}, GradedMap::zero(sp, sp, 1), bcz_bracket(), cap);
}

// Mixed-degree playground: two odd letters at -1, two even at 0, one at +1.
const Letter O1{-1, 0}, O2{-1, 1}, X1{0, 0}, X2{0, 1}, P1{1, 0};
SpacePtr mixed_space() {
  return make_space({{-1, {"o1", "o2"}}, {0, {"x1", "x2"}}, {1, {"p1"}}}, -1, 1);
}

TaylorTable abelian_table(SpacePtr sp, int cap) {
  return make_taylor_table(std::move(sp), cap);
}

// ---- random data -----------------------------------------------------------

WordMap random_value(const GradedSpace& sp, int deg, std::mt19937& rng) {
  WordMap v;
  for (int i = 0; i < sp.dim(deg); ++i) {
    const int c = static_cast<int>(rng() % 5) - 2;
    if (c != 0) add_term(v, Word{Letter{deg, i}}, Rational(c));
  }
  return v;
}

TaylorTable random_table(const SpacePtr& sp, int cap, bool curved, std::mt19937& rng) {
  TaylorTable t = make_taylor_table(sp, cap);
  for (int n = 1; n <= cap; ++n) {
    for (const Word& w : sym_basis_words(*sp, n)) {
      set_taylor_component(t, w, random_value(*sp, word_degree(w) + 1, rng));
    }
  }
  if (curved) {
    WordMap r = random_value(*sp, 1, rng);
    add_term(r, Word{P1}, Rational(1));  // keep it nonzero
    set_taylor_curvature(t, r);
  }
  validate_taylor_table(t);
  return t;
}

MorphismTable random_morphism(TaylorTable source, TaylorTable target, int cap,
                              std::mt19937& rng) {
  const SpacePtr src = source.underlying;
  const SpacePtr dst = target.underlying;
  MorphismTable f = make_morphism(std::move(source), std::move(target), cap);
  for (int n = 1; n <= cap; ++n) {
    for (const Word& w : sym_basis_words(*src, n)) {
      set_morphism_component(f, w, random_value(*dst, word_degree(w), rng));
    }
  }
  return f;
}

// ---- test-local unshuffle coproduct ---------------------------------------

int pull_front_sign(const Word& w, unsigned mask) {
  int s = 1;
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (!(mask >> i & 1u) || w[i].deg % 2 == 0) continue;
    for (std::size_t j = 0; j < i; ++j) {
      if (!(mask >> j & 1u) && w[j].deg % 2 != 0) s = -s;
    }
  }
  return s;
}

PairComb unshuffle(const WordMap& x) {
  PairComb out;
  for (const auto& [w, c] : x) {
    for (unsigned mask = 0; mask < (1u << w.size()); ++mask) {
      Word left, right;
      for (std::size_t i = 0; i < w.size(); ++i) {
        (mask >> i & 1u ? left : right).push_back(w[i]);
      }
      add_pair_term(out, left, right, c * Rational(pull_front_sign(w, mask)));
    }
  }
  return out;
}

void check_coderivation_property(const TaylorTable& t, int max_weight) {
  for (int n = 0; n <= max_weight; ++n) {
    for (const Word& w : sym_basis_words(*t.underlying, n)) {
      const PairComb lhs = unshuffle(extend_coderivation(t, w));
      PairComb rhs;
      for (unsigned mask = 0; mask < (1u << w.size()); ++mask) {
        Word u, v;
        for (std::size_t i = 0; i < w.size(); ++i) {
          (mask >> i & 1u ? u : v).push_back(w[i]);
        }
        const Rational c(pull_front_sign(w, mask));
        for (const auto& [y, cy] : extend_coderivation(t, u)) {
          add_pair_term(rhs, y, v, c * cy);
        }
        const Rational su(word_degree(u) % 2 == 0 ? 1 : -1);
        for (const auto& [y, cy] : extend_coderivation(t, v)) {
          add_pair_term(rhs, u, y, c * su * cy);
        }
      }
      CHECK(lhs == rhs);
    }
  }
}

void check_morphism_property(const MorphismTable& f, int max_weight) {
  for (int n = 0; n <= max_weight; ++n) {
    for (const Word& w : sym_basis_words(*f.source.underlying, n)) {
      const PairComb lhs = unshuffle(extend_morphism(f, w));
      PairComb rhs;
      for (unsigned mask = 0; mask < (1u << w.size()); ++mask) {
        Word u, v;
        for (std::size_t i = 0; i < w.size(); ++i) {
          (mask >> i & 1u ? u : v).push_back(w[i]);
        }
        const Rational c(pull_front_sign(w, mask));
        for (const auto& [a, ca] : extend_morphism(f, u)) {
          for (const auto& [b, cb] : extend_morphism(f, v)) {
            add_pair_term(rhs, a, b, c * ca * cb);
          }
        }
      }
      CHECK(lhs == rhs);
    }
  }
}

}  // namespace

// ---- basis words and table plumbing ---------------------------------------

TEST_CASE("sym_basis_words: ordering, counts, odd squares excluded") {
  SpacePtr sp = mixed_space();
  CHECK(sym_basis_words(*sp, 0) == std::vector<Word>{Word{}});
  CHECK(sym_basis_words(*sp, 1).size() == 5);
  const auto w2 = sym_basis_words(*sp, 2);
  for (const Word& w : w2) {
    auto [s, sign] = sym_sort(w);
    CHECK(s == w);
    CHECK(sign == 1);
  }
  // direct count: all sorted pairs minus odd repeats
  int expected = 0;
  std::vector<Letter> ls{O1, O2, X1, X2, P1};
  for (std::size_t i = 0; i < ls.size(); ++i) {
    for (std::size_t j = i; j < ls.size(); ++j) {
      if (i == j && ls[i].deg % 2 != 0) continue;
      ++expected;
    }
  }
  CHECK(static_cast<int>(w2.size()) == expected);
}

TEST_CASE("taylor tables: key normalization, degree checks, caps") {
  SpacePtr sp = mixed_space();
  TaylorTable t = make_taylor_table(sp, 3);
  // install via an unsorted key: o2 before o1 flips the stored sign
  set_taylor_component(t, Word{O2, O1}, one(Word{O1}, Rational(5)));
  CHECK(apply_component(t, Word{O1, O2}) == one(Word{O1}, Rational(-5)));
  CHECK(apply_component(t, Word{O2, O1}) == one(Word{O1}, Rational(5)));
  validate_taylor_table(t);

  // wrong value degree: word degree -2, value must be degree -1
  CHECK_THROWS_AS(set_taylor_component(t, Word{O1, O2}, one(Word{X1})), InvalidInput);
  // value must be weight 1
  CHECK_THROWS_AS(set_taylor_component(t, Word{O1, O2}, one(Word{O1, X1})), InvalidInput);
  // odd square vanishes in the symmetric algebra
  CHECK_THROWS_AS(set_taylor_component(t, Word{O1, O1}, one(Word{O1})), InvalidInput);
  // beyond the cap
  CHECK_THROWS_AS(set_taylor_component(t, Word{X1, X1, X1, X1}, one(Word{P1})), CapExceeded);
  CHECK_THROWS_AS(apply_component(t, Word{X1, X1, X1, X1}), CapExceeded);
  CHECK_THROWS_AS(extend_coderivation(t, Word{X1, X1, X1, X1}), CapExceeded);
  // curvature must have degree +1
  CHECK_THROWS_AS(set_taylor_curvature(t, one(Word{X1})), InvalidInput);

  // zero value erases
  set_taylor_component(t, Word{O2, O1}, WordMap{});
  CHECK(is_zero(apply_component(t, Word{O1, O2})));
}

// ---- coderivation extension ------------------------------------------------

TEST_CASE("coderivation extension: hand-enumerated values") {
  SpacePtr sp = mixed_space();
  TaylorTable t = make_taylor_table(sp, 3);
  set_taylor_component(t, Word{O1}, one(Word{X1}));                 // Q_1(o1) = x1
  set_taylor_component(t, Word{O2}, one(Word{X1}, Rational(2)));    // Q_1(o2) = 2 x1
  set_taylor_component(t, Word{O1, O2}, one(Word{O1}));             // Q_2(o1 v o2) = o1

  SUBCASE("flat") {
    CHECK(is_zero(extend_coderivation(t, Word{})));
    CHECK(extend_coderivation(t, Word{O1}) == one(Word{X1}));
    WordMap expect;
    add_term(expect, Word{O1}, Rational(1));
    add_term(expect, Word{O1, X1}, Rational(-2));
    add_term(expect, Word{O2, X1}, Rational(1));
    CHECK(extend_coderivation(t, Word{O1, O2}) == expect);

    WordMap expect3;
    add_term(expect3, Word{O2, X1, X1}, Rational(1));
    add_term(expect3, Word{O1, X1, X1}, Rational(-2));
    add_term(expect3, Word{O1, X1}, Rational(1));
    CHECK(extend_coderivation(t, Word{O1, O2, X1}) == expect3);

    // linearity and the sign of a presorted key
    WordMap x;
    add_term(x, Word{O2, O1}, Rational(3));  // = -3 (o1 v o2)
    WordMap out = extend_coderivation(t, x);
    CHECK(out == scaled(expect, Rational(-3)));
  }

  SUBCASE("curved") {
    set_taylor_curvature(t, one(Word{P1}));
    CHECK(extend_coderivation(t, Word{}) == one(Word{P1}));
    WordMap w1;
    add_term(w1, Word{X1}, Rational(1));
    add_term(w1, Word{O1, P1}, Rational(-1));  // p1 v o1 = -(o1 v p1)
    CHECK(extend_coderivation(t, Word{O1}) == w1);

    WordMap w2 = extend_coderivation(t, Word{O1, O2});
    CHECK(w2.at(Word{O1, O2, P1}) == Rational(1));
    CHECK(w2.at(Word{O1}) == Rational(1));
  }
}

TEST_CASE("coderivation extension satisfies the coproduct identity") {
  std::mt19937 rng(17);
  for (int trial = 0; trial < 3; ++trial) {
    check_coderivation_property(random_table(mixed_space(), 3, false, rng), 3);
    check_coderivation_property(random_table(mixed_space(), 3, true, rng), 3);
  }
  check_coderivation_property(so3_table(), 3);
  check_coderivation_property(mp_table(), 3);
}

TEST_CASE("coderivation extension: symmetric-element overload") {
  TaylorTable t = so3_table();
  SymElement x(t.underlying, 2, one(Word{E1, E2}));
  SymElement qx = extend_coderivation(t, x);
  CHECK(qx.weight_cap() == 3);
  CHECK(qx.terms() == one(Word{E3}));  // Q_2(e1 v e2) = e3, no unary part
}

// ---- curved Lie tables -----------------------------------------------------

TEST_CASE("from_curved_lie pins the structure signs") {
  // rotation algebra: letters are odd, Q_2(x v y) = +[x, y]
  TaylorTable so3 = so3_table();
  CHECK(apply_component(so3, Word{E1, E2}) == one(Word{E3}));
  CHECK(apply_component(so3, Word{E2, E3}) == one(Word{E1}));
  CHECK(apply_component(so3, Word{E1, E3}) == one(Word{E2}, Rational(-1)));

  // even letters: Q_2(b v c) = -[b, c]
  TaylorTable bcz = bcz_table();
  CHECK(apply_component(bcz, Word{SB, SC}) == one(Word{SZ}, Rational(-1)));

  // differential: Q_1 = -D
  TaylorTable tt = two_term_table();
  CHECK(apply_component(tt, Word{TU}) == one(Word{TV}, Rational(-1)));

  // curvature: Q_0(1) = -R at the declared series power
  TaylorTable mp = mp_table(3, 2);
  CHECK(mp.curvature == one(Word{CP}, Rational(-1)));
  CHECK(mp.curvature_hbar_power == 2);
  CHECK(apply_component(mp, Word{}) == one(Word{CP}, Rational(-1)));

  // mixed-degree bracket [a, b] = c: Q_2(a v b) = +[a, b] since a is odd
  TaylorTable heis = heis_table();
  CHECK(apply_component(heis, Word{HA, HB}) == one(Word{HC}));

  // a bracket violating graded antisymmetry is rejected
  SpacePtr sp = heis_space();
  BracketFn broken = [](const Letter& x, const Letter& y) -> WordMap {
    WordMap out;
    if ((x == HA && y == HB) || (x == HB && y == HA)) add_term(out, Word{HC}, Rational(1));
    return out;
  };
  CHECK_THROWS_AS(from_curved_lie(sp, WordMap{}, GradedMap::zero(sp, sp, 1), broken, 3),
                  InvalidInput);
}

TEST_CASE("check_linfty: rotation algebra passes, corrupted brackets fail") {
  const LinftyReport good = check_linfty(so3_table());
  CHECK(good.ok());
  CHECK(good.unchecked_arities.empty());

  BracketFn bad = [](const Letter& x, const Letter& y) -> WordMap {
    WordMap out;
    if (x.idx == y.idx) return out;
    int i = x.idx, j = y.idx, s = 1;
    if (i > j) {
      std::swap(i, j);
      s = -1;
    }
    int k = -1, c = 1;
    if (i == 0 && j == 1) k = 2;
    if (i == 1 && j == 2) k = 0;
    if (i == 0 && j == 2) {
      k = 0;  // [e3, e1] = e1 breaks the weight-3 identity
      c = -1;
    }
    if (k >= 0) add_term(out, Word{Letter{-1, k}}, Rational(s * c));
    return out;
  };
  SpacePtr sp = so3_space();
  const LinftyReport report =
      check_linfty(from_curved_lie(sp, WordMap{}, GradedMap::zero(sp, sp, 1), bad, 3));
  CHECK_FALSE(report.ok());
  REQUIRE(report.violations.size() == 1);
  CHECK(report.violations[0].find("e1.e2.e3") != std::string::npos);
  CHECK(report.to_string().find("violation") != std::string::npos);
}

TEST_CASE("check_linfty: a non-square differential is reported at weight 1") {
  SpacePtr sp = make_space({{-1, {"u"}}, {0, {"v"}}, {1, {"w"}}}, -1, 1);
  GradedMap d = GradedMap::zero(sp, sp, 1)
                    .with_entry(-1, 0, 0, Rational(1))   // u -> v
                    .with_entry(0, 0, 0, Rational(1));   // v -> w
  BracketFn zero_bracket = [](const Letter&, const Letter&) { return WordMap{}; };
  const LinftyReport report =
      check_linfty(from_curved_lie(sp, WordMap{}, d, zero_bracket, 2));
  CHECK_FALSE(report.ok());
  bool weight1 = false;
  for (const std::string& v : report.violations) {
    if (v.find("(QQ)^1 on u ") != std::string::npos) weight1 = true;
  }
  CHECK(weight1);
}

TEST_CASE("check_linfty: curved tables leave the top arity unchecked") {
  const LinftyReport r3 = check_linfty(mp_table(3));
  CHECK(r3.ok());
  CHECK(r3.unchecked_arities == std::vector<int>{3});
  const LinftyReport r2 = check_linfty(mp_table(2));
  CHECK(r2.ok());
  CHECK(r2.unchecked_arities == std::vector<int>{2});
  CHECK(r2.to_string().find("unchecked") != std::string::npos);

  // scoped variant: only the listed words are consulted
  const LinftyReport scoped = check_linfty_on(mp_table(3), {Word{}, Word{CM}});
  CHECK(scoped.ok());
  CHECK(scoped.unchecked_arities.empty());
}

// ---- Maurer-Cartan residuals -----------------------------------------------

TEST_CASE("mc_residual: curved abelian example solves at the expected point") {
  TaylorTable mp = mp_table();
  // residual(s m) = -(R + D(s m)) = -(1 + s) p
  CHECK(is_zero(mc_residual(mp, one(Word{CM}, Rational(-1)))));
  CHECK(mc_residual(mp, one(Word{CM}, Rational(2))) == one(Word{CP}, Rational(-3)));
  CHECK(mc_residual(mp, WordMap{}) == one(Word{CP}, Rational(-1)));
}

TEST_CASE("mc_residual equals the negated structure-equation value") {
  // Independent oracle: on any table built from (R, D, bracket) the residual
  // must equal -(R + D pi + 1/2 [pi, pi]), evaluated directly from the input
  // data rather than through the table.
  std::mt19937 rng(23);
  SpacePtr sp = bcz_space();
  for (int trial = 0; trial < 5; ++trial) {
    // random symmetric bracket values on the even letters
    WordMap bb = random_value(*sp, 1, rng);
    WordMap bc = random_value(*sp, 1, rng);
    WordMap cc = random_value(*sp, 1, rng);
    BracketFn br = [=](const Letter& x, const Letter& y) -> WordMap {
      if (x == SB && y == SB) return bb;
      if (x == SC && y == SC) return cc;
      if ((x == SB && y == SC) || (x == SC && y == SB)) return bc;
      return WordMap{};
    };
    Mat dmat = zero_mat(1, 2);
    dmat(0, 0) = Rational(static_cast<int>(rng() % 5) - 2);
    dmat(0, 1) = Rational(static_cast<int>(rng() % 5) - 2);
    const GradedMap d = GradedMap::zero(sp, sp, 1).with_block(0, dmat);
    const WordMap curv = random_value(*sp, 1, rng);
    const TaylorTable t = from_curved_lie(sp, curv, d, br, 3);

    const WordMap pi = random_value(*sp, 0, rng);
    WordMap direct = curv;
    add_scaled(direct, apply_graded_map(d, pi), Rational(1));
    WordMap bracket_pi;  // [pi, pi] by bilinearity
    for (const auto& [wx, cx] : pi) {
      for (const auto& [wy, cy] : pi) {
        add_scaled(bracket_pi, br(wx[0], wy[0]), cx * cy);
      }
    }
    add_scaled(direct, bracket_pi, Rational(1) / Rational(2));
    CHECK(mc_residual(t, pi) == scaled(direct, Rational(-1)));
  }
}

TEST_CASE("mc_residual: series bookkeeping") {
  SUBCASE("curvature enters at its declared power") {
    TaylorTable mp = mp_table(3, 2);
    // pi = -(hbar^2) m cancels the curvature at order 2
    const MCElement good =
        make_mc_series(mp.underlying, {WordMap{}, WordMap{}, one(Word{CM}, Rational(-1))}, 2);
    for (const WordMap& r : mc_residual(mp, good)) CHECK(is_zero(r));

    const MCElement offset =
        make_mc_series(mp.underlying, {WordMap{}, WordMap{}, one(Word{CM})}, 2);
    const auto res = mc_residual(mp, offset);
    CHECK(is_zero(res[0]));
    CHECK(is_zero(res[1]));
    CHECK(res[2] == one(Word{CP}, Rational(-2)));

    // a series cap below the curvature power truncates it away
    const MCElement low = make_mc_series(mp.underlying, {WordMap{}, WordMap{}}, 1);
    for (const WordMap& r : mc_residual(mp, low)) CHECK(is_zero(r));
  }

  SUBCASE("quadratic term lands at the sum of the orders") {
    TaylorTable t = bcz_table();
    WordMap pi1;
    add_term(pi1, Word{SB}, Rational(1));
    add_term(pi1, Word{SC}, Rational(1));
    const MCElement pi = make_mc_series(t.underlying, {WordMap{}, pi1, WordMap{}}, 2);
    const auto res = mc_residual(t, pi);
    CHECK(is_zero(res[0]));
    CHECK(is_zero(res[1]));
    CHECK(res[2] == one(Word{SZ}, Rational(-1)));  // -1/2 [pi_1, pi_1]

    // truncating at order 1 drops the quadratic term entirely
    const MCElement pi_low = make_mc_series(t.underlying, {WordMap{}, pi1}, 1);
    for (const WordMap& r : mc_residual(t, pi_low)) CHECK(is_zero(r));
  }

  SUBCASE("validation") {
    TaylorTable t = bcz_table();
    CHECK_THROWS_AS(make_mc_element(t.underlying, one(Word{SZ})), InvalidInput);
    CHECK_THROWS_AS(make_mc_series(t.underlying, {WordMap{}}, 1), InvalidInput);
  }
}

// ---- homotopies and centrality ---------------------------------------------

TEST_CASE("mc_homotopy_residual: certificates and a negative control") {
  SUBCASE("constant path with zero generator") {
    TaylorTable t = heis_table();
    PolyPath pi = make_poly_path(t.underlying, {one(Word{HB})});
    PolyPath lam = make_poly_path(t.underlying, {WordMap{}});
    CHECK(path_is_zero(mc_homotopy_residual(t, pi, lam)));
  }

  SUBCASE("abelian gauge line pairs with the negated primitive") {
    TaylorTable t = two_term_table();
    // pi_t = (s + t) v, lambda = -u
    PolyPath pi = make_poly_path(t.underlying, {one(Word{TV}, Rational(7)), one(Word{TV})});
    PolyPath lam = make_poly_path(t.underlying, {one(Word{TU}, Rational(-1))});
    CHECK(path_is_zero(mc_homotopy_residual(t, pi, lam)));
    // flipping the generator breaks it
    PolyPath bad = make_poly_path(t.underlying, {one(Word{TU})});
    CHECK_FALSE(path_is_zero(mc_homotopy_residual(t, pi, bad)));
  }

  SUBCASE("nilpotent flow line") {
    TaylorTable t = heis_table();
    const Rational beta(3), gamma(-2);
    // pi_t = beta b + (gamma + beta t) c, lambda = a
    WordMap c0;
    add_term(c0, Word{HB}, beta);
    add_term(c0, Word{HC}, gamma);
    PolyPath pi = make_poly_path(t.underlying, {c0, one(Word{HC}, beta)});
    PolyPath lam = make_poly_path(t.underlying, {one(Word{HA})});
    CHECK(path_is_zero(mc_homotopy_residual(t, pi, lam)));

    // wrong slope: residual is the constant (slope - beta) c
    PolyPath wrong = make_poly_path(t.underlying, {c0, one(Word{HC}, Rational(8))});
    const PolyPath res = mc_homotopy_residual(t, wrong, lam);
    REQUIRE(res.coeffs.size() == 1);
    CHECK(res.coeffs[0] == one(Word{HC}, Rational(5)));
  }

  SUBCASE("degree validation") {
    TaylorTable t = heis_table();
    PolyPath pi = make_poly_path(t.underlying, {one(Word{HB})});
    PolyPath lam_bad = make_poly_path(t.underlying, {one(Word{HB})});
    CHECK_THROWS_AS(mc_homotopy_residual(t, pi, lam_bad), InvalidInput);
    PolyPath pi_bad = make_poly_path(t.underlying, {one(Word{HA})});
    PolyPath lam = make_poly_path(t.underlying, {one(Word{HA})});
    CHECK_THROWS_AS(mc_homotopy_residual(t, pi_bad, lam), InvalidInput);
  }
}

TEST_CASE("is_central") {
  TaylorTable heis = heis_table();
  CHECK(is_central(heis, one(Word{HC})));
  CHECK(is_central(heis, one(Word{HZ})));
  CHECK_FALSE(is_central(heis, one(Word{HB})));
  CHECK_FALSE(is_central(so3_table(), one(Word{E1})));
}

// ---- morphism tables -------------------------------------------------------

TEST_CASE("morphism extension: explicit values and the coproduct identity") {
  SpacePtr sp = mixed_space();
  TaylorTable flat = abelian_table(sp, 3);
  MorphismTable f = strict_morphism(flat, flat, GradedMap::identity(sp), 3);
  set_morphism_component(f, Word{O1, X1}, one(Word{O2}, Rational(3)));

  CHECK(extend_morphism(f, Word{}) == one(Word{}));
  CHECK(extend_morphism(f, Word{O1}) == one(Word{O1}));

  WordMap expect2;
  add_term(expect2, Word{O2}, Rational(3));
  add_term(expect2, Word{O1, X1}, Rational(1));
  CHECK(extend_morphism(f, Word{O1, X1}) == expect2);

  WordMap expect3;
  add_term(expect3, Word{O2, X1}, Rational(6));
  add_term(expect3, Word{O1, X1, X1}, Rational(1));
  CHECK(extend_morphism(f, Word{O1, X1, X1}) == expect3);

  std::mt19937 rng(41);
  for (int trial = 0; trial < 3; ++trial) {
    check_morphism_property(
        random_morphism(abelian_table(sp, 3), abelian_table(sp, 3), 3, rng), 3);
  }
}

TEST_CASE("morphism components: validation") {
  SpacePtr sp = mixed_space();
  TaylorTable flat = abelian_table(sp, 3);
  MorphismTable f = make_morphism(flat, flat, 2);
  // wrong degree (morphism values preserve the word degree)
  CHECK_THROWS_AS(set_morphism_component(f, Word{O1}, one(Word{X1})), InvalidInput);
  CHECK_THROWS_AS(set_morphism_component(f, Word{X1, X2, X1}, one(Word{X1})), CapExceeded);
  set_morphism_component(f, Word{O1}, one(Word{O2}, Rational(4)));
  validate_morphism(f);
  CHECK(morphism_p1(f, one(Word{O1})) == one(Word{O2}, Rational(4)));
  // p1 of the extension only sees stored arities; others vanish
  CHECK(is_zero(morphism_p1(f, one(Word{X1, X1, X1}))));

  // strict morphisms insist on shift-0 linear parts over the right spaces
  CHECK_THROWS_AS(strict_morphism(flat, flat, GradedMap::zero(sp, sp, 1), 2), InvalidInput);
  CHECK_THROWS_AS(
      strict_morphism(flat, flat, GradedMap::identity(two_term_space()), 2), InvalidInput);
}

TEST_CASE("morphism composition agrees with composing the extensions") {
  SpacePtr sp = make_space({{0, {"y1", "y2"}}}, 0, 0);
  const Letter Y1{0, 0}, Y2{0, 1};
  TaylorTable flat = abelian_table(sp, 2);

  GradedMap phi = GradedMap::zero(sp, sp, 0).with_block(0, [] {
    Mat m = zero_mat(2, 2);
    m(0, 0) = Rational(1);
    m(1, 0) = Rational(2);
    m(1, 1) = Rational(1);
    return m;
  }());
  GradedMap psi = GradedMap::zero(sp, sp, 0).with_block(0, [] {
    Mat m = zero_mat(2, 2);
    m(0, 0) = Rational(3);
    m(0, 1) = Rational(1);
    m(1, 1) = Rational(1);
    return m;
  }());

  MorphismTable f = strict_morphism(flat, flat, phi, 2);
  set_morphism_component(f, Word{Y1, Y1}, one(Word{Y1}));
  MorphismTable g = strict_morphism(flat, flat, psi, 2);
  set_morphism_component(g, Word{Y1, Y2}, one(Word{Y2}, Rational(5)));

  const MorphismTable fg = compose_morphisms(f, g);
  // hand value: (f o g)_2(y1 v y2) = phi(G_2(y1 v y2)) + F_2(psi y1 v psi y2)
  WordMap expect;
  add_term(expect, Word{Y1}, Rational(3));
  add_term(expect, Word{Y2}, Rational(5));
  CHECK(morphism_p1(fg, one(Word{Y1, Y2})) == expect);
  CHECK(morphism_linear_part(fg) == compose(phi, psi));

  // independent identity: the extension of the composite is the composite of
  // the extensions, on every basis word up to the cap
  for (int n = 0; n <= 2; ++n) {
    for (const Word& w : sym_basis_words(*sp, n)) {
      CHECK(extend_morphism(fg, w) == extend_morphism(f, extend_morphism(g, w)));
    }
  }

  // mixed-degree random check of the same identity
  std::mt19937 rng(59);
  SpacePtr msp = mixed_space();
  TaylorTable mflat = abelian_table(msp, 3);
  for (int trial = 0; trial < 3; ++trial) {
    MorphismTable rf = random_morphism(mflat, mflat, 3, rng);
    MorphismTable rg = random_morphism(mflat, mflat, 3, rng);
    const MorphismTable rfg = compose_morphisms(rf, rg);
    for (int n = 0; n <= 3; ++n) {
      for (const Word& w : sym_basis_words(*msp, n)) {
        CHECK(extend_morphism(rfg, w) == extend_morphism(rf, extend_morphism(rg, w)));
      }
    }
  }

  // composition across incompatible middle structures is rejected
  MorphismTable h = strict_morphism(heis_table(), heis_table(),
                                    GradedMap::identity(heis_space()), 2);
  CHECK_THROWS_AS(compose_morphisms(f, h), InvalidInput);
}

TEST_CASE("invert_strict_isomorphism") {
  SpacePtr sp = make_space({{0, {"y1", "y2"}}}, 0, 0);
  const Letter Y1{0, 0}, Y2{0, 1};
  TaylorTable flat = abelian_table(sp, 2);

  MorphismTable f =
      strict_morphism(flat, flat, Rational(2) * GradedMap::identity(sp), 2);
  set_morphism_component(f, Word{Y1, Y2}, one(Word{Y1}, Rational(8)));

  const MorphismTable inv = invert_strict_isomorphism(f);
  CHECK(morphism_linear_part(inv) ==
        (Rational(1) / Rational(2)) * GradedMap::identity(sp));
  CHECK(morphism_p1(inv, one(Word{Y1, Y2})) == one(Word{Y1}, Rational(-1)));

  for (const MorphismTable& comp :
       {compose_morphisms(f, inv), compose_morphisms(inv, f)}) {
    CHECK(morphism_linear_part(comp) == GradedMap::identity(sp));
    for (int n = 0; n <= 2; ++n) {
      for (const Word& w : sym_basis_words(*sp, n)) {
        CHECK(extend_morphism(comp, w) == one(w));
      }
    }
  }

  // a random higher-order perturbation of the identity inverts exactly
  std::mt19937 rng(71);
  SpacePtr msp = mixed_space();
  TaylorTable mflat = abelian_table(msp, 3);
  MorphismTable r = random_morphism(mflat, mflat, 3, rng);
  // overwrite the linear part with the identity so it is invertible
  for (int d : msp->degrees()) {
    for (int i = 0; i < msp->dim(d); ++i) {
      set_morphism_component(r, Word{Letter{d, i}}, one(Word{Letter{d, i}}));
    }
  }
  const MorphismTable rinv = invert_strict_isomorphism(r);
  for (int n = 0; n <= 3; ++n) {
    for (const Word& w : sym_basis_words(*msp, n)) {
      CHECK(extend_morphism(r, extend_morphism(rinv, w)) == one(w));
      CHECK(extend_morphism(rinv, extend_morphism(r, w)) == one(w));
    }
  }

  // a singular linear part is rejected
  MorphismTable zf = make_morphism(flat, flat, 2);
  CHECK_THROWS_AS(invert_strict_isomorphism(zf), SingularLinearPart);
  // mismatched dimensions cannot be inverted either
  MorphismTable across = make_morphism(flat, abelian_table(mixed_space(), 2), 2);
  CHECK_THROWS_AS(invert_strict_isomorphism(across), SingularLinearPart);
}

TEST_CASE("tables_agree") {
  CHECK(tables_agree(so3_table(), so3_table(), 3));
  CHECK(tables_agree(mp_table(3, 2), mp_table(3, 2), 3));
  CHECK_FALSE(tables_agree(mp_table(3, 2), mp_table(3, 0), 3));
  CHECK_FALSE(tables_agree(so3_table(), heis_table(), 2));
  TaylorTable changed = so3_table();
  set_taylor_component(changed, Word{E1, E2}, one(Word{E3}, Rational(2)));
  CHECK_FALSE(tables_agree(so3_table(), changed, 3));
  CHECK(tables_agree(so3_table(), changed, 1));
}

// ---- convolution structure -------------------------------------------------

TEST_CASE("convolution: residual and intertwining defect coincide") {
  SUBCASE("identity on a flat structure is a solution") {
    ConvolutionAlgebra conv(heis_table(), heis_table());
    CHECK(conv.check_cap() == conv.arity_cap());
    const HomElement id = hom_from_morphism(
        strict_morphism(heis_table(), heis_table(), GradedMap::identity(heis_space()), 3));
    CHECK(hom_is_zero(conv.mc_residual(id)));
    CHECK(hom_is_zero(conv.morphism_defect(id)));
  }

  SUBCASE("identity on a curved structure is a solution") {
    ConvolutionAlgebra conv(mp_table(), mp_table());
    CHECK(conv.check_cap() == conv.arity_cap() - 1);
    const HomElement id = hom_from_morphism(
        strict_morphism(mp_table(), mp_table(), GradedMap::identity(mp_space()), 3));
    CHECK(hom_is_zero(conv.mc_residual(id)));
    CHECK(hom_is_zero(conv.morphism_defect(id)));
    // the zero element sees exactly the target curvature
    const HomElement zero = make_hom_element(3);
    CHECK(hom_equal(conv.mc_residual(zero), conv.curvature()));
    CHECK(conv.curvature().on_unit == one(Word{CP}, Rational(-1)));
  }

  SUBCASE("a rescaled linear part fails by the curvature mismatch") {
    SpacePtr sp = mp_space();
    GradedMap two_p = GradedMap::identity(sp).with_entry(1, 0, 0, Rational(2));
    ConvolutionAlgebra conv(mp_table(), mp_table());
    const HomElement f =
        hom_from_morphism(strict_morphism(mp_table(), mp_table(), two_p, 3));
    const HomElement res = conv.mc_residual(f);
    CHECK_FALSE(hom_is_zero(res));
    // residual(1) = Q'_0 - F_1(Q_0) = -p + 2p = p
    CHECK(res.on_unit == one(Word{CP}));
    CHECK(hom_equal(res, conv.morphism_defect(f)));
  }

  SUBCASE("random map-degree-0 elements: the two routes agree") {
    std::mt19937 rng(97);
    SpacePtr sp = mixed_space();
    for (int trial = 0; trial < 3; ++trial) {
      const TaylorTable src_flat = random_table(sp, 3, false, rng);
      const TaylorTable src_curved = random_table(sp, 3, true, rng);
      const TaylorTable dst = random_table(sp, 3, false, rng);
      for (const TaylorTable& src : {src_flat, src_curved}) {
        ConvolutionAlgebra conv(src, dst);
        HomElement f = make_hom_element(3);
        for (int n = 1; n <= 3; ++n) {
          for (const Word& w : sym_basis_words(*sp, n)) {
            const WordMap v = random_value(*sp, word_degree(w), rng);
            if (!is_zero(v)) hom_set(f, w, v);
          }
        }
        CHECK(hom_equal(conv.mc_residual(f), conv.morphism_defect(f)));
      }
    }
  }

  SUBCASE("defect preconditions") {
    ConvolutionAlgebra conv(heis_table(), heis_table());
    HomElement bad_unit = make_hom_element(3);
    bad_unit.on_unit = one(Word{HZ});
    CHECK_THROWS_AS(conv.morphism_defect(bad_unit), InvalidInput);
    HomElement bad_deg = make_hom_element(3);
    hom_set(bad_deg, Word{HB}, one(Word{HZ}));  // map degree +1
    CHECK_THROWS_AS(conv.morphism_defect(bad_deg), InvalidInput);
    // series-powered curvature is not representable here
    CHECK_THROWS_AS(ConvolutionAlgebra(mp_table(3, 2), mp_table()), InvalidInput);
  }
}

TEST_CASE("convolution: graded symmetry of the higher operations") {
  std::mt19937 rng(103);
  SpacePtr sp = mixed_space();
  const TaylorTable src = random_table(sp, 3, false, rng);
  const TaylorTable dst = random_table(sp, 3, false, rng);
  ConvolutionAlgebra conv(src, dst);
  for (int p = -1; p <= 1; ++p) {
    for (int q = -1; q <= 1; ++q) {
      HomElement f = make_hom_element(3);
      HomElement g = make_hom_element(3);
      for (int n = 1; n <= 3; ++n) {
        for (const Word& w : sym_basis_words(*sp, n)) {
          const WordMap vf = random_value(*sp, word_degree(w) + p, rng);
          if (!is_zero(vf)) hom_set(f, w, vf);
          const WordMap vg = random_value(*sp, word_degree(w) + q, rng);
          if (!is_zero(vg)) hom_set(g, w, vg);
        }
      }
      const HomElement fg = conv.applyn({f, g});
      const HomElement gf = conv.applyn({g, f});
      const Rational sign((p % 2 != 0 && q % 2 != 0) ? -1 : 1);
      CHECK(hom_equal(fg, hom_scaled(gf, sign)));
    }
  }
}

TEST_CASE("convolution: truncation semantics") {
  ConvolutionAlgebra conv(mp_table(), mp_table());  // curved source, cap 3
  REQUIRE(conv.arity_cap() == 3);
  REQUIRE(conv.check_cap() == 2);
  // an input component at the cap arity cannot influence tracked outputs
  HomElement f = make_hom_element(3);
  hom_set(f, Word{CM, CM, CM}, one(Word{CM}));
  const HomElement out = conv.apply1(f);
  for (std::size_t n = static_cast<std::size_t>(conv.check_cap()); n < out.comps.size(); ++n) {
    CHECK(out.comps[n].empty());
  }
  // collection evaluation is zero beyond the stored arities
  HomElement g = make_hom_element(1);
  hom_set(g, Word{CM}, one(Word{CM}));
  CHECK(is_zero(hom_apply(g, one(Word{CM, CM}))));
  CHECK(hom_apply(g, one(Word{CM}, Rational(3))) == one(Word{CM}, Rational(3)));
}

// ---- gauge flows ------------------------------------------------------------

TEST_CASE("gauge_flow: a zero generator leaves the element in place") {
  ConvolutionAlgebra conv(heis_table(), heis_table());
  SpacePtr sp = heis_space();
  const HomElement id = hom_from_morphism(
      strict_morphism(heis_table(), heis_table(), GradedMap::identity(sp), 3));
  const GaugeFlowResult r = conv.gauge_flow(id, GradedMap::zero(sp, sp, -1), Rational(5));
  CHECK(r.path.coeffs.size() == 1);
  CHECK(hom_equal(r.at_end, id));
  CHECK(hom_is_zero(r.generator));
}

TEST_CASE("gauge_flow: linear contraction reaches the identity") {
  ConvolutionAlgebra conv(two_term_table(), two_term_table());
  SpacePtr sp = two_term_space();
  const GradedMap h = GradedMap::zero(sp, sp, -1).with_entry(0, 0, 0, Rational(1));  // v -> u
  const HomElement id = hom_from_morphism(
      strict_morphism(two_term_table(), two_term_table(), GradedMap::identity(sp), 3));
  const HomElement start = hom_scaled(id, Rational(3));

  const GaugeFlowResult r = conv.gauge_flow(start, h, Rational(2));
  REQUIRE(r.path.coeffs.size() == 2);
  CHECK(hom_equal(r.path.coeffs[0], start));
  CHECK(hom_equal(r.path.coeffs[1], hom_scaled(id, Rational(-1))));
  CHECK(hom_equal(r.at_end, id));

  // the path satisfies the homotopy equation it was integrated from
  HomPath gen;
  gen.coeffs.push_back(r.generator);
  CHECK(hom_path_is_zero(conv.homotopy_residual(r.path, gen)));
}

TEST_CASE("gauge_flow: quadratic correction on the nilpotent example") {
  ConvolutionAlgebra conv(heis_table(), heis_table());
  SpacePtr sp = heis_space();
  const GradedMap h = GradedMap::zero(sp, sp, -1).with_entry(1, 0, 0, Rational(1));  // z -> b
  const MorphismTable id_table =
      strict_morphism(heis_table(), heis_table(), GradedMap::identity(sp), 3);
  const HomElement id = hom_from_morphism(id_table);

  const GaugeFlowResult r = conv.gauge_flow(id, h, Rational(1));
  REQUIRE(r.path.coeffs.size() == 2);
  CHECK(hom_equal(r.path.coeffs[0], id));
  // d Phi_2 / dt (a v z) = -c; all other components stay put
  HomElement slope = make_hom_element(3);
  hom_set(slope, Word{HA, HZ}, one(Word{HC}, Rational(-1)));
  CHECK(hom_equal(r.path.coeffs[1], slope));

  // certificate: the path solves the gauge homotopy equation
  HomPath gen;
  gen.coeffs.push_back(r.generator);
  CHECK(hom_path_is_zero(conv.homotopy_residual(r.path, gen)));

  // the endpoint is still a morphism of the structure
  CHECK(hom_is_zero(conv.mc_residual(r.at_end)));
  CHECK(hom_is_zero(conv.morphism_defect(r.at_end)));

  // the table-level entry point reads the endpoint back
  const MorphismTable moved = gauge_flow(conv, id_table, h, Rational(1));
  CHECK(morphism_p1(moved, one(Word{HA, HZ})) == one(Word{HC}, Rational(-1)));
  CHECK(morphism_linear_part(moved) == GradedMap::identity(sp));

  // evaluating the path at other times matches by hand
  const HomElement mid = hom_path_eval(r.path, Rational(1) / Rational(2));
  HomElement expect_mid = hom_scaled(id, Rational(1));
  hom_set(expect_mid, Word{HA, HZ}, one(Word{HC}, Rational(-1) / Rational(2)));
  CHECK(hom_equal(mid, expect_mid));
}

TEST_CASE("gauge_flow: hypothesis checks") {
  ConvolutionAlgebra conv(mp_table(), mp_table());
  SpacePtr sp = mp_space();
  const HomElement id = hom_from_morphism(
      strict_morphism(mp_table(), mp_table(), GradedMap::identity(sp), 3));

  // a generator that does not annihilate the source curvature is refused
  const GradedMap h_bad = GradedMap::zero(sp, sp, -1).with_entry(1, 0, 0, Rational(1));
  CHECK_THROWS_AS(conv.gauge_flow(id, h_bad, Rational(1)), HypothesisViolation);
  // the zero generator annihilates it trivially
  const GaugeFlowResult r = conv.gauge_flow(id, GradedMap::zero(sp, sp, -1), Rational(1));
  CHECK(hom_equal(r.at_end, id));

  // wrong shift and wrong spaces
  CHECK_THROWS_AS(conv.gauge_flow(id, GradedMap::identity(sp), Rational(1)), InvalidInput);
  SpacePtr other = heis_space();
  CHECK_THROWS_AS(conv.gauge_flow(id, GradedMap::zero(other, other, -1), Rational(1)),
                  InvalidInput);

  // the initial element must vanish on the unit
  HomElement off = make_hom_element(3);
  off.on_unit = one(Word{CP});
  CHECK_THROWS_AS(conv.gauge_flow(off, GradedMap::zero(sp, sp, -1), Rational(1)),
                  InvalidInput);
}

// ---- serialization ---------------------------------------------------------

TEST_CASE("serialization: tables, morphisms, and series round-trip") {
  SUBCASE("taylor tables") {
    for (const TaylorTable& t : {so3_table(), heis_table(), mp_table(3, 2)}) {
      const nlohmann::json j = taylor_to_json(t);
      const TaylorTable back = taylor_from_json(j);
      CHECK(tables_agree(t, back, t.arity_cap));
      CHECK(back.arity_cap == t.arity_cap);
      CHECK(back.curvature_hbar_power == t.curvature_hbar_power);
    }
    const nlohmann::json j = taylor_to_json(heis_table());
    CHECK(j.at("maps").at("2").contains("a.b"));
  }

  SUBCASE("morphisms keep their component cap") {
    TaylorTable flat = abelian_table(mixed_space(), 3);
    MorphismTable f = strict_morphism(flat, flat, GradedMap::identity(mixed_space()), 2);
    set_morphism_component(f, Word{O1, X1}, one(Word{O2}, Rational(3)));
    const MorphismTable back = morphism_from_json(morphism_to_json(f));
    CHECK(back.maps == f.maps);
    CHECK(tables_agree(back.source, f.source, 3));
    CHECK(tables_agree(back.target, f.target, 3));
  }

  SUBCASE("mc series") {
    TaylorTable t = bcz_table();
    WordMap pi1;
    add_term(pi1, Word{SB}, Rational(1) / Rational(3));
    add_term(pi1, Word{SC}, Rational(-2));
    const MCElement pi = make_mc_series(t.underlying, {WordMap{}, pi1, WordMap{}}, 2);
    const MCElement back = mc_from_json(mc_to_json(pi));
    CHECK(back.hbar_cap == pi.hbar_cap);
    CHECK(back.coeffs == pi.coeffs);
    CHECK(*back.space == *pi.space);
  }

  SUBCASE("element errors") {
    SpacePtr sp = mixed_space();
    nlohmann::json bad = {{"nope", "1"}};
    CHECK_THROWS_AS(element_from_json(bad, *sp), InvalidInput);
    SpacePtr dotted = make_space({{0, {"a.b"}}}, 0, 0);
    CHECK_THROWS_AS(element_to_json(one(Word{Letter{0, 0}}), *dotted), InvalidInput);
    nlohmann::json garbage_arity = taylor_to_json(heis_table());
    garbage_arity["maps"]["two"] = garbage_arity["maps"]["2"];
    garbage_arity["maps"].erase("2");
    CHECK_THROWS_AS(taylor_from_json(garbage_arity), InvalidInput);
  }
}
