#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <random>

#include "htengine/coalgebra.hpp"

using namespace hte;

namespace {

// even alphabet x, y, z in degree 0
const Letter X{0, 0}, Y{0, 1}, Z{0, 2};
// odd letters in degree 1
const Letter A1{1, 0}, B1{1, 1};

WordMap one_word(const Word& w) {
  WordMap m;
  add_term(m, w, Rational(1));
  return m;
}

// all words of exactly weight n over the given letters
std::vector<Word> all_words(const std::vector<Letter>& letters, int n) {
  std::vector<Word> out;
  if (n == 0) {
    out.push_back(Word{});
    return out;
  }
  for (const Word& w : all_words(letters, n - 1)) {
    for (const Letter& l : letters) {
      Word e = w;
      e.push_back(l);
      out.push_back(std::move(e));
    }
  }
  return out;
}

}  // namespace

TEST_CASE("deconcatenate: single letters and words") {
  const auto d1 = deconcatenate(one_word({X}));
  REQUIRE(d1.size() == 2);
  CHECK(d1.at({Word{}, Word{X}}) == Rational(1));
  CHECK(d1.at({Word{X}, Word{}}) == Rational(1));

  const auto d2 = deconcatenate(one_word({X, Y}));
  REQUIRE(d2.size() == 3);
  CHECK(d2.at({Word{}, Word{X, Y}}) == Rational(1));
  CHECK(d2.at({Word{X}, Word{Y}}) == Rational(1));
  CHECK(d2.at({Word{X, Y}, Word{}}) == Rational(1));

  // linearity over a 2-term combination
  WordMap two;
  add_term(two, {X}, Rational(2));
  add_term(two, {Y, Z}, Rational(-1));
  const auto d3 = deconcatenate(two);
  CHECK(d3.at({Word{}, Word{X}}) == Rational(2));
  CHECK(d3.at({Word{Y}, Word{Z}}) == Rational(-1));
}

TEST_CASE("shuffle: even letters") {
  const auto xy = shuffle_words({X}, {Y});
  CHECK(xy.size() == 2);
  CHECK(xy.at({X, Y}) == Rational(1));
  CHECK(xy.at({Y, X}) == Rational(1));

  const auto xyz = shuffle_words({X}, {Y, Z});
  CHECK(xyz.size() == 3);
  CHECK(xyz.at({X, Y, Z}) == Rational(1));
  CHECK(xyz.at({Y, X, Z}) == Rational(1));
  CHECK(xyz.at({Y, Z, X}) == Rational(1));
}

TEST_CASE("shuffle: odd square vanishes and signs are koszul") {
  // x odd: x·x = xx − xx = 0
  const auto sq = shuffle_words({A1}, {A1});
  CHECK(sq.empty());
  // a·b for distinct odd letters: ab + (−1)^{1·1} ba = ab − ba
  const auto ab = shuffle_words({A1}, {B1});
  CHECK(ab.at({A1, B1}) == Rational(1));
  CHECK(ab.at({B1, A1}) == Rational(-1));
  // graded commutativity: u·v = (−1)^{|u||v|} v·u on random words
  std::mt19937 rng(3);
  const std::vector<Letter> letters{X, A1, B1, Y};
  for (int trial = 0; trial < 40; ++trial) {
    Word u, v;
    for (int i = 0, n = 1 + (int)(rng() % 3); i < n; ++i) u.push_back(letters[rng() % 4]);
    for (int i = 0, n = 1 + (int)(rng() % 3); i < n; ++i) v.push_back(letters[rng() % 4]);
    const int s = (word_degree(u) % 2 != 0 && word_degree(v) % 2 != 0) ? -1 : 1;
    CHECK(shuffle_words(u, v) == scaled(shuffle_words(v, u), Rational(s)));
  }
  // associativity of the shuffle product
  for (int trial = 0; trial < 15; ++trial) {
    Word u, v, w;
    for (int i = 0, n = 1 + (int)(rng() % 2); i < n; ++i) u.push_back(letters[rng() % 4]);
    for (int i = 0, n = 1 + (int)(rng() % 2); i < n; ++i) v.push_back(letters[rng() % 4]);
    for (int i = 0, n = 1 + (int)(rng() % 2); i < n; ++i) w.push_back(letters[rng() % 4]);
    CHECK(shuffle(shuffle(one_word(u), one_word(v)), one_word(w)) ==
          shuffle(one_word(u), shuffle(one_word(v), one_word(w))));
  }
  CHECK_THROWS_AS(shuffle(one_word({X, Y}), one_word({X, Y, Z}), 4), WeightCapExceeded);
}

TEST_CASE("convolution: unit law, P⋆P, and id-power composition") {
  // f ⋆ (ι∘ε) = f for a nontrivial op f (here: reversal with no signs on an
  // even alphabet)
  EndoOp f = [](const Word& w) {
    Word r(w.rbegin(), w.rend());
    return one_word(r);
  };
  EndoOp fu = convolve(f, op_counit_unit());
  EndoOp uf = convolve(op_counit_unit(), f);
  for (const Word& w : all_words({X, Y, Z}, 3)) {
    CHECK(fu(w) == f(w));
    CHECK(uf(w) == f(w));
  }

  // P ⋆ P on xy (even): Δ(xy) = 1⊗xy + x⊗y + xy⊗1; P kills empty ends:
  // μ(x, y) = xy + yx… plus nothing else ⇒ P⋆P(xy) = xy + yx.  On the
  // symmetric combination xy+yx this has coefficient 2 on each word:
  const EndoOp pp = convolve(op_reduced(), op_reduced());
  const WordMap r = pp({X, Y});
  CHECK(r.at({X, Y}) == Rational(1));
  CHECK(r.at({Y, X}) == Rational(1));

  // id^{⋆k} ∘ id^{⋆ℓ} = id^{⋆kℓ} on all words of weight ≤ 4 over a mixed
  // alphabet (odd and even letters)
  const std::vector<Letter> letters{X, A1};
  for (int k = 0; k <= 3; ++k) {
    for (int l = 0; l <= 3; ++l) {
      const EndoOp idk = conv_power(op_identity(), k);
      const EndoOp idl = conv_power(op_identity(), l);
      const EndoOp idkl = conv_power(op_identity(), k * l);
      for (int n = 0; n <= 4; ++n) {
        for (const Word& w : all_words(letters, n)) {
          CHECK(apply_op(idk, idl(w)) == idkl(w));
        }
      }
    }
  }
}

TEST_CASE("eulerian: weight-1 and weight-2 values") {
  Eulerian eu;
  CHECK(eu.e1_word({X}) == one_word({X}));
  // e¹(xy) = ½(xy − yx), e²(xy) = ½(xy + yx) for even letters
  WordMap e1xy = eu.e1_word({X, Y});
  CHECK(e1xy.at({X, Y}) == Rational(1, 2));
  CHECK(e1xy.at({Y, X}) == Rational(-1, 2));
  WordMap e2xy = eu.ek_word(2, {X, Y});
  CHECK(e2xy.at({X, Y}) == Rational(1, 2));
  CHECK(e2xy.at({Y, X}) == Rational(1, 2));
  // e^(0) is the counit part
  CHECK(eu.ek_word(0, {}) == one_word({}));
  CHECK(eu.ek_word(0, {X}).empty());
}

TEST_CASE("eulerian: idempotence of e1 on weight ≤ 5 over three letters") {
  Eulerian eu;
  const std::vector<Letter> letters{X, Y, A1};  // degrees {0,0,1}
  for (int n = 1; n <= 5; ++n) {
    for (const Word& w : all_words(letters, n)) {
      const WordMap once = eu.e1_word(w);
      CHECK(eu.e1(once) == once);
    }
  }
}

TEST_CASE("eulerian: orthogonality and completeness (reduced scope)") {
  // full-scope version runs in the acceptance suite
  Eulerian eu;
  const std::vector<Letter> letters{X, A1};
  for (int n = 0; n <= 4; ++n) {
    for (const Word& w : all_words(letters, n)) {
      WordMap sum;
      for (int k = 0; k <= 4; ++k) {
        const WordMap ek = eu.ek_word(k, w);
        add_scaled(sum, ek, Rational(1));
        for (int l = 0; l <= 4; ++l) {
          const WordMap ekl = eu.e(l, ek);
          if (l == k) {
            CHECK(ekl == ek);
          } else {
            CHECK(ekl.empty());
          }
        }
      }
      CHECK(sum == one_word(w));
    }
  }
}

TEST_CASE("eulerian component membership via id-power eigenvalues") {
  // x ∈ image(e^(ℓ)) iff id^{⋆k}(x) = k^ℓ x; spot-check on e-projections
  Eulerian eu;
  const Word w{X, Y, A1};
  for (int l = 1; l <= 3; ++l) {
    const WordMap el = eu.ek_word(l, w);
    for (int k = 1; k <= 3; ++k) {
      Rational kl(1);
      for (int i = 0; i < l; ++i) kl *= Rational(k);
      CHECK(apply_op(conv_power(op_identity(), k), el) == scaled(el, kl));
    }
  }
}

TEST_CASE("shuffle products respect the eulerian filtration") {
  Eulerian eu;
  std::mt19937 rng(9);
  const std::vector<Letter> letters{X, Y, A1};
  for (int trial = 0; trial < 25; ++trial) {
    Word u, v;
    for (int i = 0, n = 1 + (int)(rng() % 2); i < n; ++i) u.push_back(letters[rng() % 3]);
    for (int i = 0, n = 1 + (int)(rng() % 2); i < n; ++i) v.push_back(letters[rng() % 3]);
    for (int a = 1; a <= 2; ++a) {
      for (int b = 1; b <= 2; ++b) {
        const WordMap prod = shuffle(eu.ek_word(a, u), eu.ek_word(b, v));
        if (prod.empty()) continue;
        for (int g = 0; g <= 4; ++g) {
          const WordMap proj = eu.e(g, prod);
          if (g == a + b) {
            CHECK(eu.e(g, prod) == proj);  // tautology guard; real check below
          } else {
            CHECK(proj.empty());
          }
        }
        // completeness: the only surviving projection reassembles the product
        CHECK(eu.e(a + b, prod) == prod);
      }
    }
  }
}

TEST_CASE("coproduct grading: deviation lives in higher eulerian weight") {
  Eulerian eu;
  std::mt19937 rng(21);
  const std::vector<Letter> letters{X, Y, A1};
  for (int k = 2; k <= 4; ++k) {
    for (int trial = 0; trial < 6; ++trial) {
      // random primitives x_i = e¹(word)
      std::vector<WordMap> prim;
      for (int i = 0; i < k; ++i) {
        Word w;
        for (int j = 0, n = 1 + (int)(rng() % 2); j < n; ++j) w.push_back(letters[rng() % 3]);
        WordMap p = eu.e1_word(w);
        if (p.empty()) p = one_word({X});
        prim.push_back(p);
      }
      // product x₁···x_k and its coproduct
      WordMap prod = prim[0];
      for (int i = 1; i < k; ++i) prod = shuffle(prod, prim[static_cast<std::size_t>(i)]);
      PairComb delta = deconcatenate(prod);
      // Π (x_i⊗1 + 1⊗x_i), multiplied in T⊗T with Koszul signs
      PairComb expected;
      add_pair_term(expected, Word{}, Word{}, Rational(1));
      for (int i = 0; i < k; ++i) {
        PairComb next;
        for (const auto& [pr, c] : expected) {
          for (const auto& [w, cw] : prim[static_cast<std::size_t>(i)]) {
            // (a⊗b)·(w⊗1) = (−1)^{|b||w|} μ(a,w)⊗b
            const int s1 =
                (word_degree(pr.second) % 2 != 0 && word_degree(w) % 2 != 0) ? -1 : 1;
            for (const auto& [aw, ca] : shuffle_words(pr.first, w)) {
              add_pair_term(next, aw, pr.second, c * cw * ca * Rational(s1));
            }
            // (a⊗b)·(1⊗w) = μ(a,1)⊗μ(b,w) = a ⊗ μ(b,w), no crossing sign
            for (const auto& [bw, cb] : shuffle_words(pr.second, w)) {
              add_pair_term(next, pr.first, bw, c * cw * cb);
            }
          }
        }
        expected = std::move(next);
      }
      // deviation
      PairComb dev = delta;
      for (const auto& [pr, c] : expected) add_pair_term(dev, pr.first, pr.second, -c);
      // every component with eulerian weights (i, j), i+j ≤ k, vanishes
      for (int i = 0; i + 0 <= k; ++i) {
        for (int j = 0; i + j <= k; ++j) {
          PairComb proj;
          for (const auto& [pr, c] : dev) {
            const WordMap ea = eu.ek_word(i, pr.first);
            const WordMap eb = eu.ek_word(j, pr.second);
            for (const auto& [wa, ca] : ea) {
              for (const auto& [wb, cb] : eb) {
                add_pair_term(proj, wa, wb, c * ca * cb);
              }
            }
          }
          CHECK(proj.empty());
        }
      }
    }
  }
}

TEST_CASE("cocommutator and cofree cobracket") {
  Eulerian eu;
  // cocommutator(xy) for even letters: x⊗y − y⊗x
  const PairComb cc = reduced_cocommutator(one_word({X, Y}));
  REQUIRE(cc.size() == 2);
  CHECK(cc.at({Word{X}, Word{Y}}) == Rational(1));
  CHECK(cc.at({Word{Y}, Word{X}}) == Rational(-1));

  // cofree cobracket on the weight-2 class (x|y): representative ½(xy−yx)
  const WordMap rep = eu.e1_word({X, Y});
  const PairComb br = cofree_cobracket(rep, eu);
  // (e¹⊗e¹)(x⊗y − y⊗x) = x⊗y − y⊗x
  REQUIRE(br.size() == 2);
  CHECK(br.at({Word{X}, Word{Y}}) == Rational(1));
  CHECK(br.at({Word{Y}, Word{X}}) == Rational(-1));

  // colie_project fixes weight-1 letters
  CHECK(colie_project(one_word({X}), eu) == one_word({X}));
}

TEST_CASE("pbw: I and J invert each other") {
  Eulerian eu;
  SpanRegistry reg;

  // I₁ = J₁ = id on weight 1
  CHECK(pbw_I({one_word({X})}) == one_word({X}));

  // I₂((x)∨(y)) = xy + yx for even letters; J₂ back
  const WordMap i2 = pbw_I({one_word({X}), one_word({Y})});
  CHECK(i2.at({X, Y}) == Rational(1));
  CHECK(i2.at({Y, X}) == Rational(1));
  const SymCoLie j2 = pbw_J(i2, 2, eu, reg);
  const SymCoLie expected = [&] {
    SymCoLie a = intern_colie(one_word({X}), reg);
    SymCoLie b = intern_colie(one_word({Y}), reg);
    SymCoLie out;
    for (const auto& [wa, ca] : a) {
      for (const auto& [wb, cb] : b) {
        Word w = wa;
        w.insert(w.end(), wb.begin(), wb.end());
        auto [s, sign] = sym_sort(w);
        if (sign) add_term(out, s, ca * cb * Rational(sign));
      }
    }
    return out;
  }();
  CHECK(j2 == expected);

  // mixed input rejected
  WordMap mixed = i2;
  add_term(mixed, {X}, Rational(1));
  CHECK_THROWS_AS(pbw_J(mixed, 2, eu, reg), NotInEulerianComponent);
}

TEST_CASE("pbw round trips on ∨² over a two-letter even alphabet") {
  Eulerian eu;
  SpanRegistry reg;
  // coLie basis in low weight over even letters x,y: weight 1: (x),(y);
  // weight 2: (x|y) with representative e¹(xy); weight 3: e¹(xxy), e¹(xyy)
  std::vector<WordMap> colie;
  colie.push_back(one_word({X}));
  colie.push_back(one_word({Y}));
  colie.push_back(eu.e1_word({X, Y}));
  colie.push_back(eu.e1_word({X, X, Y}));
  colie.push_back(eu.e1_word({X, Y, Y}));

  for (std::size_t a = 0; a < colie.size(); ++a) {
    for (std::size_t b = a; b < colie.size(); ++b) {
      // I then J on the ∨-word (a)∨(b)
      const WordMap prod = pbw_I({colie[a], colie[b]});
      if (prod.empty()) continue;
      const SymCoLie back = pbw_J(prod, 2, eu, reg);
      // expected: intern both factors and multiply symmetrically
      SymCoLie ia = intern_colie(colie[a], reg);
      SymCoLie ib = intern_colie(colie[b], reg);
      SymCoLie expected;
      for (const auto& [wa, ca] : ia) {
        for (const auto& [wb, cb] : ib) {
          Word w = wa;
          w.insert(w.end(), wb.begin(), wb.end());
          auto [s, sign] = sym_sort(w);
          if (sign) add_term(expected, s, ca * cb * Rational(sign));
        }
      }
      CHECK(back == expected);
    }
  }
}

TEST_CASE("pbw_I is an algebra morphism up to weight 4") {
  // I(a ∨ b) = I(a) · I(b): by construction I of a ∨-word is the shuffle of
  // representatives, so verify the multiplicativity on overlapping products:
  // I((a∨b) then ∨c) = I(a∨b)·I(c)
  Eulerian eu;
  const WordMap a = one_word({X});
  const WordMap b = eu.e1_word({X, Y});
  const WordMap c = one_word({Y});
  CHECK(pbw_I({a, b, c}) == shuffle(pbw_I({a, b}), pbw_I({c})));
  CHECK(pbw_I({a, b}) == shuffle(pbw_I({a}), pbw_I({b})));
}

TEST_CASE("tc/sym/colie wrappers enforce invariants") {
  auto alphabet = make_space({{0, {"x", "y"}}, {1, {"a"}}}, 0, 1);
  Eulerian eu;
  WordMap terms;
  add_term(terms, {X, Y}, Rational(1));
  TcElement t(alphabet, 3, terms);
  CHECK(t.terms() == terms);
  CHECK_THROWS_AS(TcElement(alphabet, 1, terms), WeightCapExceeded);
  WordMap bad;
  add_term(bad, {Letter{0, 5}}, Rational(1));
  CHECK_THROWS_AS(TcElement(alphabet, 3, bad), InvalidInput);

  // SymElement normalizes: ba ↦ −ab for odd letters a<b… here {A1,B1} would
  // need b in the alphabet; use degree-1 letter with itself: aa ↦ 0
  WordMap odd2;
  add_term(odd2, {A1, A1}, Rational(1));
  SymElement s(alphabet, 3, odd2);
  CHECK(s.terms().empty());

  // CoLieElement stores the canonical representative
  CoLieElement cl(t, eu);
  CHECK(cl.representative().terms() == eu.e1(terms));
  CHECK(eu.e1(cl.representative().terms()) == cl.representative().terms());
}

TEST_CASE("word label round trip") {
  auto alphabet = make_space({{0, {"x", "y"}}, {1, {"a"}}}, 0, 1);
  const Word w{X, A1, Y};
  const auto labels = word_to_labels(w, *alphabet);
  CHECK(labels == std::vector<std::string>{"x", "a", "y"});
  CHECK(word_from_labels(labels, *alphabet) == w);
  CHECK(word_to_string(w, *alphabet) == "x.a.y");
  CHECK(word_to_string({}, *alphabet) == "1");
  CHECK_THROWS_AS(word_from_labels({"nope"}, *alphabet), InvalidInput);
}
