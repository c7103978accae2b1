#pragma once

#include <functional>
#include <memory>

#include "htengine/intern.hpp"
#include "htengine/words.hpp"

namespace hte {

// Raised when a shuffle or convolution would produce words beyond the cap.
struct WeightCapExceeded : CapExceeded {
  explicit WeightCapExceeded(const std::string& what) : CapExceeded(what) {}
};

// ---- tensor coalgebra primitives -----------------------------------------

// All ordered splittings of w into a left and right part, including the two
// splittings with an empty end (the deconcatenation coproduct has no signs).
std::vector<std::pair<Word, Word>> deconcatenations(const Word& w);
PairComb deconcatenate(const WordMap& x);

// Signed shuffle of two pure words; Koszul signs from interleaving.
WordMap shuffle_words(const Word& u, const Word& v);
// Bilinear extension with a weight cap (cap < 0 disables the check).
WordMap shuffle(const WordMap& u, const WordMap& v, int weight_cap = -1);
// Left-to-right fold of shuffle over several blocks.
WordMap multi_shuffle(const std::vector<Word>& blocks);

// Graded swap τ(a⊗b) = (−1)^{|a||b|} b⊗a applied to a pair combination.
PairComb graded_swap(const PairComb& x);

// Reduced coproduct Δ̄ (both parts nonempty) and the reduced cocommutator
// Δ_L = (id − τ) ∘ Δ̄.
PairComb reduced_deconcatenate(const WordMap& x);
PairComb reduced_cocommutator(const WordMap& x);

// ---- convolution algebra of degree-0 endomorphisms -----------------------

// A degree-preserving linear endomorphism of the tensor coalgebra, given by
// its action on pure words.
using EndoOp = std::function<WordMap(const Word&)>;

WordMap apply_op(const EndoOp& f, const WordMap& x);

EndoOp op_identity();
EndoOp op_counit_unit();   // ι∘ε: identity on the empty word, zero elsewhere
EndoOp op_reduced();       // P = id − ι∘ε
// f ⋆ g = μ ∘ (f⊗g) ∘ Δ (shuffle ∘ tensor action ∘ deconcatenation).
EndoOp convolve(EndoOp f, EndoOp g);
// k-fold convolution power; the 0-th power is ι∘ε.
EndoOp conv_power(const EndoOp& f, int k);

// ---- Eulerian idempotents -------------------------------------------------

// Memoizing calculator for the Eulerian family e^(k) = (e^(1))^{⋆k} / k!,
// e^(1) = Σ_{j≥1} ((−1)^{j+1}/j) P^{⋆j} (a finite sum on each word).
class Eulerian {
 public:
  const WordMap& e1_word(const Word& w);       // memoized e^(1) on a pure word
  WordMap e1(const WordMap& x);
  WordMap e(int k, const WordMap& x);          // e^(0) = ι∘ε
  WordMap ek_word(int k, const Word& w);       // memoized e^(k) on a pure word

 private:
  std::map<Word, WordMap> memo1_;
  std::map<std::pair<int, Word>, WordMap> memok_;
};

// ---- coLie(V) = e^(1)(T̄^c(V)) --------------------------------------------

// Canonical representative of the coLie class of x (= e^(1)(x)).
WordMap colie_project(const WordMap& x, Eulerian& eu);

// Cofree Lie cobracket on a canonical representative:
// (e^(1) ⊗ e^(1)) ∘ Δ_L.
PairComb cofree_cobracket(const WordMap& representative, Eulerian& eu);

// ---- dual PBW -------------------------------------------------------------

// I_k on one symmetric word of coLie representatives: the shuffle product of
// the representatives (extended multilinearly by the caller).
WordMap pbw_I(const std::vector<WordMap>& colie_factors, int weight_cap = -1);

// A symmetric word over interned coLie generators: letters are
// (degree, generator id) pairs of a SpanRegistry.
using SymCoLie = WordMap;

// J_k(x) = (1/k!) Σ e^(1)(x_(1)) ∨ … ∨ e^(1)(x_(k)) over k-fold
// deconcatenations with nonempty blocks; x must lie in the image of e^(k)
// (NotInEulerianComponent otherwise).  Factors are interned in `reg`.
SymCoLie pbw_J(const WordMap& x, int k, Eulerian& eu, SpanRegistry& reg);

// Interns a coLie representative (per homogeneous degree) and returns the
// symmetric-letter combination representing it at the Sym¹ level.
SymCoLie intern_colie(const WordMap& representative, SpanRegistry& reg);

// ---- validated wrapper types ----------------------------------------------

// Element of the tensor coalgebra over a fixed alphabet with a weight cap.
class TcElement {
 public:
  TcElement(SpacePtr base, int weight_cap);
  TcElement(SpacePtr base, int weight_cap, WordMap terms);  // validates

  const SpacePtr& base() const { return base_; }
  int weight_cap() const { return cap_; }
  const WordMap& terms() const { return terms_; }

  TcElement with_terms(WordMap terms) const { return TcElement(base_, cap_, std::move(terms)); }

 private:
  SpacePtr base_;
  int cap_;
  WordMap terms_;
};

// As TcElement, but every word is kept in symmetric normal form.
class SymElement {
 public:
  SymElement(SpacePtr base, int weight_cap);
  SymElement(SpacePtr base, int weight_cap, const WordMap& terms);  // normalizes

  const SpacePtr& base() const { return base_; }
  int weight_cap() const { return cap_; }
  const WordMap& terms() const { return terms_; }

 private:
  SpacePtr base_;
  int cap_;
  WordMap terms_;
};

// A coLie element stored by its canonical e^(1)-fixed representative.
class CoLieElement {
 public:
  // Projects x with e^(1) and stores the result; e^(1)(rep) = rep then holds
  // by idempotence.
  CoLieElement(const TcElement& x, Eulerian& eu);

  const TcElement& representative() const { return rep_; }

 private:
  TcElement rep_;
};

}  // namespace hte
