#pragma once

#include <functional>
#include <string>
#include <vector>

#include "htengine/coalgebra.hpp"
#include "htengine/json_io.hpp"
#include "htengine/words.hpp"

namespace hte {

// ---- curved homotopy-Lie structures as Taylor tables ----------------------
//
// A structure on a graded space V (already shifted, so the differential and
// all higher operations have degree +1) is stored through its components
//   Q^1_n : Sym^n(V) -> V,   1 <= n <= arity_cap,
// as values on symmetric basis words, together with an optional curvature
// element Q_0^1(1) of degree +1.  Graded symmetry is structural: components
// are keyed by sorted words and evaluated through the symmetric normal form.
// Every claim made by the operations below is "up to arity_cap".
struct TaylorTable {
  SpacePtr underlying;  // the shifted space V
  int arity_cap = 0;
  WordMap curvature;  // weight-1 value of Q_0^1 on the unit; empty when flat
  // Power of the formal parameter carried by the curvature term (the
  // engine's scalars stay rational; series bookkeeping is explicit).
  int curvature_hbar_power = 0;
  std::vector<std::map<Word, WordMap>> maps;  // maps[n-1]: Q^1_n on basis words
};

TaylorTable make_taylor_table(SpacePtr shifted, int arity_cap);

// Installs Q^1_{|word|}(word) = value.  The key may be given in any letter
// order (it is renormalized); the value must be a weight-1 element of degree
// word-degree + 1.  A zero value erases the entry.
void set_taylor_component(TaylorTable& t, const Word& word, const WordMap& value);
void set_taylor_curvature(TaylorTable& t, const WordMap& value, int hbar_power = 0);

// Structural validation (space membership, normal-form keys, weight-1
// homogeneous values of the right degree).  Throws InvalidInput.
void validate_taylor_table(const TaylorTable& t);

// Q^1_n applied to one word of weight n = word.size(); the empty word yields
// the curvature.  Throws CapExceeded when the weight exceeds the cap.
WordMap apply_component(const TaylorTable& t, const Word& word);
// Multilinear extension of apply_component to combinations of words.
WordMap apply_components(const TaylorTable& t, const WordMap& x);
// Arity-1 component applied to a weight-1 element.
WordMap apply_linear_component(const TaylorTable& t, const WordMap& v);

// All symmetric basis words of the given weight over the space's basis
// (nondecreasing letters, no repeated odd letter); weight 0 gives {1}.
std::vector<Word> sym_basis_words(const GradedSpace& space, int weight);

// ---- coderivation and morphism extensions ---------------------------------

// Extension of the table to the coderivation of the symmetric coalgebra:
//   Q(g_1 v ... v g_n) = sum_k sum_{(k,n-k)-block selections S} eps(S)
//                        Q^1_k(g_S) v g_{S^c}
// including the curvature term Q_0 v g_1 v ... v g_n; on the unit it returns
// the curvature.  Throws CapExceeded when the input weight exceeds the cap.
WordMap extend_coderivation(const TaylorTable& t, const Word& word);
WordMap extend_coderivation(const TaylorTable& t, const WordMap& x);
SymElement extend_coderivation(const TaylorTable& t, const SymElement& x);

// Report of the square-zero test (Q o Q)^1 on symmetric basis words.  In the
// curved case the top arity needs the component beyond the cap and is listed
// as unchecked instead of silently skipped.
struct LinftyReport {
  std::vector<std::string> violations;
  std::vector<int> unchecked_arities;
  bool ok() const { return violations.empty(); }
  std::string to_string() const;
};

LinftyReport check_linfty(const TaylorTable& t);
// Same test restricted to an explicit list of evaluation words (for spaces
// whose full basis enumeration is infeasible; the report names the scope).
LinftyReport check_linfty_on(const TaylorTable& t, const std::vector<Word>& words);

// The bracket of two unshifted basis vectors, returned as a weight-1 element
// of the shifted space.
using BracketFn = std::function<WordMap(const Letter&, const Letter&)>;

// Table of a curved Lie algebra (R, D, [.,.]) on the shifted space, with the
// pinned signs Q_0^1(1) = -R, Q_1^1 = -D, Q_2^1(g v m) = -(-1)^{|g|}[g, m]
// (|.| the shifted degree).  The bracket must be graded-antisymmetric in the
// unshifted grading; this is validated on the basis.  The differential D must
// have shift +1.  check_linfty passes on the result exactly when (R, D, [.,.])
// is a curved Lie algebra.
TaylorTable from_curved_lie(SpacePtr shifted, const WordMap& curvature_R,
                            const GradedMap& differential, const BracketFn& bracket,
                            int arity_cap, int curvature_hbar_power = 0);

// A degree-0 morphism between two structures, stored by its components
// F^1_n : Sym^n(V) -> W, 1 <= n <= maps.size(), on symmetric basis words;
// F(1) = 1 is implicit in the extension.
struct MorphismTable {
  TaylorTable source;
  TaylorTable target;
  std::vector<std::map<Word, WordMap>> maps;
};

MorphismTable make_morphism(TaylorTable source, TaylorTable target, int arity_cap);
void set_morphism_component(MorphismTable& f, const Word& word, const WordMap& value);
void validate_morphism(const MorphismTable& f);
// The strict morphism with F^1_1 = linear and no higher components.
MorphismTable strict_morphism(TaylorTable source, TaylorTable target,
                              const GradedMap& linear, int arity_cap);
// F^1_1 as a shift-0 map between the underlying spaces.
GradedMap morphism_linear_part(const MorphismTable& f);

// Extension to the coalgebra morphism
//   F(g_1 v ... v g_n) = sum_{p, ordered blocks} eps/p! F_{k_1}(b_1) v ... v
//   F_{k_p}(b_p),  F(1) = 1.
WordMap extend_morphism(const MorphismTable& f, const Word& word);
WordMap extend_morphism(const MorphismTable& f, const WordMap& x);

// Weight-1 component of the extension composed with the component read-off:
// p_1(F(x)); used to re-read Taylor coefficients of composites.
WordMap morphism_p1(const MorphismTable& f, const WordMap& x);

// Composition F after G (source of F must carry the same structure as the
// target of G up to the common cap); exact up to the smaller cap.
MorphismTable compose_morphisms(const MorphismTable& f, const MorphismTable& g);

// True when the two tables describe the same structure on the same space for
// all arities <= cap.
bool tables_agree(const TaylorTable& a, const TaylorTable& b, int cap);

// Order-by-order inverse of a morphism whose linear part is invertible;
// compose(f, result) and compose(result, f) are identities up to the cap.
// Throws SingularLinearPart when F^1_1 has no exact inverse.
MorphismTable invert_strict_isomorphism(const MorphismTable& f);

// ---- Maurer-Cartan calculus -----------------------------------------------

// Element of degree +1 in the unshifted grading (degree 0 in the shifted
// space), optionally expanded in powers of a formal parameter: coeffs[r] is
// the coefficient of the r-th power, and computations are exact modulo powers
// beyond hbar_cap.  A plain element has hbar_cap = 0.
struct MCElement {
  SpacePtr space;
  std::vector<WordMap> coeffs;
  int hbar_cap = 0;
};

MCElement make_mc_element(SpacePtr space, WordMap value);
MCElement make_mc_series(SpacePtr space, std::vector<WordMap> coeffs, int hbar_cap);
void validate_mc_element(const MCElement& pi);

// Left-hand side of the curved Maurer-Cartan equation
//   Q_0(1) + sum_k 1/k! Q^1_k(pi^{v k}),
// order by order in the formal parameter (the curvature enters at the table's
// declared power).  The result vanishes exactly when pi is Maurer-Cartan
// modulo powers beyond the cap.
std::vector<WordMap> mc_residual(const TaylorTable& t, const MCElement& pi);
WordMap mc_residual(const TaylorTable& t, const WordMap& pi);

// Polynomial path in a formal variable valued in a graded space: coeffs[j] is
// the coefficient of t^j.
struct PolyPath {
  SpacePtr space;
  std::vector<WordMap> coeffs;
};

PolyPath make_poly_path(SpacePtr space, std::vector<WordMap> coeffs);
WordMap path_eval(const PolyPath& p, const Rational& t);
PolyPath path_derivative(const PolyPath& p);
bool path_is_zero(const PolyPath& p);

// d(pi_t)/dt - sum_k 1/k! Q^1_{k+1}(pi_t^{v k} v lambda_t) as a t-polynomial;
// the path pi_t must have degree 0 and lambda_t degree -1 in the shifted
// grading.  A zero result certifies the homotopy.
PolyPath mc_homotopy_residual(const TaylorTable& t, const PolyPath& pi,
                              const PolyPath& lambda);

// Q^1_{n+1}(gamma v x_1 v ... v x_n) = 0 for all 1 <= n <= cap-1, tested on
// all basis words.
bool is_central(const TaylorTable& t, const WordMap& gamma);

// ---- convolution structure on the space of morphism coefficients ----------
//
// Linear maps ucoSym(V) -> W between the underlying spaces of two tables form
// an L-infinity algebra with
//   Qhat_0       = (1 -> target curvature),
//   Qhat^1_1(F)  = Q'^1_1 o F - (-1)^{|F|} F o Q     (F against the full
//                  source coderivation; |F| the degree as a map into W),
//   Qhat^1_n(F_1 v ... v F_n) = Q'^1_n o (F_1 v ... v F_n),  n >= 2.
// Elements are stored by their values on basis words up to the arity cap;
// missing components are zero (the space is arity-truncated).  With a curved
// source, identities involving F o Q on weight-n words need components of
// weight n+1, so computed outputs stop at check_cap() = cap - 1; with a flat
// source check_cap() = cap.  Maurer-Cartan elements vanishing on the unit are
// exactly the morphisms intertwining the two coderivations up to check_cap().
struct HomElement {
  WordMap on_unit;  // value on the empty word (weight-1 element of the target)
  std::vector<std::map<Word, WordMap>> comps;  // comps[n-1]: values on weight-n words
};

HomElement make_hom_element(int arity_cap);
void hom_set(HomElement& f, const Word& word, const WordMap& value);
void hom_add(HomElement& f, const HomElement& g, const Rational& c);
HomElement hom_scaled(const HomElement& f, const Rational& c);
bool hom_is_zero(const HomElement& f);
bool hom_equal(const HomElement& f, const HomElement& g);
// Collection evaluation (not the coalgebra-morphism extension): weight-n
// terms are looked up in comps[n-1]; terms beyond the stored arities are zero.
WordMap hom_apply(const HomElement& f, const WordMap& x);

HomElement hom_from_morphism(const MorphismTable& f);

// Path valued in hom elements: coeffs[j] is the coefficient of t^j.
struct HomPath {
  std::vector<HomElement> coeffs;
};

HomElement hom_path_eval(const HomPath& p, const Rational& t);
HomPath hom_path_derivative(const HomPath& p);
bool hom_path_is_zero(const HomPath& p);

struct GaugeFlowResult {
  HomPath path;          // exact t-polynomial solution of the flow
  HomElement generator;  // the constant gauge generator used as lambda
  HomElement at_end;     // path evaluated at t_end
};

class ConvolutionAlgebra {
 public:
  // Caps are aligned to the smaller one; curvature series powers must be zero
  // (formal-parameter contexts encode the parameter in the letter space).
  ConvolutionAlgebra(TaylorTable source, TaylorTable target);

  const TaylorTable& source_table() const { return src_; }
  const TaylorTable& target_table() const { return dst_; }
  int arity_cap() const { return cap_; }
  int check_cap() const { return check_cap_; }

  HomElement curvature() const;
  // Qhat^1_1; outputs carry components up to check_cap().  only_arity
  // restricts the evaluation (0 = unit value; -1 = everything).
  HomElement apply1(const HomElement& f, int only_arity = -1) const;
  // Qhat^1_n for n = Fs.size() >= 2; arguments are split into homogeneous
  // map-degree pieces internally.
  HomElement applyn(const std::vector<HomElement>& fs, int only_arity = -1) const;

  // Curved Maurer-Cartan residual Qhat_0 + Qhat_1(F) + sum 1/k! Qhat_k(F^vk).
  HomElement mc_residual(const HomElement& f) const;
  // Intertwining defect p_1(Q' o Fhat - Fhat o Q) on all basis words up to
  // check_cap(), through the coalgebra-morphism extension of F (independent
  // route to the same vanishing locus, for cross-validation).
  HomElement morphism_defect(const HomElement& f) const;

  // d(Phi_t)/dt - [ Qhat_1(Lambda_t) + sum_k 1/k! Qhat_{k+1}(Phi_t^vk v
  // Lambda_t) ] as a t-polynomial of hom elements.
  HomPath homotopy_residual(const HomPath& phi, const HomPath& lambda) const;

  // Exact arity-by-arity solution of d(Phi_t)/dt = sum_k 1/k! Qhat_{k+1}
  // (Phi_t^vk v hhat), hhat the arity-1 generator given by h (shift -1, from
  // the source space to the target space).  Requires h to annihilate the
  // source curvature so the flow preserves vanishing on the unit (throws
  // HypothesisViolation otherwise).
  GaugeFlowResult gauge_flow(const HomElement& phi0, const GradedMap& h,
                             const Rational& t_end) const;

  const std::vector<Word>& basis_words(int weight) const;

 private:
  TaylorTable src_, dst_;
  int cap_ = 0;
  int check_cap_ = 0;
  std::vector<std::vector<Word>> basis_;  // by weight, 0..cap
};

ConvolutionAlgebra convolution_structure(const TaylorTable& source,
                                         const TaylorTable& target);

// Reads a hom element with vanishing unit value and map-degree 0 back as a
// morphism table (throws InvalidInput otherwise).
MorphismTable morphism_from_hom(const ConvolutionAlgebra& conv, const HomElement& f);

// Specification-level entry point: flows hom_from_morphism(phi0) and reads
// the endpoint back as a morphism table.
MorphismTable gauge_flow(const ConvolutionAlgebra& conv, const MorphismTable& phi0,
                         const GradedMap& h, const Rational& t_end);

// ---- serialization --------------------------------------------------------

nlohmann::json element_to_json(const WordMap& x, const GradedSpace& space);
WordMap element_from_json(const nlohmann::json& j, const GradedSpace& space);
nlohmann::json taylor_to_json(const TaylorTable& t);
TaylorTable taylor_from_json(const nlohmann::json& j);
nlohmann::json morphism_to_json(const MorphismTable& f);
MorphismTable morphism_from_json(const nlohmann::json& j);
nlohmann::json mc_to_json(const MCElement& pi);
MCElement mc_from_json(const nlohmann::json& j);

}  // namespace hte
