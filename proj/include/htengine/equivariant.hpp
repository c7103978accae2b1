#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "htengine/hpl.hpp"
#include "htengine/linfty.hpp"
#include "htengine/models.hpp"
#include "htengine/polydiffop.hpp"
#include "htengine/polyvector.hpp"

namespace hte {

// ---- finite-dimensional Lie algebras and linear actions -------------------

// Structure constants of a finite-dimensional Lie algebra over the exact
// rationals: [e_i, e_j] = sum_k c[k](i,j) e_k.  Antisymmetry and the Jacobi
// identity are validated at construction (make_lie_data throws InvalidInput).
struct LieData {
  int dim = 0;
  std::vector<Mat> c;  // c[k] is the dim x dim matrix of c^k_{ij}

  static LieData abelian(int dim);
};

LieData make_lie_data(int dim, std::vector<Mat> c);

// Coefficients of [e_i, e_j] in the basis.
std::vector<Rational> lie_bracket_coeffs(const LieData& g, int i, int j);

// Affine action of the generators on coordinate space: generator a acts with
// the matrix rho[a] and the constant drift[a], and its fundamental vector
// field follows the flow convention
//   xi_M(f)(x) = d/dt|_0 f(exp(-t xi) . x),
// i.e. xi_M = -((rho[a] x + drift[a])^i) d_i.  With this sign xi -> xi_M is a
// Lie algebra homomorphism; make_linear_action verifies it on the actual
// fields (throws InvalidInput otherwise).
struct LinearAction {
  LieData g;
  int vars = 0;
  std::vector<Mat> rho;
  std::vector<Vec> drift;
};

LinearAction make_linear_action(LieData g, int vars, std::vector<Mat> rho,
                                std::vector<Vec> drift = {});

Polyvector fundamental_field(const LinearAction& a, int generator);
Polyvector fundamental_field(const LinearAction& a,
                             const std::vector<Rational>& xi);

// The one-parameter rotation of the plane (so(2), generator [[0,-1],[1,0]]).
LinearAction rotation_action_r2();
// The one-parameter translation flow along the first coordinate of the plane.
LinearAction translation_action_r2();
// The given Lie algebra acting trivially on n coordinates.
LinearAction trivial_action(LieData g, int vars);

// ---- equivariant elements: Sym(g*)-weighted geometry ----------------------
//
// A term u^w (x) X pairs a monomial weight in the symmetric algebra of the
// dual Lie algebra (exponents over the generators, each of degree +2) with a
// polyvector or a multidifferential operator.  The total degree of a term is
// 2|w| plus the degree of the geometric part.

struct EqPvKey {
  Mono gw;
  PvKey pv;
  friend bool operator<(const EqPvKey& a, const EqPvKey& b) {
    if (a.gw != b.gw) return a.gw < b.gw;
    return a.pv < b.pv;
  }
  friend bool operator==(const EqPvKey& a, const EqPvKey& b) {
    return a.gw == b.gw && a.pv == b.pv;
  }
};
using EquivPolyvector = std::map<EqPvKey, Rational>;

struct EqDoKey {
  Mono gw;
  DoKey op;
  friend bool operator<(const EqDoKey& a, const EqDoKey& b) {
    if (a.gw != b.gw) return a.gw < b.gw;
    return a.op < b.op;
  }
  friend bool operator==(const EqDoKey& a, const EqDoKey& b) {
    return a.gw == b.gw && a.op == b.op;
  }
};
using EquivDiffOp = std::map<EqDoKey, Rational>;

int eq_pv_term_degree(const EqPvKey& k);
int eq_do_term_degree(const EqDoKey& k);

void eq_pv_add_term(EquivPolyvector& p, const EqPvKey& k, const Rational& c);
void eq_pv_add_scaled(EquivPolyvector& a, const EquivPolyvector& b,
                      const Rational& c);
void eq_do_add_term(EquivDiffOp& p, const EqDoKey& k, const Rational& c);
void eq_do_add_scaled(EquivDiffOp& a, const EquivDiffOp& b, const Rational& c);

bool eq_pv_is_homogeneous(const EquivPolyvector& p, int degree);
bool eq_do_is_homogeneous(const EquivDiffOp& p, int degree);

// Weight-zero inclusions of the geometric layers.
EquivPolyvector eq_pv_from(int gdim, const Polyvector& x);
EquivDiffOp eq_do_from(int gdim, const PolyDiffOp& x);
// u_a (x) x for generator a.
EquivPolyvector eq_pv_weighted(int gdim, int a, const Polyvector& x);
EquivDiffOp eq_do_weighted(int gdim, int a, const PolyDiffOp& x);

// Evaluation as a polynomial map on the Lie algebra: u^w evaluates to the
// product of the chosen coefficients.
Polyvector eq_pv_eval(const EquivPolyvector& p, const std::vector<Rational>& xi);
PolyDiffOp eq_do_eval(const EquivDiffOp& p, const std::vector<Rational>& xi);

// Brackets weighted by the symmetric product,
//   [u^v (x) X, u^w (x) Y] = u^{v+w} (x) [X, Y],
// truncated as the exact quotient by symmetric weights above sym_cap (weights
// only ever grow, so dropping them is a quotient of Lie structures).
EquivPolyvector eq_pv_bracket(const PolyContext& ctx, const EquivPolyvector& a,
                              const EquivPolyvector& b, int sym_cap,
                              Overflow policy = Overflow::Error);
EquivDiffOp eq_do_bracket(const PolyContext& ctx, const EquivDiffOp& a,
                          const EquivDiffOp& b, int sym_cap,
                          Overflow policy = Overflow::Error);
// Pointwise Hochschild differential (the weight part is untouched).
EquivDiffOp eq_do_differential(const PolyContext& ctx, const EquivDiffOp& a,
                               Overflow policy = Overflow::Error);

// Infinitesimal action of generator `gen`: coadjoint derivative on the weight
// part plus the Lie derivative along the fundamental field on the geometric
// part.  An element is invariant when this vanishes for every generator.
EquivPolyvector eq_pv_action(const LinearAction& act, int gen,
                             const EquivPolyvector& x,
                             const PolyContext& ctx,
                             Overflow policy = Overflow::Error);
EquivDiffOp eq_do_action(const LinearAction& act, int gen, const EquivDiffOp& x,
                         const PolyContext& ctx,
                         Overflow policy = Overflow::Error);

std::string eq_pv_to_string(const EquivPolyvector& p, int vars);
std::string eq_do_to_string(const EquivDiffOp& p, int vars);
nlohmann::json eq_pv_to_json(const EquivPolyvector& p);
EquivPolyvector eq_pv_from_json(const PolyContext& ctx, int gdim,
                                const nlohmann::json& j);
nlohmann::json eq_do_to_json(const EquivDiffOp& p);
EquivDiffOp eq_do_from_json(const PolyContext& ctx, int gdim,
                            const nlohmann::json& j);

// ---- invariant subspaces --------------------------------------------------

// Canonical basis (reduced row echelon over the listed ambient keys) of the
// space of invariant equivariant polyvectors with symmetric weight <= sym_cap
// and coefficient degree <= ctx.degree_cap.
std::vector<EquivPolyvector> invariant_polyvectors(const LinearAction& act,
                                                   const PolyContext& ctx,
                                                   int sym_cap);

// Same for operators with at most max_slots slots; slot orders run from 1 to
// max_slot_order (weight-0 keys are the coefficient functions themselves).
std::vector<EquivDiffOp> invariant_ops(const LinearAction& act,
                                       const PolyContext& ctx, int sym_cap,
                                       int max_slots, int max_slot_order);

// ---- curved equivariant complexes -----------------------------------------

enum class GeomSide { Classical, Quantum };

struct EquivCaps {
  int poly_degree = 1;     // coefficient degree cap
  int sym_weight = 1;      // symmetric weight cap
  int arity = 2;           // Taylor table arity cap
  int hbar_power = 0;      // power of the formal parameter on the curvature
  int max_slots = 1;       // quantum side: slot count cap for the alphabet
  int max_slot_order = 1;  // quantum side: per-slot derivative order cap
};

// A finite curved Lie model of the invariant equivariant complex: a closed
// family of invariant elements (as letters of a graded space carrying the
// usual down-shift), the curved Taylor table over it, and the trace of
// elements removed to reach bracket closure.
struct EquivariantComplex {
  LinearAction action;
  GeomSide side = GeomSide::Classical;
  PolyContext ctx;
  EquivCaps caps;
  std::vector<EquivPolyvector> pv_basis;  // classical letters
  std::vector<EquivDiffOp> do_basis;      // quantum letters
  std::vector<std::string> labels;
  std::vector<Letter> letters;
  SpacePtr space;
  TaylorTable table;
  std::vector<std::string> removed;
};

// Builds the invariant family within the caps, prunes it to a bracket- and
// differential-closed fixpoint (repeatedly discarding the highest-degree
// members of failing pairs), checks that the canonical curvature
//   classical:  lambda = sum_a u_a (x) (xi_a)_M
//   quantum:    lambda = sum_a u_a (x) Lie_{(xi_a)_M}
// lies in the family, and assembles the curved Taylor table.  Throws
// CapExceeded when the curvature does not survive the pruning.
EquivariantComplex build_equivariant_complex(const LinearAction& act,
                                             GeomSide side,
                                             const EquivCaps& caps);

// Quantum model generated forward from seed elements: seeds must be invariant
// (InvalidInput otherwise); the family is closed under the bracket and the
// differential, truncating by total degree above `degree_hi` (the exact
// quotient by the ideal of high degrees) and growing new basis members until
// a fixpoint (CapExceeded if the family refuses to stabilize).
EquivariantComplex build_equivariant_closure(const LinearAction& act,
                                             const PolyContext& ctx,
                                             int sym_cap, int arity,
                                             const std::vector<EquivDiffOp>& seeds,
                                             int degree_hi, int hbar_power);

// Letter coordinates of elements of the family and back.
WordMap eq_pv_coords(const EquivariantComplex& C, const EquivPolyvector& x);
EquivPolyvector eq_pv_value(const EquivariantComplex& C, const WordMap& x);
WordMap eq_do_coords(const EquivariantComplex& C, const EquivDiffOp& x);
EquivDiffOp eq_do_value(const EquivariantComplex& C, const WordMap& x);

// The canonical curvature element of the complex.
EquivPolyvector classical_curvature(const LinearAction& act);
EquivDiffOp quantum_curvature(const LinearAction& act, const PolyContext& ctx);

// ---- momentum maps --------------------------------------------------------

// The vector field f |-> {f, J} paired from the bivector.
Polyvector hamiltonian_field(const PolyContext& ctx, const Polyvector& pi,
                             const Poly& J, Overflow policy = Overflow::Error);

// The two defining residuals of a momentum map, taken literally:
//   field_residuals[a]        = (xi_a)_M - {., J_a}
//   bracket_residuals[{a,b}]  = {J_a, J_b} - J_{[e_a, e_b]}
struct MomentumReport {
  std::vector<Polyvector> field_residuals;
  std::map<std::pair<int, int>, Poly> bracket_residuals;
  bool ok() const;
};

MomentumReport momentum_residuals(const PolyContext& ctx, const Polyvector& pi,
                                  const std::vector<Poly>& J,
                                  const LinearAction& act,
                                  Overflow policy = Overflow::Error);

// The packaged curved Maurer-Cartan candidate Pi = pi - sum_a u_a (x) J_a in
// the letters of a classical equivariant complex; its curved residual against
// the complex's table vanishes exactly when both momentum residuals do.
MCElement classical_momentum_mc(const EquivariantComplex& C,
                                const Polyvector& pi,
                                const std::vector<Poly>& J);

// ---- quantum momentum maps ------------------------------------------------

// Residuals of a quantum momentum map against a deformation series
// star = {m_0, ..., m_K} (m_0 must be the pointwise product and the series
// must be associative modulo the (K+1)-st power; InvalidInput otherwise).
// H[a] lists the series coefficients of H(e_a) starting at power zero.
//   op_residuals[a][t]       = order t of  Lie_{(xi_a)_M} + (1/hbar)[H_a, .]
//   bracket_residuals[{a,b}][t] = order t of (1/hbar)[H_a, H_b] - H_{[e_a,e_b]}
// The division by the formal parameter must be exact: a nonvanishing
// order-zero commutator throws HbarBookkeeping.
struct QuantumMomentumReport {
  std::vector<std::vector<PolyDiffOp>> op_residuals;
  std::map<std::pair<int, int>, std::vector<Poly>> bracket_residuals;
  int hbar_cap = 0;
  bool ok() const;
};

QuantumMomentumReport quantum_momentum_residuals(
    const PolyContext& ctx, const std::vector<PolyDiffOp>& star,
    const std::vector<std::vector<Poly>>& H, const LinearAction& act, int K,
    Overflow policy = Overflow::Error);

// The packaged series Pi = hbar(m_star - sum_a u_a (x) H_a) in the letters of
// a quantum equivariant complex; with the complex's curvature at power two,
// its curved residual modulo the (K+1)-st power vanishes exactly when the
// series is associative and H is a quantum momentum map.
MCElement quantum_momentum_mc(const EquivariantComplex& C,
                              const std::vector<PolyDiffOp>& star,
                              const std::vector<std::vector<Poly>>& H, int K);

// ---- the projective-basis retract -----------------------------------------

// The deformation retract between multivector fields (with coefficients of
// degree <= 1) and the finite window of the commutative/bar-type complex on
// which it is presented by the projective dual basis: the projection takes a
// word of function- and module-blocks to the wedge of its blocks, the
// embedding sends a module element directly to its one-block word in weight
// one and expands through the dual basis elsewhere, and the homotopy is the
// canonical contraction (it vanishes on the one-block words of the module
// part, squares to zero, and commutes with any validated linear action whose
// matrices preserve the spaces).  `rank` is the module rank; when the action
// is nontrivial it must act on the same number of coordinates (module
// directions transform as tangent directions).
RetractData projective_retract(int rank, const LinearAction& act);

// Letter bookkeeping for the retract's spaces, exposed for tests: the label
// of the weight-one word of basis element a * e_j, and the label of a
// multivector basis element in the small space.
std::string retract_module_label(int var_or_const, int direction);
std::string retract_small_label(const Mono& mono, std::uint32_t mask);

// The weight-one word of a degree <= 1 coefficient vector field in the big
// space, and the same field in the small space.
GradedVec retract_field_word(const RetractData& r, const Polyvector& field);
GradedVec retract_small_field(const RetractData& r, const Polyvector& field);

// Infinitesimal action operators on both sides of the retract (degree 0
// graded maps); the retract's maps commute with them for validated linear
// actions without drift.
GradedMap retract_big_action(const RetractData& r, const LinearAction& act,
                             int gen);
GradedMap retract_small_action(const RetractData& r, const LinearAction& act,
                               int gen);

}  // namespace hte
