#pragma once

#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "htengine/linfty.hpp"
#include "htengine/polydiffop.hpp"

namespace hte {

// Exact coordinates of `target` in the span of `basis`, where both are sparse
// maps from a common key type to coefficients.  Throws CapExceeded when the
// target is not a combination of the basis (the finite family is not closed
// around the requested operation).
template <class M>
std::vector<Rational> expand_in_span(const std::vector<M>& basis, const M& target) {
  std::map<typename M::key_type, Eigen::Index> rows;
  for (const M& b : basis)
    for (const auto& [k, v] : b) rows.emplace(k, 0);
  for (const auto& [k, v] : target) rows.emplace(k, 0);
  Eigen::Index r = 0;
  for (auto& [k, row] : rows) row = r++;
  Mat a = zero_mat(r, static_cast<Eigen::Index>(basis.size()));
  for (std::size_t c = 0; c < basis.size(); ++c)
    for (const auto& [k, v] : basis[c])
      a(rows.at(k), static_cast<Eigen::Index>(c)) = v;
  Vec b = Vec::Constant(r, Rational(0));
  for (const auto& [k, v] : target) b(rows.at(k)) = v;
  Eigen::FullPivLU<Mat> lu(a);
  Vec x = lu.solve(b);
  Vec res = a * x - b;
  for (Eigen::Index i = 0; i < res.size(); ++i)
    if (!(res(i) == Rational(0)))
      throw CapExceeded("element lies outside the span of the finite family");
  std::vector<Rational> out(basis.size());
  for (std::size_t c = 0; c < basis.size(); ++c)
    out[c] = x(static_cast<Eigen::Index>(c));
  return out;
}

// A finite family of homogeneous elements used as the alphabet of a graded
// space: member i has label labels[i] and sits at letters[i] of `space`
// (letter degrees are the shifted ones: element degree minus one).
template <class E>
struct SpanModel {
  PolyContext ctx;
  std::vector<E> basis;
  std::vector<std::string> labels;
  std::vector<Letter> letters;
  SpacePtr space;

  const E& of_letter(const Letter& l) const {
    for (std::size_t i = 0; i < letters.size(); ++i)
      if (letters[i] == l) return basis[i];
    throw InvalidInput("model: unknown letter");
  }
};

using DiffOpModel = SpanModel<PolyDiffOp>;
using PolyvecModel = SpanModel<Polyvector>;

// Build a model from named homogeneous elements; degrees are read off the
// elements and shifted down by one for the table alphabet.
DiffOpModel make_diffop_model(const PolyContext& ctx,
                              std::vector<std::pair<std::string, PolyDiffOp>> named);
PolyvecModel make_polyvec_model(const PolyContext& ctx,
                                std::vector<std::pair<std::string, Polyvector>> named);

// Expand a geometric element into letter coordinates (weight-1 combination);
// throws CapExceeded when it leaves the span.
WordMap diffop_model_coords(const DiffOpModel& m, const PolyDiffOp& op);
WordMap polyvec_model_coords(const PolyvecModel& m, const Polyvector& p);

// Realize a weight-1 combination of letters as a geometric element.
PolyDiffOp diffop_model_value(const DiffOpModel& m, const WordMap& x);
Polyvector polyvec_model_value(const PolyvecModel& m, const WordMap& x);

// Curved Lie table of the family under the graded commutator of operators and
// the bracket with the pointwise product as differential; the curvature (may
// be zero) is expanded in the family.  Construction itself certifies closure:
// any bracket or differential value outside the span throws CapExceeded.
TaylorTable diffop_model_table(const DiffOpModel& m, int arity_cap,
                               const PolyDiffOp& curvature,
                               int curvature_hbar_power = 0);

// Curved Lie table of a polyvector family under the odd Poisson bracket
// (trivial differential).
TaylorTable polyvec_model_table(const PolyvecModel& m, int arity_cap,
                                const Polyvector& curvature,
                                int curvature_hbar_power = 0);

// Assemble a graded map of the given shift from images of basis letters.
GradedMap map_from_images(const SpacePtr& source, const SpacePtr& target,
                          int shift,
                          const std::vector<std::pair<Letter, WordMap>>& images);

// Desk family on `ctx`: all monomial functions up to the degree cap together
// with the first-order operators with affine coefficients.  Closed under the
// graded commutator; the differential restricts to zero on it.
DiffOpModel make_first_order_cochain_model(const PolyContext& ctx);

// The same space of functions viewed inside polyvector fields, together with
// the affine vector fields; closed under the odd Poisson bracket.
PolyvecModel make_affine_polyvec_model(const PolyContext& ctx);

}  // namespace hte
