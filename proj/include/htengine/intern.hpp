#pragma once

#include <map>
#include <vector>

#include "htengine/words.hpp"

namespace hte {

// Incremental exact row reduction over word combinations.  The registry keeps
// the first linearly independent elements it sees as its generators; coords()
// expresses any later element as an exact combination of those generators,
// inserting new ones on demand.  Generator ids are assigned in insertion
// order, so for a fixed sequence of calls the result is deterministic.
//
// Elements must be degree-homogeneous (needed so a generator id can serve as
// a graded letter at a symmetric-power level above this one).
class SpanRegistry {
 public:
  // Exact coordinates of x on the generator set (inserting new generators for
  // any direction not yet spanned).  Throws InvalidInput when x mixes degrees.
  std::map<int, Rational> coords(const WordMap& x);

  // Read-only variant: returns false when x is not in the current span
  // (coords_out is then unspecified).
  bool try_coords(const WordMap& x, std::map<int, Rational>& coords_out) const;

  int size() const { return static_cast<int>(gens_.size()); }
  int degree_of(int id) const;
  int weight_of(int id) const;  // maximal word length of the generator
  const WordMap& generator(int id) const;

 private:
  struct Row {
    WordMap vec;                        // pivot coefficient normalized to 1
    std::map<int, Rational> in_gens;    // vec as combination of generators
  };
  std::vector<WordMap> gens_;
  std::vector<int> gen_degree_;
  std::vector<int> gen_weight_;
  std::map<Word, Row> rows_;  // keyed by pivot word (smallest word of vec)
};

}  // namespace hte
