#pragma once

#include <compare>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "htengine/graded.hpp"

namespace hte {

// One tensor letter: a basis element of a graded alphabet, identified by its
// degree and its index within that degree.  Carrying the degree inside the
// letter makes every sign computation local.
struct Letter {
  int deg = 0;
  int idx = 0;
  auto operator<=>(const Letter&) const = default;
};

// A pure tensor word (ordered list of letters).  The empty word is the
// coalgebra unit.
using Word = std::vector<Letter>;

// Linear combination of tensor words with exact coefficients; zero
// coefficients are never stored.
using WordMap = std::map<Word, Rational>;

// Linear combination of word pairs (elements of T ⊗ T).
using PairComb = std::map<std::pair<Word, Word>, Rational>;

int word_degree(const Word& w);
int letter_degree_sum(const Word& w, std::size_t from, std::size_t to);  // [from,to)

void add_term(WordMap& m, const Word& w, const Rational& c);
void add_scaled(WordMap& m, const WordMap& x, const Rational& c);
WordMap scaled(const WordMap& x, const Rational& c);
bool is_zero(const WordMap& m);

void add_pair_term(PairComb& m, const Word& a, const Word& b, const Rational& c);

// Splits a combination into homogeneous pieces keyed by total degree.
std::map<int, WordMap> split_by_degree(const WordMap& x);

// Maximum word length in the combination (0 for the zero element).
int max_weight(const WordMap& x);

// Symmetric normal form: sorts the word ascending with the Koszul sign of the
// sort; returns sign 0 when the word repeats an odd letter (the square of an
// odd element vanishes).
std::pair<Word, int> sym_sort(const Word& w);

// Applies sym_sort to every term.
WordMap sym_normalize(const WordMap& x);

// Graded-symmetric product of two combinations of symmetric words: words are
// concatenated and renormalized (all Koszul signs come from the sort).
WordMap sym_wedge(const WordMap& a, const WordMap& b);

// Applies a graded linear map letterwise to a combination of weight-1 words
// (throws InvalidInput on words of any other weight).
WordMap apply_graded_map(const GradedMap& m, const WordMap& x);

// Word (de)serialization against an alphabet space: a word is a list of
// labels; labels must be unique across all degrees of the alphabet for the
// list form to be unambiguous.
std::vector<std::string> word_to_labels(const Word& w, const GradedSpace& alphabet);
Word word_from_labels(const std::vector<std::string>& labels, const GradedSpace& alphabet);

// Canonical text form "x.y.z" (empty word is "1") for diagnostics and maps keys.
std::string word_to_string(const Word& w, const GradedSpace& alphabet);

}  // namespace hte
