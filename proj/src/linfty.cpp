#include "htengine/linfty.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>

namespace hte {

namespace {

bool letter_in_space(const GradedSpace& space, const Letter& l) {
  return l.idx >= 0 && l.idx < space.dim(l.deg);
}

void require_letters(const GradedSpace& space, const WordMap& x, const std::string& who) {
  for (const auto& [w, c] : x) {
    (void)c;
    for (const Letter& l : w) {
      if (!letter_in_space(space, l)) {
        throw InvalidInput(who + ": letter outside the underlying space");
      }
    }
  }
}

// Requires every term to be a single letter and every value degree to equal
// `degree` (when degree_known); returns without complaint on the zero element.
void require_weight1_degree(const WordMap& x, bool degree_known, int degree,
                            const std::string& who) {
  for (const auto& [w, c] : x) {
    (void)c;
    if (w.size() != 1) throw InvalidInput(who + ": value must consist of weight-1 words");
    if (degree_known && w[0].deg != degree) {
      throw InvalidInput(who + ": value has degree " + std::to_string(w[0].deg) +
                         ", expected " + std::to_string(degree));
    }
  }
}

bool odd_deg(int d) { return (d % 2) != 0; }

// Koszul sign for pulling the letters at the positions of `mask` to the front
// of `w` (relative orders preserved on both blocks).
int front_extract_sign(const Word& w, unsigned mask) {
  int sign = 1;
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (!(mask >> i & 1u) || !odd_deg(w[i].deg)) continue;
    for (std::size_t j = 0; j < i; ++j) {
      if (!(mask >> j & 1u) && odd_deg(w[j].deg)) sign = -sign;
    }
  }
  return sign;
}

std::string describe(const WordMap& x, const GradedSpace& space) {
  std::ostringstream os;
  bool first = true;
  for (const auto& [w, c] : x) {
    if (!first) os << " + ";
    first = false;
    os << c.str() << "*" << word_to_string(w, space);
  }
  if (first) os << "0";
  return os.str();
}

// Values of a component family (Taylor or morphism maps) on one word, with
// symmetric normalization of the key; words beyond the stored arities are an
// error for tables (handled by callers) and zero for collections.
WordMap component_lookup(const std::vector<std::map<Word, WordMap>>& maps, const Word& word) {
  auto [s, sign] = sym_sort(word);
  if (sign == 0) return {};
  const std::size_t n = s.size();
  if (n == 0 || n > maps.size()) return {};
  auto it = maps[n - 1].find(s);
  if (it == maps[n - 1].end()) return {};
  return sign == 1 ? it->second : scaled(it->second, Rational(sign));
}

void set_component_impl(std::vector<std::map<Word, WordMap>>& maps, const Word& word,
                        const WordMap& value, int value_shift, int cap,
                        const std::string& who) {
  auto [s, sign] = sym_sort(word);
  if (sign == 0) throw InvalidInput(who + ": the word vanishes in the symmetric algebra");
  const int n = static_cast<int>(s.size());
  if (n < 1) throw InvalidInput(who + ": the unit word has no stored component");
  if (n > cap) throw CapExceeded(who + ": arity " + std::to_string(n) +
                                 " exceeds the cap " + std::to_string(cap));
  require_weight1_degree(value, true, word_degree(s) + value_shift, who);
  WordMap v = sign == 1 ? value : scaled(value, Rational(sign));
  if (is_zero(v)) {
    maps[static_cast<std::size_t>(n - 1)].erase(s);
  } else {
    maps[static_cast<std::size_t>(n - 1)][s] = std::move(v);
  }
}

void validate_component_family(const std::vector<std::map<Word, WordMap>>& maps,
                               const GradedSpace& space, int value_shift,
                               const std::string& who) {
  for (std::size_t n = 1; n <= maps.size(); ++n) {
    for (const auto& [w, v] : maps[n - 1]) {
      if (w.size() != n) throw InvalidInput(who + ": key weight does not match its arity slot");
      auto [s, sign] = sym_sort(w);
      if (sign != 1 || s != w) {
        throw InvalidInput(who + ": key is not in symmetric normal form");
      }
      for (const Letter& l : w) {
        if (!letter_in_space(space, l)) throw InvalidInput(who + ": key letter outside space");
      }
      if (is_zero(v)) throw InvalidInput(who + ": stored zero value");
      require_weight1_degree(v, true, word_degree(w) + value_shift, who);
      require_letters(space, v, who);
    }
  }
}

// Ordered-block assignments for the morphism extension: calls `emit` with the
// block index of every position, for every p >= 1 and every surjective
// assignment positions -> {0..p-1}.
void for_each_block_assignment(int n, const std::function<void(int, const std::vector<int>&)>& emit) {
  std::vector<int> assign(static_cast<std::size_t>(n), 0);
  for (int p = 1; p <= n; ++p) {
    std::vector<int> counts(static_cast<std::size_t>(p), 0);
    std::function<void(int)> rec = [&](int pos) {
      if (pos == n) {
        for (int c : counts) {
          if (c == 0) return;
        }
        emit(p, assign);
        return;
      }
      for (int b = 0; b < p; ++b) {
        assign[static_cast<std::size_t>(pos)] = b;
        ++counts[static_cast<std::size_t>(b)];
        rec(pos + 1);
        --counts[static_cast<std::size_t>(b)];
      }
    };
    rec(0);
  }
}

// Koszul sign of rearranging `w` into the concatenation of the blocks of
// `assign` (stable within blocks).
int assignment_sign(const Word& w, const std::vector<int>& assign) {
  int sign = 1;
  const std::size_t n = w.size();
  for (std::size_t i = 0; i < n; ++i) {
    if (!odd_deg(w[i].deg)) continue;
    for (std::size_t j = i + 1; j < n; ++j) {
      // Positions i < j invert exactly when j's block comes strictly earlier.
      if (assign[j] < assign[i] && odd_deg(w[j].deg)) sign = -sign;
    }
  }
  return sign;
}

Rational factorial(int k) {
  Rational r(1);
  for (int i = 2; i <= k; ++i) r = r * Rational(i);
  return r;
}

}  // namespace

// ---- TaylorTable -----------------------------------------------------------

TaylorTable make_taylor_table(SpacePtr shifted, int arity_cap) {
  if (!shifted) throw InvalidInput("make_taylor_table: null space");
  if (arity_cap < 1) throw InvalidInput("make_taylor_table: arity cap must be at least 1");
  TaylorTable t;
  t.underlying = std::move(shifted);
  t.arity_cap = arity_cap;
  t.maps.resize(static_cast<std::size_t>(arity_cap));
  return t;
}

void set_taylor_component(TaylorTable& t, const Word& word, const WordMap& value) {
  require_letters(*t.underlying, value, "set_taylor_component");
  set_component_impl(t.maps, word, value, +1, t.arity_cap, "set_taylor_component");
}

void set_taylor_curvature(TaylorTable& t, const WordMap& value, int hbar_power) {
  require_weight1_degree(value, true, +1, "set_taylor_curvature");
  require_letters(*t.underlying, value, "set_taylor_curvature");
  if (hbar_power < 0) throw InvalidInput("set_taylor_curvature: negative series power");
  t.curvature = value;
  t.curvature_hbar_power = hbar_power;
}

void validate_taylor_table(const TaylorTable& t) {
  if (!t.underlying) throw InvalidInput("taylor table: null space");
  if (t.arity_cap < 1) throw InvalidInput("taylor table: arity cap must be at least 1");
  if (t.maps.size() != static_cast<std::size_t>(t.arity_cap)) {
    throw InvalidInput("taylor table: component storage does not match the cap");
  }
  if (t.curvature_hbar_power < 0) throw InvalidInput("taylor table: negative series power");
  require_weight1_degree(t.curvature, true, +1, "taylor table curvature");
  require_letters(*t.underlying, t.curvature, "taylor table curvature");
  validate_component_family(t.maps, *t.underlying, +1, "taylor table");
}

WordMap apply_component(const TaylorTable& t, const Word& word) {
  if (word.empty()) return t.curvature;
  if (static_cast<int>(word.size()) > t.arity_cap) {
    throw CapExceeded("apply_component: weight " + std::to_string(word.size()) +
                      " exceeds the arity cap " + std::to_string(t.arity_cap));
  }
  return component_lookup(t.maps, word);
}

WordMap apply_components(const TaylorTable& t, const WordMap& x) {
  WordMap out;
  for (const auto& [w, c] : x) add_scaled(out, apply_component(t, w), c);
  return out;
}

WordMap apply_linear_component(const TaylorTable& t, const WordMap& v) {
  WordMap out;
  for (const auto& [w, c] : v) {
    if (w.size() != 1) throw InvalidInput("apply_linear_component: weight-1 input required");
    add_scaled(out, apply_component(t, w), c);
  }
  return out;
}

std::vector<Word> sym_basis_words(const GradedSpace& space, int weight) {
  std::vector<Letter> letters;
  for (int d : space.degrees()) {
    for (int i = 0; i < space.dim(d); ++i) letters.push_back(Letter{d, i});
  }
  std::vector<Word> out;
  Word current;
  std::function<void(std::size_t)> rec = [&](std::size_t start) {
    if (static_cast<int>(current.size()) == weight) {
      out.push_back(current);
      return;
    }
    for (std::size_t i = start; i < letters.size(); ++i) {
      if (!current.empty() && current.back() == letters[i] && odd_deg(letters[i].deg)) {
        continue;  // an odd letter squares to zero
      }
      current.push_back(letters[i]);
      rec(i);
      current.pop_back();
    }
  };
  if (weight < 0) return out;
  rec(0);
  return out;
}

// ---- coderivation extension ------------------------------------------------

WordMap extend_coderivation(const TaylorTable& t, const Word& word) {
  auto [w, presign] = sym_sort(word);
  if (presign == 0) return {};
  const int n = static_cast<int>(w.size());
  if (n > t.arity_cap) {
    throw CapExceeded("extend_coderivation: weight " + std::to_string(n) +
                      " exceeds the arity cap " + std::to_string(t.arity_cap));
  }
  WordMap out;
  const Rational pre(presign);
  // Curvature term Q_0 v w (the whole sum for the unit word).
  for (const auto& [cw, cc] : t.curvature) {
    Word joined = cw;
    joined.insert(joined.end(), w.begin(), w.end());
    auto [s, sign] = sym_sort(joined);
    if (sign != 0) add_term(out, s, pre * cc * Rational(sign));
  }
  for (unsigned mask = 1; mask < (1u << n); ++mask) {
    Word block, rest;
    for (int i = 0; i < n; ++i) {
      if (mask >> i & 1u) {
        block.push_back(w[static_cast<std::size_t>(i)]);
      } else {
        rest.push_back(w[static_cast<std::size_t>(i)]);
      }
    }
    const int eps = front_extract_sign(w, mask);
    const WordMap val = component_lookup(t.maps, block);
    for (const auto& [y, cy] : val) {
      Word joined = y;
      joined.insert(joined.end(), rest.begin(), rest.end());
      auto [s, sign] = sym_sort(joined);
      if (sign != 0) add_term(out, s, pre * Rational(eps) * cy * Rational(sign));
    }
  }
  return out;
}

WordMap extend_coderivation(const TaylorTable& t, const WordMap& x) {
  WordMap out;
  for (const auto& [w, c] : x) add_scaled(out, extend_coderivation(t, w), c);
  return out;
}

SymElement extend_coderivation(const TaylorTable& t, const SymElement& x) {
  if (*x.base() != *t.underlying) {
    throw InvalidInput("extend_coderivation: element alphabet differs from the table space");
  }
  return SymElement(x.base(), x.weight_cap() + 1, extend_coderivation(t, x.terms()));
}

// ---- square-zero check -----------------------------------------------------

std::string LinftyReport::to_string() const {
  std::ostringstream os;
  if (violations.empty()) {
    os << "square-zero identities hold on all checked words";
  } else {
    os << violations.size() << " violation(s):";
    for (const auto& v : violations) os << "\n  " << v;
  }
  if (!unchecked_arities.empty()) {
    os << "\nunchecked input weights (need components beyond the cap):";
    for (int a : unchecked_arities) os << " " << a;
  }
  return os.str();
}

LinftyReport check_linfty_on(const TaylorTable& t, const std::vector<Word>& words) {
  validate_taylor_table(t);
  LinftyReport report;
  const bool curved = !is_zero(t.curvature);
  for (const Word& w : words) {
    const int n = static_cast<int>(w.size());
    if (n > t.arity_cap || (curved && n == t.arity_cap)) {
      if (std::find(report.unchecked_arities.begin(), report.unchecked_arities.end(), n) ==
          report.unchecked_arities.end()) {
        report.unchecked_arities.push_back(n);
      }
      continue;
    }
    const WordMap once = extend_coderivation(t, w);
    WordMap twice;
    for (const auto& [x, c] : once) add_scaled(twice, apply_component(t, x), c);
    if (!is_zero(twice)) {
      report.violations.push_back("(QQ)^1 on " + word_to_string(w, *t.underlying) +
                                  " (weight " + std::to_string(n) +
                                  ") = " + describe(twice, *t.underlying));
    }
  }
  std::sort(report.unchecked_arities.begin(), report.unchecked_arities.end());
  return report;
}

LinftyReport check_linfty(const TaylorTable& t) {
  std::vector<Word> words;
  for (int n = 0; n <= t.arity_cap; ++n) {
    for (Word& w : sym_basis_words(*t.underlying, n)) words.push_back(std::move(w));
  }
  return check_linfty_on(t, words);
}

// ---- curved Lie constructor ------------------------------------------------

TaylorTable from_curved_lie(SpacePtr shifted, const WordMap& curvature_R,
                            const GradedMap& differential, const BracketFn& bracket,
                            int arity_cap, int curvature_hbar_power) {
  if (arity_cap < 2) throw InvalidInput("from_curved_lie: arity cap must be at least 2");
  TaylorTable t = make_taylor_table(shifted, arity_cap);
  const GradedSpace& space = *t.underlying;

  require_weight1_degree(curvature_R, true, +1, "from_curved_lie curvature");
  require_letters(space, curvature_R, "from_curved_lie curvature");
  if (!is_zero(curvature_R)) {
    set_taylor_curvature(t, scaled(curvature_R, Rational(-1)), curvature_hbar_power);
  }

  if (*differential.source() != space || *differential.target() != space) {
    throw InvalidInput("from_curved_lie: differential must act on the given space");
  }
  if (differential.shift() != 1) {
    throw InvalidInput("from_curved_lie: differential must have shift +1");
  }
  for (int d : space.degrees()) {
    for (int i = 0; i < space.dim(d); ++i) {
      const WordMap dx = apply_graded_map(differential, WordMap{{Word{Letter{d, i}}, Rational(1)}});
      if (!is_zero(dx)) set_taylor_component(t, Word{Letter{d, i}}, scaled(dx, Rational(-1)));
    }
  }

  // Gather all letters for the pairwise antisymmetry validation.
  std::vector<Letter> letters;
  for (int d : space.degrees()) {
    for (int i = 0; i < space.dim(d); ++i) letters.push_back(Letter{d, i});
  }
  for (const Letter& x : letters) {
    for (const Letter& y : letters) {
      const WordMap bxy = bracket(x, y);
      if (is_zero(bxy)) continue;
      require_weight1_degree(bxy, true, x.deg + y.deg + 1, "from_curved_lie bracket");
      require_letters(space, bxy, "from_curved_lie bracket");
    }
  }
  for (const Letter& x : letters) {
    for (const Letter& y : letters) {
      if (y < x) continue;
      const WordMap bxy = bracket(x, y);
      const WordMap byx = bracket(y, x);
      const int sign = (odd_deg(x.deg + 1) && odd_deg(y.deg + 1)) ? 1 : -1;
      // [y,x] = -(-1)^{(|x|+1)(|y|+1)} [x,y] in the unshifted grading.
      WordMap expect = scaled(bxy, Rational(sign));
      if (byx != expect) {
        throw InvalidInput("from_curved_lie: bracket is not graded-antisymmetric on (" +
                           space.label(x.deg, x.idx) + ", " + space.label(y.deg, y.idx) + ")");
      }
    }
  }
  for (const Word& w : sym_basis_words(space, 2)) {
    const Letter& x = w[0];
    const Letter& y = w[1];
    const WordMap bxy = bracket(x, y);
    if (is_zero(bxy)) continue;
    // Q_2(x v y) = -(-1)^{|x|} [x, y] with |x| the shifted degree.
    const Rational c = odd_deg(x.deg) ? Rational(1) : Rational(-1);
    set_taylor_component(t, w, scaled(bxy, c));
  }
  validate_taylor_table(t);
  return t;
}

// ---- morphism tables -------------------------------------------------------

MorphismTable make_morphism(TaylorTable source, TaylorTable target, int arity_cap) {
  if (arity_cap < 1) throw InvalidInput("make_morphism: arity cap must be at least 1");
  MorphismTable f;
  f.source = std::move(source);
  f.target = std::move(target);
  f.maps.resize(static_cast<std::size_t>(arity_cap));
  return f;
}

void set_morphism_component(MorphismTable& f, const Word& word, const WordMap& value) {
  require_letters(*f.target.underlying, value, "set_morphism_component");
  set_component_impl(f.maps, word, value, 0, static_cast<int>(f.maps.size()),
                     "set_morphism_component");
}

void validate_morphism(const MorphismTable& f) {
  validate_taylor_table(f.source);
  validate_taylor_table(f.target);
  if (f.maps.empty()) throw InvalidInput("morphism: empty component storage");
  // Keys live over the source space, values over the target space.
  for (std::size_t n = 1; n <= f.maps.size(); ++n) {
    for (const auto& [w, v] : f.maps[n - 1]) {
      if (w.size() != n) throw InvalidInput("morphism: key weight does not match its arity slot");
      auto [s, sign] = sym_sort(w);
      if (sign != 1 || s != w) throw InvalidInput("morphism: key is not in symmetric normal form");
      for (const Letter& l : w) {
        if (!letter_in_space(*f.source.underlying, l)) {
          throw InvalidInput("morphism: key letter outside the source space");
        }
      }
      if (is_zero(v)) throw InvalidInput("morphism: stored zero value");
      require_weight1_degree(v, true, word_degree(w), "morphism");
      require_letters(*f.target.underlying, v, "morphism");
    }
  }
}

MorphismTable strict_morphism(TaylorTable source, TaylorTable target,
                              const GradedMap& linear, int arity_cap) {
  if (*linear.source() != *source.underlying || *linear.target() != *target.underlying) {
    throw InvalidInput("strict_morphism: linear part does not match the spaces");
  }
  if (linear.shift() != 0) throw InvalidInput("strict_morphism: linear part must have shift 0");
  MorphismTable f = make_morphism(std::move(source), std::move(target), arity_cap);
  const GradedSpace& space = *f.source.underlying;
  for (int d : space.degrees()) {
    for (int i = 0; i < space.dim(d); ++i) {
      const WordMap v = apply_graded_map(linear, WordMap{{Word{Letter{d, i}}, Rational(1)}});
      if (!is_zero(v)) set_morphism_component(f, Word{Letter{d, i}}, v);
    }
  }
  return f;
}

GradedMap morphism_linear_part(const MorphismTable& f) {
  GradedMap out(f.source.underlying, f.target.underlying, 0);
  const GradedSpace& src = *f.source.underlying;
  for (int d : src.degrees()) {
    Mat block = zero_mat(f.target.underlying->dim(d), src.dim(d));
    bool nonzero = false;
    for (int i = 0; i < src.dim(d); ++i) {
      const WordMap v = component_lookup(f.maps, Word{Letter{d, i}});
      for (const auto& [w, c] : v) {
        block(w[0].idx, i) = c;
        nonzero = true;
      }
    }
    if (nonzero) out = out.with_block(d, std::move(block));
  }
  return out;
}

namespace {

WordMap extend_comps(const std::vector<std::map<Word, WordMap>>& maps, const Word& word,
                     const std::string& who) {
  auto [w, presign] = sym_sort(word);
  if (presign == 0) return {};
  const int n = static_cast<int>(w.size());
  if (n == 0) return WordMap{{Word{}, Rational(1)}};
  if (n > static_cast<int>(maps.size())) {
    throw CapExceeded(who + ": weight " + std::to_string(n) + " exceeds the arity cap " +
                      std::to_string(maps.size()));
  }
  std::vector<int> degs;
  degs.reserve(w.size());
  for (const Letter& l : w) degs.push_back(l.deg);
  WordMap out;
  for_each_block_assignment(n, [&](int p, const std::vector<int>& assign) {
    // Koszul sign of sorting the letters into block order.
    int eps = assignment_sign(w, assign);
    WordMap term{{Word{}, Rational(1)}};
    for (int b = 0; b < p && !is_zero(term); ++b) {
      Word block;
      for (int i = 0; i < n; ++i) {
        if (assign[static_cast<std::size_t>(i)] == b) block.push_back(w[static_cast<std::size_t>(i)]);
      }
      term = sym_wedge(term, component_lookup(maps, block));
    }
    if (is_zero(term)) return;
    add_scaled(out, term, Rational(presign * eps) / factorial(p));
  });
  return out;
}

WordMap collection_p1(const std::vector<std::map<Word, WordMap>>& maps, const WordMap& x) {
  WordMap out;
  for (const auto& [w, c] : x) {
    if (w.empty()) continue;
    if (w.size() > maps.size()) continue;  // beyond the stored arities: zero
    add_scaled(out, component_lookup(maps, w), c);
  }
  return out;
}

}  // namespace

WordMap extend_morphism(const MorphismTable& f, const Word& word) {
  return extend_comps(f.maps, word, "extend_morphism");
}

WordMap extend_morphism(const MorphismTable& f, const WordMap& x) {
  WordMap out;
  for (const auto& [w, c] : x) add_scaled(out, extend_morphism(f, w), c);
  return out;
}

WordMap morphism_p1(const MorphismTable& f, const WordMap& x) {
  return collection_p1(f.maps, x);
}

bool tables_agree(const TaylorTable& a, const TaylorTable& b, int cap) {
  if (*a.underlying != *b.underlying) return false;
  if (a.curvature != b.curvature) return false;
  if (!is_zero(a.curvature) && a.curvature_hbar_power != b.curvature_hbar_power) return false;
  const int upto = std::min({cap, a.arity_cap, b.arity_cap});
  for (int n = 1; n <= upto; ++n) {
    if (a.maps[static_cast<std::size_t>(n - 1)] != b.maps[static_cast<std::size_t>(n - 1)]) {
      return false;
    }
  }
  return true;
}

MorphismTable compose_morphisms(const MorphismTable& f, const MorphismTable& g) {
  validate_morphism(f);
  validate_morphism(g);
  const int cap = static_cast<int>(std::min(f.maps.size(), g.maps.size()));
  if (*g.target.underlying != *f.source.underlying ||
      !tables_agree(g.target, f.source, std::min(g.target.arity_cap, f.source.arity_cap))) {
    throw InvalidInput("compose_morphisms: middle structures disagree");
  }
  MorphismTable out = make_morphism(g.source, f.target, cap);
  for (int n = 1; n <= cap; ++n) {
    for (const Word& w : sym_basis_words(*g.source.underlying, n)) {
      const WordMap value = collection_p1(f.maps, extend_comps(g.maps, w, "compose_morphisms"));
      if (!is_zero(value)) set_morphism_component(out, w, value);
    }
  }
  return out;
}

MorphismTable invert_strict_isomorphism(const MorphismTable& f) {
  validate_morphism(f);
  const int cap = static_cast<int>(f.maps.size());
  GradedMap linear = morphism_linear_part(f);
  GradedMap inv = inverse(linear);  // throws SingularLinearPart
  MorphismTable out = make_morphism(f.target, f.source, cap);
  const GradedSpace& tgt = *f.target.underlying;
  for (int d : tgt.degrees()) {
    for (int i = 0; i < tgt.dim(d); ++i) {
      const WordMap v = apply_graded_map(inv, WordMap{{Word{Letter{d, i}}, Rational(1)}});
      if (!is_zero(v)) set_morphism_component(out, Word{Letter{d, i}}, v);
    }
  }
  for (int n = 2; n <= cap; ++n) {
    for (const Word& w : sym_basis_words(tgt, n)) {
      // With components < n fixed, (F o Out)_n(w) = defect + F_1(Out_n(w)).
      const WordMap defect = collection_p1(f.maps, extend_comps(out.maps, w, "invert"));
      if (is_zero(defect)) continue;
      set_morphism_component(out, w, apply_graded_map(inv, scaled(defect, Rational(-1))));
    }
  }
  return out;
}

// ---- Maurer-Cartan calculus ------------------------------------------------

MCElement make_mc_element(SpacePtr space, WordMap value) {
  MCElement pi;
  pi.space = std::move(space);
  pi.coeffs.push_back(std::move(value));
  pi.hbar_cap = 0;
  validate_mc_element(pi);
  return pi;
}

MCElement make_mc_series(SpacePtr space, std::vector<WordMap> coeffs, int hbar_cap) {
  MCElement pi;
  pi.space = std::move(space);
  pi.coeffs = std::move(coeffs);
  pi.hbar_cap = hbar_cap;
  validate_mc_element(pi);
  return pi;
}

void validate_mc_element(const MCElement& pi) {
  if (!pi.space) throw InvalidInput("mc element: null space");
  if (pi.hbar_cap < 0) throw InvalidInput("mc element: negative series cap");
  if (pi.coeffs.size() != static_cast<std::size_t>(pi.hbar_cap + 1)) {
    throw InvalidInput("mc element: expected " + std::to_string(pi.hbar_cap + 1) +
                       " series coefficients, got " + std::to_string(pi.coeffs.size()));
  }
  for (const WordMap& c : pi.coeffs) {
    require_weight1_degree(c, true, 0, "mc element");
    require_letters(*pi.space, c, "mc element");
  }
}

std::vector<WordMap> mc_residual(const TaylorTable& t, const MCElement& pi) {
  validate_mc_element(pi);
  if (*pi.space != *t.underlying) {
    throw InvalidInput("mc_residual: element space differs from the table space");
  }
  const int K = pi.hbar_cap;
  std::vector<WordMap> out(static_cast<std::size_t>(K + 1));
  if (!is_zero(t.curvature) && t.curvature_hbar_power <= K) {
    add_scaled(out[static_cast<std::size_t>(t.curvature_hbar_power)], t.curvature, Rational(1));
  }
  // wedge[r] carries the r-th series coefficient of pi^{v k} for the current k.
  std::vector<WordMap> wedge(static_cast<std::size_t>(K + 1));
  wedge[0] = WordMap{{Word{}, Rational(1)}};
  for (int k = 1; k <= t.arity_cap; ++k) {
    std::vector<WordMap> next(static_cast<std::size_t>(K + 1));
    for (int r = 0; r <= K; ++r) {
      for (int s = 0; s <= r; ++s) {
        if (is_zero(wedge[static_cast<std::size_t>(r - s)]) ||
            is_zero(pi.coeffs[static_cast<std::size_t>(s)])) {
          continue;
        }
        add_scaled(next[static_cast<std::size_t>(r)],
                   sym_wedge(wedge[static_cast<std::size_t>(r - s)],
                             pi.coeffs[static_cast<std::size_t>(s)]),
                   Rational(1));
      }
    }
    wedge = std::move(next);
    const Rational inv_fact = Rational(1) / factorial(k);
    for (int r = 0; r <= K; ++r) {
      if (is_zero(wedge[static_cast<std::size_t>(r)])) continue;
      add_scaled(out[static_cast<std::size_t>(r)],
                 apply_components(t, wedge[static_cast<std::size_t>(r)]), inv_fact);
    }
  }
  return out;
}

WordMap mc_residual(const TaylorTable& t, const WordMap& pi) {
  return mc_residual(t, make_mc_element(t.underlying, pi))[0];
}

PolyPath make_poly_path(SpacePtr space, std::vector<WordMap> coeffs) {
  if (!space) throw InvalidInput("poly path: null space");
  PolyPath p;
  p.space = std::move(space);
  p.coeffs = std::move(coeffs);
  for (const WordMap& c : p.coeffs) require_letters(*p.space, c, "poly path");
  return p;
}

WordMap path_eval(const PolyPath& p, const Rational& t) {
  WordMap out;
  Rational power(1);
  for (const WordMap& c : p.coeffs) {
    add_scaled(out, c, power);
    power = power * t;
  }
  return out;
}

PolyPath path_derivative(const PolyPath& p) {
  PolyPath d;
  d.space = p.space;
  for (std::size_t j = 1; j < p.coeffs.size(); ++j) {
    d.coeffs.push_back(scaled(p.coeffs[j], Rational(static_cast<int>(j))));
  }
  return d;
}

bool path_is_zero(const PolyPath& p) {
  for (const WordMap& c : p.coeffs) {
    if (!is_zero(c)) return false;
  }
  return true;
}

PolyPath mc_homotopy_residual(const TaylorTable& t, const PolyPath& pi,
                              const PolyPath& lambda) {
  if (*pi.space != *t.underlying || *lambda.space != *t.underlying) {
    throw InvalidInput("mc_homotopy_residual: path space differs from the table space");
  }
  for (const WordMap& c : pi.coeffs) require_weight1_degree(c, true, 0, "homotopy path pi");
  for (const WordMap& c : lambda.coeffs) {
    require_weight1_degree(c, true, -1, "homotopy path lambda");
  }
  // residual = d(pi_t)/dt - sum_{k} 1/k! Q_{k+1}(pi_t^{v k} v lambda_t).
  std::vector<WordMap> residual = path_derivative(pi).coeffs;
  // power[j]: t^j coefficient of pi_t^{v k} for the running k.
  std::vector<WordMap> power{WordMap{{Word{}, Rational(1)}}};
  auto ensure = [&](std::size_t size) {
    if (residual.size() < size) residual.resize(size);
  };
  for (int k = 0; k + 1 <= t.arity_cap; ++k) {
    if (k > 0) {
      std::vector<WordMap> next(power.size() + pi.coeffs.size());
      for (std::size_t j = 0; j < power.size(); ++j) {
        for (std::size_t s = 0; s < pi.coeffs.size(); ++s) {
          if (is_zero(power[j]) || is_zero(pi.coeffs[s])) continue;
          add_scaled(next[j + s], sym_wedge(power[j], pi.coeffs[s]), Rational(1));
        }
      }
      power = std::move(next);
    }
    const Rational inv_fact = Rational(1) / factorial(k);
    for (std::size_t j = 0; j < power.size(); ++j) {
      for (std::size_t s = 0; s < lambda.coeffs.size(); ++s) {
        if (is_zero(power[j]) || is_zero(lambda.coeffs[s])) continue;
        const WordMap wedge = sym_wedge(power[j], lambda.coeffs[s]);
        if (is_zero(wedge)) continue;
        ensure(j + s + 1);
        add_scaled(residual[j + s], apply_components(t, wedge), Rational(-1) * inv_fact);
      }
    }
  }
  while (!residual.empty() && is_zero(residual.back())) residual.pop_back();
  PolyPath out;
  out.space = t.underlying;
  out.coeffs = std::move(residual);
  return out;
}

bool is_central(const TaylorTable& t, const WordMap& gamma) {
  require_weight1_degree(gamma, false, 0, "is_central");
  require_letters(*t.underlying, gamma, "is_central");
  for (int m = 2; m <= t.arity_cap; ++m) {
    for (const Word& w : sym_basis_words(*t.underlying, m - 1)) {
      WordMap r;
      for (const auto& [gw, gc] : gamma) {
        Word joined = gw;
        joined.insert(joined.end(), w.begin(), w.end());
        add_scaled(r, apply_component(t, joined), gc);
      }
      if (!is_zero(r)) return false;
    }
  }
  return true;
}

// ---- convolution structure -------------------------------------------------

HomElement make_hom_element(int arity_cap) {
  if (arity_cap < 0) throw InvalidInput("make_hom_element: negative cap");
  HomElement f;
  f.comps.resize(static_cast<std::size_t>(arity_cap));
  return f;
}

void hom_set(HomElement& f, const Word& word, const WordMap& value) {
  if (word.empty()) {
    f.on_unit = value;
    return;
  }
  auto [s, sign] = sym_sort(word);
  if (sign == 0) throw InvalidInput("hom_set: the word vanishes in the symmetric algebra");
  if (s.size() > f.comps.size()) f.comps.resize(s.size());
  WordMap v = sign == 1 ? value : scaled(value, Rational(sign));
  if (is_zero(v)) {
    f.comps[s.size() - 1].erase(s);
  } else {
    f.comps[s.size() - 1][s] = std::move(v);
  }
}

void hom_add(HomElement& f, const HomElement& g, const Rational& c) {
  add_scaled(f.on_unit, g.on_unit, c);
  if (f.comps.size() < g.comps.size()) f.comps.resize(g.comps.size());
  for (std::size_t n = 0; n < g.comps.size(); ++n) {
    for (const auto& [w, v] : g.comps[n]) {
      WordMap& slot = f.comps[n][w];
      add_scaled(slot, v, c);
      if (is_zero(slot)) f.comps[n].erase(w);
    }
  }
}

HomElement hom_scaled(const HomElement& f, const Rational& c) {
  HomElement out = make_hom_element(static_cast<int>(f.comps.size()));
  hom_add(out, f, c);
  return out;
}

bool hom_is_zero(const HomElement& f) {
  if (!is_zero(f.on_unit)) return false;
  for (const auto& m : f.comps) {
    if (!m.empty()) return false;
  }
  return true;
}

bool hom_equal(const HomElement& f, const HomElement& g) {
  HomElement d = hom_scaled(f, Rational(1));
  hom_add(d, g, Rational(-1));
  return hom_is_zero(d);
}

WordMap hom_apply(const HomElement& f, const WordMap& x) {
  WordMap out;
  for (const auto& [w, c] : x) {
    if (w.empty()) {
      add_scaled(out, f.on_unit, c);
      continue;
    }
    if (w.size() > f.comps.size()) continue;  // arity-truncated: zero
    auto [s, sign] = sym_sort(w);
    if (sign == 0) continue;
    auto it = f.comps[s.size() - 1].find(s);
    if (it == f.comps[s.size() - 1].end()) continue;
    add_scaled(out, it->second, c * Rational(sign));
  }
  return out;
}

HomElement hom_from_morphism(const MorphismTable& f) {
  HomElement out;
  out.comps = f.maps;
  return out;
}

HomElement hom_path_eval(const HomPath& p, const Rational& t) {
  HomElement out = make_hom_element(0);
  Rational power(1);
  for (const HomElement& c : p.coeffs) {
    hom_add(out, c, power);
    power = power * t;
  }
  return out;
}

HomPath hom_path_derivative(const HomPath& p) {
  HomPath d;
  for (std::size_t j = 1; j < p.coeffs.size(); ++j) {
    d.coeffs.push_back(hom_scaled(p.coeffs[j], Rational(static_cast<int>(j))));
  }
  return d;
}

bool hom_path_is_zero(const HomPath& p) {
  for (const HomElement& c : p.coeffs) {
    if (!hom_is_zero(c)) return false;
  }
  return true;
}

namespace {

// Splits a hom element into pieces of homogeneous map degree (degree of the
// value minus degree of the argument word, both in the shifted gradings).
std::map<int, HomElement> split_by_map_degree(const HomElement& f) {
  std::map<int, HomElement> out;
  auto slot = [&](int mdeg) -> HomElement& {
    auto it = out.find(mdeg);
    if (it == out.end()) {
      it = out.emplace(mdeg, make_hom_element(static_cast<int>(f.comps.size()))).first;
    }
    return it->second;
  };
  for (const auto& [w, c] : f.on_unit) {
    add_term(slot(w[0].deg).on_unit, w, c);
  }
  for (std::size_t n = 0; n < f.comps.size(); ++n) {
    for (const auto& [w, v] : f.comps[n]) {
      const int wdeg = word_degree(w);
      for (const auto& [vw, vc] : v) {
        add_term(slot(vw[0].deg - wdeg).comps[n][w], vw, vc);
      }
    }
  }
  return out;
}

WordMap hom_component_word(const HomElement& f, const Word& w) {
  if (w.empty()) return f.on_unit;
  if (w.size() > f.comps.size()) return {};
  auto [s, sign] = sym_sort(w);
  if (sign == 0) return {};
  auto it = f.comps[s.size() - 1].find(s);
  if (it == f.comps[s.size() - 1].end()) return {};
  return sign == 1 ? it->second : scaled(it->second, Rational(sign));
}

}  // namespace

ConvolutionAlgebra::ConvolutionAlgebra(TaylorTable source, TaylorTable target)
    : src_(std::move(source)), dst_(std::move(target)) {
  validate_taylor_table(src_);
  validate_taylor_table(dst_);
  if (src_.curvature_hbar_power != 0 || dst_.curvature_hbar_power != 0) {
    throw InvalidInput(
        "convolution: encode formal series parameters in the letter space; "
        "curvature series powers are not supported here");
  }
  cap_ = std::min(src_.arity_cap, dst_.arity_cap);
  if (cap_ < 1) throw InvalidInput("convolution: arity cap must be at least 1");
  check_cap_ = is_zero(src_.curvature) ? cap_ : cap_ - 1;
  basis_.resize(static_cast<std::size_t>(cap_) + 1);
  for (int n = 0; n <= cap_; ++n) {
    basis_[static_cast<std::size_t>(n)] = sym_basis_words(*src_.underlying, n);
  }
}

const std::vector<Word>& ConvolutionAlgebra::basis_words(int weight) const {
  if (weight < 0 || weight > cap_) {
    throw InvalidInput("basis_words: weight outside the cap range");
  }
  return basis_[static_cast<std::size_t>(weight)];
}

HomElement ConvolutionAlgebra::curvature() const {
  HomElement out = make_hom_element(cap_);
  out.on_unit = dst_.curvature;
  return out;
}

HomElement ConvolutionAlgebra::apply1(const HomElement& f, int only_arity) const {
  HomElement out = make_hom_element(cap_);
  for (const auto& [mdeg, piece] : split_by_map_degree(f)) {
    const Rational sign(odd_deg(mdeg) ? -1 : 1);
    // Q'_1 o F: sparse over the stored components.
    if (only_arity < 0 || only_arity == 0) {
      const WordMap v = apply_linear_component(dst_, piece.on_unit);
      if (!is_zero(v)) add_scaled(out.on_unit, v, Rational(1));
    }
    for (std::size_t n = 0; n < piece.comps.size() && static_cast<int>(n) < check_cap_; ++n) {
      if (only_arity >= 0 && static_cast<int>(n + 1) != only_arity) continue;
      for (const auto& [w, v] : piece.comps[n]) {
        const WordMap qv = apply_linear_component(dst_, v);
        if (is_zero(qv)) continue;
        WordMap& slot = out.comps[n][w];
        add_scaled(slot, qv, Rational(1));
        if (is_zero(slot)) out.comps[n].erase(w);
      }
    }
    // -(-1)^{|F|} F o Q over the tracked basis words.
    for (int n = 0; n <= check_cap_; ++n) {
      if (only_arity >= 0 && n != only_arity) continue;
      for (const Word& w : basis_[static_cast<std::size_t>(n)]) {
        const WordMap qw = n == 0 ? src_.curvature : extend_coderivation(src_, w);
        WordMap val = hom_apply(piece, qw);
        if (is_zero(val)) continue;
        val = scaled(val, Rational(-1) * sign);
        if (n == 0) {
          add_scaled(out.on_unit, val, Rational(1));
        } else {
          WordMap& slot = out.comps[static_cast<std::size_t>(n - 1)][w];
          add_scaled(slot, val, Rational(1));
          if (is_zero(slot)) out.comps[static_cast<std::size_t>(n - 1)].erase(w);
        }
      }
    }
  }
  return out;
}

HomElement ConvolutionAlgebra::applyn(const std::vector<HomElement>& fs, int only_arity) const {
  const int k = static_cast<int>(fs.size());
  if (k < 2) throw InvalidInput("applyn: use apply1 for the unary operation");
  if (k > cap_) {
    throw CapExceeded("applyn: arity " + std::to_string(k) + " exceeds the cap " +
                      std::to_string(cap_));
  }
  std::vector<std::map<int, HomElement>> pieces;
  pieces.reserve(fs.size());
  for (const HomElement& f : fs) pieces.push_back(split_by_map_degree(f));

  HomElement out = make_hom_element(cap_);
  // Iterate over one homogeneous piece per slot.
  std::vector<std::map<int, HomElement>::const_iterator> its;
  std::function<void(std::size_t, std::vector<const HomElement*>&, std::vector<int>&)> rec =
      [&](std::size_t slot, std::vector<const HomElement*>& chosen, std::vector<int>& mdegs) {
        if (slot == pieces.size()) {
          for (int n = 0; n <= check_cap_; ++n) {
            if (only_arity >= 0 && n != only_arity) continue;
            for (const Word& w : basis_[static_cast<std::size_t>(n)]) {
              WordMap acc;
              std::vector<int> assign(w.size(), 0);
              std::function<void(std::size_t)> assign_rec = [&](std::size_t pos) {
                if (pos == w.size()) {
                  int eps = assignment_sign(w, assign);
                  // Koszul: each operator hops over the blocks to its left.
                  std::vector<int> block_deg(static_cast<std::size_t>(k), 0);
                  for (std::size_t i = 0; i < w.size(); ++i) {
                    block_deg[static_cast<std::size_t>(assign[i])] += w[i].deg;
                  }
                  int opsign = 1;
                  int left = 0;
                  for (int b = 0; b < k; ++b) {
                    if (odd_deg(mdegs[static_cast<std::size_t>(b)]) && odd_deg(left)) {
                      opsign = -opsign;
                    }
                    left += block_deg[static_cast<std::size_t>(b)];
                  }
                  WordMap term{{Word{}, Rational(1)}};
                  for (int b = 0; b < k && !is_zero(term); ++b) {
                    Word block;
                    for (std::size_t i = 0; i < w.size(); ++i) {
                      if (assign[i] == b) block.push_back(w[i]);
                    }
                    term = sym_wedge(term, hom_component_word(*chosen[static_cast<std::size_t>(b)], block));
                  }
                  if (!is_zero(term)) add_scaled(acc, term, Rational(eps * opsign));
                  return;
                }
                for (int b = 0; b < k; ++b) {
                  assign[pos] = b;
                  assign_rec(pos + 1);
                }
              };
              assign_rec(0);
              if (is_zero(acc)) continue;
              const WordMap val = apply_components(dst_, acc);
              if (is_zero(val)) continue;
              if (n == 0) {
                add_scaled(out.on_unit, val, Rational(1));
              } else {
                WordMap& slot_map = out.comps[static_cast<std::size_t>(n - 1)][w];
                add_scaled(slot_map, val, Rational(1));
                if (is_zero(slot_map)) out.comps[static_cast<std::size_t>(n - 1)].erase(w);
              }
            }
          }
          return;
        }
        for (const auto& [mdeg, piece] : pieces[slot]) {
          chosen.push_back(&piece);
          mdegs.push_back(mdeg);
          rec(slot + 1, chosen, mdegs);
          chosen.pop_back();
          mdegs.pop_back();
        }
      };
  std::vector<const HomElement*> chosen;
  std::vector<int> mdegs;
  rec(0, chosen, mdegs);
  return out;
}

HomElement ConvolutionAlgebra::mc_residual(const HomElement& f) const {
  HomElement out = curvature();
  hom_add(out, apply1(f), Rational(1));
  for (int k = 2; k <= cap_; ++k) {
    const std::vector<HomElement> copies(static_cast<std::size_t>(k), f);
    hom_add(out, applyn(copies), Rational(1) / factorial(k));
  }
  return out;
}

HomElement ConvolutionAlgebra::morphism_defect(const HomElement& f) const {
  if (!is_zero(f.on_unit)) {
    throw InvalidInput("morphism_defect: the candidate must vanish on the unit");
  }
  for (const auto& [mdeg, piece] : split_by_map_degree(f)) {
    (void)piece;
    if (mdeg != 0) throw InvalidInput("morphism_defect: the candidate must have map degree 0");
  }
  std::vector<std::map<Word, WordMap>> comps = f.comps;
  comps.resize(static_cast<std::size_t>(cap_));
  HomElement out = make_hom_element(cap_);
  for (int n = 0; n <= check_cap_; ++n) {
    for (const Word& w : basis_[static_cast<std::size_t>(n)]) {
      const WordMap fw = extend_comps(comps, w, "morphism_defect");
      WordMap lhs;
      for (const auto& [v, c] : extend_coderivation(dst_, fw)) {
        if (v.size() == 1) add_term(lhs, v, c);
      }
      const WordMap qw = extend_coderivation(src_, w);
      WordMap rhs;
      for (const auto& [v, c] : qw) {
        if (v.size() > comps.size()) continue;
        add_scaled(rhs, component_lookup(comps, v), c);
      }
      add_scaled(lhs, rhs, Rational(-1));
      if (!is_zero(lhs)) hom_set(out, w, lhs);
    }
  }
  return out;
}

HomPath ConvolutionAlgebra::homotopy_residual(const HomPath& phi, const HomPath& lambda) const {
  HomPath residual = hom_path_derivative(phi);
  auto ensure = [&](std::size_t size) {
    while (residual.coeffs.size() < size) residual.coeffs.push_back(make_hom_element(cap_));
  };
  // k = 0 term: Qhat_1(lambda_t).
  for (std::size_t s = 0; s < lambda.coeffs.size(); ++s) {
    if (hom_is_zero(lambda.coeffs[s])) continue;
    ensure(s + 1);
    hom_add(residual.coeffs[s], apply1(lambda.coeffs[s]), Rational(-1));
  }
  // k >= 1 terms: 1/k! Qhat_{k+1}(phi^{v k} v lambda).
  for (int k = 1; k + 1 <= cap_; ++k) {
    const Rational coeff = Rational(-1) / factorial(k);
    std::vector<std::size_t> idx(static_cast<std::size_t>(k), 0);
    std::function<void(std::size_t, std::size_t)> rec = [&](std::size_t slot, std::size_t tpow) {
      if (slot == idx.size()) {
        for (std::size_t s = 0; s < lambda.coeffs.size(); ++s) {
          if (hom_is_zero(lambda.coeffs[s])) continue;
          std::vector<HomElement> args;
          args.reserve(static_cast<std::size_t>(k) + 1);
          bool zero = false;
          for (std::size_t j : idx) {
            if (hom_is_zero(phi.coeffs[j])) {
              zero = true;
              break;
            }
            args.push_back(phi.coeffs[j]);
          }
          if (zero) continue;
          args.push_back(lambda.coeffs[s]);
          const HomElement term = applyn(args);
          if (hom_is_zero(term)) continue;
          ensure(tpow + s + 1);
          hom_add(residual.coeffs[tpow + s], term, coeff);
        }
        return;
      }
      for (std::size_t j = 0; j < phi.coeffs.size(); ++j) {
        idx[slot] = j;
        rec(slot + 1, tpow + j);
      }
    };
    rec(0, 0);
  }
  while (!residual.coeffs.empty() && hom_is_zero(residual.coeffs.back())) {
    residual.coeffs.pop_back();
  }
  return residual;
}

GaugeFlowResult ConvolutionAlgebra::gauge_flow(const HomElement& phi0, const GradedMap& h,
                                               const Rational& t_end) const {
  if (*h.source() != *src_.underlying || *h.target() != *dst_.underlying) {
    throw InvalidInput("gauge_flow: generator spaces do not match the tables");
  }
  if (h.shift() != -1) throw InvalidInput("gauge_flow: generator must have shift -1");
  if (!is_zero(phi0.on_unit)) {
    throw InvalidInput("gauge_flow: the initial element must vanish on the unit");
  }
  if (!is_zero(src_.curvature) && !is_zero(apply_graded_map(h, src_.curvature))) {
    throw HypothesisViolation(
        "gauge_flow: the generator does not annihilate the source curvature, so the "
        "flow would leave the subspace of unit-vanishing elements");
  }

  HomElement hhat = make_hom_element(cap_);
  for (int d : src_.underlying->degrees()) {
    for (int i = 0; i < src_.underlying->dim(d); ++i) {
      const Word x{Letter{d, i}};
      const WordMap v = apply_graded_map(h, WordMap{{x, Rational(1)}});
      if (!is_zero(v)) hom_set(hhat, x, v);
    }
  }

  HomPath path;
  path.coeffs.push_back(make_hom_element(cap_));
  // Start from the truncation of phi0 to the tracked arities.
  for (int n = 1; n <= check_cap_; ++n) {
    if (static_cast<std::size_t>(n) > phi0.comps.size()) break;
    for (const auto& [w, v] : phi0.comps[static_cast<std::size_t>(n - 1)]) {
      hom_set(path.coeffs[0], w, v);
    }
  }

  for (int n = 1; n <= check_cap_; ++n) {
    // RHS_n(t) depends only on arities < n of the path, which are final.
    std::vector<HomElement> rhs;  // by t-power, arity-n component only
    auto rhs_ensure = [&](std::size_t size) {
      while (rhs.size() < size) rhs.push_back(make_hom_element(cap_));
    };
    const HomElement base = apply1(hhat, n);
    if (!hom_is_zero(base)) {
      rhs_ensure(1);
      hom_add(rhs[0], base, Rational(1));
    }
    for (int k = 1; k + 1 <= cap_; ++k) {
      const Rational coeff = Rational(1) / factorial(k);
      std::vector<std::size_t> idx(static_cast<std::size_t>(k), 0);
      std::function<void(std::size_t, std::size_t)> rec = [&](std::size_t slot,
                                                              std::size_t tpow) {
        if (slot == idx.size()) {
          std::vector<HomElement> args;
          args.reserve(static_cast<std::size_t>(k) + 1);
          bool zero = false;
          for (std::size_t j : idx) {
            if (hom_is_zero(path.coeffs[j])) {
              zero = true;
              break;
            }
            args.push_back(path.coeffs[j]);
          }
          if (zero) return;
          args.push_back(hhat);
          const HomElement term = applyn(args, n);
          if (hom_is_zero(term)) return;
          rhs_ensure(tpow + 1);
          hom_add(rhs[tpow], term, coeff);
          return;
        }
        for (std::size_t j = 0; j < path.coeffs.size(); ++j) {
          idx[slot] = j;
          rec(slot + 1, tpow + j);
        }
      };
      rec(0, 0);
    }
    for (std::size_t tau = 0; tau < rhs.size(); ++tau) {
      if (hom_is_zero(rhs[tau])) continue;
      while (path.coeffs.size() < tau + 2) path.coeffs.push_back(make_hom_element(cap_));
      hom_add(path.coeffs[tau + 1], rhs[tau], Rational(1) / Rational(static_cast<int>(tau) + 1));
    }
  }

  GaugeFlowResult result;
  result.generator = std::move(hhat);
  result.at_end = hom_path_eval(path, t_end);
  result.path = std::move(path);
  return result;
}

ConvolutionAlgebra convolution_structure(const TaylorTable& source, const TaylorTable& target) {
  return ConvolutionAlgebra(source, target);
}

MorphismTable morphism_from_hom(const ConvolutionAlgebra& conv, const HomElement& f) {
  if (!is_zero(f.on_unit)) {
    throw InvalidInput("morphism_from_hom: nonzero value on the unit");
  }
  MorphismTable out = make_morphism(conv.source_table(), conv.target_table(), conv.arity_cap());
  for (std::size_t n = 0; n < f.comps.size(); ++n) {
    for (const auto& [w, v] : f.comps[n]) {
      set_morphism_component(out, w, v);  // validates map degree 0
    }
  }
  validate_morphism(out);
  return out;
}

MorphismTable gauge_flow(const ConvolutionAlgebra& conv, const MorphismTable& phi0,
                         const GradedMap& h, const Rational& t_end) {
  const GaugeFlowResult result = conv.gauge_flow(hom_from_morphism(phi0), h, t_end);
  return morphism_from_hom(conv, result.at_end);
}

// ---- serialization ---------------------------------------------------------

namespace {

void require_plain_labels(const GradedSpace& space) {
  for (int d : space.degrees()) {
    for (const std::string& l : space.labels(d)) {
      if (l.find('.') != std::string::npos) {
        throw InvalidInput("serialization: label '" + l + "' contains '.'");
      }
    }
  }
}

Word word_from_key(const std::string& key, const GradedSpace& space) {
  if (key == "1") return Word{};
  std::vector<std::string> labels;
  std::string part;
  for (char ch : key) {
    if (ch == '.') {
      labels.push_back(part);
      part.clear();
    } else {
      part.push_back(ch);
    }
  }
  labels.push_back(part);
  return word_from_labels(labels, space);
}

nlohmann::json comps_to_json(const std::vector<std::map<Word, WordMap>>& maps,
                             const GradedSpace& key_space, const GradedSpace& value_space) {
  nlohmann::json out = nlohmann::json::object();
  for (std::size_t n = 1; n <= maps.size(); ++n) {
    if (maps[n - 1].empty()) continue;
    nlohmann::json slot = nlohmann::json::object();
    for (const auto& [w, v] : maps[n - 1]) {
      slot[word_to_string(w, key_space)] = element_to_json(v, value_space);
    }
    out[std::to_string(n)] = std::move(slot);
  }
  return out;
}

void comps_from_json(const nlohmann::json& j, const GradedSpace& key_space,
                     const GradedSpace& value_space,
                     const std::function<void(const Word&, const WordMap&)>& set) {
  if (!j.is_object()) throw InvalidInput("components: expected an object keyed by arity");
  for (const auto& [arity_key, slot] : j.items()) {
    int n = 0;
    try {
      std::size_t used = 0;
      n = std::stoi(arity_key, &used);
      if (used != arity_key.size()) throw std::invalid_argument(arity_key);
    } catch (const std::exception&) {
      throw InvalidInput("components: arity key '" + arity_key + "' is not an integer");
    }
    if (!slot.is_object()) throw InvalidInput("components: expected an object of words");
    for (const auto& [word_key, value] : slot.items()) {
      const Word w = word_from_key(word_key, key_space);
      if (static_cast<int>(w.size()) != n) {
        throw InvalidInput("components: word '" + word_key + "' does not have weight " +
                           arity_key);
      }
      set(w, element_from_json(value, value_space));
    }
  }
}

}  // namespace

nlohmann::json element_to_json(const WordMap& x, const GradedSpace& space) {
  require_plain_labels(space);
  nlohmann::json out = nlohmann::json::object();
  for (const auto& [w, c] : x) {
    if (w.size() != 1) throw InvalidInput("element_to_json: weight-1 words required");
    out[space.label(w[0].deg, w[0].idx)] = rational_to_json(c);
  }
  return out;
}

WordMap element_from_json(const nlohmann::json& j, const GradedSpace& space) {
  if (!j.is_object()) throw InvalidInput("element_from_json: expected an object");
  WordMap out;
  for (const auto& [label, c] : j.items()) {
    add_term(out, word_from_labels({label}, space), rational_from_json(c));
  }
  return out;
}

nlohmann::json taylor_to_json(const TaylorTable& t) {
  validate_taylor_table(t);
  require_plain_labels(*t.underlying);
  nlohmann::json out;
  out["space"] = space_to_json(*t.underlying);
  out["arity_cap"] = t.arity_cap;
  if (!is_zero(t.curvature)) {
    out["curvature"] = element_to_json(t.curvature, *t.underlying);
    if (t.curvature_hbar_power != 0) out["curvature_hbar_power"] = t.curvature_hbar_power;
  }
  out["maps"] = comps_to_json(t.maps, *t.underlying, *t.underlying);
  return out;
}

TaylorTable taylor_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw InvalidInput("taylor_from_json: expected an object");
  if (!j.contains("space") || !j.contains("arity_cap")) {
    throw InvalidInput("taylor_from_json: missing 'space' or 'arity_cap'");
  }
  SpacePtr space = std::make_shared<GradedSpace>(space_from_json(j.at("space")));
  TaylorTable t = make_taylor_table(space, j.at("arity_cap").get<int>());
  if (j.contains("curvature")) {
    set_taylor_curvature(t, element_from_json(j.at("curvature"), *space),
                         j.value("curvature_hbar_power", 0));
  }
  if (j.contains("maps")) {
    comps_from_json(j.at("maps"), *space, *space,
                    [&](const Word& w, const WordMap& v) { set_taylor_component(t, w, v); });
  }
  validate_taylor_table(t);
  return t;
}

nlohmann::json morphism_to_json(const MorphismTable& f) {
  validate_morphism(f);
  nlohmann::json out;
  out["source"] = taylor_to_json(f.source);
  out["target"] = taylor_to_json(f.target);
  out["arity_cap"] = static_cast<int>(f.maps.size());
  out["maps"] = comps_to_json(f.maps, *f.source.underlying, *f.target.underlying);
  return out;
}

MorphismTable morphism_from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("source") || !j.contains("target")) {
    throw InvalidInput("morphism_from_json: expected source and target tables");
  }
  TaylorTable source = taylor_from_json(j.at("source"));
  TaylorTable target = taylor_from_json(j.at("target"));
  int cap = std::min(source.arity_cap, target.arity_cap);
  if (j.contains("arity_cap")) cap = j.at("arity_cap").get<int>();
  MorphismTable f = make_morphism(std::move(source), std::move(target), cap);
  if (j.contains("maps")) {
    comps_from_json(j.at("maps"), *f.source.underlying, *f.target.underlying,
                    [&](const Word& w, const WordMap& v) { set_morphism_component(f, w, v); });
  }
  validate_morphism(f);
  return f;
}

nlohmann::json mc_to_json(const MCElement& pi) {
  validate_mc_element(pi);
  nlohmann::json out;
  out["space"] = space_to_json(*pi.space);
  out["hbar_cap"] = pi.hbar_cap;
  nlohmann::json coeffs = nlohmann::json::array();
  for (const WordMap& c : pi.coeffs) coeffs.push_back(element_to_json(c, *pi.space));
  out["coeffs"] = std::move(coeffs);
  return out;
}

MCElement mc_from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("space") || !j.contains("coeffs")) {
    throw InvalidInput("mc_from_json: expected 'space' and 'coeffs'");
  }
  SpacePtr space = std::make_shared<GradedSpace>(space_from_json(j.at("space")));
  std::vector<WordMap> coeffs;
  for (const auto& c : j.at("coeffs")) coeffs.push_back(element_from_json(c, *space));
  const int cap = j.value("hbar_cap", static_cast<int>(coeffs.size()) - 1);
  return make_mc_series(std::move(space), std::move(coeffs), cap);
}

}  // namespace hte
