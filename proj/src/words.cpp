#include "htengine/words.hpp"

#include <algorithm>

#include "htengine/errors.hpp"

namespace hte {

int word_degree(const Word& w) {
  int d = 0;
  for (const Letter& l : w) d += l.deg;
  return d;
}

int letter_degree_sum(const Word& w, std::size_t from, std::size_t to) {
  int d = 0;
  for (std::size_t i = from; i < to && i < w.size(); ++i) d += w[i].deg;
  return d;
}

void add_term(WordMap& m, const Word& w, const Rational& c) {
  if (c.is_zero()) return;
  auto it = m.find(w);
  if (it == m.end()) {
    m.emplace(w, c);
  } else {
    it->second += c;
    if (it->second.is_zero()) m.erase(it);
  }
}

void add_scaled(WordMap& m, const WordMap& x, const Rational& c) {
  if (c.is_zero()) return;
  for (const auto& [w, a] : x) add_term(m, w, a * c);
}

WordMap scaled(const WordMap& x, const Rational& c) {
  WordMap out;
  add_scaled(out, x, c);
  return out;
}

bool is_zero(const WordMap& m) { return m.empty(); }

void add_pair_term(PairComb& m, const Word& a, const Word& b, const Rational& c) {
  if (c.is_zero()) return;
  auto key = std::make_pair(a, b);
  auto it = m.find(key);
  if (it == m.end()) {
    m.emplace(std::move(key), c);
  } else {
    it->second += c;
    if (it->second.is_zero()) m.erase(it);
  }
}

std::map<int, WordMap> split_by_degree(const WordMap& x) {
  std::map<int, WordMap> out;
  for (const auto& [w, c] : x) out[word_degree(w)][w] = c;
  return out;
}

int max_weight(const WordMap& x) {
  int n = 0;
  for (const auto& [w, c] : x) n = std::max(n, static_cast<int>(w.size()));
  return n;
}

std::pair<Word, int> sym_sort(const Word& w) {
  // insertion sort, tracking the Koszul sign of each adjacent transposition
  Word s = w;
  int sign = 1;
  for (std::size_t i = 1; i < s.size(); ++i) {
    for (std::size_t j = i; j > 0 && s[j] < s[j - 1]; --j) {
      if (s[j].deg % 2 != 0 && s[j - 1].deg % 2 != 0) sign = -sign;
      std::swap(s[j], s[j - 1]);
    }
  }
  for (std::size_t i = 1; i < s.size(); ++i) {
    if (s[i] == s[i - 1] && s[i].deg % 2 != 0) return {Word{}, 0};
  }
  return {std::move(s), sign};
}

WordMap sym_normalize(const WordMap& x) {
  WordMap out;
  for (const auto& [w, c] : x) {
    auto [s, sign] = sym_sort(w);
    if (sign != 0) add_term(out, s, c * Rational(sign));
  }
  return out;
}

WordMap sym_wedge(const WordMap& a, const WordMap& b) {
  WordMap out;
  for (const auto& [wa, ca] : a) {
    for (const auto& [wb, cb] : b) {
      Word cat = wa;
      cat.insert(cat.end(), wb.begin(), wb.end());
      auto [s, sign] = sym_sort(cat);
      if (sign != 0) add_term(out, s, ca * cb * Rational(sign));
    }
  }
  return out;
}

WordMap apply_graded_map(const GradedMap& m, const WordMap& x) {
  WordMap out;
  for (const auto& [w, c] : x) {
    if (w.size() != 1) throw InvalidInput("apply_graded_map: input must have weight-1 words");
    const GradedVec image = m.apply_basis(w[0].deg, w[0].idx);
    for (const auto& [pos, coeff] : image.entries()) {
      add_term(out, Word{Letter{pos.first, pos.second}}, c * coeff);
    }
  }
  return out;
}

std::vector<std::string> word_to_labels(const Word& w, const GradedSpace& alphabet) {
  std::vector<std::string> out;
  out.reserve(w.size());
  for (const Letter& l : w) out.push_back(alphabet.label(l.deg, l.idx));
  return out;
}

Word word_from_labels(const std::vector<std::string>& labels,
                      const GradedSpace& alphabet) {
  Word w;
  w.reserve(labels.size());
  for (const std::string& lab : labels) {
    int found_deg = 0, found_idx = -1, hits = 0;
    for (int deg : alphabet.degrees()) {
      const int idx = alphabet.index_of(deg, lab);
      if (idx >= 0) {
        found_deg = deg;
        found_idx = idx;
        ++hits;
      }
    }
    if (hits == 0) throw InvalidInput("word: unknown letter label '" + lab + "'");
    if (hits > 1) throw InvalidInput("word: ambiguous letter label '" + lab + "'");
    w.push_back(Letter{found_deg, found_idx});
  }
  return w;
}

std::string word_to_string(const Word& w, const GradedSpace& alphabet) {
  if (w.empty()) return "1";
  std::string out;
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (i) out += ".";
    out += alphabet.label(w[i].deg, w[i].idx);
  }
  return out;
}

}  // namespace hte
