#include "htengine/coalgebra.hpp"

#include <algorithm>

namespace hte {

std::vector<std::pair<Word, Word>> deconcatenations(const Word& w) {
  std::vector<std::pair<Word, Word>> out;
  out.reserve(w.size() + 1);
  for (std::size_t i = 0; i <= w.size(); ++i) {
    out.emplace_back(Word(w.begin(), w.begin() + static_cast<long>(i)),
                     Word(w.begin() + static_cast<long>(i), w.end()));
  }
  return out;
}

PairComb deconcatenate(const WordMap& x) {
  PairComb out;
  for (const auto& [w, c] : x) {
    for (auto& [a, b] : deconcatenations(w)) add_pair_term(out, a, b, c);
  }
  return out;
}

WordMap shuffle_words(const Word& u, const Word& v) {
  WordMap out;
  const std::size_t l = u.size(), m = v.size();
  // iterate over subsets of positions for u-letters via combinations
  std::vector<int> pick(l);
  // positions chosen ascending: pick[i] ∈ [0, l+m) strictly increasing
  // recursive enumeration without recursion: odometer
  if (l == 0) {
    add_term(out, v, Rational(1));
    return out;
  }
  if (m == 0) {
    add_term(out, u, Rational(1));
    return out;
  }
  const std::size_t n = l + m;
  for (std::size_t i = 0; i < l; ++i) pick[i] = static_cast<int>(i);
  while (true) {
    // build word and sign
    Word w(n);
    std::vector<bool> is_u(n, false);
    for (std::size_t i = 0; i < l; ++i) is_u[static_cast<std::size_t>(pick[i])] = true;
    std::size_t iu = 0, iv = 0;
    int sign = 1;
    // Koszul sign: for each v-letter placed before some u-letters that
    // precede it in the concatenated order, count crossings.  A crossing
    // occurs for every pair (u-letter at position a, v-letter at position b)
    // with b < a; the sign contribution is (−1)^{deg_u · deg_v}.
    for (std::size_t pos = 0; pos < n; ++pos) {
      if (is_u[pos]) {
        w[pos] = u[iu++];
      } else {
        w[pos] = v[iv++];
        // this v-letter crosses all u-letters not yet placed
        if (w[pos].deg % 2 != 0) {
          for (std::size_t uu = iu; uu < l; ++uu) {
            if (u[uu].deg % 2 != 0) sign = -sign;
          }
        }
      }
    }
    add_term(out, w, Rational(sign));
    // next combination
    long i = static_cast<long>(l) - 1;
    while (i >= 0 && pick[static_cast<std::size_t>(i)] ==
                         static_cast<int>(n - l + static_cast<std::size_t>(i))) {
      --i;
    }
    if (i < 0) break;
    ++pick[static_cast<std::size_t>(i)];
    for (std::size_t j = static_cast<std::size_t>(i) + 1; j < l; ++j) {
      pick[j] = pick[j - 1] + 1;
    }
  }
  return out;
}

WordMap shuffle(const WordMap& u, const WordMap& v, int weight_cap) {
  WordMap out;
  for (const auto& [wu, cu] : u) {
    for (const auto& [wv, cv] : v) {
      if (weight_cap >= 0 &&
          static_cast<int>(wu.size() + wv.size()) > weight_cap) {
        throw WeightCapExceeded("shuffle: combined weight " +
                                std::to_string(wu.size() + wv.size()) +
                                " exceeds cap " + std::to_string(weight_cap));
      }
      add_scaled(out, shuffle_words(wu, wv), cu * cv);
    }
  }
  return out;
}

WordMap multi_shuffle(const std::vector<Word>& blocks) {
  WordMap acc;
  add_term(acc, Word{}, Rational(1));
  for (const Word& b : blocks) {
    WordMap rhs;
    add_term(rhs, b, Rational(1));
    acc = shuffle(acc, rhs);
  }
  return acc;
}

PairComb graded_swap(const PairComb& x) {
  PairComb out;
  for (const auto& [pr, c] : x) {
    const auto& [a, b] = pr;
    const int s = (word_degree(a) % 2 != 0 && word_degree(b) % 2 != 0) ? -1 : 1;
    add_pair_term(out, b, a, c * Rational(s));
  }
  return out;
}

PairComb reduced_deconcatenate(const WordMap& x) {
  PairComb out;
  for (const auto& [w, c] : x) {
    for (auto& [a, b] : deconcatenations(w)) {
      if (a.empty() || b.empty()) continue;
      add_pair_term(out, a, b, c);
    }
  }
  return out;
}

PairComb reduced_cocommutator(const WordMap& x) {
  PairComb d = reduced_deconcatenate(x);
  PairComb out = d;
  const PairComb t = graded_swap(d);
  for (const auto& [pr, c] : t) add_pair_term(out, pr.first, pr.second, -c);
  return out;
}

WordMap apply_op(const EndoOp& f, const WordMap& x) {
  WordMap out;
  for (const auto& [w, c] : x) add_scaled(out, f(w), c);
  return out;
}

EndoOp op_identity() {
  return [](const Word& w) {
    WordMap out;
    add_term(out, w, Rational(1));
    return out;
  };
}

EndoOp op_counit_unit() {
  return [](const Word& w) {
    WordMap out;
    if (w.empty()) add_term(out, w, Rational(1));
    return out;
  };
}

EndoOp op_reduced() {
  return [](const Word& w) {
    WordMap out;
    if (!w.empty()) add_term(out, w, Rational(1));
    return out;
  };
}

EndoOp convolve(EndoOp f, EndoOp g) {
  return [f = std::move(f), g = std::move(g)](const Word& w) {
    WordMap out;
    for (const auto& [a, b] : deconcatenations(w)) {
      const WordMap fa = f(a);
      const WordMap gb = g(b);
      if (fa.empty() || gb.empty()) continue;
      add_scaled(out, shuffle(fa, gb), Rational(1));
    }
    return out;
  };
}

EndoOp conv_power(const EndoOp& f, int k) {
  if (k < 0) throw InvalidInput("conv_power: negative exponent");
  EndoOp acc = op_counit_unit();
  for (int i = 0; i < k; ++i) acc = convolve(acc, f);
  return acc;
}

const WordMap& Eulerian::e1_word(const Word& w) {
  auto it = memo1_.find(w);
  if (it != memo1_.end()) return it->second;
  WordMap acc;
  const std::size_t n = w.size();
  if (n >= 1) {
    // Σ_{j=1}^{n} ((−1)^{j+1}/j) Σ_{w = b₁···b_j, b_i nonempty} μ(b₁,…,b_j)
    // enumerate compositions of n into j positive parts via subset of cut
    // points (n−1 possible cuts)
    const std::size_t cuts = n - 1;
    for (std::size_t mask = 0; mask < (static_cast<std::size_t>(1) << cuts); ++mask) {
      std::vector<Word> blocks;
      std::size_t start = 0;
      for (std::size_t pos = 0; pos < cuts; ++pos) {
        if (mask & (static_cast<std::size_t>(1) << pos)) {
          blocks.emplace_back(w.begin() + static_cast<long>(start),
                              w.begin() + static_cast<long>(pos) + 1);
          start = pos + 1;
        }
      }
      blocks.emplace_back(w.begin() + static_cast<long>(start), w.end());
      const int j = static_cast<int>(blocks.size());
      const Rational coeff =
          Rational(j % 2 == 1 ? 1 : -1) / Rational(j);
      add_scaled(acc, multi_shuffle(blocks), coeff);
    }
  }
  auto [jt, inserted] = memo1_.emplace(w, std::move(acc));
  return jt->second;
}

WordMap Eulerian::e1(const WordMap& x) {
  WordMap out;
  for (const auto& [w, c] : x) add_scaled(out, e1_word(w), c);
  return out;
}

WordMap Eulerian::ek_word(int k, const Word& w) {
  if (k < 0) throw InvalidInput("eulerian: negative index");
  auto key = std::make_pair(k, w);
  auto it = memok_.find(key);
  if (it != memok_.end()) return it->second;
  WordMap acc;
  if (k == 0) {
    if (w.empty()) add_term(acc, w, Rational(1));
  } else if (k == 1) {
    acc = e1_word(w);
  } else {
    // e^(k)(w) = (1/k!) Σ_{w = b₁···b_k, nonempty} μ(e¹(b₁), …, e¹(b_k))
    const std::size_t n = w.size();
    if (n >= static_cast<std::size_t>(k)) {
      // choose k−1 cut points among n−1
      std::vector<int> cut(static_cast<std::size_t>(k - 1));
      for (int i = 0; i < k - 1; ++i) cut[static_cast<std::size_t>(i)] = i;
      const int cmax = static_cast<int>(n) - 1;
      while (true) {
        std::vector<WordMap> factors;
        std::size_t start = 0;
        bool ok = true;
        for (int i = 0; i < k - 1; ++i) {
          const std::size_t end = static_cast<std::size_t>(cut[static_cast<std::size_t>(i)]) + 1;
          Word b(w.begin() + static_cast<long>(start), w.begin() + static_cast<long>(end));
          factors.push_back(e1_word(b));
          if (factors.back().empty()) ok = false;
          start = end;
        }
        Word b(w.begin() + static_cast<long>(start), w.end());
        factors.push_back(e1_word(b));
        if (factors.back().empty()) ok = false;
        if (ok) {
          WordMap prod;
          add_term(prod, Word{}, Rational(1));
          for (const auto& f : factors) prod = shuffle(prod, f);
          add_scaled(acc, prod, Rational(1));
        }
        // next combination of cut points
        int i = k - 2;
        while (i >= 0 && cut[static_cast<std::size_t>(i)] == cmax - (k - 2 - i)) --i;
        if (i < 0) break;
        ++cut[static_cast<std::size_t>(i)];
        for (int j = i + 1; j < k - 1; ++j) {
          cut[static_cast<std::size_t>(j)] = cut[static_cast<std::size_t>(j - 1)] + 1;
        }
      }
      Rational kfact(1);
      for (int i = 2; i <= k; ++i) kfact *= Rational(i);
      acc = scaled(acc, Rational(1) / kfact);
    }
  }
  auto [jt, inserted] = memok_.emplace(std::move(key), std::move(acc));
  return jt->second;
}

WordMap Eulerian::e(int k, const WordMap& x) {
  WordMap out;
  for (const auto& [w, c] : x) add_scaled(out, ek_word(k, w), c);
  return out;
}

WordMap colie_project(const WordMap& x, Eulerian& eu) { return eu.e1(x); }

PairComb cofree_cobracket(const WordMap& representative, Eulerian& eu) {
  PairComb d = reduced_cocommutator(representative);
  PairComb out;
  for (const auto& [pr, c] : d) {
    const WordMap ea = eu.e1_word(pr.first);
    const WordMap eb = eu.e1_word(pr.second);
    for (const auto& [wa, ca] : ea) {
      for (const auto& [wb, cb] : eb) {
        add_pair_term(out, wa, wb, c * ca * cb);
      }
    }
  }
  return out;
}

WordMap pbw_I(const std::vector<WordMap>& colie_factors, int weight_cap) {
  WordMap acc;
  add_term(acc, Word{}, Rational(1));
  for (const auto& f : colie_factors) acc = shuffle(acc, f, weight_cap);
  return acc;
}

SymCoLie intern_colie(const WordMap& representative, SpanRegistry& reg) {
  SymCoLie out;
  for (auto& [deg, part] : split_by_degree(representative)) {
    for (const auto& [id, c] : reg.coords(part)) {
      add_term(out, Word{Letter{deg, id}}, c);
    }
  }
  return out;
}

namespace {

// symmetric product of two interned-letter combinations
SymCoLie sym_product(const SymCoLie& a, const SymCoLie& b) {
  SymCoLie out;
  for (const auto& [wa, ca] : a) {
    for (const auto& [wb, cb] : b) {
      Word w = wa;
      w.insert(w.end(), wb.begin(), wb.end());
      auto [s, sign] = sym_sort(w);
      if (sign != 0) add_term(out, s, ca * cb * Rational(sign));
    }
  }
  return out;
}

}  // namespace

SymCoLie pbw_J(const WordMap& x, int k, Eulerian& eu, SpanRegistry& reg) {
  if (k <= 0) throw InvalidInput("pbw_J: k must be positive");
  // precondition: x in the image of e^(k)
  if (eu.e(k, x) != x) {
    throw NotInEulerianComponent("pbw_J: input is not fixed by e^(" +
                                 std::to_string(k) + ")");
  }
  SymCoLie acc;
  Rational kfact(1);
  for (int i = 2; i <= k; ++i) kfact *= Rational(i);
  for (const auto& [w, c] : x) {
    const std::size_t n = w.size();
    if (n < static_cast<std::size_t>(k)) continue;
    // k-fold deconcatenations with nonempty blocks: choose k−1 cuts
    std::vector<int> cut(static_cast<std::size_t>(std::max(0, k - 1)));
    for (int i = 0; i < k - 1; ++i) cut[static_cast<std::size_t>(i)] = i;
    const int cmax = static_cast<int>(n) - 1;
    bool more = true;
    if (k == 1) {
      add_scaled(acc, intern_colie(eu.e1_word(w), reg), c);
      more = false;
    }
    while (more) {
      std::vector<Word> blocks;
      std::size_t start = 0;
      for (int i = 0; i < k - 1; ++i) {
        const std::size_t end = static_cast<std::size_t>(cut[static_cast<std::size_t>(i)]) + 1;
        blocks.emplace_back(w.begin() + static_cast<long>(start),
                            w.begin() + static_cast<long>(end));
        start = end;
      }
      blocks.emplace_back(w.begin() + static_cast<long>(start), w.end());

      // Koszul bookkeeping: interning per block keeps each block's sign
      // internal; blocks appear in word order, matching the ∨-product order.
      SymCoLie prod;
      add_term(prod, Word{}, Rational(1));
      bool zero = false;
      for (const Word& b : blocks) {
        const WordMap eb = eu.e1_word(b);
        if (eb.empty()) {
          zero = true;
          break;
        }
        prod = sym_product(prod, intern_colie(eb, reg));
        if (prod.empty()) {
          zero = true;
          break;
        }
      }
      if (!zero) add_scaled(acc, prod, c);

      int i = k - 2;
      while (i >= 0 && cut[static_cast<std::size_t>(i)] == cmax - (k - 2 - i)) --i;
      if (i < 0) break;
      ++cut[static_cast<std::size_t>(i)];
      for (int j = i + 1; j < k - 1; ++j) {
        cut[static_cast<std::size_t>(j)] = cut[static_cast<std::size_t>(j - 1)] + 1;
      }
    }
  }
  return scaled(acc, Rational(1) / kfact);
}

TcElement::TcElement(SpacePtr base, int weight_cap)
    : base_(std::move(base)), cap_(weight_cap) {
  if (!base_) throw InvalidInput("TcElement: null alphabet");
  if (cap_ <= 0) throw InvalidInput("TcElement: weight cap must be positive");
}

TcElement::TcElement(SpacePtr base, int weight_cap, WordMap terms)
    : TcElement(std::move(base), weight_cap) {
  for (const auto& [w, c] : terms) {
    if (static_cast<int>(w.size()) > cap_) {
      throw WeightCapExceeded("TcElement: word of weight " +
                              std::to_string(w.size()) + " exceeds cap " +
                              std::to_string(cap_));
    }
    for (const Letter& l : w) {
      if (l.idx < 0 || l.idx >= base_->dim(l.deg)) {
        throw InvalidInput("TcElement: letter outside alphabet");
      }
    }
  }
  terms_ = std::move(terms);
}

SymElement::SymElement(SpacePtr base, int weight_cap)
    : base_(std::move(base)), cap_(weight_cap) {
  if (!base_) throw InvalidInput("SymElement: null alphabet");
  if (cap_ <= 0) throw InvalidInput("SymElement: weight cap must be positive");
}

SymElement::SymElement(SpacePtr base, int weight_cap, const WordMap& terms)
    : SymElement(std::move(base), weight_cap) {
  WordMap normalized = sym_normalize(terms);
  for (const auto& [w, c] : normalized) {
    if (static_cast<int>(w.size()) > cap_) {
      throw WeightCapExceeded("SymElement: word exceeds weight cap");
    }
    for (const Letter& l : w) {
      if (l.idx < 0 || l.idx >= base_->dim(l.deg)) {
        throw InvalidInput("SymElement: letter outside alphabet");
      }
    }
  }
  terms_ = std::move(normalized);
}

CoLieElement::CoLieElement(const TcElement& x, Eulerian& eu)
    : rep_(x.with_terms(eu.e1(x.terms()))) {}

}  // namespace hte
