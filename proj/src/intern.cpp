#include "htengine/intern.hpp"

#include "htengine/errors.hpp"

namespace hte {

namespace {

int homogeneous_degree(const WordMap& x) {
  bool first = true;
  int deg = 0;
  for (const auto& [w, c] : x) {
    const int d = word_degree(w);
    if (first) {
      deg = d;
      first = false;
    } else if (d != deg) {
      throw InvalidInput("SpanRegistry: element is not degree-homogeneous");
    }
  }
  return deg;
}

}  // namespace

std::map<int, Rational> SpanRegistry::coords(const WordMap& x) {
  std::map<int, Rational> result;
  if (x.empty()) return result;
  const int deg = homogeneous_degree(x);
  WordMap rem = x;
  while (!rem.empty()) {
    const Word pivot = rem.begin()->first;
    const Rational c = rem.begin()->second;
    auto it = rows_.find(pivot);
    if (it == rows_.end()) {
      // new direction: the remainder itself becomes a generator
      const int id = static_cast<int>(gens_.size());
      gens_.push_back(rem);
      gen_degree_.push_back(deg);
      gen_weight_.push_back(max_weight(rem));
      Row row;
      const Rational inv = Rational(1) / c;
      row.vec = scaled(rem, inv);
      row.in_gens[id] = inv;
      rows_.emplace(pivot, std::move(row));
      auto jt = result.find(id);
      if (jt == result.end()) {
        result[id] = Rational(1);
      } else {
        jt->second += Rational(1);
        if (jt->second.is_zero()) result.erase(jt);
      }
      break;
    }
    const Row& row = it->second;
    add_scaled(rem, row.vec, -c);
    for (const auto& [id, a] : row.in_gens) {
      auto jt = result.find(id);
      if (jt == result.end()) {
        result[id] = a * c;
        if (result[id].is_zero()) result.erase(id);
      } else {
        jt->second += a * c;
        if (jt->second.is_zero()) result.erase(jt);
      }
    }
  }
  return result;
}

bool SpanRegistry::try_coords(const WordMap& x, std::map<int, Rational>& coords_out) const {
  coords_out.clear();
  WordMap rem = x;
  while (!rem.empty()) {
    const Word pivot = rem.begin()->first;
    const Rational c = rem.begin()->second;
    auto it = rows_.find(pivot);
    if (it == rows_.end()) return false;
    add_scaled(rem, it->second.vec, -c);
    for (const auto& [id, a] : it->second.in_gens) {
      auto jt = coords_out.find(id);
      if (jt == coords_out.end()) {
        coords_out[id] = a * c;
        if (coords_out[id].is_zero()) coords_out.erase(id);
      } else {
        jt->second += a * c;
        if (jt->second.is_zero()) coords_out.erase(jt);
      }
    }
  }
  return true;
}

int SpanRegistry::degree_of(int id) const {
  if (id < 0 || id >= size()) throw InvalidInput("SpanRegistry: bad generator id");
  return gen_degree_[static_cast<std::size_t>(id)];
}

int SpanRegistry::weight_of(int id) const {
  if (id < 0 || id >= size()) throw InvalidInput("SpanRegistry: bad generator id");
  return gen_weight_[static_cast<std::size_t>(id)];
}

const WordMap& SpanRegistry::generator(int id) const {
  if (id < 0 || id >= size()) throw InvalidInput("SpanRegistry: bad generator id");
  return gens_[static_cast<std::size_t>(id)];
}

}  // namespace hte
