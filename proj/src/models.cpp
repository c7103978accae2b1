#include "htengine/models.hpp"

#include <algorithm>
#include <functional>

#include "htengine/errors.hpp"

namespace hte {

namespace {

std::string dot_free(std::string s) {
  std::replace(s.begin(), s.end(), '.', '*');
  return s;
}

std::vector<Mono> monos_up_to(int vars, int max_degree) {
  std::vector<Mono> out;
  Mono current = Mono(static_cast<std::size_t>(vars), 0);
  std::function<void(int, int)> rec = [&](int var, int remaining) {
    if (var == vars) {
      out.push_back(current);
      return;
    }
    for (int e = 0; e <= remaining; ++e) {
      current[static_cast<std::size_t>(var)] = e;
      rec(var + 1, remaining - e);
    }
    current[static_cast<std::size_t>(var)] = 0;
  };
  rec(0, max_degree);
  std::sort(out.begin(), out.end());
  return out;
}

template <class E>
int element_degree(const E& e, int (*term_degree_of)(const typename E::key_type&)) {
  int deg = 0;
  bool first = true;
  for (const auto& [k, v] : e) {
    int d = term_degree_of(k);
    if (first) {
      deg = d;
      first = false;
    } else if (d != deg) {
      throw InvalidInput("model element is not degree-homogeneous");
    }
  }
  if (first) throw InvalidInput("model element is zero");
  return deg;
}

int do_key_degree(const DoKey& k) { return do_term_degree(k); }
int pv_key_degree(const PvKey& k) { return pv_term_degree(k); }

template <class E>
SpanModel<E> make_model(const PolyContext& ctx,
                        std::vector<std::pair<std::string, E>> named,
                        int (*term_degree_of)(const typename E::key_type&)) {
  SpanModel<E> m;
  m.ctx = ctx;
  std::map<int, std::vector<std::string>> components;
  std::vector<int> shifted;
  for (auto& [label, e] : named) {
    int deg = element_degree(e, term_degree_of) - 1;  // shift down by one
    components[deg].push_back(label);
    shifted.push_back(deg);
    m.labels.push_back(label);
    m.basis.push_back(std::move(e));
  }
  m.space = std::make_shared<GradedSpace>(GradedSpace::infer(components));
  for (std::size_t i = 0; i < m.labels.size(); ++i) {
    int idx = m.space->index_of(shifted[i], m.labels[i]);
    if (idx < 0) throw InvalidInput("model: label lookup failed");
    m.letters.push_back(Letter{shifted[i], idx});
  }
  return m;
}

template <class E>
WordMap coords_of(const SpanModel<E>& m, const E& e) {
  std::vector<Rational> c = expand_in_span(m.basis, e);
  WordMap out;
  for (std::size_t i = 0; i < c.size(); ++i)
    add_term(out, Word{m.letters[i]}, c[i]);
  return out;
}

template <class E>
E value_of(const SpanModel<E>& m, const WordMap& x) {
  E out;
  for (const auto& [w, c] : x) {
    if (w.size() != 1)
      throw InvalidInput("model value: expected a weight-1 combination");
    const E& b = m.of_letter(w[0]);
    for (const auto& [k, v] : b) {
      auto it = out.find(k);
      if (it == out.end()) {
        if (!(c * v == Rational(0))) out.emplace(k, c * v);
      } else {
        it->second += c * v;
        if (it->second == Rational(0)) out.erase(it);
      }
    }
  }
  return out;
}

}  // namespace

DiffOpModel make_diffop_model(const PolyContext& ctx,
                              std::vector<std::pair<std::string, PolyDiffOp>> named) {
  for (const auto& [label, op] : named) do_validate(ctx, op);
  return make_model<PolyDiffOp>(ctx, std::move(named), &do_key_degree);
}

PolyvecModel make_polyvec_model(const PolyContext& ctx,
                                std::vector<std::pair<std::string, Polyvector>> named) {
  for (const auto& [label, p] : named) pv_validate(ctx, p);
  return make_model<Polyvector>(ctx, std::move(named), &pv_key_degree);
}

WordMap diffop_model_coords(const DiffOpModel& m, const PolyDiffOp& op) {
  return coords_of(m, op);
}

WordMap polyvec_model_coords(const PolyvecModel& m, const Polyvector& p) {
  return coords_of(m, p);
}

PolyDiffOp diffop_model_value(const DiffOpModel& m, const WordMap& x) {
  return value_of(m, x);
}

Polyvector polyvec_model_value(const PolyvecModel& m, const WordMap& x) {
  return value_of(m, x);
}

GradedMap map_from_images(const SpacePtr& source, const SpacePtr& target,
                          int shift,
                          const std::vector<std::pair<Letter, WordMap>>& images) {
  GradedMap out(source, target, shift);
  std::map<int, Mat> blocks;
  for (const auto& [letter, image] : images) {
    for (const auto& [w, c] : image) {
      if (w.size() != 1)
        throw InvalidInput("map_from_images: image must be weight-1");
      if (w[0].deg != letter.deg + shift)
        throw InvalidInput("map_from_images: image degree mismatch");
      auto it = blocks.find(letter.deg);
      if (it == blocks.end())
        it = blocks
                 .emplace(letter.deg,
                          zero_mat(target->dim(letter.deg + shift),
                                   source->dim(letter.deg)))
                 .first;
      it->second(w[0].idx, letter.idx) += c;
    }
  }
  for (auto& [deg, mat] : blocks) out = out.with_block(deg, std::move(mat));
  return out;
}

TaylorTable diffop_model_table(const DiffOpModel& m, int arity_cap,
                               const PolyDiffOp& curvature,
                               int curvature_hbar_power) {
  std::vector<std::pair<Letter, WordMap>> d_images;
  for (std::size_t i = 0; i < m.basis.size(); ++i) {
    PolyDiffOp d = hochschild_differential(m.ctx, m.basis[i]);
    if (!do_is_zero(d)) d_images.emplace_back(m.letters[i], coords_of(m, d));
  }
  GradedMap d = map_from_images(m.space, m.space, 1, d_images);
  WordMap curv;
  if (!do_is_zero(curvature)) curv = coords_of(m, curvature);
  BracketFn bracket = [&m](const Letter& a, const Letter& b) {
    return diffop_model_coords(
        m, gerstenhaber_bracket(m.ctx, m.of_letter(a), m.of_letter(b)));
  };
  return from_curved_lie(m.space, curv, d, bracket, arity_cap,
                         curvature_hbar_power);
}

TaylorTable polyvec_model_table(const PolyvecModel& m, int arity_cap,
                                const Polyvector& curvature,
                                int curvature_hbar_power) {
  GradedMap d(m.space, m.space, 1);  // the bracket calculus has no differential
  WordMap curv;
  if (!pv_is_zero(curvature)) curv = coords_of(m, curvature);
  BracketFn bracket = [&m](const Letter& a, const Letter& b) {
    return polyvec_model_coords(
        m, schouten_bracket(m.ctx, m.of_letter(a), m.of_letter(b)));
  };
  return from_curved_lie(m.space, curv, d, bracket, arity_cap,
                         curvature_hbar_power);
}

DiffOpModel make_first_order_cochain_model(const PolyContext& ctx) {
  std::vector<std::pair<std::string, PolyDiffOp>> named;
  for (const Mono& mo : monos_up_to(ctx.vars, ctx.degree_cap)) {
    PolyDiffOp f;
    f.emplace(DoKey{mo, {}}, Rational(1));
    named.emplace_back(dot_free(mono_to_string(mo)), std::move(f));
  }
  for (const Mono& mo : monos_up_to(ctx.vars, std::min(1, ctx.degree_cap))) {
    for (int i = 0; i < ctx.vars; ++i) {
      PolyDiffOp op;
      op.emplace(DoKey{mo, {mono_var(ctx.vars, i)}}, Rational(1));
      named.emplace_back(dot_free(mono_to_string(mo)) + "|d" + var_name(i),
                         std::move(op));
    }
  }
  return make_diffop_model(ctx, std::move(named));
}

PolyvecModel make_affine_polyvec_model(const PolyContext& ctx) {
  std::vector<std::pair<std::string, Polyvector>> named;
  for (const Mono& mo : monos_up_to(ctx.vars, ctx.degree_cap)) {
    Polyvector f;
    pv_add_term(f, PvKey{mo, 0}, Rational(1));
    named.emplace_back(dot_free(mono_to_string(mo)), std::move(f));
  }
  for (const Mono& mo : monos_up_to(ctx.vars, std::min(1, ctx.degree_cap))) {
    for (int i = 0; i < ctx.vars; ++i) {
      Polyvector v;
      pv_add_term(v, PvKey{mo, std::uint32_t{1} << i}, Rational(1));
      named.emplace_back(dot_free(mono_to_string(mo)) + "|d" + var_name(i),
                         std::move(v));
    }
  }
  return make_polyvec_model(ctx, std::move(named));
}

}  // namespace hte
