#include "htengine/graded.hpp"

#include <algorithm>
#include <set>

namespace hte {

Mat zero_mat(Eigen::Index rows, Eigen::Index cols) {
  return Mat::Constant(rows, cols, Rational(0));
}

Mat identity_mat(Eigen::Index n) {
  Mat m = zero_mat(n, n);
  for (Eigen::Index i = 0; i < n; ++i) m(i, i) = Rational(1);
  return m;
}

GradedSpace::GradedSpace(std::map<int, std::vector<std::string>> components,
                         int window_lo, int window_hi)
    : lo_(window_lo), hi_(window_hi) {
  if (lo_ > hi_ && !components.empty()) {
    throw InvalidInput("GradedSpace: empty window with nonempty components");
  }
  for (auto& [deg, labels] : components) {
    if (labels.empty()) continue;
    if (deg < lo_ || deg > hi_) {
      throw InvalidInput("GradedSpace: degree " + std::to_string(deg) +
                         " outside window [" + std::to_string(lo_) + "," +
                         std::to_string(hi_) + "]");
    }
    std::sort(labels.begin(), labels.end());
    for (std::size_t i = 1; i < labels.size(); ++i) {
      if (labels[i] == labels[i - 1]) {
        throw InvalidInput("GradedSpace: duplicate label '" + labels[i] +
                           "' in degree " + std::to_string(deg));
      }
    }
    auto& idx = index_[deg];
    for (std::size_t i = 0; i < labels.size(); ++i) idx[labels[i]] = static_cast<int>(i);
    components_[deg] = std::move(labels);
  }
}

GradedSpace GradedSpace::infer(std::map<int, std::vector<std::string>> components) {
  int lo = 0, hi = -1;
  bool any = false;
  for (const auto& [deg, labels] : components) {
    if (labels.empty()) continue;
    if (!any) {
      lo = hi = deg;
      any = true;
    } else {
      lo = std::min(lo, deg);
      hi = std::max(hi, deg);
    }
  }
  if (!any) return GradedSpace();
  return GradedSpace(std::move(components), lo, hi);
}

int GradedSpace::dim(int degree) const {
  auto it = components_.find(degree);
  return it == components_.end() ? 0 : static_cast<int>(it->second.size());
}

int GradedSpace::total_dim() const {
  int n = 0;
  for (const auto& [deg, labels] : components_) n += static_cast<int>(labels.size());
  return n;
}

std::vector<int> GradedSpace::degrees() const {
  std::vector<int> out;
  for (const auto& [deg, labels] : components_) {
    if (!labels.empty()) out.push_back(deg);
  }
  return out;
}

const std::vector<std::string>& GradedSpace::labels(int degree) const {
  static const std::vector<std::string> kEmpty;
  auto it = components_.find(degree);
  return it == components_.end() ? kEmpty : it->second;
}

const std::string& GradedSpace::label(int degree, int index) const {
  const auto& ls = labels(degree);
  if (index < 0 || index >= static_cast<int>(ls.size())) {
    throw InvalidInput("GradedSpace: basis index " + std::to_string(index) +
                       " out of range in degree " + std::to_string(degree));
  }
  return ls[static_cast<std::size_t>(index)];
}

int GradedSpace::index_of(int degree, const std::string& label) const {
  auto it = index_.find(degree);
  if (it == index_.end()) return -1;
  auto jt = it->second.find(label);
  return jt == it->second.end() ? -1 : jt->second;
}

GradedSpace shift_space(const GradedSpace& v, int k) {
  std::map<int, std::vector<std::string>> comps;
  for (int deg : v.degrees()) comps[deg - k] = v.labels(deg);
  if (comps.empty()) return GradedSpace();
  return GradedSpace(std::move(comps), v.window_lo() - k, v.window_hi() - k);
}

void GradedVec::add(int degree, int index, const Rational& c) {
  if (c.is_zero()) return;
  auto key = std::make_pair(degree, index);
  auto it = entries_.find(key);
  if (it == entries_.end()) {
    entries_.emplace(key, c);
  } else {
    it->second += c;
    if (it->second.is_zero()) entries_.erase(it);
  }
}

void GradedVec::set(int degree, int index, const Rational& c) {
  auto key = std::make_pair(degree, index);
  if (c.is_zero()) {
    entries_.erase(key);
  } else {
    entries_[key] = c;
  }
}

Rational GradedVec::coeff(int degree, int index) const {
  auto it = entries_.find(std::make_pair(degree, index));
  return it == entries_.end() ? Rational(0) : it->second;
}

GradedVec& GradedVec::operator+=(const GradedVec& o) {
  for (const auto& [k, c] : o.entries_) add(k.first, k.second, c);
  return *this;
}

GradedVec& GradedVec::operator-=(const GradedVec& o) {
  for (const auto& [k, c] : o.entries_) add(k.first, k.second, -c);
  return *this;
}

GradedVec& GradedVec::operator*=(const Rational& c) {
  if (c.is_zero()) {
    entries_.clear();
    return *this;
  }
  for (auto& [k, v] : entries_) v *= c;
  return *this;
}

GradedMap::GradedMap(SpacePtr source, SpacePtr target, int shift)
    : src_(std::move(source)), dst_(std::move(target)), shift_(shift) {
  if (!src_ || !dst_) throw InvalidInput("GradedMap: null space");
}

GradedMap GradedMap::identity(const SpacePtr& space) {
  GradedMap m(space, space, 0);
  for (int deg : space->degrees()) {
    m.blocks_[deg] = identity_mat(space->dim(deg));
  }
  return m;
}

void GradedMap::check_block_shape(int source_degree, const Mat& m) const {
  const int rows = dst_->dim(source_degree + shift_);
  const int cols = src_->dim(source_degree);
  if (m.rows() != rows || m.cols() != cols) {
    throw InvalidInput("GradedMap: block at source degree " +
                       std::to_string(source_degree) + " has shape " +
                       std::to_string(m.rows()) + "x" + std::to_string(m.cols()) +
                       ", expected " + std::to_string(rows) + "x" +
                       std::to_string(cols));
  }
}

Mat GradedMap::block(int source_degree) const {
  auto it = blocks_.find(source_degree);
  if (it != blocks_.end()) return it->second;
  return zero_mat(dst_->dim(source_degree + shift_), src_->dim(source_degree));
}

namespace {
bool mat_is_zero(const Mat& m) {
  for (Eigen::Index j = 0; j < m.cols(); ++j) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      if (!m(i, j).is_zero()) return false;
    }
  }
  return true;
}
}  // namespace

GradedMap GradedMap::with_block(int source_degree, Mat m) const {
  check_block_shape(source_degree, m);
  GradedMap out = *this;
  if (mat_is_zero(m)) {
    out.blocks_.erase(source_degree);
  } else {
    out.blocks_[source_degree] = std::move(m);
  }
  return out;
}

GradedMap GradedMap::with_entry(int source_degree, int target_index, int source_index,
                                const Rational& c) const {
  Mat m = block(source_degree);
  if (target_index < 0 || target_index >= m.rows() || source_index < 0 ||
      source_index >= m.cols()) {
    throw InvalidInput("GradedMap: entry out of range");
  }
  m(target_index, source_index) = c;
  return with_block(source_degree, std::move(m));
}

GradedVec GradedMap::apply(const GradedVec& x) const {
  GradedVec out;
  for (const auto& [k, c] : x.entries()) {
    const auto [deg, idx] = k;
    auto it = blocks_.find(deg);
    if (it == blocks_.end()) continue;
    const Mat& m = it->second;
    if (idx < 0 || idx >= m.cols()) {
      throw InvalidInput("GradedMap::apply: index out of range for source");
    }
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      if (!m(r, idx).is_zero()) out.add(deg + shift_, static_cast<int>(r), c * m(r, idx));
    }
  }
  return out;
}

GradedVec GradedMap::apply_basis(int degree, int index) const {
  GradedVec x;
  x.set(degree, index, Rational(1));
  return apply(x);
}

bool GradedMap::is_zero() const {
  for (const auto& [deg, m] : blocks_) {
    if (!mat_is_zero(m)) return false;
  }
  return true;
}

GradedMap operator+(const GradedMap& a, const GradedMap& b) {
  if (*a.src_ != *b.src_ || *a.dst_ != *b.dst_ || a.shift_ != b.shift_) {
    throw InvalidInput("GradedMap: incompatible operands for +");
  }
  GradedMap out(a.src_, a.dst_, a.shift_);
  std::set<int> degs;
  for (const auto& [d, m] : a.blocks_) degs.insert(d);
  for (const auto& [d, m] : b.blocks_) degs.insert(d);
  for (int d : degs) {
    Mat m = a.block(d) + b.block(d);
    if (!mat_is_zero(m)) out.blocks_[d] = std::move(m);
  }
  return out;
}

GradedMap operator-(const GradedMap& a, const GradedMap& b) {
  return a + (Rational(-1) * b);
}

GradedMap operator*(const Rational& c, const GradedMap& a) {
  GradedMap out(a.src_, a.dst_, a.shift_);
  if (c.is_zero()) return out;
  for (const auto& [d, m] : a.blocks_) out.blocks_[d] = (m * c).eval();
  return out;
}

GradedMap compose(const GradedMap& a, const GradedMap& b) {
  if (*a.src_ != *b.dst_) {
    throw InvalidInput("GradedMap: compose source/target mismatch");
  }
  GradedMap out(b.src_, a.dst_, a.shift_ + b.shift_);
  for (const auto& [d, mb] : b.blocks_) {
    auto it = a.blocks_.find(d + b.shift_);
    if (it == a.blocks_.end()) continue;
    Mat m = it->second * mb;
    if (!mat_is_zero(m)) out.blocks_[d] = std::move(m);
  }
  return out;
}

bool operator==(const GradedMap& a, const GradedMap& b) {
  if (*a.src_ != *b.src_ || *a.dst_ != *b.dst_ || a.shift_ != b.shift_) return false;
  std::set<int> degs;
  for (const auto& [d, m] : a.blocks_) degs.insert(d);
  for (const auto& [d, m] : b.blocks_) degs.insert(d);
  for (int d : degs) {
    if (a.block(d) != b.block(d)) return false;
  }
  return true;
}

GradedMap inverse(const GradedMap& m) {
  const GradedSpace& src = *m.source();
  const GradedSpace& dst = *m.target();
  // Every nonempty degree on either side must be matched by an invertible
  // block; a dimension mismatch already rules out a two-sided inverse.
  for (int d : src.degrees()) {
    if (dst.dim(d + m.shift()) != src.dim(d)) {
      throw SingularLinearPart("inverse: dimension mismatch at source degree " +
                               std::to_string(d));
    }
  }
  for (int d : dst.degrees()) {
    if (src.dim(d - m.shift()) != dst.dim(d)) {
      throw SingularLinearPart("inverse: dimension mismatch at target degree " +
                               std::to_string(d));
    }
  }
  GradedMap out(m.target(), m.source(), -m.shift());
  for (int d : src.degrees()) {
    const Mat block = m.block(d);
    Eigen::FullPivLU<Mat> lu(block);
    if (!lu.isInvertible()) {
      throw SingularLinearPart("inverse: singular block at source degree " +
                               std::to_string(d));
    }
    out = out.with_block(d + m.shift(), lu.inverse());
  }
  return out;
}

int koszul_sign(const std::vector<int>& sigma, const std::vector<int>& degrees) {
  const std::size_t n = sigma.size();
  if (degrees.size() != n) throw InvalidInput("koszul_sign: size mismatch");
  std::vector<bool> seen(n, false);
  for (int s : sigma) {
    if (s < 0 || s >= static_cast<int>(n) || seen[static_cast<std::size_t>(s)]) {
      throw InvalidInput("koszul_sign: not a permutation");
    }
    seen[static_cast<std::size_t>(s)] = true;
  }
  int sign = 1;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      if (sigma[i] > sigma[j]) {
        const int d1 = degrees[static_cast<std::size_t>(sigma[i])];
        const int d2 = degrees[static_cast<std::size_t>(sigma[j])];
        if ((d1 % 2 != 0) && (d2 % 2 != 0)) sign = -sign;
      }
    }
  }
  return sign;
}

std::vector<int> compose_perm(const std::vector<int>& sigma, const std::vector<int>& tau) {
  if (sigma.size() != tau.size()) throw InvalidInput("compose_perm: size mismatch");
  std::vector<int> out(tau.size());
  for (std::size_t i = 0; i < tau.size(); ++i) {
    out[i] = sigma[static_cast<std::size_t>(tau[i])];
  }
  return out;
}

}  // namespace hte
