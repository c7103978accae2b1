#pragma once

#include <Eigen/Dense>

#include <map>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "htengine/errors.hpp"
#include "htengine/rational.hpp"

namespace hte {

using Mat = Eigen::Matrix<Rational, Eigen::Dynamic, Eigen::Dynamic>;
using Vec = Eigen::Matrix<Rational, Eigen::Dynamic, 1>;

Mat zero_mat(Eigen::Index rows, Eigen::Index cols);
Mat identity_mat(Eigen::Index n);

// Finite-dimensional Z-graded vector space over the exact rationals.  Each
// degree carries an ordered list of basis labels; labels are sorted
// lexicographically at construction so every derived enumeration is
// deterministic.  Values are immutable after construction.
class GradedSpace {
 public:
  GradedSpace() : lo_(0), hi_(-1) {}  // the zero space with empty window

  // `components` maps degree -> basis labels (sorted internally; duplicates
  // within one degree are rejected).  The window must contain every nonempty
  // degree; degrees outside it are empty by definition.
  GradedSpace(std::map<int, std::vector<std::string>> components, int window_lo,
              int window_hi);

  // Window inferred as the minimal one covering all nonempty degrees.
  static GradedSpace infer(std::map<int, std::vector<std::string>> components);

  int window_lo() const { return lo_; }
  int window_hi() const { return hi_; }

  int dim(int degree) const;
  int total_dim() const;
  bool empty() const { return total_dim() == 0; }

  // Degrees with at least one basis element, ascending.
  std::vector<int> degrees() const;

  const std::vector<std::string>& labels(int degree) const;
  const std::string& label(int degree, int index) const;
  // Index of `label` in `degree`, or -1 when absent.
  int index_of(int degree, const std::string& label) const;

  friend bool operator==(const GradedSpace& a, const GradedSpace& b) {
    return a.lo_ == b.lo_ && a.hi_ == b.hi_ && a.components_ == b.components_;
  }
  friend bool operator!=(const GradedSpace& a, const GradedSpace& b) { return !(a == b); }

 private:
  std::map<int, std::vector<std::string>> components_;
  std::map<int, std::map<std::string, int>> index_;
  int lo_, hi_;
};

using SpacePtr = std::shared_ptr<const GradedSpace>;

inline SpacePtr make_space(std::map<int, std::vector<std::string>> components,
                           int window_lo, int window_hi) {
  return std::make_shared<GradedSpace>(std::move(components), window_lo, window_hi);
}

// Degree shift: shift(V, k) has component at degree ℓ equal to V at degree ℓ+k
// (labels are reused unchanged).
GradedSpace shift_space(const GradedSpace& v, int k);

// Sparse element of a graded space: (degree, basis index) -> coefficient.
// Zero coefficients are erased eagerly so equality is structural.
class GradedVec {
 public:
  GradedVec() = default;

  void add(int degree, int index, const Rational& c);
  void set(int degree, int index, const Rational& c);
  Rational coeff(int degree, int index) const;

  bool is_zero() const { return entries_.empty(); }
  void clear() { entries_.clear(); }

  GradedVec& operator+=(const GradedVec& o);
  GradedVec& operator-=(const GradedVec& o);
  GradedVec& operator*=(const Rational& c);
  friend GradedVec operator+(GradedVec a, const GradedVec& b) { return a += b; }
  friend GradedVec operator-(GradedVec a, const GradedVec& b) { return a -= b; }
  friend GradedVec operator*(const Rational& c, GradedVec v) { return v *= c; }

  friend bool operator==(const GradedVec& a, const GradedVec& b) {
    return a.entries_ == b.entries_;
  }
  friend bool operator!=(const GradedVec& a, const GradedVec& b) { return !(a == b); }

  const std::map<std::pair<int, int>, Rational>& entries() const { return entries_; }

 private:
  std::map<std::pair<int, int>, Rational> entries_;
};

// Degree-homogeneous linear map between graded spaces.  A map of shift d sends
// degree ℓ of the source to degree ℓ+d of the target; it is stored as one
// dense block per source degree.  Absent blocks are zero.  Values are
// immutable: all mutators return new maps.
class GradedMap {
 public:
  GradedMap() : shift_(0) {}
  GradedMap(SpacePtr source, SpacePtr target, int shift);

  static GradedMap identity(const SpacePtr& space);
  static GradedMap zero(SpacePtr source, SpacePtr target, int shift) {
    return GradedMap(std::move(source), std::move(target), shift);
  }

  const SpacePtr& source() const { return src_; }
  const SpacePtr& target() const { return dst_; }
  int shift() const { return shift_; }

  // Dense block acting on source degree ℓ; shape dim_target(ℓ+shift) × dim_source(ℓ).
  Mat block(int source_degree) const;
  bool has_block(int source_degree) const { return blocks_.count(source_degree) > 0; }
  const std::map<int, Mat>& blocks() const { return blocks_; }

  // Returns a copy with the given block installed (shape-checked; an
  // all-zero block is dropped).
  GradedMap with_block(int source_degree, Mat m) const;
  // Returns a copy with entry (target index t, source index s) on the block at
  // `source_degree` set to c.
  GradedMap with_entry(int source_degree, int target_index, int source_index,
                       const Rational& c) const;

  GradedVec apply(const GradedVec& x) const;
  // Applies to the basis vector (degree, index) of the source.
  GradedVec apply_basis(int degree, int index) const;

  bool is_zero() const;

  friend GradedMap operator+(const GradedMap& a, const GradedMap& b);
  friend GradedMap operator-(const GradedMap& a, const GradedMap& b);
  friend GradedMap operator*(const Rational& c, const GradedMap& a);
  // Composition a ∘ b (apply b first); shifts add.
  friend GradedMap compose(const GradedMap& a, const GradedMap& b);

  friend bool operator==(const GradedMap& a, const GradedMap& b);
  friend bool operator!=(const GradedMap& a, const GradedMap& b) { return !(a == b); }

 private:
  void check_block_shape(int source_degree, const Mat& m) const;
  SpacePtr src_, dst_;
  int shift_;
  std::map<int, Mat> blocks_;  // keyed by source degree; zero blocks absent
};

// Exact two-sided inverse of a degreewise-invertible map (shift may be
// nonzero; the inverse has the opposite shift).  Throws SingularLinearPart
// when some block is not square or not invertible over the rationals.
GradedMap inverse(const GradedMap& m);

// Sign of the graded permutation that reorders homogeneous letters of the
// given degrees by sigma.  `sigma[i]` is the (0-based) index, into `degrees`,
// of the letter at position i of the permuted word; the sign is the product of
// (-1)^(deg_a · deg_b) over pairs placed out of their original order.
int koszul_sign(const std::vector<int>& sigma, const std::vector<int>& degrees);

// Composition (sigma ∘ tau)[i] = sigma[tau[i]]: permuting a word by sigma and
// then permuting the result by tau yields the word permuted by sigma ∘ tau,
// and the signs multiply as
//   koszul_sign(sigma ∘ tau, deg) =
//     koszul_sign(tau, deg permuted by sigma) · koszul_sign(sigma, deg).
std::vector<int> compose_perm(const std::vector<int>& sigma, const std::vector<int>& tau);

}  // namespace hte
