#include "htengine/rational.hpp"

#include <cctype>
#include <ostream>

namespace hte {

namespace {

bool is_decimal(const std::string& s) {
  if (s.empty()) return false;
  std::size_t i = (s[0] == '-' || s[0] == '+') ? 1 : 0;
  if (i == s.size()) return false;
  for (; i < s.size(); ++i) {
    if (!std::isdigit(static_cast<unsigned char>(s[i]))) return false;
  }
  return true;
}

}  // namespace

Rational Rational::parse(const std::string& s) {
  const auto slash = s.find('/');
  if (slash == std::string::npos) {
    if (!is_decimal(s)) throw InvalidInput("Rational: cannot parse '" + s + "'");
    return Rational(mpq_class(mpz_class(s, 10)));
  }
  const std::string num = s.substr(0, slash);
  const std::string den = s.substr(slash + 1);
  if (!is_decimal(num) || !is_decimal(den)) {
    throw InvalidInput("Rational: cannot parse '" + s + "'");
  }
  const mpz_class d(den, 10);
  if (d == 0) throw InvalidInput("Rational: zero denominator in '" + s + "'");
  mpq_class q(mpz_class(num, 10), d);
  q.canonicalize();
  return Rational(q);
}

std::string Rational::str() const {
  if (v_.get_den() == 1) return v_.get_num().get_str();
  return v_.get_num().get_str() + "/" + v_.get_den().get_str();
}

std::ostream& operator<<(std::ostream& os, const Rational& a) { return os << a.str(); }

}  // namespace hte
