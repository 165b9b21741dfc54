#ifndef PHIGRAD_RATIONAL_HPP
#define PHIGRAD_RATIONAL_HPP

#include <boost/multiprecision/cpp_int.hpp>

#include <optional>
#include <string>

namespace phigrad {

// Exact rational arithmetic. Literals are kept exact from the parser all the
// way through rewriting; lowering to binary64 happens only at evaluation.
using Rational = boost::multiprecision::cpp_rational;
using BigInt = boost::multiprecision::cpp_int;

inline double toDouble(const Rational& r) { return static_cast<double>(r); }

inline bool isInteger(const Rational& r) { return denominator(r) == 1; }

// a^n for integer n; n < 0 requires a != 0.
Rational ratPow(const Rational& a, long n);

// Parses "123", "-4.5", "2.", ".25", "1e3", "2.5e-2" exactly.
std::optional<Rational> parseRational(const std::string& text);

// Shortest exact form: integers as-is, otherwise "num/den".
std::string ratStr(const Rational& r);

// Decimal-looking form when the denominator is a power of 10 (so "0.003636"
// survives a print/parse round trip), otherwise same as ratStr.
std::string ratPrettyStr(const Rational& r);

} // namespace phigrad

#endif // PHIGRAD_RATIONAL_HPP
