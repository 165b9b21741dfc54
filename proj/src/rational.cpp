#include "phigrad/rational.hpp"

#include <cctype>
#include <cstdlib>
#include <stdexcept>

namespace phigrad {

Rational ratPow(const Rational& a, long n) {
    if (n == 0) return Rational(1);
    bool inv = n < 0;
    unsigned long e = inv ? static_cast<unsigned long>(-(n + 1)) + 1ul
                          : static_cast<unsigned long>(n);
    Rational base = a;
    Rational acc(1);
    while (e > 0) {
        if (e & 1ul) acc *= base;
        base *= base;
        e >>= 1;
    }
    if (inv) {
        if (acc == 0) throw std::domain_error("ratPow: zero to negative power");
        acc = Rational(1) / acc;
    }
    return acc;
}

std::optional<Rational> parseRational(const std::string& text) {
    if (text.empty()) return std::nullopt;
    size_t i = 0;
    bool neg = false;
    if (text[i] == '+' || text[i] == '-') {
        neg = text[i] == '-';
        ++i;
    }
    BigInt num = 0;
    long scale = 0; // decimal digits after the point
    bool sawDigit = false;
    for (; i < text.size() && std::isdigit(static_cast<unsigned char>(text[i])); ++i) {
        num = num * 10 + (text[i] - '0');
        sawDigit = true;
    }
    if (i < text.size() && text[i] == '.') {
        ++i;
        for (; i < text.size() && std::isdigit(static_cast<unsigned char>(text[i])); ++i) {
            num = num * 10 + (text[i] - '0');
            ++scale;
            sawDigit = true;
        }
    }
    if (!sawDigit) return std::nullopt;
    long exp10 = 0;
    if (i < text.size() && (text[i] == 'e' || text[i] == 'E')) {
        ++i;
        bool eneg = false;
        if (i < text.size() && (text[i] == '+' || text[i] == '-')) {
            eneg = text[i] == '-';
            ++i;
        }
        if (i >= text.size() || !std::isdigit(static_cast<unsigned char>(text[i])))
            return std::nullopt;
        long e = 0;
        for (; i < text.size() && std::isdigit(static_cast<unsigned char>(text[i])); ++i)
            e = e * 10 + (text[i] - '0');
        exp10 = eneg ? -e : e;
    }
    if (i != text.size()) return std::nullopt;

    Rational r(num);
    long net = exp10 - scale;
    if (net != 0) r *= ratPow(Rational(10), net);
    if (neg) r = -r;
    return r;
}

std::string ratStr(const Rational& r) {
    if (isInteger(r)) return numerator(r).str();
    return numerator(r).str() + "/" + denominator(r).str();
}

std::string ratPrettyStr(const Rational& r) {
    if (isInteger(r)) return numerator(r).str();
    // denominators of the form 2^a 5^b scale to a power of ten
    BigInt d = denominator(r);
    int twos = 0, fives = 0;
    while (d % 2 == 0) {
        d /= 2;
        ++twos;
    }
    while (d % 5 == 0) {
        d /= 5;
        ++fives;
    }
    if (d != 1 || twos + fives > 40) return ratStr(r);
    int tens = twos > fives ? twos : fives;
    BigInt num = numerator(r);
    for (int i = fives; i < tens; ++i) num *= 5;
    for (int i = twos; i < tens; ++i) num *= 2;
    bool neg = num < 0;
    if (neg) num = -num;
    std::string digits = num.str();
    if (static_cast<int>(digits.size()) <= tens)
        digits.insert(0, static_cast<size_t>(tens) + 1 - digits.size(), '0');
    digits.insert(digits.size() - static_cast<size_t>(tens), ".");
    return (neg ? "-" : "") + digits;
}

} // namespace phigrad
