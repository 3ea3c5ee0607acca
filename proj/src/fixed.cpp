#include "defisim/fixed.hpp"

#include <boost/multiprecision/cpp_int.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace defisim {

namespace {

using boost::multiprecision::int256_t;

Fixed::rep narrow(const int256_t& v, const char* what) {
    if (v > int256_t(Fixed::max_mantissa()) || v < int256_t(Fixed::min_mantissa()))
        throw ArithmeticError(what);
    return static_cast<Fixed::rep>(v);
}

} // namespace

Fixed fmul(Fixed a, Fixed b) {
    int256_t p = int256_t(a.mantissa()) * int256_t(b.mantissa());
    p /= Fixed::scale; // cpp_int division truncates toward zero
    return Fixed::from_mantissa(narrow(p, "fixed-point multiplication overflow"));
}

Fixed fdiv(Fixed a, Fixed b) {
    if (b.is_zero())
        throw ArithmeticError("fixed-point division by zero");
    int256_t n = int256_t(a.mantissa()) * Fixed::scale;
    n /= int256_t(b.mantissa());
    return Fixed::from_mantissa(narrow(n, "fixed-point division overflow"));
}

Fixed Fixed::parse(std::string_view text) {
    const std::string_view original = text;
    auto fail = [&](const char* why) -> ParseError {
        return ParseError("bad decimal '" + std::string(original) + "': " + why);
    };

    bool negative = false;
    if (!text.empty() && (text.front() == '+' || text.front() == '-')) {
        negative = text.front() == '-';
        text.remove_prefix(1);
    }
    if (text.empty())
        throw fail("no digits");

    unsigned __int128 mant = 0;
    const unsigned __int128 limit = static_cast<unsigned __int128>(max_mantissa());
    auto push_digit = [&](char c) {
        if (mant > (limit - (c - '0')) / 10)
            throw ArithmeticError("decimal '" + std::string(original) + "' out of range");
        mant = mant * 10 + static_cast<unsigned>(c - '0');
    };

    std::size_t digits = 0;
    while (!text.empty() && text.front() >= '0' && text.front() <= '9') {
        push_digit(text.front());
        text.remove_prefix(1);
        ++digits;
    }
    int frac = 0;
    if (!text.empty() && text.front() == '.') {
        text.remove_prefix(1);
        while (!text.empty() && text.front() >= '0' && text.front() <= '9') {
            if (++frac > frac_digits)
                throw fail("more than 18 fractional digits");
            push_digit(text.front());
            text.remove_prefix(1);
            ++digits;
        }
    }
    if (!text.empty())
        throw fail("trailing characters");
    if (digits == 0)
        throw fail("no digits");

    for (int i = frac; i < frac_digits; ++i) {
        if (mant > limit / 10)
            throw ArithmeticError("decimal '" + std::string(original) + "' out of range");
        mant *= 10;
    }
    rep v = static_cast<rep>(mant);
    return from_mantissa(negative ? -v : v);
}

std::string Fixed::str() const {
    unsigned __int128 m = v_ < 0 ? static_cast<unsigned __int128>(-(v_ + 1)) + 1
                                 : static_cast<unsigned __int128>(v_);
    const unsigned __int128 s = static_cast<unsigned __int128>(scale);
    unsigned __int128 whole = m / s;
    std::uint64_t frac = static_cast<std::uint64_t>(m % s);

    std::string digits;
    if (whole == 0) {
        digits = "0";
    } else {
        while (whole > 0) {
            digits.push_back(static_cast<char>('0' + static_cast<int>(whole % 10)));
            whole /= 10;
        }
        std::reverse(digits.begin(), digits.end());
    }

    std::string out;
    if (v_ < 0)
        out.push_back('-');
    out += digits;
    if (frac != 0) {
        char buf[19];
        std::snprintf(buf, sizeof(buf), "%018llu", static_cast<unsigned long long>(frac));
        std::string_view f(buf, 18);
        while (f.ends_with('0'))
            f.remove_suffix(1);
        out.push_back('.');
        out += f;
    }
    return out;
}

double Fixed::to_double() const {
    return static_cast<double>(v_) / static_cast<double>(scale);
}

Fixed Fixed::from_double(double x) {
    if (!std::isfinite(x))
        throw ArithmeticError("cannot quantize non-finite value");
    double scaled = x * static_cast<double>(scale);
    if (std::abs(scaled) >= std::ldexp(1.0, 127))
        throw ArithmeticError("value out of fixed-point range");
    return from_mantissa(static_cast<rep>(scaled < 0 ? scaled - 0.5 : scaled + 0.5));
}

} // namespace defisim
