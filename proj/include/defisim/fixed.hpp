#pragma once

#include <compare>
#include <cstdint>
#include <string>
#include <string_view>

#include "defisim/errors.hpp"

namespace defisim {

/// Scaled-integer decimal with 18 fractional digits (1.0 is stored as 10^18).
///
/// Addition and subtraction are exact; multiplication and division truncate
/// toward zero, mirroring on-chain integer math so accrual paths are
/// bit-reproducible. The mantissa is a signed 128-bit integer; fmul/fdiv use
/// 256-bit intermediates. No floating point is involved anywhere in the
/// engine; to_double() exists for the analytics layer only.
class Fixed {
public:
    using rep = __int128;

    static constexpr int frac_digits = 18;
    static constexpr std::int64_t scale = 1'000'000'000'000'000'000LL;

    constexpr Fixed() : v_(0) {}

    static constexpr Fixed from_mantissa(rep v) { return Fixed(v); }

    static constexpr Fixed from_int(std::int64_t n) {
        return Fixed(static_cast<rep>(n) * scale);
    }

    /// Parses "[sign] digits [. digits]" with at most 18 fractional digits.
    /// Round-trips exactly against str(). Throws ParseError on bad syntax,
    /// ArithmeticError if the value does not fit.
    static Fixed parse(std::string_view text);

    /// Nearest representable value. Quantization point for generated prices
    /// and analytics inputs; never used inside the engine itself.
    static Fixed from_double(double x);

    static constexpr Fixed zero() { return Fixed(0); }
    static constexpr Fixed one() { return Fixed(scale); }

    static constexpr rep max_mantissa() {
        return static_cast<rep>((static_cast<unsigned __int128>(1) << 127) - 1);
    }
    static constexpr rep min_mantissa() { return -max_mantissa() - 1; }
    static constexpr Fixed max() { return Fixed(max_mantissa()); }

    constexpr rep mantissa() const { return v_; }

    /// Decimal string; fractional part trimmed of trailing zeros, no exponent.
    std::string str() const;

    double to_double() const;

    constexpr bool is_zero() const { return v_ == 0; }
    constexpr bool is_negative() const { return v_ < 0; }

    friend constexpr bool operator==(Fixed a, Fixed b) { return a.v_ == b.v_; }
    friend constexpr std::strong_ordering operator<=>(Fixed a, Fixed b) {
        return a.v_ < b.v_   ? std::strong_ordering::less
               : a.v_ > b.v_ ? std::strong_ordering::greater
                             : std::strong_ordering::equal;
    }

    friend Fixed operator+(Fixed a, Fixed b) {
        rep r;
        if (__builtin_add_overflow(a.v_, b.v_, &r))
            throw ArithmeticError("fixed-point addition overflow");
        return Fixed(r);
    }
    friend Fixed operator-(Fixed a, Fixed b) {
        rep r;
        if (__builtin_sub_overflow(a.v_, b.v_, &r))
            throw ArithmeticError("fixed-point subtraction overflow");
        return Fixed(r);
    }
    friend Fixed operator-(Fixed a) {
        if (a.v_ == min_mantissa())
            throw ArithmeticError("fixed-point negation overflow");
        return Fixed(-a.v_);
    }
    Fixed& operator+=(Fixed o) { return *this = *this + o; }
    Fixed& operator-=(Fixed o) { return *this = *this - o; }

private:
    constexpr explicit Fixed(rep v) : v_(v) {}
    rep v_;
};

/// Truncating product: floor_toward_zero(a*b) at the 18-digit scale.
Fixed fmul(Fixed a, Fixed b);

/// Truncating quotient: floor_toward_zero(a/b) at the 18-digit scale.
/// Throws ArithmeticError when b is zero.
Fixed fdiv(Fixed a, Fixed b);

inline Fixed fmin(Fixed a, Fixed b) { return a < b ? a : b; }
inline Fixed fmax(Fixed a, Fixed b) { return a < b ? b : a; }
inline Fixed fabs(Fixed a) { return a.is_negative() ? -a : a; }

/// Clamps into [0, 1].
inline Fixed clamp01(Fixed a) {
    return fmin(fmax(a, Fixed::zero()), Fixed::one());
}

} // namespace defisim
