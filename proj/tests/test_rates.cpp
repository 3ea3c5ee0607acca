#include <doctest.h>

#include <cmath>
#include <random>

#include "defisim/rates.hpp"

using namespace defisim;

namespace {

Fixed fx(const char* s) { return Fixed::parse(s); }

LinearRateModel eth_like() { return LinearRateModel(fx("0.02"), fx("0.2"), fx("0.1")); }

KinkedRateModel stable_like() {
    return KinkedRateModel(fx("0"), fx("0.05"), fx("1.0"), fx("0.8"), fx("0"));
}

double margin_double(double alpha, double beta, double gamma, double kink, double psi,
                     double u) {
    double b = u <= kink ? alpha + beta * u : alpha + beta * kink + gamma * (u - kink);
    return b * (1.0 - u * (1.0 - psi));
}

} // namespace

TEST_CASE("model validation enforces the documented invariants") {
    CHECK_THROWS_AS(LinearRateModel(fx("-0.01"), fx("0.2"), fx("0")), DomainError);
    CHECK_THROWS_AS(LinearRateModel(fx("0.02"), fx("0"), fx("0")), DomainError);
    CHECK_THROWS_AS(LinearRateModel(fx("0.02"), fx("0.2"), fx("1")), DomainError);
    CHECK_THROWS_AS(KinkedRateModel(fx("0"), fx("0.1"), fx("0.1"), fx("0.8"), fx("0")),
                    DomainError); // gamma must exceed beta
    CHECK_THROWS_AS(KinkedRateModel(fx("0"), fx("0.1"), fx("0.5"), fx("1"), fx("0")),
                    DomainError);
    CHECK_THROWS_AS(KinkedRateModel(fx("0"), fx("0.1"), fx("0.5"), fx("0"), fx("0")),
                    DomainError);
}

TEST_CASE("utilization outside [0,1] is a domain error") {
    RateModel m = eth_like();
    CHECK_THROWS_AS(borrow_rate(m, fx("-0.01")), DomainError);
    CHECK_THROWS_AS(borrow_rate(m, fx("1.000000000000000001")), DomainError);
    CHECK_NOTHROW(borrow_rate(m, Fixed::one())); // fully utilized is defined
}

TEST_CASE("linear borrow rate: base-rate intercept and slope") {
    RateModel m = LinearRateModel(fx("0.02"), fx("0.2"), fx("0"));
    CHECK(borrow_rate(m, fx("0")) == fx("0.02"));
    CHECK(borrow_rate(m, fx("0.5")) == fx("0.12"));
    CHECK(borrow_rate(m, fx("1")) == fx("0.22"));
}

TEST_CASE("kinked borrow rate: direct substitution above the kink") {
    RateModel m = stable_like();
    CHECK(borrow_rate(m, fx("0.9")) == fx("0.14")); // 0.05*0.8 + 1.0*0.1
    CHECK(borrow_rate(m, fx("0.8")) == fx("0.04"));
    // both branch formulas agree exactly at the kink
    const auto& k = std::get<KinkedRateModel>(m);
    Fixed below = k.alpha + fmul(k.beta, k.u_kink);
    Fixed above = k.alpha + fmul(k.beta, k.u_kink) + fmul(k.gamma, k.u_kink - k.u_kink);
    CHECK(below == above);
    CHECK(borrow_rate(m, k.u_kink) == below);
}

TEST_CASE("supply rates: zero utilization, direct substitution, zero reserve factor") {
    RateModel m = eth_like();
    auto [g0, n0] = supply_rates(m, fx("0"));
    CHECK(g0.is_zero());
    CHECK(n0.is_zero());

    auto [g, n] = supply_rates(m, fx("0.5"));
    CHECK(g == fx("0.06"));
    CHECK(n == fx("0.054"));

    RateModel free = LinearRateModel(fx("0.02"), fx("0.2"), fx("0"));
    std::mt19937_64 rng(3);
    std::uniform_int_distribution<int> grid(0, 1000);
    for (int i = 0; i < 200; ++i) {
        Fixed u = fdiv(Fixed::from_int(grid(rng)), Fixed::from_int(1000));
        auto [gr, nr] = supply_rates(free, u);
        CHECK(gr == nr);
    }
}

TEST_CASE("quoted margin: intercept, substitution, and the expansion oracle") {
    RateModel m = eth_like();
    CHECK(quoted_margin(m, fx("0")) == fx("0.02")); // b = alpha, s_n = 0
    CHECK(quoted_margin(m, fx("0.5")) == fx("0.066")); // 0.12 - 0.054

    // alpha + (beta - alpha(1-psi))u - beta(1-psi)u^2 agrees with b - s_n
    const double alpha = 0.02, beta = 0.2, psi = 0.1;
    for (int i = 0; i <= 1000; ++i) {
        Fixed u = fdiv(Fixed::from_int(i), Fixed::from_int(1000));
        double ud = u.to_double();
        double expansion =
            alpha + (beta - alpha * (1 - psi)) * ud - beta * (1 - psi) * ud * ud;
        CHECK(quoted_margin(m, u).to_double() ==
              doctest::Approx(expansion).epsilon(1e-12));
    }
}

TEST_CASE("quote bundles the definitional identities") {
    RateModel m = stable_like();
    std::mt19937_64 rng(5);
    std::uniform_int_distribution<int> grid(0, 10'000);
    for (int i = 0; i < 500; ++i) {
        Fixed u = fdiv(Fixed::from_int(grid(rng)), Fixed::from_int(10'000));
        RateQuote q = quote(m, u);
        CHECK(q.gross_supply_rate == fmul(q.borrow_rate, u));
        CHECK(q.net_supply_rate ==
              fmul(q.gross_supply_rate, Fixed::one() - reserve_factor_of(m)));
        CHECK(q.quoted_margin == q.borrow_rate - q.net_supply_rate);
    }
}

TEST_CASE("optimal utilization: closed form and boundaries") {
    CHECK(optimal_utilization(LinearRateModel(fx("0.000000000000000001"), fx("0.2"),
                                              fx("0"))) < fx("0.5000000000000001"));
    CHECK(optimal_utilization(LinearRateModel(fx("0.000000000000000001"), fx("0.2"),
                                              fx("0"))) > fx("0.4999999999999"));
    // alpha = 0 would make the margin linear at 0; the symmetric case:
    LinearRateModel sym(fx("0"), fx("1"), fx("0"));
    CHECK(optimal_utilization(sym) == fx("0.5"));
    CHECK(optimal_utilization(eth_like()).str() == "0.505555555555555555");
    // alpha = beta, psi = 0: the unclamped optimum is exactly 0
    CHECK(optimal_utilization(LinearRateModel(fx("0.2"), fx("0.2"), fx("0"))).is_zero());
    // steep base rate: clamped at 0
    CHECK(optimal_utilization(LinearRateModel(fx("3"), fx("0.2"), fx("0"))).is_zero());
}

TEST_CASE("optimal utilization agrees with a 1e-6 grid search of the margin") {
    LinearRateModel m = eth_like();
    const double alpha = 0.02, beta = 0.2, psi = 0.1;
    double best_u = 0, best_m = -1;
    for (int i = 0; i <= 1'000'000; ++i) {
        double u = i * 1e-6;
        double mm = margin_double(alpha, beta, 0, 2.0, psi, u);
        if (mm > best_m) {
            best_m = mm;
            best_u = u;
        }
    }
    CHECK(std::abs(optimal_utilization(m).to_double() - best_u) < 1e-5);
}

TEST_CASE("borrow rate is non-decreasing in utilization") {
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> ur(0.0, 1.0);
    for (int trial = 0; trial < 50; ++trial) {
        double alpha = ur(rng) * 0.05, beta = 0.01 + ur(rng) * 0.5;
        double kink = 0.2 + ur(rng) * 0.7, gamma = beta + 0.01 + ur(rng);
        RateModel models[] = {
            LinearRateModel(Fixed::from_double(alpha), Fixed::from_double(beta), fx("0.1")),
            KinkedRateModel(Fixed::from_double(alpha), Fixed::from_double(beta),
                            Fixed::from_double(gamma), Fixed::from_double(kink), fx("0.1"))};
        for (const RateModel& m : models) {
            Fixed prev = borrow_rate(m, fx("0"));
            for (int i = 1; i <= 100; ++i) {
                Fixed u = fdiv(Fixed::from_int(i), Fixed::from_int(100));
                Fixed b = borrow_rate(m, u);
                CHECK(b >= prev);
                prev = b;
            }
        }
    }
}

TEST_CASE("kinked curve is continuous at the kink within slope * step") {
    KinkedRateModel k = stable_like();
    RateModel m = k;
    Fixed eps = fx("0.000000000001"); // 1e-12
    Fixed at = borrow_rate(m, k.u_kink);
    Fixed lo = borrow_rate(m, k.u_kink - eps);
    Fixed hi = borrow_rate(m, k.u_kink + eps);
    Fixed bound = fmul(k.gamma, fx("0.000000000002"));
    CHECK(fabs(at - lo) < bound);
    CHECK(fabs(hi - at) < bound);
}

TEST_CASE("margin stays positive below full utilization when the rate is positive") {
    std::mt19937_64 rng(15);
    std::uniform_real_distribution<double> ur(0.0, 1.0);
    for (int trial = 0; trial < 200; ++trial) {
        double alpha = ur(rng) * 0.1, beta = 0.01 + ur(rng) * 0.5, psi = ur(rng) * 0.5;
        RateModel m = LinearRateModel(Fixed::from_double(alpha), Fixed::from_double(beta),
                                      Fixed::from_double(psi));
        Fixed u = Fixed::from_double(ur(rng) * 0.999);
        if (borrow_rate(m, u) > Fixed::zero())
            CHECK(quoted_margin(m, u) > Fixed::zero());
    }
}

TEST_CASE("closed-form maximizer dominates the margin on a 1e4 grid") {
    std::mt19937_64 rng(21);
    std::uniform_real_distribution<double> ur(0.0, 1.0);
    for (int trial = 0; trial < 20; ++trial) {
        LinearRateModel m(Fixed::from_double(ur(rng) * 0.05),
                          Fixed::from_double(0.05 + ur(rng) * 0.4),
                          Fixed::from_double(ur(rng) * 0.3));
        Fixed ustar = optimal_utilization(m);
        Fixed best = quoted_margin(m, ustar);
        for (int i = 0; i <= 10'000; ++i) {
            Fixed u = fdiv(Fixed::from_int(i), Fixed::from_int(10'000));
            // within one ulp of the fixed-point scale
            CHECK(best >= quoted_margin(m, u) - Fixed::from_mantissa(1));
        }
    }
}

TEST_CASE("margin curvature: second difference is -2 beta (1-psi) h^2") {
    LinearRateModel lin = eth_like();
    RateModel m = lin;
    const double h = 0.001;
    const double expected = -2.0 * 0.2 * 0.9 * h * h;
    for (int i = 1; i < 999; ++i) {
        double m0 = quoted_margin(m, fdiv(Fixed::from_int(i - 1), Fixed::from_int(1000))).to_double();
        double m1 = quoted_margin(m, fdiv(Fixed::from_int(i), Fixed::from_int(1000))).to_double();
        double m2 = quoted_margin(m, fdiv(Fixed::from_int(i + 1), Fixed::from_int(1000))).to_double();
        CHECK(m2 - 2 * m1 + m0 == doctest::Approx(expected).epsilon(1e-6));
    }
}
