#include <doctest.h>

#include <cmath>

#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>
#include <boost/math/special_functions/beta.hpp>

#include "fewmeta/distributions.hpp"

using namespace fewmeta;

TEST_CASE("t_quantile reference values") {
    for (int df : {1, 2, 3, 7, 30, 1000}) CHECK(t_quantile(df, 0.5) == 0.0);
    CHECK(std::abs(t_quantile(1, 0.975) - 12.706) < 1e-3);
    CHECK(std::abs(t_quantile(100000, 0.975) - 1.960) < 2e-3);
    // Closed forms: df 1 is Cauchy, df 2 has t = (2p - 1) / sqrt(2p(1 - p)).
    for (double p : {0.6, 0.9, 0.975, 0.995, 0.02}) {
        CHECK(t_quantile(1, p) == doctest::Approx(std::tan(M_PI * (p - 0.5))).epsilon(1e-12));
        CHECK(t_quantile(2, p) == doctest::Approx((2 * p - 1) / std::sqrt(2 * p * (1 - p))).epsilon(1e-12));
    }
    CHECK_THROWS(t_quantile(0, 0.9));
    CHECK_THROWS(t_quantile(3, 0.0));
    CHECK_THROWS(t_quantile(3, 1.0));
}

TEST_CASE("t_quantile against Boost.Math") {
    for (int df : {1, 2, 3, 4, 5, 9, 11, 20, 50, 200}) {
        const boost::math::students_t dist(df);
        for (double p : {0.001, 0.025, 0.1, 0.3, 0.55, 0.8, 0.95, 0.975, 0.995, 0.9995}) {
            const double ref = boost::math::quantile(dist, p);
            CHECK(std::abs(t_quantile(df, p) - ref) < 1e-10 * std::max(1.0, std::abs(ref)));
        }
    }
}

TEST_CASE("t cdf and tail against Boost.Math") {
    for (double df : {1.0, 2.0, 3.0, 11.0, 60.0}) {
        const boost::math::students_t dist(df);
        for (double t : {-30.0, -2.5, -0.3, 0.0, 0.7, 2.0, 12.7, 80.0}) {
            CHECK(student_t_cdf(t, df) == doctest::Approx(boost::math::cdf(dist, t)).epsilon(1e-12));
            CHECK(student_t_upper_tail(t, df) ==
                  doctest::Approx(boost::math::cdf(boost::math::complement(dist, t))).epsilon(1e-11));
        }
    }
}

TEST_CASE("normal quantile and cdf against Boost.Math") {
    const boost::math::normal n;
    for (double p : {1e-10, 1e-4, 0.025, 0.3, 0.5, 0.7, 0.975, 0.9999}) {
        CHECK(normal_quantile(p) == doctest::Approx(boost::math::quantile(n, p)).epsilon(1e-14));
    }
    for (double z : {-8.0, -1.96, 0.0, 0.4, 3.0}) {
        CHECK(normal_cdf(z) == doctest::Approx(boost::math::cdf(n, z)).epsilon(1e-14));
    }
}

TEST_CASE("incomplete beta against Boost.Math") {
    for (double a : {0.5, 1.0, 2.5, 30.0}) {
        for (double b : {0.5, 1.0, 4.0, 100.0}) {
            for (double x : {0.0, 1e-6, 0.2, 0.5, 0.9, 1.0}) {
                CHECK(incomplete_beta(a, b, x) == doctest::Approx(boost::math::ibeta(a, b, x)).epsilon(1e-12));
            }
        }
    }
}
