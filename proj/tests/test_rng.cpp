#include "repmart/rng.hpp"

#include <doctest.h>

#include <cmath>
#include <initializer_list>

using namespace repmart;

TEST_CASE("normal_icdf inverts the normal CDF") {
    for (double u : {1e-12, 1e-6, 0.01, 0.1, 0.3, 0.5, 0.7, 0.9, 0.99, 1.0 - 1e-6}) {
        const double x = normal_icdf(u);
        CHECK(normal_cdf(x) == doctest::Approx(u).epsilon(1e-12));
    }
    CHECK(normal_icdf(0.5) == doctest::Approx(0.0).epsilon(1e-14));
    // Known quantile to high precision.
    CHECK(normal_icdf(0.99) == doctest::Approx(2.3263478740408408).epsilon(1e-13));
}

TEST_CASE("substreams are deterministic and path-indexed") {
    Rng a = Rng::substream(42, 7, 1);
    Rng b = Rng::substream(42, 7, 1);
    Rng c = Rng::substream(42, 8, 1);
    bool all_equal = true, any_diff = false;
    for (int i = 0; i < 100; ++i) {
        const double va = a.next_normal();
        all_equal = all_equal && va == b.next_normal();
        any_diff = any_diff || va != c.next_normal();
    }
    CHECK(all_equal);
    CHECK(any_diff);
}

TEST_CASE("normal draws have the right first moments") {
    Rng rng(123);
    const int n = 1000000;
    double sum = 0.0, sum_sq = 0.0;
    for (int i = 0; i < n; ++i) {
        const double z = rng.next_normal();
        sum += z;
        sum_sq += z * z;
    }
    const double mean = sum / n;
    const double var = sum_sq / n - mean * mean;
    CHECK(std::abs(mean) < 0.004);    // 4 standard errors of 1/sqrt(n)
    CHECK(std::abs(var - 1.0) < 0.01); // 4 standard errors of sqrt(2/n)
}
