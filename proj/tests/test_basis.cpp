#include <cmath>

#include "doctest.h"
#include "tvssm/basis.hpp"
#include "tvssm/errors.hpp"

using namespace tvssm;

TEST_SUITE("basis") {

TEST_CASE("constant function is 1 everywhere") {
    const auto c = BasisFunction::constant();
    for (double t : {0.0, 1.0, 17.5, 127.0, 1e6}) CHECK(c(t) == 1.0);
}

TEST_CASE("gaussian closed form") {
    const auto g = BasisFunction::gaussian(50.0, 10.0);
    CHECK(g(50.0) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(g(60.0) == doctest::Approx(std::exp(-0.5)).epsilon(1e-15));
    CHECK(g(60.0) == doctest::Approx(0.60653).epsilon(1e-5));
    CHECK(g(40.0) == doctest::Approx(g(60.0)).epsilon(1e-15));
    CHECK_THROWS_AS(BasisFunction::gaussian(0.0, 0.0), InvalidArgument);
}

TEST_CASE("K=1 dictionary holds only the constant") {
    Rng rng(3);
    const auto d = sample_dictionary(1, 128, rng);
    REQUIRE(d.size() == 1);
    CHECK(d[0].kind == BasisKind::Constant);
}

TEST_CASE("K=4, T=128 widths lie in (8, 64)") {
    const auto r = gaussian_sigma_range(4, 128);
    CHECK(r.lo == doctest::Approx(8.0));
    CHECK(r.hi == doctest::Approx(64.0));
    for (std::uint64_t seed = 0; seed < 200; ++seed) {
        Rng rng(seed);
        const auto d = sample_dictionary(4, 128, rng);
        REQUIRE(d.size() == 4);
        CHECK(d[0].kind == BasisKind::Constant);
        for (std::size_t k = 1; k < 4; ++k) {
            CHECK(d[k].kind == BasisKind::Gaussian);
            CHECK(d[k].sigma > 8.0);
            CHECK(d[k].sigma < 64.0);
            CHECK(d[k].mu >= 0.0);
            CHECK(d[k].mu < 128.0);
        }
    }
}

TEST_CASE("same seed gives the same dictionary") {
    Rng a(99), b(99);
    CHECK(sample_dictionary(6, 256, a) == sample_dictionary(6, 256, b));
}

TEST_CASE("grid of a constant dictionary") {
    const auto g = BasisDictionary::constant_only(5).evaluate_grid(5);
    REQUIRE(g.size == 1);
    REQUIRE(g.steps == 5);
    for (std::size_t t = 0; t < 5; ++t) CHECK(g(0, t) == 1.0);
}

TEST_CASE("grid columns agree with evaluate_at and stay bounded") {
    Rng rng(11);
    const auto d = sample_dictionary(8, 128, rng);
    const auto g = d.evaluate_grid(128);
    for (std::size_t t = 0; t < 128; ++t) {
        const auto col = d.evaluate_at(t);
        REQUIRE(col.size() == d.size());
        for (std::size_t k = 0; k < d.size(); ++k) {
            CHECK(g(k, t) == col[k]);
            CHECK(std::abs(g(k, t)) <= 1.0);
        }
    }
}

}  // TEST_SUITE
