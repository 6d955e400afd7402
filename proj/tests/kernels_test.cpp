#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "sqpbox/kernels.hpp"

using namespace sqpbox;

namespace {

std::vector<double> random_vec(std::mt19937_64& rng, std::size_t n, double scale = 1.0) {
    std::uniform_real_distribution<double> dist(-scale, scale);
    std::vector<double> v(n);
    for (auto& x : v) x = dist(rng);
    return v;
}

// Sizes chosen to exercise the vector body and every remainder length.
const std::size_t kSizes[] = {0, 1, 2, 3, 4, 5, 7, 8, 9, 12, 16, 31, 64, 67, 1000, 1003};

} // namespace

TEST_CASE("scalar and avx2 backends agree") {
    if (!kern::avx2_supported()) {
        MESSAGE("AVX2 not supported on this CPU, dispatch check only");
        CHECK(kern::active_backend() == kern::Backend::scalar);
        return;
    }
    std::mt19937_64 rng(42);
    for (std::size_t n : kSizes) {
        const auto w = random_vec(rng, n, 2.0);
        const auto x = random_vec(rng, n, 3.0);
        const auto y = random_vec(rng, n, 3.0);
        const double tol = 1e-13 * (static_cast<double>(n) + 1.0);

        REQUIRE(kern::force_backend(kern::Backend::scalar));
        const double dot_s = kern::dot(x.data(), y.data(), n);
        const double dot3_s = kern::dot3(w.data(), x.data(), y.data(), n);
        const double max_s = kern::max_abs(x.data(), n);
        std::vector<double> axpy_s = y;
        kern::axpy(0.37, x.data(), axpy_s.data(), n);
        std::vector<double> axpby_s(n);
        kern::axpby(1.5, x.data(), -0.25, y.data(), axpby_s.data(), n);
        std::vector<double> clamp_s(n);
        kern::clamp(x.data(), -0.5, 0.75, clamp_s.data(), n);

        REQUIRE(kern::force_backend(kern::Backend::avx2));
        CHECK(kern::dot(x.data(), y.data(), n) == doctest::Approx(dot_s).epsilon(tol));
        CHECK(kern::dot3(w.data(), x.data(), y.data(), n) == doctest::Approx(dot3_s).epsilon(tol));
        CHECK(kern::max_abs(x.data(), n) == max_s);
        std::vector<double> axpy_v = y;
        kern::axpy(0.37, x.data(), axpy_v.data(), n);
        std::vector<double> axpby_v(n);
        kern::axpby(1.5, x.data(), -0.25, y.data(), axpby_v.data(), n);
        std::vector<double> clamp_v(n);
        kern::clamp(x.data(), -0.5, 0.75, clamp_v.data(), n);
        // The AVX2 variants fuse multiply-adds, so products round once where
        // the scalar path rounds twice; compare elementwise to a few ulps.
        for (std::size_t i = 0; i < n; ++i) {
            CHECK(axpy_v[i] == doctest::Approx(axpy_s[i]).epsilon(1e-14));
            CHECK(axpby_v[i] == doctest::Approx(axpby_s[i]).epsilon(1e-14));
            CHECK(clamp_v[i] == clamp_s[i]);
        }
    }
    kern::force_backend(kern::avx2_supported() ? kern::Backend::avx2 : kern::Backend::scalar);
}

TEST_CASE("kernels are deterministic per backend") {
    std::mt19937_64 rng(7);
    const auto w = random_vec(rng, 1003);
    const auto x = random_vec(rng, 1003);
    const auto y = random_vec(rng, 1003);
    const double a = kern::dot3(w.data(), x.data(), y.data(), 1003);
    const double b = kern::dot3(w.data(), x.data(), y.data(), 1003);
    CHECK(a == b);
}

TEST_CASE("clamp handles infinite sides") {
    const double x[4] = {-7.0, 0.5, 7.0, -1e300};
    double out[4];
    const double inf = std::numeric_limits<double>::infinity();
    kern::clamp(x, -inf, 1.0, out, 4);
    CHECK(out[0] == -7.0);
    CHECK(out[1] == 0.5);
    CHECK(out[2] == 1.0);
    CHECK(out[3] == -1e300);
    kern::clamp(x, 0.1, inf, out, 4);
    CHECK(out[0] == 0.1);
    CHECK(out[2] == 7.0);
}
