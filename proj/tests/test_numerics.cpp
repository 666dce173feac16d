#include <doctest.h>

#include <cmath>
#include <numeric>

#include "cpr/numerics.hpp"
#include "gradcheck.hpp"

using namespace cpr;

TEST_CASE("normalize handles the 3-4-5 triangle") {
    const Vector out = normalize({3.0, 4.0});
    CHECK(out[0] == doctest::Approx(0.6).epsilon(1e-12));
    CHECK(out[1] == doctest::Approx(0.8).epsilon(1e-12));
}

TEST_CASE("normalize keeps unit vectors") {
    const Vector out = normalize({1.0, 0.0, 0.0});
    CHECK(out[0] == 1.0);
    CHECK(out[1] == 0.0);
    CHECK(out[2] == 0.0);
}

TEST_CASE("normalize rejects zero vectors") {
    CHECK_THROWS_AS(normalize({0.0, 0.0}), ZeroNormError);
}

TEST_CASE("normalize is idempotent") {
    SeededRng rng(11);
    for (int trial = 0; trial < 20; ++trial) {
        Vector v(7);
        for (double& x : v) x = rng.next_normal();
        const Vector once = normalize(v);
        const Vector twice = normalize(once);
        CHECK(std::abs(norm(once) - 1.0) < 1e-12);
        for (std::size_t i = 0; i < v.size(); ++i) {
            CHECK(std::abs(once[i] - twice[i]) < 1e-12);
        }
    }
}

TEST_CASE("cosine similarity basics") {
    CHECK(cosine_similarity({1.0, 0.0}, {1.0, 0.0}) == doctest::Approx(1.0));
    CHECK(cosine_similarity({1.0, 0.0}, {0.0, 1.0}) == doctest::Approx(0.0));
    CHECK(cosine_similarity({1.0, 0.0}, {-1.0, 0.0}) == doctest::Approx(-1.0));
    CHECK_THROWS_AS(cosine_similarity({0.0, 0.0}, {1.0, 0.0}), ZeroNormError);
    CHECK_THROWS_AS(cosine_similarity({1.0, 0.0}, {1.0, 0.0, 0.0}), DimensionMismatchError);
}

TEST_CASE("cosine similarity is scale invariant, symmetric and clamped") {
    SeededRng rng(5);
    for (int trial = 0; trial < 25; ++trial) {
        Vector v(6), u(6);
        for (double& x : v) x = rng.next_normal();
        for (double& x : u) x = rng.next_normal();
        const double c = rng.next_double() * 10.0 + 0.1;
        Vector scaled = v;
        for (double& x : scaled) x *= c;
        const double cs = cosine_similarity(v, u);
        CHECK(std::abs(cs - cosine_similarity(scaled, u)) < 1e-12);
        CHECK(std::abs(cs - cosine_similarity(u, v)) < 1e-12);
        CHECK(cs <= 1.0);
        CHECK(cs >= -1.0);
    }
    // parallel vectors stay exactly inside the closed interval
    CHECK(cosine_similarity({1e-3, 2e-3}, {2e-3, 4e-3}) == 1.0);
}

TEST_CASE("sort_with_permutation matches the documented contract") {
    const SortResult res = sort_with_permutation({0.6, 0.8, 0.0}, SortOrder::Descending);
    CHECK(res.sorted == Vector{0.8, 0.6, 0.0});
    CHECK(res.perm == Permutation{1, 0, 2});
}

TEST_CASE("sort_with_permutation keeps ties stable") {
    const SortResult res = sort_with_permutation({1.0, 1.0, 1.0}, SortOrder::Descending);
    CHECK(res.sorted == Vector{1.0, 1.0, 1.0});
    CHECK(res.perm == Permutation{0, 1, 2});
}

TEST_CASE("applying the permutation to the sorted output reconstructs the input") {
    SeededRng rng(99);
    Vector v(100);
    for (double& x : v) x = rng.next_normal();
    for (const SortOrder order : {SortOrder::Ascending, SortOrder::Descending}) {
        const SortResult res = sort_with_permutation(v, order);
        const Vector back = apply_permutation(res.sorted, res.perm);
        for (std::size_t i = 0; i < v.size(); ++i) {
            CHECK(back[i] == v[i]);
        }
        // permutation is a bijection on {0..J-1}
        Permutation sorted_perm = res.perm;
        std::sort(sorted_perm.begin(), sorted_perm.end());
        for (std::size_t i = 0; i < sorted_perm.size(); ++i) {
            CHECK(sorted_perm[i] == i);
        }
    }
}

TEST_CASE("invert_permutation round-trips") {
    const SortResult res = sort_with_permutation({2.0, 3.0, 1.0, 5.0}, SortOrder::Descending);
    const Permutation inv = invert_permutation(res.perm);
    for (std::size_t s = 0; s < inv.size(); ++s) {
        CHECK(res.sorted[s] == Vector{2.0, 3.0, 1.0, 5.0}[inv[s]]);
    }
}

TEST_CASE("sort rejects non-finite input") {
    CHECK_THROWS_AS(
        sort_with_permutation({1.0, std::nan("")}, SortOrder::Ascending), InvalidParamError);
}

TEST_CASE("seeded rng is deterministic and split streams differ") {
    SeededRng a(123), b(123);
    for (int i = 0; i < 100; ++i) {
        CHECK(a.next_u64() == b.next_u64());
    }
    SeededRng base(7);
    SeededRng s1 = base.split(1);
    SeededRng s2 = base.split(2);
    bool differed = false;
    for (int i = 0; i < 10; ++i) {
        if (s1.next_u64() != s2.next_u64()) differed = true;
    }
    CHECK(differed);
}

TEST_CASE("uniform_int stays inside the inclusive range") {
    SeededRng rng(3);
    for (int i = 0; i < 1000; ++i) {
        const auto x = rng.uniform_int(1, 10);
        CHECK(x >= 1);
        CHECK(x <= 10);
    }
    CHECK_THROWS_AS(rng.uniform_int(4, 3), InvalidParamError);
}

TEST_CASE("normal draws have sane moments") {
    SeededRng rng(17);
    double sum = 0.0, sq = 0.0;
    const int n = 20000;
    for (int i = 0; i < n; ++i) {
        const double z = rng.next_normal();
        sum += z;
        sq += z * z;
    }
    CHECK(std::abs(sum / n) < 0.03);
    CHECK(std::abs(sq / n - 1.0) < 0.05);
}

TEST_CASE("normalize_pullback agrees with finite differences") {
    SeededRng rng(21);
    Vector v(5), d_unit(5);
    for (double& x : v) x = rng.next_normal() + 2.0;
    for (double& x : d_unit) x = rng.next_normal();
    const Vector analytic = normalize_pullback(v, d_unit);
    std::vector<double*> params;
    for (double& x : v) params.push_back(&x);
    const auto eval = [&]() { return dot(normalize(v), d_unit); };
    CHECK(testutil::max_grad_rel_err(params, analytic, eval) < 1e-6);
}

TEST_CASE("matmul variants agree on a known product") {
    Matrix a(2, 3);
    a.set_row(0, {1.0, 2.0, 3.0});
    a.set_row(1, {4.0, 5.0, 6.0});
    Matrix b(3, 2);
    b.set_row(0, {7.0, 8.0});
    b.set_row(1, {9.0, 10.0});
    b.set_row(2, {11.0, 12.0});
    const Matrix c = matmul(a, b);
    CHECK(c(0, 0) == 58.0);
    CHECK(c(0, 1) == 64.0);
    CHECK(c(1, 0) == 139.0);
    CHECK(c(1, 1) == 154.0);

    Matrix bt(2, 3);
    bt.set_row(0, {7.0, 9.0, 11.0});
    bt.set_row(1, {8.0, 10.0, 12.0});
    const Matrix c2 = matmul_transpose_b(a, bt);
    for (std::size_t i = 0; i < 2; ++i) {
        for (std::size_t j = 0; j < 2; ++j) {
            CHECK(c2(i, j) == c(i, j));
        }
    }

    Matrix at(3, 2);
    at.set_row(0, {1.0, 4.0});
    at.set_row(1, {2.0, 5.0});
    at.set_row(2, {3.0, 6.0});
    const Matrix c3 = matmul_transpose_a(at, b);
    for (std::size_t i = 0; i < 2; ++i) {
        for (std::size_t j = 0; j < 2; ++j) {
            CHECK(c3(i, j) == c(i, j));
        }
    }
}
