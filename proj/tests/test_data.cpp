#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>

#include "cpr/data.hpp"

using namespace cpr;

namespace {

// nearest-class-mean probe, linear decision boundaries
double nearest_mean_accuracy(const Dataset& data) {
    Matrix means(data.num_classes, data.input_dim());
    std::vector<std::size_t> counts(data.num_classes, 0);
    for (std::size_t i = 0; i < data.size(); ++i) {
        const auto k = static_cast<std::size_t>(data.labels[i]);
        counts[k]++;
        for (std::size_t c = 0; c < data.input_dim(); ++c) {
            means(k, c) += data.inputs(i, c);
        }
    }
    for (std::size_t k = 0; k < data.num_classes; ++k) {
        for (std::size_t c = 0; c < data.input_dim(); ++c) {
            means(k, c) /= static_cast<double>(counts[k]);
        }
    }
    std::size_t correct = 0;
    for (std::size_t i = 0; i < data.size(); ++i) {
        double best = 1e300;
        std::size_t arg = 0;
        for (std::size_t k = 0; k < data.num_classes; ++k) {
            double dist = 0.0;
            for (std::size_t c = 0; c < data.input_dim(); ++c) {
                const double d = data.inputs(i, c) - means(k, c);
                dist += d * d;
            }
            if (dist < best) {
                best = dist;
                arg = k;
            }
        }
        if (static_cast<int>(arg) == data.labels[i]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(data.size());
}

}  // namespace

TEST_CASE("zero spread collapses every sample onto its class mean") {
    const Dataset data = generate_blobs(4, 6, 10, 0.0, 0.0, 123);
    // all samples of a class identical
    for (std::size_t k = 0; k < 4; ++k) {
        Vector first;
        for (std::size_t i = 0; i < data.size(); ++i) {
            if (data.labels[i] != static_cast<int>(k)) continue;
            if (first.empty()) {
                first = data.inputs.row(i);
            } else {
                CHECK(data.inputs.row(i) == first);
            }
        }
    }
    CHECK(nearest_mean_accuracy(data) == 1.0);
}

TEST_CASE("blob generation is deterministic per seed") {
    const Dataset a = generate_blobs(3, 5, 7, 0.4, 0.2, 99);
    const Dataset b = generate_blobs(3, 5, 7, 0.4, 0.2, 99);
    CHECK(a.inputs.data() == b.inputs.data());
    CHECK(a.labels == b.labels);
    const Dataset c = generate_blobs(3, 5, 7, 0.4, 0.2, 100);
    CHECK(a.inputs.data() != c.inputs.data());
    CHECK_THROWS_AS(generate_blobs(1, 5, 7, 0.4, 0.0, 1), InvalidParamError);
    CHECK_THROWS_AS(generate_blobs(3, 5, 0, 0.4, 0.0, 1), InvalidParamError);
}

TEST_CASE("the default desk-scale blob config lands in the probe band") {
    // spread tuned once so a linear probe sits between 70% and 90%
    const Dataset data = generate_blobs(10, 32, 100, 0.4, 0.0, 12345);
    const double acc = nearest_mean_accuracy(data);
    CHECK(acc >= 0.70);
    CHECK(acc <= 0.90);
}

TEST_CASE("label flipping moves roughly rho labels to other classes") {
    Dataset data = generate_blobs(5, 4, 200, 0.3, 0.0, 7);
    const std::vector<int> before = data.labels;
    flip_labels(data, 0.1, 11);
    std::size_t flipped = 0;
    for (std::size_t i = 0; i < before.size(); ++i) {
        if (before[i] != data.labels[i]) {
            ++flipped;
            CHECK(data.labels[i] >= 0);
            CHECK(data.labels[i] < 5);
        }
    }
    const double rate = static_cast<double>(flipped) / static_cast<double>(before.size());
    CHECK(rate > 0.05);
    CHECK(rate < 0.15);
    CHECK_THROWS_AS(flip_labels(data, 1.5, 1), InvalidParamError);
}

TEST_CASE("per-class splitting keeps counts exact") {
    const Dataset data = generate_blobs(3, 4, 10, 0.2, 0.0, 5);
    const auto [train, test] = split_per_class(data, 4);
    CHECK(train.size() == 18);
    CHECK(test.size() == 12);
    std::vector<std::size_t> train_counts(3, 0), test_counts(3, 0);
    for (int y : train.labels) train_counts[static_cast<std::size_t>(y)]++;
    for (int y : test.labels) test_counts[static_cast<std::size_t>(y)]++;
    for (std::size_t k = 0; k < 3; ++k) {
        CHECK(train_counts[k] == 6);
        CHECK(test_counts[k] == 4);
    }
    CHECK_THROWS_AS(split_per_class(data, 10), InvalidParamError);
}

TEST_CASE("csv loading remaps labels densely in first-seen order") {
    const std::string path = "csv_remap_test.csv";
    std::ofstream out(path);
    out << "label,f0,f1\n";
    out << "a,1.0,2.0\n";
    out << "b,3.0,4.0\n";
    out << "a,5.0,6.0\n";
    out.close();
    const Dataset data = load_csv_dataset(path);
    CHECK(data.num_classes == 2);
    CHECK(data.labels == std::vector<int>{0, 1, 0});
    CHECK(data.label_names == std::vector<std::string>{"a", "b"});
    CHECK(data.inputs(2, 1) == 6.0);
    std::remove(path.c_str());
}

TEST_CASE("csv round-trips bit-exactly") {
    Dataset data = generate_blobs(3, 5, 4, 0.7, 0.1, 21);
    const std::string path = "csv_roundtrip_test.csv";
    save_csv_dataset(data, path);
    const Dataset loaded = load_csv_dataset(path);
    REQUIRE(loaded.size() == data.size());
    CHECK(loaded.labels == data.labels);
    for (std::size_t i = 0; i < data.size(); ++i) {
        for (std::size_t c = 0; c < data.input_dim(); ++c) {
            CHECK(loaded.inputs(i, c) == data.inputs(i, c));
        }
    }
    std::remove(path.c_str());
}

TEST_CASE("csv errors carry line numbers and name the failure") {
    const std::string path = "csv_error_test.csv";
    {
        std::ofstream out(path);
        out << "label,f0,f1\n";
        out << "a,1.0,2.0\n";
        out << "b,oops,4.0\n";
    }
    CHECK_THROWS_WITH_AS(load_csv_dataset(path), doctest::Contains("line 3"), ParseError);
    {
        std::ofstream out(path);
        out << "label,f0,f1\n";
        out << "a,1.0,2.0\n";
        out << "b,3.0\n";
    }
    CHECK_THROWS_AS(load_csv_dataset(path), InconsistentWidthError);
    {
        std::ofstream out(path);
        out << "label,f0,f1\n";
        out << "a,1.0,2.0\n";
        out << "z,3.0,4.0\n";
    }
    CHECK_THROWS_AS(load_csv_dataset(path, {"a", "b"}), UnknownLabelError);
    {
        std::ofstream out(path);
        out << "";
    }
    CHECK_THROWS_AS(load_csv_dataset(path), ParseError);
    std::remove(path.c_str());
}

TEST_CASE("full-fraction subsets are permutations of the whole index set") {
    const Dataset data = generate_blobs(2, 3, 10, 0.5, 0.0, 31);
    const SubsetPlan plan = stratified_subsets(data, 3, 1.0, 17);
    for (const auto& subset : plan.subsets) {
        REQUIRE(subset.size() == data.size());
        std::set<std::size_t> seen(subset.begin(), subset.end());
        CHECK(seen.size() == data.size());
    }
    // and the order is actually permuted, not identity
    bool any_permuted = false;
    for (const auto& subset : plan.subsets) {
        for (std::size_t i = 0; i < subset.size(); ++i) {
            if (subset[i] != i) any_permuted = true;
        }
    }
    CHECK(any_permuted);
}

TEST_CASE("stratification is exact per class") {
    const Dataset data = generate_blobs(2, 3, 10, 0.5, 0.0, 33);
    const SubsetPlan plan = stratified_subsets(data, 5, 0.5, 3);
    for (const auto& subset : plan.subsets) {
        REQUIRE(subset.size() == 10);
        std::size_t count0 = 0;
        for (std::size_t idx : subset) {
            REQUIRE(idx < data.size());
            if (data.labels[idx] == 0) ++count0;
        }
        CHECK(count0 == 5);
    }
    CHECK_THROWS_AS(stratified_subsets(data, 2, 0.01, 3), FractionTooSmallError);
}

TEST_CASE("subset plans are pure functions of their arguments") {
    const Dataset data = generate_blobs(4, 3, 25, 0.5, 0.0, 2);
    const SubsetPlan a = stratified_subsets(data, 4, 0.3, 55);
    const SubsetPlan b = stratified_subsets(data, 4, 0.3, 55);
    CHECK(a.subsets == b.subsets);
    const SubsetPlan c = stratified_subsets(data, 4, 0.3, 56);
    CHECK(a.subsets != c.subsets);
}

TEST_CASE("pairwise subset overlap concentrates near the drawn fraction") {
    const Dataset data = generate_blobs(2, 3, 100, 0.5, 0.0, 8);
    const double fraction = 0.3;
    double overlap_sum = 0.0;
    std::size_t pairs = 0;
    for (std::uint64_t seed = 0; seed < 15; ++seed) {
        const SubsetPlan plan = stratified_subsets(data, 2, fraction, 1000 + seed);
        const std::set<std::size_t> a(plan.subsets[0].begin(), plan.subsets[0].end());
        std::size_t inter = 0;
        for (std::size_t idx : plan.subsets[1]) {
            if (a.count(idx) > 0) ++inter;
        }
        overlap_sum += static_cast<double>(inter) / static_cast<double>(plan.subsets[0].size());
        ++pairs;
    }
    const double mean_overlap = overlap_sum / static_cast<double>(pairs);
    // hypergeometric expectation: |A ∩ B| / |A| = fraction
    CHECK(mean_overlap > fraction - 0.06);
    CHECK(mean_overlap < fraction + 0.06);
}

TEST_CASE("standardizer produces zero-mean unit-variance features on the fit split") {
    const Dataset data = generate_blobs(3, 4, 30, 0.8, 0.0, 13);
    const Standardizer s = Standardizer::fit(data.inputs);
    const Matrix z = s.apply(data.inputs);
    for (std::size_t c = 0; c < 4; ++c) {
        double mean = 0.0, var = 0.0;
        for (std::size_t i = 0; i < z.rows(); ++i) mean += z(i, c);
        mean /= static_cast<double>(z.rows());
        for (std::size_t i = 0; i < z.rows(); ++i) {
            var += (z(i, c) - mean) * (z(i, c) - mean);
        }
        var /= static_cast<double>(z.rows());
        CHECK(std::abs(mean) < 1e-10);
        CHECK(std::abs(var - 1.0) < 1e-10);
    }
}

TEST_CASE("dataset select keeps rows aligned with labels") {
    const Dataset data = generate_blobs(2, 2, 5, 0.3, 0.0, 77);
    const Dataset picked = data.select({3, 0, 7});
    CHECK(picked.size() == 3);
    CHECK(picked.labels[0] == data.labels[3]);
    CHECK(picked.inputs.row(1) == data.inputs.row(0));
    CHECK_THROWS_AS(data.select({999}), InvalidParamError);
}
