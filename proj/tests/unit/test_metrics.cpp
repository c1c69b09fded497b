#include <gtest/gtest.h>

#include "oracles.hpp"

using namespace dmpct;
using namespace oracle;

namespace {

LabelMask mask_with(Dims dims, std::initializer_list<std::size_t> organ_voxels, std::uint16_t k = 1) {
    std::vector<std::uint8_t> v(dims.count(), 0);
    for (auto i : organ_voxels) v[i] = 1;
    return LabelMask(dims, std::move(v), k);
}

const std::vector<double> kA12{0.712, 0.655, 0.801, 0.743, 0.690, 0.768, 0.702, 0.731, 0.659, 0.784, 0.725, 0.697};

} // namespace

TEST(Dsc, DocumentedEdgeCases) {
    const Dims dims{4, 4, 1};
    const auto y = mask_with(dims, {0, 1, 2, 3, 4, 5});
    EXPECT_EQ(dsc(y, y, 1), 1.0);
    EXPECT_DOUBLE_EQ(dsc(mask_with(dims, {0, 1, 2, 10}), y, 1), 0.6);
    EXPECT_EQ(dsc(mask_with(dims, {8, 9}), y, 1), 0.0);
    EXPECT_EQ(dsc(mask_with(dims, {}), mask_with(dims, {}), 1), 1.0);
    EXPECT_EQ(dsc(mask_with(dims, {}), y, 1), 0.0);
    EXPECT_THROW(dsc(y, mask_with(Dims{4, 4, 2}, {}), 1), DimsMismatch);
}

TEST(Dsc, MatchesBruteForceAndIsSymmetricAndBounded) {
    std::mt19937_64 rng(1);
    for (int trial = 0; trial < 100; ++trial) {
        const Dims dims = testutil::random_dims(rng, 7);
        const auto a = testutil::random_mask(rng, dims, 3), b = testutil::random_mask(rng, dims, 3);
        for (std::uint8_t k = 1; k <= 3; ++k) {
            const double v = dsc(a, b, k);
            ASSERT_EQ(v, oracle_dsc(a, b, k));
            ASSERT_EQ(v, dsc(b, a, k));
            ASSERT_GE(v, 0.0);
            ASSERT_LE(v, 1.0);
            ASSERT_EQ(dsc(a, a, k), 1.0);
        }
    }
}

TEST(Summarize, AggregatesAreRecomputableAndMeanRowIsMeanOfOrganMeans) {
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(0, 1);
    std::vector<std::vector<double>> d(9, std::vector<double>(4));
    for (auto& row : d)
        for (auto& v : row) v = u(rng);
    const auto rep = summarize({"a", "b", "c", "d", "e", "f", "g", "h", "i"}, d, 4);
    double mean_of_means = 0;
    for (std::size_t k = 0; k < 4; ++k) {
        double s = 0;
        for (const auto& row : d) s += row[k];
        const double m = s / 9;
        double ss = 0;
        for (const auto& row : d) ss += (row[k] - m) * (row[k] - m);
        EXPECT_NEAR(rep.organs[k].mean, m, 1e-15);
        EXPECT_NEAR(rep.organs[k].std, std::sqrt(ss / 8), 1e-15);
        EXPECT_EQ(rep.organs[k].organ, k + 1);
        mean_of_means += m / 4;
    }
    EXPECT_NEAR(rep.mean_row.mean, mean_of_means, 1e-15);
    const auto single = summarize({"x"}, {{0.4, 0.5}}, 2);
    EXPECT_EQ(single.organs[0].std, 0.0);
}

TEST(Evaluate, PerfectPredictorScoresOne) {
    const Dims dims{5, 4, 3};
    std::mt19937_64 rng(3);
    const auto [vol, windows] = testutil::index_volume(dims);
    std::vector<LabeledCase> test;
    auto labels = std::make_shared<std::vector<std::uint8_t>>(dims.count());
    for (std::size_t i = 0; i < dims.count(); ++i) (*labels)[i] = std::uint8_t(i % 3);
    test.push_back({"t0", vol, LabelMask(dims, *labels, 2)});
    test.push_back({"t1", vol, LabelMask(dims, *labels, 2)});
    auto conf = std::make_shared<std::vector<float>>(dims.count(), 0.9f);
    const testutil::TableModel m{labels, conf, 3, float(dims.count())};
    const PlaneModelBundle<testutil::TableModel> b{{m, m, m}};
    const auto rep = evaluate(b, std::span<const LabeledCase>(test), 2, windows);
    ASSERT_EQ(rep.organs.size(), 2u);
    for (const auto& o : rep.organs) {
        EXPECT_EQ(o.mean, 1.0);
        EXPECT_EQ(o.std, 0.0);
        EXPECT_EQ(o.per_case.size(), 2u);
    }
    EXPECT_EQ(rep.mean_row.mean, 1.0);
}

TEST(PairedSignificance, NormalApproximationMatchesReferenceAtTwelvePairs) {
    // References: scipy.stats.wilcoxon(a, b, zero_method="wilcox", correction=False, method="approx").
    std::vector<double> shifted;
    for (double v : kA12) shifted.push_back(v + 0.1);
    EXPECT_NEAR(paired_significance(kA12, shifted), 0.00053200550513924922, 1e-6);

    const std::vector<double> mixed{0.731, 0.640, 0.845, 0.748, 0.702, 0.750,
                                    0.741, 0.760, 0.650, 0.820, 0.733, 0.716};
    EXPECT_NEAR(paired_significance(kA12, mixed), 0.0497722554312802, 1e-6);

    const std::vector<double> delta{0.02, -0.02, 0.02, 0.0, 0.05, 0.02, -0.05, 0.03, 0.03, 0.01, -0.01, 0.04};
    std::vector<double> tied;
    for (std::size_t i = 0; i < 12; ++i) tied.push_back(kA12[i] + delta[i]);
    EXPECT_NEAR(paired_significance(kA12, tied), 0.13979809441753438, 1e-6);

    EXPECT_EQ(paired_significance(kA12, kA12), 1.0);
}

TEST(PairedSignificance, ExactBelowTenPairs) {
    // scipy.stats.wilcoxon(..., method="exact")
    const std::vector<double> a7(kA12.begin(), kA12.begin() + 7);
    const std::vector<double> b7{0.731, 0.640, 0.845, 0.748, 0.702, 0.750, 0.741};
    EXPECT_NEAR(paired_significance(a7, b7), 0.296875, 1e-12);
    const std::vector<double> a9(kA12.begin(), kA12.begin() + 9);
    const std::vector<double> step{0.011, 0.022, -0.033, 0.044, 0.055, -0.066, 0.077, 0.088, 0.099};
    std::vector<double> b9;
    for (std::size_t i = 0; i < 9; ++i) b9.push_back(a9[i] + step[i]);
    EXPECT_NEAR(paired_significance(a9, b9), 0.12890625, 1e-12);
}

TEST(PairedSignificance, ExactPathMatchesEnumerationWithTies) {
    std::mt19937_64 rng(4);
    std::uniform_int_distribution<int> q(-3, 3), len(5, 12);
    for (int trial = 0; trial < 300; ++trial) {
        const int n = len(rng);
        std::vector<double> a(std::size_t(n), 0.5), b;
        for (double v : a) b.push_back(v + 0.01 * q(rng));
        std::size_t nonzero = 0;
        for (std::size_t i = 0; i < a.size(); ++i) nonzero += a[i] != b[i];
        if (nonzero == 0 || nonzero >= 10) continue;
        ASSERT_NEAR(paired_significance(a, b), oracle_exact_p(a, b), 1e-12);
    }
}

TEST(PairedSignificance, MonotoneInUniformImprovementAndPreconditions) {
    std::vector<double> offsets{0.0001, 0.0003, -0.0002, 0.0004, 0.0005, -0.0006, 0.0007, 0.0008, 0.0009, 0.0010,
                                0.0011, 0.0012};
    double prev = 2.0;
    for (double shift : {0.0, 0.0002, 0.0004, 0.0006, 0.0008, 0.0013}) {
        std::vector<double> b;
        for (std::size_t i = 0; i < 12; ++i) b.push_back(kA12[i] + offsets[i] + shift);
        const double p = paired_significance(kA12, b);
        EXPECT_LE(p, prev);
        prev = p;
    }
    EXPECT_THROW(paired_significance(std::vector<double>(4, 0.1), std::vector<double>(4, 0.2)), InvalidArgument);
    EXPECT_THROW(paired_significance(std::vector<double>(6, 0.1), std::vector<double>(5, 0.2)), InvalidArgument);
}

TEST(AttachPValues, RequiresMatchingCases) {
    auto a = summarize({"a", "b", "c", "d", "e"}, {{0.1}, {0.2}, {0.3}, {0.4}, {0.5}}, 1);
    auto b = summarize({"a", "b", "c", "d", "e"}, {{0.2}, {0.3}, {0.5}, {0.4}, {0.9}}, 1);
    attach_p_values(b, a);
    ASSERT_TRUE(b.organs[0].p_value.has_value());
    EXPECT_NEAR(*b.organs[0].p_value, oracle_exact_p(b.organs[0].per_case, a.organs[0].per_case), 1e-12);
    auto c = summarize({"a", "b", "c", "d", "x"}, {{0.2}, {0.3}, {0.5}, {0.4}, {0.9}}, 1);
    EXPECT_THROW(attach_p_values(c, a), InvalidArgument);
}

TEST(PairedSignificance, NormalPathMatchesIndependentFormula) {
    std::mt19937_64 rng(8);
    std::uniform_int_distribution<int> step(-6, 6), len(10, 40);
    for (int trial = 0; trial < 200; ++trial) {
        const int n = len(rng);
        std::vector<double> a, b;
        for (int i = 0; i < n; ++i) {
            a.push_back(0.5);
            b.push_back(0.5 + 0.01 * step(rng)); // coarse steps give zeros and ties
        }
        std::size_t nonzero = 0;
        for (int i = 0; i < n; ++i) nonzero += a[std::size_t(i)] != b[std::size_t(i)];
        if (nonzero <= kExactWilcoxonMax) continue;
        ASSERT_NEAR(paired_significance(a, b), oracle_normal_p(a, b), 1e-12);
    }
}
