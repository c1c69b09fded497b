#include <gtest/gtest.h>

#include "oracles.hpp"

using namespace dmpct;
using namespace oracle;

namespace {

std::array<PlanePrediction, 3> random_predictions(std::mt19937_64& rng, Dims dims, int k) {
    std::uniform_int_distribution<int> lab(0, k);
    std::uniform_real_distribution<float> conf(0.0f, 1.0f);
    std::array<PlanePrediction, 3> out;
    for (Plane p : kPlanes) {
        auto& pp = out[plane_index(p)];
        pp.plane = p;
        pp.labels = Grid3<std::uint8_t>(dims);
        pp.confidence = Grid3<float>(dims);
        for (auto& v : pp.labels.data()) v = static_cast<std::uint8_t>(lab(rng));
        for (auto& v : pp.confidence.data()) v = conf(rng);
    }
    return out;
}

} // namespace

TEST(FuseVoxel, DocumentedExamples) {
    EXPECT_EQ(fuse_voxel({2, 2, 5}, {0.1f, 0.2f, 0.9f}).label, 2);
    EXPECT_FALSE(provenance::is_fallback(fuse_voxel({2, 2, 5}, {0.1f, 0.2f, 0.9f}).provenance));
    const auto fb = fuse_voxel({1, 2, 3}, {0.5f, 0.9f, 0.7f});
    EXPECT_EQ(fb.label, 2);
    EXPECT_TRUE(provenance::is_fallback(fb.provenance));
    EXPECT_EQ(provenance::winner(fb.provenance), Plane::Coronal);
    EXPECT_EQ(fuse_voxel({1, 2, 3}, {0.7f, 0.7f, 0.6f}).label, 1);
    EXPECT_EQ(fuse_voxel({1, 2, 3}, {0.6f, 0.7f, 0.7f}).label, 2);
    EXPECT_EQ(fuse_voxel({4, 4, 4}, {0.0f, 0.0f, 0.0f}).label, 4);
    EXPECT_EQ(provenance::winner(fuse_voxel({0, 3, 3}, {1.0f, 0.1f, 0.1f}).provenance), Plane::Coronal);
}

TEST(FuseVoxel, MatchesBruteForceOnRandomVoxels) {
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<float> conf(0.0f, 1.0f);
    std::uniform_int_distribution<int> coarse(0, 4);
    for (int k = 1; k <= 4; ++k) {
        std::uniform_int_distribution<int> lab(0, k);
        for (int i = 0; i < 50000; ++i) {
            const std::array<std::uint8_t, 3> y{std::uint8_t(lab(rng)), std::uint8_t(lab(rng)), std::uint8_t(lab(rng))};
            // coarse confidences make exact ties common
            std::array<float, 3> c{};
            for (auto& v : c) v = i % 2 ? conf(rng) : float(coarse(rng)) / 4.0f;
            ASSERT_EQ(fuse_voxel(y, c).label, oracle_fuse(y, c));
        }
    }
}

TEST(FuseVoxel, AgreementIgnoresConfidencesAndPlaneOrder) {
    std::mt19937_64 rng(2);
    std::uniform_int_distribution<int> lab(0, 3);
    std::uniform_real_distribution<float> conf(0.0f, 1.0f);
    for (int i = 0; i < 20000; ++i) {
        std::array<std::uint8_t, 3> y{std::uint8_t(lab(rng)), std::uint8_t(lab(rng)), std::uint8_t(lab(rng))};
        const std::array<float, 3> c{conf(rng), conf(rng), conf(rng)};
        const auto d = fuse_voxel(y, c);
        if (provenance::is_fallback(d.provenance)) {
            // distinct confidences: permuting planes together with confidences keeps the label
            if (c[0] != c[1] && c[1] != c[2] && c[0] != c[2]) {
                ASSERT_EQ(fuse_voxel({y[2], y[0], y[1]}, {c[2], c[0], c[1]}).label, d.label);
            }
            continue;
        }
        ASSERT_EQ(fuse_voxel(y, {conf(rng), conf(rng), conf(rng)}).label, d.label);
        ASSERT_EQ(fuse_voxel({y[1], y[2], y[0]}, {c[1], c[2], c[0]}).label, d.label);
        ASSERT_EQ(fuse_voxel({y[2], y[1], y[0]}, {conf(rng), conf(rng), conf(rng)}).label, d.label);
    }
}

TEST(FuseVolume, MatchesOracleAndCountsEveryBranchOnce) {
    std::mt19937_64 rng(3);
    const Dims dims{6, 6, 6};
    const auto preds = random_predictions(rng, dims, 3);
    const FusedMask fm = fuse_volume(preds, 3);
    for (std::size_t i = 0; i < dims.count(); ++i)
        ASSERT_EQ(fm.labels.labels()[i],
                  oracle_fuse({preds[0].labels[i], preds[1].labels[i], preds[2].labels[i]},
                              {preds[0].confidence[i], preds[1].confidence[i], preds[2].confidence[i]}));
    const auto counts = fm.branch_counts();
    std::size_t total = 0;
    for (auto c : counts) total += c;
    EXPECT_EQ(total, dims.count());
    EXPECT_EQ(counts[3], 0u); // unused provenance value
}

TEST(FuseVolume, UnanimityAndAgreementDominance) {
    std::mt19937_64 rng(4);
    const Dims dims{5, 4, 3};
    auto preds = random_predictions(rng, dims, 2);
    preds[1].labels = preds[0].labels;
    preds[2].labels = preds[0].labels;
    EXPECT_EQ(fuse_volume(preds, 2).labels.labels(), preds[0].labels);

    // one plane all background at confidence 1, the others agree on organ 2
    for (auto& v : preds[0].labels.data()) v = 0;
    for (auto& v : preds[0].confidence.data()) v = 1.0f;
    for (auto& v : preds[1].labels.data()) v = 2;
    for (auto& v : preds[2].labels.data()) v = 2;
    const FusedMask fm = fuse_volume(preds, 2);
    for (std::uint8_t v : fm.labels.labels().data()) ASSERT_EQ(v, 2);
}

TEST(FuseVolume, WorkerCountDoesNotChangeOutput) {
    std::mt19937_64 rng(5);
    const auto preds = random_predictions(rng, Dims{40, 33, 29}, 4);
    const FusedMask a = fuse_volume(preds, 4, {true, 1});
    for (unsigned w : {2u, 3u, 8u}) {
        const FusedMask b = fuse_volume(preds, 4, {true, w});
        ASSERT_EQ(a.labels, b.labels);
        ASSERT_EQ(a.provenance, b.provenance);
    }
}

TEST(FuseVolume, RejectsMismatchedPlanes) {
    std::mt19937_64 rng(6);
    auto preds = random_predictions(rng, Dims{3, 3, 3}, 2);
    auto swapped = preds;
    std::swap(swapped[0], swapped[1]);
    EXPECT_THROW(fuse_volume(swapped, 2), InvalidArgument);
    preds[2].labels = Grid3<std::uint8_t>(Dims{3, 3, 2});
    try {
        fuse_volume(preds, 2);
        FAIL();
    } catch (const DimsMismatch& e) {
        EXPECT_NE(std::string(e.what()).find("axial"), std::string::npos);
    }
}

TEST(PredictVolume, ConstantMocksAreUnanimous) {
    const Dims dims{4, 5, 6};
    const Volume v(dims, std::vector<float>(dims.count(), 0.0f));
    PlaneModelBundle<testutil::ConstantModel> b{{testutil::ConstantModel{1, 3}, testutil::ConstantModel{1, 3},
                                                 testutil::ConstantModel{1, 3}}};
    const auto out = predict_volume(b, v, default_windows(), 2);
    EXPECT_EQ(out.fused.labels.dims(), dims);
    for (std::uint8_t x : out.fused.labels.labels().data()) ASSERT_EQ(x, 1);
    PlaneModelBundle<testutil::ConstantModel> bad{{testutil::ConstantModel{3, 4}, testutil::ConstantModel{1, 4},
                                                   testutil::ConstantModel{1, 4}}};
    EXPECT_THROW(predict_volume(bad, v, default_windows(), 2), InvalidArgument);
}

TEST(PredictVolume, EngineeredDisagreementFollowsTruthTable) {
    const Dims dims{5, 6, 7};
    const auto [vol, windows] = testutil::index_volume(dims);
    std::mt19937_64 rng(7);
    std::uniform_int_distribution<int> lab(0, 3);
    std::uniform_real_distribution<float> conf(0.3f, 1.0f);
    std::array<testutil::TableModel, 3> models;
    for (auto& m : models) {
        auto l = std::make_shared<std::vector<std::uint8_t>>(dims.count());
        auto c = std::make_shared<std::vector<float>>(dims.count());
        for (auto& x : *l) x = std::uint8_t(lab(rng));
        for (auto& x : *c) x = conf(rng);
        m = {l, c, 4, float(dims.count())};
    }
    const PlaneModelBundle<testutil::TableModel> b{models};
    const auto out = predict_volume(b, vol, windows, 3);
    for (std::size_t i = 0; i < dims.count(); ++i) {
        const std::array<std::uint8_t, 3> y{(*models[0].labels)[i], (*models[1].labels)[i], (*models[2].labels)[i]};
        const std::array<float, 3> c{(*models[0].confidence)[i], (*models[1].confidence)[i],
                                     (*models[2].confidence)[i]};
        ASSERT_EQ(out.fused.labels.labels()[i], oracle_fuse(y, c)) << i;
        for (Plane p : kPlanes) ASSERT_EQ(out.planes[plane_index(p)].labels[i], y[plane_index(p)]);
    }
}
