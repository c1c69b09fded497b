#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "oracles.hpp"

using namespace dmpct;
using namespace oracle;

TEST(Featurize, ConstantSliceAndDefaultLayout) {
    PatchFeatureSpec spec;
    EXPECT_EQ(spec.feature_dim(), 14u);
    ChannelizedSlice s{9, 7, {Slice2<float>(9, 7, 0.5f), Slice2<float>(9, 7, 0.5f), Slice2<float>(9, 7, 0.5f)}};
    const auto f = featurize(s, spec, 3, 4);
    ASSERT_EQ(f.size(), 14u);
    for (int i = 0; i < 12; ++i) EXPECT_DOUBLE_EQ(f[std::size_t(i)], 0.5);
    EXPECT_DOUBLE_EQ(f[12], 3.0 / 6.0);
    EXPECT_DOUBLE_EQ(f[13], 4.0 / 8.0);
}

TEST(Featurize, SinglePixelSlice) {
    ChannelizedSlice s{1, 1, {Slice2<float>(1, 1, 0.2f), Slice2<float>(1, 1, 0.4f), Slice2<float>(1, 1, 0.9f)}};
    const auto f = featurize(s, PatchFeatureSpec{}, 0, 0);
    for (std::size_t r = 0; r < 4; ++r) {
        EXPECT_NEAR(f[r * 3 + 0], 0.2, 1e-7);
        EXPECT_NEAR(f[r * 3 + 1], 0.4, 1e-7);
        EXPECT_NEAR(f[r * 3 + 2], 0.9, 1e-7);
    }
    EXPECT_EQ(f[12], 0.0);
    EXPECT_EQ(f[13], 0.0);
}

TEST(Featurize, CornerRadiusOneUsesReplicatedEdges) {
    std::mt19937_64 rng(4);
    const auto s = testutil::random_slice(rng, 6, 5);
    const auto f = featurize(s, PatchFeatureSpec{}, 0, 0);
    for (std::uint32_t c = 0; c < 3; ++c) {
        const auto& ch = s.channels[c];
        // rows {0,0,1} x cols {0,0,1}
        const double expect = (4.0 * ch.at(0, 0) + 2.0 * ch.at(0, 1) + 2.0 * ch.at(1, 0) + ch.at(1, 1)) / 9.0;
        EXPECT_NEAR(f[3 + c], expect, 1e-12);
    }
}

TEST(Featurize, MatchesBruteForceEverywhere) {
    std::mt19937_64 rng(8);
    PatchFeatureSpec spec;
    for (int trial = 0; trial < 10; ++trial) {
        std::uniform_int_distribution<std::uint32_t> ext(1, 12);
        const auto s = testutil::random_slice(rng, ext(rng), ext(rng));
        for (std::uint32_t r = 0; r < s.height; ++r)
            for (std::uint32_t c = 0; c < s.width; ++c) {
                const auto a = featurize(s, spec, r, c), b = oracle_features(s, spec, r, c);
                for (std::size_t i = 0; i < a.size(); ++i) ASSERT_NEAR(a[i], b[i], 1e-12);
            }
    }
    EXPECT_THROW(featurize(testutil::random_slice(rng, 3, 3), spec, 3, 0), IndexError);
}

TEST(Forward, UniformAndDominatedSoftmax) {
    TrainOptions o;
    o.num_classes = 2;
    SegmenterState st = initial_state(o);
    std::mt19937_64 rng(1);
    const auto s = testutil::random_slice(rng, 5, 4);
    const ProbMap pm = forward(st, s);
    for (float v : pm.probs) EXPECT_NEAR(v, 1.0 / 3.0, 1e-7);
    st.params.bias = {10.0f, 0.0f, 0.0f};
    const ProbMap dom = forward(st, s);
    for (std::size_t i = 0; i < dom.pixels(); ++i) EXPECT_GT(dom.at(i, 0), 0.9999f);
}

TEST(Forward, RowsAreDistributionsForRandomStates) {
    std::mt19937_64 rng(2);
    for (int trial = 0; trial < 20; ++trial) {
        Instance in = random_instance(rng, trial % 2 ? 5 : 0);
        in.state.params.for_each([&](float& v) { v *= 8.0f; });
        const ProbMap pm = forward(in.state, in.slices[0]);
        for (std::size_t i = 0; i < pm.pixels(); ++i) {
            double sum = 0.0;
            for (float v : pm.row(i)) {
                ASSERT_GE(v, 0.0f);
                ASSERT_LE(v, 1.0f);
                sum += v;
            }
            ASSERT_NEAR(sum, 1.0, 1e-6);
        }
    }
}

TEST(Loss, EdgeValuesAndBruteForceOracle) {
    TrainOptions o;
    o.num_classes = 2;
    SegmenterState st = initial_state(o);
    std::mt19937_64 rng(3);
    const auto s = testutil::random_slice(rng, 4, 3);
    std::vector<std::uint8_t> zeros(12, 0);
    EXPECT_NEAR(loss(st, s, zeros), std::log(3.0), 1e-12);
    st.params.bias = {1000.0f, 0.0f, 0.0f};
    EXPECT_EQ(loss(st, s, zeros), 0.0);
    std::vector<std::uint8_t> ones(12, 1);
    EXPECT_NEAR(loss(st, s, ones), -std::log(1e-12), 1e-9); // clamped

    for (int trial = 0; trial < 10; ++trial) {
        Instance in = random_instance(rng, trial % 2 ? 4 : 0);
        const double got = loss(in.state, in.slices[0], in.labels[0]);
        EXPECT_GE(got, 0.0);
        EXPECT_NEAR(got, oracle_loss(in.state, in.slices[0], in.labels[0]), 1e-9);
    }
    EXPECT_THROW(loss(st, s, std::vector<std::uint8_t>(11, 0)), DimsMismatch);
}

TEST(Gradient, AnalyticMatchesCentralDifferencesLinear) {
    std::mt19937_64 rng(100);
    for (int trial = 0; trial < 20; ++trial) EXPECT_LE(max_gradient_error(random_instance(rng, 0)), 1e-4);
}

TEST(Gradient, AnalyticMatchesCentralDifferencesHidden) {
    std::mt19937_64 rng(200);
    for (int trial = 0; trial < 10; ++trial) EXPECT_LE(max_gradient_error(random_instance(rng, 6)), 1e-4);
}

TEST(SgdStep, ZeroRateKeepsParameters) {
    std::mt19937_64 rng(6);
    Instance in = random_instance(rng, 0);
    const SegmenterState next = sgd_step(in.state, in.batch, 0.0);
    EXPECT_EQ(next.params, in.state.params);
    EXPECT_EQ(next.step_count, in.state.step_count + 1);
}

TEST(SgdStep, SinglePixelHandComputedUpdate) {
    TrainOptions o;
    o.num_classes = 1;
    const SegmenterState st = initial_state(o);
    ChannelizedSlice s{1, 1, {Slice2<float>(1, 1, 0.25f), Slice2<float>(1, 1, 0.5f), Slice2<float>(1, 1, 1.0f)}};
    const std::vector<std::uint8_t> y{1};
    BatchItem item{&s, y, {}};
    const double lr = 0.2;
    double l = 0.0;
    const SegmenterState next = sgd_step(st, std::span(&item, 1), lr, &l);
    EXPECT_NEAR(l, std::log(2.0), 1e-12);
    // p = (0.5, 0.5): grad_b = (0.5, -0.5); grad_W[k] = grad_b[k] * x with x = (0.25,0.5,1) x4, 0, 0
    const std::array<double, 14> x{0.25, 0.5, 1, 0.25, 0.5, 1, 0.25, 0.5, 1, 0.25, 0.5, 1, 0, 0};
    EXPECT_FLOAT_EQ(next.params.bias[0], float(-lr * 0.5));
    EXPECT_FLOAT_EQ(next.params.bias[1], float(lr * 0.5));
    for (std::size_t i = 0; i < 14; ++i) {
        EXPECT_FLOAT_EQ(next.params.weights[i], float(-lr * 0.5 * x[i]));
        EXPECT_FLOAT_EQ(next.params.weights[14 + i], float(lr * 0.5 * x[i]));
    }
}

TEST(SgdStep, NonFiniteGradientAbortsWithDiagnostics) {
    std::mt19937_64 rng(7);
    Instance in = random_instance(rng, 0);
    in.state.params.weights[0] = std::numeric_limits<float>::infinity();
    try {
        sgd_step(in.state, in.batch, 0.1);
        FAIL() << "expected TrainingError";
    } catch (const TrainingError& e) {
        EXPECT_NE(std::string(e.what()).find("step"), std::string::npos);
        EXPECT_NE(std::string(e.what()).find("loss"), std::string::npos);
    }
}

TEST(HardPrediction, ArgmaxTieRule) {
    ProbMap pm{3, 1, 3, {0.2f, 0.5f, 0.3f, 0.5f, 0.5f, 0.0f, 1.0f / 3, 1.0f / 3, 1.0f / 3}};
    const auto hp = hard_from_probs(pm);
    EXPECT_EQ(hp.labels.data, (std::vector<std::uint8_t>{1, 0, 0}));
    EXPECT_FLOAT_EQ(hp.confidence.data[0], 0.5f);
    EXPECT_FLOAT_EQ(hp.confidence.data[1], 0.5f);
    EXPECT_FLOAT_EQ(hp.confidence.data[2], 1.0f / 3);
}

namespace {

// Two intensity classes: left half dark (label 0), right half bright (label 1).
TrainingSet separable_set(std::mt19937_64& rng, std::size_t n) {
    TrainingSet set;
    set.num_classes = 1;
    std::normal_distribution<float> noise(0.0f, 0.05f);
    for (std::size_t i = 0; i < n; ++i) {
        ChannelizedSlice s{12, 10, {}};
        Slice2<std::uint8_t> y(12, 10);
        for (int c = 0; c < 3; ++c) s.channels.emplace_back(12, 10);
        for (std::uint32_t r = 0; r < 10; ++r)
            for (std::uint32_t q = 0; q < 12; ++q) {
                const bool bright = (q + i) % 12 >= 6;
                y.at(r, q) = bright ? 1 : 0;
                for (auto& ch : s.channels) ch.at(r, q) = std::clamp((bright ? 0.7f : 0.3f) + noise(rng), 0.0f, 1.0f);
            }
        set.add(std::move(s), std::move(y));
    }
    return set;
}

} // namespace

TEST(Train, LossDecreasesOnSeparableClasses) {
    std::mt19937_64 rng(12);
    const TrainingSet set = separable_set(rng, 8);
    TrainOptions o;
    o.num_classes = 1;
    o.iterations = 200;
    o.batch_slices = 2;
    o.batch_pixels = 64;
    const auto r = train(set, o);
    ASSERT_GE(r.epoch_loss.size(), 20u);
    // smoothed over windows of 5 epochs
    auto window_mean = [&](std::size_t from) {
        return std::accumulate(r.epoch_loss.begin() + long(from), r.epoch_loss.begin() + long(from + 5), 0.0) / 5.0;
    };
    for (std::size_t w = 5; w + 5 <= r.epoch_loss.size(); w += 5) EXPECT_LE(window_mean(w), window_mean(w - 5) + 1e-3);
    EXPECT_LT(window_mean(r.epoch_loss.size() - 5), 0.5 * r.epoch_loss.front());
}

TEST(Train, DeterministicAndZeroIterations) {
    std::mt19937_64 rng(13);
    const TrainingSet set = separable_set(rng, 5);
    TrainOptions o;
    o.num_classes = 1;
    o.iterations = 30;
    o.hidden_width = 4;
    o.seed = 77;
    const auto a = train(set, o), b = train(set, o);
    EXPECT_EQ(a.model, b.model);
    EXPECT_EQ(a.epoch_loss, b.epoch_loss);
    o.seed = 78;
    EXPECT_FALSE(train(set, o).model == a.model);
    o.iterations = 0;
    EXPECT_EQ(train(set, o).model, initial_state(o));
    EXPECT_THROW(train(TrainingSet{}, o), InvalidArgument);
}

TEST(Train, AdamAndPlainSgdAlsoConverge) {
    std::mt19937_64 rng(14);
    const TrainingSet set = separable_set(rng, 6);
    TrainOptions o;
    o.num_classes = 1;
    o.iterations = 150;
    o.batch_pixels = 64;
    for (auto [opt, lr, mom] : {std::tuple{Optimizer::Adam, 0.02, 0.9}, std::tuple{Optimizer::Sgd, 0.5, 0.0}}) {
        o.optimizer = opt;
        o.learning_rate = lr;
        o.momentum = mom;
        const auto r = train(set, o);
        EXPECT_LT(r.epoch_loss.back(), 0.5 * r.epoch_loss.front());
    }
}

TEST(InputNorm, WhitenedFeaturesHaveBoundedCovariance) {
    std::mt19937_64 rng(15);
    const TrainingSet set = separable_set(rng, 6);
    PatchFeatureSpec spec;
    const InputNorm n = fit_input_norm(set, spec);
    ASSERT_TRUE(n.valid());
    // Folding must reproduce explicit normalisation.
    TrainOptions o;
    o.num_classes = 1;
    SegmenterState st = initial_state(o);
    st.params.for_each([&](float& v) { v = std::uniform_real_distribution<float>(-1, 1)(rng); });
    st.norm = n;
    const ProbMap folded = forward(st, set.slices[0]);
    std::vector<double> x(spec.feature_dim()), probs(2), h;
    FeatureExtractor fx(set.slices[0], spec);
    const auto p = st.params.cast<double>();
    for (std::uint32_t px = 0; px < set.slices[0].pixels(); ++px) {
        fx.extract(px / 12, px % 12, x);
        n.apply(x);
        detail::class_probs(p, x, h, probs);
        ASSERT_NEAR(folded.at(px, 1), probs[1], 1e-5);
    }
}

TEST(SegmenterIo, RoundTripIsBitExact) {
    std::mt19937_64 rng(16);
    testutil::TempDir dir("dmpw");
    for (std::uint32_t hidden : {0u, 5u}) {
        Instance in = random_instance(rng, hidden);
        in.state.plane = Plane::Coronal;
        in.state.step_count = 123;
        save_segmenter(in.state, dir / "m.dmpw");
        const SegmenterState back = load_segmenter(dir / "m.dmpw");
        EXPECT_EQ(back, in.state);
        EXPECT_EQ(encode_segmenter(back), binary::read_file(dir / "m.dmpw"));
    }
    auto bytes = binary::read_file(dir / "m.dmpw");
    bytes.resize(bytes.size() - 1);
    EXPECT_THROW(decode_segmenter(bytes), ParseError);
    bytes[0] = 'X';
    EXPECT_THROW(decode_segmenter(bytes), ParseError);
}
