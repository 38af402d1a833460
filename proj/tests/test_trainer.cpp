#include <cmath>
#include <limits>
#include <map>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "tlosslab/trainer.hpp"

using namespace tlosslab;

namespace {

Dataset tiny_dataset(std::uint64_t seed = 0) {
    DatasetConfig c;
    c.n_train = 12;
    c.n_test = 4;
    c.side = 16;
    c.seed = seed;
    return generate(c);
}

TrainConfig quick_config(LossKind k) {
    TrainConfig t;
    t.epochs = 3;
    t.batch_size = 4;
    t.hidden_dim = 6;
    t.loss.kind = k;
    t.seed = 5;
    return t;
}

// Full default setting, trained once and shared by the regression tests.
const TrainResult& default_run(LossKind k) {
    static std::map<LossKind, TrainResult> cache;
    auto it = cache.find(k);
    if (it == cache.end()) {
        const Dataset ds = generate(DatasetConfig{});
        TrainConfig t;
        t.loss.kind = k;
        it = cache.emplace(k, train(ds.train, ds.test, t)).first;
    }
    return it->second;
}

}  // namespace

TEST(Adam, ZeroGradientLeavesParameterUnchanged) {
    std::vector<double> p{1.5, -2.0};
    const std::vector<double> g{0.0, 0.0};
    AdamMoments m(2);
    adam_step(p, g, m, 1, AdamConfig{});
    EXPECT_EQ(p, (std::vector<double>{1.5, -2.0}));
}

TEST(Adam, FirstStepMovesByLearningRate) {
    std::vector<double> p{0.0, 0.0, 0.0};
    const std::vector<double> g{3.0, -0.01, 250.0};
    AdamMoments m(3);
    adam_step(p, g, m, 1, AdamConfig{});
    EXPECT_NEAR(p[0], -1e-3, 1e-10);
    EXPECT_NEAR(p[1], 1e-3, 1e-8);
    EXPECT_NEAR(p[2], -1e-3, 1e-10);
}

TEST(Adam, TenStepsOnQuadraticMatchReference) {
    // f(x) = (x - 3)^2, gradient 2(x - 3); reference written out longhand.
    const AdamConfig cfg{0.1, 0.9, 0.999, 1e-8};
    double x_ref = 0.0, m = 0.0, v = 0.0;
    std::vector<double> x{0.0};
    AdamMoments mom(1);
    for (std::size_t t = 1; t <= 10; ++t) {
        const double g = 2.0 * (x_ref - 3.0);
        m = 0.9 * m + (1.0 - 0.9) * g;
        v = 0.999 * v + (1.0 - 0.999) * g * g;
        const double mh = m / (1.0 - std::pow(0.9, double(t)));
        const double vh = v / (1.0 - std::pow(0.999, double(t)));
        x_ref -= 0.1 * mh / (std::sqrt(vh) + 1e-8);

        const std::vector<double> gx{2.0 * (x[0] - 3.0)};
        adam_step(x, gx, mom, t, cfg);
        EXPECT_DOUBLE_EQ(x[0], x_ref) << "step " << t;
    }
    EXPECT_GT(x[0], 0.9);
}

TEST(Adam, RejectsBadArguments) {
    std::vector<double> p{0.0};
    const std::vector<double> g{1.0};
    AdamMoments m(1);
    EXPECT_THROW(adam_step(p, g, m, 0, AdamConfig{}), std::invalid_argument);
    AdamMoments wrong(2);
    EXPECT_THROW(adam_step(p, g, wrong, 1, AdamConfig{}), std::invalid_argument);
}

TEST(ImageLoss, BaselineIsMaskMean) {
    const Dataset ds = tiny_dataset();
    ProbGrid p(16, 16, 0.3);
    p.data[5] = 0.9;
    LossSpec spec;
    spec.kind = LossKind::GCE;
    std::vector<double> d(p.size());
    const ImageLoss l = image_loss<double>(spec, TLossState{}, p, ds.train[0].train_mask, d);
    EXPECT_NEAR(l.value, mask_loss(spec, p, ds.train[0].train_mask), 1e-15);
    EXPECT_EQ(l.d_nu_tilde, 0.0);
    EXPECT_NEAR(d[5], pixel_loss_grad(spec, PixelPrediction{0.9, ds.train[0].train_mask.data[5]}) / 256.0, 1e-15);
}

TEST(ImageLoss, TLossIsPerImageValue) {
    const Dataset ds = tiny_dataset();
    ProbGrid p(16, 16, 0.4);
    LossSpec spec;
    spec.kind = LossKind::TLOSS;
    const TLossState st{0.3, kDefaultEpsilon, 256};
    std::vector<double> d(p.size());
    const ImageLoss l = image_loss<double>(spec, st, p, ds.train[1].train_mask, d);
    const auto r = Residual::between(std::span<const std::uint8_t>(ds.train[1].train_mask.data), std::span<const double>(p.data));
    EXPECT_DOUBLE_EQ(l.value, tloss_value(st, r));
    const TLossGrad g = tloss_grad(st, r);
    EXPECT_DOUBLE_EQ(l.d_nu_tilde, g.d_nu_tilde);
    for (std::size_t i = 0; i < d.size(); ++i) EXPECT_DOUBLE_EQ(d[i], g.d_prediction[i]);
}

TEST(BatchGradient, DuplicatedSampleEqualsSingleSample) {
    const Dataset ds = tiny_dataset();
    std::vector<FeatureMap> feats;
    for (const auto& s : ds.train) feats.push_back(compute_features<double>(s.features));
    std::mt19937_64 rng(1);
    const MlpModel m = init_mlp<double>(8, rng);
    for (LossKind k : {LossKind::MSE, LossKind::TLOSS, LossKind::NGCE_RCE}) {
        LossSpec spec;
        spec.kind = k;
        const TLossState st{0.0, kDefaultEpsilon, 256};
        BatchWorkspace ws;
        BatchGradient one(8), two(8);
        const std::size_t single[] = {3};
        const std::size_t pair[] = {3, 3};
        batch_gradient(m, st, spec, feats, ds.train, single, ws, one);
        batch_gradient(m, st, spec, feats, ds.train, pair, ws, two);
        EXPECT_EQ(two.grad.theta, one.grad.theta) << to_string(k);
        EXPECT_EQ(two.loss, one.loss);
        EXPECT_EQ(two.d_nu_tilde, one.d_nu_tilde);
    }
}

TEST(Train, ZeroLearningRateChangesNothing) {
    const Dataset ds = tiny_dataset();
    TrainConfig t = quick_config(LossKind::TLOSS);
    t.lr = 0.0;
    t.nu_tilde_init = 0.7;
    const TrainResult r = train(ds.train, ds.test, t);
    std::mt19937_64 rng(t.seed);
    EXPECT_EQ(r.model, init_mlp<double>(t.hidden_dim, rng));
    EXPECT_EQ(r.tloss.nu_tilde, 0.7);
    ASSERT_EQ(r.trace.size(), 3u);
    EXPECT_EQ(r.trace[0].test_dice, r.trace[2].test_dice);
}

TEST(Train, SameSeedGivesIdenticalTrace) {
    const Dataset ds = tiny_dataset(1);
    for (LossKind k : {LossKind::MSE, LossKind::TLOSS}) {
        const TrainConfig t = quick_config(k);
        const TrainResult a = train(ds.train, ds.test, t);
        const TrainResult b = train(ds.train, ds.test, t);
        EXPECT_EQ(a.trace, b.trace);
        EXPECT_EQ(a.model, b.model);
        EXPECT_EQ(a.tloss.nu_tilde, b.tloss.nu_tilde);
    }
}

TEST(Train, DifferentSeedsDiffer) {
    const Dataset ds = tiny_dataset(1);
    TrainConfig t = quick_config(LossKind::MSE);
    const TrainResult a = train(ds.train, ds.test, t);
    t.seed = 6;
    EXPECT_NE(a.model, train(ds.train, ds.test, t).model);
}

TEST(Train, NuTildeOnlyLearnedByTLoss) {
    const Dataset ds = tiny_dataset(2);
    for (LossKind k : kAllLossKinds) {
        TrainConfig t = quick_config(k);
        t.nu_tilde_init = 0.25;
        const TrainResult r = train(ds.train, ds.test, t);
        if (k == LossKind::TLOSS) {
            EXPECT_NE(r.tloss.nu_tilde, 0.25);
        } else {
            EXPECT_EQ(r.tloss.nu_tilde, 0.25) << to_string(k);
            EXPECT_EQ(r.tloss.epsilon, t.tloss_epsilon);
            for (const auto& e : r.trace) EXPECT_EQ(e.nu_tilde, 0.25);
        }
        EXPECT_EQ(r.tloss.dim, 256u);
    }
}

TEST(Train, TraceHasOneRecordPerEpoch) {
    const Dataset ds = tiny_dataset(3);
    TrainConfig t = quick_config(LossKind::CE);
    t.epochs = 4;
    std::vector<std::size_t> seen;
    const TrainResult r = train(ds.train, ds.test, t, [&](const EpochRecord& e) { seen.push_back(e.epoch); });
    ASSERT_EQ(r.trace.size(), 4u);
    EXPECT_EQ(seen, (std::vector<std::size_t>{1, 2, 3, 4}));
    for (const auto& e : r.trace) {
        // Clean data: train masks equal clean masks.
        EXPECT_EQ(e.dice_vs_clean, e.dice_vs_noisy);
        EXPECT_GE(e.test_dice, 0.0);
        EXPECT_LE(e.test_dice, 1.0);
    }
}

TEST(Train, DivergenceIsReported) {
    const Dataset ds = tiny_dataset(4);
    TrainConfig t = quick_config(LossKind::MSE);
    t.lr = 1e308;
    try {
        train(ds.train, ds.test, t);
        FAIL() << "expected TrainingDiverged";
    } catch (const TrainingDiverged& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("epoch"), std::string::npos);
        EXPECT_NE(msg.find("batch"), std::string::npos);
        EXPECT_NE(msg.find("|theta|"), std::string::npos);
    }
}

TEST(Train, RejectsInvalidInput) {
    const Dataset ds = tiny_dataset();
    TrainConfig t = quick_config(LossKind::MSE);
    EXPECT_THROW(train({}, ds.test, t), std::invalid_argument);
    t.batch_size = 0;
    EXPECT_THROW(train(ds.train, ds.test, t), std::invalid_argument);
    t = quick_config(LossKind::MSE);
    auto bad = ds.train;
    bad[2].train_mask = Mask(8, 8);
    EXPECT_THROW(train(bad, ds.test, t), std::invalid_argument);
}

TEST(TrainDefault, MseOnCleanDataReachesDiceFloor) {
    const TrainResult& r = default_run(LossKind::MSE);
    ASSERT_EQ(r.trace.size(), 100u);
    EXPECT_GE(r.trace.back().test_dice, 0.85);
}

TEST(TrainDefault, SmoothedLossIsNonIncreasing) {
    for (LossKind k : {LossKind::MSE, LossKind::TLOSS}) {
        const TrainTrace& tr = default_run(k).trace;
        double prev = std::numeric_limits<double>::infinity();
        for (std::size_t w = 0; w + 10 <= tr.size(); w += 10) {
            double mean = 0.0;
            for (std::size_t i = w; i < w + 10; ++i) mean += tr[i].train_loss;
            mean /= 10.0;
            EXPECT_LE(mean, prev) << to_string(k) << " window starting at epoch " << w + 1;
            prev = mean;
        }
    }
}
