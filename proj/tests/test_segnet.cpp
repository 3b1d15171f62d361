#include <cmath>

#include <gtest/gtest.h>
#include <torch/torch.h>

#include "helpers.hpp"
#include "hmseg/error.hpp"
#include "hmseg/segnet.hpp"

using namespace hmseg;
using namespace hmseg::seg;

namespace {

SegConfig tiny_config() {
    SegConfig c;
    c.stages = 3;
    c.base_channels = 4;
    c.max_channels = 16;
    c.crop_px = 32;
    c.batch_size = 2;
    c.epochs = 2;
    c.seed = 7;
    return c;
}

// Striped images whose color encodes the class, so a tiny net can learn them.
std::vector<Sample> striped_samples(int n, int size, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    const std::uint8_t colors[kNumClasses][3] = {{250, 250, 250}, {40, 200, 40}, {40, 40, 220}, {200, 120, 40},
                                                 {220, 0, 0}};
    std::vector<Sample> out;
    for (int i = 0; i < n; ++i) {
        Sample s{"s" + std::to_string(i), Image(size, size, 3), LabelRaster(size, size)};
        const int stripe = 4 + static_cast<int>(rng() % 5);
        for (int r = 0; r < size; ++r) {
            for (int c = 0; c < size; ++c) {
                const int cls = ((r / stripe) + i) % kNumClasses;
                s.labels.set(r, c, static_cast<ClassId>(cls));
                for (int ch = 0; ch < 3; ++ch) s.image.at(r, c, ch) = colors[cls][ch];
            }
        }
        out.push_back(std::move(s));
    }
    return out;
}

// CE + (1 - mean soft Dice) with plain loops, batch of one.
double scalar_seg_loss(const std::vector<std::vector<double>>& logits, const std::vector<int>& target) {
    const std::size_t n = target.size(), c = logits[0].size();
    double ce = 0.0;
    std::vector<double> inter(c, 0.0), psum(c, 0.0), tsum(c, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        double mx = -1e300;
        for (double v : logits[i]) mx = std::max(mx, v);
        double z = 0.0;
        for (double v : logits[i]) z += std::exp(v - mx);
        for (std::size_t k = 0; k < c; ++k) {
            const double p = std::exp(logits[i][k] - mx) / z;
            const double t = static_cast<int>(k) == target[i] ? 1.0 : 0.0;
            inter[k] += p * t;
            psum[k] += p;
            tsum[k] += t;
            if (t == 1.0) ce -= std::log(p);
        }
    }
    double dice = 0.0;
    for (std::size_t k = 0; k < c; ++k) dice += (2.0 * inter[k] + kDiceSmooth) / (psum[k] + tsum[k] + kDiceSmooth);
    return ce / static_cast<double>(n) + 1.0 - dice / static_cast<double>(c);
}

bool same_parameters(UNet& a, UNet& b) {
    const auto pa = a->parameters(), pb = b->parameters();
    if (pa.size() != pb.size()) return false;
    for (std::size_t i = 0; i < pa.size(); ++i) {
        if (!torch::equal(pa[i], pb[i])) return false;
    }
    return true;
}

}  // namespace

TEST(SegConfig, ProfilesAndValidation) {
    const SegConfig def;
    EXPECT_EQ(def.stages, 8);
    EXPECT_EQ(def.downsampling_factor(), 128);
    EXPECT_EQ(def.epochs, 200);
    EXPECT_EQ(def.batch_size, 32);
    EXPECT_EQ(def.channels_at(0), 32);
    EXPECT_EQ(def.channels_at(7), 512);
    EXPECT_EQ(SegConfig::paper(Collection::cassini).crop_px, 1000);
    EXPECT_EQ(SegConfig::paper(Collection::etatmajor).crop_px, 500);
    EXPECT_EQ(SegConfig::paper(Collection::scan50).crop_px, 500);
    const SegConfig toy = SegConfig::toy();
    EXPECT_EQ(toy.stages, 5);
    EXPECT_EQ(toy.crop_px, 128);
    EXPECT_EQ(toy.batch_size, 8);
    EXPECT_EQ(toy.epochs, 20);
    SegConfig bad = def;
    bad.stages = 1;
    EXPECT_THROW(bad.validate(), ConfigError);
    const auto back = SegConfig::from_json(toy.to_json());
    EXPECT_EQ(back.to_json(), toy.to_json());
    auto j = toy.to_json();
    j["padding_mode"] = "zeros";
    EXPECT_THROW(SegConfig::from_json(j), ConfigError);
}

TEST(UNet, EightStagesReachOneByOneAtOneTwentyEight) {
    SegConfig c;
    c.base_channels = 2;
    c.max_channels = 8;
    UNet m = build_model(c);
    torch::NoGradGuard g;
    m->eval();
    const auto x = torch::randn({1, 3, 128, 128});
    const auto feats = m->encode(x);
    ASSERT_EQ(feats.size(), 8u);
    EXPECT_EQ(feats.front().size(2), 128);
    EXPECT_EQ(feats.back().size(2), 1);
    EXPECT_EQ(feats.back().size(3), 1);
    EXPECT_EQ(m->forward(x).sizes(), (std::vector<int64_t>{1, 5, 128, 128}));
    EXPECT_EQ(m->forward(torch::randn({1, 3, 500, 500})).sizes(), (std::vector<int64_t>{1, 5, 500, 500}));
}

TEST(UNet, ShapePreservedForArbitrarySizes) {
    UNet m = build_model(tiny_config());
    torch::NoGradGuard g;
    for (auto [h, w] : {std::pair{1, 1}, {3, 7}, {17, 5}, {33, 32}}) {
        EXPECT_EQ(m->forward(torch::randn({2, 3, h, w})).sizes(), (std::vector<int64_t>{2, 5, h, w}));
    }
}

TEST(UNet, SameSeedSameInitialParameters) {
    UNet a = build_model(tiny_config());
    UNet b = build_model(tiny_config());
    EXPECT_TRUE(same_parameters(a, b));
    SegConfig other = tiny_config();
    other.seed = 8;
    UNet c = build_model(other);
    EXPECT_FALSE(same_parameters(a, c));
}

TEST(MirrorPad, MatchesIndexFolding) {
    const auto x = torch::arange(6, torch::kFloat32).reshape({1, 1, 2, 3});
    const auto p = mirror_pad(x, 0, 3, 0, 4);
    ASSERT_EQ(p.sizes(), (std::vector<int64_t>{1, 1, 5, 7}));
    for (int r = 0; r < 5; ++r) {
        for (int c = 0; c < 7; ++c) {
            EXPECT_EQ(p[0][0][r][c].item<float>(), x[0][0][mirror_index(r, 2)][mirror_index(c, 3)].item<float>());
        }
    }
}

TEST(ImageTensor, RoundTrip) {
    std::mt19937_64 rng(1);
    const Image img = hmseg::testing::random_image(5, 9, rng);
    const auto t = image_to_tensor(img);
    EXPECT_EQ(t.sizes(), (std::vector<int64_t>{1, 3, 5, 9}));
    EXPECT_LE(t.max().item<float>(), 1.0f);
    EXPECT_GE(t.min().item<float>(), -1.0f);
    EXPECT_EQ(tensor_to_image(t), img);
}

TEST(SegLoss, UniformLogitsGiveLogFiveCrossEntropy) {
    const auto logits = torch::zeros({1, 5, 4, 4}, torch::kFloat64);
    const auto target = torch::randint(0, 5, {1, 4, 4}, torch::kLong);
    const double ce = torch::nn::functional::cross_entropy(logits, target).item<double>();
    EXPECT_NEAR(ce, std::log(5.0), 1e-12);
    EXPECT_GE(seg_loss(logits, target).item<double>(), std::log(5.0));
}

TEST(SegLoss, SaturatedCorrectLogitsApproachZero) {
    const auto target = torch::randint(0, 5, {2, 6, 6}, torch::kLong);
    auto onehot = torch::nn::functional::one_hot(target, 5).permute({0, 3, 1, 2}).to(torch::kFloat64);
    // Every class present, otherwise absent-class Dice terms are the smoothed 1.
    const double loss = seg_loss(onehot * 60.0, target).item<double>();
    EXPECT_GE(loss, 0.0);
    EXPECT_LT(loss, 0.05);
}

TEST(SegLoss, MatchesScalarOracleOnHandSetLogits) {
    const std::vector<std::vector<double>> logits = {
        {2.0, -1.0, 0.5, 0.0, 0.1}, {0.3, 0.3, 1.5, -2.0, 0.0}, {-0.5, 1.0, 0.0, 2.5, 0.2}, {1.0, 1.0, 1.0, 1.0, 3.0}};
    const std::vector<int> target = {0, 2, 1, 4};
    auto t = torch::zeros({1, 5, 2, 2}, torch::kFloat64);
    for (int i = 0; i < 4; ++i) {
        for (int k = 0; k < 5; ++k) t[0][k][i / 2][i % 2] = logits[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)];
    }
    const auto tgt = torch::tensor({0, 2, 1, 4}, torch::kLong).reshape({1, 2, 2});
    EXPECT_NEAR(seg_loss(t, tgt).item<double>(), scalar_seg_loss(logits, target), 1e-12);
}

TEST(SegLoss, InvalidTargetsAndShapesAreRejected) {
    const auto logits = torch::zeros({1, 5, 2, 2});
    EXPECT_THROW(seg_loss(logits, torch::full({1, 2, 2}, 5, torch::kLong)), DomainError);
    EXPECT_THROW(seg_loss(logits, torch::full({1, 2, 2}, -1, torch::kLong)), DomainError);
    EXPECT_THROW(seg_loss(logits, torch::zeros({1, 3, 2}, torch::kLong)), DimensionError);
}

TEST(SegLoss, GradientMatchesCentralDifferences) {
    torch::manual_seed(3);
    auto logits = torch::randn({1, 5, 4, 4}, torch::kFloat64).requires_grad_(true);
    const auto target = torch::randint(0, 5, {1, 4, 4}, torch::kLong);
    seg_loss(logits, target).backward();
    const auto grad = logits.grad().clone();
    torch::NoGradGuard g;
    auto flat = logits.detach().clone().view(-1);
    const double h = 1e-6;
    for (int64_t i = 0; i < flat.numel(); ++i) {
        const double orig = flat[i].item<double>();
        flat[i] = orig + h;
        const double up = seg_loss(flat.view({1, 5, 4, 4}), target).item<double>();
        flat[i] = orig - h;
        const double down = seg_loss(flat.view({1, 5, 4, 4}), target).item<double>();
        flat[i] = orig;
        const double fd = (up - down) / (2 * h);
        const double an = grad.view(-1)[i].item<double>();
        EXPECT_LT(std::abs(fd - an) / std::max(1e-6, std::abs(an) + std::abs(fd)), 1e-4) << i;
    }
}

TEST(PolyLr, DecaysToZero) {
    EXPECT_DOUBLE_EQ(poly_lr(0.01, 0, 10, 0.9), 0.01);
    EXPECT_NEAR(poly_lr(0.01, 5, 10, 0.9), 0.01 * std::pow(0.5, 0.9), 1e-15);
    EXPECT_DOUBLE_EQ(poly_lr(0.01, 10, 10, 0.9), 0.0);
}

TEST(Train, ZeroLearningRateLeavesParametersUnchanged) {
    SegConfig c = tiny_config();
    c.epochs = 1;
    c.learning_rate = 0.0;
    const auto data = striped_samples(4, 32, 1);
    UNet m = build_model(c);
    UNet ref = build_model(c);
    const auto state = train_supervised(m, data, data, c);
    EXPECT_TRUE(same_parameters(m, ref));
    ASSERT_EQ(state.loss_history.size(), 1u);
    EXPECT_DOUBLE_EQ(state.loss_history[0].val_score, state.initial_val_score);
}

TEST(Train, DeterministicHistoryAndBestSnapshotIsRestored) {
    SegConfig c = tiny_config();
    c.epochs = 3;
    const auto train = striped_samples(6, 32, 2);
    const auto val = striped_samples(3, 40, 3);
    UNet a = build_model(c);
    UNet b = build_model(c);
    const auto sa = train_supervised(a, train, val, c);
    const auto sb = train_supervised(b, train, val, c);
    EXPECT_EQ(sa.loss_history, sb.loss_history);
    double best = -1.0;
    for (const auto& r : sa.loss_history) best = std::max(best, r.val_score);
    EXPECT_DOUBLE_EQ(sa.best_val_score, best);
    EXPECT_DOUBLE_EQ(validation_score(a, val, c.crop_px, {}), sa.best_val_score);
    EXPECT_FALSE(sa.no_validation);
}

TEST(Train, EmptyValidationKeepsLastEpochAndFlagsIt) {
    SegConfig c = tiny_config();
    c.epochs = 1;
    UNet m = build_model(c);
    const auto state = train_supervised(m, striped_samples(2, 32, 4), {}, c);
    EXPECT_TRUE(state.no_validation);
    EXPECT_EQ(state.epoch, 1);
    EXPECT_THROW(train_supervised(m, {}, {}, c), DataError);
}

TEST(Train, WeakTrainingPairsByIdAndReducesToSupervised) {
    SegConfig c = tiny_config();
    c.epochs = 1;
    const auto samples = striped_samples(4, 32, 5);
    std::map<std::string, Image> images;
    std::map<std::string, LabelRaster> labels;
    for (const auto& s : samples) {
        images[s.tile_id] = s.image;
        labels[s.tile_id] = s.labels;
    }
    const WeakSplit split{{"s0", "s1", "s2"}, {"s3"}};
    UNet a = build_model(c);
    UNet b = build_model(c);
    const auto weak = train_weak(a, images, labels, split, c);
    const auto sup = train_supervised(b, {samples[0], samples[1], samples[2]}, {samples[3]}, c);
    EXPECT_EQ(weak.loss_history, sup.loss_history);
    labels.erase("s2");
    try {
        train_weak(a, images, labels, split, c);
        FAIL() << "expected PairingError";
    } catch (const PairingError& e) {
        EXPECT_NE(std::string(e.what()).find("s2"), std::string::npos);
    }
}

TEST(Predict, SinglePatchEqualsDirectAndShapesAreKept) {
    UNet m = build_model(tiny_config());
    std::mt19937_64 rng(6);
    const Image img = hmseg::testing::random_image(32, 32, rng);
    EXPECT_EQ(predict_tile(m, img, 32).data, predict_direct(m, img).data);
    const Image odd = hmseg::testing::random_image(45, 37, rng);
    const LabelRaster out = predict_tile(m, odd, 16);
    EXPECT_EQ(out.height(), 45);
    EXPECT_EQ(out.width(), 37);
    // Each patch region equals the model applied to that patch alone.
    const Image quad = hmseg::testing::random_image(64, 64, rng);
    const LabelRaster whole = predict_tile(m, quad, 32);
    const LabelRaster q = predict_direct(m, crop(quad, 32, 0, 32, 32));
    EXPECT_EQ(crop(whole.data, 32, 0, 32, 32), q.data);
}

TEST(SegCheckpoint, SaveLoadRoundTrip) {
    SegConfig c = tiny_config();
    c.epochs = 1;
    UNet m = build_model(c);
    const auto state = train_supervised(m, striped_samples(2, 32, 7), striped_samples(1, 32, 8), c);
    const auto path = hmseg::testing::scratch_dir("ck") / "m.pt";
    save_checkpoint(path, m, c, state);
    auto [loaded, ck] = load_checkpoint(path);
    EXPECT_TRUE(same_parameters(m, loaded));
    EXPECT_EQ(ck.cfg.to_json(), c.to_json());
    EXPECT_EQ(ck.state.loss_history, state.loss_history);
    EXPECT_EQ(ck.state.rng_seed, state.rng_seed);
    const auto path2 = path.parent_path() / "m2.pt";
    save_checkpoint(path2, loaded, ck.cfg, ck.state);
    auto [again, ck2] = load_checkpoint(path2);
    EXPECT_TRUE(same_parameters(loaded, again));
    EXPECT_EQ(ck2.state.to_json(), ck.state.to_json());
    EXPECT_THROW(load_checkpoint(path.parent_path() / "missing.pt"), IoError);
}
