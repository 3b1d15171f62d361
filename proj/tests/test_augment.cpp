#include <set>

#include <gtest/gtest.h>

#include "helpers.hpp"
#include "hmseg/augment.hpp"

using namespace hmseg;

namespace {

std::set<std::uint8_t> classes_of(const LabelRaster& l) { return {l.data.data.begin(), l.data.data.end()}; }

}  // namespace

TEST(Resize, SameSizeIsIdentity) {
    std::mt19937_64 rng(1);
    const Image img = hmseg::testing::random_image(7, 5, rng);
    EXPECT_EQ(resize_bilinear(img, 7, 5), img);
    const LabelRaster l = hmseg::testing::random_labels(7, 5, rng);
    EXPECT_EQ(resize_nearest(l.data, 7, 5), l.data);
}

TEST(Resize, BilinearOfConstantIsConstantAndUpsamplingInterpolates) {
    const Image flat(4, 4, 3, 90);
    const Image up = resize_bilinear(flat, 11, 6);
    for (auto v : up.data) EXPECT_EQ(v, 90);
    Image ramp(1, 2, 1);
    ramp.at(0, 0) = 0;
    ramp.at(0, 1) = 100;
    const Image r4 = resize_bilinear(ramp, 1, 4);
    // Half-pixel centres sample source x = -0.25, 0.25, 0.75, 1.25 (clamped).
    EXPECT_EQ(r4.at(0, 0), 0);
    EXPECT_EQ(r4.at(0, 1), 25);
    EXPECT_EQ(r4.at(0, 2), 75);
    EXPECT_EQ(r4.at(0, 3), 100);
}

TEST(RandomResizedCrop, UnitScaleOnExactSizeIsIdentity) {
    std::mt19937_64 rng(2);
    const Image img = hmseg::testing::random_image(32, 32, rng);
    const LabelRaster l = hmseg::testing::random_labels(32, 32, rng);
    const auto s = random_resized_crop(img, l, 32, {1.0, 1.0}, 99);
    EXPECT_EQ(s.image, img);
    EXPECT_EQ(s.labels.data, l.data);
}

TEST(RandomResizedCrop, ConstantFieldStaysConstant) {
    const Image img(40, 50, 3, 17);
    const LabelRaster forest(40, 50, ClassId::forest);
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto s = random_resized_crop(img, forest, 32, {0.7, 1.4}, seed);
        EXPECT_EQ(s.labels.height(), 32);
        EXPECT_EQ(classes_of(s.labels), std::set<std::uint8_t>{1});
    }
}

TEST(RandomResizedCrop, LabelClassesAreASubsetOfTheSource) {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 40; ++trial) {
        const int h = 24 + rng() % 40, w = 24 + rng() % 40;  // covers the crop
        const Image img = hmseg::testing::random_image(h, w, rng);
        LabelRaster l(h, w, ClassId::roads);
        for (int r = 0; r < h / 2; ++r) {
            for (int c = 0; c < w; ++c) l.set(r, c, ClassId::hydrography);
        }
        const auto s = random_resized_crop(img, l, 24, {0.5, 2.0}, rng);
        const auto cls = classes_of(s.labels);
        for (auto c : cls) EXPECT_TRUE(c == 2 || c == 3) << int(c);
    }
}

TEST(RandomResizedCrop, SmallSourcesArePaddedToTheCrop) {
    std::mt19937_64 rng(4);
    const Image img = hmseg::testing::random_image(10, 12, rng);
    const LabelRaster l(10, 12, ClassId::forest);
    const auto s = random_resized_crop(img, l, 32, {1.0, 1.0}, 5);
    EXPECT_EQ(s.image.height, 32);
    EXPECT_EQ(s.image.width, 32);
    EXPECT_EQ(s.labels.height(), 32);
    const auto cls = classes_of(s.labels);
    EXPECT_TRUE(cls.contains(0));  // background padding
}

TEST(RandomResizedCrop, DeterministicPerSeed) {
    std::mt19937_64 rng(5);
    const Image img = hmseg::testing::random_image(64, 64, rng);
    const LabelRaster l = hmseg::testing::random_labels(64, 64, rng);
    const auto a = random_resized_crop(img, l, 32, {0.7, 1.4}, 77);
    const auto b = random_resized_crop(img, l, 32, {0.7, 1.4}, 77);
    EXPECT_EQ(a.image, b.image);
    EXPECT_EQ(a.labels.data, b.labels.data);
}

TEST(RandomResizedCrop, PairSharesTheWindow) {
    std::mt19937_64 rng(6);
    const Image img = hmseg::testing::random_image(48, 48, rng);
    std::mt19937_64 r1(8);
    const auto [a, b] = random_resized_crop_pair(img, img, 20, {0.7, 1.4}, r1);
    EXPECT_EQ(a, b);
    EXPECT_EQ(a.height, 20);
}
