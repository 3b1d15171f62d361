#pragma once

#include <filesystem>
#include <random>
#include <string>

#include <gtest/gtest.h>

#include "hmseg/raster.hpp"

namespace hmseg::testing {

inline std::filesystem::path scratch_dir(const std::string& name) {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    auto dir = std::filesystem::temp_directory_path() / "hmseg_tests" /
               (std::string(info->test_suite_name()) + "." + info->name()) / name;
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

inline LabelRaster random_labels(int h, int w, std::mt19937_64& rng, int classes = kNumClasses) {
    LabelRaster l(h, w);
    std::uniform_int_distribution<int> d(0, classes - 1);
    for (auto& v : l.data.data) v = static_cast<std::uint8_t>(d(rng));
    return l;
}

inline Image random_image(int h, int w, std::mt19937_64& rng) {
    Image img(h, w, 3);
    std::uniform_int_distribution<int> d(0, 255);
    for (auto& v : img.data) v = static_cast<std::uint8_t>(d(rng));
    return img;
}

}  // namespace hmseg::testing
