#pragma once

#include <gtest/gtest.h>

#include <filesystem>
#include <ostream>
#include <random>
#include <string>

#include "motion/tensor.hpp"

namespace motion {

inline void PrintTo(const Tensor& t, std::ostream* os) {
    *os << shape_str(t.shape()) << " {";
    for (std::size_t i = 0; i < t.size() && i < 16; ++i) *os << (i ? ", " : "") << t[i];
    if (t.size() > 16) *os << ", ...";
    *os << '}';
}

}  // namespace motion

namespace test_util {

inline motion::Tensor random_tensor(const motion::Shape& shape, std::mt19937_64& rng, double lo = -1.0,
                                    double hi = 1.0) {
    std::uniform_real_distribution<double> dist(lo, hi);
    motion::Tensor t(shape);
    for (double& v : t.data()) v = dist(rng);
    return t;
}

inline void expect_near(const motion::Tensor& a, const motion::Tensor& b, double tol) {
    ASSERT_EQ(a.shape(), b.shape());
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], tol) << "element " << i;
}

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
        std::string name = "motion_" + tag;
        if (info != nullptr) name += std::string("_") + info->test_suite_name() + "_" + info->name();
        path_ = std::filesystem::temp_directory_path() / name;
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& leaf) const { return path_ / leaf; }

private:
    std::filesystem::path path_;
};

}  // namespace test_util
