#pragma once

#include <cmath>
#include <filesystem>
#include <string>

#include "binembed/ops.hpp"
#include "binembed/rng.hpp"
#include "binembed/tensor.hpp"

namespace test_support {

using binembed::FloatTensor;

inline FloatTensor random_tensor(binembed::Shape shape, binembed::Rng& rng, double lo = -2.0,
                                 double hi = 2.0) {
    FloatTensor t(std::move(shape));
    for (auto& v : t.data) v = static_cast<float>(rng.uniform(lo, hi));
    return t;
}

/// Random tensor with no exact zeros (sign-sensitive tests).
inline FloatTensor random_signs_source(binembed::Shape shape, binembed::Rng& rng) {
    FloatTensor t(std::move(shape));
    for (auto& v : t.data) {
        double u = rng.uniform(-1.0, 1.0);
        if (u == 0.0) u = 0.5;
        v = static_cast<float>(u);
    }
    return t;
}

inline double max_abs_diff(const FloatTensor& a, const FloatTensor& b) {
    double m = 0.0;
    for (int64_t i = 0; i < a.numel(); ++i)
        m = std::max(m, std::fabs(double(a.data[i]) - double(b.data[i])));
    return m;
}

/// max_i |a_i - b_i| / max(1, |a_i|, |b_i|)
inline double max_rel_diff(const FloatTensor& a, const FloatTensor& b) {
    double m = 0.0;
    for (int64_t i = 0; i < a.numel(); ++i) {
        const double den = std::max({1.0, std::fabs(double(a.data[i])), std::fabs(double(b.data[i]))});
        m = std::max(m, std::fabs(double(a.data[i]) - double(b.data[i])) / den);
    }
    return m;
}

class TempDir {
  public:
    explicit TempDir(const std::string& tag) {
        dir_ = std::filesystem::temp_directory_path() /
               ("binembed_test_" + tag + "_" + std::to_string(::getpid()));
        std::filesystem::create_directories(dir_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(dir_, ec);
    }
    std::string path(const std::string& name) const { return (dir_ / name).string(); }
    std::string dir() const { return dir_.string(); }

  private:
    std::filesystem::path dir_;
};

}  // namespace test_support
