#pragma once

#include <Eigen/Dense>
#include <array>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

namespace sr4 {

using Vec4 = Eigen::Vector4d;
using Mat4 = Eigen::Matrix4d;

inline constexpr const char* kVersion = "0.1.0";

/// Axis-aligned compact box in R^4, the working chart for all experiments.
struct DomainBox {
    Vec4 center = Vec4::Zero();
    Vec4 half = Vec4::Ones();

    Vec4 lo() const { return center - half; }
    Vec4 hi() const { return center + half; }

    bool contains(const Vec4& x, double pad = 0.0) const {
        for (int i = 0; i < 4; ++i) {
            if (std::abs(x[i] - center[i]) > half[i] + pad) return false;
        }
        return true;
    }

    double volume() const { return 16.0 * half.prod(); }

    double euclid_diameter() const { return 2.0 * half.norm(); }

    /// Largest |x_i| attainable on the box, per axis (monomial bound radius).
    Vec4 abs_radius() const { return center.cwiseAbs() + half; }

    Vec4 sample(std::mt19937_64& rng) const {
        std::uniform_real_distribution<double> u(-1.0, 1.0);
        Vec4 x;
        for (int i = 0; i < 4; ++i) x[i] = center[i] + half[i] * u(rng);
        return x;
    }

    /// Regular grid with n points per axis (n >= 1; n == 1 gives the center).
    void for_each_grid(int n, const std::function<void(const Vec4&)>& fn) const {
        std::array<int, 4> idx{0, 0, 0, 0};
        Vec4 x;
        for (idx[0] = 0; idx[0] < n; ++idx[0])
            for (idx[1] = 0; idx[1] < n; ++idx[1])
                for (idx[2] = 0; idx[2] < n; ++idx[2])
                    for (idx[3] = 0; idx[3] < n; ++idx[3]) {
                        for (int i = 0; i < 4; ++i) {
                            x[i] = (n == 1) ? center[i]
                                            : center[i] - half[i] +
                                                  2.0 * half[i] * idx[i] / (n - 1);
                        }
                        fn(x);
                    }
    }

    DomainBox inflated(double factor) const { return {center, half * factor}; }
};

}  // namespace sr4
