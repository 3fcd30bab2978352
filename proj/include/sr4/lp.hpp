#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

namespace sr4::lp {

/// a . w <= b
struct Halfspace {
    Eigen::VectorXd a;
    double b;
};

struct LpResult {
    bool feasible = false;
    Eigen::VectorXd w;
};

/// Seidel's randomized incremental LP in fixed low dimension:
/// maximize c . w subject to halfspaces and box bounds lo <= w <= hi.
/// Expected O(constraints) per call for the dimensions used here (<= 5).
LpResult seidel_maximize(const Eigen::VectorXd& c, std::vector<Halfspace> halfspaces,
                         const Eigen::VectorXd& lo, const Eigen::VectorXd& hi,
                         std::uint64_t seed = 12345);

}  // namespace sr4::lp
