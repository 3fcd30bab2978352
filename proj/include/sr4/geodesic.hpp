#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

#include "sr4/structure.hpp"

namespace sr4 {

/// Piecewise-constant control on a uniform partition of [0, T].
struct Control {
    double T = 1.0;
    std::vector<Eigen::Vector2d> values;

    int intervals() const { return static_cast<int>(values.size()); }

    static Control constant(const Eigen::Vector2d& u, double T, int n);
    static Control zero(double T, int n) { return constant({0.0, 0.0}, T, n); }
};

/// (length, energy) = (sum h |u_k|, sum h |u_k|^2); the frame is
/// g-orthonormal so control norms are Euclidean.
std::pair<double, double> length_energy(const Frame& frame, const Control& u);

struct HorizontalPath {
    Control control;
    Vec4 start;
    std::vector<Vec4> nodes;  // interval boundaries, N+1 points
};

/// Integrates the driven ODE dx/dt = u1 X^1 + u2 X^2. box_pad inflates the
/// domain check (the distance solver lets iterates wander slightly).
HorizontalPath integrate_path(const Frame& frame, const Vec4& x, const Control& u,
                              int substeps = 2, double box_pad = 0.0);

Vec4 endpoint(const Frame& frame, const Vec4& x, const Control& u, int substeps = 2,
              double box_pad = 0.0);

/// Gradient of gT . endpoint(x, u) with respect to the stacked control
/// vector (u1_0, u2_0, u1_1, ...), by the discrete adjoint of the RK4 scheme.
Eigen::VectorXd endpoint_pullback(const Frame& frame, const Vec4& x, const Control& u,
                                  const Vec4& gT, int substeps = 2, double box_pad = 0.0);

struct RankReport {
    Vec4 singular_values;  // descending
    int rank = 0;
    std::array<Control, 4> probes;
};

/// Rank of the endpoint differential restricted to four probe directions:
/// integrates the linearized ODE along gamma_u per probe and takes singular
/// values of the 4x4 image matrix.
RankReport variational_rank(const Frame& frame, const Vec4& x, const Control& u,
                            const std::array<Control, 4>& probes, int substeps = 2);

struct RankVerdict {
    bool singular = false;  // every trial saw rank < 4
    int min_rank = 4;
    int max_rank = 0;
    double max_smin = 0.0;
    double min_smin = 0.0;
    int trials = 0;
};

/// Repeats variational_rank with fresh random probes; the singular verdict
/// requires rank < 4 in every trial.
RankVerdict randomized_rank_verdict(const Frame& frame, const Vec4& x, const Control& u,
                                    int trials = 10, std::uint64_t seed = 0,
                                    int substeps = 2);

double hamiltonian_value(const Frame& frame, const Vec4& x, const Vec4& p);

/// Normal Hamiltonian flow of H = ((p.X^1)^2 + (p.X^2)^2) / 2: full (x, p)
/// state at time t.
std::pair<Vec4, Vec4> hamiltonian_flow(const Frame& frame, const Vec4& x, const Vec4& p0,
                                       double t, int steps = 128);

/// Time-t point of the normal Hamiltonian flow from (x, p0).
Vec4 hamiltonian_exp(const Frame& frame, const Vec4& x, const Vec4& p0, double t,
                     int steps = 128);

struct DistanceOptions {
    int intervals = 32;
    int substeps = 2;
    int starts = 8;
    int penalty_rounds = 6;    // mu = 10, 100, ..., 10^6
    double penalty_base = 10.0;
    int max_iters = 200;       // quasi-Newton iterations per round
    double endpoint_tol = 1e-6;
    std::uint64_t seed = 0;
    bool polish = true;        // Gauss-Newton endpoint projection
    bool parallel = true;      // starts run concurrently, reduction is deterministic
};

struct StartDiag {
    bool feasible = false;
    bool warm_shooting = false;  // seeded from a converged normal-geodesic shot
    double energy = 0.0;
    double endpoint_error = 0.0;
};

struct DistanceResult {
    double d = 0.0;            // sqrt(T * energy) of the best feasible control
    double energy = 0.0;
    double lower_bound = 0.0;  // |x - y| / frame norm bound
    double endpoint_error = 0.0;
    int winning_start = -1;
    bool converged = false;
    Control u;
    std::vector<StartDiag> starts;
};

/// Direct method: multi-start penalty minimization of the control energy
/// subject to endpoint(x, u) = y. The reported d is a certified upper bound
/// (feasible control re-integrated); throws NotConverged when no start
/// reaches the endpoint tolerance.
DistanceResult sr_distance(const Frame& frame, const Vec4& x, const Vec4& y,
                           const DistanceOptions& opts = {});

struct DistanceCacheRow {
    Vec4 x, y;
    double d = 0.0;
    bool converged = false;
};

/// CSV rows x(4),y(4),d,converged with the seed recorded in the header.
void write_distance_cache_csv(std::ostream& os, const std::vector<DistanceCacheRow>& rows,
                              std::uint64_t seed);

}  // namespace sr4
