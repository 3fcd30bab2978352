#pragma once

#include <cstdint>
#include <iosfwd>

#include "sr4/singular.hpp"
#include "sr4/transport.hpp"

namespace sr4 {

/// Samples of a box region, either Monte-Carlo (volume = base volume, mean
/// estimators carry standard errors) or grid mode (cell counting,
/// deterministic).
struct SampleCloud {
    DomainBox base;
    std::vector<Vec4> samples;
    double cell_volume = 0.0;
    bool grid_mode = false;

    double volume() const {
        return grid_mode ? cell_volume * static_cast<double>(samples.size())
                         : base.volume();
    }

    static SampleCloud monte_carlo(const DomainBox& base, int n, std::uint64_t seed);
    static SampleCloud grid(const DomainBox& base, int per_axis);
};

struct JacobianTrace {
    std::vector<double> times;
    std::vector<double> J;  // J(0) = 1, J > 0
};

/// Co-integrates dJ/dt = div X(flow) * J (through log J) with the flow of
/// sign * X.
JacobianTrace jacobian_trace(const SingularField& sf, const Vec4& z, int sign, double T,
                             int steps);

struct VolumeReport {
    std::vector<double> times;
    std::vector<double> vol_mc, stderr_mc;    // occupancy estimate of the image
    std::vector<double> vol_div, stderr_div;  // Jacobian-integral estimate
    std::vector<double> lower_bound;          // exp(-C * 1.05 * l(A,t)) * vol(A)
    std::vector<double> l_A_t;                // max sampled metric path length
    double volA = 0.0;
    double C_used = 0.0;
    int sign = +1;
    int mc_probes = 0;
    std::uint64_t seed = 0;
    bool truncated = false;  // some trajectory left the box
};

struct VolumeOptions {
    int time_points = 8;
    int flow_steps = 128;   // must be a multiple of time_points
    int probes = 100000;    // occupancy sample size
    std::uint64_t seed = 2024;
};

/// Volume of the flowed cloud at a grid of times by the two estimators of
/// the Jacobian identity, plus the contraction lower bound.
VolumeReport volume_evolution(const SingularField& sf, const SampleCloud& A, int sign,
                              double T, const VolumeOptions& opts = {});

/// Checks vol(A_t) >= exp(-C l(A,t)) vol(A) - 3 stderr at every time.
/// Returns normally on success; throws AuditFailed with the violating time.
void contraction_audit(const VolumeReport& report, double C);

struct DecayCurve {
    std::vector<double> times;
    std::vector<double> volume;   // Jacobian-integral estimate
    std::vector<double> floor_;   // exp(-C * L) * vol(A), L the length bound
    double L_bound = 0.0;
    bool bounded_below = true;
};

/// Long-horizon volume curve for a cloud near H^c: mass may approach the
/// zero-measure set only in the infinite-time limit, so the curve must stay
/// above the exp(-C L) floor at every finite time.
DecayCurve hc_attraction_experiment(const SingularField& sf, const SampleCloud& A,
                                    double T_max, const VolumeOptions& opts = {});

struct SplitReport {
    std::vector<double> times;
    std::vector<double> vol1, vol2;      // per-class Jacobian-integral volumes
    std::vector<double> union_ratio;     // (vol1 + vol2) / vol(A)
    std::vector<double> lower1, lower2;  // per-class contraction floors
    std::vector<double> min_gap;         // smallest inter-class sample distance
    int count1 = 0, count2 = 0;
    bool disjoint = true;
    bool bounds_hold = true;
};

/// Splits the cloud by which disjoint target box the time-T flow endpoint
/// falls in and tracks both intermediate clouds; they stay disjoint and each
/// obeys its own contraction bound while the union ratio stays <= 1 + noise.
SplitReport disjoint_projection_experiment(const SingularField& sf, const SampleCloud& A,
                                           const DomainBox& targets1,
                                           const DomainBox& targets2, double T,
                                           const VolumeOptions& opts = {});

struct RegularContractionReport {
    std::vector<double> times;
    std::vector<double> vol_ratio;     // det-integral estimate of vol(T_t(A))/vol(A)
    std::vector<double> stderr_ratio;
    std::vector<double> det_min;       // smallest |det Jac T_t| over samples
    double hessian_lower = 0.0;        // smallest FD Hessian eigenvalue of phi_tilde
    bool bound_holds = true;           // vol_ratio >= det_min - 3 stderr
};

/// Lemma-4.1 experiment: pushes the cloud through T_t(x) = exp_x at the
/// t-scaled transport momentum of phi_tilde and compares the volume ratio
/// against the measured Jacobian floor.
RegularContractionReport regular_contraction_audit(
    const Frame& frame, const std::function<double(const Vec4&)>& phi_tilde,
    const SampleCloud& A, double T, const VolumeOptions& opts = {});

struct MixedFlowReport {
    std::vector<double> times;
    std::vector<double> vol_singular;  // exp(-C l) floor audit data
    std::vector<double> vol_regular;
    std::vector<double> lower_sum;     // exp(-C l) + det floor
    std::vector<double> union_upper;   // vol_singular + vol_regular
    bool tension_regime = false;       // lower_sum > 1 somewhere
};

/// Lemma-4.2 experiment: the same cloud flowed by the singular field and by
/// the regular transport map; reports the combined-volume inequality data.
MixedFlowReport mixed_flow_experiment(const SingularField& sf,
                                      const std::function<double(const Vec4&)>& phi_tilde,
                                      const SampleCloud& A, double T,
                                      const VolumeOptions& opts = {});

/// CSV rows t,vol_mc,stderr,vol_div,lower_bound,l_A_t.
void write_volume_csv(std::ostream& os, const VolumeReport& rep);

/// JSON summary with the audit verdict and estimator agreement.
std::string volume_report_json(const VolumeReport& rep, bool audit_pass,
                               const std::string& label);

}  // namespace sr4
