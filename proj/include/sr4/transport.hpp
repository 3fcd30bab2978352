#pragma once

#include <filesystem>
#include <functional>
#include <iosfwd>
#include <vector>

#include "sr4/geodesic.hpp"
#include "sr4/structure.hpp"

namespace sr4 {

struct DiscreteMeasure {
    std::vector<Vec4> points;
    std::vector<double> weights;

    int size() const { return static_cast<int>(points.size()); }
    /// Weights positive and summing to one (1e-12), points pairwise distinct.
    void validate() const;
};

DiscreteMeasure load_measure(const std::filesystem::path& path);
void save_measure(const DiscreteMeasure& m, const std::filesystem::path& path);
DiscreteMeasure parse_measure_json(const std::string& text);

struct TransportPlan {
    Eigen::MatrixXd matrix;  // n x m, row sums = mu, column sums = nu

    struct Triplet {
        int i, j;
        double mass;
    };
    std::vector<Triplet> support(double threshold = 1e-12) const;
};

struct Potentials {
    Eigen::VectorXd phi;   // per mu-point, phi[0] = 0
    Eigen::VectorXd phic;  // per nu-point
};

struct KantorovichSolution {
    TransportPlan plan;
    double cost = 0.0;
    Potentials duals;
    int iterations = 0;
};

/// Exact vertex optimum of the discrete Kantorovich problem by the
/// transportation simplex; duals read off the final basis tree.
KantorovichSolution solve_kantorovich(const DiscreteMeasure& mu, const DiscreteMeasure& nu,
                                      const Eigen::MatrixXd& C);

/// Optimal duals for a given optimal plan (verified against a fresh solve).
Potentials dual_potentials(const DiscreteMeasure& mu, const DiscreteMeasure& nu,
                           const Eigen::MatrixXd& C, const TransportPlan& plan);

/// phic_j = min_i (phi_i + c_ij)
Eigen::VectorXd c_transform(const Eigen::VectorXd& phi, const Eigen::MatrixXd& C);
/// phi_i = max_j (phic_j - c_ij)
Eigen::VectorXd cbar_transform(const Eigen::VectorXd& phic, const Eigen::MatrixXd& C);

/// Cost matrix c_ij = d_SR(x_i, y_j)^2 with a retry-once policy per entry.
Eigen::MatrixXd cost_matrix(const Frame& frame, const DiscreteMeasure& mu,
                            const DiscreteMeasure& nu, const DistanceOptions& opts = {});

struct ContactSet {
    std::vector<std::pair<int, int>> pairs;
    std::vector<std::vector<int>> targets;  // per mu index, sorted nu indices
    double tol = 0.0;                       // base tolerance used

    bool contains(int i, int j) const;
};

/// Pairs with phic_j - phi_i = c_ij within tol * (1 + |c_ij|).
ContactSet contact_set(const Potentials& pot, const Eigen::MatrixXd& C,
                       double tol = 1e-7);

enum class MoveStatus { Static, Moving };
enum class GeodesicTag { Regular, Singular, Unclassified };

struct Classification {
    struct Target {
        int j;
        GeodesicTag tag = GeodesicTag::Unclassified;
        int rank_min = 4;       // over the probe trials
        double smin_max = 0.0;  // largest 4th singular value seen
    };
    std::vector<MoveStatus> status;        // per mu index
    std::vector<int> static_match;        // nu index of the coinciding point, or -1
    std::vector<std::vector<Target>> contact_targets;
};

/// Static points are exact coordinate coincidences that are self-paired in
/// the contact set; each moving contact pair gets a regular/singular tag
/// from the randomized rank verdict along the recovered minimizing control.
Classification classify(const Frame& frame, const DiscreteMeasure& mu,
                        const DiscreteMeasure& nu, const ContactSet& gamma,
                        const DistanceOptions& opts = {}, int trials = 10,
                        std::uint64_t seed = 0);

struct StaticCheckReport {
    bool ok = true;
    std::vector<int> violations;  // static mu indices with missing diagonal mass
    double worst_deficit = 0.0;
};

/// Every static point of weight w must carry plan mass >= w - 1e-9 on its
/// coinciding target.
StaticCheckReport static_fixed_check(const Classification& cls, const TransportPlan& plan,
                                     const DiscreteMeasure& mu);

struct SupportPoint {
    Vec4 z;
    double value;
};

/// Regular grid over the cube of the given radius around x, filtered to the
/// closed Euclidean ball.
std::vector<SupportPoint> sample_ball_grid(const std::function<double(const Vec4&)>& f,
                                           const Vec4& x, double radius, int per_axis = 5);

struct WkResult {
    bool member = false;
    Vec4 p = Vec4::Zero();
    double margin = 0.0;  // worst constraint slack at the returned p
};

/// W_k test: exists |p| <= k with phi(x) <= phi(z) + <p, z-x> + k|x-z|^2
/// for all samples z. Linear feasibility in p via low-dimensional LP with
/// cutting planes for the Euclidean ball.
WkResult wk_membership(const std::vector<SupportPoint>& phi_samples, const Vec4& x,
                       int k);

/// Lemma-B.2 predicate: same support inequality with parameter sigma and no
/// slope bound, on the samples within the given radius.
WkResult semiconvex_support_test(const std::vector<SupportPoint>& f_samples, const Vec4& x,
                                 double sigma, double radius);

/// phi_tilde = sup_y [value_y + <p_y, y - z> - curvature |y - z|^2].
struct SupportInterpolant {
    std::vector<Vec4> points;
    std::vector<double> values;
    std::vector<Vec4> slopes;
    double curvature = 0.0;

    double eval(const Vec4& z) const;
    std::function<double(const Vec4&)> as_function() const;
};

/// Central-difference gradient with a step-halving stability check; throws
/// UnstableGradient at kinks.
Vec4 fd_gradient(const std::function<double(const Vec4&)>& f, const Vec4& x,
                 double h = 1e-5, double rel_tol = 5e-3);

/// Geodesic momentum of the transport map at x for the dual orientation
/// phic(y) - phi(x) <= c: the contact target is exp_x of half the gradient.
Vec4 transport_momentum(const std::function<double(const Vec4&)>& phi_tilde, const Vec4& x,
                        double h = 1e-5, double fd_rel_tol = 5e-3);

/// Contact target from the potential: hamiltonian_exp at the transport
/// momentum of the interpolated potential. fd_rel_tol is the gradient
/// stability threshold (loosen it for potentials with solver noise).
Vec4 map_from_potential(const Frame& frame, const std::function<double(const Vec4&)>& phi_tilde,
                        const Vec4& x, int ham_steps = 128, double fd_h = 1e-5,
                        double fd_rel_tol = 5e-3);

/// Transport report JSON: sparse plan, potentials, contact pairs at both
/// tolerances, classification tags, duality gap.
std::string transport_report_json(const DiscreteMeasure& mu, const DiscreteMeasure& nu,
                                  const Eigen::MatrixXd& C, const KantorovichSolution& sol,
                                  const ContactSet& strict, const ContactSet& loose,
                                  const Classification* cls);

}  // namespace sr4
