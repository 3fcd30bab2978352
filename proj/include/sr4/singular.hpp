#pragma once

#include <iosfwd>
#include <vector>

#include "sr4/structure.hpp"

namespace sr4 {

/// The horizontal line field X = alpha1 X^1 + alpha2 X^2 whose integral
/// curves are the singular horizontal paths on H. All coefficient data is
/// exact polynomial; C_bound satisfies div X >= -C_bound |X|_g on the box.
struct SingularField {
    Frame frame;
    Poly4 alpha1, alpha2;
    VectorField4 X;
    Poly4 divX;
    double C_bound = 0.0;

    // Cached pieces of Notation-3.1 used by the closed-form divergence and
    // the flow integrators.
    Poly4 E, F, A1, A11, B1, B11, divX2;
    std::array<Poly4, 4> gradA, gradB;

    /// Metric norm |X(x)|_g = |(alpha1, alpha2)(x)| for the orthonormal frame.
    double g_norm(const Vec4& x) const {
        return std::hypot(alpha1.eval(x), alpha2.eval(x));
    }

    Vec4 eval(const Vec4& x) const { return X.eval(x); }
};

/// Builds the line field of the frame; requires the certified growth
/// condition with A_x1 != 0 on the box.
SingularField line_field(const Frame& frame);

struct DivergenceValue {
    double value;        // exact polynomial divergence
    double closed_form;  // 2 a2 (E/A_x1 + div X^2) + 2 a1 (A_x1x1/A_x1)
};

/// Both divergence routes at x; they must agree to 1e-9 relative.
DivergenceValue divergence(const SingularField& sf, const Vec4& x);

/// Contraction constant C with div X >= -C |X|_g on the box: grid maxima of
/// the bounded factors, a 1.1 safety inflation, then a random-point audit.
double divergence_bound(const SingularField& sf, int grid_n = 17,
                        int audit_samples = 10000, std::uint64_t seed = 2024);

/// Step count for which h * sup|DX| <= 0.1 over the box.
int suggested_flow_steps(const SingularField& sf, double T);

struct FlowPath {
    std::vector<double> times;
    std::vector<Vec4> points;
    int sign = +1;  // epsilon in {-1, +1}
    bool truncated = false;
    double t_exit = 0.0;  // meaningful when truncated
};

/// Fixed-step RK4 trajectory of dx/dt = sign * X(x); truncates with a flag
/// when the trajectory leaves the box.
FlowPath flow(const SingularField& sf, const Vec4& x0, int sign, double T, int steps);

struct AdjointPath {
    std::vector<double> times;
    std::vector<Vec4> p;  // covector per node, p4 == 1
};

/// Normalized singular covector p = (0, [A B_x1/A_x1 - B] , -B_x1/A_x1, 1)
/// evaluated along the path nodes.
AdjointPath adjoint_certificate(const Frame& frame, const FlowPath& path);

struct SingularityReport {
    // Per-node residuals of the singularity system for the given covector.
    std::vector<double> res_x1, res_x2, res_bracket, res_order3;
    // Adjoint-ODE check: a covector transported by the raw adjoint equation
    // from p(0) must stay on the annihilator line, i.e. q/q4 == p.
    std::vector<double> res_ode;
    // Informational: first-order finite differences of p against the raw
    // adjoint right-hand side (resolution-limited).
    std::vector<double> res_ode_fd;
    double max_res_x1 = 0, max_res_x2 = 0, max_res_bracket = 0, max_res_order3 = 0;
    double max_res_ode = 0, max_res_ode_fd = 0;
    bool is_line_field_flow = false;  // node controls matched sign*(a1,a2)
};

/// Checks p.X^1 = p.X^2 = p.[X^1,X^2] = 0 and the order-3 kernel equation
/// along the path, plus adjoint-ODE transport when the path follows the
/// line field. Throws CertificateFailed beyond tol.
SingularityReport verify_singularity(const Frame& frame, const FlowPath& path,
                                     const AdjointPath& adj, double tol);

/// CSV dump: t,x1..x4,p1..p4,res_X1,res_X2,res_bracket.
void write_flow_csv(std::ostream& os, const FlowPath& path, const AdjointPath& adj,
                    const SingularityReport& rep);

}  // namespace sr4
