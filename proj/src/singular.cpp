#include "sr4/singular.hpp"

#include <Eigen/Dense>
#include <ostream>
#include <sstream>

#include "sr4/errors.hpp"
#include "sr4/integrate.hpp"

namespace sr4 {

SingularField line_field(const Frame& frame) {
    require_growth(frame);

    SingularField sf;
    sf.frame = frame;
    sf.A1 = frame.A.partial(0);
    sf.A11 = sf.A1.partial(0);
    sf.B1 = frame.B.partial(0);
    sf.B11 = sf.B1.partial(0);
    std::tie(sf.E, sf.F) = ef_coefficients(frame);

    sf.alpha1 = sf.E * sf.B1 - sf.F * sf.A1;
    sf.alpha2 = sf.B11 * sf.A1 - sf.A11 * sf.B1;

    sf.X.c[0] = sf.alpha1;
    sf.X.c[1] = sf.alpha2;
    sf.X.c[2] = sf.alpha2 * frame.A;
    sf.X.c[3] = sf.alpha2 * frame.B;
    sf.divX = sf.X.divergence();
    sf.divX2 = frame.A.partial(2) + frame.B.partial(3);
    sf.gradA = frame.A.gradient();
    sf.gradB = frame.B.gradient();

    sf.C_bound = divergence_bound(sf);
    return sf;
}

DivergenceValue divergence(const SingularField& sf, const Vec4& x) {
    const double a1x = sf.A1.eval(x);
    const double scale = 1.0 + sf.A1.sup_bound(sf.frame.box);
    if (std::abs(a1x) <= 1e-14 * scale) {
        throw ChartDegenerate("divergence: A_x1 vanishes at the evaluation point");
    }
    DivergenceValue dv;
    dv.value = sf.divX.eval(x);
    const double g = sf.E.eval(x) / a1x + sf.divX2.eval(x);
    const double k = sf.A11.eval(x) / a1x;
    dv.closed_form = 2.0 * sf.alpha2.eval(x) * g + 2.0 * sf.alpha1.eval(x) * k;
    const double ref = std::max({1.0, std::abs(dv.value), std::abs(dv.closed_form)});
    if (std::abs(dv.value - dv.closed_form) > 1e-9 * ref) {
        std::ostringstream os;
        os << "divergence routes disagree at (" << x.transpose() << "): "
           << dv.value << " vs " << dv.closed_form;
        throw Error(os.str());
    }
    return dv;
}

double divergence_bound(const SingularField& sf, int grid_n, int audit_samples,
                        std::uint64_t seed) {
    const DomainBox& box = sf.frame.box;
    const double a1_scale = 1.0 + sf.A1.sup_bound(box);

    // div X = 2 a2 G + 2 a1 K with G = E/A_x1 + div X^2 and K = A_x1x1/A_x1,
    // so div X >= -2 sqrt(G^2 + K^2) |(a1, a2)| pointwise.
    double c1 = 0.0, c2 = 0.0, cpt = 0.0;
    box.for_each_grid(grid_n, [&](const Vec4& x) {
        const double a1x = sf.A1.eval(x);
        if (std::abs(a1x) <= 1e-14 * a1_scale) {
            throw ChartDegenerate("divergence_bound: A_x1 vanishes on the grid");
        }
        const double k = std::abs(sf.A11.eval(x) / a1x);
        const double g = std::abs(sf.E.eval(x) / a1x + sf.divX2.eval(x));
        c1 = std::max(c1, k);
        c2 = std::max(c2, g);
        cpt = std::max(cpt, 2.0 * std::hypot(k, g));
    });
    double C = 1.1 * cpt;

    // Post-verification on random points; a grid miss bumps the constant.
    std::mt19937_64 rng(seed);
    const double tol = 1e-12 * (1.0 + sf.divX.sup_bound(box));
    for (int s = 0; s < audit_samples; ++s) {
        const Vec4 x = box.sample(rng);
        const double nx = sf.g_norm(x);
        const double d = sf.divX.eval(x);
        if (d + C * nx < -tol) {
            if (nx <= 0) throw Error("divergence_bound: negative divergence at a zero of X");
            C = 1.1 * (-d / nx);
        }
    }
    return C;
}

int suggested_flow_steps(const SingularField& sf, double T) {
    double frob = 0.0;
    for (const auto& row : sf.X.jacobian()) {
        for (const Poly4& p : row) {
            const double b = p.sup_bound(sf.frame.box);
            frob += b * b;
        }
    }
    const double dx_bound = std::sqrt(frob);
    const int steps = static_cast<int>(std::ceil(std::abs(T) * dx_bound / 0.1));
    return std::max(steps, 16);
}

FlowPath flow(const SingularField& sf, const Vec4& x0, int sign, double T, int steps) {
    if (!sf.frame.box.contains(x0)) {
        throw LeftDomain("flow: start point outside the domain box", 0.0);
    }
    FlowPath path;
    path.sign = sign;
    path.times.reserve(steps + 1);
    path.points.reserve(steps + 1);
    path.times.push_back(0.0);
    path.points.push_back(x0);

    const double s = static_cast<double>(sign);
    const auto f = [&](const Vec4& x) { return Vec4(s * sf.X.eval(x)); };
    const double h = T / steps;
    Vec4 x = x0;
    for (int i = 0; i < steps; ++i) {
        const Vec4 next = rk4_step(f, x, h);
        if (!sf.frame.box.contains(next)) {
            path.truncated = true;
            path.t_exit = (i + 1) * h;
            break;
        }
        x = next;
        path.times.push_back((i + 1) * h);
        path.points.push_back(x);
    }
    return path;
}

namespace {

Vec4 normalized_covector(const Frame& frame, const Poly4& A1, const Poly4& B1,
                         const Vec4& x, double a1_scale) {
    const double a1x = A1.eval(x);
    if (std::abs(a1x) <= 1e-14 * a1_scale) {
        throw ChartDegenerate("adjoint certificate: A_x1 vanishes along the path");
    }
    const double ratio = B1.eval(x) / a1x;
    return {0.0, frame.A.eval(x) * ratio - frame.B.eval(x), -ratio, 1.0};
}

}  // namespace

AdjointPath adjoint_certificate(const Frame& frame, const FlowPath& path) {
    const Poly4 A1 = frame.A.partial(0);
    const Poly4 B1 = frame.B.partial(0);
    const double a1_scale = 1.0 + A1.sup_bound(frame.box);
    AdjointPath adj;
    adj.times = path.times;
    adj.p.reserve(path.points.size());
    for (const Vec4& x : path.points) {
        adj.p.push_back(normalized_covector(frame, A1, B1, x, a1_scale));
    }
    return adj;
}

SingularityReport verify_singularity(const Frame& frame, const FlowPath& path,
                                     const AdjointPath& adj, double tol) {
    if (path.points.size() != adj.p.size() || path.points.size() < 2) {
        throw Error("verify_singularity: path and certificate grids must match");
    }
    const BracketSet bs = brackets(frame);
    const auto [E, F] = ef_coefficients(frame);
    const Poly4 A1 = frame.A.partial(0), B1 = frame.B.partial(0);
    const Poly4 alpha1 = E * B1 - F * A1;
    const Poly4 alpha2 = B1.partial(0) * A1 - A1.partial(0) * B1;

    const int n = static_cast<int>(path.points.size());
    SingularityReport rep;
    rep.res_x1.resize(n);
    rep.res_x2.resize(n);
    rep.res_bracket.resize(n);
    rep.res_order3.resize(n);
    rep.res_ode.assign(n, 0.0);
    rep.res_ode_fd.assign(n, 0.0);

    // Controls read off the path: in this chart u = (dx1/dt, dx2/dt).
    std::vector<Eigen::Vector2d> u_fd(n), u_lf(n);
    double u_mismatch = 0.0;
    for (int k = 0; k < n; ++k) {
        const Vec4& x = path.points[k];
        int lo = std::max(k - 1, 0), hi = std::min(k + 1, n - 1);
        const double dt = path.times[hi] - path.times[lo];
        u_fd[k] = (path.points[hi].head<2>() - path.points[lo].head<2>()) / dt;
        u_lf[k] = path.sign * Eigen::Vector2d(alpha1.eval(x), alpha2.eval(x));
        u_mismatch = std::max(u_mismatch, (u_fd[k] - u_lf[k]).norm());
    }
    const double h_path = path.times[1] - path.times[0];
    const double dx_scale = 1.0 + bs.x2.sup_bound(frame.box);
    rep.is_line_field_flow = u_mismatch <= 10.0 * dx_scale * dx_scale * h_path * h_path +
                                               1e-10;

    int bad_node = -1;
    std::string bad_quantity;
    auto gate = [&](int k, double value, double& maxv, const char* name) {
        maxv = std::max(maxv, value);
        if (value > tol && bad_node < 0) {
            bad_node = k;
            bad_quantity = name;
        }
    };

    for (int k = 0; k < n; ++k) {
        const Vec4& x = path.points[k];
        const Vec4& p = adj.p[k];
        const Eigen::Vector2d u = rep.is_line_field_flow ? u_lf[k] : u_fd[k];
        rep.res_x1[k] = std::abs(p.dot(bs.x1.eval(x)));
        rep.res_x2[k] = std::abs(p.dot(bs.x2.eval(x)));
        rep.res_bracket[k] = std::abs(p.dot(bs.br.eval(x)));
        rep.res_order3[k] =
            std::abs(u[0] * p.dot(bs.br11.eval(x)) + u[1] * p.dot(bs.br12.eval(x)));
        gate(k, rep.res_x1[k], rep.max_res_x1, "p.X1");
        gate(k, rep.res_x2[k], rep.max_res_x2, "p.X2");
        gate(k, rep.res_bracket[k], rep.max_res_bracket, "p.[X1,X2]");
        gate(k, rep.res_order3[k], rep.max_res_order3, "order-3 kernel");
    }

    // Adjoint transport: integrate the raw equation
    //   qdot = -u1 q.DX^1 - u2 q.DX^2 = -u2 (q3 grad A + q4 grad B)
    // (X^1 is constant) together with the flow, and compare q/q4 with the
    // normalized certificate at every node. Only meaningful for line-field
    // flows, where the continuous control is sign*(a1, a2)(x).
    if (rep.is_line_field_flow) {
        const auto gA = frame.A.gradient();
        const auto gB = frame.B.gradient();
        const double s = static_cast<double>(path.sign);
        using State = Eigen::Matrix<double, 8, 1>;
        const VectorField4 X{{alpha1, alpha2, alpha2 * frame.A, alpha2 * frame.B}};
        const auto f = [&](const State& y) {
            const Vec4 x = y.head<4>();
            const Vec4 q = y.tail<4>();
            State dy;
            dy.head<4>() = s * X.eval(x);
            const double u2 = s * alpha2.eval(x);
            Vec4 gAx, gBx;
            for (int i = 0; i < 4; ++i) {
                gAx[i] = gA[i].eval(x);
                gBx[i] = gB[i].eval(x);
            }
            dy.tail<4>() = -u2 * (q[2] * gAx + q[3] * gBx);
            return dy;
        };
        State y;
        y.head<4>() = path.points.front();
        y.tail<4>() = adj.p.front();
        const int substeps = 32;
        for (int k = 1; k < n; ++k) {
            const double dt = path.times[k] - path.times[k - 1];
            const double h = dt / substeps;
            for (int ss = 0; ss < substeps; ++ss) y = rk4_step(f, y, h);
            const Vec4 q = y.tail<4>();
            if (std::abs(q[3]) < 1e-8) {
                rep.res_ode[k] = 1.0;
            } else {
                rep.res_ode[k] = (Vec4(q / q[3]) - adj.p[k]).cwiseAbs().maxCoeff();
            }
            gate(k, rep.res_ode[k], rep.max_res_ode, "adjoint ODE transport");
        }
    }

    // Informational finite-difference residual of the raw adjoint equation.
    for (int k = 1; k + 1 < n; ++k) {
        const Vec4& x = path.points[k];
        const double dt = path.times[k + 1] - path.times[k - 1];
        const Vec4 pdot = (adj.p[k + 1] - adj.p[k - 1]) / dt;
        const Eigen::Vector2d u = rep.is_line_field_flow ? u_lf[k] : u_fd[k];
        Vec4 gAx, gBx;
        for (int i = 0; i < 4; ++i) {
            gAx[i] = frame.A.partial(i).eval(x);
            gBx[i] = frame.B.partial(i).eval(x);
        }
        const Vec4 rhs = -u[1] * (adj.p[k][2] * gAx + adj.p[k][3] * gBx);
        rep.res_ode_fd[k] = (pdot - rhs).norm();
        rep.max_res_ode_fd = std::max(rep.max_res_ode_fd, rep.res_ode_fd[k]);
    }

    if (bad_node >= 0) {
        std::ostringstream os;
        os << "singularity certificate violated at node " << bad_node << " (t = "
           << path.times[bad_node] << "): " << bad_quantity << " residual exceeds "
           << tol;
        throw CertificateFailed(os.str(), bad_node, bad_quantity);
    }
    return rep;
}

void write_flow_csv(std::ostream& os, const FlowPath& path, const AdjointPath& adj,
                    const SingularityReport& rep) {
    os << "t,x1,x2,x3,x4,p1,p2,p3,p4,res_X1,res_X2,res_bracket\n";
    os.precision(17);
    for (std::size_t k = 0; k < path.points.size(); ++k) {
        const Vec4& x = path.points[k];
        const Vec4& p = adj.p[k];
        os << path.times[k];
        for (int i = 0; i < 4; ++i) os << "," << x[i];
        for (int i = 0; i < 4; ++i) os << "," << p[i];
        os << "," << rep.res_x1[k] << "," << rep.res_x2[k] << "," << rep.res_bracket[k]
           << "\n";
    }
}

}  // namespace sr4
