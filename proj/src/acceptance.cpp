#include "sr4/acceptance.hpp"

#include <algorithm>
#include <chrono>
#include <numeric>
#include <ostream>
#include <sstream>

#include "sr4/contraction.hpp"
#include "sr4/errors.hpp"
#include "sr4/geodesic.hpp"
#include "sr4/transport.hpp"

namespace sr4 {

Frame engel_frame() {
    Frame f;
    f.A = Poly4::variable(0);
    f.B = Poly4::monomial({2, 0, 0, 0}, 0.5);
    f.box.center = Vec4::Zero();
    f.box.half = Vec4::Constant(2.0);
    return f;
}

Frame cubic_frame() {
    Frame f;
    f.A = Poly4::variable(0);
    f.B = Poly4::monomial({3, 0, 0, 0}, 1.0 / 6.0);
    f.box.center = Vec4::Zero();
    f.box.half = Vec4::Constant(2.0);
    return f;
}

Frame negdiv_frame() {
    Frame f;
    f.A = Poly4::variable(0) + Poly4::variable(0) * Poly4::variable(2);
    f.B = Poly4::monomial({2, 0, 0, 0}, 0.5);
    f.box.center = Vec4::Zero();
    f.box.half = Vec4(0.5, 1.5, 0.5, 0.5);
    return f;
}

namespace {

struct Timer {
    std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    }
};

DomainBox region(const Vec4& center, const Vec4& half) {
    DomainBox b;
    b.center = center;
    b.half = half;
    return b;
}

// Shared scenario data: the three line fields and their volume reports.
struct Scenarios {
    SingularField engel, cubic, negdiv;
    VolumeReport engel_vol, cubic_vol, negdiv_vol;
};

Scenarios build_scenarios() {
    Scenarios s{line_field(engel_frame()), line_field(cubic_frame()),
                line_field(negdiv_frame()), {}, {}, {}};
    VolumeOptions opts;
    opts.time_points = 8;
    opts.flow_steps = 128;
    opts.probes = 100000;
    opts.seed = 20240601;
    const SampleCloud engel_cloud = SampleCloud::monte_carlo(
        region(Vec4(0.8, -0.5, 0, 0), Vec4(0.3, 0.3, 0.3, 0.3)), 100000, 101);
    const SampleCloud cubic_cloud = SampleCloud::monte_carlo(
        region(Vec4(0.75, -0.6, 0, 0), Vec4(0.2, 0.3, 0.3, 0.3)), 100000, 103);
    const SampleCloud negdiv_cloud = SampleCloud::monte_carlo(
        region(Vec4(-0.3, -0.6, 0, 0), Vec4(0.15, 0.3, 0.25, 0.25)), 100000, 107);
    s.engel_vol = volume_evolution(s.engel, engel_cloud, +1, 1.0, opts);
    s.cubic_vol = volume_evolution(s.cubic, cubic_cloud, +1, 1.0, opts);
    s.negdiv_vol = volume_evolution(s.negdiv, negdiv_cloud, +1, 1.0, opts);
    return s;
}

CriterionResult criterion_line_field() {
    CriterionResult res;
    res.id = 1;
    res.name = "line-field certificates (alpha formulas, Eqs. 19-22)";
    Timer timer;
    std::ostringstream detail;
    try {
        const SingularField engel = line_field(engel_frame());
        bool ok = engel.alpha1.is_zero() && engel.alpha2 == Poly4::constant(1.0);
        if (!ok) detail << "engel alpha mismatch; ";

        std::mt19937_64 rng(811);
        double worst = 0.0;
        int flowed = 0;
        for (int s = 0; s < 50; ++s) {
            const Frame f = random_cubic_frame(rng);
            const SingularField sf = line_field(f);
            FlowPath path;
            for (int attempt = 0; attempt < 16; ++attempt) {
                const Vec4 x0 = 0.5 * f.box.sample(rng);
                path = flow(sf, x0, (s % 2) ? -1 : +1, 0.1, 10);
                if (path.points.size() >= 3) break;
            }
            if (path.points.size() < 3) {
                ok = false;
                detail << "no usable flow for frame " << s << "; ";
                continue;
            }
            ++flowed;
            const AdjointPath adj = adjoint_certificate(f, path);
            const SingularityReport rep = verify_singularity(f, path, adj, 1e-8);
            worst = std::max({worst, rep.max_res_x1, rep.max_res_x2, rep.max_res_bracket,
                              rep.max_res_order3, rep.max_res_ode});
        }
        detail << "frames flowed " << flowed << "/50, worst residual " << worst;
        res.pass = ok && flowed == 50 && worst <= 1e-8;
    } catch (const std::exception& e) {
        res.pass = false;
        detail << "exception: " << e.what();
    }
    res.detail = detail.str();
    res.seconds = timer.seconds();
    return res;
}

CriterionResult criterion_hc_vanishing() {
    CriterionResult res;
    res.id = 2;
    res.name = "X vanishes exactly on H^c (cubic, 17^4 grid)";
    Timer timer;
    std::ostringstream detail;
    try {
        const Frame f = cubic_frame();
        const SingularField sf = line_field(f);
        const BracketSet bs = brackets(f);
        const double scale = 1.0 + std::max(sf.alpha1.sup_bound(f.box),
                                            sf.alpha2.sup_bound(f.box));
        long disagreements = 0, zeros = 0, checked = 0;
        f.box.for_each_grid(17, [&](const Vec4& x) {
            ++checked;
            const bool zero = sf.g_norm(x) <= 1e-9 * scale;
            const bool in_hc = hc_membership(bs, x, 1e-9);
            if (zero != in_hc) ++disagreements;
            if (zero) ++zeros;
        });
        detail << checked << " grid points, " << zeros << " zeros, " << disagreements
               << " disagreements";
        res.pass = disagreements == 0 && checked == 83521 && zeros > 0;
    } catch (const std::exception& e) {
        res.pass = false;
        detail << "exception: " << e.what();
    }
    res.detail = detail.str();
    res.seconds = timer.seconds();
    return res;
}

CriterionResult criterion_divergence(const Scenarios& sc) {
    CriterionResult res;
    res.id = 3;
    res.name = "divergence identity and bound (Lemma 3.5)";
    Timer timer;
    std::ostringstream detail;
    try {
        bool ok = true;
        double worst_pair = 0.0, worst_fd = 0.0, worst_bound = 0.0;
        std::mt19937_64 rng(977);
        for (const SingularField* sf : {&sc.engel, &sc.cubic, &sc.negdiv}) {
            const DomainBox& box = sf->frame.box;
            for (int s = 0; s < 1000; ++s) {
                const Vec4 x = box.sample(rng);
                const DivergenceValue dv = divergence(*sf, x);
                worst_pair = std::max(worst_pair, std::abs(dv.value - dv.closed_form));
                double fd = 0.0;
                const double h = 1e-4;
                for (int i = 0; i < 4; ++i) {
                    Vec4 xp = x, xm = x;
                    xp[i] += h;
                    xm[i] -= h;
                    fd += (sf->X.c[i].eval(xp) - sf->X.c[i].eval(xm)) / (2 * h);
                }
                worst_fd = std::max(worst_fd, std::abs(dv.value - fd));
            }
            const double C = divergence_bound(*sf);
            for (int s = 0; s < 10000; ++s) {
                const Vec4 x = box.sample(rng);
                const double margin = sf->divX.eval(x) + C * sf->g_norm(x);
                worst_bound = std::min(worst_bound, margin);
            }
        }
        ok = worst_pair <= 1e-6 && worst_fd <= 1e-6 && worst_bound >= -1e-12;
        detail << "route gap " << worst_pair << ", fd gap " << worst_fd
               << ", bound margin " << worst_bound;
        res.pass = ok;
    } catch (const std::exception& e) {
        res.pass = false;
        detail << "exception: " << e.what();
    }
    res.detail = detail.str();
    res.seconds = timer.seconds();
    return res;
}

double estimator_gap_sigmas(const VolumeReport& rep) {
    double worst = 0.0;
    for (std::size_t k = 0; k < rep.times.size(); ++k) {
        const double se = std::hypot(rep.stderr_mc[k], rep.stderr_div[k]);
        if (se > 0) {
            worst = std::max(worst, std::abs(rep.vol_mc[k] - rep.vol_div[k]) / se);
        } else {
            worst = std::max(worst, std::abs(rep.vol_mc[k] - rep.vol_div[k]) > 0 ? 1e9 : 0.0);
        }
    }
    return worst;
}

CriterionResult criterion_volume_formula(const Scenarios& sc) {
    CriterionResult res;
    res.id = 4;
    res.name = "volume formula: Jacobian integral vs occupancy MC";
    Timer timer;
    std::ostringstream detail;
    try {
        const double g1 = estimator_gap_sigmas(sc.engel_vol);
        const double g2 = estimator_gap_sigmas(sc.cubic_vol);
        detail << "engel gap " << g1 << " sigma, cubic gap " << g2 << " sigma";
        res.pass = g1 <= 3.0 && g2 <= 3.0;
    } catch (const std::exception& e) {
        res.pass = false;
        detail << "exception: " << e.what();
    }
    res.detail = detail.str();
    res.seconds = timer.seconds();
    return res;
}

CriterionResult criterion_contraction(const Scenarios& sc) {
    CriterionResult res;
    res.id = 5;
    res.name = "contraction bound with negative control (Lemma 3.7)";
    Timer timer;
    std::ostringstream detail;
    try {
        bool ok = true;
        for (const auto& [rep, sf, label] :
             {std::tuple{&sc.engel_vol, &sc.engel, "engel"},
              std::tuple{&sc.cubic_vol, &sc.cubic, "cubic"},
              std::tuple{&sc.negdiv_vol, &sc.negdiv, "negdiv"}}) {
            try {
                contraction_audit(*rep, sf->C_bound);
            } catch (const AuditFailed& e) {
                ok = false;
                detail << label << " audit failed: " << e.what() << "; ";
            }
        }
        // The negdiv scenario genuinely contracts: forcing C = 0 must fail.
        bool negative_control_failed = false;
        try {
            contraction_audit(sc.negdiv_vol, 0.0);
        } catch (const AuditFailed&) {
            negative_control_failed = true;
        }
        if (!negative_control_failed) detail << "negative control did not fail; ";
        const double shrink = sc.negdiv_vol.vol_div.back() / sc.negdiv_vol.volA;
        detail << "audits pass, negdiv shrinks to " << shrink
               << ", C=0 control fails as required";
        res.pass = ok && negative_control_failed && shrink < 0.9;
    } catch (const std::exception& e) {
        res.pass = false;
        detail << "exception: " << e.what();
    }
    res.detail = detail.str();
    res.seconds = timer.seconds();
    return res;
}

CriterionResult criterion_rank_dichotomy() {
    CriterionResult res;
    res.id = 6;
    res.name = "variational rank dichotomy on the engel frame";
    Timer timer;
    std::ostringstream detail;
    try {
        const Frame f = engel_frame();
        const RankVerdict abnormal = randomized_rank_verdict(
            f, Vec4::Zero(), Control::constant({0, 1}, 1.0, 32), 10, 515);
        const double inv = 1.0 / std::sqrt(2.0);
        const RankVerdict regular = randomized_rank_verdict(
            f, Vec4::Zero(), Control::constant({inv, inv}, 1.0, 32), 10, 515);
        detail << "abnormal: rank<=3 in " << (abnormal.singular ? 10 : -1)
               << "/10 trials, max smin " << abnormal.max_smin << "; regular: min rank "
               << regular.min_rank << ", min smin " << regular.min_smin;
        res.pass = abnormal.singular && abnormal.max_rank <= 3 &&
                   abnormal.max_smin <= 1e-9 && regular.min_rank == 4 &&
                   regular.min_smin >= 1e-4;
    } catch (const std::exception& e) {
        res.pass = false;
        detail << "exception: " << e.what();
    }
    res.detail = detail.str();
    res.seconds = timer.seconds();
    return res;
}

CriterionResult criterion_distance_sandwich() {
    CriterionResult res;
    res.id = 7;
    res.name = "distance sandwich on the engel axes";
    Timer timer;
    std::ostringstream detail;
    try {
        const Frame f = engel_frame();
        DistanceOptions opts;
        opts.seed = 614;
        bool ok = true;
        double worst = 0.0;
        for (double t : {0.25, 0.5, 1.0}) {
            const DistanceResult r = sr_distance(f, Vec4::Zero(), Vec4(t, 0, 0, 0), opts);
            worst = std::max(worst, std::abs(r.d - t));
            ok = ok && r.converged && std::abs(r.d - t) <= 1e-3;
        }
        const DistanceResult r = sr_distance(f, Vec4::Zero(), Vec4(0, 1, 0, 0), opts);
        worst = std::max(worst, std::abs(r.d - 1.0));
        ok = ok && std::abs(r.d - 1.0) <= 1e-3;
        detail << "worst |d - expected| = " << worst;
        res.pass = ok;
    } catch (const std::exception& e) {
        res.pass = false;
        detail << "exception: " << e.what();
    }
    res.detail = detail.str();
    res.seconds = timer.seconds();
    return res;
}

CriterionResult criterion_transport_duality() {
    CriterionResult res;
    res.id = 8;
    res.name = "transport duality, contact support, permutation plans";
    Timer timer;
    std::ostringstream detail;
    try {
        std::mt19937_64 rng(1215);
        std::uniform_real_distribution<double> u(-1.0, 1.0);
        const auto random_uniform = [&](int n) {
            DiscreteMeasure m;
            for (int i = 0; i < n; ++i) m.points.emplace_back(u(rng), u(rng), u(rng), u(rng));
            m.weights.assign(n, 1.0 / n);
            return m;
        };
        bool ok = true;
        double worst_gap = 0.0;
        for (int trial = 0; trial < 20; ++trial) {
            const DiscreteMeasure mu = random_uniform(8);
            const DiscreteMeasure nu = random_uniform(8);
            Eigen::MatrixXd C(8, 8);
            for (int i = 0; i < 8; ++i)
                for (int j = 0; j < 8; ++j)
                    C(i, j) = (mu.points[i] - nu.points[j]).squaredNorm();
            const KantorovichSolution sol = solve_kantorovich(mu, nu, C);

            double dual = 0.0;
            for (int j = 0; j < 8; ++j) dual += sol.duals.phic[j] / 8.0;
            for (int i = 0; i < 8; ++i) dual -= sol.duals.phi[i] / 8.0;
            worst_gap = std::max(worst_gap, std::abs(sol.cost - dual));
            ok = ok && std::abs(sol.cost - dual) <= 1e-8;

            const ContactSet cs = contact_set(sol.duals, C);
            for (const auto& t : sol.plan.support(1e-10)) {
                ok = ok && cs.contains(t.i, t.j);
            }
            for (int i = 0; i < 8; ++i) {
                int big = 0;
                for (int j = 0; j < 8; ++j) {
                    if (sol.plan.matrix(i, j) >= 1.0 / 8.0 - 1e-9) ++big;
                }
                ok = ok && big == 1;
            }
        }
        // 3x3 instances against the permutation brute force.
        for (int trial = 0; trial < 10; ++trial) {
            const DiscreteMeasure mu = random_uniform(3);
            const DiscreteMeasure nu = random_uniform(3);
            Eigen::MatrixXd C(3, 3);
            for (int i = 0; i < 3; ++i)
                for (int j = 0; j < 3; ++j)
                    C(i, j) = (mu.points[i] - nu.points[j]).squaredNorm();
            std::array<int, 3> perm{0, 1, 2};
            double best = std::numeric_limits<double>::infinity();
            std::sort(perm.begin(), perm.end());
            do {
                best = std::min(best, (C(0, perm[0]) + C(1, perm[1]) + C(2, perm[2])) / 3.0);
            } while (std::next_permutation(perm.begin(), perm.end()));
            const KantorovichSolution sol = solve_kantorovich(mu, nu, C);
            ok = ok && std::abs(sol.cost - best) <= 1e-12;
        }
        detail << "worst duality gap " << worst_gap;
        res.pass = ok;
    } catch (const std::exception& e) {
        res.pass = false;
        detail << "exception: " << e.what();
    }
    res.detail = detail.str();
    res.seconds = timer.seconds();
    return res;
}

CriterionResult criterion_static_points() {
    CriterionResult res;
    res.id = 9;
    res.name = "static points keep their mass on the diagonal";
    Timer timer;
    std::ostringstream detail;
    try {
        const Frame f = engel_frame();
        DistanceOptions opts;
        opts.seed = 1003;
        bool ok = true;

        // Identical measures: everything static.
        {
            DiscreteMeasure mu;
            mu.points = {Vec4(0.1, 0, 0, 0), Vec4(-0.4, 0.3, 0, 0), Vec4(0.5, 0.5, 0.2, 0)};
            mu.weights = {0.25, 0.35, 0.4};
            Eigen::MatrixXd C(3, 3);
            for (int i = 0; i < 3; ++i)
                for (int j = 0; j < 3; ++j)
                    C(i, j) = (mu.points[i] - mu.points[j]).squaredNorm();
            const KantorovichSolution sol = solve_kantorovich(mu, mu, C);
            const Classification cls =
                classify(f, mu, mu, contact_set(sol.duals, C), opts);
            const StaticCheckReport rep = static_fixed_check(cls, sol.plan, mu);
            ok = ok && rep.ok;
            for (const MoveStatus s : cls.status) ok = ok && s == MoveStatus::Static;
        }
        // Half static, half displaced.
        {
            DiscreteMeasure mu, nu;
            mu.points = {Vec4::Zero(), Vec4(1, 0, 0, 0)};
            mu.weights = {0.4, 0.6};
            nu.points = {Vec4::Zero(), Vec4(0, 1, 0, 0)};
            nu.weights = {0.4, 0.6};
            Eigen::MatrixXd C(2, 2);
            C << 0.0, 4.0, 5.0, 1.0;
            const KantorovichSolution sol = solve_kantorovich(mu, nu, C);
            const Classification cls = classify(f, mu, nu, contact_set(sol.duals, C), opts);
            const StaticCheckReport rep = static_fixed_check(cls, sol.plan, mu);
            ok = ok && rep.ok && cls.status[0] == MoveStatus::Static &&
                 cls.status[1] == MoveStatus::Moving;
            ok = ok && sol.plan.matrix(0, 0) >= 0.4 - 1e-9;
        }
        detail << "diagonal mass intact on both constructed instances";
        res.pass = ok;
    } catch (const std::exception& e) {
        res.pass = false;
        detail << "exception: " << e.what();
    }
    res.detail = detail.str();
    res.seconds = timer.seconds();
    return res;
}

CriterionResult criterion_semiconvexity() {
    CriterionResult res;
    res.id = 10;
    res.name = "semiconvexity support predicates (Appendix B)";
    Timer timer;
    std::ostringstream detail;
    try {
        bool ok = true;

        const auto quadratic = [](const Vec4& z) { return (z - Vec4(0.05, 0, 0, 0)).squaredNorm(); };
        const Vec4 x0 = Vec4::Zero();
        ok = ok && semiconvex_support_test(sample_ball_grid(quadratic, x0, 0.1, 5), x0,
                                           0.0, 0.1)
                       .member;

        std::mt19937_64 rng(1777);
        std::normal_distribution<double> gauss(0.0, 1.0);
        std::vector<std::pair<Vec4, double>> planes;
        for (int l = 0; l < 5; ++l) {
            planes.push_back(
                {Vec4(gauss(rng), gauss(rng), gauss(rng), gauss(rng)), gauss(rng)});
        }
        const auto affine_sup = [&](const Vec4& z) {
            double best = -1e300;
            for (const auto& [a, b] : planes) best = std::max(best, a.dot(z) + b);
            return best;
        };
        for (int trial = 0; trial < 3; ++trial) {
            Vec4 x(gauss(rng), gauss(rng), gauss(rng), gauss(rng));
            x *= 0.3;
            ok = ok && semiconvex_support_test(sample_ball_grid(affine_sup, x, 0.1, 5), x,
                                               0.0, 0.1)
                           .member;
        }

        // The concave kink must fail for every sigma up to 10^3. The grid
        // shrinks with sigma exactly as the W_k balls do (radius 1/sigma,
        // relative step 0.05 * radius / 0.1), so the kink stays resolved.
        const Vec4 xk(0.2, -0.1, 0.0, 0.15);
        const auto kink = [&](const Vec4& z) { return -(z - xk).norm(); };
        for (double sigma : {0.0, 1.0, 10.0, 100.0, 1000.0}) {
            const double radius = std::min(0.1, 1.0 / std::max(sigma, 10.0));
            const auto table = sample_ball_grid(kink, xk, radius, 5);
            if (semiconvex_support_test(table, xk, sigma, radius).member) {
                ok = false;
                detail << "kink passed at sigma " << sigma << "; ";
            }
        }
        if (ok) detail << "quadratic and affine sups pass, kink fails through sigma 1e3";
        res.pass = ok;
    } catch (const std::exception& e) {
        res.pass = false;
        detail << "exception: " << e.what();
    }
    res.detail = detail.str();
    res.seconds = timer.seconds();
    return res;
}

}  // namespace

std::vector<CriterionResult> run_acceptance(std::ostream* progress) {
    std::vector<CriterionResult> results;
    const auto push = [&](CriterionResult r) {
        if (progress) {
            (*progress) << (r.pass ? "[PASS] " : "[FAIL] ") << r.id << ". " << r.name
                        << " (" << r.seconds << "s): " << r.detail << "\n";
            progress->flush();
        }
        results.push_back(std::move(r));
    };

    push(criterion_line_field());
    push(criterion_hc_vanishing());

    Timer scenario_timer;
    const Scenarios sc = build_scenarios();
    if (progress) {
        (*progress) << "  [scenarios built in " << scenario_timer.seconds() << "s]\n";
    }
    push(criterion_divergence(sc));
    push(criterion_volume_formula(sc));
    push(criterion_contraction(sc));
    push(criterion_rank_dichotomy());
    push(criterion_distance_sandwich());
    push(criterion_transport_duality());
    push(criterion_static_points());
    push(criterion_semiconvexity());

    std::sort(results.begin(), results.end(),
              [](const CriterionResult& a, const CriterionResult& b) { return a.id < b.id; });
    return results;
}

bool report_acceptance(std::ostream& os, const std::vector<CriterionResult>& results) {
    bool all = true;
    for (const CriterionResult& r : results) {
        os << (r.pass ? "[PASS] " : "[FAIL] ") << r.id << ". " << r.name << " ("
           << r.seconds << "s): " << r.detail << "\n";
        all = all && r.pass;
    }
    os << (all ? "ACCEPTANCE: all criteria passed\n" : "ACCEPTANCE: FAILURES present\n");
    return all;
}

}  // namespace sr4
