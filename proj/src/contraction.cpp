#include "sr4/contraction.hpp"

#include <Eigen/Eigenvalues>
#include <future>
#include <ostream>
#include <sstream>

#include "json.hpp"
#include "sr4/errors.hpp"
#include "sr4/integrate.hpp"

namespace sr4 {

namespace {

void parallel_for(int n, const std::function<void(int, int)>& chunk) {
    const int hw = std::max(1u, std::thread::hardware_concurrency());
    const int workers = std::min(hw, 8);
    const int stride = (n + workers - 1) / workers;
    std::vector<std::future<void>> futs;
    for (int w = 0; w < workers; ++w) {
        const int lo = w * stride, hi = std::min(n, (w + 1) * stride);
        if (lo >= hi) break;
        futs.push_back(std::async(std::launch::async, [&, lo, hi] { chunk(lo, hi); }));
    }
    for (auto& f : futs) f.get();
}

// State (x, log J, len): d log J = sign * div X, d len = |X|_g.
using AugState = Eigen::Matrix<double, 6, 1>;

struct AugFlow {
    const SingularField& sf;
    double s;  // sign

    AugState rhs(const AugState& y) const {
        const Vec4 x = y.head<4>();
        AugState dy;
        dy.head<4>() = s * sf.X.eval(x);
        dy[4] = s * sf.divX.eval(x);
        dy[5] = sf.g_norm(x);
        return dy;
    }
};

}  // namespace

SampleCloud SampleCloud::monte_carlo(const DomainBox& base, int n, std::uint64_t seed) {
    SampleCloud cloud;
    cloud.base = base;
    cloud.samples.reserve(n);
    std::mt19937_64 rng(seed);
    for (int i = 0; i < n; ++i) cloud.samples.push_back(base.sample(rng));
    return cloud;
}

SampleCloud SampleCloud::grid(const DomainBox& base, int per_axis) {
    SampleCloud cloud;
    cloud.base = base;
    cloud.grid_mode = true;
    // Cell-centered grid: per_axis cells per axis.
    cloud.cell_volume = base.volume() / std::pow(per_axis, 4.0);
    for (int i0 = 0; i0 < per_axis; ++i0)
        for (int i1 = 0; i1 < per_axis; ++i1)
            for (int i2 = 0; i2 < per_axis; ++i2)
                for (int i3 = 0; i3 < per_axis; ++i3) {
                    Vec4 x;
                    const std::array<int, 4> idx{i0, i1, i2, i3};
                    for (int d = 0; d < 4; ++d) {
                        x[d] = base.center[d] - base.half[d] +
                               (2.0 * idx[d] + 1.0) * base.half[d] / per_axis;
                    }
                    cloud.samples.push_back(x);
                }
    return cloud;
}

JacobianTrace jacobian_trace(const SingularField& sf, const Vec4& z, int sign, double T,
                             int steps) {
    if (!sf.frame.box.contains(z)) {
        throw LeftDomain("jacobian_trace: start point outside the domain box", 0.0);
    }
    const AugFlow aug{sf, static_cast<double>(sign)};
    const auto f = [&](const AugState& y) { return aug.rhs(y); };
    JacobianTrace trace;
    trace.times.push_back(0.0);
    trace.J.push_back(1.0);
    AugState y = AugState::Zero();
    y.head<4>() = z;
    const double h = T / steps;
    for (int i = 0; i < steps; ++i) {
        y = rk4_step(f, y, h);
        if (!sf.frame.box.contains(y.head<4>())) {
            throw LeftDomain("jacobian_trace: trajectory left the domain box", (i + 1) * h);
        }
        trace.times.push_back((i + 1) * h);
        trace.J.push_back(std::exp(y[4]));
    }
    return trace;
}

namespace {

struct FlowTable {
    // per grid time: positions, J values, lengths (row-major per sample)
    std::vector<std::vector<Vec4>> positions;
    std::vector<std::vector<double>> J;
    std::vector<std::vector<double>> len;
    std::vector<double> times;
    bool left_domain = false;
};

FlowTable flow_cloud(const SingularField& sf, const SampleCloud& A, int sign, double T,
                     int time_points, int flow_steps) {
    const int n = static_cast<int>(A.samples.size());
    // Round the substep count up so the time grid divides the step grid.
    const int per = (flow_steps + time_points - 1) / time_points;
    flow_steps = per * time_points;
    FlowTable table;
    table.times.resize(time_points + 1);
    for (int k = 0; k <= time_points; ++k) table.times[k] = T * k / time_points;
    table.positions.assign(time_points + 1, std::vector<Vec4>(n));
    table.J.assign(time_points + 1, std::vector<double>(n));
    table.len.assign(time_points + 1, std::vector<double>(n));

    const AugFlow aug{sf, static_cast<double>(sign)};
    const double h = T / flow_steps;
    std::atomic<bool> left{false};
    parallel_for(n, [&](int lo, int hi) {
        const auto f = [&](const AugState& y) { return aug.rhs(y); };
        for (int i = lo; i < hi; ++i) {
            AugState y = AugState::Zero();
            y.head<4>() = A.samples[i];
            table.positions[0][i] = A.samples[i];
            table.J[0][i] = 1.0;
            table.len[0][i] = 0.0;
            for (int k = 1; k <= time_points; ++k) {
                for (int q = 0; q < per; ++q) y = rk4_step(f, y, h);
                if (!sf.frame.box.contains(y.head<4>(), 1e-9)) left = true;
                table.positions[k][i] = y.head<4>();
                table.J[k][i] = std::exp(y[4]);
                table.len[k][i] = y[5];
            }
        }
    });
    table.left_domain = left;
    return table;
}

DomainBox bounding_box(const FlowTable& table, const DomainBox& base, double inflate) {
    Vec4 lo = base.lo(), hi = base.hi();
    for (const auto& snap : table.positions) {
        for (const Vec4& x : snap) {
            lo = lo.cwiseMin(x);
            hi = hi.cwiseMax(x);
        }
    }
    DomainBox b;
    b.center = 0.5 * (lo + hi);
    b.half = (0.5 * (hi - lo)).cwiseMax(1e-12) * inflate;
    return b;
}

}  // namespace

VolumeReport volume_evolution(const SingularField& sf, const SampleCloud& A, int sign,
                              double T, const VolumeOptions& opts) {
    for (const Vec4& x : A.samples) {
        if (!sf.frame.box.contains(x, 1e-12)) {
            throw LeftDomain("volume_evolution: cloud not inside the domain box", 0.0);
        }
    }
    const FlowTable table = flow_cloud(sf, A, sign, T, opts.time_points, opts.flow_steps);
    if (table.left_domain) {
        throw LeftDomain("volume_evolution: a trajectory left the domain box", T);
    }
    const int n = static_cast<int>(A.samples.size());
    const int K = opts.time_points;

    VolumeReport rep;
    rep.times = table.times;
    rep.volA = A.volume();
    rep.C_used = sf.C_bound;
    rep.sign = sign;
    rep.seed = opts.seed;
    rep.mc_probes = opts.probes;

    // Jacobian-integral estimator: vol(A_t) = int_A J(t, z) dz.
    for (int k = 0; k <= K; ++k) {
        double mean = 0.0;
        for (double j : table.J[k]) mean += j;
        mean /= n;
        double var = 0.0;
        for (double j : table.J[k]) var += (j - mean) * (j - mean);
        var /= std::max(n - 1, 1);
        rep.vol_div.push_back(rep.volA * mean);
        rep.stderr_div.push_back(A.grid_mode ? 0.0 : rep.volA * std::sqrt(var / n));

        double lmax = 0.0;
        for (double l : table.len[k]) lmax = std::max(lmax, l);
        rep.l_A_t.push_back(lmax);
        rep.lower_bound.push_back(std::exp(-sf.C_bound * 1.05 * lmax) * rep.volA);
    }

    // Occupancy estimator: probes uniform over a bounding box of the motion;
    // w lies in the time-t image iff the backward flow lands in A.
    const DomainBox probe_box = bounding_box(table, A.base, 1.1);
    const int M = opts.probes;
    std::vector<std::vector<char>> hits(K + 1, std::vector<char>(M, 0));
    {
        std::vector<Vec4> probes(M);
        std::mt19937_64 rng(opts.seed ^ 0xABCDEF12345ull);
        for (int i = 0; i < M; ++i) probes[i] = probe_box.sample(rng);
        const AugFlow back{sf, -static_cast<double>(sign)};
        const int per = (opts.flow_steps + K - 1) / K;
        const double h = T / (per * K);
        parallel_for(M, [&](int lo, int hi) {
            const auto fb = [&](const Vec4& x) { return Vec4(back.s * sf.X.eval(x)); };
            for (int i = lo; i < hi; ++i) {
                Vec4 z = probes[i];
                hits[0][i] = A.base.contains(z) ? 1 : 0;
                bool alive = true;
                for (int k = 1; k <= K && alive; ++k) {
                    for (int q = 0; q < per; ++q) {
                        z = rk4_step(fb, z, h);
                        if (!sf.frame.box.contains(z, 0.5 * sf.frame.box.half.maxCoeff())) {
                            alive = false;  // cannot be an image point
                            break;
                        }
                    }
                    hits[k][i] = (alive && A.base.contains(z)) ? 1 : 0;
                }
            }
        });
    }
    const double volB = probe_box.volume();
    for (int k = 0; k <= K; ++k) {
        int count = 0;
        for (char c : hits[k]) count += c;
        const double p = static_cast<double>(count) / M;
        rep.vol_mc.push_back(volB * p);
        rep.stderr_mc.push_back(volB * std::sqrt(std::max(p * (1.0 - p), 1e-12) / M));
    }
    return rep;
}

void contraction_audit(const VolumeReport& report, double C) {
    for (std::size_t k = 0; k < report.times.size(); ++k) {
        const double bound = std::exp(-C * 1.05 * report.l_A_t[k]) * report.volA;
        if (report.vol_mc[k] < bound - 3.0 * report.stderr_mc[k]) {
            std::ostringstream os;
            os << "contraction bound violated at t = " << report.times[k] << ": vol "
               << report.vol_mc[k] << " < " << bound << " - 3 * " << report.stderr_mc[k];
            throw AuditFailed(os.str(), report.times[k]);
        }
    }
}

DecayCurve hc_attraction_experiment(const SingularField& sf, const SampleCloud& A,
                                    double T_max, const VolumeOptions& opts) {
    DecayCurve curve;
    curve.L_bound = sf.frame.length_scale();
    const double floor_value = std::exp(-sf.C_bound * curve.L_bound) * A.volume();
    if (A.samples.empty() || A.volume() == 0.0) {
        // Zero-volume clouds stay at zero volume.
        curve.times = {0.0, T_max};
        curve.volume = {0.0, 0.0};
        curve.floor_ = {0.0, 0.0};
        return curve;
    }
    const FlowTable table =
        flow_cloud(sf, A, +1, T_max, opts.time_points, opts.flow_steps);
    const int n = static_cast<int>(A.samples.size());
    for (std::size_t k = 0; k < table.times.size(); ++k) {
        double mean = 0.0;
        for (double j : table.J[k]) mean += j;
        curve.times.push_back(table.times[k]);
        curve.volume.push_back(A.volume() * mean / n);
        curve.floor_.push_back(floor_value);
        if (curve.volume.back() < floor_value - 1e-9 * (1.0 + floor_value)) {
            curve.bounded_below = false;
        }
    }
    return curve;
}

namespace {

bool boxes_disjoint(const DomainBox& a, const DomainBox& b) {
    for (int i = 0; i < 4; ++i) {
        if (std::abs(a.center[i] - b.center[i]) > a.half[i] + b.half[i]) return true;
    }
    return false;
}

}  // namespace

SplitReport disjoint_projection_experiment(const SingularField& sf, const SampleCloud& A,
                                           const DomainBox& targets1,
                                           const DomainBox& targets2, double T,
                                           const VolumeOptions& opts) {
    if (!boxes_disjoint(targets1, targets2)) {
        throw DegenerateSplit("target regions must be disjoint");
    }
    const FlowTable table = flow_cloud(sf, A, +1, T, opts.time_points, opts.flow_steps);
    const int n = static_cast<int>(A.samples.size());
    const int K = opts.time_points;

    std::vector<int> cls(n, 0);
    for (int i = 0; i < n; ++i) {
        const Vec4& e = table.positions[K][i];
        if (targets1.contains(e)) cls[i] = 1;
        else if (targets2.contains(e)) cls[i] = 2;
    }
    SplitReport rep;
    rep.count1 = static_cast<int>(std::count(cls.begin(), cls.end(), 1));
    rep.count2 = static_cast<int>(std::count(cls.begin(), cls.end(), 2));
    if (rep.count1 == 0 || rep.count2 == 0) {
        throw DegenerateSplit("a target class is empty at the chosen horizon");
    }

    // Subsample for the inter-class gap measurements.
    std::vector<int> pick1, pick2;
    for (int i = 0; i < n; ++i) {
        if (cls[i] == 1 && static_cast<int>(pick1.size()) < 400) pick1.push_back(i);
        if (cls[i] == 2 && static_cast<int>(pick2.size()) < 400) pick2.push_back(i);
    }

    const double volA = A.volume();
    for (int k = 0; k <= K; ++k) {
        double j1 = 0.0, j2 = 0.0, l1 = 0.0, l2 = 0.0;
        for (int i = 0; i < n; ++i) {
            if (cls[i] == 1) {
                j1 += table.J[k][i];
                l1 = std::max(l1, table.len[k][i]);
            } else if (cls[i] == 2) {
                j2 += table.J[k][i];
                l2 = std::max(l2, table.len[k][i]);
            }
        }
        const double v1 = volA * j1 / n;
        const double v2 = volA * j2 / n;
        const double v1_0 = volA * rep.count1 / static_cast<double>(n);
        const double v2_0 = volA * rep.count2 / static_cast<double>(n);
        rep.times.push_back(table.times[k]);
        rep.vol1.push_back(v1);
        rep.vol2.push_back(v2);
        rep.lower1.push_back(std::exp(-sf.C_bound * 1.05 * l1) * v1_0);
        rep.lower2.push_back(std::exp(-sf.C_bound * 1.05 * l2) * v2_0);
        rep.union_ratio.push_back((v1 + v2) / volA);

        double gap = std::numeric_limits<double>::infinity();
        for (int a : pick1) {
            for (int b : pick2) {
                gap = std::min(gap, (table.positions[k][a] - table.positions[k][b]).norm());
            }
        }
        rep.min_gap.push_back(gap);
        if (gap <= 0.0) rep.disjoint = false;

        const double mc_slack = 3.0 * volA / std::sqrt(static_cast<double>(n));
        if (v1 < rep.lower1.back() - mc_slack || v2 < rep.lower2.back() - mc_slack) {
            rep.bounds_hold = false;
        }
        if (rep.union_ratio.back() > 1.0 + 3.0 / std::sqrt(static_cast<double>(n))) {
            rep.bounds_hold = false;
        }
    }
    return rep;
}

RegularContractionReport regular_contraction_audit(
    const Frame& frame, const std::function<double(const Vec4&)>& phi_tilde,
    const SampleCloud& A, double T, const VolumeOptions& opts) {
    RegularContractionReport rep;
    const int n_det = std::min<int>(static_cast<int>(A.samples.size()), 160);

    // Smallest finite-difference Hessian eigenvalue of phi_tilde over A.
    double hess_min = std::numeric_limits<double>::infinity();
    const double h = 1e-3;
    for (int s = 0; s < n_det; ++s) {
        const Vec4& x = A.samples[s];
        Mat4 H;
        const double fx = phi_tilde(x);
        for (int i = 0; i < 4; ++i) {
            for (int j = i; j < 4; ++j) {
                Vec4 xpp = x, xpm = x, xmp = x, xmm = x;
                xpp[i] += h;
                xpp[j] += h;
                xpm[i] += h;
                xpm[j] -= h;
                xmp[i] -= h;
                xmp[j] += h;
                xmm[i] -= h;
                xmm[j] -= h;
                if (i == j) {
                    Vec4 xp = x, xm = x;
                    xp[i] += h;
                    xm[i] -= h;
                    H(i, i) = (phi_tilde(xp) - 2 * fx + phi_tilde(xm)) / (h * h);
                } else {
                    H(i, j) = H(j, i) = (phi_tilde(xpp) - phi_tilde(xpm) - phi_tilde(xmp) +
                                         phi_tilde(xmm)) /
                                        (4 * h * h);
                }
            }
        }
        hess_min = std::min(hess_min, Eigen::SelfAdjointEigenSolver<Mat4>(H)
                                          .eigenvalues()
                                          .minCoeff());
    }
    rep.hessian_lower = hess_min;

    for (int k = 0; k <= opts.time_points; ++k) {
        const double t = T * k / opts.time_points;
        const auto map_t = [&](const Vec4& x) {
            if (t == 0.0) return x;
            const Vec4 p0 = transport_momentum(phi_tilde, x);
            return hamiltonian_exp(frame, x, Vec4(t * p0), 1.0, 64);
        };
        double det_min = std::numeric_limits<double>::infinity();
        double mean = 0.0, var = 0.0;
        std::vector<double> dets(n_det);
        parallel_for(n_det, [&](int lo, int hi) {
            for (int s = lo; s < hi; ++s) {
                const Vec4& x = A.samples[s];
                Mat4 J;
                const double hj = 1e-4;
                for (int i = 0; i < 4; ++i) {
                    Vec4 xp = x, xm = x;
                    xp[i] += hj;
                    xm[i] -= hj;
                    J.col(i) = (map_t(xp) - map_t(xm)) / (2 * hj);
                }
                dets[s] = std::abs(J.determinant());
            }
        });
        for (double d : dets) mean += d;
        mean /= n_det;
        for (double d : dets) {
            var += (d - mean) * (d - mean);
            det_min = std::min(det_min, d);
        }
        var /= std::max(n_det - 1, 1);
        const double se = std::sqrt(var / n_det);
        rep.times.push_back(t);
        rep.vol_ratio.push_back(mean);
        rep.stderr_ratio.push_back(se);
        rep.det_min.push_back(det_min);
        if (mean < det_min - 3.0 * se - 1e-12) rep.bound_holds = false;
    }
    return rep;
}

MixedFlowReport mixed_flow_experiment(const SingularField& sf,
                                      const std::function<double(const Vec4&)>& phi_tilde,
                                      const SampleCloud& A, double T,
                                      const VolumeOptions& opts) {
    MixedFlowReport rep;
    const FlowTable table = flow_cloud(sf, A, +1, T, opts.time_points, opts.flow_steps);
    const RegularContractionReport reg =
        regular_contraction_audit(sf.frame, phi_tilde, A, T, opts);
    const int n = static_cast<int>(A.samples.size());
    for (int k = 0; k <= opts.time_points; ++k) {
        double jmean = 0.0, lmax = 0.0;
        for (int i = 0; i < n; ++i) {
            jmean += table.J[k][i];
            lmax = std::max(lmax, table.len[k][i]);
        }
        jmean /= n;
        rep.times.push_back(table.times[k]);
        rep.vol_singular.push_back(jmean);  // ratio to vol(A)
        rep.vol_regular.push_back(reg.vol_ratio[k]);
        rep.lower_sum.push_back(std::exp(-sf.C_bound * 1.05 * lmax) + reg.det_min[k]);
        rep.union_upper.push_back(jmean + reg.vol_ratio[k]);
        if (rep.lower_sum.back() > 1.0) rep.tension_regime = true;
    }
    return rep;
}

void write_volume_csv(std::ostream& os, const VolumeReport& rep) {
    os << "t,vol_mc,stderr,vol_div,lower_bound,l_A_t\n";
    os.precision(17);
    for (std::size_t k = 0; k < rep.times.size(); ++k) {
        os << rep.times[k] << "," << rep.vol_mc[k] << "," << rep.stderr_mc[k] << ","
           << rep.vol_div[k] << "," << rep.lower_bound[k] << "," << rep.l_A_t[k] << "\n";
    }
}

std::string volume_report_json(const VolumeReport& rep, bool audit_pass,
                               const std::string& label) {
    nlohmann::json j;
    j["label"] = label;
    j["volA"] = rep.volA;
    j["C"] = rep.C_used;
    j["sign"] = rep.sign;
    j["seed"] = rep.seed;
    j["mc_probes"] = rep.mc_probes;
    j["audit_pass"] = audit_pass;
    j["times"] = rep.times;
    j["vol_mc"] = rep.vol_mc;
    j["stderr_mc"] = rep.stderr_mc;
    j["vol_div"] = rep.vol_div;
    j["stderr_div"] = rep.stderr_div;
    j["lower_bound"] = rep.lower_bound;
    j["l_A_t"] = rep.l_A_t;
    double worst = 0.0;
    for (std::size_t k = 0; k < rep.times.size(); ++k) {
        const double se = std::hypot(rep.stderr_mc[k], rep.stderr_div[k]);
        if (se > 0) worst = std::max(worst, std::abs(rep.vol_mc[k] - rep.vol_div[k]) / se);
    }
    j["estimator_gap_sigmas"] = worst;
    return j.dump(2);
}

}  // namespace sr4
