#include "sr4/transport.hpp"

#include <algorithm>
#include <deque>
#include <fstream>
#include <future>
#include <sstream>

#include "json.hpp"
#include "sr4/errors.hpp"
#include "sr4/lp.hpp"

namespace sr4 {

void DiscreteMeasure::validate() const {
    if (points.size() != weights.size() || points.empty()) {
        throw ParseError("measure: points and weights must be non-empty and aligned");
    }
    double sum = 0.0;
    for (double w : weights) {
        if (!(w > 0)) throw ParseError("measure: weights must be positive");
        sum += w;
    }
    if (std::abs(sum - 1.0) > 1e-12) {
        throw ParseError("measure: weights must sum to 1 (got " + std::to_string(sum) + ")");
    }
    for (std::size_t a = 0; a < points.size(); ++a) {
        for (std::size_t b = a + 1; b < points.size(); ++b) {
            if ((points[a] - points[b]).norm() == 0.0) {
                throw ParseError("measure: support points must be pairwise distinct");
            }
        }
    }
}

namespace {

using nlohmann::json;

}  // namespace

DiscreteMeasure parse_measure_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ParseError(std::string("invalid JSON: ") + e.what());
    }
    if (!j.contains("points") || !j.contains("weights")) {
        throw ParseError("measure file needs \"points\" and \"weights\"");
    }
    DiscreteMeasure m;
    for (const auto& pt : j["points"]) {
        if (!pt.is_array() || pt.size() != 4) throw ParseError("points must be 4-vectors");
        m.points.emplace_back(pt[0].get<double>(), pt[1].get<double>(),
                              pt[2].get<double>(), pt[3].get<double>());
    }
    for (const auto& w : j["weights"]) m.weights.push_back(w.get<double>());
    m.validate();
    return m;
}

DiscreteMeasure load_measure(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open measure file " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    try {
        return parse_measure_json(ss.str());
    } catch (const ParseError& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
}

void save_measure(const DiscreteMeasure& m, const std::filesystem::path& path) {
    json j;
    j["points"] = json::array();
    for (const Vec4& p : m.points) j["points"].push_back({p[0], p[1], p[2], p[3]});
    j["weights"] = m.weights;
    std::ofstream out(path);
    if (!out) throw Error("cannot write measure file " + path.string());
    out << j.dump(2) << "\n";
}

std::vector<TransportPlan::Triplet> TransportPlan::support(double threshold) const {
    std::vector<Triplet> out;
    for (int i = 0; i < matrix.rows(); ++i) {
        for (int j = 0; j < matrix.cols(); ++j) {
            if (matrix(i, j) > threshold) out.push_back({i, j, matrix(i, j)});
        }
    }
    return out;
}

namespace {

// Transportation simplex over the bipartite spanning-tree basis.
class TransportSimplex {
public:
    TransportSimplex(const Eigen::VectorXd& mu, const Eigen::VectorXd& nu,
                     const Eigen::MatrixXd& C)
        : n_(static_cast<int>(mu.size())), m_(static_cast<int>(nu.size())), C_(C) {
        northwest_init(mu, nu);
    }

    KantorovichSolution run() {
        const double scale = 1.0 + C_.cwiseAbs().maxCoeff();
        const double tol = 1e-11 * scale;
        const long max_iters = 100L * (n_ + m_) * (n_ + m_);
        const long bland_after = 20L * (n_ + m_) * (n_ + m_);

        long iter = 0;
        for (; iter < max_iters; ++iter) {
            compute_duals();
            int ei = -1, ej = -1;
            double best = -tol;
            for (int i = 0; i < n_; ++i) {
                for (int j = 0; j < m_; ++j) {
                    const double r = C_(i, j) - u_[i] - v_[j];
                    if (r < best) {
                        best = r;
                        ei = i;
                        ej = j;
                        if (iter >= bland_after) break;  // Bland: first negative
                    }
                }
                if (iter >= bland_after && ei >= 0) break;
            }
            if (ei < 0) break;
            pivot(ei, ej);
        }
        if (iter >= max_iters) throw Error("transport simplex failed to terminate");

        KantorovichSolution sol;
        sol.plan.matrix = Eigen::MatrixXd::Zero(n_, m_);
        for (const Cell& c : cells_) sol.plan.matrix(c.i, c.j) = c.flow;
        sol.cost = 0.0;
        for (const Cell& c : cells_) sol.cost += c.flow * C_(c.i, c.j);
        compute_duals();
        sol.duals.phi = -u_;
        sol.duals.phic = v_;
        sol.iterations = static_cast<int>(iter);
        return sol;
    }

private:
    struct Cell {
        int i, j;
        double flow;
    };

    void northwest_init(Eigen::VectorXd a, Eigen::VectorXd b) {
        int i = 0, j = 0;
        while (true) {
            const double q = std::min(a[i], b[j]);
            cells_.push_back({i, j, q});
            a[i] -= q;
            b[j] -= q;
            if (i == n_ - 1 && j == m_ - 1) break;
            if (a[i] <= 0.0 && i < n_ - 1) ++i;
            else ++j;
        }
    }

    void build_adjacency() {
        row_cells_.assign(n_, {});
        col_cells_.assign(m_, {});
        for (int c = 0; c < static_cast<int>(cells_.size()); ++c) {
            row_cells_[cells_[c].i].push_back(c);
            col_cells_[cells_[c].j].push_back(c);
        }
    }

    void compute_duals() {
        build_adjacency();
        u_.setZero(n_);
        v_.setZero(m_);
        std::vector<char> row_done(n_, 0), col_done(m_, 0);
        std::deque<int> queue;  // nodes: rows 0..n-1, cols n..n+m-1
        u_[0] = 0.0;
        row_done[0] = 1;
        queue.push_back(0);
        while (!queue.empty()) {
            const int node = queue.front();
            queue.pop_front();
            if (node < n_) {
                for (int c : row_cells_[node]) {
                    const int j = cells_[c].j;
                    if (!col_done[j]) {
                        v_[j] = C_(node, j) - u_[node];
                        col_done[j] = 1;
                        queue.push_back(n_ + j);
                    }
                }
            } else {
                const int j = node - n_;
                for (int c : col_cells_[j]) {
                    const int i = cells_[c].i;
                    if (!row_done[i]) {
                        u_[i] = C_(i, j) - v_[j];
                        row_done[i] = 1;
                        queue.push_back(i);
                    }
                }
            }
        }
        for (int i = 0; i < n_; ++i) {
            if (!row_done[i]) throw Error("transport simplex: basis tree disconnected");
        }
    }

    // Unique tree path from column j_e back to row i_e; the cycle through
    // the entering cell alternates -,+,-,... along it.
    void pivot(int ei, int ej) {
        build_adjacency();
        const int cell_count = static_cast<int>(cells_.size());
        std::vector<int> parent_node(n_ + m_, -2), parent_cell(n_ + m_, -1);
        std::deque<int> queue;
        parent_node[n_ + ej] = -1;
        queue.push_back(n_ + ej);
        while (!queue.empty()) {
            const int node = queue.front();
            queue.pop_front();
            if (node == ei) break;
            const auto& incident = node < n_ ? row_cells_[node] : col_cells_[node - n_];
            for (int c : incident) {
                const int other = node < n_ ? n_ + cells_[c].j : cells_[c].i;
                if (parent_node[other] == -2) {
                    parent_node[other] = node;
                    parent_cell[other] = c;
                    queue.push_back(other);
                }
            }
        }
        if (parent_node[ei] == -2) throw Error("transport simplex: no pivot cycle");

        std::vector<int> minus_cells, plus_cells;
        int node = ei;
        int sign = -1;  // first path cell shares row i_e with the entering cell
        while (parent_node[node] != -1) {
            const int c = parent_cell[node];
            (sign < 0 ? minus_cells : plus_cells).push_back(c);
            node = parent_node[node];
            sign = -sign;
        }

        double theta = std::numeric_limits<double>::infinity();
        int leaving = -1;
        for (int c : minus_cells) {
            const double f = cells_[c].flow;
            if (f < theta ||
                (f == theta && (leaving < 0 || std::pair(cells_[c].i, cells_[c].j) <
                                                   std::pair(cells_[leaving].i,
                                                             cells_[leaving].j)))) {
                theta = f;
                leaving = c;
            }
        }
        if (leaving < 0) throw Error("transport simplex: degenerate cycle");

        for (int c : minus_cells) cells_[c].flow -= theta;
        for (int c : plus_cells) cells_[c].flow += theta;
        cells_[leaving] = {ei, ej, theta};
        (void)cell_count;
    }

    int n_, m_;
    const Eigen::MatrixXd& C_;
    std::vector<Cell> cells_;
    std::vector<std::vector<int>> row_cells_, col_cells_;
    Eigen::VectorXd u_, v_;
};

Eigen::VectorXd to_vector(const std::vector<double>& w) {
    return Eigen::Map<const Eigen::VectorXd>(w.data(), w.size());
}

}  // namespace

KantorovichSolution solve_kantorovich(const DiscreteMeasure& mu, const DiscreteMeasure& nu,
                                      const Eigen::MatrixXd& C) {
    mu.validate();
    nu.validate();
    if (mu.size() > 256 || nu.size() > 256) {
        throw ParseError("transport instance exceeds the desk-scale limit of 256 points");
    }
    if (C.rows() != mu.size() || C.cols() != nu.size()) {
        throw Error("solve_kantorovich: cost matrix shape mismatch");
    }
    TransportSimplex simplex(to_vector(mu.weights), to_vector(nu.weights), C);
    return simplex.run();
}

Potentials dual_potentials(const DiscreteMeasure& mu, const DiscreteMeasure& nu,
                           const Eigen::MatrixXd& C, const TransportPlan& plan) {
    const KantorovichSolution sol = solve_kantorovich(mu, nu, C);
    double given_cost = 0.0;
    for (int i = 0; i < C.rows(); ++i)
        for (int j = 0; j < C.cols(); ++j) given_cost += plan.matrix(i, j) * C(i, j);
    const double scale = 1.0 + std::abs(sol.cost);
    if (given_cost > sol.cost + 1e-8 * scale) {
        throw Error("dual_potentials: the supplied plan is not optimal");
    }
    return sol.duals;
}

Eigen::VectorXd c_transform(const Eigen::VectorXd& phi, const Eigen::MatrixXd& C) {
    Eigen::VectorXd phic(C.cols());
    for (int j = 0; j < C.cols(); ++j) {
        double best = std::numeric_limits<double>::infinity();
        for (int i = 0; i < C.rows(); ++i) best = std::min(best, phi[i] + C(i, j));
        phic[j] = best;
    }
    return phic;
}

Eigen::VectorXd cbar_transform(const Eigen::VectorXd& phic, const Eigen::MatrixXd& C) {
    Eigen::VectorXd phi(C.rows());
    for (int i = 0; i < C.rows(); ++i) {
        double best = -std::numeric_limits<double>::infinity();
        for (int j = 0; j < C.cols(); ++j) best = std::max(best, phic[j] - C(i, j));
        phi[i] = best;
    }
    return phi;
}

Eigen::MatrixXd cost_matrix(const Frame& frame, const DiscreteMeasure& mu,
                            const DiscreteMeasure& nu, const DistanceOptions& opts) {
    const int n = mu.size(), m = nu.size();
    Eigen::MatrixXd C(n, m);
    const auto entry = [&](int i, int j) {
        DistanceOptions o = opts;
        o.seed = opts.seed ^ (static_cast<std::uint64_t>(i) * 0x1f123bb5ull + j);
        o.parallel = false;  // parallelism lives at the entry level
        try {
            const DistanceResult r = sr_distance(frame, mu.points[i], nu.points[j], o);
            return r.d * r.d;
        } catch (const NotConverged&) {
            o.seed += 0x9e37ull;  // retry once with a fresh seed
            o.starts *= 2;
            const DistanceResult r = sr_distance(frame, mu.points[i], nu.points[j], o);
            return r.d * r.d;
        }
    };
    std::vector<std::future<void>> futs;
    futs.reserve(n);
    for (int i = 0; i < n; ++i) {
        futs.push_back(std::async(std::launch::async, [&, i] {
            for (int j = 0; j < m; ++j) C(i, j) = entry(i, j);
        }));
    }
    for (auto& f : futs) f.get();
    return C;
}

bool ContactSet::contains(int i, int j) const {
    const auto& t = targets[i];
    return std::binary_search(t.begin(), t.end(), j);
}

ContactSet contact_set(const Potentials& pot, const Eigen::MatrixXd& C, double tol) {
    ContactSet cs;
    cs.tol = tol;
    cs.targets.assign(C.rows(), {});
    for (int i = 0; i < C.rows(); ++i) {
        for (int j = 0; j < C.cols(); ++j) {
            const double slack = pot.phic[j] - pot.phi[i] - C(i, j);
            if (std::abs(slack) <= tol * (1.0 + std::abs(C(i, j)))) {
                cs.pairs.emplace_back(i, j);
                cs.targets[i].push_back(j);
            }
        }
    }
    return cs;
}

Classification classify(const Frame& frame, const DiscreteMeasure& mu,
                        const DiscreteMeasure& nu, const ContactSet& gamma,
                        const DistanceOptions& opts, int trials, std::uint64_t seed) {
    Classification cls;
    const int n = mu.size();
    cls.status.assign(n, MoveStatus::Moving);
    cls.static_match.assign(n, -1);
    cls.contact_targets.resize(n);

    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < nu.size(); ++j) {
            const bool same = mu.points[i][0] == nu.points[j][0] &&
                              mu.points[i][1] == nu.points[j][1] &&
                              mu.points[i][2] == nu.points[j][2] &&
                              mu.points[i][3] == nu.points[j][3];
            if (same && gamma.contains(i, j)) {
                cls.status[i] = MoveStatus::Static;
                cls.static_match[i] = j;
                break;
            }
        }
        if (cls.status[i] == MoveStatus::Static) continue;

        for (int j : gamma.targets[i]) {
            Classification::Target tgt;
            tgt.j = j;
            DistanceOptions o = opts;
            o.seed = seed ^ (static_cast<std::uint64_t>(i) * 0x100003ull + j);
            try {
                const DistanceResult r = sr_distance(frame, mu.points[i], nu.points[j], o);
                const RankVerdict v =
                    randomized_rank_verdict(frame, mu.points[i], r.u, trials, o.seed + 1,
                                            o.substeps);
                tgt.tag = v.singular ? GeodesicTag::Singular : GeodesicTag::Regular;
                tgt.rank_min = v.min_rank;
                tgt.smin_max = v.max_smin;
            } catch (const NotConverged&) {
                tgt.tag = GeodesicTag::Unclassified;
            }
            cls.contact_targets[i].push_back(tgt);
        }
    }
    return cls;
}

StaticCheckReport static_fixed_check(const Classification& cls, const TransportPlan& plan,
                                     const DiscreteMeasure& mu) {
    StaticCheckReport rep;
    for (int i = 0; i < mu.size(); ++i) {
        if (cls.status[i] != MoveStatus::Static) continue;
        const int j = cls.static_match[i];
        const double deficit = mu.weights[i] - plan.matrix(i, j);
        if (deficit > 1e-9) {
            rep.ok = false;
            rep.violations.push_back(i);
            rep.worst_deficit = std::max(rep.worst_deficit, deficit);
        }
    }
    return rep;
}

std::vector<SupportPoint> sample_ball_grid(const std::function<double(const Vec4&)>& f,
                                           const Vec4& x, double radius, int per_axis) {
    std::vector<SupportPoint> table;
    const int n = std::max(per_axis, 2);
    for (int i0 = 0; i0 < n; ++i0)
        for (int i1 = 0; i1 < n; ++i1)
            for (int i2 = 0; i2 < n; ++i2)
                for (int i3 = 0; i3 < n; ++i3) {
                    Vec4 z;
                    const std::array<int, 4> idx{i0, i1, i2, i3};
                    for (int d = 0; d < 4; ++d) {
                        z[d] = x[d] - radius + 2.0 * radius * idx[d] / (n - 1);
                    }
                    if ((z - x).norm() <= radius + 1e-12) table.push_back({z, f(z)});
                }
    table.push_back({x, f(x)});
    return table;
}

namespace {

WkResult quadratic_support_feasibility(const std::vector<SupportPoint>& table, const Vec4& x,
                                       double sigma, double slope_bound, double radius) {
    // Value at x: the nearest table entry.
    double fx = 0.0;
    double best = std::numeric_limits<double>::infinity();
    for (const SupportPoint& sp : table) {
        const double d = (sp.z - x).norm();
        if (d < best) {
            best = d;
            fx = sp.value;
        }
    }

    std::vector<lp::Halfspace> halfspaces;
    double rhs_scale = 0.0, ratio_scale = 0.0;
    for (const SupportPoint& sp : table) {
        const Vec4 dz = sp.z - x;
        const double r = dz.norm();
        if (r < 1e-14 || (radius > 0 && r > radius + 1e-12)) continue;
        // Need p . dz >= fx - f(z) - sigma r^2, with margin s:
        //   -dz . p + s <= -(fx - f(z) - sigma r^2)
        const double rhs = fx - sp.value - sigma * r * r;
        lp::Halfspace h;
        h.a.resize(5);
        h.a.head<4>() = -dz;
        h.a[4] = 1.0;
        h.b = -rhs;
        halfspaces.push_back(std::move(h));
        rhs_scale = std::max(rhs_scale, std::abs(rhs));
        ratio_scale = std::max(ratio_scale, std::abs(rhs) / r);
    }

    WkResult res;
    if (halfspaces.empty()) {
        res.member = true;
        res.margin = 0.0;
        return res;
    }

    const double pbox = slope_bound > 0 ? slope_bound : 10.0 * (1.0 + ratio_scale);
    const double sbox = 1.0 + rhs_scale + 4.0 * pbox;
    Eigen::VectorXd lo(5), hi(5), c(5);
    lo << -pbox, -pbox, -pbox, -pbox, -sbox;
    hi << pbox, pbox, pbox, pbox, sbox;
    c << 0, 0, 0, 0, 1;

    const double feas_tol = 1e-9 * (1.0 + rhs_scale);
    for (int cut = 0; cut < 64; ++cut) {
        const lp::LpResult sol = lp::seidel_maximize(c, halfspaces, lo, hi);
        if (!sol.feasible) return res;
        const Vec4 p = sol.w.head<4>();
        const double margin = sol.w[4];
        if (margin < -feas_tol) return res;  // no support vector exists
        if (slope_bound > 0 && p.norm() > slope_bound * (1.0 + 1e-6)) {
            lp::Halfspace ball_cut;
            ball_cut.a.resize(5);
            ball_cut.a.head<4>() = p.normalized();
            ball_cut.a[4] = 0.0;
            ball_cut.b = slope_bound;
            halfspaces.push_back(std::move(ball_cut));
            continue;
        }
        res.member = true;
        res.p = p;
        res.margin = margin;
        return res;
    }
    return res;
}

}  // namespace

WkResult wk_membership(const std::vector<SupportPoint>& phi_samples, const Vec4& x, int k) {
    return quadratic_support_feasibility(phi_samples, x, static_cast<double>(k),
                                         static_cast<double>(k), 0.0);
}

WkResult semiconvex_support_test(const std::vector<SupportPoint>& f_samples, const Vec4& x,
                                 double sigma, double radius) {
    return quadratic_support_feasibility(f_samples, x, sigma, 0.0, radius);
}

double SupportInterpolant::eval(const Vec4& z) const {
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t l = 0; l < points.size(); ++l) {
        const Vec4 d = points[l] - z;
        best = std::max(best, values[l] + slopes[l].dot(d) - curvature * d.squaredNorm());
    }
    return best;
}

std::function<double(const Vec4&)> SupportInterpolant::as_function() const {
    return [copy = *this](const Vec4& z) { return copy.eval(z); };
}

Vec4 fd_gradient(const std::function<double(const Vec4&)>& f, const Vec4& x, double h,
                 double rel_tol) {
    const auto central = [&](double step) {
        Vec4 g;
        for (int i = 0; i < 4; ++i) {
            Vec4 xp = x, xm = x;
            xp[i] += step;
            xm[i] -= step;
            g[i] = (f(xp) - f(xm)) / (2 * step);
        }
        return g;
    };
    const Vec4 g1 = central(h);
    const Vec4 g2 = central(h / 2);
    if ((g1 - g2).norm() > rel_tol * (1.0 + g2.norm())) {
        throw UnstableGradient("finite-difference gradient unstable under step halving");
    }
    // Richardson extrapolation of the two central differences.
    return (4.0 * g2 - g1) / 3.0;
}

Vec4 transport_momentum(const std::function<double(const Vec4&)>& phi_tilde, const Vec4& x,
                        double h, double fd_rel_tol) {
    // With phic(y) - phi(x) <= d^2 and H = |p.X|^2/2, the local model
    // phi(z) ~ phic(ybar) - d^2(z, ybar) has gradient twice the initial
    // momentum of the unit-time geodesic x -> ybar.
    return 0.5 * fd_gradient(phi_tilde, x, h, fd_rel_tol);
}

Vec4 map_from_potential(const Frame& frame, const std::function<double(const Vec4&)>& phi_tilde,
                        const Vec4& x, int ham_steps, double fd_h, double fd_rel_tol) {
    const Vec4 p0 = transport_momentum(phi_tilde, x, fd_h, fd_rel_tol);
    if (p0.norm() == 0.0) return x;
    return hamiltonian_exp(frame, x, p0, 1.0, ham_steps);
}

std::string transport_report_json(const DiscreteMeasure& mu, const DiscreteMeasure& nu,
                                  const Eigen::MatrixXd& C, const KantorovichSolution& sol,
                                  const ContactSet& strict, const ContactSet& loose,
                                  const Classification* cls) {
    json j;
    j["n"] = mu.size();
    j["m"] = nu.size();
    j["cost"] = sol.cost;
    double dual_value = 0.0;
    for (int i = 0; i < mu.size(); ++i) dual_value -= sol.duals.phi[i] * mu.weights[i];
    for (int jdx = 0; jdx < nu.size(); ++jdx)
        dual_value += sol.duals.phic[jdx] * nu.weights[jdx];
    j["dual_value"] = dual_value;
    j["duality_gap"] = sol.cost - dual_value;
    j["iterations"] = sol.iterations;

    j["plan"] = json::array();
    for (const auto& t : sol.plan.support()) j["plan"].push_back({t.i, t.j, t.mass});
    j["phi"] = std::vector<double>(sol.duals.phi.data(),
                                   sol.duals.phi.data() + sol.duals.phi.size());
    j["phic"] = std::vector<double>(sol.duals.phic.data(),
                                    sol.duals.phic.data() + sol.duals.phic.size());

    const auto contact_json = [](const ContactSet& cs) {
        json out;
        out["tol"] = cs.tol;
        out["pairs"] = json::array();
        for (const auto& [i, jdx] : cs.pairs) out["pairs"].push_back({i, jdx});
        return out;
    };
    j["contact_strict"] = contact_json(strict);
    j["contact_loose"] = contact_json(loose);

    const double cmax = C.size() ? C.cwiseAbs().maxCoeff() : 0.0;
    j["cost_scale"] = cmax;

    if (cls) {
        j["classification"] = json::array();
        for (std::size_t i = 0; i < cls->status.size(); ++i) {
            json entry;
            entry["i"] = i;
            entry["status"] = cls->status[i] == MoveStatus::Static ? "static" : "moving";
            if (cls->static_match[i] >= 0) entry["match"] = cls->static_match[i];
            entry["targets"] = json::array();
            for (const auto& t : cls->contact_targets[i]) {
                json tj;
                tj["j"] = t.j;
                tj["tag"] = t.tag == GeodesicTag::Singular
                                ? "singular"
                                : (t.tag == GeodesicTag::Regular ? "regular"
                                                                 : "unclassified");
                tj["rank_min"] = t.rank_min;
                tj["smin_max"] = t.smin_max;
                entry["targets"].push_back(tj);
            }
            j["classification"].push_back(entry);
        }
    }
    return j.dump(2);
}

}  // namespace sr4
