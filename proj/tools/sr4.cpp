// Scenario runner for the rank-2 sub-Riemannian toolkit: structure
// inspection, singular flows, distances, discrete transport, and
// volume-contraction experiments.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "sr4/acceptance.hpp"
#include "sr4/contraction.hpp"
#include "sr4/errors.hpp"
#include "sr4/geodesic.hpp"
#include "sr4/transport.hpp"

namespace {

using namespace sr4;
using nlohmann::json;

constexpr int kExitOk = 0;
constexpr int kExitAudit = 2;
constexpr int kExitConvergence = 3;
constexpr int kExitInput = 4;

std::uint64_t fnv1a(const std::string& bytes) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

std::string file_hash(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    std::ostringstream os;
    os << std::hex << fnv1a(ss.str());
    return os.str();
}

// Config values with their provenance; precedence is flag > scenario file >
// default, and all layers are echoed into report headers.
struct ConfigValue {
    std::string value;
    std::string source = "default";
};

struct RunConfig {
    std::map<std::string, ConfigValue> values;

    void set_default(const std::string& key, const std::string& v) {
        values[key] = {v, "default"};
    }
    void apply_scenario(const json& j) {
        for (const auto& [key, v] : j.items()) {
            std::ostringstream os;
            if (v.is_string()) os << v.get<std::string>();
            else os << v;
            values[key] = {os.str(), "scenario"};
        }
    }
    void apply_flag(const std::string& key, const std::string& v) {
        values[key] = {v, "flag"};
    }
    double get_double(const std::string& key) const {
        return std::stod(values.at(key).value);
    }
    long get_long(const std::string& key) const { return std::stol(values.at(key).value); }
    std::string echo_lines(const std::string& prefix) const {
        std::ostringstream os;
        for (const auto& [key, cv] : values) {
            os << prefix << key << "=" << cv.value << " (" << cv.source << ")\n";
        }
        return os.str();
    }
    json echo_json() const {
        json j;
        for (const auto& [key, cv] : values) {
            j[key] = {{"value", cv.value}, {"source", cv.source}};
        }
        return j;
    }
};

Vec4 parse_point(const std::string& text) {
    Vec4 x;
    std::stringstream ss(text);
    std::string tok;
    for (int i = 0; i < 4; ++i) {
        if (!std::getline(ss, tok, ',')) throw ParseError("point needs 4 comma-separated numbers");
        x[i] = std::stod(tok);
    }
    return x;
}

DomainBox parse_region(const std::string& text) {
    const auto sep = text.find(';');
    if (sep == std::string::npos) {
        throw ParseError("region spec is \"c1,c2,c3,c4;h1,h2,h3,h4\"");
    }
    DomainBox b;
    b.center = parse_point(text.substr(0, sep));
    b.half = parse_point(text.substr(sep + 1));
    for (int i = 0; i < 4; ++i) {
        if (!(b.half[i] > 0)) throw ParseError("region half-widths must be positive");
    }
    return b;
}

struct Common {
    std::string structure_path;
    std::string scenario_path;
    std::string out_dir = ".";
    long seed = 0;
    double tol = 1e-7;
    long samples = 100000;
    long steps = 128;
};

RunConfig make_config(const Common& c, const CLI::App* cmd) {
    RunConfig cfg;
    cfg.set_default("seed", "0");
    cfg.set_default("tol", "1e-07");
    cfg.set_default("samples", "100000");
    cfg.set_default("steps", "128");
    if (!c.scenario_path.empty()) {
        std::ifstream in(c.scenario_path);
        if (!in) throw ParseError("cannot open scenario file " + c.scenario_path);
        json j;
        try {
            in >> j;
        } catch (const json::parse_error& e) {
            throw ParseError(c.scenario_path + ": " + e.what());
        }
        cfg.apply_scenario(j);
    }
    const auto flag = [&](const std::string& name, const std::string& key,
                          const std::string& value) {
        if (cmd->count(name) > 0) cfg.apply_flag(key, value);
    };
    flag("--seed", "seed", std::to_string(c.seed));
    {
        std::ostringstream os;
        os << c.tol;
        flag("--tol", "tol", os.str());
    }
    flag("--samples", "samples", std::to_string(c.samples));
    flag("--steps", "steps", std::to_string(c.steps));
    return cfg;
}

std::string header_comment(const std::string& structure_path, const RunConfig& cfg) {
    std::ostringstream os;
    os << "# sr4 " << kVersion << "\n";
    if (!structure_path.empty()) {
        os << "# structure=" << structure_path << " hash=" << file_hash(structure_path)
           << "\n";
    }
    os << cfg.echo_lines("# ");
    return os.str();
}

json meta_json(const std::string& structure_path, const RunConfig& cfg) {
    json j;
    j["tool"] = "sr4";
    j["version"] = kVersion;
    if (!structure_path.empty()) {
        j["structure"] = structure_path;
        j["structure_hash"] = file_hash(structure_path);
    }
    j["config"] = cfg.echo_json();
    return j;
}

std::ofstream open_out(const std::filesystem::path& dir, const std::string& name) {
    std::filesystem::create_directories(dir);
    std::ofstream out(dir / name);
    if (!out) throw Error("cannot write " + (dir / name).string());
    return out;
}

int cmd_inspect(const Common& c, const RunConfig& cfg) {
    const Frame frame = load_structure(c.structure_path);
    std::cout << header_comment(c.structure_path, cfg);
    std::cout << "A      = " << frame.A.to_string() << "\n";
    std::cout << "B      = " << frame.B.to_string() << "\n";
    const BracketSet bs = brackets(frame);
    std::cout << "[X1,X2]        = (" << bs.br.c[2].to_string() << ") d3 + ("
              << bs.br.c[3].to_string() << ") d4\n";
    std::cout << "[X1,[X1,X2]]   = (" << bs.br11.c[2].to_string() << ") d3 + ("
              << bs.br11.c[3].to_string() << ") d4\n";
    std::cout << "[X2,[X1,X2]]   = (" << bs.br12.c[2].to_string() << ") d3 + ("
              << bs.br12.c[3].to_string() << ") d4\n";
    const auto [E, F] = ef_coefficients(frame);
    std::cout << "E      = " << E.to_string() << "\n";
    std::cout << "F      = " << F.to_string() << "\n";

    const GrowthReport growth = growth_check(frame);
    std::cout << "growth: ok=" << growth.ok << " certified=" << growth.certified
              << " A_x1_nonvanishing=" << growth.a1_nonvanishing
              << " grid_min=" << growth.grid_min << "\n";
    if (!growth.ok && growth.witness) {
        std::cout << "growth witness: (" << growth.witness->transpose() << ")\n";
        return kExitInput;
    }

    const SingularField sf = line_field(frame);
    std::cout << "alpha1 = " << sf.alpha1.to_string() << "\n";
    std::cout << "alpha2 = " << sf.alpha2.to_string() << "\n";
    std::cout << "div X  = " << sf.divX.to_string() << "\n";
    std::cout << "C      = " << sf.C_bound << "\n";

    // H^c census over a sample grid.
    const int census_n = 9;
    long total = 0, in_hc = 0;
    frame.box.for_each_grid(census_n, [&](const Vec4& x) {
        ++total;
        if (hc_membership(bs, x)) ++in_hc;
    });
    std::cout << "H^c census: " << in_hc << " / " << total << " grid points (9 per axis)\n";
    return kExitOk;
}

int cmd_flow(const Common& c, const RunConfig& cfg, const std::string& start, int sign,
             double T) {
    const Frame frame = load_structure(c.structure_path);
    const SingularField sf = line_field(frame);
    const Vec4 x0 = parse_point(start);
    const int steps = static_cast<int>(cfg.get_long("steps"));
    const FlowPath path = flow(sf, x0, sign, T, steps);
    const AdjointPath adj = adjoint_certificate(frame, path);
    const SingularityReport rep =
        verify_singularity(frame, path, adj, std::max(cfg.get_double("tol"), 1e-9));

    auto out = open_out(c.out_dir, "flow.csv");
    out << header_comment(c.structure_path, cfg);
    write_flow_csv(out, path, adj, rep);
    std::cout << "flow: " << path.points.size() << " nodes"
              << (path.truncated ? " (truncated at t=" + std::to_string(path.t_exit) + ")"
                                 : "")
              << ", worst residual "
              << std::max({rep.max_res_x1, rep.max_res_x2, rep.max_res_bracket,
                           rep.max_res_order3})
              << " -> " << (std::filesystem::path(c.out_dir) / "flow.csv").string() << "\n";
    return kExitOk;
}

int cmd_distance(const Common& c, const RunConfig& cfg, const std::string& from,
                 const std::string& to, const std::string& pairs_path) {
    const Frame frame = load_structure(c.structure_path);
    DistanceOptions opts;
    opts.seed = static_cast<std::uint64_t>(cfg.get_long("seed"));

    std::vector<std::pair<Vec4, Vec4>> queries;
    if (!pairs_path.empty()) {
        std::ifstream in(pairs_path);
        if (!in) throw ParseError("cannot open pairs file " + pairs_path);
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty() || line[0] == '#') continue;
            std::stringstream ss(line);
            std::string tok;
            std::array<double, 8> v{};
            for (int i = 0; i < 8; ++i) {
                if (!std::getline(ss, tok, ',')) {
                    throw ParseError(pairs_path + ": each row needs 8 numbers x(4),y(4)");
                }
                v[i] = std::stod(tok);
            }
            queries.push_back({Vec4(v[0], v[1], v[2], v[3]), Vec4(v[4], v[5], v[6], v[7])});
        }
        if (queries.empty()) throw ParseError(pairs_path + ": no query rows");
    } else {
        if (from.empty() || to.empty()) {
            throw ParseError("distance needs either --pairs or both --from and --to");
        }
        queries.push_back({parse_point(from), parse_point(to)});
    }

    std::vector<DistanceCacheRow> rows;
    bool all_converged = true;
    for (std::size_t q = 0; q < queries.size(); ++q) {
        DistanceOptions o = opts;
        o.seed = opts.seed ^ (0x9e3779b9ull * q);
        DistanceCacheRow row{queries[q].first, queries[q].second, 0.0, false};
        try {
            const DistanceResult r = sr_distance(frame, row.x, row.y, o);
            row.d = r.d;
            row.converged = r.converged;
            std::cout << "d = " << r.d << " (lower bound " << r.lower_bound
                      << ", endpoint error " << r.endpoint_error << ", start "
                      << r.winning_start << ")\n";
        } catch (const NotConverged&) {
            all_converged = false;
            std::cout << "d = n/a (no start reached the endpoint tolerance)\n";
        }
        rows.push_back(row);
    }

    auto out = open_out(c.out_dir, "distance.csv");
    out << header_comment(c.structure_path, cfg);
    write_distance_cache_csv(out, rows, opts.seed);
    return all_converged ? kExitOk : kExitConvergence;
}

int cmd_transport(const Common& c, const RunConfig& cfg, const std::string& mu_path,
                  const std::string& nu_path, bool brute_force) {
    const Frame frame = load_structure(c.structure_path);
    const DiscreteMeasure mu = load_measure(mu_path);
    const DiscreteMeasure nu = load_measure(nu_path);
    if (mu.size() > 256 || nu.size() > 256) {
        throw ParseError("transport instance exceeds the desk-scale limit of 256 points");
    }
    for (const Vec4& p : mu.points) {
        if (!frame.box.contains(p)) throw ParseError("mu support leaves the domain box");
    }
    for (const Vec4& p : nu.points) {
        if (!frame.box.contains(p)) throw ParseError("nu support leaves the domain box");
    }

    DistanceOptions opts;
    opts.seed = static_cast<std::uint64_t>(cfg.get_long("seed"));
    const Eigen::MatrixXd C = cost_matrix(frame, mu, nu, opts);
    const KantorovichSolution sol = solve_kantorovich(mu, nu, C);
    const double tol = cfg.get_double("tol");
    const ContactSet strict = contact_set(sol.duals, C, tol);
    const ContactSet loose = contact_set(sol.duals, C, 2e-2);
    const Classification cls = classify(frame, mu, nu, loose, opts, 10, opts.seed);

    if (brute_force && mu.size() == nu.size() && mu.size() <= 8) {
        std::vector<int> perm(mu.size());
        std::iota(perm.begin(), perm.end(), 0);
        double best = std::numeric_limits<double>::infinity();
        do {
            double cost = 0.0;
            for (int i = 0; i < mu.size(); ++i) cost += C(i, perm[i]) * mu.weights[i];
            std::cout << "perm";
            for (int p : perm) std::cout << " " << p;
            std::cout << " cost " << cost << "\n";
            best = std::min(best, cost);
        } while (std::next_permutation(perm.begin(), perm.end()));
        std::cout << "brute-force optimum " << best << " vs lp " << sol.cost << "\n";
        if (std::abs(best - sol.cost) > 1e-8 * (1.0 + std::abs(best))) {
            std::cerr << "brute-force mismatch\n";
            return kExitAudit;
        }
    }

    json report = json::parse(
        transport_report_json(mu, nu, C, sol, strict, loose, &cls));
    report["_meta"] = meta_json(c.structure_path, cfg);
    {
        auto out = open_out(c.out_dir, "transport.json");
        out << report.dump(2) << "\n";
    }
    {
        auto out = open_out(c.out_dir, "classification.csv");
        out << header_comment(c.structure_path, cfg);
        out << "i,status,j,tag,rank_min,smin_max\n";
        for (std::size_t i = 0; i < cls.status.size(); ++i) {
            if (cls.status[i] == MoveStatus::Static) {
                out << i << ",static," << cls.static_match[i] << ",self,4,0\n";
                continue;
            }
            for (const auto& t : cls.contact_targets[i]) {
                out << i << ",moving," << t.j << ","
                    << (t.tag == GeodesicTag::Singular
                            ? "singular"
                            : (t.tag == GeodesicTag::Regular ? "regular" : "unclassified"))
                    << "," << t.rank_min << "," << t.smin_max << "\n";
            }
        }
    }

    const double gap = std::abs(report["duality_gap"].get<double>());
    bool support_ok = true;
    for (const auto& t : sol.plan.support(1e-10)) {
        support_ok = support_ok && loose.contains(t.i, t.j);
    }
    std::cout << "cost " << sol.cost << ", duality gap " << gap << ", contact pairs "
              << strict.pairs.size() << " strict / " << loose.pairs.size() << " loose\n";
    if (gap > 1e-8 * (1.0 + std::abs(sol.cost)) || !support_ok) return kExitAudit;
    return kExitOk;
}

int cmd_contract(const Common& c, const RunConfig& cfg, const std::string& region_spec,
                 double T, bool grid_mode, double c_override, int sign) {
    const Frame frame = load_structure(c.structure_path);
    const SingularField sf = line_field(frame);
    const DomainBox region = parse_region(region_spec);
    for (int i = 0; i < 4; ++i) {
        if (std::abs(region.center[i]) + region.half[i] >
            std::abs(frame.box.center[i]) + frame.box.half[i] + 1e-12) {
            throw ParseError("region leaves the domain box");
        }
    }

    VolumeOptions opts;
    opts.seed = static_cast<std::uint64_t>(cfg.get_long("seed"));
    opts.probes = static_cast<int>(cfg.get_long("samples"));
    opts.flow_steps = static_cast<int>(cfg.get_long("steps"));
    const int n_samples = static_cast<int>(cfg.get_long("samples"));
    const SampleCloud cloud = grid_mode
                                  ? SampleCloud::grid(region, 11)
                                  : SampleCloud::monte_carlo(region, n_samples, opts.seed);

    const VolumeReport rep = volume_evolution(sf, cloud, sign, T, opts);
    const double C = c_override >= 0 ? c_override : sf.C_bound;
    bool audit_pass = true;
    std::string audit_msg = "ok";
    try {
        contraction_audit(rep, C);
    } catch (const AuditFailed& e) {
        audit_pass = false;
        audit_msg = e.what();
    }

    {
        auto out = open_out(c.out_dir, "volume.csv");
        out << header_comment(c.structure_path, cfg);
        write_volume_csv(out, rep);
    }
    {
        json j = json::parse(volume_report_json(rep, audit_pass, region_spec));
        j["C_used_for_audit"] = C;
        j["audit_message"] = audit_msg;
        j["_meta"] = meta_json(c.structure_path, cfg);
        auto out = open_out(c.out_dir, "volume_summary.json");
        out << j.dump(2) << "\n";
    }
    std::cout << "vol(A) = " << rep.volA << ", final vol_div = " << rep.vol_div.back()
              << ", audit " << (audit_pass ? "pass" : "FAIL") << " (C = " << C << ")\n";
    return audit_pass ? kExitOk : kExitAudit;
}

int cmd_verify_all(const Common& c) {
    std::filesystem::create_directories(c.out_dir);
    const auto results = run_acceptance(&std::cerr);
    std::ofstream out(std::filesystem::path(c.out_dir) / "acceptance.txt");
    report_acceptance(out, results);
    const bool ok = report_acceptance(std::cout, results);
    return ok ? kExitOk : kExitAudit;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"rank-2 sub-Riemannian structures on R^4: singular line fields, "
                 "geodesics, discrete optimal transport, volume contraction"};
    app.set_version_flag("--version", std::string("sr4 ") + kVersion);
    app.require_subcommand(1);

    Common common;
    std::string start_point = "0,0,0,0", from_point, to_point, mu_path, nu_path;
    std::string pairs_path;
    std::string region_spec;
    double T = 1.0, c_override = -1.0;
    int sign = +1;
    bool brute_force = false, grid_mode = false;

    const auto add_common = [&](CLI::App* cmd, bool needs_structure) {
        if (needs_structure) {
            cmd->add_option("--structure", common.structure_path, "structure JSON file")
                ->required();
        }
        cmd->add_option("--scenario", common.scenario_path,
                        "scenario JSON with default parameters");
        cmd->add_option("--out", common.out_dir, "output directory");
        cmd->add_option("--seed", common.seed, "random seed");
        cmd->add_option("--tol", common.tol, "tolerance override");
        cmd->add_option("--samples", common.samples, "sample count");
        cmd->add_option("--steps", common.steps, "integrator steps");
    };

    CLI::App* inspect = app.add_subcommand("inspect", "print structure diagnostics");
    add_common(inspect, true);

    CLI::App* flow_cmd = app.add_subcommand("flow", "integrate the singular line field");
    add_common(flow_cmd, true);
    flow_cmd->add_option("--start", start_point, "start point c1,c2,c3,c4")->required();
    flow_cmd->add_option("--sign", sign, "flow direction, +1 or -1");
    flow_cmd->add_option("--T", T, "time horizon");

    CLI::App* dist = app.add_subcommand("distance", "sub-Riemannian distance");
    add_common(dist, true);
    dist->add_option("--from", from_point, "start point");
    dist->add_option("--to", to_point, "target point");
    dist->add_option("--pairs", pairs_path, "CSV of query rows x1..x4,y1..y4");

    CLI::App* transport = app.add_subcommand("transport", "discrete Kantorovich problem");
    add_common(transport, true);
    transport->add_option("--mu", mu_path, "source measure JSON")->required();
    transport->add_option("--nu", nu_path, "target measure JSON")->required();
    transport->add_flag("--brute-force", brute_force, "print all permutations (n = m <= 8)");

    CLI::App* contract = app.add_subcommand("contract", "volume contraction experiment");
    add_common(contract, true);
    contract->add_option("--region", region_spec, "sample region c..;h..")->required();
    contract->add_option("--T", T, "time horizon");
    contract->add_option("--sign", sign, "flow direction");
    contract->add_flag("--grid", grid_mode, "deterministic cell-counting mode");
    contract->add_option("--c-override", c_override, "audit with this C instead");

    CLI::App* verify = app.add_subcommand("verify-all", "run the acceptance suite");
    add_common(verify, false);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitInput;
    }

    try {
        if (inspect->parsed()) return cmd_inspect(common, make_config(common, inspect));
        if (flow_cmd->parsed()) {
            return cmd_flow(common, make_config(common, flow_cmd), start_point, sign, T);
        }
        if (dist->parsed()) {
            return cmd_distance(common, make_config(common, dist), from_point, to_point,
                                pairs_path);
        }
        if (transport->parsed()) {
            return cmd_transport(common, make_config(common, transport), mu_path, nu_path,
                                 brute_force);
        }
        if (contract->parsed()) {
            return cmd_contract(common, make_config(common, contract), region_spec, T,
                                grid_mode, c_override, sign);
        }
        if (verify->parsed()) return cmd_verify_all(common);
    } catch (const ParseError& e) {
        std::cerr << "input error: " << e.what() << "\n";
        return kExitInput;
    } catch (const NotConverged& e) {
        std::cerr << "convergence failure: " << e.what() << "\n";
        return kExitConvergence;
    } catch (const AuditFailed& e) {
        std::cerr << "audit failure: " << e.what() << "\n";
        return kExitAudit;
    } catch (const CertificateFailed& e) {
        std::cerr << "audit failure: " << e.what() << "\n";
        return kExitAudit;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return kExitOk;
}
