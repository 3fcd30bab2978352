#include "sr4/structure.hpp"

#include <Eigen/SVD>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "sr4/errors.hpp"

namespace sr4 {

std::array<std::array<Poly4, 4>, 4> VectorField4::jacobian() const {
    std::array<std::array<Poly4, 4>, 4> j;
    for (int i = 0; i < 4; ++i)
        for (int k = 0; k < 4; ++k) j[i][k] = c[i].partial(k);
    return j;
}

Mat4 VectorField4::jacobian_at(const Vec4& x) const {
    Mat4 m;
    for (int i = 0; i < 4; ++i)
        for (int k = 0; k < 4; ++k) m(i, k) = c[i].partial(k).eval(x);
    return m;
}

VectorField4 VectorField4::operator+(const VectorField4& o) const {
    VectorField4 r;
    for (int i = 0; i < 4; ++i) r.c[i] = c[i] + o.c[i];
    return r;
}

VectorField4 VectorField4::operator-(const VectorField4& o) const {
    VectorField4 r;
    for (int i = 0; i < 4; ++i) r.c[i] = c[i] - o.c[i];
    return r;
}

VectorField4 VectorField4::scaled(const Poly4& s) const {
    VectorField4 r;
    for (int i = 0; i < 4; ++i) r.c[i] = s * c[i];
    return r;
}

Poly4 VectorField4::divergence() const {
    Poly4 d;
    for (int i = 0; i < 4; ++i) d += c[i].partial(i);
    return d;
}

double VectorField4::sup_bound(const DomainBox& box) const {
    double s = 0.0;
    for (int i = 0; i < 4; ++i) {
        const double b = c[i].sup_bound(box);
        s += b * b;
    }
    return std::sqrt(s);
}

VectorField4 lie_bracket(const VectorField4& v, const VectorField4& w) {
    // Each component is one subtraction of two independently accumulated
    // sums, so [v,w] = -[w,v] holds bitwise.
    VectorField4 r;
    for (int i = 0; i < 4; ++i) {
        Poly4 fwd, rev;
        for (int k = 0; k < 4; ++k) {
            fwd += w.c[i].partial(k) * v.c[k];
            rev += v.c[i].partial(k) * w.c[k];
        }
        r.c[i] = fwd - rev;
    }
    return r;
}

VectorField4 Frame::x1() const {
    VectorField4 f;
    f.c[0] = Poly4::constant(1.0);
    return f;
}

VectorField4 Frame::x2() const {
    VectorField4 f;
    f.c[1] = Poly4::constant(1.0);
    f.c[2] = A;
    f.c[3] = B;
    return f;
}

double Frame::frame_norm_bound() const {
    // |X^1|^2 = 1, |X^2|^2 = 1 + A^2 + B^2.
    const double a = A.sup_bound(box);
    const double b = B.sup_bound(box);
    return std::sqrt(2.0 + a * a + b * b);
}

BracketSet brackets(const Frame& frame) {
    BracketSet bs;
    bs.x1 = frame.x1();
    bs.x2 = frame.x2();
    bs.br = lie_bracket(bs.x1, bs.x2);
    bs.br11 = lie_bracket(bs.x1, bs.br);
    bs.br12 = lie_bracket(bs.x2, bs.br);
    return bs;
}

std::pair<Poly4, Poly4> ef_coefficients(const Frame& frame) {
    const Poly4& A = frame.A;
    const Poly4& B = frame.B;
    const Poly4 A1 = A.partial(0), B1 = B.partial(0);
    const Poly4 E = A1.partial(1) + A * A1.partial(2) + B * A1.partial(3) -
                    A1 * A.partial(2) - B1 * A.partial(3);
    const Poly4 F = B1.partial(1) + A * B1.partial(2) + B * B1.partial(3) -
                    A1 * B.partial(2) - B1 * B.partial(3);
    return {E, F};
}

GrowthReport growth_check(const Frame& frame, int grid_n) {
    GrowthReport rep;
    rep.grid_n = grid_n;
    const Poly4 A1 = frame.A.partial(0);
    const Poly4 B1 = frame.B.partial(0);

    double min_norm = std::numeric_limits<double>::infinity();
    double min_a1 = std::numeric_limits<double>::infinity();
    Vec4 worst = frame.box.center;
    frame.box.for_each_grid(grid_n, [&](const Vec4& x) {
        const double a = A1.eval(x), b = B1.eval(x);
        const double n = std::hypot(a, b);
        if (n < min_norm) {
            min_norm = n;
            worst = x;
        }
        min_a1 = std::min(min_a1, std::abs(a));
    });
    rep.grid_min = min_norm;
    rep.grid_min_a1 = min_a1;

    // Within one grid cell a function moves by at most its gradient bound
    // times the cell half-diagonal.
    const double lip_pair =
        std::hypot(A1.gradient_bound(frame.box), B1.gradient_bound(frame.box));
    const double lip_a1 = A1.gradient_bound(frame.box);
    double cell = 0.0;
    for (int i = 0; i < 4; ++i) {
        const double h = (grid_n > 1) ? frame.box.half[i] / (grid_n - 1) : frame.box.half[i];
        cell += h * h;
    }
    cell = std::sqrt(cell);

    const double scale = 1.0 + A1.sup_bound(frame.box) + B1.sup_bound(frame.box);
    if (min_norm <= 1e-12 * scale) {
        rep.ok = false;
        rep.witness = worst;
        return rep;
    }
    rep.ok = true;
    rep.certified = min_norm > lip_pair * cell;
    rep.a1_nonvanishing = min_a1 > lip_a1 * cell;
    return rep;
}

void require_growth(const Frame& frame) {
    const GrowthReport rep = growth_check(frame);
    if (!rep.ok) {
        std::ostringstream os;
        os << "growth condition fails";
        if (rep.witness) {
            os << " at (" << rep.witness->transpose() << ")";
        }
        throw DegenerateFrame(os.str());
    }
    if (!rep.a1_nonvanishing) {
        throw DegenerateFrame("chart normalization A_x1 != 0 not certified on the box");
    }
}

namespace {

double smallest_sv4(const Mat4& m) {
    Eigen::JacobiSVD<Mat4> svd(m);
    return svd.singularValues()(3);
}

double max_col_norm(const Mat4& m) {
    double r = 0.0;
    for (int j = 0; j < 4; ++j) r = std::max(r, m.col(j).norm());
    return r;
}

}  // namespace

bool hc_membership(const BracketSet& bs, const Vec4& x, double rel_tol) {
    Mat4 m;
    m.col(0) = bs.x1.eval(x);
    m.col(1) = bs.x2.eval(x);
    m.col(2) = bs.br.eval(x);

    // Best 4-column choice over the two order-3 brackets: the 5-column span
    // is R^4 iff one of the two completions has full rank.
    double best_sv = 0.0, best_scale = 0.0;
    for (const VectorField4* f : {&bs.br11, &bs.br12}) {
        m.col(3) = f->eval(x);
        const double sc = max_col_norm(m);
        const double sv = smallest_sv4(m);
        if (sv > best_sv) {
            best_sv = sv;
            best_scale = sc;
        }
        best_scale = std::max(best_scale, sc);
    }
    const double tol = rel_tol * std::max(best_scale, 1e-300);
    return best_sv < tol;
}

bool hc_membership(const Frame& frame, const Vec4& x, double rel_tol) {
    return hc_membership(brackets(frame), x, rel_tol);
}

Vec4 annihilator(const BracketSet& bs, const Vec4& x) {
    Eigen::Matrix<double, 3, 4> m;
    m.row(0) = bs.x1.eval(x).transpose();
    m.row(1) = bs.x2.eval(x).transpose();
    m.row(2) = bs.br.eval(x).transpose();
    Eigen::JacobiSVD<Eigen::Matrix<double, 3, 4>> svd(m, Eigen::ComputeFullV);
    Vec4 v = svd.matrixV().col(3);
    for (int i = 3; i >= 0; --i) {
        if (std::abs(v[i]) > 1e-14) {
            if (v[i] < 0) v = -v;
            break;
        }
    }
    return v;
}

namespace {

using nlohmann::json;

Poly4 parse_poly(const json& arr, const std::string& field) {
    if (!arr.is_array()) throw ParseError("field \"" + field + "\" must be an array of terms");
    Poly4 p;
    int idx = 0;
    for (const auto& term : arr) {
        const std::string where = field + "[" + std::to_string(idx) + "]";
        if (!term.is_array() || term.size() != 5)
            throw ParseError(where + ": expected [e1,e2,e3,e4,coeff]");
        Poly4::Exponents e;
        for (int i = 0; i < 4; ++i) {
            if (!term[i].is_number_integer())
                throw ParseError(where + ": exponent " + std::to_string(i + 1) +
                                 " must be an integer");
            const long long v = term[i].get<long long>();
            if (v < 0)
                throw ParseError(where + ": exponent " + std::to_string(i + 1) +
                                 " is negative");
            e[i] = static_cast<int>(v);
        }
        double c;
        if (term[4].is_string()) {
            const std::string s = term[4].get<std::string>();
            char* end = nullptr;
            c = std::strtod(s.c_str(), &end);
            if (end == s.c_str() || *end != '\0')
                throw ParseError(where + ": coefficient \"" + s + "\" is not a decimal number");
        } else if (term[4].is_number()) {
            c = term[4].get<double>();
        } else {
            throw ParseError(where + ": coefficient must be a decimal string or number");
        }
        p.add_term(e, c);
        ++idx;
    }
    return p;
}

Vec4 parse_vec4(const json& arr, const std::string& field) {
    if (!arr.is_array() || arr.size() != 4)
        throw ParseError("field \"" + field + "\" must be an array of 4 numbers");
    Vec4 v;
    for (int i = 0; i < 4; ++i) {
        if (!arr[i].is_number()) throw ParseError("field \"" + field + "\" must be numeric");
        v[i] = arr[i].get<double>();
    }
    return v;
}

json poly_to_json(const Poly4& p) {
    json arr = json::array();
    for (const auto& [e, c] : p.terms()) {
        std::ostringstream os;
        os.precision(17);
        os << c;
        arr.push_back({e[0], e[1], e[2], e[3], os.str()});
    }
    return arr;
}

}  // namespace

Frame parse_structure_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ParseError(std::string("invalid JSON: ") + e.what());
    }
    if (!j.contains("A")) throw ParseError("missing field \"A\"");
    if (!j.contains("B")) throw ParseError("missing field \"B\"");
    if (!j.contains("box")) throw ParseError("missing field \"box\"");
    Frame f;
    f.A = parse_poly(j["A"], "A");
    f.B = parse_poly(j["B"], "B");
    f.box.center = parse_vec4(j["box"].value("center", json()), "box.center");
    f.box.half = parse_vec4(j["box"].value("half", json()), "box.half");
    for (int i = 0; i < 4; ++i) {
        if (!(f.box.half[i] > 0)) throw ParseError("field \"box.half\" must be positive");
    }
    return f;
}

std::string structure_to_json(const Frame& frame) {
    json j;
    j["A"] = poly_to_json(frame.A);
    j["B"] = poly_to_json(frame.B);
    j["box"]["center"] = {frame.box.center[0], frame.box.center[1], frame.box.center[2],
                          frame.box.center[3]};
    j["box"]["half"] = {frame.box.half[0], frame.box.half[1], frame.box.half[2],
                        frame.box.half[3]};
    return j.dump(2);
}

Frame load_structure(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open structure file " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    try {
        return parse_structure_json(ss.str());
    } catch (const ParseError& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
}

void save_structure(const Frame& frame, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write structure file " + path.string());
    out << structure_to_json(frame) << "\n";
}

Frame random_cubic_frame(std::mt19937_64& rng, double box_half, double coeff_scale) {
    std::uniform_real_distribution<double> u(-coeff_scale, coeff_scale);
    const auto random_cubic = [&](bool with_x1_base) {
        Poly4 p = with_x1_base ? Poly4::variable(0) : Poly4();
        for (int e0 = 0; e0 <= 3; ++e0)
            for (int e1 = 0; e1 + e0 <= 3; ++e1)
                for (int e2 = 0; e2 + e1 + e0 <= 3; ++e2)
                    for (int e3 = 0; e3 + e2 + e1 + e0 <= 3; ++e3)
                        p.add_term({e0, e1, e2, e3}, u(rng));
        return p;
    };
    for (int attempt = 0; attempt < 256; ++attempt) {
        Frame f;
        f.A = random_cubic(true);
        f.B = random_cubic(false);
        f.box.center = Vec4::Zero();
        f.box.half = Vec4::Constant(box_half);
        const GrowthReport rep = growth_check(f);
        if (rep.ok && rep.a1_nonvanishing && rep.grid_min_a1 > 0.3) return f;
    }
    throw Error("random_cubic_frame: rejection sampling failed (scale too large?)");
}

}  // namespace sr4
