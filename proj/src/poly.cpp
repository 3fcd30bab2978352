#include "sr4/poly.hpp"

#include <cmath>
#include <sstream>

namespace sr4 {

namespace {

double ipow(double x, int n) {
    double r = 1.0;
    while (n > 0) {
        if (n & 1) r *= x;
        x *= x;
        n >>= 1;
    }
    return r;
}

}  // namespace

Poly4 Poly4::constant(double c) {
    Poly4 p;
    p.add_term({0, 0, 0, 0}, c);
    return p;
}

Poly4 Poly4::variable(int axis) {
    Exponents e{0, 0, 0, 0};
    e[axis] = 1;
    return monomial(e, 1.0);
}

Poly4 Poly4::monomial(const Exponents& e, double c) {
    Poly4 p;
    p.add_term(e, c);
    return p;
}

void Poly4::add_term(const Exponents& e, double c) {
    if (c == 0.0) return;
    auto [it, inserted] = terms_.try_emplace(e, c);
    if (!inserted) {
        it->second += c;
        if (it->second == 0.0) terms_.erase(it);
    }
}

double Poly4::eval(const Vec4& x) const {
    double r = 0.0;
    for (const auto& [e, c] : terms_) {
        r += c * ipow(x[0], e[0]) * ipow(x[1], e[1]) * ipow(x[2], e[2]) *
             ipow(x[3], e[3]);
    }
    return r;
}

Poly4 Poly4::partial(int axis) const {
    Poly4 r;
    for (const auto& [e, c] : terms_) {
        if (e[axis] == 0) continue;
        Exponents d = e;
        d[axis] -= 1;
        r.add_term(d, c * e[axis]);
    }
    return r;
}

std::array<Poly4, 4> Poly4::gradient() const {
    return {partial(0), partial(1), partial(2), partial(3)};
}

Poly4 Poly4::operator+(const Poly4& o) const {
    Poly4 r = *this;
    r += o;
    return r;
}

Poly4 Poly4::operator-(const Poly4& o) const {
    Poly4 r = *this;
    r -= o;
    return r;
}

Poly4& Poly4::operator+=(const Poly4& o) {
    for (const auto& [e, c] : o.terms_) add_term(e, c);
    return *this;
}

Poly4& Poly4::operator-=(const Poly4& o) {
    for (const auto& [e, c] : o.terms_) add_term(e, -c);
    return *this;
}

Poly4 Poly4::operator*(const Poly4& o) const {
    Poly4 r;
    for (const auto& [ea, ca] : terms_) {
        for (const auto& [eb, cb] : o.terms_) {
            Exponents e{ea[0] + eb[0], ea[1] + eb[1], ea[2] + eb[2], ea[3] + eb[3]};
            r.add_term(e, ca * cb);
        }
    }
    return r;
}

Poly4 Poly4::operator-() const { return scaled(-1.0); }

Poly4 Poly4::scaled(double s) const {
    Poly4 r;
    if (s == 0.0) return r;
    for (const auto& [e, c] : terms_) r.terms_[e] = c * s;
    return r;
}

int Poly4::degree() const {
    int d = 0;
    for (const auto& [e, c] : terms_) d = std::max(d, e[0] + e[1] + e[2] + e[3]);
    return d;
}

double Poly4::sup_bound(const DomainBox& box) const {
    const Vec4 r = box.abs_radius();
    double s = 0.0;
    for (const auto& [e, c] : terms_) {
        s += std::abs(c) * ipow(r[0], e[0]) * ipow(r[1], e[1]) * ipow(r[2], e[2]) *
             ipow(r[3], e[3]);
    }
    return s;
}

double Poly4::gradient_bound(const DomainBox& box) const {
    double s = 0.0;
    for (int i = 0; i < 4; ++i) {
        const double gi = partial(i).sup_bound(box);
        s += gi * gi;
    }
    return std::sqrt(s);
}

std::string Poly4::to_string() const {
    if (terms_.empty()) return "0";
    std::ostringstream os;
    bool first = true;
    for (const auto& [e, c] : terms_) {
        const bool unit_degree = (e[0] + e[1] + e[2] + e[3]) > 0;
        double a = c;
        if (!first) {
            os << (a < 0 ? " - " : " + ");
            a = std::abs(a);
        }
        first = false;
        if (!unit_degree || a != 1.0) {
            os << a;
            if (unit_degree) os << "*";
        }
        bool star = false;
        for (int i = 0; i < 4; ++i) {
            if (e[i] == 0) continue;
            if (star) os << "*";
            os << "x" << (i + 1);
            if (e[i] > 1) os << "^" << e[i];
            star = true;
        }
    }
    return os.str();
}

}  // namespace sr4
