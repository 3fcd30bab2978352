#pragma once

#include <array>
#include <map>
#include <string>

#include "sr4/geometry.hpp"

namespace sr4 {

/// Exact multivariate polynomial on R^4.
///
/// Terms are kept in a sorted map from exponent 4-tuples to coefficients;
/// zero coefficients are never stored, so equality is structural. Evaluation
/// and formal differentiation are exact up to floating rounding.
class Poly4 {
public:
    using Exponents = std::array<int, 4>;
    using TermMap = std::map<Exponents, double>;

    Poly4() = default;

    static Poly4 constant(double c);
    static Poly4 variable(int axis);  // x_{axis+1}, axis in 0..3
    static Poly4 monomial(const Exponents& e, double c);

    void add_term(const Exponents& e, double c);

    double eval(const Vec4& x) const;
    Poly4 partial(int axis) const;
    std::array<Poly4, 4> gradient() const;

    Poly4 operator+(const Poly4& o) const;
    Poly4 operator-(const Poly4& o) const;
    Poly4 operator*(const Poly4& o) const;
    Poly4 operator-() const;
    Poly4& operator+=(const Poly4& o);
    Poly4& operator-=(const Poly4& o);
    Poly4 scaled(double s) const;

    bool operator==(const Poly4& o) const { return terms_ == o.terms_; }

    bool is_zero() const { return terms_.empty(); }
    int degree() const;
    const TermMap& terms() const { return terms_; }

    /// sum_terms |c| * prod_i r_i^{e_i}: an upper bound for |p| on the box.
    double sup_bound(const DomainBox& box) const;

    /// Euclidean bound for |grad p| on the box from per-axis sup bounds.
    double gradient_bound(const DomainBox& box) const;

    std::string to_string() const;

private:
    TermMap terms_;
};

inline Poly4 operator*(double s, const Poly4& p) { return p.scaled(s); }

}  // namespace sr4
