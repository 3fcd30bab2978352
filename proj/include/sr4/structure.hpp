#pragma once

#include <filesystem>
#include <optional>
#include <random>
#include <utility>

#include "sr4/poly.hpp"

namespace sr4 {

/// Vector field on R^4 with polynomial components.
struct VectorField4 {
    std::array<Poly4, 4> c;

    Vec4 eval(const Vec4& x) const {
        return {c[0].eval(x), c[1].eval(x), c[2].eval(x), c[3].eval(x)};
    }

    /// Jacobian entries as polynomials, J[i][j] = d c_i / d x_j.
    std::array<std::array<Poly4, 4>, 4> jacobian() const;

    Mat4 jacobian_at(const Vec4& x) const;

    bool is_zero() const {
        return c[0].is_zero() && c[1].is_zero() && c[2].is_zero() && c[3].is_zero();
    }

    VectorField4 operator+(const VectorField4& o) const;
    VectorField4 operator-(const VectorField4& o) const;
    VectorField4 scaled(const Poly4& s) const;

    /// Coordinate divergence sum_i d c_i / d x_i, exact.
    Poly4 divergence() const;

    double sup_bound(const DomainBox& box) const;
};

/// [V, W] = DW.V - DV.W with exact polynomial arithmetic.
VectorField4 lie_bracket(const VectorField4& v, const VectorField4& w);

/// Orthonormal rank-2 frame X^1 = d/dx1, X^2 = d/dx2 + A d/dx3 + B d/dx4
/// on a compact box.
struct Frame {
    Poly4 A;
    Poly4 B;
    DomainBox box;

    VectorField4 x1() const;
    VectorField4 x2() const;

    /// sup over the box of sqrt(|X^1|^2 + |X^2|^2); converts Euclidean to
    /// metric length scales (d_SR >= d_euclid / bound).
    double frame_norm_bound() const;

    /// Surrogate for the metric diameter of the box: Euclidean diameter
    /// times the frame norm bound.
    double length_scale() const { return box.euclid_diameter() * frame_norm_bound(); }
};

/// All bracket fields entering the step-3 growth test, computed once.
struct BracketSet {
    VectorField4 x1, x2, br, br11, br12;
};

BracketSet brackets(const Frame& frame);

/// E, F of the second-order bracket [X^2,[X^1,X^2]] = E d3 + F d4.
std::pair<Poly4, Poly4> ef_coefficients(const Frame& frame);

struct GrowthReport {
    bool ok = false;
    std::optional<Vec4> witness;   // grid point where (A_x1, B_x1) both vanish
    bool a1_nonvanishing = false;  // chart normalization A_x1 != 0 certified
    bool certified = false;        // grid margin beats the Lipschitz radius
    double grid_min = 0.0;         // min over grid of |(A_x1, B_x1)|
    double grid_min_a1 = 0.0;      // min over grid of |A_x1|
    int grid_n = 0;
};

/// Grid scan plus a coefficient-norm Lipschitz bound for the step-2 growth
/// condition (A_x1, B_x1) != (0,0) on the box.
GrowthReport growth_check(const Frame& frame, int grid_n = 17);

/// Throws DegenerateFrame when growth_check fails or the chart normalization
/// A_x1 != 0 cannot be certified.
void require_growth(const Frame& frame);

/// True iff x lies in H^c, i.e. brackets up to order 3 do not span R^4.
/// rel_tol scales the singular-value threshold by the largest column norm.
bool hc_membership(const Frame& frame, const Vec4& x, double rel_tol = 1e-9);
bool hc_membership(const BracketSet& bs, const Vec4& x, double rel_tol = 1e-9);

/// Annihilator of span{X^1, X^2, [X^1,X^2]} at x: unit null covector of the
/// 3x4 system, sign fixed by a positive last nonzero component.
Vec4 annihilator(const BracketSet& bs, const Vec4& x);

Frame load_structure(const std::filesystem::path& path);
void save_structure(const Frame& frame, const std::filesystem::path& path);
Frame parse_structure_json(const std::string& text);
std::string structure_to_json(const Frame& frame);

/// Random degree<=3 frame with A = x1 + small perturbation, rejected until
/// growth_check certifies the box. Used by property tests and experiments.
Frame random_cubic_frame(std::mt19937_64& rng, double box_half = 1.0,
                         double coeff_scale = 0.05);

}  // namespace sr4
