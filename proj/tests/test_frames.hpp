#pragma once

// Reference frames shared across the test suites.

#include "sr4/structure.hpp"

inline sr4::Frame engel_frame() {
    sr4::Frame f;
    f.A = sr4::Poly4::variable(0);                       // A = x1
    f.B = sr4::Poly4::monomial({2, 0, 0, 0}, 0.5);       // B = x1^2/2
    f.box.center = sr4::Vec4::Zero();
    f.box.half = sr4::Vec4::Constant(2.0);
    return f;
}

inline sr4::Frame cubic_frame() {
    sr4::Frame f;
    f.A = sr4::Poly4::variable(0);                       // A = x1
    f.B = sr4::Poly4::monomial({3, 0, 0, 0}, 1.0 / 6.0); // B = x1^3/6
    f.box.center = sr4::Vec4::Zero();
    f.box.half = sr4::Vec4::Constant(2.0);
    return f;
}

// A = x1(1 + x3), B = x1^2/2: the line field is (1 + x3) X^2 and
// div X = 2 x1 (1 + x3), strictly negative where x1 < 0.
inline sr4::Frame negdiv_frame() {
    sr4::Frame f;
    f.A = sr4::Poly4::variable(0) + sr4::Poly4::variable(0) * sr4::Poly4::variable(2);
    f.B = sr4::Poly4::monomial({2, 0, 0, 0}, 0.5);
    f.box.center = sr4::Vec4::Zero();
    f.box.half = sr4::Vec4(0.5, 1.5, 0.5, 0.5);
    return f;
}
