#pragma once

// Fixed-step RK4 over Eigen states. Fields here are analytic and flows are
// short, so a reproducible fixed-step scheme beats adaptive machinery.

namespace sr4 {

template <typename State, typename F>
State rk4_step(const F& f, const State& x, double h) {
    const State k1 = f(x);
    const State k2 = f(State(x + (h / 2) * k1));
    const State k3 = f(State(x + (h / 2) * k2));
    const State k4 = f(State(x + h * k3));
    return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

template <typename State, typename F>
State rk4_integrate(const F& f, State x, double T, int steps) {
    const double h = T / steps;
    for (int i = 0; i < steps; ++i) x = rk4_step(f, x, h);
    return x;
}

}  // namespace sr4
