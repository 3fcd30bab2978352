#pragma once

#include <stdexcept>
#include <string>

namespace sr4 {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Growth condition (step-2 bracket generation) fails somewhere on the box.
struct DegenerateFrame : Error {
    using Error::Error;
};

/// The chart normalization A_{x1} != 0 is violated at the evaluation point.
struct ChartDegenerate : Error {
    using Error::Error;
};

/// A trajectory left the domain box before the requested horizon.
struct LeftDomain : Error {
    LeftDomain(const std::string& what, double t) : Error(what), t_exit(t) {}
    double t_exit;
};

struct NotConverged : Error {
    using Error::Error;
};

/// A singularity certificate residual exceeded the tolerance.
struct CertificateFailed : Error {
    CertificateFailed(const std::string& what, int node_index, std::string which)
        : Error(what), node(node_index), quantity(std::move(which)) {}
    int node;
    std::string quantity;
};

/// A volume lower bound was violated beyond Monte-Carlo noise.
struct AuditFailed : Error {
    AuditFailed(const std::string& what, double at_time) : Error(what), t(at_time) {}
    double t;
};

struct DegenerateSplit : Error {
    using Error::Error;
};

struct UnstableGradient : Error {
    using Error::Error;
};

struct ParseError : Error {
    using Error::Error;
};

/// Internal LP failure (marginal mismatch); indicates a bug, not bad input.
struct Infeasible : Error {
    using Error::Error;
};

}  // namespace sr4
