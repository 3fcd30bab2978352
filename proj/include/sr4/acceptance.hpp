#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "sr4/singular.hpp"

namespace sr4 {

struct CriterionResult {
    int id = 0;
    std::string name;
    bool pass = false;
    std::string detail;
    double seconds = 0.0;
};

/// Reference frames used by the shipped scenarios and the acceptance suite.
Frame engel_frame();
Frame cubic_frame();
Frame negdiv_frame();

/// Runs the full acceptance suite; one result per criterion. Progress lines
/// go to the stream when provided.
std::vector<CriterionResult> run_acceptance(std::ostream* progress = nullptr);

/// Prints "[PASS]/[FAIL] <id>. <name> (<seconds>s): <detail>" per criterion;
/// returns true when everything passed.
bool report_acceptance(std::ostream& os, const std::vector<CriterionResult>& results);

}  // namespace sr4
