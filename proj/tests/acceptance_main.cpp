// Acceptance suite runner: one pass/fail line per criterion, nonzero exit on
// any failure.

#include <iostream>

#include "sr4/acceptance.hpp"

int main() {
    const auto results = sr4::run_acceptance(&std::cerr);
    const bool ok = sr4::report_acceptance(std::cout, results);
    return ok ? 0 : 1;
}
