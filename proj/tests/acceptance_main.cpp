// Acceptance harness: runs the golden-number battery end to end and prints
// one PASS/FAIL line per check with the individual assertions indented
// below. Exits zero only when every failure is an expected one (see
// checks/golden_checks.hpp for what "expected" means).
//
// Usage: acceptance [--quick]
//   --quick runs only the closed-form checks (sub-second); the default full
//   battery includes the Monte-Carlo checks and takes about a minute.

#include <cstdio>
#include <cstring>
#include <exception>

#include "checks/golden_checks.hpp"

int main(int argc, char** argv) {
    using namespace qkd::checks;
    check_level level = check_level::full;
    for (int i = 1; i < argc; ++i) {
        if (std::strcmp(argv[i], "--quick") == 0) {
            level = check_level::quick;
        } else {
            std::fprintf(stderr, "usage: %s [--quick]\n", argv[0]);
            return 2;
        }
    }
    try {
        std::vector<check_result> results = run_checks(level);
        std::fputs(format_checks(results).c_str(), stdout);
        return unexpected_failures(results) == 0 ? 0 : 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}
