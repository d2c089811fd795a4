// Runs the acceptance criteria and prints one PASS/FAIL line per criterion.
// Usage: aggdiff_acceptance [selector]   (all, a suite name or a criterion number)
#include <cstdio>
#include <exception>

#include "aggdiff/acceptance.hpp"

int main(int argc, char** argv) {
  using namespace aggdiff::acceptance;
  try {
    const auto list = select(argc > 1 ? argv[1] : "all");
    const auto results = run_all(list, thread_cap(), [](const Outcome& o) {
      std::printf("%s\n", format_line(o).c_str());
      std::fflush(stdout);
    });
    int failed = 0;
    for (const auto& o : results) failed += o.pass ? 0 : 1;
    std::printf("%d of %zu criteria passed\n", static_cast<int>(results.size()) - failed, results.size());
    return failed == 0 ? 0 : 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
