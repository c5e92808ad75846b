// Acceptance battery driver: one pass/fail line per criterion, nonzero exit
// if anything fails. The same battery backs `medeq accept`.

#include <cstdio>
#include <string>

#include "medeq/acceptance.hpp"

int main() {
  setvbuf(stdout, nullptr, _IONBF, 0);
  const medeq::AcceptanceReport rep = medeq::run_acceptance([](const medeq::Criterion& c) {
    std::string gates;
    for (const medeq::Gate& g : c.gates) {
      char buf[160];
      std::snprintf(buf, sizeof buf, "%s%s %.3g %s %.3g", gates.empty() ? "" : ", ",
                    g.name.c_str(), g.measured, g.strict ? "<" : "<=", g.bound);
      gates += buf;
    }
    std::printf("C%-2d %s  %s  [%s]  (%.2f s)\n", c.id, c.pass ? "PASS" : "FAIL",
                c.title.c_str(), gates.c_str(), c.seconds);
  });
  std::size_t passed = 0;
  for (const medeq::Criterion& c : rep.criteria) passed += c.pass ? 1 : 0;
  std::printf("%zu/%zu criteria passed in %.1f s\n", passed, rep.criteria.size(),
              rep.seconds);
  return rep.pass ? 0 : 1;
}
