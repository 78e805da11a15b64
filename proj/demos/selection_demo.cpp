// Designs the five treatment controllers, runs a few bot sessions each and
// prints where the population ends up.

#include <cstdio>

#include "eqsel/measurements.hpp"

int main() {
  using namespace eqsel;
  for (double b : kTreatmentBs) {
    const auto d = design_controller(b);
    SessionConfig c;
    c.b = b;
    const auto logs = run_treatment(c, 4, 100);
    const auto r = aggregate_treatment(logs);
    std::printf("b=%+.1f  K=(%+.3f %+.3f %+.3f %+.3f %+.3f)  mass{1,2,3}=%.3f  |L|=%.4f\n", b, d.gain[0], d.gain[1],
                d.gain[2], d.gain[3], d.gain[4], mass(r.distribution.rho_bar, {1, 2, 3}), r.abs_l_mean);
  }
}
