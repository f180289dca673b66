#ifndef CVC_SELFTEST_HPP
#define CVC_SELFTEST_HPP

#include <ostream>

namespace cvc {

// Runs the built-in invariant suite (operator oracles, coder round trips,
// closed-loop coding on a small untrained model). Prints one line per check;
// returns the number of failures.
int run_selftest(std::ostream& out);

}  // namespace cvc

#endif
