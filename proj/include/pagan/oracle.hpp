#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "pagan/rng.hpp"

namespace pagan::oracle {

// Brute-force double-precision verifiers over small discrete distributions.
// Everything here is independent of the tensor engine on purpose: these
// routines are the ground truth the differentiable stack is tested against.

// Joint distribution over a finite grid; row-major table p(x, y).
struct DiscreteJoint {
  int nx = 0, ny = 0;
  std::vector<double> p;

  DiscreteJoint() = default;
  DiscreteJoint(int nx_, int ny_);

  double& at(int x, int y);
  double at(int x, int y) const;

  // Throws std::invalid_argument unless entries are non-negative and sum to
  // 1 within 1e-12.
  void validate() const;
  void normalize();
  // Marginal over the first coordinate.
  std::vector<double> marginal_x() const;
  // Conditional row p(y | x); all-zero if the marginal at x is zero.
  std::vector<double> conditional_row(int x) const;
};

// Jensen-Shannon divergence, natural log; inputs must each sum to 1 (1e-9).
double jsd_discrete(const std::vector<double>& p, const std::vector<double>& q);

// Per-cell real/(real+fake); cells where both joints are zero come back NaN.
std::vector<double> optimal_discriminator_table(const DiscreteJoint& real,
                                                const DiscreteJoint& fake);

// Exact two-sided cross-entropy value: sum real·ln D + fake·ln(1−D).
// D must lie in (0,1) wherever the corresponding side has mass (a zero-mass
// side tolerates D at its own boundary, so indicator optima evaluate cleanly).
double value_function_discrete(const DiscreteJoint& real,
                               const DiscreteJoint& fake,
                               const std::vector<double>& D);

// Average over the shared x-marginal of (−ln 4 + 2·JSD between the
// conditional rows); the closed form the value at the optimum must match.
// Requires both joints to have the same x-marginal within 1e-9.
double expected_conditional_jsd_value(const DiscreteJoint& real,
                                      const DiscreteJoint& fake);

// Learns a per-cell discriminator by full-batch ascent on a sigmoid logit per
// cell, as an independent numerical witness for the analytic optimum.
std::vector<double> gradient_descent_discriminator(const DiscreteJoint& real,
                                                   const DiscreteJoint& fake,
                                                   int steps, double lr);

// Max over coordinates of |g_ad − g_fd| / max(1e-8, |g_fd|), with g_fd the
// central difference of f at the point.
double finite_difference_check(
    const std::function<double(const std::vector<double>&)>& f,
    const std::vector<double>& point, const std::vector<double>& grad_autodiff,
    double eps = 1e-3);

// Random-instance generators for the verification suites. min_mass > 0 keeps
// every cell strictly positive.
DiscreteJoint random_joint(Rng& rng, int nx, int ny, double min_mass);
// A pair of joints sharing the same x-marginal (random conditionals).
std::pair<DiscreteJoint, DiscreteJoint> random_shared_marginal_pair(
    Rng& rng, int nx, int ny, double min_mass);

// The `verify` CLI entry point: runs the discrete-distribution checks and
// prints one PASS/FAIL line per check. Returns true if everything passed.
bool run_verification_suite(std::ostream& os, std::uint64_t seed);

}  // namespace pagan::oracle
