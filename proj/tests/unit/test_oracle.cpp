#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <sstream>

#include "pagan/oracle.hpp"
#include "pagan/rng.hpp"

using namespace pagan::oracle;
using pagan::Rng;

TEST_CASE("DiscreteJoint validation") {
  DiscreteJoint j(2, 2);
  j.at(0, 0) = 0.5;
  j.at(1, 1) = 0.5;
  CHECK_NOTHROW(j.validate());
  j.at(1, 1) = 0.4;
  CHECK_THROWS_AS(j.validate(), std::invalid_argument);
  j.at(1, 1) = -0.1;
  CHECK_THROWS_AS(j.validate(), std::invalid_argument);
  j.at(1, 1) = 0.3;
  j.normalize();
  CHECK_NOTHROW(j.validate());
}

TEST_CASE("jsd_discrete basics") {
  const std::vector<double> p{0.75, 0.25}, q{0.25, 0.75};
  CHECK(jsd_discrete(p, p) == 0.0);
  // Disjoint point masses sit at the ln 2 ceiling.
  CHECK(jsd_discrete({1.0, 0.0}, {0.0, 1.0}) ==
        doctest::Approx(std::log(2.0)).epsilon(1e-15));
  // Four-term hand computation.
  double hand = 0.5 * (0.75 * std::log(1.5) + 0.25 * std::log(0.5)) +
                0.5 * (0.25 * std::log(0.5) + 0.75 * std::log(1.5));
  CHECK(jsd_discrete(p, q) == doctest::Approx(hand).epsilon(1e-15));
  CHECK(jsd_discrete(p, q) == doctest::Approx(jsd_discrete(q, p)).epsilon(1e-15));
  CHECK_THROWS_AS(jsd_discrete({0.5, 0.4}, {0.5, 0.5}), std::invalid_argument);
  CHECK_THROWS_AS(jsd_discrete({1.0}, {0.5, 0.5}), std::invalid_argument);
}

TEST_CASE("optimal_discriminator_table formula") {
  DiscreteJoint real(1, 2), fake(1, 2);
  real.at(0, 0) = 0.3;
  real.at(0, 1) = 0.7;
  fake.at(0, 0) = 0.1;
  fake.at(0, 1) = 0.9;
  const auto d = optimal_discriminator_table(real, fake);
  CHECK(d[0] == doctest::Approx(0.75).epsilon(1e-15));
  // Equal joints give a flat half.
  const auto flat = optimal_discriminator_table(real, real);
  CHECK(flat[0] == 0.5);
  CHECK(flat[1] == 0.5);
  // Zero-mass cells are marked undefined.
  DiscreteJoint za(2, 2), zb(2, 2);
  za.at(0, 0) = 1.0;
  zb.at(0, 0) = 1.0;
  const auto dz = optimal_discriminator_table(za, zb);
  CHECK(std::isnan(dz[3]));
  CHECK(dz[0] == 0.5);
  // All defined values live in [0, 1].
  Rng rng(5);
  const auto a = random_joint(rng, 5, 4, 0.0);
  const auto b = random_joint(rng, 5, 4, 0.0);
  for (double v : optimal_discriminator_table(a, b)) {
    if (!std::isnan(v)) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
  }
  DiscreteJoint wrong(3, 2);
  CHECK_THROWS_AS(optimal_discriminator_table(real, wrong),
                  std::invalid_argument);
}

TEST_CASE("value_function_discrete") {
  Rng rng(7);
  const auto real = random_joint(rng, 4, 4, 0.01);
  const auto fake = random_joint(rng, 4, 4, 0.01);
  // Flat half scores -ln 4 regardless of the joints.
  std::vector<double> half(16, 0.5);
  CHECK(value_function_discrete(real, fake, half) ==
        doctest::Approx(-std::log(4.0)).epsilon(1e-12));
  // Equal joints at the optimum also score -ln 4.
  CHECK(value_function_discrete(real, real,
                                optimal_discriminator_table(real, real)) ==
        doctest::Approx(-std::log(4.0)).epsilon(1e-12));
  // Boundary D with mass on the wrong side is rejected.
  std::vector<double> bad(16, 0.5);
  bad[3] = 1.0;
  CHECK_THROWS_AS(value_function_discrete(real, fake, bad), std::domain_error);
  bad[3] = 0.0;
  CHECK_THROWS_AS(value_function_discrete(real, fake, bad), std::domain_error);
}

TEST_CASE("value at the analytic optimum equals the conditional-JSD form") {
  Rng rng(9);
  double worst = 0.0;
  for (int t = 0; t < 100; ++t) {
    auto [real, fake] = random_shared_marginal_pair(rng, 6, 7, 0.01);
    const double lhs = value_function_discrete(
        real, fake, optimal_discriminator_table(real, fake));
    const double rhs = expected_conditional_jsd_value(real, fake);
    worst = std::max(worst, std::abs(lhs - rhs));
  }
  CHECK(worst <= 1e-12);
}

TEST_CASE("expected_conditional_jsd_value rejects mismatched marginals") {
  Rng rng(10);
  const auto a = random_joint(rng, 3, 3, 0.1);
  const auto b = random_joint(rng, 3, 3, 0.1);
  CHECK_THROWS_AS(expected_conditional_jsd_value(a, b), std::invalid_argument);
}

TEST_CASE("gradient_descent_discriminator converges to the closed form") {
  Rng rng(13);
  SUBCASE("equal joints converge to a flat half") {
    const auto real = random_joint(rng, 4, 4, 0.02);
    const auto d = gradient_descent_discriminator(real, real, 2000, 0.5);
    for (double v : d) CHECK(v == doctest::Approx(0.5).epsilon(2e-3));
  }
  SUBCASE("random 8x8 joints approach the analytic table") {
    const auto real = random_joint(rng, 8, 8, 0.02);
    const auto fake = random_joint(rng, 8, 8, 0.02);
    const auto learned = gradient_descent_discriminator(real, fake, 4000, 0.5);
    const auto analytic = optimal_discriminator_table(real, fake);
    double linf = 0.0;
    for (std::size_t i = 0; i < learned.size(); ++i)
      linf = std::max(linf, std::abs(learned[i] - analytic[i]));
    CHECK(linf < 0.05);
    // The analytic table is never beaten.
    CHECK(value_function_discrete(real, fake, learned) <=
          value_function_discrete(real, fake, analytic) + 1e-9);
  }
  SUBCASE("zero-mass cells keep their initial logits") {
    DiscreteJoint real(2, 2), fake(2, 2);
    real.at(0, 0) = 0.6;
    real.at(0, 1) = 0.4;
    fake.at(0, 0) = 0.5;
    fake.at(0, 1) = 0.5;
    const auto d = gradient_descent_discriminator(real, fake, 500, 0.5);
    CHECK(d[2] == 0.5);  // sigmoid of an untouched zero logit
    CHECK(d[3] == 0.5);
  }
  CHECK_THROWS_AS(
      gradient_descent_discriminator(DiscreteJoint(2, 2), DiscreteJoint(2, 2), 0, 0.5),
      std::invalid_argument);
}

TEST_CASE("degenerate pairing yields an exact indicator") {
  const int n = 5;
  DiscreteJoint real(n, n), fake(n, n);
  for (int x = 0; x < n; ++x) {
    real.at(x, x) = 1.0 / n;
    for (int y = 0; y < n; ++y)
      if (y != x) fake.at(x, y) = 1.0 / (n * (n - 1));
  }
  const auto d = optimal_discriminator_table(real, fake);
  for (int x = 0; x < n; ++x)
    for (int y = 0; y < n; ++y)
      CHECK(d[static_cast<std::size_t>(x) * n + y] == (x == y ? 1.0 : 0.0));
}

TEST_CASE("verification suite runs green") {
  std::ostringstream os;
  CHECK(run_verification_suite(os, 2024));
  CHECK(os.str().find("FAIL") == std::string::npos);
  CHECK(os.str().find("PASS") != std::string::npos);
}
