#include "pagan/oracle.hpp"

#include <cmath>
#include <limits>
#include <ostream>
#include <stdexcept>

namespace pagan::oracle {

namespace {

constexpr double kLn4 = 1.3862943611198906;  // ln 4

double xlogx_ratio(double a, double b) {
  // a * ln(a/b) with the 0·ln0 = 0 convention; caller guarantees b > 0 when
  // a > 0.
  if (a <= 0.0) return 0.0;
  return a * std::log(a / b);
}

}  // namespace

DiscreteJoint::DiscreteJoint(int nx_, int ny_) : nx(nx_), ny(ny_) {
  if (nx <= 0 || ny <= 0)
    throw std::invalid_argument("DiscreteJoint: support sizes must be positive");
  p.assign(static_cast<std::size_t>(nx) * ny, 0.0);
}

double& DiscreteJoint::at(int x, int y) {
  return p[static_cast<std::size_t>(x) * ny + y];
}

double DiscreteJoint::at(int x, int y) const {
  return p[static_cast<std::size_t>(x) * ny + y];
}

void DiscreteJoint::validate() const {
  if (static_cast<std::size_t>(nx) * ny != p.size())
    throw std::invalid_argument("DiscreteJoint: table size mismatch");
  double s = 0.0;
  for (double v : p) {
    if (v < 0.0)
      throw std::invalid_argument("DiscreteJoint: negative entry");
    s += v;
  }
  if (std::abs(s - 1.0) > 1e-12)
    throw std::invalid_argument("DiscreteJoint: table sums to " +
                                std::to_string(s) + ", expected 1");
}

void DiscreteJoint::normalize() {
  double s = 0.0;
  for (double v : p) s += v;
  if (s <= 0.0)
    throw std::invalid_argument("DiscreteJoint::normalize: zero total mass");
  for (double& v : p) v /= s;
}

std::vector<double> DiscreteJoint::marginal_x() const {
  std::vector<double> m(static_cast<std::size_t>(nx), 0.0);
  for (int x = 0; x < nx; ++x)
    for (int y = 0; y < ny; ++y) m[static_cast<std::size_t>(x)] += at(x, y);
  return m;
}

std::vector<double> DiscreteJoint::conditional_row(int x) const {
  std::vector<double> row(static_cast<std::size_t>(ny), 0.0);
  double m = 0.0;
  for (int y = 0; y < ny; ++y) m += at(x, y);
  if (m > 0.0)
    for (int y = 0; y < ny; ++y) row[static_cast<std::size_t>(y)] = at(x, y) / m;
  return row;
}

double jsd_discrete(const std::vector<double>& p, const std::vector<double>& q) {
  if (p.size() != q.size())
    throw std::invalid_argument("jsd_discrete: supports differ in size");
  double sp = 0.0, sq = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] < 0.0 || q[i] < 0.0)
      throw std::invalid_argument("jsd_discrete: negative probability");
    sp += p[i];
    sq += q[i];
  }
  if (std::abs(sp - 1.0) > 1e-9 || std::abs(sq - 1.0) > 1e-9)
    throw std::invalid_argument("jsd_discrete: inputs must sum to 1");
  double acc = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double m = 0.5 * (p[i] + q[i]);
    if (m <= 0.0) continue;
    acc += 0.5 * xlogx_ratio(p[i], m) + 0.5 * xlogx_ratio(q[i], m);
  }
  return acc;
}

std::vector<double> optimal_discriminator_table(const DiscreteJoint& real,
                                                const DiscreteJoint& fake) {
  if (real.nx != fake.nx || real.ny != fake.ny)
    throw std::invalid_argument(
        "optimal_discriminator_table: support mismatch");
  std::vector<double> d(real.p.size());
  for (std::size_t i = 0; i < d.size(); ++i) {
    const double a = real.p[i], b = fake.p[i];
    d[i] = (a + b > 0.0) ? a / (a + b)
                         : std::numeric_limits<double>::quiet_NaN();
  }
  return d;
}

double value_function_discrete(const DiscreteJoint& real,
                               const DiscreteJoint& fake,
                               const std::vector<double>& D) {
  if (real.nx != fake.nx || real.ny != fake.ny)
    throw std::invalid_argument("value_function_discrete: support mismatch");
  if (D.size() != real.p.size())
    throw std::invalid_argument("value_function_discrete: table size mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < D.size(); ++i) {
    const double a = real.p[i], b = fake.p[i];
    const double d = D[i];
    if (a > 0.0) {
      if (!(d > 0.0))
        throw std::domain_error(
            "value_function_discrete: D must be > 0 where the real side has mass");
      acc += a * std::log(d);
    }
    if (b > 0.0) {
      if (!(d < 1.0))
        throw std::domain_error(
            "value_function_discrete: D must be < 1 where the fake side has mass");
      acc += b * std::log(1.0 - d);
    }
  }
  return acc;
}

double expected_conditional_jsd_value(const DiscreteJoint& real,
                                      const DiscreteJoint& fake) {
  if (real.nx != fake.nx || real.ny != fake.ny)
    throw std::invalid_argument(
        "expected_conditional_jsd_value: support mismatch");
  const auto mr = real.marginal_x();
  const auto mf = fake.marginal_x();
  for (int x = 0; x < real.nx; ++x) {
    if (std::abs(mr[static_cast<std::size_t>(x)] -
                 mf[static_cast<std::size_t>(x)]) > 1e-9)
      throw std::invalid_argument(
          "expected_conditional_jsd_value: joints must share the x-marginal");
  }
  double acc = 0.0;
  for (int x = 0; x < real.nx; ++x) {
    const double px = mr[static_cast<std::size_t>(x)];
    if (px <= 0.0) continue;
    const double j =
        jsd_discrete(real.conditional_row(x), fake.conditional_row(x));
    acc += px * (-kLn4 + 2.0 * j);
  }
  return acc;
}

std::vector<double> gradient_descent_discriminator(const DiscreteJoint& real,
                                                   const DiscreteJoint& fake,
                                                   int steps, double lr) {
  if (real.nx != fake.nx || real.ny != fake.ny)
    throw std::invalid_argument(
        "gradient_descent_discriminator: support mismatch");
  if (steps < 1)
    throw std::invalid_argument(
        "gradient_descent_discriminator: steps must be >= 1");
  // One free logit per cell; ascend the two-sided cross-entropy value.
  std::vector<double> logit(real.p.size(), 0.0);
  std::vector<double> d(real.p.size());
  for (int s = 0; s < steps; ++s) {
    for (std::size_t i = 0; i < logit.size(); ++i) {
      const double sig = 1.0 / (1.0 + std::exp(-logit[i]));
      const double g = real.p[i] * (1.0 - sig) - fake.p[i] * sig;
      logit[i] += lr * g;
      if (!std::isfinite(logit[i]))
        throw std::runtime_error(
            "gradient_descent_discriminator: logits diverged at step " +
            std::to_string(s));
    }
  }
  for (std::size_t i = 0; i < logit.size(); ++i)
    d[i] = 1.0 / (1.0 + std::exp(-logit[i]));
  return d;
}

double finite_difference_check(
    const std::function<double(const std::vector<double>&)>& f,
    const std::vector<double>& point, const std::vector<double>& grad_autodiff,
    double eps) {
  if (grad_autodiff.size() != point.size())
    throw std::invalid_argument(
        "finite_difference_check: gradient/point size mismatch");
  if (!(eps > 0.0))
    throw std::invalid_argument("finite_difference_check: eps must be > 0");
  double worst = 0.0;
  std::vector<double> x = point;
  for (std::size_t i = 0; i < point.size(); ++i) {
    x[i] = point[i] + eps;
    const double fp = f(x);
    x[i] = point[i] - eps;
    const double fm = f(x);
    x[i] = point[i];
    if (!std::isfinite(fp) || !std::isfinite(fm))
      throw std::runtime_error(
          "finite_difference_check: non-finite function evaluation");
    const double fd = (fp - fm) / (2.0 * eps);
    const double rel =
        std::abs(grad_autodiff[i] - fd) / std::max(1e-8, std::abs(fd));
    worst = std::max(worst, rel);
  }
  return worst;
}

DiscreteJoint random_joint(Rng& rng, int nx, int ny, double min_mass) {
  DiscreteJoint j(nx, ny);
  for (double& v : j.p) v = min_mass + rng.uniform();
  j.normalize();
  return j;
}

std::pair<DiscreteJoint, DiscreteJoint> random_shared_marginal_pair(
    Rng& rng, int nx, int ny, double min_mass) {
  std::vector<double> px(static_cast<std::size_t>(nx));
  double s = 0.0;
  for (double& v : px) {
    v = 0.05 + rng.uniform();
    s += v;
  }
  for (double& v : px) v /= s;
  DiscreteJoint a(nx, ny), b(nx, ny);
  for (int x = 0; x < nx; ++x) {
    double sa = 0.0, sb = 0.0;
    std::vector<double> ra(static_cast<std::size_t>(ny)), rb(ra);
    for (int y = 0; y < ny; ++y) {
      ra[static_cast<std::size_t>(y)] = min_mass + rng.uniform();
      rb[static_cast<std::size_t>(y)] = min_mass + rng.uniform();
      sa += ra[static_cast<std::size_t>(y)];
      sb += rb[static_cast<std::size_t>(y)];
    }
    for (int y = 0; y < ny; ++y) {
      a.at(x, y) = px[static_cast<std::size_t>(x)] *
                   ra[static_cast<std::size_t>(y)] / sa;
      b.at(x, y) = px[static_cast<std::size_t>(x)] *
                   rb[static_cast<std::size_t>(y)] / sb;
    }
  }
  return {a, b};
}

bool run_verification_suite(std::ostream& os, std::uint64_t seed) {
  bool all = true;
  auto report = [&](const std::string& name, bool ok, const std::string& note) {
    os << (ok ? "PASS" : "FAIL") << "  " << name;
    if (!note.empty()) os << "  (" << note << ")";
    os << "\n";
    all = all && ok;
  };

  {
    // Learned per-cell discriminator vs the closed form, on random 8x8
    // instances, plus optimality of the closed form.
    Rng rng(derive_seed(seed, 101));
    double worst_linf = 0.0, worst_gap = 0.0;
    for (int trial = 0; trial < 5; ++trial) {
      const DiscreteJoint real = random_joint(rng, 8, 8, 0.02);
      const DiscreteJoint fake = random_joint(rng, 8, 8, 0.02);
      const auto analytic = optimal_discriminator_table(real, fake);
      const auto learned =
          gradient_descent_discriminator(real, fake, 4000, 0.5);
      for (std::size_t i = 0; i < analytic.size(); ++i)
        worst_linf = std::max(worst_linf, std::abs(analytic[i] - learned[i]));
      const double va = value_function_discrete(real, fake, analytic);
      const double vl = value_function_discrete(real, fake, learned);
      worst_gap = std::max(worst_gap, vl - va);
    }
    report("learned discriminator matches closed form (L-inf < 0.05)",
           worst_linf < 0.05, "worst " + std::to_string(worst_linf));
    report("closed form is optimal (no learned table beats it)",
           worst_gap <= 1e-9, "worst gap " + std::to_string(worst_gap));
  }

  {
    // Value at the optimum equals the conditional-JSD form, 100 instances.
    Rng rng(derive_seed(seed, 202));
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
      auto [real, fake] = random_shared_marginal_pair(rng, 6, 7, 0.01);
      const double lhs = value_function_discrete(
          real, fake, optimal_discriminator_table(real, fake));
      const double rhs = expected_conditional_jsd_value(real, fake);
      worst = std::max(worst, std::abs(lhs - rhs));
    }
    report("value at optimum equals the average conditional-JSD form (1e-12)",
           worst <= 1e-12, "worst " + std::to_string(worst));
  }

  {
    // Degenerate pairing: real mass only on the diagonal makes the optimal
    // discriminator an exact indicator on the fake support.
    Rng rng(derive_seed(seed, 303));
    bool exact = true;
    const int n = 6;
    DiscreteJoint real(n, n), fake(n, n);
    std::vector<double> px(static_cast<std::size_t>(n));
    double s = 0.0;
    for (double& v : px) {
      v = 0.1 + rng.uniform();
      s += v;
    }
    for (double& v : px) v /= s;
    for (int x = 0; x < n; ++x) {
      real.at(x, x) = px[static_cast<std::size_t>(x)];
      double rs = 0.0;
      std::vector<double> row(static_cast<std::size_t>(n));
      for (int y = 0; y < n; ++y) {
        // Zero fake mass on the diagonal so the indicator is exact there too.
        row[static_cast<std::size_t>(y)] = (y == x) ? 0.0 : 0.1 + rng.uniform();
        rs += row[static_cast<std::size_t>(y)];
      }
      for (int y = 0; y < n; ++y)
        fake.at(x, y) = px[static_cast<std::size_t>(x)] *
                        row[static_cast<std::size_t>(y)] / rs;
    }
    const auto d = optimal_discriminator_table(real, fake);
    for (int x = 0; x < n && exact; ++x)
      for (int y = 0; y < n && exact; ++y)
        exact = d[static_cast<std::size_t>(x) * n + y] ==
                (x == y ? 1.0 : 0.0);
    report("point-mass pairing makes the optimum an exact indicator", exact, "");
  }

  {
    // JSD sanity: hand-computed value, symmetry, bounds.
    const std::vector<double> p{0.75, 0.25}, q{0.25, 0.75};
    double hand = 0.0;
    hand += 0.5 * (0.75 * std::log(0.75 / 0.5) + 0.25 * std::log(0.25 / 0.5));
    hand += 0.5 * (0.25 * std::log(0.25 / 0.5) + 0.75 * std::log(0.75 / 0.5));
    const double j = jsd_discrete(p, q);
    const bool ok = std::abs(j - hand) < 1e-15 &&
                    std::abs(j - jsd_discrete(q, p)) < 1e-15 && j >= 0.0 &&
                    j <= std::log(2.0) &&
                    jsd_discrete(p, p) == 0.0;
    report("JSD matches direct summation, symmetric, bounded by ln 2", ok,
           "value " + std::to_string(j));
  }

  return all;
}

}  // namespace pagan::oracle
