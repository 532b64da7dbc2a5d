#pragma once

#include <cmath>
#include <cstdlib>
#include <stdexcept>
#include <vector>

namespace pagan {

// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
// `values[j]` pairs with the eigenvector stored down column j of `vectors`
// (row-major n x n), so A = V diag(values) V^T.
struct SymEig {
  int n = 0;
  std::vector<double> values;
  std::vector<double> vectors;
};

inline SymEig sym_eig(std::vector<double> a, int n) {
  if (n <= 0 || static_cast<std::size_t>(n) * n != a.size())
    throw std::invalid_argument("sym_eig: matrix must be square");
  std::vector<double> v(static_cast<std::size_t>(n) * n, 0.0);
  for (int i = 0; i < n; ++i) v[static_cast<std::size_t>(i) * n + i] = 1.0;

  auto at = [&](int i, int j) -> double& {
    return a[static_cast<std::size_t>(i) * n + j];
  };

  double fro = 0.0;
  for (double x : a) fro += x * x;
  fro = std::sqrt(fro);
  const double tol = 1e-14 * (1.0 + fro);

  const int max_sweeps = 100;
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    double off = 0.0;
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j) off += at(i, j) * at(i, j);
    if (std::sqrt(2.0 * off) < tol) break;

    for (int p = 0; p < n - 1; ++p) {
      for (int q = p + 1; q < n; ++q) {
        const double apq = at(p, q);
        if (std::abs(apq) < 1e-300) continue;
        const double theta = (at(q, q) - at(p, p)) / (2.0 * apq);
        const double t =
            (theta >= 0.0 ? 1.0 : -1.0) /
            (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;

        const double app = at(p, p), aqq = at(q, q);
        at(p, p) = c * c * app - 2.0 * s * c * apq + s * s * aqq;
        at(q, q) = s * s * app + 2.0 * s * c * apq + c * c * aqq;
        at(p, q) = 0.0;
        at(q, p) = 0.0;
        for (int i = 0; i < n; ++i) {
          if (i == p || i == q) continue;
          const double aip = at(i, p), aiq = at(i, q);
          at(i, p) = c * aip - s * aiq;
          at(p, i) = at(i, p);
          at(i, q) = s * aip + c * aiq;
          at(q, i) = at(i, q);
        }
        for (int i = 0; i < n; ++i) {
          double& vip = v[static_cast<std::size_t>(i) * n + p];
          double& viq = v[static_cast<std::size_t>(i) * n + q];
          const double tp = vip, tq = viq;
          vip = c * tp - s * tq;
          viq = s * tp + c * tq;
        }
      }
    }
  }

  SymEig e;
  e.n = n;
  e.values.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) e.values[static_cast<std::size_t>(i)] = at(i, i);
  e.vectors = std::move(v);
  return e;
}

// Largest singular value of an arbitrary m x n matrix, via the spectrum of
// A^T A (or A A^T, whichever is smaller).
inline double largest_singular_value(const std::vector<double>& a, int m, int n) {
  if (m <= 0 || n <= 0 || static_cast<std::size_t>(m) * n != a.size())
    throw std::invalid_argument("largest_singular_value: bad extents");
  const bool use_ata = n <= m;
  const int k = use_ata ? n : m;
  std::vector<double> gram(static_cast<std::size_t>(k) * k, 0.0);
  if (use_ata) {
    for (int i = 0; i < k; ++i)
      for (int j = i; j < k; ++j) {
        double acc = 0.0;
        for (int r = 0; r < m; ++r)
          acc += a[static_cast<std::size_t>(r) * n + i] *
                 a[static_cast<std::size_t>(r) * n + j];
        gram[static_cast<std::size_t>(i) * k + j] = acc;
        gram[static_cast<std::size_t>(j) * k + i] = acc;
      }
  } else {
    for (int i = 0; i < k; ++i)
      for (int j = i; j < k; ++j) {
        double acc = 0.0;
        for (int c = 0; c < n; ++c)
          acc += a[static_cast<std::size_t>(i) * n + c] *
                 a[static_cast<std::size_t>(j) * n + c];
        gram[static_cast<std::size_t>(i) * k + j] = acc;
        gram[static_cast<std::size_t>(j) * k + i] = acc;
      }
  }
  SymEig e = sym_eig(std::move(gram), k);
  double mx = 0.0;
  for (double l : e.values) mx = std::max(mx, l);
  return std::sqrt(std::max(mx, 0.0));
}

}  // namespace pagan
