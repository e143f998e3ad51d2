#pragma once

// Brute-force numerical references used by the test and acceptance suites.
// Deliberately independent of the library implementation (no Eigen): a
// cyclic Jacobi rotation eigensolver for symmetric matrices and helpers
// built on it.

#include <algorithm>
#include <cmath>
#include <vector>

namespace oracle {

// Cyclic Jacobi for a dense symmetric matrix. Eigenvalues descend;
// eigenvectors come back as columns of v (row-major n x n).
inline void jacobi_eigen(std::vector<double> a, int n,
                         std::vector<double>& eigenvalues,
                         std::vector<double>& eigenvectors) {
  std::vector<double> v(static_cast<size_t>(n) * n, 0.0);
  for (int i = 0; i < n; ++i) v[static_cast<size_t>(i) * n + i] = 1.0;
  auto at = [&](std::vector<double>& m, int r, int c) -> double& {
    return m[static_cast<size_t>(r) * n + c];
  };
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (int p = 0; p < n; ++p)
      for (int q = p + 1; q < n; ++q) off += at(a, p, q) * at(a, p, q);
    if (off < 1e-24) break;
    for (int p = 0; p < n; ++p) {
      for (int q = p + 1; q < n; ++q) {
        double apq = at(a, p, q);
        if (std::abs(apq) < 1e-30) continue;
        double theta = (at(a, q, q) - at(a, p, p)) / (2.0 * apq);
        double t = (theta >= 0 ? 1.0 : -1.0) /
                   (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        double c = 1.0 / std::sqrt(t * t + 1.0);
        double s = t * c;
        for (int i = 0; i < n; ++i) {
          double aip = at(a, i, p), aiq = at(a, i, q);
          at(a, i, p) = c * aip - s * aiq;
          at(a, i, q) = s * aip + c * aiq;
        }
        for (int i = 0; i < n; ++i) {
          double api = at(a, p, i), aqi = at(a, q, i);
          at(a, p, i) = c * api - s * aqi;
          at(a, q, i) = s * api + c * aqi;
        }
        for (int i = 0; i < n; ++i) {
          double vip = at(v, i, p), viq = at(v, i, q);
          at(v, i, p) = c * vip - s * viq;
          at(v, i, q) = s * vip + c * viq;
        }
      }
    }
  }
  std::vector<int> order(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) order[static_cast<size_t>(i)] = i;
  std::sort(order.begin(), order.end(), [&](int x, int y) {
    return a[static_cast<size_t>(x) * n + x] > a[static_cast<size_t>(y) * n + y];
  });
  eigenvalues.assign(static_cast<size_t>(n), 0.0);
  eigenvectors.assign(static_cast<size_t>(n) * n, 0.0);
  for (int k = 0; k < n; ++k) {
    int src = order[static_cast<size_t>(k)];
    eigenvalues[static_cast<size_t>(k)] =
        a[static_cast<size_t>(src) * n + src];
    for (int i = 0; i < n; ++i)
      eigenvectors[static_cast<size_t>(i) * n + k] =
          v[static_cast<size_t>(i) * n + src];
  }
}

// Sample covariance (divisor rows-1) of row-major data.
inline std::vector<double> covariance(const std::vector<float>& data, int n) {
  size_t rows = data.size() / static_cast<size_t>(n);
  std::vector<double> mean(static_cast<size_t>(n), 0.0);
  for (size_t r = 0; r < rows; ++r)
    for (int c = 0; c < n; ++c)
      mean[static_cast<size_t>(c)] += data[r * static_cast<size_t>(n) + c];
  for (auto& m : mean) m /= static_cast<double>(rows);
  std::vector<double> cov(static_cast<size_t>(n) * n, 0.0);
  for (size_t r = 0; r < rows; ++r)
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        cov[static_cast<size_t>(i) * n + j] +=
            (data[r * static_cast<size_t>(n) + i] - mean[static_cast<size_t>(i)]) *
            (data[r * static_cast<size_t>(n) + j] - mean[static_cast<size_t>(j)]);
  for (auto& c : cov) c /= static_cast<double>(rows - 1);
  return cov;
}

// Singular values of a k x k matrix via jacobi on M^T M.
inline std::vector<double> singular_values(const std::vector<double>& m, int k) {
  std::vector<double> mtm(static_cast<size_t>(k) * k, 0.0);
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < k; ++j) {
      double s = 0.0;
      for (int r = 0; r < k; ++r)
        s += m[static_cast<size_t>(r) * k + i] * m[static_cast<size_t>(r) * k + j];
      mtm[static_cast<size_t>(i) * k + j] = s;
    }
  std::vector<double> evals, evecs;
  jacobi_eigen(mtm, k, evals, evecs);
  std::vector<double> sv;
  for (double e : evals) sv.push_back(std::sqrt(std::max(0.0, e)));
  return sv;
}

}  // namespace oracle
