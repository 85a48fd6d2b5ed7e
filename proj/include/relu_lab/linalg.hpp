#pragma once

// Dense real linear algebra for small dimensions: vectors, packed symmetric
// matrices, a cyclic-Jacobi symmetric eigensolver, and angle utilities.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace relu_lab {

using Vec = std::vector<double>;

inline bool all_finite(const Vec& v) {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

inline double dot(const Vec& a, const Vec& b) {
  if (a.size() != b.size()) throw std::invalid_argument("dot: size mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm(const Vec& a) { return std::sqrt(dot(a, a)); }

inline Vec scaled(const Vec& a, double c) {
  Vec r(a);
  for (double& x : r) x *= c;
  return r;
}

inline void add_scaled(Vec& y, double c, const Vec& x) {
  if (y.size() != x.size()) throw std::invalid_argument("add_scaled: size mismatch");
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += c * x[i];
}

inline Vec sub(const Vec& a, const Vec& b) {
  Vec r(a);
  add_scaled(r, -1.0, b);
  return r;
}

inline Vec normalized(const Vec& a) {
  const double n = norm(a);
  if (n == 0.0) throw std::domain_error("normalized: zero vector");
  return scaled(a, 1.0 / n);
}

inline double distance(const Vec& a, const Vec& b) { return norm(sub(a, b)); }

// Angle in [0, pi]; the cosine is clamped so rounding can't produce NaN at the ends.
inline double angle(const Vec& u, const Vec& v) {
  const double nu = norm(u), nv = norm(v);
  if (nu == 0.0 || nv == 0.0) throw std::domain_error("angle: zero-norm input");
  const double c = std::clamp(dot(u, v) / (nu * nv), -1.0, 1.0);
  return std::acos(c);
}

// Unit vector at angle phi from w_star in the plane spanned by w_star and u_perp.
inline Vec rotate_toward(const Vec& w_star, const Vec& u_perp, double phi) {
  if (phi < 0.0 || phi > M_PI) throw std::domain_error("rotate_toward: phi outside [0, pi]");
  const Vec ws = normalized(w_star);
  const Vec up = normalized(u_perp);
  if (std::abs(dot(ws, up)) >= 1e-10)
    throw std::domain_error("rotate_toward: u_perp not orthogonal to w_star");
  Vec r = scaled(ws, std::cos(phi));
  add_scaled(r, std::sin(phi), up);
  return r;
}

// Small dense matrix, row-major.
struct Mat {
  int rows = 0, cols = 0;
  std::vector<double> a;

  Mat() = default;
  Mat(int r, int c) : rows(r), cols(c), a(static_cast<std::size_t>(r) * c, 0.0) {}

  double& operator()(int i, int j) { return a[static_cast<std::size_t>(i) * cols + j]; }
  double operator()(int i, int j) const { return a[static_cast<std::size_t>(i) * cols + j]; }

  Vec col(int j) const {
    Vec v(rows);
    for (int i = 0; i < rows; ++i) v[i] = (*this)(i, j);
    return v;
  }

  Vec matvec(const Vec& x) const {
    if (static_cast<int>(x.size()) != cols) throw std::invalid_argument("matvec: size mismatch");
    Vec y(rows, 0.0);
    for (int i = 0; i < rows; ++i) {
      double s = 0.0;
      for (int j = 0; j < cols; ++j) s += (*this)(i, j) * x[j];
      y[i] = s;
    }
    return y;
  }

  Vec matvec_t(const Vec& x) const {  // y = M^T x
    if (static_cast<int>(x.size()) != rows) throw std::invalid_argument("matvec_t: size mismatch");
    Vec y(cols, 0.0);
    for (int i = 0; i < rows; ++i)
      for (int j = 0; j < cols; ++j) y[j] += (*this)(i, j) * x[i];
    return y;
  }

  // M += wgt * x y^T
  void rank1_update(const Vec& x, const Vec& y, double wgt) {
    for (int i = 0; i < rows; ++i) {
      const double xi = wgt * x[i];
      if (xi == 0.0) continue;
      double* row = &a[static_cast<std::size_t>(i) * cols];
      for (int j = 0; j < cols; ++j) row[j] += xi * y[j];
    }
  }

  void add(const Mat& o) {
    for (std::size_t i = 0; i < a.size(); ++i) a[i] += o.a[i];
  }
  void scale(double c) {
    for (double& x : a) x *= c;
  }
  double frobenius() const {
    double s = 0.0;
    for (double x : a) s += x * x;
    return std::sqrt(s);
  }
};

// Symmetric matrix, packed upper triangle (row-wise).
struct SymMatrix {
  int n = 0;
  std::vector<double> a;  // size n(n+1)/2

  SymMatrix() = default;
  explicit SymMatrix(int dim)
      : n(dim), a(static_cast<std::size_t>(dim) * (dim + 1) / 2, 0.0) {}

  static std::size_t packed_index(int n, int i, int j) {
    if (i > j) std::swap(i, j);
    return static_cast<std::size_t>(i) * n - static_cast<std::size_t>(i) * (i - 1) / 2 +
           (j - i);
  }

  double& at(int i, int j) { return a[packed_index(n, i, j)]; }
  double get(int i, int j) const { return a[packed_index(n, i, j)]; }

  // A += wgt * x x^T
  void rank1_update(const Vec& x, double wgt) {
    std::size_t idx = 0;
    for (int i = 0; i < n; ++i) {
      const double xi = wgt * x[i];
      for (int j = i; j < n; ++j) a[idx++] += xi * x[j];
    }
  }

  Vec matvec(const Vec& x) const {
    if (static_cast<int>(x.size()) != n) throw std::invalid_argument("symv: size mismatch");
    Vec y(n, 0.0);
    for (int i = 0; i < n; ++i) {
      double s = 0.0;
      for (int j = 0; j < n; ++j) s += get(i, j) * x[j];
      y[i] = s;
    }
    return y;
  }

  double quad_form(const Vec& x, const Vec& y) const {  // x^T A y
    return dot(x, matvec(y));
  }

  void add(const SymMatrix& o) {
    for (std::size_t i = 0; i < a.size(); ++i) a[i] += o.a[i];
  }
  void scale(double c) {
    for (double& x : a) x *= c;
  }

  double frobenius() const {
    double s = 0.0;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        const double v = get(i, j);
        s += v * v;
      }
    return std::sqrt(s);
  }

  Mat dense() const {
    Mat m(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) m(i, j) = get(i, j);
    return m;
  }
};

struct EigenResult {
  Vec eigenvalues;   // descending
  Mat eigenvectors;  // column i pairs with eigenvalues[i]
};

// Cyclic Jacobi diagonalization; tolerance 1e-12 on the off-diagonal norm,
// capped at 100 sweeps. Plenty for the dimensions this project uses.
inline EigenResult eig_sym(const SymMatrix& m) {
  const int n = m.n;
  if (n <= 0) throw std::domain_error("eig_sym: empty matrix");
  for (double x : m.a)
    if (!std::isfinite(x)) throw std::domain_error("eig_sym: non-finite entry");

  Mat A = m.dense();
  Mat V(n, n);
  for (int i = 0; i < n; ++i) V(i, i) = 1.0;

  const double scale = std::max(1.0, A.frobenius());
  const double tol = 1e-12 * scale;

  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j) off += 2.0 * A(i, j) * A(i, j);
    if (std::sqrt(off) <= tol) break;

    for (int p = 0; p < n - 1; ++p) {
      for (int q = p + 1; q < n; ++q) {
        const double apq = A(p, q);
        if (std::abs(apq) <= tol / (n * n)) continue;
        const double theta = (A(q, q) - A(p, p)) / (2.0 * apq);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(1.0 + theta * theta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = t * c;
        const double tau = s / (1.0 + c);

        const double app = A(p, p), aqq = A(q, q);
        A(p, p) = app - t * apq;
        A(q, q) = aqq + t * apq;
        A(p, q) = A(q, p) = 0.0;
        for (int i = 0; i < n; ++i) {
          if (i != p && i != q) {
            const double aip = A(i, p), aiq = A(i, q);
            A(i, p) = A(p, i) = aip - s * (aiq + tau * aip);
            A(i, q) = A(q, i) = aiq + s * (aip - tau * aiq);
          }
          const double vip = V(i, p), viq = V(i, q);
          V(i, p) = vip - s * (viq + tau * vip);
          V(i, q) = viq + s * (vip - tau * viq);
        }
      }
    }
  }

  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](int i, int j) { return A(i, i) > A(j, j); });

  EigenResult r;
  r.eigenvalues.resize(n);
  r.eigenvectors = Mat(n, n);
  for (int k = 0; k < n; ++k) {
    r.eigenvalues[k] = A(order[k], order[k]);
    for (int i = 0; i < n; ++i) r.eigenvectors(i, k) = V(i, order[k]);
  }
  return r;
}

inline double lambda_max(const SymMatrix& m) { return eig_sym(m).eigenvalues.front(); }
inline double lambda_min(const SymMatrix& m) { return eig_sym(m).eigenvalues.back(); }

// Operator (spectral) norm via the symmetric eigensolver on M^T M.
inline double op_norm(const Mat& m) {
  if (m.rows == 0 || m.cols == 0) return 0.0;
  SymMatrix g(m.cols);
  for (int i = 0; i < m.cols; ++i)
    for (int j = i; j < m.cols; ++j) {
      double s = 0.0;
      for (int r = 0; r < m.rows; ++r) s += m(r, i) * m(r, j);
      g.at(i, j) = s;
    }
  return std::sqrt(std::max(0.0, lambda_max(g)));
}

}  // namespace relu_lab
