#include "gandyn/numlin.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "gandyn/errors.hpp"

namespace gandyn::numlin {

DenseMatrix::DenseMatrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), entries_(rows * cols, fill) {}

DenseMatrix::DenseMatrix(std::size_t rows, std::size_t cols, std::vector<double> entries)
    : rows_(rows), cols_(cols), entries_(std::move(entries)) {
  if (entries_.size() != rows * cols) {
    throw ValidationError("matrix entry count " + std::to_string(entries_.size()) +
                          " does not match " + std::to_string(rows) + "x" + std::to_string(cols));
  }
}

DenseMatrix DenseMatrix::identity(std::size_t n) {
  DenseMatrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

DenseMatrix DenseMatrix::diagonal(std::span<const double> diag) {
  DenseMatrix m(diag.size(), diag.size());
  for (std::size_t i = 0; i < diag.size(); ++i) m(i, i) = diag[i];
  return m;
}

DenseMatrix DenseMatrix::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r == 0 ? 0 : rows.begin()->size();
  std::vector<double> entries;
  entries.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw ValidationError("ragged row list");
    entries.insert(entries.end(), row.begin(), row.end());
  }
  return DenseMatrix(r, c, std::move(entries));
}

DenseMatrix DenseMatrix::from_blocks(const DenseMatrix& tl, const DenseMatrix& tr,
                                     const DenseMatrix& bl, const DenseMatrix& br) {
  if (tl.rows() != tr.rows() || bl.rows() != br.rows() || tl.cols() != bl.cols() ||
      tr.cols() != br.cols()) {
    throw ValidationError("block shapes do not tile");
  }
  DenseMatrix m(tl.rows() + bl.rows(), tl.cols() + tr.cols());
  m.set_block(0, 0, tl);
  m.set_block(0, tl.cols(), tr);
  m.set_block(tl.rows(), 0, bl);
  m.set_block(tl.rows(), tl.cols(), br);
  return m;
}

DenseMatrix DenseMatrix::outer(std::span<const double> a, std::span<const double> b) {
  DenseMatrix m(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < b.size(); ++j) m(i, j) = a[i] * b[j];
  return m;
}

DenseMatrix DenseMatrix::block(std::size_t row0, std::size_t col0, std::size_t nrows,
                               std::size_t ncols) const {
  if (row0 + nrows > rows_ || col0 + ncols > cols_) throw ValidationError("block out of range");
  DenseMatrix b(nrows, ncols);
  for (std::size_t i = 0; i < nrows; ++i)
    for (std::size_t j = 0; j < ncols; ++j) b(i, j) = (*this)(row0 + i, col0 + j);
  return b;
}

void DenseMatrix::set_block(std::size_t row0, std::size_t col0, const DenseMatrix& b) {
  if (row0 + b.rows() > rows_ || col0 + b.cols() > cols_) {
    throw ValidationError("block out of range");
  }
  for (std::size_t i = 0; i < b.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) (*this)(row0 + i, col0 + j) = b(i, j);
}

DenseMatrix DenseMatrix::transposed() const {
  DenseMatrix t(cols_, rows_);
  for (std::size_t i = 0; i < rows_; ++i)
    for (std::size_t j = 0; j < cols_; ++j) t(j, i) = (*this)(i, j);
  return t;
}

double DenseMatrix::trace() const {
  double s = 0.0;
  for (std::size_t i = 0; i < std::min(rows_, cols_); ++i) s += (*this)(i, i);
  return s;
}

double DenseMatrix::frobenius_norm() const { return norm2(entries_); }

double DenseMatrix::norm_1() const {
  double best = 0.0;
  for (std::size_t j = 0; j < cols_; ++j) {
    double s = 0.0;
    for (std::size_t i = 0; i < rows_; ++i) s += std::abs((*this)(i, j));
    best = std::max(best, s);
  }
  return best;
}

double DenseMatrix::norm_inf() const {
  double best = 0.0;
  for (std::size_t i = 0; i < rows_; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < cols_; ++j) s += std::abs((*this)(i, j));
    best = std::max(best, s);
  }
  return best;
}

double DenseMatrix::spectral_norm_estimate() const { return std::sqrt(norm_1() * norm_inf()); }

bool DenseMatrix::all_finite() const { return numlin::all_finite(entries_); }

bool DenseMatrix::is_symmetric(double tol) const {
  if (!is_square()) return false;
  for (std::size_t i = 0; i < rows_; ++i)
    for (std::size_t j = i + 1; j < cols_; ++j)
      if (std::abs((*this)(i, j) - (*this)(j, i)) > tol) return false;
  return true;
}

Vector DenseMatrix::apply(std::span<const double> x) const {
  if (x.size() != cols_) throw ValidationError("matrix-vector size mismatch");
  Vector y(rows_, 0.0);
  for (std::size_t i = 0; i < rows_; ++i) y[i] = dot(row(i), x);
  return y;
}

ComplexVector DenseMatrix::apply(std::span<const Complex> x) const {
  if (x.size() != cols_) throw ValidationError("matrix-vector size mismatch");
  ComplexVector y(rows_);
  for (std::size_t i = 0; i < rows_; ++i) {
    Complex s = 0.0;
    for (std::size_t j = 0; j < cols_; ++j) s += (*this)(i, j) * x[j];
    y[i] = s;
  }
  return y;
}

DenseMatrix& DenseMatrix::operator+=(const DenseMatrix& o) {
  if (rows_ != o.rows_ || cols_ != o.cols_) throw ValidationError("matrix sum shape mismatch");
  for (std::size_t k = 0; k < entries_.size(); ++k) entries_[k] += o.entries_[k];
  return *this;
}

DenseMatrix& DenseMatrix::operator-=(const DenseMatrix& o) {
  if (rows_ != o.rows_ || cols_ != o.cols_) throw ValidationError("matrix sum shape mismatch");
  for (std::size_t k = 0; k < entries_.size(); ++k) entries_[k] -= o.entries_[k];
  return *this;
}

DenseMatrix& DenseMatrix::operator*=(double s) {
  for (double& e : entries_) e *= s;
  return *this;
}

DenseMatrix operator*(const DenseMatrix& a, const DenseMatrix& b) {
  if (a.cols() != b.rows()) throw ValidationError("matrix product shape mismatch");
  DenseMatrix c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      for (std::size_t j = 0; j < b.cols(); ++j) c(i, j) += aik * b(k, j);
    }
  return c;
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

bool all_finite(std::span<const double> x) {
  return std::all_of(x.begin(), x.end(), [](double v) { return std::isfinite(v); });
}

Spectrum Spectrum::from_values(ComplexVector values) {
  Spectrum s;
  for (const Complex& v : values) s.scale = std::max(s.scale, std::abs(v));
  s.eigenvalues = std::move(values);
  return s;
}

namespace {

constexpr double kEps = std::numeric_limits<double>::epsilon();

// Diagonal similarity scaling by powers of two so rows and columns have comparable norms.
void balance(DenseMatrix& a) {
  const std::size_t n = a.rows();
  constexpr double radix = 2.0;
  constexpr double sqrdx = radix * radix;
  bool done = false;
  while (!done) {
    done = true;
    for (std::size_t i = 0; i < n; ++i) {
      double r = 0.0;
      double c = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        if (j != i) {
          c += std::abs(a(j, i));
          r += std::abs(a(i, j));
        }
      }
      if (c == 0.0 || r == 0.0) continue;
      double g = r / radix;
      double f = 1.0;
      const double s = c + r;
      while (c < g) {
        f *= radix;
        c *= sqrdx;
      }
      g = r * radix;
      while (c > g) {
        f /= radix;
        c /= sqrdx;
      }
      if ((c + r) / f < 0.95 * s) {
        done = false;
        g = 1.0 / f;
        for (std::size_t j = 0; j < n; ++j) a(i, j) *= g;
        for (std::size_t j = 0; j < n; ++j) a(j, i) *= f;
      }
    }
  }
}

// Householder reduction to upper Hessenberg form, in place.
void reduce_to_hessenberg(DenseMatrix& a) {
  const std::size_t n = a.rows();
  if (n < 3) return;
  std::vector<double> v(n);
  for (std::size_t k = 0; k + 2 < n; ++k) {
    double alpha = 0.0;
    for (std::size_t i = k + 1; i < n; ++i) alpha += a(i, k) * a(i, k);
    alpha = std::sqrt(alpha);
    if (alpha == 0.0) continue;
    if (a(k + 1, k) > 0.0) alpha = -alpha;
    std::fill(v.begin(), v.end(), 0.0);
    v[k + 1] = a(k + 1, k) - alpha;
    for (std::size_t i = k + 2; i < n; ++i) v[i] = a(i, k);
    double vnorm2 = 0.0;
    for (std::size_t i = k + 1; i < n; ++i) vnorm2 += v[i] * v[i];
    if (vnorm2 == 0.0) continue;
    // A <- H A H with H = I - 2 v v^T / (v^T v)
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t i = k + 1; i < n; ++i) s += v[i] * a(i, j);
      s *= 2.0 / vnorm2;
      for (std::size_t i = k + 1; i < n; ++i) a(i, j) -= s * v[i];
    }
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0.0;
      for (std::size_t j = k + 1; j < n; ++j) s += a(i, j) * v[j];
      s *= 2.0 / vnorm2;
      for (std::size_t j = k + 1; j < n; ++j) a(i, j) -= s * v[j];
    }
    a(k + 1, k) = alpha;
    for (std::size_t i = k + 2; i < n; ++i) a(i, k) = 0.0;
  }
}

double sign_of(double magnitude, double sign_source) {
  return sign_source >= 0.0 ? std::abs(magnitude) : -std::abs(magnitude);
}

// Francis double-shift QR on an upper Hessenberg matrix (EISPACK hqr), destroying `a`.
ComplexVector hessenberg_qr(DenseMatrix& a, const EigOptions& options) {
  const int n = static_cast<int>(a.rows());
  ComplexVector w(a.rows());
  double anorm = 0.0;
  for (int i = 0; i < n; ++i)
    for (int j = std::max(i - 1, 0); j < n; ++j) anorm += std::abs(a(i, j));

  const std::size_t cap = options.iterations_per_dim * a.rows();
  std::size_t total_iterations = 0;
  int nn = n - 1;
  double t = 0.0;
  double p = 0.0, q = 0.0, r = 0.0, s = 0.0, x = 0.0, y = 0.0, z = 0.0;
  while (nn >= 0) {
    int its = 0;
    int l = 0;
    do {
      for (l = nn; l > 0; --l) {
        s = std::abs(a(l - 1, l - 1)) + std::abs(a(l, l));
        if (s == 0.0) s = anorm;
        if (std::abs(a(l, l - 1)) <= options.subdiag_tol * s) {
          a(l, l - 1) = 0.0;
          break;
        }
      }
      x = a(nn, nn);
      if (l == nn) {
        w[nn--] = x + t;
      } else {
        y = a(nn - 1, nn - 1);
        const double ww = a(nn, nn - 1) * a(nn - 1, nn);
        if (l == nn - 1) {
          p = 0.5 * (y - x);
          q = p * p + ww;
          z = std::sqrt(std::abs(q));
          x += t;
          if (q >= 0.0) {
            z = p + sign_of(z, p);
            w[nn - 1] = w[nn] = x + z;
            if (z != 0.0) w[nn] = x - ww / z;
          } else {
            w[nn] = Complex(x + p, -z);
            w[nn - 1] = std::conj(w[nn]);
          }
          nn -= 2;
        } else {
          if (++total_iterations > cap) {
            throw EigenConvergenceError(
                "QR iteration cap of " + std::to_string(cap) + " sweeps reached with " +
                    std::to_string(n - 1 - nn) + " of " + std::to_string(n) +
                    " eigenvalues converged",
                static_cast<std::size_t>(n - 1 - nn), static_cast<std::size_t>(n));
          }
          double wshift = ww;
          if (its > 0 && its % 10 == 0) {
            // Exceptional shift to break cycles.
            t += x;
            for (int i = 0; i <= nn; ++i) a(i, i) -= x;
            s = std::abs(a(nn, nn - 1)) + std::abs(a(nn - 1, nn - 2));
            y = x = 0.75 * s;
            wshift = -0.4375 * s * s;
          }
          ++its;
          int m = nn - 2;
          for (; m >= l; --m) {
            z = a(m, m);
            r = x - z;
            s = y - z;
            p = (r * s - wshift) / a(m + 1, m) + a(m, m + 1);
            q = a(m + 1, m + 1) - z - r - s;
            r = a(m + 2, m + 1);
            s = std::abs(p) + std::abs(q) + std::abs(r);
            p /= s;
            q /= s;
            r /= s;
            if (m == l) break;
            const double u = std::abs(a(m, m - 1)) * (std::abs(q) + std::abs(r));
            const double v =
                std::abs(p) * (std::abs(a(m - 1, m - 1)) + std::abs(z) + std::abs(a(m + 1, m + 1)));
            if (u <= kEps * v) break;
          }
          for (int i = m; i < nn - 1; ++i) {
            a(i + 2, i) = 0.0;
            if (i != m) a(i + 2, i - 1) = 0.0;
          }
          for (int k = m; k < nn; ++k) {
            if (k != m) {
              p = a(k, k - 1);
              q = a(k + 1, k - 1);
              r = 0.0;
              if (k + 1 != nn) r = a(k + 2, k - 1);
              if ((x = std::abs(p) + std::abs(q) + std::abs(r)) != 0.0) {
                p /= x;
                q /= x;
                r /= x;
              }
            }
            if ((s = sign_of(std::sqrt(p * p + q * q + r * r), p)) != 0.0) {
              if (k == m) {
                if (l != m) a(k, k - 1) = -a(k, k - 1);
              } else {
                a(k, k - 1) = -s * x;
              }
              p += s;
              x = p / s;
              y = q / s;
              z = r / s;
              q /= p;
              r /= p;
              for (int j = k; j <= nn; ++j) {
                p = a(k, j) + q * a(k + 1, j);
                if (k + 1 != nn) {
                  p += r * a(k + 2, j);
                  a(k + 2, j) -= p * z;
                }
                a(k + 1, j) -= p * y;
                a(k, j) -= p * x;
              }
              const int mmin = nn < k + 3 ? nn : k + 3;
              for (int i = l; i <= mmin; ++i) {
                p = x * a(i, k) + y * a(i, k + 1);
                if (k + 1 != nn) {
                  p += z * a(i, k + 2);
                  a(i, k + 2) -= p * r;
                }
                a(i, k + 1) -= p * q;
                a(i, k) -= p;
              }
            }
          }
        }
      }
    } while (l + 1 < nn);
  }
  return w;
}

// Pairs each complex eigenvalue with its nearest conjugate partner and symmetrizes the pair.
void enforce_conjugate_pairs(ComplexVector& w, double tol) {
  std::vector<bool> used(w.size(), false);
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (used[i] || std::abs(w[i].imag()) <= tol) continue;
    std::size_t best = w.size();
    double best_dist = HUGE_VAL;
    for (std::size_t j = 0; j < w.size(); ++j) {
      if (j == i || used[j]) continue;
      const double d = std::abs(w[j] - std::conj(w[i]));
      if (d < best_dist) {
        best_dist = d;
        best = j;
      }
    }
    if (best == w.size()) continue;
    used[i] = used[best] = true;
    const double re = 0.5 * (w[i].real() + w[best].real());
    const double im = 0.5 * (std::abs(w[i].imag()) + std::abs(w[best].imag()));
    const double sign = w[i].imag() >= 0.0 ? 1.0 : -1.0;
    w[i] = Complex(re, sign * im);
    w[best] = Complex(re, -sign * im);
  }
}

// LU with partial pivoting on a complex square system, solving in place.
void complex_solve(std::vector<Complex>& a, std::size_t n, ComplexVector& b, double pivot_floor) {
  std::vector<std::size_t> perm(n);
  for (std::size_t i = 0; i < n; ++i) perm[i] = i;
  for (std::size_t k = 0; k < n; ++k) {
    std::size_t piv = k;
    double best = std::abs(a[k * n + k]);
    for (std::size_t i = k + 1; i < n; ++i) {
      if (std::abs(a[i * n + k]) > best) {
        best = std::abs(a[i * n + k]);
        piv = i;
      }
    }
    if (piv != k) {
      for (std::size_t j = 0; j < n; ++j) std::swap(a[k * n + j], a[piv * n + j]);
      std::swap(b[k], b[piv]);
    }
    if (std::abs(a[k * n + k]) < pivot_floor) a[k * n + k] = pivot_floor;
    for (std::size_t i = k + 1; i < n; ++i) {
      const Complex f = a[i * n + k] / a[k * n + k];
      if (f == 0.0) continue;
      for (std::size_t j = k; j < n; ++j) a[i * n + j] -= f * a[k * n + j];
      b[i] -= f * b[k];
    }
  }
  for (std::size_t ii = n; ii-- > 0;) {
    Complex s = b[ii];
    for (std::size_t j = ii + 1; j < n; ++j) s -= a[ii * n + j] * b[j];
    b[ii] = s / a[ii * n + ii];
  }
}

void normalize(ComplexVector& v) {
  double s = 0.0;
  for (const Complex& c : v) s += std::norm(c);
  s = std::sqrt(s);
  if (s == 0.0) return;
  // Fix the phase so the largest component is real and positive.
  std::size_t big = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (std::abs(v[i]) > std::abs(v[big])) big = i;
  const Complex phase = std::abs(v[big]) > 0.0 ? std::conj(v[big]) / std::abs(v[big]) : 1.0;
  for (Complex& c : v) c *= phase / s;
}

// Inverse iteration with a slightly perturbed shift.
ComplexVector inverse_iteration(const DenseMatrix& m, Complex lambda, double scale) {
  const std::size_t n = m.rows();
  const double delta = std::max(scale, 1.0) * 1e-10;
  const Complex shift = lambda + Complex(delta, delta * 0.5);
  ComplexVector v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = Complex(1.0, 1.0 / (2.0 + static_cast<double>(i)));
  normalize(v);
  std::vector<Complex> work(n * n);
  for (int iter = 0; iter < 3; ++iter) {
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) work[i * n + j] = m(i, j) - (i == j ? shift : 0.0);
    complex_solve(work, n, v, kEps * std::max(scale, 1e-300));
    normalize(v);
  }
  return v;
}

}  // namespace

Spectrum eig_real(const DenseMatrix& m, const EigOptions& options) {
  if (!m.is_square()) {
    throw ValidationError("eig_real needs a square matrix, got " + std::to_string(m.rows()) + "x" +
                          std::to_string(m.cols()));
  }
  if (m.rows() == 0) throw ValidationError("eig_real needs dimension >= 1");
  if (!m.all_finite()) throw ValidationError("eig_real input has non-finite entries");

  Spectrum out;
  out.scale = m.spectral_norm_estimate();
  DenseMatrix h = m;
  balance(h);
  reduce_to_hessenberg(h);
  out.eigenvalues = hessenberg_qr(h, options);
  enforce_conjugate_pairs(out.eigenvalues, out.tolerance());

  if (options.want_vectors) {
    std::vector<ComplexVector> vecs;
    vecs.reserve(out.eigenvalues.size());
    double residual = 0.0;
    for (const Complex& lambda : out.eigenvalues) {
      ComplexVector v = inverse_iteration(m, lambda, out.scale);
      ComplexVector av = m.apply(std::span<const Complex>(v));
      double r = 0.0;
      for (std::size_t i = 0; i < v.size(); ++i) r += std::norm(av[i] - lambda * v[i]);
      residual = std::max(residual, std::sqrt(r));
      vecs.push_back(std::move(v));
    }
    out.eigenvectors = std::move(vecs);
    out.residual = residual;
  }
  return out;
}

SymmetricEigen eig_symmetric(const DenseMatrix& m) {
  if (!m.is_square()) throw ValidationError("eig_symmetric needs a square matrix");
  if (!m.all_finite()) throw ValidationError("eig_symmetric input has non-finite entries");
  const std::size_t n = m.rows();
  DenseMatrix a = m;
  // Symmetrize so small asymmetries in the input cannot bias the rotations.
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) a(i, j) = a(j, i) = 0.5 * (a(i, j) + a(j, i));
  DenseMatrix v = DenseMatrix::identity(n);
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) off += a(i, j) * a(i, j);
    if (off <= 1e-32 * std::max(1.0, a.frobenius_norm() * a.frobenius_norm())) break;
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        if (a(p, q) == 0.0) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * a(p, q));
        const double t = (theta >= 0.0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a(k, p);
          const double akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a(p, k);
          const double aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = v(k, p);
          const double vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return a(i, i) < a(j, j); });
  SymmetricEigen out{Vector(n), DenseMatrix(n, n)};
  for (std::size_t k = 0; k < n; ++k) {
    out.values[k] = a(order[k], order[k]);
    for (std::size_t i = 0; i < n; ++i) out.vectors(i, k) = v(i, order[k]);
  }
  return out;
}

ExtendedReal phase_ratio(const Spectrum& s) {
  const double tol = s.tolerance();
  double best = 0.0;
  for (const Complex& l : s.eigenvalues) {
    if (std::abs(l.imag()) <= tol) continue;
    if (std::abs(l.real()) <= tol) return ExtendedReal::infinity();
    best = std::max(best, std::abs(l.imag() / l.real()));
  }
  return ExtendedReal(best);
}

ExtendedReal condition_ratio(const Spectrum& s) {
  const double tol = s.tolerance();
  double lo = HUGE_VAL;
  double hi = 0.0;
  for (const Complex& l : s.eigenvalues) {
    lo = std::min(lo, std::abs(l));
    hi = std::max(hi, std::abs(l));
  }
  if (lo <= tol) return ExtendedReal::infinity();
  return ExtendedReal(hi / lo);
}

double max_relative_mismatch(std::span<const Complex> a, std::span<const Complex> b, double floor) {
  if (a.size() != b.size()) throw ValidationError("eigenvalue multisets differ in size");
  std::vector<bool> used(b.size(), false);
  double worst = 0.0;
  for (const Complex& x : a) {
    std::size_t best = b.size();
    double best_dist = HUGE_VAL;
    for (std::size_t j = 0; j < b.size(); ++j) {
      if (used[j]) continue;
      const double d = std::abs(x - b[j]);
      if (d < best_dist) {
        best_dist = d;
        best = j;
      }
    }
    used[best] = true;
    worst = std::max(worst, best_dist / std::max(std::abs(b[best]), floor));
  }
  return worst;
}

namespace {

std::string_view trim(std::string_view s) {
  const auto is_space = [](char c) { return c == ' ' || c == '\t' || c == '\r'; };
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
    std::size_t j = i;
    while (j < line.size() && line[j] != ' ' && line[j] != '\t') ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

template <typename T>
T parse_token(std::string_view tok, std::size_t line_no) {
  T value{};
  const char* first = tok.data();
  const char* last = tok.data() + tok.size();
  if (!tok.empty() && tok.front() == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last) {
    throw ValidationError("line " + std::to_string(line_no) + ": cannot parse '" +
                          std::string(tok) + "'");
  }
  return value;
}

}  // namespace

DenseMatrix parse_matrix(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start <= text.size()) {
    const std::size_t end = text.find('\n', start);
    const std::size_t stop = end == std::string_view::npos ? text.size() : end;
    lines.push_back(trim(text.substr(start, stop - start)));
    if (end == std::string_view::npos) break;
    start = end + 1;
  }
  std::size_t li = 0;
  while (li < lines.size() && lines[li].empty()) ++li;
  if (li == lines.size()) throw ValidationError("line 1: missing 'rows cols' header");
  const auto header = split_ws(lines[li]);
  if (header.size() != 2) {
    throw ValidationError("line " + std::to_string(li + 1) + ": header must be 'rows cols'");
  }
  const auto rows = parse_token<std::size_t>(header[0], li + 1);
  const auto cols = parse_token<std::size_t>(header[1], li + 1);
  std::vector<double> entries;
  entries.reserve(rows * cols);
  std::size_t r = 0;
  for (++li; li < lines.size() && r < rows; ++li) {
    if (lines[li].empty()) continue;
    const auto toks = split_ws(lines[li]);
    if (toks.size() != cols) {
      throw ValidationError("line " + std::to_string(li + 1) + ": expected " + std::to_string(cols) +
                            " values, found " + std::to_string(toks.size()));
    }
    for (const auto tok : toks) {
      const double v = parse_token<double>(tok, li + 1);
      if (!std::isfinite(v)) {
        throw ValidationError("line " + std::to_string(li + 1) + ": non-finite value");
      }
      entries.push_back(v);
    }
    ++r;
  }
  if (r != rows) {
    throw ValidationError("line " + std::to_string(li + 1) + ": expected " + std::to_string(rows) +
                          " rows, found " + std::to_string(r));
  }
  for (; li < lines.size(); ++li) {
    if (!lines[li].empty()) {
      throw ValidationError("line " + std::to_string(li + 1) + ": trailing data after matrix");
    }
  }
  return DenseMatrix(rows, cols, std::move(entries));
}

DenseMatrix read_matrix_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open matrix file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return parse_matrix(ss.str());
  } catch (const ValidationError& e) {
    throw ValidationError(path + ": " + e.what());
  }
}

std::string format_double(double x) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, ptr);
}

std::string format_matrix(const DenseMatrix& m) {
  std::string out = std::to_string(m.rows()) + " " + std::to_string(m.cols()) + "\n";
  for (std::size_t i = 0; i < m.rows(); ++i) {
    for (std::size_t j = 0; j < m.cols(); ++j) {
      if (j) out += ' ';
      out += format_double(m(i, j));
    }
    out += '\n';
  }
  return out;
}

void write_matrix_file(const std::string& path, const DenseMatrix& m) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write matrix file '" + path + "'");
  out << format_matrix(m);
}

}  // namespace gandyn::numlin
