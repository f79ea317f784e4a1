#pragma once

#include <complex>
#include <cstddef>
#include <initializer_list>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "gandyn/extended_real.hpp"

namespace gandyn {

using Complex = std::complex<double>;
using Vector = std::vector<double>;
using ComplexVector = std::vector<Complex>;

namespace numlin {

/// Dense real matrix, row-major.
class DenseMatrix {
 public:
  DenseMatrix() = default;
  DenseMatrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  // Throws ValidationError unless entries.size() == rows * cols.
  DenseMatrix(std::size_t rows, std::size_t cols, std::vector<double> entries);

  static DenseMatrix identity(std::size_t n);
  static DenseMatrix diagonal(std::span<const double> diag);
  static DenseMatrix from_rows(std::initializer_list<std::initializer_list<double>> rows);
  // [[top_left, top_right], [bottom_left, bottom_right]]; block shapes must tile exactly.
  static DenseMatrix from_blocks(const DenseMatrix& top_left, const DenseMatrix& top_right,
                                 const DenseMatrix& bottom_left, const DenseMatrix& bottom_right);
  static DenseMatrix outer(std::span<const double> a, std::span<const double> b);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  bool is_square() const { return rows_ == cols_; }
  bool empty() const { return entries_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return entries_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return entries_[r * cols_ + c]; }

  std::span<const double> entries() const { return entries_; }
  std::span<const double> row(std::size_t r) const {
    return std::span<const double>(entries_).subspan(r * cols_, cols_);
  }

  DenseMatrix block(std::size_t row0, std::size_t col0, std::size_t nrows, std::size_t ncols) const;
  void set_block(std::size_t row0, std::size_t col0, const DenseMatrix& b);

  DenseMatrix transposed() const;
  double trace() const;
  double frobenius_norm() const;
  double norm_1() const;    // max column sum
  double norm_inf() const;  // max row sum
  // sqrt(|A|_1 |A|_inf), an upper bound on the spectral norm that is cheap and scale-aware.
  double spectral_norm_estimate() const;
  bool all_finite() const;
  bool is_symmetric(double tol) const;

  Vector apply(std::span<const double> x) const;
  ComplexVector apply(std::span<const Complex> x) const;

  DenseMatrix& operator+=(const DenseMatrix& o);
  DenseMatrix& operator-=(const DenseMatrix& o);
  DenseMatrix& operator*=(double s);

  friend DenseMatrix operator+(DenseMatrix a, const DenseMatrix& b) { return a += b; }
  friend DenseMatrix operator-(DenseMatrix a, const DenseMatrix& b) { return a -= b; }
  friend DenseMatrix operator*(DenseMatrix a, double s) { return a *= s; }
  friend DenseMatrix operator*(double s, DenseMatrix a) { return a *= s; }
  friend DenseMatrix operator*(const DenseMatrix& a, const DenseMatrix& b);
  friend bool operator==(const DenseMatrix& a, const DenseMatrix& b) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> entries_;
};

double dot(std::span<const double> a, std::span<const double> b);
double norm2(std::span<const double> a);
// y += alpha * x
void axpy(double alpha, std::span<const double> x, std::span<double> y);
bool all_finite(std::span<const double> x);

/// Eigenvalues of a real matrix, optionally with right eigenvectors.
struct Spectrum {
  ComplexVector eigenvalues;
  // Unit-norm right eigenvectors, one per eigenvalue, when requested.
  std::optional<std::vector<ComplexVector>> eigenvectors;
  // max ||A v - lambda v|| over computed pairs.
  std::optional<double> residual;
  // Spectral-norm estimate of the source matrix; drives the real/zero classification.
  double scale = 0.0;

  double tolerance() const { return 1e-9 * scale; }

  // Wraps a bare list of eigenvalues; the scale is taken as the spectral radius.
  static Spectrum from_values(ComplexVector values);
};

struct EigOptions {
  bool want_vectors = false;
  // Relative deflation threshold on Hessenberg subdiagonal entries.
  double subdiag_tol = 1e-12;
  // Total QR sweeps allowed, per unit of dimension.
  std::size_t iterations_per_dim = 100;
};

/// All eigenvalues of a square real matrix: balancing, Householder reduction to Hessenberg
/// form, then Francis double-shift QR with deflation. Complex eigenvalues come out in exact
/// conjugate pairs. Throws ValidationError on non-square or non-finite input, and
/// EigenConvergenceError when the iteration cap is reached.
Spectrum eig_real(const DenseMatrix& m, const EigOptions& options = {});

/// Symmetric eigendecomposition by cyclic Jacobi rotations. Eigenvalues ascending;
/// `vectors` holds the matching eigenvectors as columns.
struct SymmetricEigen {
  Vector values;
  DenseMatrix vectors;
};
SymmetricEigen eig_symmetric(const DenseMatrix& m);

/// Largest |Im/Re| over the genuinely complex eigenvalues; 0 for an all-real spectrum and
/// infinity when a complex eigenvalue sits on the imaginary axis.
ExtendedReal phase_ratio(const Spectrum& s);

/// max|lambda| / min|lambda|; infinity when some eigenvalue is (numerically) zero.
ExtendedReal condition_ratio(const Spectrum& s);

/// Greedy nearest-neighbour matching of two eigenvalue multisets of equal size. Returns the
/// largest |a_i - b_pi(i)| / max(|b_pi(i)|, floor).
double max_relative_mismatch(std::span<const Complex> a, std::span<const Complex> b,
                             double floor = 1e-300);

// Text format: a "rows cols" header, then one line per row of whitespace-separated decimals.
// Parsing is locale-independent; errors carry the 1-based line number.
DenseMatrix parse_matrix(std::string_view text);
DenseMatrix read_matrix_file(const std::string& path);
std::string format_matrix(const DenseMatrix& m);
void write_matrix_file(const std::string& path, const DenseMatrix& m);

// Shortest decimal that round-trips to the same double.
std::string format_double(double x);

}  // namespace numlin
}  // namespace gandyn
