#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Core>

namespace scope {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// A single grayscale observation. Pixel values always lie in [0, 1].
///
/// Construct through one of the factories; they enforce the invariants so
/// downstream code never has to re-validate a frame.
class Frame {
 public:
  Frame() = default;

  /// Validates that `pixels` is non-empty and every entry lies in [0, 1].
  static Frame from_pixels(Matrix pixels);

  /// Builds a frame from row-major 8-bit intensities, dividing by 255.
  static Frame from_gray8(int height, int width, std::span<const std::uint8_t> bytes);

  int height() const { return static_cast<int>(pixels_.rows()); }
  int width() const { return static_cast<int>(pixels_.cols()); }
  const Matrix& pixels() const { return pixels_; }

  friend bool operator==(const Frame& a, const Frame& b) {
    return a.pixels_.rows() == b.pixels_.rows() && a.pixels_.cols() == b.pixels_.cols() &&
           a.pixels_ == b.pixels_;
  }

 private:
  explicit Frame(Matrix pixels) : pixels_(std::move(pixels)) {}
  Matrix pixels_;
};

/// Row-major 8-bit encoding of a frame (round(v * 255)). Exact inverse of
/// Frame::from_gray8.
std::vector<std::uint8_t> to_gray8(const Frame& frame);

/// Orthonormal type-II DCT basis of size N. Row k holds
/// alpha_k * cos(pi/N * (n + 1/2) * k) for n = 0..N-1, with
/// alpha_0 = sqrt(1/N) and alpha_k = sqrt(2/N) otherwise.
class DctBasis {
 public:
  explicit DctBasis(int n);

  int size() const { return static_cast<int>(rows_.rows()); }
  const Matrix& rows() const { return rows_; }

 private:
  Matrix rows_;
};

/// Throws InvalidArgument for n < 1.
DctBasis build_basis(int n);

/// Process-wide basis cache. The returned reference stays valid for the
/// lifetime of the program; lookups are safe from any thread.
const DctBasis& cached_basis(int n);

/// The top-left k x k block of a frame's 2D DCT, remembering the source size.
struct CoeffBlock {
  int k = 0;
  Matrix coeffs;
  int source_height = 0;
  int source_width = 0;
};

/// A_H * M * A_W^T for an arbitrary real matrix.
Matrix dct2(const Matrix& m);
Matrix dct2_full(const Frame& frame);

/// Only the low-frequency k x k corner, computed with the first k rows of
/// each basis. Requires 1 <= k <= min(H, W).
CoeffBlock dct2_truncated(const Matrix& m, int k);
CoeffBlock dct2_truncated(const Frame& frame, int k);

/// Inverse of dct2: A_H^T * X * A_W.
Matrix idct2(const Matrix& coeffs);

/// Sum of squared entries.
double energy(const Matrix& m);

}  // namespace scope
