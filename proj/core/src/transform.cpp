#include "scope/transform.hpp"

#include <array>
#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <shared_mutex>
#include <string>

#include "scope/error.hpp"

namespace scope {

Frame Frame::from_pixels(Matrix pixels) {
  if (pixels.rows() == 0 || pixels.cols() == 0) {
    throw InvalidArgument("frame must have positive height and width");
  }
  for (Eigen::Index c = 0; c < pixels.cols(); ++c) {
    for (Eigen::Index r = 0; r < pixels.rows(); ++r) {
      const double v = pixels(r, c);
      if (!(v >= 0.0 && v <= 1.0)) {
        throw InvalidArgument("frame pixel (" + std::to_string(r) + ", " + std::to_string(c) +
                              ") = " + std::to_string(v) + " lies outside [0, 1]");
      }
    }
  }
  return Frame(std::move(pixels));
}

Frame Frame::from_gray8(int height, int width, std::span<const std::uint8_t> bytes) {
  if (height < 1 || width < 1) {
    throw InvalidArgument("frame must have positive height and width");
  }
  const auto expected = static_cast<std::size_t>(height) * static_cast<std::size_t>(width);
  if (bytes.size() != expected) {
    throw ShapeError("gray8 buffer holds " + std::to_string(bytes.size()) + " bytes, expected " +
                     std::to_string(expected));
  }
  // Same values as b / 255.0, without a division per pixel.
  static const std::array<double, 256> kLevels = [] {
    std::array<double, 256> levels{};
    for (int b = 0; b < 256; ++b) levels[static_cast<std::size_t>(b)] = b / 255.0;
    return levels;
  }();
  Matrix pixels(height, width);
  double* out = pixels.data();  // row-major, same order as the bytes
  for (std::size_t i = 0; i < expected; ++i) out[i] = kLevels[bytes[i]];
  return Frame(std::move(pixels));
}

std::vector<std::uint8_t> to_gray8(const Frame& frame) {
  const Matrix& px = frame.pixels();
  std::vector<std::uint8_t> out(static_cast<std::size_t>(px.rows() * px.cols()));
  std::size_t i = 0;
  for (Eigen::Index r = 0; r < px.rows(); ++r) {
    for (Eigen::Index c = 0; c < px.cols(); ++c) {
      out[i++] = static_cast<std::uint8_t>(std::lround(px(r, c) * 255.0));
    }
  }
  return out;
}

DctBasis::DctBasis(int n) {
  if (n < 1) {
    throw InvalidArgument("DCT basis size must be >= 1, got " + std::to_string(n));
  }
  rows_.resize(n, n);
  const double dc = std::sqrt(1.0 / n);
  const double ac = std::sqrt(2.0 / n);
  for (int k = 0; k < n; ++k) {
    const double alpha = k == 0 ? dc : ac;
    for (int i = 0; i < n; ++i) {
      rows_(k, i) = alpha * std::cos(std::numbers::pi / n * (i + 0.5) * k);
    }
  }
}

DctBasis build_basis(int n) { return DctBasis(n); }

const DctBasis& cached_basis(int n) {
  static std::shared_mutex mutex;
  static std::map<int, std::unique_ptr<const DctBasis>> cache;
  {
    std::shared_lock lock(mutex);
    if (auto it = cache.find(n); it != cache.end()) return *it->second;
  }
  auto basis = std::make_unique<const DctBasis>(n);
  std::unique_lock lock(mutex);
  auto [it, inserted] = cache.try_emplace(n, std::move(basis));
  return *it->second;
}

Matrix dct2(const Matrix& m) {
  if (m.rows() == 0 || m.cols() == 0) return Matrix(m.rows(), m.cols());
  const Matrix& ah = cached_basis(static_cast<int>(m.rows())).rows();
  const Matrix& aw = cached_basis(static_cast<int>(m.cols())).rows();
  return ah * m * aw.transpose();
}

Matrix dct2_full(const Frame& frame) { return dct2(frame.pixels()); }

CoeffBlock dct2_truncated(const Matrix& m, int k) {
  const auto h = static_cast<int>(m.rows());
  const auto w = static_cast<int>(m.cols());
  if (h < 1 || w < 1) throw InvalidArgument("cannot transform an empty matrix");
  if (k < 1 || k > std::min(h, w)) {
    throw InvalidArgument("truncation level k=" + std::to_string(k) + " outside [1, " +
                          std::to_string(std::min(h, w)) + "]");
  }
  const auto ah = cached_basis(h).rows().topRows(k);
  const auto aw = cached_basis(w).rows().topRows(k);

  // All-zero rows of M contribute nothing. Game screens are mostly background,
  // so dropping those rows before the products is a large saving.
  std::vector<Eigen::Index> live;
  live.reserve(static_cast<std::size_t>(h));
  for (Eigen::Index r = 0; r < h; ++r) {
    if ((m.row(r).array() != 0.0).any()) live.push_back(r);
  }
  if (live.size() * 2 > static_cast<std::size_t>(h)) {
    const Matrix right = m * aw.transpose();  // H x k
    return CoeffBlock{k, ah * right, h, w};
  }
  if (live.empty()) return CoeffBlock{k, Matrix::Zero(k, k), h, w};

  const auto rows = static_cast<Eigen::Index>(live.size());
  Matrix compact(rows, w);
  Matrix basis_cols(k, rows);
  for (Eigen::Index i = 0; i < rows; ++i) {
    compact.row(i) = m.row(live[static_cast<std::size_t>(i)]);
    basis_cols.col(i) = ah.col(live[static_cast<std::size_t>(i)]);
  }
  const Matrix right = compact * aw.transpose();
  return CoeffBlock{k, basis_cols * right, h, w};
}

CoeffBlock dct2_truncated(const Frame& frame, int k) { return dct2_truncated(frame.pixels(), k); }

Matrix idct2(const Matrix& coeffs) {
  if (coeffs.rows() == 0 || coeffs.cols() == 0) return Matrix(coeffs.rows(), coeffs.cols());
  const Matrix& ah = cached_basis(static_cast<int>(coeffs.rows())).rows();
  const Matrix& aw = cached_basis(static_cast<int>(coeffs.cols())).rows();
  return ah.transpose() * coeffs * aw;
}

double energy(const Matrix& m) { return m.squaredNorm(); }

}  // namespace scope
