#include "scope/policy.hpp"

#include <string>

#include "scope/error.hpp"

namespace scope {
namespace {

std::string dims(const Matrix& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

void expect_dims(const Matrix& m, Eigen::Index rows, Eigen::Index cols, const char* name) {
  if (m.rows() != rows || m.cols() != cols) {
    throw ShapeError(std::string(name) + " is " + dims(m) + ", expected " + std::to_string(rows) +
                     "x" + std::to_string(cols));
  }
}

// Row-major copy in/out of an Eigen (column-major) matrix.
std::size_t write_row_major(const Matrix& m, double* out) {
  std::size_t i = 0;
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) out[i++] = m(r, c);
  return i;
}

std::size_t read_row_major(const double* in, Matrix& m) {
  std::size_t i = 0;
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = in[i++];
  return i;
}

}  // namespace

std::size_t param_count(int k, int m, int n, bool include_bias) {
  PolicyShape{k, m, n, include_bias}.validate();
  const auto uk = static_cast<std::size_t>(k);
  const auto um = static_cast<std::size_t>(m);
  const auto un = static_cast<std::size_t>(n);
  return um * uk + uk * un + (include_bias ? um * un : 0);
}

std::size_t PolicyShape::param_count() const { return scope::param_count(k, m, n, include_bias); }

void PolicyShape::validate() const {
  if (k < 1 || m < 1 || n < 1) {
    throw InvalidArgument("policy dimensions must be positive (k=" + std::to_string(k) +
                          ", m=" + std::to_string(m) + ", n=" + std::to_string(n) + ")");
  }
}

PolicyParams PolicyParams::zeros(const PolicyShape& shape) {
  shape.validate();
  PolicyParams p{shape, Matrix::Zero(shape.m, shape.k), Matrix::Zero(shape.k, shape.n), {}};
  if (shape.include_bias) p.bias = Matrix::Zero(shape.m, shape.n);
  return p;
}

void PolicyParams::validate() const {
  shape.validate();
  expect_dims(w1, shape.m, shape.k, "w1");
  expect_dims(w2, shape.k, shape.n, "w2");
  if (shape.include_bias != bias.has_value()) {
    throw ShapeError(shape.include_bias ? "policy shape requires a bias" : "unexpected bias");
  }
  if (bias) expect_dims(*bias, shape.m, shape.n, "bias");
}

bool operator==(const PolicyParams& a, const PolicyParams& b) {
  if (!(a.shape == b.shape)) return false;
  if (a.w1.rows() != b.w1.rows() || a.w1.cols() != b.w1.cols() || a.w1 != b.w1) return false;
  if (a.w2.rows() != b.w2.rows() || a.w2.cols() != b.w2.cols() || a.w2 != b.w2) return false;
  if (a.bias.has_value() != b.bias.has_value()) return false;
  return !a.bias || *a.bias == *b.bias;
}

ActionLogits forward(const PolicyParams& params, const Matrix& coeffs) {
  if (coeffs.rows() != params.shape.k || coeffs.cols() != params.shape.k) {
    throw ShapeError("policy expects a " + std::to_string(params.shape.k) + "x" +
                     std::to_string(params.shape.k) + " block, got " + dims(coeffs));
  }
  Matrix y = (params.w1 * coeffs) * params.w2;
  if (params.bias) y += *params.bias;

  ActionLogits out{Eigen::VectorXd(y.size())};
  write_row_major(y, out.values.data());
  return out;
}

ActionLogits forward(const PolicyParams& params, const SparseBlock& input) {
  return forward(params, input.block.coeffs);
}

int select_action(const ActionLogits& logits) {
  if (logits.values.size() == 0) throw InvalidArgument("cannot select from empty logits");
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < logits.values.size(); ++i) {
    if (logits.values[i] > logits.values[best]) best = i;
  }
  return static_cast<int>(best);
}

Eigen::VectorXd flatten(const PolicyParams& params) {
  params.validate();
  Eigen::VectorXd out(static_cast<Eigen::Index>(params.shape.param_count()));
  double* cursor = out.data();
  cursor += write_row_major(params.w1, cursor);
  cursor += write_row_major(params.w2, cursor);
  if (params.bias) write_row_major(*params.bias, cursor);
  return out;
}

PolicyParams unflatten(std::span<const double> values, const PolicyShape& shape) {
  const std::size_t expected = shape.param_count();
  if (values.size() != expected) {
    throw ShapeError("parameter vector has " + std::to_string(values.size()) +
                     " entries, expected " + std::to_string(expected));
  }
  PolicyParams p = PolicyParams::zeros(shape);
  const double* cursor = values.data();
  cursor += read_row_major(cursor, p.w1);
  cursor += read_row_major(cursor, p.w2);
  if (p.bias) read_row_major(cursor, *p.bias);
  return p;
}

PolicyParams unflatten(const Eigen::VectorXd& values, const PolicyShape& shape) {
  return unflatten(std::span<const double>(values.data(), static_cast<std::size_t>(values.size())),
                   shape);
}

}  // namespace scope
