#pragma once

// Shared helpers for the test binaries: finite differences and small
// fixtures.

#include "osda/common.hpp"
#include "osda/model.hpp"
#include "osda/nn.hpp"

#include <cmath>
#include <filesystem>
#include <functional>
#include <memory>
#include <random>
#include <string>

namespace osda::testing {

// ‖a − b‖ / max(‖a‖, ‖b‖), zero when both vanish.
inline double relative_error(const Matrix& a, const Matrix& b) {
  const double scale = std::max(a.norm(), b.norm());
  if (scale == 0.0) return 0.0;
  return (a - b).norm() / scale;
}

// Central differences of a scalar function of a matrix.
inline Matrix numeric_gradient(const std::function<double(const Matrix&)>& f, const Matrix& x, double h = 1e-4) {
  Matrix g(x.rows(), x.cols());
  Matrix probe = x;
  for (long i = 0; i < x.size(); ++i) {
    const double orig = probe.data()[i];
    probe.data()[i] = orig + h;
    const double up = f(probe);
    probe.data()[i] = orig - h;
    const double down = f(probe);
    probe.data()[i] = orig;
    g.data()[i] = (up - down) / (2.0 * h);
  }
  return g;
}

// Random projection used to turn a layer output into a scalar loss.
inline double project(const Matrix& y, const Matrix& w) { return (y.array() * w.array()).sum(); }

// Two-known-class model whose prediction is always class 0 and whose
// unknown probability 1 − p_o(ŷ | x) is sigmoid(x₀) for inputs with x₀ ≥ 0.
inline std::unique_ptr<OpenSetModel> probe_model() {
  BackboneSpec spec;
  spec.feature_dim = 2;
  auto m = std::make_unique<OpenSetModel>(LabelSpace({"k0", "k1"}, {"u0"}), spec, 0);
  auto& bb = dynamic_cast<nn::Linear&>(m->backbone()->layer(0));
  bb.weight().value = Matrix::Identity(2, 2);
  bb.bias().value.setZero();
  auto& closed = dynamic_cast<nn::Linear&>(m->closed_head().layer(0));
  closed.weight().value.setZero();
  closed.bias().value << 1.0, 0.0;
  auto& open = dynamic_cast<nn::Linear&>(m->open_head().layer(0));
  open.weight().value.setZero();
  open.bias().value.setZero();
  open.weight().value(1, 0) = 1.0;  // unknown logit of classifier 0 = feature 0
  return m;
}

// Input row that makes probe_model() report unknown probability ≈ u.
inline RowVector probe_input(double u) {
  RowVector x(2);
  x << std::log(u / (1.0 - u)), 0.0;
  return x;
}

inline std::filesystem::path temp_dir(const std::string& tag) {
  static std::mt19937_64 gen(std::random_device{}());
  auto dir = std::filesystem::temp_directory_path() / ("osda-" + tag + "-" + std::to_string(gen()));
  std::filesystem::create_directories(dir);
  return dir;
}

struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& tag) : path(temp_dir(tag)) {}
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  std::filesystem::path operator/(const std::string& name) const { return path / name; }
};

}  // namespace osda::testing
