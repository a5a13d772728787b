#pragma once

#include "mslab/geometry.hpp"

#include <array>
#include <cstddef>
#include <string>
#include <vector>

namespace mslab {

/// Scalar field on a regular grid. Cell (i, j, k) has its centre at
/// origin + spacing * (i, j, k) and linear index i + n1 (j + n2 k).
struct ScalarGrid {
  std::array<int, 3> dims{0, 0, 0};
  double spacing = 1.0;
  Vec3 origin = Vec3::Zero();
  std::vector<double> values;

  ScalarGrid() = default;
  ScalarGrid(const std::array<int, 3>& dims, double spacing, const Vec3& origin, double fill = 0.0);

  /// Grid of n^3 cells covering the unit cube.
  static ScalarGrid unit_cube(int n, double fill = 0.0);

  std::size_t size() const { return values.size(); }
  std::size_t index(int i, int j, int k) const {
    return static_cast<std::size_t>(i) + static_cast<std::size_t>(dims[0]) * (static_cast<std::size_t>(j) + static_cast<std::size_t>(dims[1]) * k);
  }
  std::array<int, 3> coords(std::size_t idx) const {
    const int i = static_cast<int>(idx % dims[0]);
    const int j = static_cast<int>((idx / dims[0]) % dims[1]);
    const int k = static_cast<int>(idx / (static_cast<std::size_t>(dims[0]) * dims[1]));
    return {i, j, k};
  }
  Vec3 position(int i, int j, int k) const { return origin + spacing * Vec3(i, j, k); }
  Vec3 position(std::size_t idx) const {
    const auto c = coords(idx);
    return position(c[0], c[1], c[2]);
  }
  double& at(int i, int j, int k) { return values[index(i, j, k)]; }
  double at(int i, int j, int k) const { return values[index(i, j, k)]; }

  /// Lower and upper corners of the covered box (cell faces).
  Vec3 lower() const { return origin - Vec3::Constant(0.5 * spacing); }
  Vec3 upper() const { return origin + spacing * (Vec3(dims[0], dims[1], dims[2]) - Vec3::Constant(0.5)); }
  bool contains_ball(const Ball& B) const;

  double min() const;
  double max() const;
  double max_abs() const;

  /// Throws std::invalid_argument unless dims >= 2, spacing > 0 and values
  /// are finite with the right count.
  void validate() const;
};

/// Flat little-endian f64 values at `stem`.bin with a JSON sidecar at
/// `stem`.json holding dims, spacing and origin.
void write_grid(const ScalarGrid& g, const std::string& stem);
ScalarGrid read_grid(const std::string& stem);

}  // namespace mslab
