#pragma once

#include <compare>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace steerq {

/// Pixel coordinate. Row 0 is the top of the image.
struct Cell {
  int row = 0;
  int col = 0;

  friend auto operator<=>(const Cell&, const Cell&) = default;
};

enum class ActionKind { Pick, Place };

/// A spatial action: a pixel position, an orientation index in C_u/C_2 and
/// the pick/place primitive.
struct SpatialAction {
  Cell x;
  int theta = 0;
  ActionKind kind = ActionKind::Pick;

  friend bool operator==(const SpatialAction&, const SpatialAction&) = default;
};

/// Dense single-channel image in row-major order.
class Image {
 public:
  Image() = default;
  Image(int rows, int cols, double fill = 0.0)
      : rows_(rows), cols_(cols), values_(static_cast<std::size_t>(rows) * cols, fill) {
    if (rows < 0 || cols < 0) throw std::invalid_argument("Image: negative size");
  }
  Image(int rows, int cols, std::vector<double> values)
      : rows_(rows), cols_(cols), values_(std::move(values)) {
    if (values_.size() != static_cast<std::size_t>(rows) * cols)
      throw std::invalid_argument("Image: value count does not match size");
  }

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  bool contains(Cell c) const { return c.row >= 0 && c.row < rows_ && c.col >= 0 && c.col < cols_; }

  double& at(int r, int c) { return values_[static_cast<std::size_t>(r) * cols_ + c]; }
  double at(int r, int c) const { return values_[static_cast<std::size_t>(r) * cols_ + c]; }
  double& at(Cell c) { return at(c.row, c.col); }
  double at(Cell c) const { return at(c.row, c.col); }

  const std::vector<double>& values() const { return values_; }
  std::vector<double>& values() { return values_; }

  friend bool operator==(const Image&, const Image&) = default;

 private:
  int rows_ = 0;
  int cols_ = 0;
  std::vector<double> values_;
};

}  // namespace steerq
