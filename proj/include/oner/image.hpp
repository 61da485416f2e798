#pragma once

#include <cstddef>
#include <vector>

namespace oner {

// Grayscale image, row-major, values in [0, 1].
struct Image {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> pixels;

  double at(std::size_t row, std::size_t col) const {
    return pixels[row * width + col];
  }
  double& at(std::size_t row, std::size_t col) {
    return pixels[row * width + col];
  }
};

}  // namespace oner
