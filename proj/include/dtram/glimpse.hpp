#pragma once

#include <Eigen/Dense>
#include <utility>

namespace dtram {

// Grayscale image with pixel values in [0, 1].
struct ImageGray {
  Eigen::MatrixXd pixels;  // (row, col) indexed

  int height() const { return static_cast<int>(pixels.rows()); }
  int width() const { return static_cast<int>(pixels.cols()); }
};

// Normalized attention coordinate: (-1,-1) is the top-left corner, (1,1)
// the bottom-right corner, (0,0) the image center.
struct Location {
  double y = 0.0;
  double x = 0.0;

  Location clamped() const;
};

// Fixed-size square crop fed to the glimpse encoder.
using GlimpsePatch = Eigen::MatrixXd;

// Continuous pixel center of a normalized location: corner-anchored linear
// map onto [0, height-1] x [0, width-1]. Returns (row, col).
std::pair<double, double> location_to_pixel(const Location& l, int height, int width);

// The g-by-g window whose top-left integer corner is round(center - g/2)
// per axis. Pixels outside the image are zero; the location is clamped
// into [-1, 1]^2 before use.
GlimpsePatch extract_glimpse(const ImageGray& image, const Location& l, int g);

}  // namespace dtram
