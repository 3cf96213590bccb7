#include <doctest.h>

#include "dtram/glimpse.hpp"
#include "dtram/rng.hpp"

using namespace dtram;

namespace {

ImageGray random_image(int h, int w, Rng& rng) {
  ImageGray img;
  img.pixels.resize(h, w);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) img.pixels(r, c) = rng.uniform();
  }
  return img;
}

}  // namespace

TEST_CASE("location_to_pixel: center, corner, edge midpoint") {
  auto [rc, cc] = location_to_pixel({0.0, 0.0}, 28, 28);
  CHECK(rc == 13.5);
  CHECK(cc == 13.5);

  auto [r0, c0] = location_to_pixel({-1.0, -1.0}, 28, 28);
  CHECK(r0 == 0.0);
  CHECK(c0 == 0.0);

  auto [re, ce] = location_to_pixel({1.0, 0.0}, 28, 28);
  CHECK(re == 27.0);
  CHECK(ce == 13.5);
}

TEST_CASE("extract_glimpse: interior crop of a constant image") {
  ImageGray ones;
  ones.pixels = Eigen::MatrixXd::Ones(28, 28);
  const GlimpsePatch patch = extract_glimpse(ones, {0.0, 0.0}, 8);
  CHECK(patch.rows() == 8);
  CHECK(patch.cols() == 8);
  CHECK(patch == Eigen::MatrixXd::Ones(8, 8));
}

TEST_CASE("extract_glimpse: top-left corner pads the out-of-image band with zeros") {
  Rng rng(31);
  const ImageGray img = random_image(28, 28, rng);
  const GlimpsePatch patch = extract_glimpse(img, {-1.0, -1.0}, 8);
  // window corner is (-4, -4): the first four rows and columns fall outside
  for (int i = 0; i < 8; ++i) {
    for (int j = 0; j < 8; ++j) {
      const double want = (i < 4 || j < 4) ? 0.0 : img.pixels(i - 4, j - 4);
      CHECK(patch(i, j) == want);
    }
  }
}

TEST_CASE("extract_glimpse: ramp image matches direct index arithmetic") {
  ImageGray img;
  img.pixels.resize(28, 28);
  for (int r = 0; r < 28; ++r) {
    for (int c = 0; c < 28; ++c) img.pixels(r, c) = (r * 28 + c) / 1000.0;
  }
  const GlimpsePatch patch = extract_glimpse(img, {0.0, 0.0}, 2);
  // center (13.5, 13.5), corner round(13.5 - 1) = 13 -> rows/cols {13, 14}
  for (int i = 0; i < 2; ++i) {
    for (int j = 0; j < 2; ++j) {
      CHECK(patch(i, j) == img.pixels(13 + i, 13 + j));
    }
  }
}

TEST_CASE("extract_glimpse: every output pixel is an input pixel or exactly zero") {
  Rng rng(32);
  const ImageGray img = random_image(21, 17, rng);
  for (int trial = 0; trial < 200; ++trial) {
    const Location l{rng.uniform(-1.5, 1.5), rng.uniform(-1.5, 1.5)};
    const int g = 1 + static_cast<int>(rng.index(12));
    const GlimpsePatch patch = extract_glimpse(img, l, g);
    CHECK(patch.rows() == g);
    CHECK(patch.cols() == g);
    for (int i = 0; i < g; ++i) {
      for (int j = 0; j < g; ++j) {
        const double v = patch(i, j);
        bool found = v == 0.0;
        for (int r = 0; r < 21 && !found; ++r) {
          for (int c = 0; c < 17 && !found; ++c) {
            found = img.pixels(r, c) == v;
          }
        }
        CHECK(found);
      }
    }
  }
}

TEST_CASE("extract_glimpse: translation consistency for interior windows") {
  Rng rng(33);
  const int H = 28, W = 28, g = 6;
  const ImageGray img = random_image(H, W, rng);
  for (int trial = 0; trial < 50; ++trial) {
    // location well inside, shift small enough to stay interior
    const Location l{rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3)};
    const int dr = static_cast<int>(rng.index(5)) - 2;
    const int dc = static_cast<int>(rng.index(5)) - 2;

    ImageGray shifted;
    shifted.pixels = Eigen::MatrixXd::Zero(H, W);
    for (int r = 0; r < H; ++r) {
      for (int c = 0; c < W; ++c) {
        const int sr = r - dr, sc = c - dc;
        if (sr >= 0 && sr < H && sc >= 0 && sc < W) {
          shifted.pixels(r, c) = img.pixels(sr, sc);
        }
      }
    }
    const Location l2{l.y + 2.0 * dr / (H - 1), l.x + 2.0 * dc / (W - 1)};
    CHECK(extract_glimpse(img, l, g) == extract_glimpse(shifted, l2, g));
  }
}

TEST_CASE("extract_glimpse: out-of-range locations equal their clamped projection") {
  Rng rng(34);
  const ImageGray img = random_image(28, 28, rng);
  for (int trial = 0; trial < 50; ++trial) {
    const Location wild{rng.uniform(-5, 5), rng.uniform(-5, 5)};
    const Location clamped = wild.clamped();
    CHECK(extract_glimpse(img, wild, 8) == extract_glimpse(img, clamped, 8));
  }
}

TEST_CASE("extract_glimpse: output shape is g x g even when g exceeds the image") {
  Rng rng(35);
  const ImageGray img = random_image(4, 4, rng);
  const GlimpsePatch patch = extract_glimpse(img, {1.0, 1.0}, 9);
  CHECK(patch.rows() == 9);
  CHECK(patch.cols() == 9);
  CHECK_THROWS_AS(extract_glimpse(img, {0.0, 0.0}, 0), std::invalid_argument);
}
