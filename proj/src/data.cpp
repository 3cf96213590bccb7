#include "dtram/data.hpp"

#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "dtram/errors.hpp"
#include "dtram/rng.hpp"

namespace dtram {

namespace {

constexpr std::uint32_t kImageMagic = 0x00000803;
constexpr std::uint32_t kLabelMagic = 0x00000801;

std::uint32_t read_u32_be(std::istream& in, const std::string& path, const char* what) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (!in) {
    throw DataError(path + ": truncated file while reading " + what);
  }
  return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) |
         (std::uint32_t(b[2]) << 8) | std::uint32_t(b[3]);
}

void write_u32_be(std::ostream& out, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v >> 24),
                              static_cast<unsigned char>(v >> 16),
                              static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

std::string hex_magic(std::uint32_t v) {
  std::ostringstream os;
  os << "0x" << std::hex << v;
  return os.str();
}

std::ifstream open_input(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw DataError(path + ": cannot open file");
  }
  return in;
}

}  // namespace

LabeledDataset LabeledDataset::subset(std::size_t begin, std::size_t count) const {
  LabeledDataset out;
  for (std::size_t i = begin; i < begin + count && i < size(); ++i) {
    out.images.push_back(images[i]);
    out.labels.push_back(labels[i]);
  }
  return out;
}

std::vector<ImageGray> load_idx_images(const std::string& path) {
  std::ifstream in = open_input(path);
  const std::uint32_t magic = read_u32_be(in, path, "magic");
  if (magic != kImageMagic) {
    throw DataError(path + ": wrong magic " + hex_magic(magic) + ", expected " +
                    hex_magic(kImageMagic) + " for an image file");
  }
  const std::uint32_t count = read_u32_be(in, path, "image count");
  const std::uint32_t rows = read_u32_be(in, path, "row count");
  const std::uint32_t cols = read_u32_be(in, path, "column count");
  if (rows == 0 || cols == 0) {
    throw DataError(path + ": dimension mismatch, rows=" + std::to_string(rows) +
                    " cols=" + std::to_string(cols) + " must be positive");
  }

  std::vector<ImageGray> images;
  images.reserve(count);
  std::vector<unsigned char> buf(static_cast<std::size_t>(rows) * cols);
  for (std::uint32_t i = 0; i < count; ++i) {
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (!in) {
      throw DataError(path + ": truncated file, image " + std::to_string(i) + " of " +
                      std::to_string(count) + " is incomplete");
    }
    ImageGray img;
    img.pixels.resize(rows, cols);
    for (std::uint32_t r = 0; r < rows; ++r) {
      for (std::uint32_t c = 0; c < cols; ++c) {
        img.pixels(r, c) = buf[static_cast<std::size_t>(r) * cols + c] / 255.0;
      }
    }
    images.push_back(std::move(img));
  }
  return images;
}

std::vector<int> load_idx_labels(const std::string& path) {
  std::ifstream in = open_input(path);
  const std::uint32_t magic = read_u32_be(in, path, "magic");
  if (magic != kLabelMagic) {
    throw DataError(path + ": wrong magic " + hex_magic(magic) + ", expected " +
                    hex_magic(kLabelMagic) + " for a label file");
  }
  const std::uint32_t count = read_u32_be(in, path, "label count");
  std::vector<int> labels;
  labels.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    const int v = in.get();
    if (v == std::char_traits<char>::eof()) {
      throw DataError(path + ": truncated file, label " + std::to_string(i) + " of " +
                      std::to_string(count) + " is missing");
    }
    if (v >= 10) {
      throw DataError(path + ": label " + std::to_string(v) + " at index " +
                      std::to_string(i) + " is out of range [0, 10)");
    }
    labels.push_back(v);
  }
  return labels;
}

void save_idx_images(const std::string& path, const std::vector<ImageGray>& images) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw DataError(path + ": cannot open file for writing");
  }
  const std::uint32_t rows = images.empty() ? 0 : images.front().height();
  const std::uint32_t cols = images.empty() ? 0 : images.front().width();
  write_u32_be(out, kImageMagic);
  write_u32_be(out, static_cast<std::uint32_t>(images.size()));
  write_u32_be(out, rows);
  write_u32_be(out, cols);
  for (const ImageGray& img : images) {
    for (std::uint32_t r = 0; r < rows; ++r) {
      for (std::uint32_t c = 0; c < cols; ++c) {
        const long v = std::lround(img.pixels(r, c) * 255.0);
        out.put(static_cast<char>(std::clamp(v, 0L, 255L)));
      }
    }
  }
}

void save_idx_labels(const std::string& path, const std::vector<int>& labels) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw DataError(path + ": cannot open file for writing");
  }
  write_u32_be(out, kLabelMagic);
  write_u32_be(out, static_cast<std::uint32_t>(labels.size()));
  for (int l : labels) {
    out.put(static_cast<char>(l));
  }
}

LabeledDataset load_mnist_split(const std::string& dir, const std::string& prefix) {
  LabeledDataset ds;
  ds.images = load_idx_images(dir + "/" + prefix + "-images-idx3-ubyte");
  ds.labels = load_idx_labels(dir + "/" + prefix + "-labels-idx1-ubyte");
  if (ds.images.size() != ds.labels.size()) {
    throw DataError(dir + ": count mismatch, " + std::to_string(ds.images.size()) +
                    " images vs " + std::to_string(ds.labels.size()) + " labels");
  }
  return ds;
}

std::vector<std::vector<std::size_t>> batch_iterator(std::size_t n, int batch_size,
                                                     std::uint64_t seed, int epoch) {
  if (batch_size < 1) {
    throw ConfigError("batch_iterator: batch_size must be >= 1, got " +
                      std::to_string(batch_size));
  }
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  Rng rng = Rng::stream(seed, 0x9d5c6a2fULL, static_cast<std::uint64_t>(epoch));
  shuffle(perm, rng);

  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t at = 0; at < n; at += batch_size) {
    const std::size_t end = std::min(n, at + batch_size);
    batches.emplace_back(perm.begin() + at, perm.begin() + end);
  }
  return batches;
}

}  // namespace dtram
