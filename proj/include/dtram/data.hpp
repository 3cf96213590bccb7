#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dtram/glimpse.hpp"

namespace dtram {

struct LabeledDataset {
  std::vector<ImageGray> images;
  std::vector<int> labels;  // class indices in [0, 10)

  std::size_t size() const { return images.size(); }
  LabeledDataset subset(std::size_t begin, std::size_t count) const;
};

// IDX image file: big-endian magic 0x00000803, count, rows, cols, then
// unsigned bytes row-wise. Pixels are scaled by 1/255.
std::vector<ImageGray> load_idx_images(const std::string& path);

// IDX label file: big-endian magic 0x00000801, count, then unsigned bytes.
// Labels must be < 10.
std::vector<int> load_idx_labels(const std::string& path);

void save_idx_images(const std::string& path, const std::vector<ImageGray>& images);
void save_idx_labels(const std::string& path, const std::vector<int>& labels);

// Loads <dir>/<prefix>-images-idx3-ubyte and <dir>/<prefix>-labels-idx1-ubyte;
// prefix is "train" or "t10k" for the standard files.
LabeledDataset load_mnist_split(const std::string& dir, const std::string& prefix);

// Deterministic shuffled index batches for one epoch; the permutation is a
// function of (seed, epoch) only. The final short batch is retained.
std::vector<std::vector<std::size_t>> batch_iterator(std::size_t n, int batch_size,
                                                     std::uint64_t seed, int epoch);

}  // namespace dtram
