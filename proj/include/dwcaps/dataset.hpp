#ifndef DWCAPS_DATASET_HPP_
#define DWCAPS_DATASET_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "dwcaps/tensor.hpp"

namespace dwcaps {

// Image classification data: square RGB images stored as raw u8 (the
// canonical form for bit-exact round trips) plus train/test index lists.
// Pixels scale to [0,1] when materialized as tensors.
struct DatasetBundle {
  std::int64_t height = 0;
  std::int64_t width = 0;
  std::vector<std::uint8_t> pixels;  // count * H * W * 3
  std::vector<int> labels;
  std::vector<std::string> class_names;
  std::vector<std::int64_t> train_indices;
  std::vector<std::int64_t> test_indices;

  std::int64_t count() const { return static_cast<std::int64_t>(labels.size()); }
  std::int64_t num_classes() const {
    return static_cast<std::int64_t>(class_names.size());
  }

  template <class T>
  Tensor<T> image(std::int64_t index) const;  // [H,W,3]

  template <class T>
  Tensor<T> batch(const std::vector<std::int64_t>& indices) const;  // [B,H,W,3]

  std::vector<int> labels_for(const std::vector<std::int64_t>& indices) const;
};

// format "raw-idx": <path>.images / <path>.labels pair (see save_raw_idx).
// format "image-dir": one subdirectory per class holding binary PPM (P6)
// files; classes are ordered alphabetically by directory name.
DatasetBundle load_dataset(const std::string& path, const std::string& format);

// Writes <prefix>.images ("DWCI", u32 count/H/W/C, u8 pixels) and
// <prefix>.labels ("DWCL", u32 count, u32 classes, u8 labels); all integers
// little-endian. Loading the pair restores the pixel and label bytes
// exactly.
void save_raw_idx(const DatasetBundle& bundle, const std::string& prefix);

void save_ppm(const std::string& path, const std::uint8_t* rgb,
              std::int64_t height, std::int64_t width);

// Deterministic class-conditional patterns: an oriented bar per class with
// position jitter over a noisy background. Balanced: per_class items for
// each class. size is the square image extent (32 or 64).
DatasetBundle generate_synthetic(std::int64_t num_classes,
                                 std::int64_t per_class, std::int64_t size,
                                 std::uint64_t seed);

// Same generator, but distributes `total` items as evenly as possible
// (the first total % num_classes classes receive one extra item).
DatasetBundle generate_synthetic_total(std::int64_t num_classes,
                                       std::int64_t total, std::int64_t size,
                                       std::uint64_t seed);

// Stratified train/test split. Subsampling keeps round(n_c * fraction)
// items of each class and is applied before the split; both are
// deterministic under the seed. A class left with fewer than 2 items
// fails the split.
DatasetBundle split(DatasetBundle bundle, double ratio,
                    double subsample_fraction, std::uint64_t seed);

}  // namespace dwcaps

#endif  // DWCAPS_DATASET_HPP_
