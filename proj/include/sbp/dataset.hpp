#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sbp/tensor.hpp"

namespace sbp {

struct Dataset {
  Tensor<float> x;  // [N, example shape...]
  std::vector<int> y;
  std::size_t classes = 0;

  std::size_t size() const { return y.size(); }
  Shape example_shape() const { return Shape(x.shape().begin() + 1, x.shape().end()); }
};

// IDX parsing. Images come back as [N, rows, cols, 1] scaled to [0, 1].
// Errors name the byte offset where the file stopped making sense.
Tensor<float> parse_idx_images(const std::string& bytes, const std::string& what = "images");
std::vector<int> parse_idx_labels(const std::string& bytes, const std::string& what = "labels");
Dataset load_mnist_idx(const std::string& images_path, const std::string& labels_path);

// First n examples (all of them if n is 0 or exceeds the size).
Dataset head(const Dataset& d, std::size_t n);
// Rows of d in the given order.
Dataset gather(const Dataset& d, const std::vector<std::size_t>& rows);

// Gaussian blobs with centers spread on a circle of radius 3; points are 2-D.
Dataset make_blobs(std::size_t per_class, std::size_t classes, double noise, std::uint64_t seed);
// Two interleaved half circles.
Dataset make_moons(std::size_t per_class, double noise, std::uint64_t seed);

// Fraction of the most frequent label.
double majority_rate(const std::vector<int>& labels, std::size_t classes);

}  // namespace sbp
