#include "sbp/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include "sbp/errors.hpp"

namespace sbp {
namespace {

constexpr std::uint32_t kImagesMagic = 0x00000803;
constexpr std::uint32_t kLabelsMagic = 0x00000801;

std::uint32_t be32(const std::string& s, std::size_t at, const std::string& what) {
  if (s.size() < at + 4) {
    throw DataError(what + ": file truncated at byte " + std::to_string(s.size()) +
                    " while reading a 4-byte field at offset " + std::to_string(at));
  }
  std::uint32_t v = 0;
  for (std::size_t i = 0; i < 4; ++i) v = (v << 8) | static_cast<unsigned char>(s[at + i]);
  return v;
}

std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void check_magic(std::uint32_t got, std::uint32_t want, const std::string& what) {
  if (got != want) {
    std::ostringstream m;
    m << what << ": bad magic at byte 0: got 0x" << std::hex << got << ", expected 0x" << want;
    throw DataError(m.str());
  }
}

void check_length(const std::string& s, std::size_t want, const std::string& what) {
  if (s.size() < want) {
    throw DataError(what + ": payload truncated at byte " + std::to_string(s.size()) +
                    ", expected " + std::to_string(want) + " bytes");
  }
  if (s.size() > want) {
    throw DataError(what + ": unexpected trailing data at byte " + std::to_string(want));
  }
}

}  // namespace

Tensor<float> parse_idx_images(const std::string& bytes, const std::string& what) {
  check_magic(be32(bytes, 0, what), kImagesMagic, what);
  const std::size_t n = be32(bytes, 4, what), rows = be32(bytes, 8, what),
                    cols = be32(bytes, 12, what);
  check_length(bytes, 16 + n * rows * cols, what);
  Tensor<float> x({n, rows, cols, 1});
  for (std::size_t i = 0; i < x.size(); ++i) {
    x[i] = static_cast<float>(static_cast<unsigned char>(bytes[16 + i])) / 255.0f;
  }
  return x;
}

std::vector<int> parse_idx_labels(const std::string& bytes, const std::string& what) {
  check_magic(be32(bytes, 0, what), kLabelsMagic, what);
  const std::size_t n = be32(bytes, 4, what);
  check_length(bytes, 8 + n, what);
  std::vector<int> y(n);
  for (std::size_t i = 0; i < n; ++i) y[i] = static_cast<unsigned char>(bytes[8 + i]);
  return y;
}

Dataset load_mnist_idx(const std::string& images_path, const std::string& labels_path) {
  Dataset d;
  d.x = parse_idx_images(read_file(images_path), images_path);
  d.y = parse_idx_labels(read_file(labels_path), labels_path);
  if (d.x.dim(0) != d.y.size()) {
    throw DataError("dimension mismatch: " + std::to_string(d.x.dim(0)) + " images but " +
                    std::to_string(d.y.size()) + " labels");
  }
  d.classes = 10;
  for (int v : d.y) {
    if (v > 9) throw DataError(labels_path + ": label " + std::to_string(v) + " outside 0..9");
  }
  return d;
}

Dataset gather(const Dataset& d, const std::vector<std::size_t>& rows) {
  Shape s = d.x.shape();
  s[0] = rows.size();
  Dataset out;
  out.x = Tensor<float>(s);
  out.classes = d.classes;
  out.y.reserve(rows.size());
  const std::size_t row = d.x.row_size();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::copy_n(d.x.data() + rows[i] * row, row, out.x.data() + i * row);
    out.y.push_back(d.y.at(rows[i]));
  }
  return out;
}

Dataset head(const Dataset& d, std::size_t n) {
  if (n == 0 || n >= d.size()) return d;
  std::vector<std::size_t> rows(n);
  for (std::size_t i = 0; i < n; ++i) rows[i] = i;
  return gather(d, rows);
}

Dataset make_blobs(std::size_t per_class, std::size_t classes, double noise, std::uint64_t seed) {
  if (classes < 2 || per_class == 0) throw ConfigError("blobs need >= 2 classes and >= 1 point");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(0.0, noise);
  Dataset d;
  d.classes = classes;
  d.x = Tensor<float>({per_class * classes, 2});
  const double pi = std::acos(-1.0);
  for (std::size_t i = 0; i < per_class * classes; ++i) {
    const std::size_t c = i % classes;
    const double ang = 2.0 * pi * static_cast<double>(c) / static_cast<double>(classes);
    d.x[2 * i] = static_cast<float>(3.0 * std::cos(ang) + nd(rng));
    d.x[2 * i + 1] = static_cast<float>(3.0 * std::sin(ang) + nd(rng));
    d.y.push_back(static_cast<int>(c));
  }
  return d;
}

Dataset make_moons(std::size_t per_class, double noise, std::uint64_t seed) {
  if (per_class == 0) throw ConfigError("moons need >= 1 point per class");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(0.0, noise);
  std::uniform_real_distribution<double> ud(0.0, std::acos(-1.0));
  Dataset d;
  d.classes = 2;
  d.x = Tensor<float>({2 * per_class, 2});
  for (std::size_t i = 0; i < 2 * per_class; ++i) {
    const int c = static_cast<int>(i % 2);
    const double t = ud(rng);
    const double px = c == 0 ? std::cos(t) : 1.0 - std::cos(t);
    const double py = c == 0 ? std::sin(t) : 0.5 - std::sin(t);
    d.x[2 * i] = static_cast<float>(px + nd(rng));
    d.x[2 * i + 1] = static_cast<float>(py + nd(rng));
    d.y.push_back(c);
  }
  return d;
}

double majority_rate(const std::vector<int>& labels, std::size_t classes) {
  if (labels.empty()) return 0.0;
  std::vector<std::size_t> counts(classes, 0);
  for (int v : labels) ++counts.at(static_cast<std::size_t>(v));
  return static_cast<double>(*std::max_element(counts.begin(), counts.end())) /
         static_cast<double>(labels.size());
}

}  // namespace sbp
