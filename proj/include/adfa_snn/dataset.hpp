#pragma once

// MNIST / Fashion-MNIST IDX ingestion and input scaling.

#include <array>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "adfa_snn/error.hpp"
#include "adfa_snn/lif.hpp"

namespace adfa {

enum class Split { kTrain, kTest };

struct Dataset {
  std::vector<Vector> images;
  std::vector<std::uint8_t> labels;
  Split split = Split::kTrain;
  std::size_t num_classes = 10;

  std::size_t size() const { return images.size(); }
  bool empty() const { return images.empty(); }
  std::size_t input_dim() const { return images.empty() ? 0 : static_cast<std::size_t>(images.front().size()); }

  double mean() const {
    if (images.empty()) return 0.0;
    double s = 0.0;
    std::size_t n = 0;
    for (const auto& x : images) {
      s += x.sum();
      n += static_cast<std::size_t>(x.size());
    }
    return s / static_cast<double>(n);
  }

  double second_moment() const {
    if (images.empty()) return 0.0;
    double s = 0.0;
    std::size_t n = 0;
    for (const auto& x : images) {
      s += x.squaredNorm();
      n += static_cast<std::size_t>(x.size());
    }
    return s / static_cast<double>(n);
  }

  // First `n` samples (all when n == 0 or n >= size()).
  Dataset head(std::size_t n) const {
    if (n == 0 || n >= size()) return *this;
    Dataset d;
    d.split = split;
    d.num_classes = num_classes;
    d.images.assign(images.begin(), images.begin() + static_cast<std::ptrdiff_t>(n));
    d.labels.assign(labels.begin(), labels.begin() + static_cast<std::ptrdiff_t>(n));
    return d;
  }
};

namespace detail {

inline std::vector<unsigned char> slurp(const std::string& path) {
  std::ifstream is(path, std::ios::binary | std::ios::ate);
  if (!is) throw DataError("cannot open IDX file: " + path);
  const auto size = static_cast<std::size_t>(is.tellg());
  is.seekg(0);
  std::vector<unsigned char> buf(size);
  if (size && !is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(size))) {
    throw DataError("failed reading IDX file: " + path);
  }
  return buf;
}

inline std::uint32_t be32(const std::vector<unsigned char>& b, std::size_t off, const std::string& path) {
  if (off + 4 > b.size()) {
    throw DataError(path + ": truncated header at byte offset " + std::to_string(off) + " (file is " +
                    std::to_string(b.size()) + " bytes)");
  }
  return (std::uint32_t{b[off]} << 24) | (std::uint32_t{b[off + 1]} << 16) | (std::uint32_t{b[off + 2]} << 8) |
         std::uint32_t{b[off + 3]};
}

}  // namespace detail

inline constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;

// Reads an IDX3 image file and its IDX1 label file. Pixels become reals in [0, 255].
inline Dataset load_idx(const std::string& images_path, const std::string& labels_path, Split split = Split::kTrain) {
  const auto img = detail::slurp(images_path);
  const auto lab = detail::slurp(labels_path);

  const auto im_magic = detail::be32(img, 0, images_path);
  if (im_magic != kIdxImagesMagic) {
    throw DataError(images_path + ": bad magic at byte offset 0 (expected 0x00000803)");
  }
  const auto n_img = detail::be32(img, 4, images_path);
  const auto rows = detail::be32(img, 8, images_path);
  const auto cols = detail::be32(img, 12, images_path);
  const std::size_t dim = std::size_t{rows} * cols;
  const std::size_t want_img = 16 + std::size_t{n_img} * dim;
  if (img.size() != want_img) {
    throw DataError(images_path + ": expected " + std::to_string(want_img) + " bytes, got " +
                    std::to_string(img.size()) + " (payload ends at byte offset " + std::to_string(img.size()) + ")");
  }

  const auto lb_magic = detail::be32(lab, 0, labels_path);
  if (lb_magic != kIdxLabelsMagic) {
    throw DataError(labels_path + ": bad magic at byte offset 0 (expected 0x00000801)");
  }
  const auto n_lab = detail::be32(lab, 4, labels_path);
  const std::size_t want_lab = 8 + std::size_t{n_lab};
  if (lab.size() != want_lab) {
    throw DataError(labels_path + ": expected " + std::to_string(want_lab) + " bytes, got " +
                    std::to_string(lab.size()));
  }
  if (n_img != n_lab) {
    throw DataError("image/label count mismatch: " + std::to_string(n_img) + " images vs " + std::to_string(n_lab) +
                    " labels");
  }

  Dataset ds;
  ds.split = split;
  ds.images.reserve(n_img);
  ds.labels.reserve(n_lab);
  for (std::size_t i = 0; i < n_img; ++i) {
    Vector x(static_cast<Eigen::Index>(dim));
    const unsigned char* p = img.data() + 16 + i * dim;
    for (std::size_t j = 0; j < dim; ++j) x[static_cast<Eigen::Index>(j)] = static_cast<double>(p[j]);
    ds.images.push_back(std::move(x));
    const auto y = lab[8 + i];
    if (y >= ds.num_classes) {
      throw DataError(labels_path + ": label " + std::to_string(y) + " out of range at byte offset " +
                      std::to_string(8 + i));
    }
    ds.labels.push_back(y);
  }
  return ds;
}

// Multiplies every pixel by `factor`.
inline Dataset scaled(Dataset ds, double factor) {
  for (auto& x : ds.images) x *= factor;
  return ds;
}

// Factor that brings the dataset mean to `target_mean`.
inline double scale_factor(const Dataset& ds, double target_mean) {
  if (!(target_mean > 0.0)) throw ConfigError("target input mean must be > 0");
  const double m = ds.mean();
  if (!(m > 0.0)) throw DataError("cannot scale inputs: dataset mean is zero");
  return target_mean / m;
}

// Scales one dataset to `target_mean` using its own mean.
inline Dataset scale_inputs(Dataset ds, double target_mean) {
  const double f = scale_factor(ds, target_mean);
  return scaled(std::move(ds), f);
}

struct ScaledSplits {
  Dataset train;
  Dataset test;
  double factor = 1.0;
  double train_second_moment = 0.0;
};

// Scales both splits by the factor computed on the train split only.
inline ScaledSplits scale_inputs(Dataset train, Dataset test, double target_mean) {
  ScaledSplits out;
  out.factor = scale_factor(train, target_mean);
  out.train = scaled(std::move(train), out.factor);
  out.test = scaled(std::move(test), out.factor);
  out.train_second_moment = out.train.second_moment();
  return out;
}

// Standard file names inside a data directory.
struct IdxPaths {
  std::string train_images, train_labels, test_images, test_labels;
};

inline IdxPaths idx_paths(const std::string& dir) {
  const std::string d = dir.empty() || dir.back() == '/' ? dir : dir + "/";
  return {d + "train-images-idx3-ubyte", d + "train-labels-idx1-ubyte", d + "t10k-images-idx3-ubyte",
          d + "t10k-labels-idx1-ubyte"};
}

}  // namespace adfa
