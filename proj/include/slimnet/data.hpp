// Copyright 2026 The slimnet Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef SLIMNET_DATA_HPP
#define SLIMNET_DATA_HPP

#include <cstdint>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "slimnet/random.hpp"
#include "slimnet/tensor.hpp"

namespace slimnet {

enum class DatasetKind { idx_images, synthetic_regression, synthetic_classification };

struct Dataset {
  DatasetKind kind = DatasetKind::synthetic_classification;
  Tensor features;                    // (n, d)
  std::vector<std::size_t> labels;    // classification
  Tensor targets;                     // (n, 1) regression
  std::vector<std::size_t> planted_support;  // synthetic: informative features
  Tensor planted_coeffs;              // synthetic regression: true w
  double noise_sigma = 0.0;

  std::size_t size() const { return features.rows(); }
  std::size_t dim() const { return features.cols(); }
};

namespace idx {

inline std::uint32_t read_be32(std::ifstream& in, const std::string& path,
                               std::size_t offset) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4))
    throw std::runtime_error("idx: truncated file " + path + " at byte offset " +
                             std::to_string(offset));
  return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) |
         (std::uint32_t(b[2]) << 8) | std::uint32_t(b[3]);
}

}  // namespace idx

/// Parse the big-endian IDX container pair used by the MNIST family: images
/// scale bytes to [0, 1] and flatten to (n, rows*cols); labels are class ids.
inline Dataset load_idx(const std::string& images_path,
                        const std::string& labels_path) {
  std::ifstream img(images_path, std::ios::binary);
  if (!img) throw std::runtime_error("idx: cannot open " + images_path);
  std::uint32_t magic = idx::read_be32(img, images_path, 0);
  if (magic != 0x00000803)
    throw std::runtime_error("idx: bad image magic in " + images_path +
                             " (expected 0x00000803)");
  std::uint32_t n = idx::read_be32(img, images_path, 4);
  std::uint32_t rows = idx::read_be32(img, images_path, 8);
  std::uint32_t cols = idx::read_be32(img, images_path, 12);
  std::size_t d = std::size_t(rows) * cols;
  std::vector<unsigned char> bytes(std::size_t(n) * d);
  if (!img.read(reinterpret_cast<char*>(bytes.data()), std::streamsize(bytes.size())))
    throw std::runtime_error("idx: truncated pixel payload in " + images_path +
                             " at byte offset " +
                             std::to_string(16 + std::size_t(img.gcount())));

  std::ifstream lab(labels_path, std::ios::binary);
  if (!lab) throw std::runtime_error("idx: cannot open " + labels_path);
  std::uint32_t lmagic = idx::read_be32(lab, labels_path, 0);
  if (lmagic != 0x00000801)
    throw std::runtime_error("idx: bad label magic in " + labels_path +
                             " (expected 0x00000801)");
  std::uint32_t ln = idx::read_be32(lab, labels_path, 4);
  if (ln != n)
    throw std::runtime_error("idx: count mismatch: " + std::to_string(n) +
                             " images vs " + std::to_string(ln) + " labels");
  std::vector<unsigned char> lbytes(ln);
  if (!lab.read(reinterpret_cast<char*>(lbytes.data()), std::streamsize(ln)))
    throw std::runtime_error("idx: truncated label payload in " + labels_path +
                             " at byte offset " +
                             std::to_string(8 + std::size_t(lab.gcount())));

  Dataset ds;
  ds.kind = DatasetKind::idx_images;
  ds.features = Tensor({n, d});
  for (std::size_t i = 0; i < bytes.size(); ++i)
    ds.features.data[i] = double(bytes[i]) / 255.0;
  ds.labels.assign(lbytes.begin(), lbytes.end());
  return ds;
}

/// Standard-normal design, k-sparse coefficients with unit-magnitude nonzeros
/// on a random support, y = X w* + sigma * noise. The support is recorded for
/// oracle checks.
inline Dataset gen_sparse_regression(std::size_t n, std::size_t d, std::size_t k,
                                     double sigma, std::uint64_t seed) {
  if (k > d) throw std::invalid_argument("gen_sparse_regression: k > d");
  if (n < 1) throw std::invalid_argument("gen_sparse_regression: n must be >= 1");
  Rng rng(seed);
  Dataset ds;
  ds.kind = DatasetKind::synthetic_regression;
  ds.noise_sigma = sigma;
  ds.features = rng.normal_tensor({n, d});

  std::set<std::size_t> support;
  while (support.size() < k) support.insert(rng.index(d));
  ds.planted_support.assign(support.begin(), support.end());
  ds.planted_coeffs = Tensor::zeros({d});
  for (std::size_t j : ds.planted_support)
    ds.planted_coeffs.at(j) = rng.uniform() < 0.5 ? -1.0 : 1.0;

  ds.targets = Tensor({n, 1});
  for (std::size_t i = 0; i < n; ++i) {
    double y = 0.0;
    for (std::size_t j : ds.planted_support)
      y += ds.features.at(i, j) * ds.planted_coeffs.at(j);
    ds.targets.at(i, 0) = y + sigma * rng.normal();
  }
  return ds;
}

/// Two-cluster Gaussian classification with k informative features (class
/// means at +/- mu) and d-k pure-noise features; stands in for image data
/// when no IDX files are available, exercising the same mask dynamics.
inline Dataset gen_two_cluster(std::size_t n, std::size_t d, std::size_t k,
                               double mu, double sigma, std::uint64_t seed) {
  if (k > d) throw std::invalid_argument("gen_two_cluster: k > d");
  Rng rng(seed);
  Dataset ds;
  ds.kind = DatasetKind::synthetic_classification;
  ds.noise_sigma = sigma;
  ds.features = Tensor({n, d});
  ds.labels.resize(n);
  for (std::size_t j = 0; j < k; ++j) ds.planted_support.push_back(j);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t y = i % 2;
    ds.labels[i] = y;
    double sign = y == 0 ? -1.0 : 1.0;
    for (std::size_t j = 0; j < d; ++j) {
      double mean = j < k ? sign * mu : 0.0;
      ds.features.at(i, j) = mean + sigma * rng.normal();
    }
  }
  return ds;
}

inline Tensor take_feature_rows(const Dataset& ds,
                                const std::vector<std::size_t>& idx) {
  Tensor out({idx.size(), ds.dim()});
  for (std::size_t i = 0; i < idx.size(); ++i)
    for (std::size_t j = 0; j < ds.dim(); ++j)
      out.at(i, j) = ds.features.at(idx[i], j);
  return out;
}

}  // namespace slimnet

#endif  // SLIMNET_DATA_HPP
