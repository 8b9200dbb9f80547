// Copyright 2026 The oodkit Authors
// SPDX-License-Identifier: Apache-2.0
//
// Reader for the IDX format used by the MNIST distribution: a big-endian
// uint32 magic (0x00000803 for ubyte images with three dims, 0x00000801 for
// ubyte labels), big-endian uint32 dims, then raw bytes.

#pragma once

#include <cstdint>
#include <fstream>
#include <iterator>
#include <span>
#include <string>
#include <vector>

#include "oodkit/core/error.hpp"
#include "oodkit/data/dataset.hpp"

namespace oodkit::data {

inline constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;

namespace detail {

inline std::uint32_t read_be32(std::span<const std::uint8_t> bytes, std::size_t at, const std::string& what) {
  if (at + 4 > bytes.size()) throw FormatError(what + ": truncated header");
  return (std::uint32_t{bytes[at]} << 24) | (std::uint32_t{bytes[at + 1]} << 16) | (std::uint32_t{bytes[at + 2]} << 8) |
         std::uint32_t{bytes[at + 3]};
}

inline std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace detail

/// Digit labels 0-4 map to y = 0 and 5-9 to y = 1. Pixels are scaled to
/// [0,1] and stored as [1, rows, cols]; c and env are 0.
inline Dataset parse_idx(std::span<const std::uint8_t> images, std::span<const std::uint8_t> labels) {
  const auto img_magic = detail::read_be32(images, 0, "images");
  if (img_magic != kIdxImagesMagic) throw FormatError("images: bad magic " + std::to_string(img_magic));
  const auto lbl_magic = detail::read_be32(labels, 0, "labels");
  if (lbl_magic != kIdxLabelsMagic) throw FormatError("labels: bad magic " + std::to_string(lbl_magic));

  const std::size_t n = detail::read_be32(images, 4, "images");
  const std::size_t rows = detail::read_be32(images, 8, "images");
  const std::size_t cols = detail::read_be32(images, 12, "images");
  const std::size_t n_labels = detail::read_be32(labels, 4, "labels");
  if (n != n_labels)
    throw FormatError("image count " + std::to_string(n) + " != label count " + std::to_string(n_labels));
  if (rows == 0 || cols == 0) throw FormatError("images: zero dimension");
  const std::size_t plane = rows * cols;
  if (images.size() < 16 + n * plane) throw FormatError("images: truncated payload");
  if (labels.size() < 8 + n) throw FormatError("labels: truncated payload");

  Dataset out;
  out.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    Array x(Shape{1, rows, cols});
    const auto* px = images.data() + 16 + k * plane;
    for (std::size_t p = 0; p < plane; ++p) x[p] = static_cast<double>(px[p]) / 255.0;
    const int digit = labels[8 + k];
    if (digit > 9) throw FormatError("labels: digit " + std::to_string(digit) + " out of range");
    out.push_back({std::move(x), digit <= 4 ? 0 : 1, 0, 0});
  }
  return out;
}

inline Dataset load_idx(const std::string& images_path, const std::string& labels_path) {
  const auto images = detail::read_file(images_path);
  const auto labels = detail::read_file(labels_path);
  return parse_idx(images, labels);
}

}  // namespace oodkit::data
