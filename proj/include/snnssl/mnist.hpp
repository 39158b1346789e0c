#pragma once

// MNIST IDX containers (optionally gzip-wrapped) and the class-balanced,
// pairwise-disjoint splits used by the experiments.

#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <zlib.h>

#include "random.hpp"

namespace snnssl::mnist {

inline constexpr std::uint32_t kImageMagic = 0x00000803;
inline constexpr std::uint32_t kLabelMagic = 0x00000801;
inline constexpr int kSide = 28;
inline constexpr int kPixels = kSide * kSide;
inline constexpr int kClasses = 10;

using ImageBytes = std::array<std::uint8_t, kPixels>;

class IdxError : public std::runtime_error {
 public:
  enum class Kind { magic_mismatch, truncated, dimension_mismatch, label_out_of_range, count_mismatch, io };

  IdxError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  [[nodiscard]] Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

namespace detail {

inline std::uint32_t read_be32(std::span<const std::uint8_t> bytes, std::size_t offset) {
  if (bytes.size() < offset + 4) throw IdxError(IdxError::Kind::truncated, "IDX header truncated");
  return (std::uint32_t{bytes[offset]} << 24) | (std::uint32_t{bytes[offset + 1]} << 16) |
         (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]};
}

inline void write_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 24));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

}  // namespace detail

inline bool is_gzip(std::span<const std::uint8_t> bytes) {
  return bytes.size() >= 2 && bytes[0] == 0x1f && bytes[1] == 0x8b;
}

/// Inflates gzip data; anything else is returned unchanged.
inline std::vector<std::uint8_t> maybe_gunzip(std::vector<std::uint8_t> bytes) {
  if (!is_gzip(bytes)) return bytes;
  z_stream zs{};
  if (inflateInit2(&zs, 16 + MAX_WBITS) != Z_OK) throw IdxError(IdxError::Kind::io, "zlib init failed");
  zs.next_in = bytes.data();
  zs.avail_in = static_cast<uInt>(bytes.size());
  std::vector<std::uint8_t> out;
  std::array<std::uint8_t, 1 << 16> chunk{};
  int rc = Z_OK;
  while (rc != Z_STREAM_END) {
    zs.next_out = chunk.data();
    zs.avail_out = static_cast<uInt>(chunk.size());
    rc = inflate(&zs, Z_NO_FLUSH);
    if (rc != Z_OK && rc != Z_STREAM_END) {
      inflateEnd(&zs);
      throw IdxError(IdxError::Kind::truncated, "corrupt or truncated gzip stream");
    }
    out.insert(out.end(), chunk.data(), chunk.data() + (chunk.size() - zs.avail_out));
  }
  inflateEnd(&zs);
  return out;
}

inline std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IdxError(IdxError::Kind::io, "cannot open " + path.string());
  return maybe_gunzip(std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), {}));
}

inline std::vector<ImageBytes> parse_idx_images(std::span<const std::uint8_t> bytes) {
  const auto magic = detail::read_be32(bytes, 0);
  if (magic != kImageMagic) throw IdxError(IdxError::Kind::magic_mismatch, "not an IDX image file (bad magic)");
  const auto count = detail::read_be32(bytes, 4);
  const auto rows = detail::read_be32(bytes, 8);
  const auto cols = detail::read_be32(bytes, 12);
  if (rows != kSide || cols != kSide) {
    throw IdxError(IdxError::Kind::dimension_mismatch,
                   "expected 28x28 images, got " + std::to_string(rows) + "x" + std::to_string(cols));
  }
  const std::size_t expected = 16 + std::size_t{count} * kPixels;
  if (bytes.size() != expected) {
    throw IdxError(IdxError::Kind::truncated, "IDX image payload is " + std::to_string(bytes.size()) +
                                                  " bytes, header implies " + std::to_string(expected));
  }
  std::vector<ImageBytes> images(count);
  for (std::size_t i = 0; i < count; ++i) {
    std::copy_n(bytes.begin() + static_cast<std::ptrdiff_t>(16 + i * kPixels), kPixels, images[i].begin());
  }
  return images;
}

inline std::vector<int> parse_idx_labels(std::span<const std::uint8_t> bytes) {
  const auto magic = detail::read_be32(bytes, 0);
  if (magic != kLabelMagic) throw IdxError(IdxError::Kind::magic_mismatch, "not an IDX label file (bad magic)");
  const auto count = detail::read_be32(bytes, 4);
  if (bytes.size() != 8 + std::size_t{count}) {
    throw IdxError(IdxError::Kind::truncated, "IDX label payload length does not match header count");
  }
  std::vector<int> labels(count);
  for (std::size_t i = 0; i < count; ++i) {
    const int v = bytes[8 + i];
    if (v >= kClasses) {
      throw IdxError(IdxError::Kind::label_out_of_range, "label " + std::to_string(v) + " at index " +
                                                             std::to_string(i) + " is outside 0..9");
    }
    labels[i] = v;
  }
  return labels;
}

inline std::vector<std::uint8_t> serialize_idx_images(std::span<const ImageBytes> images) {
  std::vector<std::uint8_t> out;
  out.reserve(16 + images.size() * kPixels);
  detail::write_be32(out, kImageMagic);
  detail::write_be32(out, static_cast<std::uint32_t>(images.size()));
  detail::write_be32(out, kSide);
  detail::write_be32(out, kSide);
  for (const auto& img : images) out.insert(out.end(), img.begin(), img.end());
  return out;
}

inline std::vector<std::uint8_t> serialize_idx_labels(std::span<const int> labels) {
  std::vector<std::uint8_t> out;
  out.reserve(8 + labels.size());
  detail::write_be32(out, kLabelMagic);
  detail::write_be32(out, static_cast<std::uint32_t>(labels.size()));
  for (int l : labels) out.push_back(static_cast<std::uint8_t>(l));
  return out;
}

struct Dataset {
  std::vector<ImageBytes> images;
  std::vector<int> labels;

  [[nodiscard]] std::size_t size() const { return images.size(); }
};

inline Dataset assemble(std::vector<ImageBytes> images, std::vector<int> labels) {
  if (images.size() != labels.size()) {
    throw IdxError(IdxError::Kind::count_mismatch, "image count " + std::to_string(images.size()) +
                                                       " differs from label count " + std::to_string(labels.size()));
  }
  return {std::move(images), std::move(labels)};
}

/// Loads the training partition from `dir`, accepting either the raw or the
/// `.gz` file names.
inline Dataset load_training_set(const std::filesystem::path& dir) {
  auto pick = [&](const std::string& stem) {
    for (const auto& name : {stem, stem + ".gz"}) {
      if (std::filesystem::exists(dir / name)) return dir / name;
    }
    throw IdxError(IdxError::Kind::io, "missing " + (dir / stem).string() + "[.gz]");
  };
  const auto image_bytes = read_file(pick("train-images-idx3-ubyte"));
  const auto label_bytes = read_file(pick("train-labels-idx1-ubyte"));
  return assemble(parse_idx_images(image_bytes), parse_idx_labels(label_bytes));
}

struct SplitSpec {
  int labeled_per_class = 10;
  int unlabeled_per_class = 500;
  int test_sets = 10;
  int test_per_class = 10;  // per set

  [[nodiscard]] int needed_per_class() const {
    return labeled_per_class + unlabeled_per_class + test_sets * test_per_class;
  }
};

/// Dataset indices for the three roles. Each vector is class-major.
struct Splits {
  std::vector<int> bp;
  std::vector<int> stdp;
  std::vector<std::vector<int>> test_sets;
};

/// Per class: shuffle that class's indices, then take the labeled block, the
/// unlabeled block and finally test_sets * test_per_class samples dealt out
/// test_per_class to each set.
inline Splits build_splits(std::span<const int> labels, const SplitSpec& spec, std::uint64_t seed) {
  std::vector<std::vector<int>> by_class(kClasses);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int c = labels[i];
    if (c < 0 || c >= kClasses) throw std::invalid_argument("build_splits: label outside 0..9");
    by_class[static_cast<std::size_t>(c)].push_back(static_cast<int>(i));
  }
  Splits s;
  s.test_sets.resize(static_cast<std::size_t>(spec.test_sets));
  for (int c = 0; c < kClasses; ++c) {
    auto& pool = by_class[static_cast<std::size_t>(c)];
    if (static_cast<int>(pool.size()) < spec.needed_per_class()) {
      throw std::invalid_argument("build_splits: class " + std::to_string(c) + " has " +
                                  std::to_string(pool.size()) + " samples, need " +
                                  std::to_string(spec.needed_per_class()));
    }
    Rng rng = make_rng(derive_seed(seed, "split", static_cast<std::uint64_t>(c)));
    shuffle(pool, rng);
    auto it = pool.begin();
    s.bp.insert(s.bp.end(), it, it + spec.labeled_per_class);
    it += spec.labeled_per_class;
    s.stdp.insert(s.stdp.end(), it, it + spec.unlabeled_per_class);
    it += spec.unlabeled_per_class;
    for (auto& set : s.test_sets) {
      set.insert(set.end(), it, it + spec.test_per_class);
      it += spec.test_per_class;
    }
  }
  return s;
}

}  // namespace snnssl::mnist
