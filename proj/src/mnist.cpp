#include "fq/mnist.hpp"

#include <array>

#include <fmt/format.h>

#include "fq/error.hpp"
#include "fq/model_io.hpp"

namespace fq {

namespace {

std::uint32_t read_be32(std::span<const std::uint8_t> bytes, std::size_t offset) {
  return (std::uint32_t{bytes[offset]} << 24) | (std::uint32_t{bytes[offset + 1]} << 16) |
         (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]};
}

void require_bytes(std::span<const std::uint8_t> bytes, std::size_t expected, const char* what) {
  if (bytes.size() < expected) {
    throw FormatError(fmt::format("{} truncated: expected {} bytes, got {}", what, expected, bytes.size()));
  }
}

void check_magic(std::span<const std::uint8_t> bytes, std::uint32_t expected, const char* what) {
  require_bytes(bytes, 4, what);
  const std::uint32_t magic = read_be32(bytes, 0);
  if (magic != expected) {
    throw FormatError(fmt::format("{}: bad magic 0x{:08x}, expected 0x{:08x}", what, magic, expected));
  }
}

}  // namespace

Eigen::MatrixXd parse_idx_images(std::span<const std::uint8_t> bytes) {
  check_magic(bytes, kIdxImagesMagic, "IDX images");
  require_bytes(bytes, 16, "IDX images header");
  const std::size_t count = read_be32(bytes, 4);
  const std::size_t rows = read_be32(bytes, 8);
  const std::size_t cols = read_be32(bytes, 12);
  const std::size_t pixels = rows * cols;
  require_bytes(bytes.subspan(16), count * pixels, "IDX images payload");
  if (bytes.size() != 16 + count * pixels) {
    throw FormatError(fmt::format("IDX images: {} trailing bytes", bytes.size() - 16 - count * pixels));
  }

  Eigen::MatrixXd images(static_cast<Eigen::Index>(count), static_cast<Eigen::Index>(pixels));
  const std::uint8_t* p = bytes.data() + 16;
  for (std::size_t i = 0; i < count; ++i) {
    for (std::size_t j = 0; j < pixels; ++j) {
      images(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = *p++ / 255.0;
    }
  }
  return images;
}

std::vector<std::uint8_t> parse_idx_labels(std::span<const std::uint8_t> bytes) {
  check_magic(bytes, kIdxLabelsMagic, "IDX labels");
  require_bytes(bytes, 8, "IDX labels header");
  const std::size_t count = read_be32(bytes, 4);
  require_bytes(bytes.subspan(8), count, "IDX labels payload");
  if (bytes.size() != 8 + count) {
    throw FormatError(fmt::format("IDX labels: {} trailing bytes", bytes.size() - 8 - count));
  }
  std::vector<std::uint8_t> labels(bytes.begin() + 8, bytes.end());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] > 9) throw FormatError(fmt::format("IDX labels: label {} at index {} is out of range", labels[i], i));
  }
  return labels;
}

DatasetHandle load_mnist(const std::filesystem::path& images, const std::filesystem::path& labels) {
  DatasetHandle data;
  data.images = parse_idx_images(read_file(images));
  data.labels = parse_idx_labels(read_file(labels));
  if (static_cast<std::size_t>(data.images.rows()) != data.labels.size()) {
    throw FormatError(fmt::format("MNIST count mismatch: {} images, {} labels", data.images.rows(), data.labels.size()));
  }
  if (data.images.cols() != 784) {
    throw FormatError(fmt::format("MNIST images have {} pixels, expected 784", data.images.cols()));
  }
  return data;
}

DatasetHandle load_mnist(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw FormatError(fmt::format("{} is not a directory", dir.string()));
  constexpr std::array<std::array<const char*, 2>, 4> pairs{{
      {"t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"},
      {"t10k-images.idx3-ubyte", "t10k-labels.idx1-ubyte"},
      {"train-images-idx3-ubyte", "train-labels-idx1-ubyte"},
      {"train-images.idx3-ubyte", "train-labels.idx1-ubyte"},
  }};
  for (const auto& [img, lbl] : pairs) {
    if (fs::exists(dir / img) && fs::exists(dir / lbl)) return load_mnist(dir / img, dir / lbl);
  }
  throw FormatError(fmt::format("no MNIST IDX images/labels pair in {}", dir.string()));
}

}  // namespace fq
