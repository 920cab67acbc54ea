#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace fq {

/// Images as rows of pixels / 255, row-major 28x28 flattened to 784.
struct DatasetHandle {
  Eigen::MatrixXd images;
  std::vector<std::uint8_t> labels;

  std::size_t size() const { return labels.size(); }
  Eigen::VectorXd image(std::size_t i) const { return images.row(static_cast<Eigen::Index>(i)).transpose(); }
};

constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;

/// Decodes an IDX image file (count x rows x cols unsigned bytes).
Eigen::MatrixXd parse_idx_images(std::span<const std::uint8_t> bytes);
/// Decodes an IDX label file; labels above 9 are rejected.
std::vector<std::uint8_t> parse_idx_labels(std::span<const std::uint8_t> bytes);

/// Loads a directory holding one images/labels pair. The test split
/// (t10k-*) is preferred over train-*; gzipped files are not read.
DatasetHandle load_mnist(const std::filesystem::path& dir);
DatasetHandle load_mnist(const std::filesystem::path& images, const std::filesystem::path& labels);

}  // namespace fq
