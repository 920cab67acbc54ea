#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "fq/frames.hpp"
#include "fq/network.hpp"
#include "fq/quantizer.hpp"

namespace fq {

// Container layout shared by all three formats:
//   4-byte magic | u32 little-endian manifest length | UTF-8 JSON manifest | binary payload
//
// FQW1 (float model): payload per layer is W (affine) or W1, W2 (residual),
//   then b when has_bias; binary64 little-endian, row-major.
// FQQ1 (quantized model): one manifest entry per quantized matrix; payload per
//   entry is the explicit frame (if any), the packed codes, then the float bias
//   (if float_bias).
// FQF1 (frame): manifest {kind, d, N}; explicit frames carry the N x d payload.

/// Packs level indices `bits` bits each, LSB-first within bytes, zero-padded
/// to a whole byte.
std::vector<std::uint8_t> pack_codes(std::span<const std::uint32_t> codes, int bits);
/// Inverse of pack_codes; `bytes` must hold at least ceil(count * bits / 8) bytes.
std::vector<std::uint32_t> unpack_codes(std::span<const std::uint8_t> bytes, std::size_t count, int bits);

std::vector<std::uint8_t> serialize_model(const Model& model);
Model deserialize_model(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> serialize_quantized(const QuantizedModel& qmodel);
QuantizedModel deserialize_quantized(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> serialize_frame(const Frame& frame);
Frame deserialize_frame(std::span<const std::uint8_t> bytes);

void save_model(const Model& model, const std::filesystem::path& path);
Model load_model(const std::filesystem::path& path);
void save_quantized(const QuantizedModel& qmodel, const std::filesystem::path& path);
QuantizedModel load_quantized(const std::filesystem::path& path);
void save_frame(const Frame& frame, const std::filesystem::path& path);
/// Reads an FQF1 file, or a text file with one whitespace-separated element per line.
Frame load_frame(const std::filesystem::path& path);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

}  // namespace fq
